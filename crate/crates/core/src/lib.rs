//! Per-role behavioural anomaly detection over windowed enterprise logs.
//!
//! The pipeline aggregates raw events into fixed windows ([`features`]),
//! embeds each window's process list with a DBOW paragraph-vector model
//! ([`doc2vec`]), scales the concatenated 83-dimensional vector, and scores it
//! with an under-complete deep autoencoder ([`autoencoder`]) whose L1
//! reconstruction residual is both the anomaly score and its explanation.
//! [`synth`] produces reproducible stand-in data and convex-combination stress
//! sets; [`eval`] holds detection curves, per-feature errors and exact t-SNE.

pub mod autoencoder;
pub mod doc2vec;
pub mod eval;
pub mod features;
pub mod matrix;
pub mod nn;
pub mod rng;
pub mod synth;

pub use matrix::Matrix;
