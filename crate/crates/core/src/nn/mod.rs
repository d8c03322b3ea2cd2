//! Minimal feed-forward network engine.
//!
//! A network exists in two interchangeable forms: [`CompositionNet`], the
//! alternating chain of affine maps and per-unit activations, and
//! [`LayeredGraphNet`], a layered graph where every node is a neuron with its
//! own incoming edges. [`composition_to_graph`] and [`graph_to_composition`]
//! convert between them without changing the function computed.
//!
//! Training support is limited to what the autoencoder needs: exact
//! reverse-mode gradients of mean squared error plus an L1 weight penalty
//! ([`gradients`]) and a bias-corrected Adam optimizer ([`AdamState`]).

mod activation;
mod adam;
mod composition;
mod grad;
mod graph;
mod serialize;

pub use activation::Activation;
pub use adam::{AdamConfig, AdamState};
pub use composition::{AffineLayer, CompositionNet, DenseLayer};
pub use grad::{gradients, loss, reconstruction_gradients, GradientSet, LayerGradient, LossBreakdown};
pub use graph::{composition_to_graph, graph_to_composition, Edge, LayeredGraphNet, Neuron, NodeRef};
pub use serialize::NetManifest;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum NnError {
    #[error("layer {layer}: expected input width {expected}, got {found}")]
    DimensionMismatch {
        layer: usize,
        expected: usize,
        found: usize,
    },
    #[error("layer {layer}: non-finite value encountered")]
    NonFinite { layer: usize },
    #[error("malformed layer {layer}: {reason}")]
    MalformedLayer { layer: usize, reason: String },
    #[error("network has no layers")]
    Empty,
    #[error(
        "edge into layer {layer} node {node} comes from layer {from_layer} node {from_index}; \
         only layer {expected_layer} may feed it"
    )]
    NonLayeredEdge {
        layer: usize,
        node: usize,
        from_layer: usize,
        from_index: usize,
        expected_layer: usize,
    },
    #[error("parameter vector has {found} entries, network expects {expected}")]
    ParameterCount { expected: usize, found: usize },
    #[error("invalid serialized network: {0}")]
    Serialization(String),
}
