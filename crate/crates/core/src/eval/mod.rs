//! Detection curves, per-feature residual explanations, exact t-SNE and
//! CSV/SVG report output.

mod report;
mod tsne;

pub use report::{
    detection_csv, detection_svg, feature_error_csv, feature_error_svg, scatter_csv, scatter_svg, PositiveRateSummary,
    Report, Scatter,
};
pub use tsne::{
    conditional_affinities, joint_affinities, kl_divergence, nearest_neighbor_purity, student_t_affinities, tsne,
    Embedding2D, TsneConfig,
};

use crate::autoencoder::{AutoencoderError, AutoencoderModel};
use crate::features::{Feature, FEATURE_NAMES, NUM_NUMERIC};
use crate::synth::{AnomalyType, TestLabel, TestSet};
use crate::Matrix;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::path::PathBuf;
use thiserror::Error;

/// Guard added before taking the log of a mean absolute residual.
pub const LOG_EPSILON: f64 = 1e-12;

/// Name of the aggregated embedding group in feature-error reports.
pub const EMBEDDING_GROUP: &str = "process_embedding";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{labels} labels for {rows} rows")]
    MissingLabels { rows: usize, labels: usize },
    #[error("no rows to evaluate")]
    Empty,
    #[error("invalid t-SNE configuration: {0}")]
    InvalidConfig(String),
    #[error("perplexity {perplexity} needs at least {needed} rows, got {found}")]
    TooFewRows {
        perplexity: f64,
        needed: usize,
        found: usize,
    },
    #[error("row {row} has {ties} equidistant nearest neighbours; perplexity {perplexity} is unreachable")]
    UnreachablePerplexity { row: usize, ties: usize, perplexity: f64 },
    #[error("non-finite value at row {row}")]
    NonFinite { row: usize },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Model(#[from] AutoencoderError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub lambda: f64,
    pub rate: f64,
    pub n: usize,
}

/// Detection rate against intensity for one anomaly type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionCurve {
    pub kind: AnomalyType,
    pub points: Vec<CurvePoint>,
}

impl DetectionCurve {
    /// Unweighted mean rate over the points whose intensity satisfies `keep`.
    pub fn mean_rate(&self, keep: impl Fn(f64) -> bool) -> Option<f64> {
        let rates: Vec<f64> = self.points.iter().filter(|p| keep(p.lambda)).map(|p| p.rate).collect();
        (!rates.is_empty()).then(|| rates.iter().sum::<f64>() / rates.len() as f64)
    }

    pub fn rate_at(&self, lambda: f64) -> Option<f64> {
        self.points.iter().find(|p| p.lambda == lambda).map(|p| p.rate)
    }
}

/// Curves from precomputed scores: a row is detected when `score >= tau`.
pub fn detection_curve_from_scores(
    scores: &[f64],
    labels: &[TestLabel],
    tau: f64,
) -> Result<Vec<DetectionCurve>, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::MissingLabels {
            rows: scores.len(),
            labels: labels.len(),
        });
    }
    // Intensities are non-negative, so their bit patterns sort like the values.
    let mut tally: BTreeMap<AnomalyType, BTreeMap<u64, (usize, usize)>> = BTreeMap::new();
    for (&s, l) in scores.iter().zip(labels) {
        let cell = tally.entry(l.kind).or_default().entry(l.lambda.to_bits()).or_default();
        cell.0 += usize::from(s >= tau);
        cell.1 += 1;
    }
    Ok(tally
        .into_iter()
        .map(|(kind, by_lambda)| DetectionCurve {
            kind,
            points: by_lambda
                .into_iter()
                .map(|(bits, (hits, n))| CurvePoint {
                    lambda: f64::from_bits(bits),
                    rate: hits as f64 / n as f64,
                    n,
                })
                .collect(),
        })
        .collect())
}

/// Scores a labelled stress set and tabulates detection per type and intensity.
pub fn detection_curve(model: &AutoencoderModel, set: &TestSet) -> Result<Vec<DetectionCurve>, EvalError> {
    if set.rows.rows() != set.labels.len() {
        return Err(EvalError::MissingLabels {
            rows: set.rows.rows(),
            labels: set.labels.len(),
        });
    }
    let tau = model.threshold()?;
    detection_curve_from_scores(&model.scores(&set.rows)?, &set.labels, tau)
}

/// Mean absolute residual per input coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureErrorReport {
    pub names: Vec<String>,
    pub mean_abs: Vec<f64>,
    pub log_mean_abs: Vec<f64>,
    /// Mean over rows and embedding coordinates.
    pub embedding_mean_abs: f64,
    pub embedding_log_mean_abs: f64,
    pub rows: usize,
}

impl FeatureErrorReport {
    /// The named feature with the largest mean absolute residual.
    pub fn argmax_named(&self) -> Feature {
        let mut best = 0;
        for i in 1..NUM_NUMERIC.min(self.mean_abs.len()) {
            if self.mean_abs[i] > self.mean_abs[best] {
                best = i;
            }
        }
        Feature::ALL[best]
    }
}

pub fn per_feature_error_from_residuals(residuals: &Matrix) -> Result<FeatureErrorReport, EvalError> {
    if residuals.is_empty() {
        return Err(EvalError::Empty);
    }
    let n = residuals.rows() as f64;
    let mut sums = vec![0.0; residuals.cols()];
    for row in residuals.iter_rows() {
        for (s, r) in sums.iter_mut().zip(row) {
            *s += r.abs();
        }
    }
    let mean_abs: Vec<f64> = sums.iter().map(|s| s / n).collect();
    let log = |m: f64| (m + LOG_EPSILON).ln();
    let embedding = &mean_abs[NUM_NUMERIC.min(mean_abs.len())..];
    let embedding_mean_abs = if embedding.is_empty() {
        0.0
    } else {
        embedding.iter().sum::<f64>() / embedding.len() as f64
    };
    let names = (0..residuals.cols())
        .map(|c| match FEATURE_NAMES.get(c) {
            Some(name) => name.to_string(),
            None => format!("e{}", c - NUM_NUMERIC),
        })
        .collect();
    Ok(FeatureErrorReport {
        names,
        log_mean_abs: mean_abs.iter().map(|&m| log(m)).collect(),
        mean_abs,
        embedding_mean_abs,
        embedding_log_mean_abs: log(embedding_mean_abs),
        rows: residuals.rows(),
    })
}

pub fn per_feature_error(model: &AutoencoderModel, rows: &Matrix) -> Result<FeatureErrorReport, EvalError> {
    if rows.is_empty() {
        return Err(EvalError::Empty);
    }
    per_feature_error_from_residuals(&model.residuals(rows)?)
}
