//! Under-complete deep autoencoder profile: construction, training with early
//! stopping, threshold calibration and residual scoring.
//!
//! Training minimises mean squared reconstruction error plus an L1 weight
//! penalty. Scoring uses the L1 norm of the residual `r = x - g(f(x))`; a
//! window is flagged when its score reaches the calibrated threshold.

use crate::nn::{
    loss, reconstruction_gradients, Activation, AdamConfig, AdamState, AffineLayer, CompositionNet, DenseLayer, NnError,
};
use crate::rng::{child_rng, permutation};
use crate::Matrix;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_INPUT_DIM: usize = 83;
pub const DEFAULT_LATENT_DIM: usize = 8;
pub const CALIBRATION_PERCENTILE: u32 = 95;

#[derive(Debug, Error)]
pub enum AutoencoderError {
    #[error("invalid autoencoder spec: {0}")]
    InvalidSpec(String),
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} input features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("need at least {needed} rows, got {found}")]
    TooFewRows { needed: usize, found: usize },
    #[error("{0} is empty")]
    Empty(&'static str),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFiniteLoss { epoch: usize, batch: usize },
    #[error("model has no calibrated threshold")]
    NotCalibrated,
    #[error(transparent)]
    Network(#[from] NnError),
}

/// Layer widths of the full encoder-decoder chain, excluding the input and
/// output layers.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AutoencoderSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl Default for AutoencoderSpec {
    fn default() -> Self {
        Self {
            input_dim: DEFAULT_INPUT_DIM,
            hidden: vec![64, 32, 16, 8, 16, 32, 64],
            latent_dim: DEFAULT_LATENT_DIM,
        }
    }
}

impl AutoencoderSpec {
    pub fn validate(&self) -> Result<(), AutoencoderError> {
        if self.input_dim == 0 || self.hidden.contains(&0) {
            return Err(AutoencoderError::InvalidSpec("zero-width layer".into()));
        }
        if self.latent_dim >= self.input_dim {
            return Err(AutoencoderError::InvalidSpec(format!(
                "latent dim {} must be smaller than input dim {}",
                self.latent_dim, self.input_dim
            )));
        }
        let hits = self.hidden.iter().filter(|&&w| w == self.latent_dim).count();
        if hits != 1 {
            return Err(AutoencoderError::InvalidSpec(format!(
                "latent width {} must appear exactly once in hidden widths {:?}",
                self.latent_dim, self.hidden
            )));
        }
        Ok(())
    }

    /// Position of the latent layer within `hidden`.
    pub fn latent_index(&self) -> usize {
        self.hidden
            .iter()
            .position(|&w| w == self.latent_dim)
            .expect("validated spec")
    }

    /// `input, hidden..., input`.
    pub fn layer_dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim)
            .chain(self.hidden.iter().copied())
            .chain(std::iter::once(self.input_dim))
            .collect()
    }

    /// First and last layers use tanh, every internal layer (latent included) ELU.
    pub fn activation(&self, layer: usize) -> Activation {
        if layer == 0 || layer == self.hidden.len() {
            Activation::Tanh
        } else {
            Activation::Elu
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub role: String,
    pub seed: u64,
    /// Last window start (ISO-8601) present in the training data, if known.
    pub trained_through: Option<String>,
    /// Content hash of the scaler fitted alongside this model.
    pub scaler_id: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AutoencoderModel {
    pub spec: AutoencoderSpec,
    pub encoder: CompositionNet,
    pub decoder: CompositionNet,
    pub threshold: Option<f64>,
    pub metadata: ModelMetadata,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Decision {
    Normal,
    Anomaly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub scaled_input: Vec<f64>,
    pub reconstruction: Vec<f64>,
    pub residual: Vec<f64>,
    pub score: f64,
    pub decision: Decision,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub validation_fraction: f64,
    pub l1_lambda: f64,
    pub seed: u64,
}

impl TrainConfig {
    /// Customer-management role defaults.
    pub fn customer_management() -> Self {
        Self {
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 200,
            patience: 10,
            validation_fraction: 0.2,
            l1_lambda: 1e-3,
            seed: 0,
        }
    }

    /// Executive-positions role defaults.
    pub fn executive_positions() -> Self {
        Self {
            learning_rate: 1e-2,
            batch_size: 256,
            ..Self::customer_management()
        }
    }

    pub fn validate(&self) -> Result<(), AutoencoderError> {
        let bad = |m: &str| Err(AutoencoderError::InvalidConfig(m.to_string()));
        if !(self.validation_fraction > 0.0 && self.validation_fraction < 1.0) {
            return bad("validation fraction must lie in (0, 1)");
        }
        if self.patience == 0 {
            return bad("patience must be at least 1");
        }
        if self.batch_size == 0 {
            return bad("batch size must be at least 1");
        }
        if self.max_epochs == 0 {
            return bad("max epochs must be at least 1");
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(self.l1_lambda >= 0.0 && self.l1_lambda.is_finite()) {
            return bad("l1 lambda must be finite and non-negative");
        }
        Ok(())
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self::customer_management()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub train_mse: Vec<f64>,
    pub validation_mse: Vec<f64>,
    /// 1-based epoch whose parameters were restored.
    pub best_epoch: usize,
    /// Number of epochs actually run.
    pub stopped_epoch: usize,
    pub best_validation_mse: f64,
    pub threshold: f64,
    /// Row indices (into the training matrix) held out for validation and calibration.
    pub validation_rows: Vec<usize>,
}

/// Nearest-rank percentile: the order statistic at 1-based rank
/// `ceil(pct * n / 100)` (at least 1). `None` for an empty slice.
pub fn nearest_rank_percentile(values: &[f64], pct: u32) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let rank = ((pct as usize * n).div_ceil(100)).clamp(1, n);
    Some(sorted[rank - 1])
}

/// L1 norm of a residual vector.
pub fn l1_score(residual: &[f64]) -> f64 {
    residual.iter().map(|r| r.abs()).sum()
}

fn glorot_layer(n_in: usize, n_out: usize, act: Activation, rng: &mut impl Rng) -> DenseLayer {
    let a = (6.0 / (n_in + n_out) as f64).sqrt();
    let weights = (0..n_in * n_out).map(|_| rng.random_range(-a..a)).collect();
    let affine = AffineLayer::new(n_in, n_out, weights, vec![0.0; n_out]).expect("consistent dims");
    DenseLayer::uniform(affine, act)
}

impl AutoencoderModel {
    /// Untrained model with Glorot-uniform weights and zero biases.
    pub fn build(spec: AutoencoderSpec, seed: u64) -> Result<Self, AutoencoderError> {
        spec.validate()?;
        let mut rng = child_rng(seed, "autoencoder/init");
        let dims = spec.layer_dims();
        let layers: Vec<DenseLayer> = dims
            .windows(2)
            .enumerate()
            .map(|(i, w)| glorot_layer(w[0], w[1], spec.activation(i), &mut rng))
            .collect();
        let full = CompositionNet::new(layers)?;
        let (encoder, decoder) = full.split_at(spec.latent_index() + 1)?;
        Ok(Self {
            spec,
            encoder,
            decoder,
            threshold: None,
            metadata: ModelMetadata {
                seed,
                ..ModelMetadata::default()
            },
        })
    }

    /// Wraps existing networks, checking that they meet at the latent layer.
    pub fn from_parts(
        spec: AutoencoderSpec,
        encoder: CompositionNet,
        decoder: CompositionNet,
        threshold: Option<f64>,
        metadata: ModelMetadata,
    ) -> Result<Self, AutoencoderError> {
        if encoder.input_dim() != spec.input_dim
            || decoder.output_dim() != spec.input_dim
            || encoder.output_dim() != spec.latent_dim
            || decoder.input_dim() != spec.latent_dim
        {
            return Err(AutoencoderError::InvalidSpec(format!(
                "encoder {:?} / decoder {:?} do not match spec {}->{}",
                encoder.dims(),
                decoder.dims(),
                spec.input_dim,
                spec.latent_dim
            )));
        }
        if let Some(t) = threshold {
            if !(t.is_finite() && t >= 0.0) {
                return Err(AutoencoderError::InvalidSpec(format!(
                    "threshold {t} must be finite and >= 0"
                )));
            }
        }
        Ok(Self {
            spec,
            encoder,
            decoder,
            threshold,
            metadata,
        })
    }

    /// `g . f` as one network.
    pub fn network(&self) -> CompositionNet {
        self.encoder.then(&self.decoder).expect("encoder feeds decoder")
    }

    fn check_width(&self, found: usize) -> Result<(), AutoencoderError> {
        if found != self.spec.input_dim {
            return Err(AutoencoderError::DimensionMismatch {
                expected: self.spec.input_dim,
                found,
            });
        }
        Ok(())
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        self.check_width(x.len())?;
        Ok(self.encoder.forward(x)?)
    }

    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>, AutoencoderError> {
        let z = self.encode(x)?;
        Ok(self.decoder.forward(&z)?)
    }

    /// Sum over rows of the squared Euclidean distance between each row and
    /// its reconstruction.
    pub fn reconstruction_error(&self, x: &Matrix) -> Result<f64, AutoencoderError> {
        if x.is_empty() {
            return Ok(0.0);
        }
        self.check_width(x.cols())?;
        let mut total = 0.0;
        for row in x.iter_rows() {
            let y = self.reconstruct(row)?;
            total += row.iter().zip(&y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
        }
        Ok(total)
    }

    /// Residuals `x - g(f(x))`, one row per input row.
    pub fn residuals(&self, x: &Matrix) -> Result<Matrix, AutoencoderError> {
        self.check_width(x.cols())?;
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (i, row) in x.iter_rows().enumerate() {
            let y = self.reconstruct(row)?;
            for ((o, a), b) in out.row_mut(i).iter_mut().zip(row).zip(&y) {
                *o = a - b;
            }
        }
        Ok(out)
    }

    /// L1 anomaly score of every row.
    pub fn scores(&self, x: &Matrix) -> Result<Vec<f64>, AutoencoderError> {
        Ok(self.residuals(x)?.iter_rows().map(l1_score).collect())
    }

    pub fn threshold(&self) -> Result<f64, AutoencoderError> {
        self.threshold.ok_or(AutoencoderError::NotCalibrated)
    }

    pub fn decide(&self, score: f64) -> Result<Decision, AutoencoderError> {
        Ok(if score >= self.threshold()? {
            Decision::Anomaly
        } else {
            Decision::Normal
        })
    }

    pub fn score(&self, scaled: &[f64]) -> Result<ScoreReport, AutoencoderError> {
        let reconstruction = self.reconstruct(scaled)?;
        let residual: Vec<f64> = scaled.iter().zip(&reconstruction).map(|(a, b)| a - b).collect();
        let score = l1_score(&residual);
        Ok(ScoreReport {
            scaled_input: scaled.to_vec(),
            reconstruction,
            residual,
            score,
            decision: self.decide(score)?,
        })
    }

    /// Sets the threshold to the nearest-rank 95th percentile of the scores
    /// of `x_val`.
    pub fn calibrate_threshold(&mut self, x_val: &Matrix) -> Result<f64, AutoencoderError> {
        if x_val.is_empty() {
            return Err(AutoencoderError::Empty("validation set"));
        }
        let scores = self.scores(x_val)?;
        let tau = nearest_rank_percentile(&scores, CALIBRATION_PERCENTILE).expect("non-empty");
        self.threshold = Some(tau);
        Ok(tau)
    }

    /// Fraction of rows whose score reaches the threshold.
    pub fn positive_rate(&self, x: &Matrix) -> Result<f64, AutoencoderError> {
        if x.is_empty() {
            return Err(AutoencoderError::Empty("input"));
        }
        let tau = self.threshold()?;
        let scores = self.scores(x)?;
        Ok(scores.iter().filter(|&&s| s >= tau).count() as f64 / scores.len() as f64)
    }

    /// Mini-batch Adam with early stopping on validation MSE; restores the
    /// best epoch's parameters and calibrates the threshold on the validation
    /// rows.
    pub fn train(&mut self, x: &Matrix, cfg: &TrainConfig) -> Result<TrainReport, AutoencoderError> {
        cfg.validate()?;
        self.check_width(x.cols())?;
        if x.rows() < 10 {
            return Err(AutoencoderError::TooFewRows {
                needed: 10,
                found: x.rows(),
            });
        }
        if !x.is_finite() {
            return Err(AutoencoderError::InvalidConfig(
                "training matrix contains non-finite values".into(),
            ));
        }

        let n = x.rows();
        let n_val = ((n as f64 * cfg.validation_fraction).round() as usize).clamp(1, n - 1);
        let perm = permutation(n, &mut child_rng(cfg.seed, "autoencoder/split"));
        let (train_idx, val_idx) = perm.split_at(n - n_val);
        let mut train_idx = train_idx.to_vec();
        let x_val = x.select_rows(val_idx);

        let mut net = self.network();
        let mut adam = AdamState::for_net(
            AdamConfig {
                learning_rate: cfg.learning_rate,
                ..AdamConfig::default()
            },
            &net,
        );
        let mut rng = child_rng(cfg.seed, "autoencoder/epochs");
        let mut train_curve = Vec::new();
        let mut val_curve = Vec::new();
        let mut best = (f64::INFINITY, 0usize, net.flat_params());
        let mut since_best = 0;

        for epoch in 1..=cfg.max_epochs {
            use rand::seq::SliceRandom;
            train_idx.shuffle(&mut rng);
            let mut weighted = 0.0;
            for (bi, chunk) in train_idx.chunks(cfg.batch_size).enumerate() {
                let batch = x.select_rows(chunk);
                let (l, g) = reconstruction_gradients(&net, &batch, cfg.l1_lambda).map_err(|e| match e {
                    NnError::NonFinite { .. } => AutoencoderError::NonFiniteLoss { epoch, batch: bi },
                    other => other.into(),
                })?;
                if !l.total().is_finite() {
                    return Err(AutoencoderError::NonFiniteLoss { epoch, batch: bi });
                }
                weighted += l.mse * chunk.len() as f64;
                adam.step_net(&mut net, &g)?;
            }
            train_curve.push(weighted / train_idx.len() as f64);

            let val = loss(&net, &x_val, &x_val, 0.0)
                .map_err(|_| AutoencoderError::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                })?
                .mse;
            if !val.is_finite() {
                return Err(AutoencoderError::NonFiniteLoss {
                    epoch,
                    batch: usize::MAX,
                });
            }
            val_curve.push(val);
            if val < best.0 {
                best = (val, epoch, net.flat_params());
                since_best = 0;
            } else {
                since_best += 1;
                if since_best >= cfg.patience {
                    break;
                }
            }
        }

        net.set_flat_params(&best.2)?;
        let (encoder, decoder) = net.split_at(self.encoder.depth())?;
        self.encoder = encoder;
        self.decoder = decoder;
        let threshold = self.calibrate_threshold(&x_val)?;
        Ok(TrainReport {
            stopped_epoch: val_curve.len(),
            train_mse: train_curve,
            validation_mse: val_curve,
            best_epoch: best.1,
            best_validation_mse: best.0,
            threshold,
            validation_rows: val_idx.to_vec(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> AutoencoderSpec {
        AutoencoderSpec {
            input_dim: 6,
            hidden: vec![4, 2, 4],
            latent_dim: 2,
        }
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Matrix {
        let mut rng = child_rng(seed, "test-rows");
        Matrix::from_vec(n, d, (0..n * d).map(|_| rng.random_range(0.0..1.0)).collect())
    }

    #[test]
    fn default_spec_builds_with_expected_shapes() {
        let m = AutoencoderModel::build(AutoencoderSpec::default(), 1).unwrap();
        assert_eq!(m.encoder.dims(), vec![83, 64, 32, 16, 8]);
        assert_eq!(m.decoder.dims(), vec![8, 16, 32, 64, 83]);
        assert_eq!(
            m.encoder.param_count(),
            83 * 64 + 64 + 64 * 32 + 32 + 32 * 16 + 16 + 16 * 8 + 8
        );
        let acts: Vec<Activation> = m.network().layers().iter().map(|l| l.activations[0]).collect();
        assert_eq!(acts.first(), Some(&Activation::Tanh));
        assert_eq!(acts.last(), Some(&Activation::Tanh));
        assert!(acts[1..acts.len() - 1].iter().all(|&a| a == Activation::Elu));
    }

    #[test]
    fn latent_not_smaller_than_input_is_rejected() {
        let spec = AutoencoderSpec {
            input_dim: 8,
            hidden: vec![16, 8, 16],
            latent_dim: 8,
        };
        assert!(matches!(
            AutoencoderModel::build(spec, 0),
            Err(AutoencoderError::InvalidSpec(_))
        ));
    }

    #[test]
    fn build_is_deterministic_under_seed() {
        let a = AutoencoderModel::build(AutoencoderSpec::default(), 9).unwrap();
        let b = AutoencoderModel::build(AutoencoderSpec::default(), 9).unwrap();
        let c = AutoencoderModel::build(AutoencoderSpec::default(), 10).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.encoder, c.encoder);
    }

    #[test]
    fn nearest_rank_on_one_to_hundred() {
        let scores: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(nearest_rank_percentile(&scores, 95), Some(95.0));
        assert_eq!(nearest_rank_percentile(&[4.0; 17], 95), Some(4.0));
        assert_eq!(nearest_rank_percentile(&[7.5], 95), Some(7.5));
        assert_eq!(nearest_rank_percentile(&[], 95), None);
    }

    fn identity_model() -> AutoencoderModel {
        // Encoder keeps coords 0..2 and decoder copies them back; exact on rows
        // whose last four coords are zero.
        let spec = small_spec();
        let mut enc_w = vec![0.0; 4 * 6];
        enc_w[0] = 1.0;
        enc_w[6 + 1] = 1.0;
        let e1 = AffineLayer::new(6, 4, enc_w, vec![0.0; 4]).unwrap();
        let mut e2_w = vec![0.0; 2 * 4];
        e2_w[0] = 1.0;
        e2_w[4 + 1] = 1.0;
        let e2 = AffineLayer::new(4, 2, e2_w, vec![0.0; 2]).unwrap();
        let mut d1_w = vec![0.0; 4 * 2];
        d1_w[0] = 1.0;
        d1_w[2 + 1] = 1.0;
        let d1 = AffineLayer::new(2, 4, d1_w, vec![0.0; 4]).unwrap();
        let mut d2_w = vec![0.0; 6 * 4];
        d2_w[0] = 1.0;
        d2_w[4 + 1] = 1.0;
        let d2 = AffineLayer::new(4, 6, d2_w, vec![0.0; 6]).unwrap();
        let id = Activation::Identity;
        AutoencoderModel::from_parts(
            spec,
            CompositionNet::new(vec![DenseLayer::uniform(e1, id), DenseLayer::uniform(e2, id)]).unwrap(),
            CompositionNet::new(vec![DenseLayer::uniform(d1, id), DenseLayer::uniform(d2, id)]).unwrap(),
            Some(0.25),
            ModelMetadata::default(),
        )
        .unwrap()
    }

    #[test]
    fn reconstruction_error_of_exact_model_is_zero() {
        let m = identity_model();
        let x = Matrix::from_rows(&[[0.2, 0.9, 0.0, 0.0, 0.0, 0.0], [0.5, -0.1, 0.0, 0.0, 0.0, 0.0]]).unwrap();
        assert_eq!(m.reconstruction_error(&x).unwrap(), 0.0);
        assert_eq!(m.reconstruction_error(&Matrix::empty(6)).unwrap(), 0.0);
    }

    #[test]
    fn reconstruction_error_matches_hand_sum_and_score_is_l1() {
        let m = identity_model();
        let x = [0.2, 0.9, 0.1, -0.2, 0.0, 0.0];
        let xm = Matrix::from_rows(&[x]).unwrap();
        assert!((m.reconstruction_error(&xm).unwrap() - (0.01 + 0.04)).abs() < 1e-15);
        let r = m.score(&x).unwrap();
        assert_eq!(r.residual, vec![0.0, 0.0, 0.1, -0.2, 0.0, 0.0]);
        assert!((r.score - 0.3).abs() < 1e-15);
        assert_eq!(r.decision, Decision::Anomaly);

        let exact = m.score(&[0.3, 0.3, 0.0, 0.0, 0.0, 0.0]).unwrap();
        assert_eq!(exact.score, 0.0);
        assert_eq!(exact.decision, Decision::Normal);
    }

    #[test]
    fn score_at_threshold_is_an_anomaly() {
        let mut m = identity_model();
        let r = m.score(&[0.0, 0.0, 0.5, 0.0, 0.0, 0.0]).unwrap();
        m.threshold = Some(r.score);
        assert_eq!(
            m.score(&[0.0, 0.0, 0.5, 0.0, 0.0, 0.0]).unwrap().decision,
            Decision::Anomaly
        );
        assert!(m.score(&[0.0; 5]).is_err());
    }

    #[test]
    fn positive_rate_on_calibration_set_is_six_percent_for_hundred_distinct_scores() {
        // Row k has residual k on coordinate 2, so its score is k.
        let mut m = identity_model();
        let rows: Vec<[f64; 6]> = (1..=100).map(|k| [0.0, 0.0, k as f64, 0.0, 0.0, 0.0]).collect();
        let x = Matrix::from_rows(&rows).unwrap();
        assert_eq!(m.calibrate_threshold(&x).unwrap(), 95.0);
        assert!((m.positive_rate(&x).unwrap() - 0.06).abs() < 1e-15);
        m.threshold = Some(1.0);
        let zeros = Matrix::from_rows(&[[0.0; 6]; 5]).unwrap();
        assert_eq!(m.positive_rate(&zeros).unwrap(), 0.0);
        assert!(m.positive_rate(&Matrix::empty(6)).is_err());
        assert!(m.calibrate_threshold(&Matrix::empty(6)).is_err());
    }

    #[test]
    fn constant_data_is_learned() {
        let row = [0.3, 0.7, 0.5, 0.2, 0.6, 0.4];
        let x = Matrix::from_rows(&vec![row; 60]).unwrap();
        let mut m = AutoencoderModel::build(small_spec(), 3).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            max_epochs: 400,
            ..TrainConfig::default()
        };
        let rep = m.train(&x, &cfg).unwrap();
        assert!(
            rep.best_validation_mse < 1e-4,
            "best val mse {}",
            rep.best_validation_mse
        );
        assert!(rep.threshold < 0.05, "tau {}", rep.threshold);
    }

    #[test]
    fn zero_learning_rate_with_patience_one_stops_after_two_epochs() {
        let x = random_rows(40, 6, 1);
        let mut m = AutoencoderModel::build(small_spec(), 3).unwrap();
        let before = m.clone();
        let cfg = TrainConfig {
            learning_rate: 0.0,
            patience: 1,
            ..TrainConfig::default()
        };
        let rep = m.train(&x, &cfg).unwrap();
        assert_eq!(rep.stopped_epoch, 2);
        assert_eq!(rep.best_epoch, 1);
        assert_eq!(m.encoder, before.encoder);
    }

    #[test]
    fn early_stopping_restores_best_epoch() {
        let x = random_rows(80, 6, 2);
        let mut m = AutoencoderModel::build(small_spec(), 4).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.05,
            batch_size: 8,
            patience: 3,
            max_epochs: 300,
            ..TrainConfig::default()
        };
        let rep = m.train(&x, &cfg).unwrap();
        assert!(rep.stopped_epoch - rep.best_epoch <= cfg.patience);
        assert!(rep.validation_mse[rep.best_epoch..]
            .iter()
            .all(|&v| v >= rep.best_validation_mse));
        let val = x.select_rows(&rep.validation_rows);
        let mse = m.reconstruction_error(&val).unwrap() / (val.rows() * val.cols()) as f64;
        assert!((mse - rep.best_validation_mse).abs() < 1e-12);
        let rate = m.positive_rate(&val).unwrap();
        assert!((0.05..=0.05 + 1.0 / val.rows() as f64).contains(&rate));
    }

    #[test]
    fn training_is_deterministic() {
        let x = random_rows(50, 6, 5);
        let cfg = TrainConfig {
            max_epochs: 15,
            seed: 77,
            ..TrainConfig::default()
        };
        let mut a = AutoencoderModel::build(small_spec(), 1).unwrap();
        let mut b = AutoencoderModel::build(small_spec(), 1).unwrap();
        let ra = a.train(&x, &cfg).unwrap();
        let rb = b.train(&x, &cfg).unwrap();
        assert_eq!(ra, rb);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let x = random_rows(50, 6, 5);
        let mut m = AutoencoderModel::build(small_spec(), 1).unwrap();
        for cfg in [
            TrainConfig {
                validation_fraction: 1.0,
                ..TrainConfig::default()
            },
            TrainConfig {
                patience: 0,
                ..TrainConfig::default()
            },
            TrainConfig {
                batch_size: 0,
                ..TrainConfig::default()
            },
        ] {
            assert!(matches!(m.train(&x, &cfg), Err(AutoencoderError::InvalidConfig(_))));
        }
        assert!(matches!(
            m.train(&random_rows(5, 6, 1), &TrainConfig::default()),
            Err(AutoencoderError::TooFewRows { .. })
        ));
    }
}
