use crate::CliError;
use serde::{Deserialize, Serialize};
use std::path::Path;
use ueba_core::autoencoder::{AutoencoderSpec, TrainConfig};
use ueba_core::doc2vec::Doc2VecParams;
use ueba_core::eval::TsneConfig;
use ueba_core::features::{Role, UnmappedUser, DEFAULT_WINDOW_SECONDS};
use ueba_core::rng::derive_seed;
use ueba_core::synth::{RoleProfile, Sampling, ZSampling};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSection {
    pub users: usize,
    pub days: usize,
    /// Replaces the built-in profile of the configured role.
    pub profile: Option<RoleProfile>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            users: 36,
            days: 30,
            profile: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StressSection {
    /// Intensities are `k / grid_steps` for `k = 1..=grid_steps`.
    pub grid_steps: u32,
    pub z_sampling: ZSampling,
    /// Rows per (template, intensity).
    pub draws: usize,
}

impl StressSection {
    pub fn sampling(&self) -> Sampling {
        Sampling {
            anchor: self.z_sampling,
            draws: self.draws,
        }
    }
}

impl Default for StressSection {
    fn default() -> Self {
        Self {
            grid_steps: 100,
            z_sampling: ZSampling::PerLambda,
            draws: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DiagnoseSection {
    /// Rows sampled per t-SNE map.
    pub max_points: usize,
}

impl Default for DiagnoseSection {
    fn default() -> Self {
        Self { max_points: 500 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UnmappedPolicy {
    #[default]
    Skip,
    Fail,
}

impl From<UnmappedPolicy> for UnmappedUser {
    fn from(p: UnmappedPolicy) -> Self {
        match p {
            UnmappedPolicy::Skip => UnmappedUser::Skip,
            UnmappedPolicy::Fail => UnmappedUser::Fail,
        }
    }
}

/// Whole-pipeline configuration. Stage seeds are always derived from `seed`;
/// seed fields inside the sections are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub role: Role,
    pub seed: u64,
    pub window_seconds: i64,
    pub unmapped_users: UnmappedPolicy,
    /// Share of windows kept out of training for the calibration check.
    pub holdout_fraction: f64,
    pub synth: SynthSection,
    pub autoencoder: AutoencoderSpec,
    /// Defaults to the role's optimiser settings.
    pub train: Option<TrainConfig>,
    pub doc2vec: Doc2VecParams,
    pub tsne: TsneConfig,
    pub stress: StressSection,
    pub diagnose: DiagnoseSection,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            role: Role::Cm,
            seed: 42,
            window_seconds: DEFAULT_WINDOW_SECONDS,
            unmapped_users: UnmappedPolicy::Skip,
            holdout_fraction: 0.2,
            synth: SynthSection::default(),
            autoencoder: AutoencoderSpec::default(),
            train: None,
            doc2vec: Doc2VecParams::default(),
            tsne: TsneConfig::default(),
            stress: StressSection::default(),
            diagnose: DiagnoseSection::default(),
        }
    }
}

impl PipelineConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = crate::read_text(path)?;
        let cfg: Self =
            serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        if self.window_seconds <= 0 {
            return Err(CliError::Config("window_seconds must be positive".into()));
        }
        if !(self.holdout_fraction > 0.0 && self.holdout_fraction < 1.0) {
            return Err(CliError::Config("holdout_fraction must lie in (0, 1)".into()));
        }
        if self.stress.grid_steps == 0 {
            return Err(CliError::Config("stress.grid_steps must be positive".into()));
        }
        if self.stress.draws == 0 {
            return Err(CliError::Config("stress.draws must be positive".into()));
        }
        Ok(())
    }

    pub fn stage_seed(&self, stage: &str) -> u64 {
        derive_seed(self.seed, stage)
    }

    pub fn profile(&self) -> RoleProfile {
        let mut p = self
            .synth
            .profile
            .clone()
            .unwrap_or_else(|| RoleProfile::for_role(self.role));
        p.role = self.role;
        p.window_seconds = self.window_seconds;
        p
    }

    pub fn train_config(&self) -> TrainConfig {
        let base = self.train.clone().unwrap_or_else(|| match self.role {
            Role::Cm => TrainConfig::customer_management(),
            Role::Ep => TrainConfig::executive_positions(),
        });
        TrainConfig {
            seed: self.stage_seed("autoencoder/train"),
            ..base
        }
    }

    pub fn doc2vec_params(&self) -> Doc2VecParams {
        Doc2VecParams {
            seed: self.stage_seed("doc2vec"),
            ..self.doc2vec.clone()
        }
    }

    pub fn tsne_config(&self) -> TsneConfig {
        TsneConfig {
            seed: self.stage_seed("tsne"),
            ..self.tsne.clone()
        }
    }
}
