//! Reproducible stand-in data: role profiles, a log generator, synthetic
//! attack templates and convex-combination stress sets.

mod profile;
mod stress;

pub use profile::{generate_logs, EmailDistribution, EventRates, ProcessToken, RoleProfile};
pub use stress::{
    build_test_set, default_templates, interpolate, AnomalyTemplate, AnomalyType, ColumnStats, IntensityGrid, Sampling,
    TemplateRecipe, TestLabel, TestSet, ZSampling, DEFAULT_RECIPES, RANGE_MARGIN,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("invalid profile: {0}")]
    InvalidProfile(String),
    #[error("lambda {0} outside [0, 1]")]
    InvalidLambda(f64),
    #[error("invalid intensity grid: {0}")]
    InvalidGrid(String),
    #[error("template {id}: {reason}")]
    InvalidTemplate { id: u32, reason: String },
    #[error("expected {expected} coordinates, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("no normal rows to interpolate from")]
    EmptyNormals,
}
