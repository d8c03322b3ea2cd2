use super::SynthError;
use crate::features::{Feature, INPUT_DIM, NUM_NUMERIC};
use crate::rng::child_rng;
use crate::Matrix;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnomalyType {
    Login,
    Antivirus,
    Email,
    Process,
}

impl AnomalyType {
    pub const ALL: [AnomalyType; 4] = [
        AnomalyType::Login,
        AnomalyType::Antivirus,
        AnomalyType::Email,
        AnomalyType::Process,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            AnomalyType::Login => "login",
            AnomalyType::Antivirus => "antivirus",
            AnomalyType::Email => "email",
            AnomalyType::Process => "process",
        }
    }
}

impl fmt::Display for AnomalyType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for AnomalyType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        AnomalyType::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown anomaly type {s:?}"))
    }
}

/// An attack signature in scaled model-input space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalyTemplate {
    pub id: u32,
    pub kind: AnomalyType,
    pub point: Vec<f64>,
}

impl AnomalyTemplate {
    pub fn validate(&self, dim: usize) -> Result<(), SynthError> {
        if self.point.len() != dim {
            return Err(SynthError::DimensionMismatch {
                expected: dim,
                found: self.point.len(),
            });
        }
        if self.point.iter().any(|v| !v.is_finite()) {
            return Err(SynthError::InvalidTemplate {
                id: self.id,
                reason: "non-finite coordinate".into(),
            });
        }
        Ok(())
    }
}

/// Per-coordinate summary of scaled training rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ColumnStats {
    pub fn from_matrix(x: &Matrix) -> Result<Self, SynthError> {
        if x.is_empty() {
            return Err(SynthError::EmptyNormals);
        }
        let n = x.rows() as f64;
        let mut s = ColumnStats {
            mean: Vec::with_capacity(x.cols()),
            sd: Vec::with_capacity(x.cols()),
            min: Vec::with_capacity(x.cols()),
            max: Vec::with_capacity(x.cols()),
        };
        for c in 0..x.cols() {
            let col = x.column(c);
            let mean = col.iter().sum::<f64>() / n;
            let var = col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            s.mean.push(mean);
            s.sd.push(var.sqrt());
            s.min.push(col.iter().copied().fold(f64::INFINITY, f64::min));
            s.max.push(col.iter().copied().fold(f64::NEG_INFINITY, f64::max));
        }
        Ok(s)
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }
}

/// How a template departs from the role centroid. Each shift is
/// `(coordinate, w)`; the template's total L1 offset from the centroid is split
/// across its shifts in proportion to `|w|`, upward for positive `w` and
/// downward for negative. Untouched coordinates sit at the centroid.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemplateRecipe {
    pub id: u32,
    pub kind: AnomalyType,
    pub shifts: &'static [(usize, f64)],
}

/// Minimum distance a shifted coordinate is placed outside the training range.
pub const RANGE_MARGIN: f64 = 0.05;

impl AnomalyType {
    /// Default total L1 offset of this type's templates, in units of the
    /// anomaly threshold.
    pub fn offset_multiple(self) -> f64 {
        match self {
            AnomalyType::Login | AnomalyType::Antivirus => 3.5,
            AnomalyType::Email | AnomalyType::Process => 1.6,
        }
    }
}

const fn f(feature: Feature) -> usize {
    feature as usize
}

const fn e(j: usize) -> usize {
    NUM_NUMERIC + j
}

pub const DEFAULT_RECIPES: [TemplateRecipe; 10] = [
    TemplateRecipe {
        id: 1,
        kind: AnomalyType::Login,
        shifts: &[(f(Feature::NumFLogins), 14.0), (f(Feature::AvgSecBetFLogins), -10.0)],
    },
    TemplateRecipe {
        id: 2,
        kind: AnomalyType::Login,
        shifts: &[
            (f(Feature::NumLogins), 14.0),
            (f(Feature::AvgSecBetLogins), -10.0),
            (f(Feature::WorkstationCount), 4.0),
        ],
    },
    TemplateRecipe {
        id: 3,
        kind: AnomalyType::Login,
        shifts: &[(f(Feature::NumFLogins), 12.0), (f(Feature::NumLogins), 10.0)],
    },
    TemplateRecipe {
        id: 4,
        kind: AnomalyType::Login,
        shifts: &[
            (f(Feature::NumFLogins), 10.0),
            (f(Feature::AvgSecBetFLogins), -10.0),
            (f(Feature::WorkstationCount), 6.0),
        ],
    },
    TemplateRecipe {
        id: 5,
        kind: AnomalyType::Antivirus,
        shifts: &[
            (f(Feature::NumAntivirusAlerts), 20.0),
            (f(Feature::NumFirewallAlerts), 10.0),
        ],
    },
    TemplateRecipe {
        id: 6,
        kind: AnomalyType::Antivirus,
        shifts: &[(f(Feature::NumAntivirusAlerts), 20.0), (f(Feature::Events4104), 8.0)],
    },
    TemplateRecipe {
        id: 7,
        kind: AnomalyType::Email,
        shifts: &[
            (f(Feature::SentEmailsSize), 8.0),
            (f(Feature::SentEmailFiles), 6.0),
            (f(Feature::SentEmails), 4.0),
        ],
    },
    TemplateRecipe {
        id: 8,
        kind: AnomalyType::Email,
        shifts: &[
            (f(Feature::SentEmailLinks), 8.0),
            (f(Feature::SentEmails), 5.0),
            (f(Feature::IncidentEmails), 4.0),
        ],
    },
    TemplateRecipe {
        id: 9,
        kind: AnomalyType::Process,
        shifts: &[
            (f(Feature::NumNewProcess), 6.0),
            (f(Feature::Events4104), 4.0),
            (e(0), 4.0),
            (e(5), -4.0),
            (e(11), 4.0),
            (e(17), -4.0),
            (e(23), 4.0),
            (e(31), -4.0),
            (e(42), 4.0),
            (e(57), -4.0),
        ],
    },
    TemplateRecipe {
        id: 10,
        kind: AnomalyType::Process,
        shifts: &[
            (f(Feature::Events4100), 6.0),
            (f(Feature::NumNewProcess), 4.0),
            (e(2), -4.0),
            (e(8), 4.0),
            (e(19), -4.0),
            (e(27), 4.0),
            (e(36), -4.0),
            (e(48), 4.0),
            (e(53), -4.0),
            (e(63), 4.0),
        ],
    },
];

impl TemplateRecipe {
    /// Places the template `offset` away (L1) from the column means.
    pub fn build(&self, stats: &ColumnStats, offset: f64) -> Result<AnomalyTemplate, SynthError> {
        let invalid = |reason: String| SynthError::InvalidTemplate { id: self.id, reason };
        if !(offset.is_finite() && offset > 0.0) {
            return Err(invalid(format!("offset {offset} is not positive")));
        }
        let total: f64 = self.shifts.iter().map(|(_, w)| w.abs()).sum();
        if total.is_nan() || total <= 0.0 {
            return Err(invalid("no non-zero shift".into()));
        }
        let mut point = stats.mean.clone();
        for &(c, w) in self.shifts {
            if c >= point.len() {
                return Err(invalid(format!("coordinate {c} outside a {}-wide space", point.len())));
            }
            let step = offset * w.abs() / total;
            point[c] = if w >= 0.0 {
                (stats.mean[c] + step).max(stats.max[c] + RANGE_MARGIN)
            } else {
                (stats.mean[c] - step).min(stats.min[c] - RANGE_MARGIN)
            };
        }
        let t = AnomalyTemplate {
            id: self.id,
            kind: self.kind,
            point,
        };
        t.validate(stats.dim())?;
        Ok(t)
    }
}

/// The ten stand-in attack templates, each offset from the scaled training
/// means by its type's [`AnomalyType::offset_multiple`] of `threshold`.
pub fn default_templates(stats: &ColumnStats, threshold: f64) -> Result<Vec<AnomalyTemplate>, SynthError> {
    if stats.dim() != INPUT_DIM {
        return Err(SynthError::DimensionMismatch {
            expected: INPUT_DIM,
            found: stats.dim(),
        });
    }
    DEFAULT_RECIPES
        .iter()
        .map(|r| r.build(stats, r.kind.offset_multiple() * threshold))
        .collect()
}

/// Anomaly intensities, strictly increasing inside [0, 1].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntensityGrid {
    values: Vec<f64>,
}

impl IntensityGrid {
    pub fn new(values: Vec<f64>) -> Result<Self, SynthError> {
        if values.is_empty() {
            return Err(SynthError::InvalidGrid("no values".into()));
        }
        if let Some(&v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(SynthError::InvalidLambda(v));
        }
        if values.windows(2).any(|w| w[0] >= w[1]) {
            return Err(SynthError::InvalidGrid("values must be strictly increasing".into()));
        }
        Ok(Self { values })
    }

    /// `k / steps` for `k = 1..=steps`.
    pub fn uniform(steps: u32) -> Result<Self, SynthError> {
        Self::new((1..=steps).map(|k| f64::from(k) / f64::from(steps)).collect())
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

impl Default for IntensityGrid {
    fn default() -> Self {
        Self::uniform(100).expect("valid grid")
    }
}

/// `z (1 - lambda) + lambda a`, coordinate-wise.
pub fn interpolate(z: &[f64], a: &[f64], lambda: f64) -> Result<Vec<f64>, SynthError> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(SynthError::InvalidLambda(lambda));
    }
    if z.len() != a.len() {
        return Err(SynthError::DimensionMismatch {
            expected: z.len(),
            found: a.len(),
        });
    }
    Ok(z.iter()
        .zip(a)
        .map(|(&z, &a)| z * (1.0 - lambda) + lambda * a)
        .collect())
}

/// Whether the normal anchor is redrawn for every intensity or once per template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZSampling {
    #[default]
    PerLambda,
    PerTemplate,
}

/// Normal-anchor policy for [`build_test_set`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sampling {
    pub anchor: ZSampling,
    /// Rows emitted per (template, intensity), each from its own anchor.
    pub draws: usize,
}

impl Default for Sampling {
    fn default() -> Self {
        Self {
            anchor: ZSampling::PerLambda,
            draws: 1,
        }
    }
}

impl From<ZSampling> for Sampling {
    fn from(anchor: ZSampling) -> Self {
        Self { anchor, draws: 1 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestLabel {
    pub template_id: u32,
    pub kind: AnomalyType,
    pub lambda: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestSet {
    pub rows: Matrix,
    pub labels: Vec<TestLabel>,
}

impl TestSet {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// `draws` rows per (template, intensity), template-major then
/// intensity-major, each interpolated from a uniformly drawn normal row.
/// With [`ZSampling::PerTemplate`] draw `d` reuses the same anchor at every
/// intensity.
pub fn build_test_set(
    normals: &Matrix,
    templates: &[AnomalyTemplate],
    grid: &IntensityGrid,
    seed: u64,
    sampling: impl Into<Sampling>,
) -> Result<TestSet, SynthError> {
    let sampling = sampling.into();
    if normals.is_empty() {
        return Err(SynthError::EmptyNormals);
    }
    if sampling.draws == 0 {
        return Err(SynthError::InvalidGrid("draws must be at least 1".into()));
    }
    let n = templates.len() * grid.len() * sampling.draws;
    let mut rows = Matrix::empty(normals.cols());
    let mut labels = Vec::with_capacity(n);
    for t in templates {
        t.validate(normals.cols())?;
        let mut rng = child_rng(seed, &format!("stress/template/{}", t.id));
        let fixed: Vec<usize> = (0..sampling.draws)
            .map(|_| rng.random_range(0..normals.rows()))
            .collect();
        for &lambda in grid.values() {
            for &anchor in &fixed {
                let z = match sampling.anchor {
                    ZSampling::PerLambda => rng.random_range(0..normals.rows()),
                    ZSampling::PerTemplate => anchor,
                };
                let x = interpolate(normals.row(z), &t.point, lambda)?;
                rows.push_row(&x).expect("width checked");
                labels.push(TestLabel {
                    template_id: t.id,
                    kind: t.kind,
                    lambda,
                });
            }
        }
    }
    Ok(TestSet { rows, labels })
}
