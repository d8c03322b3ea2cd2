use super::{FeatureError, ModelInput, WindowKey};
use crate::Matrix;
use serde::{Deserialize, Serialize};

/// Guard on the robust divisor.
pub const IQR_EPSILON: f64 = 1e-9;

/// Per-coordinate robust scaling followed by min-max scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub median: Vec<f64>,
    pub iqr: Vec<f64>,
    /// Minimum of the robust-scaled training values.
    pub min: Vec<f64>,
    /// Maximum of the robust-scaled training values.
    pub max: Vec<f64>,
}

/// Linear-interpolated quantile of sorted data, `q` in [0, 1].
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

/// Fits the scaler column by column.
pub fn fit_scaler(x: &Matrix) -> Result<ScalerParams, FeatureError> {
    if x.rows() < 2 {
        return Err(FeatureError::TooFewRows {
            needed: 2,
            found: x.rows(),
        });
    }
    for (r, row) in x.iter_rows().enumerate() {
        if let Some(c) = row.iter().position(|v| !v.is_finite()) {
            return Err(FeatureError::NonFinite { row: r, col: c });
        }
    }
    let d = x.cols();
    let mut p = ScalerParams {
        median: Vec::with_capacity(d),
        iqr: Vec::with_capacity(d),
        min: Vec::with_capacity(d),
        max: Vec::with_capacity(d),
    };
    for c in 0..d {
        let mut col = x.column(c);
        col.sort_by(f64::total_cmp);
        let median = quantile(&col, 0.5);
        let iqr = quantile(&col, 0.75) - quantile(&col, 0.25);
        let div = iqr.max(IQR_EPSILON);
        // Robust scaling is monotone, so the extremes come from the sorted ends.
        p.min.push((col[0] - median) / div);
        p.max.push((col[col.len() - 1] - median) / div);
        p.median.push(median);
        p.iqr.push(iqr);
    }
    Ok(p)
}

impl ScalerParams {
    pub fn dim(&self) -> usize {
        self.median.len()
    }

    /// Robust then min-max; degenerate coordinates map to 0.5. Unclamped.
    pub fn apply(&self, x: &[f64]) -> Result<Vec<f64>, FeatureError> {
        self.check(x.len())?;
        Ok(x.iter()
            .enumerate()
            .map(|(c, &v)| {
                let u = (v - self.median[c]) / self.iqr[c].max(IQR_EPSILON);
                let span = self.max[c] - self.min[c];
                if span > 0.0 {
                    (u - self.min[c]) / span
                } else {
                    0.5
                }
            })
            .collect())
    }

    pub fn apply_matrix(&self, x: &Matrix) -> Result<Matrix, FeatureError> {
        self.check(x.cols())?;
        let mut data = Vec::with_capacity(x.rows() * x.cols());
        for row in x.iter_rows() {
            data.extend(self.apply(row)?);
        }
        Ok(Matrix::from_vec(x.rows(), x.cols(), data))
    }

    pub fn apply_record(&self, key: &WindowKey, x: &[f64]) -> Result<ModelInput, FeatureError> {
        Ok(ModelInput {
            key: key.clone(),
            values: self.apply(x)?,
        })
    }

    /// Inverse map back to raw units. Degenerate coordinates return the median.
    pub fn invert(&self, scaled: &[f64]) -> Result<Vec<f64>, FeatureError> {
        self.check(scaled.len())?;
        Ok(scaled
            .iter()
            .enumerate()
            .map(|(c, &s)| {
                let span = self.max[c] - self.min[c];
                if span > 0.0 {
                    let u = s * span + self.min[c];
                    u * self.iqr[c].max(IQR_EPSILON) + self.median[c]
                } else {
                    self.median[c]
                }
            })
            .collect())
    }

    fn check(&self, found: usize) -> Result<(), FeatureError> {
        if found == self.dim() {
            Ok(())
        } else {
            Err(FeatureError::DimensionMismatch {
                expected: self.dim(),
                found,
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn col(values: &[f64]) -> Matrix {
        Matrix::from_vec(values.len(), 1, values.to_vec())
    }

    #[test]
    fn quartiles_interpolate() {
        let p = fit_scaler(&col(&[4.0, 0.0, 2.0, 1.0, 3.0])).unwrap();
        assert_eq!(p.median, vec![2.0]);
        assert_eq!(p.iqr, vec![2.0]);
        assert_eq!(p.min, vec![-1.0]);
        assert_eq!(p.max, vec![1.0]);
        // Even count: quartiles of {0, 1, 2, 10} are 0.75 and 4.
        let q = fit_scaler(&col(&[0.0, 1.0, 2.0, 10.0])).unwrap();
        assert_eq!(q.median, vec![1.5]);
        assert_eq!(q.iqr, vec![3.25]);
    }

    #[test]
    fn constant_column_maps_to_half() {
        let p = fit_scaler(&col(&[7.0, 7.0, 7.0])).unwrap();
        assert_eq!(p.median, vec![7.0]);
        assert_eq!(p.iqr, vec![0.0]);
        assert_eq!(p.apply(&[7.0]).unwrap(), vec![0.5]);
        assert_eq!(p.apply(&[1e6]).unwrap(), vec![0.5]);
    }

    #[test]
    fn median_maps_to_formula_and_outliers_exceed_one() {
        let p = fit_scaler(&col(&[0.0, 1.0, 2.0, 3.0, 4.0])).unwrap();
        assert_eq!(p.apply(&[2.0]).unwrap(), vec![0.5]);
        assert_eq!(p.apply(&[4.0]).unwrap(), vec![1.0]);
        assert_eq!(p.apply(&[8.0]).unwrap(), vec![2.0]);
        assert_eq!(p.apply(&[-4.0]).unwrap(), vec![-1.0]);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            fit_scaler(&col(&[1.0])),
            Err(FeatureError::TooFewRows { found: 1, .. })
        ));
        assert!(matches!(
            fit_scaler(&col(&[1.0, f64::NAN])),
            Err(FeatureError::NonFinite { row: 1, col: 0 })
        ));
        let p = fit_scaler(&col(&[1.0, 2.0])).unwrap();
        assert!(matches!(
            p.apply(&[1.0, 2.0]),
            Err(FeatureError::DimensionMismatch { expected: 1, found: 2 })
        ));
    }

    fn matrix_strategy() -> impl Strategy<Value = Matrix> {
        (2usize..30, 1usize..5).prop_flat_map(|(r, c)| {
            prop::collection::vec(-1e3f64..1e3, r * c).prop_map(move |v| Matrix::from_vec(r, c, v))
        })
    }

    proptest! {
        #[test]
        fn training_rows_land_in_unit_box(x in matrix_strategy()) {
            let p = fit_scaler(&x).unwrap();
            prop_assert_eq!(&p, &fit_scaler(&x).unwrap());
            let s = p.apply_matrix(&x).unwrap();
            for v in s.as_slice() {
                prop_assert!((-1e-12..=1.0 + 1e-12).contains(v), "{v}");
            }
            for c in 0..x.cols() {
                prop_assert!(p.iqr[c] >= 0.0 && p.min[c] <= p.max[c]);
            }
        }

        #[test]
        fn scaling_is_monotone_and_invertible(x in matrix_strategy(), a in -2e3f64..2e3, b in -2e3f64..2e3) {
            let p = fit_scaler(&x).unwrap();
            let d = x.cols();
            let sa = p.apply(&vec![a; d]).unwrap();
            let sb = p.apply(&vec![b; d]).unwrap();
            for c in 0..d {
                if p.max[c] > p.min[c] {
                    if a < b { prop_assert!(sa[c] <= sb[c]); }
                    let back = p.invert(&sa).unwrap()[c];
                    prop_assert!((back - a).abs() <= 1e-9 * (1.0 + a.abs()), "{back} vs {a}");
                }
            }
        }
    }
}
