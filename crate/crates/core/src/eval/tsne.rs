use super::EvalError;
use crate::rng::rng_from_seed;
use crate::Matrix;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iterations: usize,
    pub exaggeration: f64,
    pub exaggeration_iterations: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    pub final_momentum: f64,
    pub momentum_switch: usize,
    pub seed: u64,
}

impl Default for TsneConfig {
    fn default() -> Self {
        Self {
            perplexity: 30.0,
            iterations: 1000,
            exaggeration: 12.0,
            exaggeration_iterations: 250,
            learning_rate: 200.0,
            momentum: 0.5,
            final_momentum: 0.8,
            momentum_switch: 250,
            seed: 0,
        }
    }
}

impl TsneConfig {
    pub fn validate(&self) -> Result<(), EvalError> {
        let bad = |m: &str| Err(EvalError::InvalidConfig(m.into()));
        if !(self.perplexity.is_finite() && self.perplexity > 0.0) {
            return bad("perplexity must be positive");
        }
        if self.iterations == 0 {
            return bad("iterations must be at least 1");
        }
        if !(self.exaggeration.is_finite() && self.exaggeration >= 1.0) {
            return bad("exaggeration must be at least 1");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be positive");
        }
        for m in [self.momentum, self.final_momentum] {
            if !(0.0..1.0).contains(&m) {
                return bad("momentum must lie in [0, 1)");
            }
        }
        Ok(())
    }

    /// Smallest row count for this perplexity.
    pub fn min_rows(&self) -> usize {
        (3.0 * self.perplexity).floor() as usize + 2
    }
}

/// A two-dimensional map with its objective history.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding2D {
    pub points: Matrix,
    /// KL divergence of the returned map.
    pub kl: f64,
    /// KL divergence before each iteration, then of the final map.
    pub kl_trace: Vec<f64>,
}

const ENTROPY_TOLERANCE: f64 = 1e-5;
const MAX_BISECTION_STEPS: usize = 50;
const MIN_GAIN: f64 = 0.01;
const INIT_SD: f64 = 1e-4;

fn squared_distances(x: &Matrix) -> Matrix {
    let n = x.rows();
    let mut d = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            d.set(i, j, v);
            d.set(j, i, v);
        }
    }
    d
}

/// Gaussian conditional distribution of row `i` at precision `beta`, and its entropy.
fn conditional_row(d: &[f64], i: usize, shift: f64, beta: f64, out: &mut [f64]) -> f64 {
    let mut sum = 0.0;
    let mut weighted = 0.0;
    for (j, (&dij, p)) in d.iter().zip(out.iter_mut()).enumerate() {
        if j == i {
            *p = 0.0;
            continue;
        }
        let e = dij - shift;
        *p = (-beta * e).exp();
        sum += *p;
        weighted += e * *p;
    }
    for p in out.iter_mut() {
        *p /= sum;
    }
    sum.ln() + beta * weighted / sum
}

/// Rows of `p_{j|i}`, each bandwidth bisected to match the perplexity.
pub fn conditional_affinities(x: &Matrix, perplexity: f64) -> Result<Matrix, EvalError> {
    let n = x.rows();
    if let Some(row) = x.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(EvalError::NonFinite { row });
    }
    if perplexity >= (n as f64 - 1.0) / 3.0 {
        return Err(EvalError::TooFewRows {
            perplexity,
            needed: (3.0 * perplexity).floor() as usize + 2,
            found: n,
        });
    }
    let target = perplexity.ln();
    let d = squared_distances(x);
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        let di = d.row(i);
        let others = || di.iter().enumerate().filter(|&(j, _)| j != i).map(|(_, &v)| v);
        let shift = others().fold(f64::INFINITY, f64::min);
        let ties = others().filter(|&v| v == shift).count();
        // As the bandwidth shrinks, perplexity falls to the number of nearest ties.
        if ties as f64 >= perplexity {
            return Err(EvalError::UnreachablePerplexity {
                row: i,
                ties,
                perplexity,
            });
        }
        let spread = others().map(|v| v - shift).sum::<f64>() / (n - 1) as f64;
        let mut beta = 1.0 / spread.max(f64::MIN_POSITIVE);
        let (mut lo, mut hi) = (0.0, f64::INFINITY);
        let row = p.row_mut(i);
        for _ in 0..MAX_BISECTION_STEPS {
            let h = conditional_row(di, i, shift, beta, row);
            if (h - target).abs() < ENTROPY_TOLERANCE {
                break;
            }
            if h > target {
                lo = beta;
                beta = if hi.is_finite() { (beta + hi) / 2.0 } else { beta * 2.0 };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        conditional_row(di, i, shift, beta, row);
    }
    Ok(p)
}

/// `p_ij = (p_{j|i} + p_{i|j}) / 2n`.
pub fn joint_affinities(conditional: &Matrix) -> Matrix {
    let n = conditional.rows();
    let mut p = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            p.set(i, j, (conditional.get(i, j) + conditional.get(j, i)) / (2.0 * n as f64));
        }
    }
    p
}

/// Student-t (one degree of freedom) affinities of a map, normalised to sum 1.
pub fn student_t_affinities(y: &Matrix) -> Matrix {
    let mut q = kernel(y);
    let z: f64 = q.as_slice().iter().sum();
    for v in q.as_mut_slice() {
        *v /= z;
    }
    q
}

fn kernel(y: &Matrix) -> Matrix {
    let n = y.rows();
    let mut k = Matrix::zeros(n, n);
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = y.row(i).iter().zip(y.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
            let v = 1.0 / (1.0 + d);
            k.set(i, j, v);
            k.set(j, i, v);
        }
    }
    k
}

/// `sum p log(p / q)` over entries with `p > 0`.
pub fn kl_divergence(p: &Matrix, q: &Matrix) -> f64 {
    p.as_slice()
        .iter()
        .zip(q.as_slice())
        .filter(|(&p, _)| p > 0.0)
        .map(|(&p, &q)| p * (p / q).ln())
        .sum()
}

/// Exact t-SNE into two dimensions.
pub fn tsne(x: &Matrix, cfg: &TsneConfig) -> Result<Embedding2D, EvalError> {
    cfg.validate()?;
    let n = x.rows();
    let p = joint_affinities(&conditional_affinities(x, cfg.perplexity)?);

    let mut rng = rng_from_seed(cfg.seed);
    let normal = Normal::new(0.0, INIT_SD).expect("valid constant");
    let mut y = Matrix::from_vec(n, 2, (0..2 * n).map(|_| normal.sample(&mut rng)).collect());
    let mut update = Matrix::zeros(n, 2);
    let mut gains = Matrix::from_vec(n, 2, vec![1.0; 2 * n]);
    let mut grad = Matrix::zeros(n, 2);
    let mut trace = Vec::with_capacity(cfg.iterations + 1);

    for it in 0..cfg.iterations {
        let k = kernel(&y);
        let z: f64 = k.as_slice().iter().sum();
        let kl: f64 = p
            .as_slice()
            .iter()
            .zip(k.as_slice())
            .filter(|(&p, _)| p > 0.0)
            .map(|(&p, &k)| p * (p * z / k).ln())
            .sum();
        trace.push(kl);

        let alpha = if it < cfg.exaggeration_iterations {
            cfg.exaggeration
        } else {
            1.0
        };
        for i in 0..n {
            let (mut g0, mut g1) = (0.0, 0.0);
            let (yi0, yi1) = (y.get(i, 0), y.get(i, 1));
            for j in 0..n {
                if i == j {
                    continue;
                }
                let kij = k.get(i, j);
                let m = (alpha * p.get(i, j) - kij / z) * kij;
                g0 += m * (yi0 - y.get(j, 0));
                g1 += m * (yi1 - y.get(j, 1));
            }
            grad.set(i, 0, 4.0 * g0);
            grad.set(i, 1, 4.0 * g1);
        }

        let momentum = if it < cfg.momentum_switch {
            cfg.momentum
        } else {
            cfg.final_momentum
        };
        for ((g, u), gain) in grad
            .as_slice()
            .iter()
            .zip(update.as_mut_slice())
            .zip(gains.as_mut_slice())
        {
            *gain = if (*g > 0.0) != (*u > 0.0) {
                *gain + 0.2
            } else {
                *gain * 0.8
            };
            *gain = gain.max(MIN_GAIN);
            *u = momentum * *u - cfg.learning_rate * *gain * g;
        }
        for (v, u) in y.as_mut_slice().iter_mut().zip(update.as_slice()) {
            *v += u;
        }
        for c in 0..2 {
            let mean = y.column(c).iter().sum::<f64>() / n as f64;
            for i in 0..n {
                y.set(i, c, y.get(i, c) - mean);
            }
        }
    }

    let kl = kl_divergence(&p, &student_t_affinities(&y));
    trace.push(kl);
    if let Some(row) = y.iter_rows().position(|r| r.iter().any(|v| !v.is_finite())) {
        return Err(EvalError::NonFinite { row });
    }
    Ok(Embedding2D {
        points: y,
        kl,
        kl_trace: trace,
    })
}

/// Fraction of points whose nearest other point carries the same label.
pub fn nearest_neighbor_purity<L: PartialEq>(points: &Matrix, labels: &[L]) -> f64 {
    let n = points.rows();
    if n < 2 {
        return 1.0;
    }
    let d = squared_distances(points);
    let hits = (0..n)
        .filter(|&i| {
            let nn = (0..n)
                .filter(|&j| j != i)
                .min_by(|&a, &b| d.get(i, a).total_cmp(&d.get(i, b)))
                .expect("n >= 2");
            labels[nn] == labels[i]
        })
        .count();
    hits as f64 / n as f64
}
