use super::{Activation, NnError};
use crate::Matrix;
use serde::{Deserialize, Serialize};

/// `x -> W x + b` with `W` stored row-major as `n_out x n_in`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AffineLayer {
    n_in: usize,
    n_out: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

impl AffineLayer {
    pub fn new(n_in: usize, n_out: usize, weights: Vec<f64>, bias: Vec<f64>) -> Result<Self, String> {
        if n_in == 0 || n_out == 0 {
            return Err(format!("zero-width affine map {n_in}->{n_out}"));
        }
        if weights.len() != n_in * n_out {
            return Err(format!(
                "weights have {} entries, expected {}x{}",
                weights.len(),
                n_out,
                n_in
            ));
        }
        if bias.len() != n_out {
            return Err(format!("bias has {} entries, expected {}", bias.len(), n_out));
        }
        if !weights.iter().chain(&bias).all(|v| v.is_finite()) {
            return Err("non-finite parameter".into());
        }
        Ok(Self {
            n_in,
            n_out,
            weights,
            bias,
        })
    }

    pub fn zeros(n_in: usize, n_out: usize) -> Self {
        Self {
            n_in,
            n_out,
            weights: vec![0.0; n_in * n_out],
            bias: vec![0.0; n_out],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut l = Self::zeros(n, n);
        for i in 0..n {
            l.weights[i * n + i] = 1.0;
        }
        l
    }

    pub fn n_in(&self) -> usize {
        self.n_in
    }

    pub fn n_out(&self) -> usize {
        self.n_out
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn weight(&self, out: usize, inp: usize) -> f64 {
        self.weights[out * self.n_in + inp]
    }

    pub fn weight_row(&self, out: usize) -> &[f64] {
        &self.weights[out * self.n_in..(out + 1) * self.n_in]
    }

    /// Pre-activation for one unit. Summation order (inputs in index order,
    /// then bias) is shared with the graph evaluator.
    #[inline]
    pub(crate) fn unit(&self, out: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (w, v) in self.weight_row(out).iter().zip(x) {
            acc += w * v;
        }
        acc + self.bias[out]
    }
}

/// One affine map followed by a per-unit activation vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DenseLayer {
    pub affine: AffineLayer,
    pub activations: Vec<Activation>,
}

impl DenseLayer {
    pub fn new(affine: AffineLayer, activations: Vec<Activation>) -> Result<Self, String> {
        if activations.len() != affine.n_out() {
            return Err(format!(
                "{} activations for {} units",
                activations.len(),
                affine.n_out()
            ));
        }
        Ok(Self { affine, activations })
    }

    pub fn uniform(affine: AffineLayer, activation: Activation) -> Self {
        let n = affine.n_out();
        Self {
            affine,
            activations: vec![activation; n],
        }
    }

    pub fn n_in(&self) -> usize {
        self.affine.n_in()
    }

    pub fn n_out(&self) -> usize {
        self.affine.n_out()
    }
}

/// `Phi_d . A_d . ... . Phi_1 . A_1`: a chain of dense layers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompositionNet {
    layers: Vec<DenseLayer>,
}

impl CompositionNet {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self, NnError> {
        if layers.is_empty() {
            return Err(NnError::Empty);
        }
        for (i, pair) in layers.windows(2).enumerate() {
            if pair[0].n_out() != pair[1].n_in() {
                return Err(NnError::DimensionMismatch {
                    layer: i + 1,
                    expected: pair[0].n_out(),
                    found: pair[1].n_in(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    /// `n^(0), ..., n^(d)`.
    pub fn dims(&self) -> Vec<usize> {
        std::iter::once(self.input_dim())
            .chain(self.layers.iter().map(DenseLayer::n_out))
            .collect()
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].n_in()
    }

    pub fn output_dim(&self) -> usize {
        self.layers[self.layers.len() - 1].n_out()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.n_in() * l.n_out() + l.n_out()).sum()
    }

    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        if x.len() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                found: x.len(),
            });
        }
        let mut h = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let next: Vec<f64> = (0..layer.n_out())
                .map(|j| layer.activations[j].apply(layer.affine.unit(j, &h)))
                .collect();
            if next.iter().any(|v| !v.is_finite()) {
                return Err(NnError::NonFinite { layer: li });
            }
            h = next;
        }
        Ok(h)
    }

    /// Row-wise forward pass over a batch.
    pub fn forward_batch(&self, x: &Matrix) -> Result<Matrix, NnError> {
        if x.cols() != self.input_dim() {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.input_dim(),
                found: x.cols(),
            });
        }
        let mut out = Matrix::zeros(x.rows(), self.output_dim());
        for i in 0..x.rows() {
            let y = self.forward(x.row(i))?;
            out.row_mut(i).copy_from_slice(&y);
        }
        Ok(out)
    }

    /// All parameters, layer by layer: weights row-major, then bias.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            v.extend_from_slice(l.affine.weights());
            v.extend_from_slice(l.affine.bias());
        }
        v
    }

    pub fn set_flat_params(&mut self, params: &[f64]) -> Result<(), NnError> {
        if params.len() != self.param_count() {
            return Err(NnError::ParameterCount {
                expected: self.param_count(),
                found: params.len(),
            });
        }
        let mut off = 0;
        for l in &mut self.layers {
            let nw = l.affine.weights.len();
            l.affine.weights.copy_from_slice(&params[off..off + nw]);
            off += nw;
            let nb = l.affine.bias.len();
            l.affine.bias.copy_from_slice(&params[off..off + nb]);
            off += nb;
        }
        Ok(())
    }

    /// `other . self`.
    pub fn then(&self, other: &CompositionNet) -> Result<CompositionNet, NnError> {
        let mut layers = self.layers.clone();
        layers.extend(other.layers.iter().cloned());
        CompositionNet::new(layers)
    }

    /// Splits into the first `at` layers and the rest.
    pub fn split_at(&self, at: usize) -> Result<(CompositionNet, CompositionNet), NnError> {
        if at == 0 || at >= self.layers.len() {
            return Err(NnError::MalformedLayer {
                layer: at,
                reason: "split point must leave both halves non-empty".into(),
            });
        }
        let (a, b) = self.layers.split_at(at);
        Ok((CompositionNet::new(a.to_vec())?, CompositionNet::new(b.to_vec())?))
    }
}
