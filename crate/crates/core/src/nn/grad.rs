use super::{CompositionNet, NnError};
use crate::Matrix;

/// Partial derivatives laid out like the network: per layer, weights
/// row-major then bias.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientSet {
    pub layers: Vec<LayerGradient>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LayerGradient {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl GradientSet {
    pub fn zeros_like(net: &CompositionNet) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| LayerGradient {
                    weights: vec![0.0; l.n_in() * l.n_out()],
                    bias: vec![0.0; l.n_out()],
                })
                .collect(),
        }
    }

    /// Same layout as [`CompositionNet::flat_params`].
    pub fn flatten(&self) -> Vec<f64> {
        let mut v = Vec::new();
        for l in &self.layers {
            v.extend_from_slice(&l.weights);
            v.extend_from_slice(&l.bias);
        }
        v
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    /// Mean over rows and output coordinates of the squared error.
    pub mse: f64,
    /// `lambda * sum |w|` over all weights (biases excluded).
    pub l1: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.mse + self.l1
    }
}

fn l1_penalty(net: &CompositionNet, l1_lambda: f64) -> f64 {
    if l1_lambda == 0.0 {
        return 0.0;
    }
    let s: f64 = net
        .layers()
        .iter()
        .flat_map(|l| l.affine.weights())
        .map(|w| w.abs())
        .sum();
    l1_lambda * s
}

fn check_batch(net: &CompositionNet, inputs: &Matrix, targets: &Matrix) -> Result<(), NnError> {
    if inputs.cols() != net.input_dim() {
        return Err(NnError::DimensionMismatch {
            layer: 0,
            expected: net.input_dim(),
            found: inputs.cols(),
        });
    }
    if targets.cols() != net.output_dim() || targets.rows() != inputs.rows() {
        return Err(NnError::DimensionMismatch {
            layer: net.depth(),
            expected: net.output_dim(),
            found: targets.cols(),
        });
    }
    Ok(())
}

/// Per-layer (pre-activation, activation) for a whole batch.
fn forward_trace(net: &CompositionNet, inputs: &Matrix) -> Result<Vec<(Matrix, Matrix)>, NnError> {
    let mut trace: Vec<(Matrix, Matrix)> = Vec::with_capacity(net.depth());
    for (li, layer) in net.layers().iter().enumerate() {
        let prev = trace.last().map_or(inputs, |(_, a)| a);
        let rows = prev.rows();
        let mut z = Matrix::zeros(rows, layer.n_out());
        let mut a = Matrix::zeros(rows, layer.n_out());
        for r in 0..rows {
            let x = prev.row(r);
            let zr = z.row_mut(r);
            for (j, zj) in zr.iter_mut().enumerate() {
                *zj = layer.affine.unit(j, x);
            }
            let zr = z.row(r);
            let ar = a.row_mut(r);
            for j in 0..layer.n_out() {
                ar[j] = layer.activations[j].apply(zr[j]);
            }
        }
        if !a.is_finite() {
            return Err(NnError::NonFinite { layer: li });
        }
        trace.push((z, a));
    }
    Ok(trace)
}

/// Loss value only (no gradients).
pub fn loss(net: &CompositionNet, inputs: &Matrix, targets: &Matrix, l1_lambda: f64) -> Result<LossBreakdown, NnError> {
    check_batch(net, inputs, targets)?;
    let out = net.forward_batch(inputs)?;
    let n = (out.rows() * out.cols()) as f64;
    let sq: f64 = out
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(y, t)| (y - t) * (y - t))
        .sum();
    Ok(LossBreakdown {
        mse: if n > 0.0 { sq / n } else { 0.0 },
        l1: l1_penalty(net, l1_lambda),
    })
}

/// Exact reverse-mode gradient of
/// `mean_{rows, coords} (net(x) - t)^2 + l1_lambda * sum |w|`.
///
/// The subgradient of `|w|` at `w = 0` is taken as 0.
pub fn gradients(
    net: &CompositionNet,
    inputs: &Matrix,
    targets: &Matrix,
    l1_lambda: f64,
) -> Result<(LossBreakdown, GradientSet), NnError> {
    check_batch(net, inputs, targets)?;
    let trace = forward_trace(net, inputs)?;
    let rows = inputs.rows();
    let out = &trace.last().expect("non-empty net").1;
    let denom = (rows * net.output_dim()) as f64;

    // dL/da for the output layer.
    let mut upstream = Matrix::zeros(rows, net.output_dim());
    let mut sq = 0.0;
    for (g, (y, t)) in upstream
        .as_mut_slice()
        .iter_mut()
        .zip(out.as_slice().iter().zip(targets.as_slice()))
    {
        let d = y - t;
        sq += d * d;
        *g = 2.0 * d / denom;
    }

    let mut grads = GradientSet::zeros_like(net);
    for li in (0..net.depth()).rev() {
        let layer = &net.layers()[li];
        let (z, a) = &trace[li];
        let prev = if li == 0 { inputs } else { &trace[li - 1].1 };
        let (n_in, n_out) = (layer.n_in(), layer.n_out());
        let lg = &mut grads.layers[li];
        let mut down = Matrix::zeros(rows, n_in);
        let mut dz = vec![0.0; n_out];
        for r in 0..rows {
            let (zr, ar, ur) = (z.row(r), a.row(r), upstream.row(r));
            for j in 0..n_out {
                dz[j] = ur[j] * layer.activations[j].derivative(zr[j], ar[j]);
            }
            let xr = prev.row(r);
            let dr = down.row_mut(r);
            for (j, &d) in dz.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                lg.bias[j] += d;
                let gw = &mut lg.weights[j * n_in..(j + 1) * n_in];
                for (g, x) in gw.iter_mut().zip(xr) {
                    *g += d * x;
                }
                for (g, w) in dr.iter_mut().zip(layer.affine.weight_row(j)) {
                    *g += d * w;
                }
            }
        }
        if lg.weights.iter().chain(&lg.bias).any(|v| !v.is_finite()) {
            return Err(NnError::NonFinite { layer: li });
        }
        if l1_lambda != 0.0 {
            for (g, w) in lg.weights.iter_mut().zip(layer.affine.weights()) {
                if *w > 0.0 {
                    *g += l1_lambda;
                } else if *w < 0.0 {
                    *g -= l1_lambda;
                }
            }
        }
        upstream = down;
    }

    let loss = LossBreakdown {
        mse: if denom > 0.0 { sq / denom } else { 0.0 },
        l1: l1_penalty(net, l1_lambda),
    };
    Ok((loss, grads))
}

/// Gradient of the reconstruction loss: targets are the inputs themselves.
pub fn reconstruction_gradients(
    net: &CompositionNet,
    batch: &Matrix,
    l1_lambda: f64,
) -> Result<(LossBreakdown, GradientSet), NnError> {
    gradients(net, batch, batch, l1_lambda)
}
