//! Flat little-endian `f64` blobs plus a manifest of dims and activation tags.
//!
//! Blob layout: for each layer in order, the `n_out x n_in` weights row-major,
//! then the `n_out` biases.

use super::{Activation, AffineLayer, CompositionNet, DenseLayer, NnError};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetManifest {
    /// `n^(0), ..., n^(d)`.
    pub dims: Vec<usize>,
    /// One tag per unit, per layer.
    pub activations: Vec<Vec<String>>,
}

impl CompositionNet {
    pub fn manifest(&self) -> NetManifest {
        NetManifest {
            dims: self.dims(),
            activations: self
                .layers()
                .iter()
                .map(|l| l.activations.iter().map(|a| a.tag().to_string()).collect())
                .collect(),
        }
    }

    pub fn to_le_bytes(&self) -> Vec<u8> {
        self.flat_params().iter().flat_map(|v| v.to_le_bytes()).collect()
    }

    pub fn from_parts(manifest: &NetManifest, blob: &[u8]) -> Result<Self, NnError> {
        let dims = &manifest.dims;
        if dims.len() < 2 || manifest.activations.len() != dims.len() - 1 {
            return Err(NnError::Serialization(format!(
                "{} dims but {} activation layers",
                dims.len(),
                manifest.activations.len()
            )));
        }
        if !blob.len().is_multiple_of(8) {
            return Err(NnError::Serialization(format!(
                "blob length {} is not a multiple of 8",
                blob.len()
            )));
        }
        let values: Vec<f64> = blob
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
            .collect();
        let expected: usize = dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum();
        if values.len() != expected {
            return Err(NnError::ParameterCount {
                expected,
                found: values.len(),
            });
        }
        let mut off = 0;
        let mut layers = Vec::with_capacity(dims.len() - 1);
        for (li, w) in dims.windows(2).enumerate() {
            let (n_in, n_out) = (w[0], w[1]);
            let weights = values[off..off + n_in * n_out].to_vec();
            off += n_in * n_out;
            let bias = values[off..off + n_out].to_vec();
            off += n_out;
            let acts = manifest.activations[li]
                .iter()
                .map(|t| {
                    Activation::from_tag(t)
                        .ok_or_else(|| NnError::Serialization(format!("unknown activation tag {t:?}")))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let affine = AffineLayer::new(n_in, n_out, weights, bias)
                .map_err(|reason| NnError::MalformedLayer { layer: li, reason })?;
            let layer =
                DenseLayer::new(affine, acts).map_err(|reason| NnError::MalformedLayer { layer: li, reason })?;
            layers.push(layer);
        }
        CompositionNet::new(layers)
    }
}
