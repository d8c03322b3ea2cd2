use super::{Activation, AffineLayer, CompositionNet, DenseLayer, NnError};
use serde::{Deserialize, Serialize};

/// A node position: `layer` 0 is the input layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub layer: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub from: NodeRef,
    pub weight: f64,
}

/// `v(z) = activation(sum_e weight_e * z_e + bias)` over its incoming edges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Neuron {
    pub edges: Vec<Edge>,
    pub bias: f64,
    pub activation: Activation,
}

/// Layered graph network. `layers[i]` holds the neurons of graph layer `i + 1`;
/// graph layer 0 is `input_width` bare input nodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayeredGraphNet {
    pub input_width: usize,
    pub layers: Vec<Vec<Neuron>>,
}

impl LayeredGraphNet {
    /// Widths of graph layers `0..=d`.
    pub fn widths(&self) -> Vec<usize> {
        std::iter::once(self.input_width)
            .chain(self.layers.iter().map(Vec::len))
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.layers.iter().flatten().map(|n| n.edges.len()).sum()
    }

    /// Checks that every edge into graph layer `l` starts in layer `l - 1`
    /// at an existing node, and that no predecessor feeds a neuron twice.
    pub fn validate(&self) -> Result<(), NnError> {
        if self.layers.is_empty() || self.input_width == 0 {
            return Err(NnError::Empty);
        }
        let widths = self.widths();
        for (li, layer) in self.layers.iter().enumerate() {
            let graph_layer = li + 1;
            if layer.is_empty() {
                return Err(NnError::MalformedLayer {
                    layer: graph_layer,
                    reason: "layer has no neurons".into(),
                });
            }
            for (ni, neuron) in layer.iter().enumerate() {
                let mut seen = vec![false; widths[li]];
                for e in &neuron.edges {
                    if e.from.layer != li || e.from.index >= widths[li] {
                        return Err(NnError::NonLayeredEdge {
                            layer: graph_layer,
                            node: ni,
                            from_layer: e.from.layer,
                            from_index: e.from.index,
                            expected_layer: li,
                        });
                    }
                    if std::mem::replace(&mut seen[e.from.index], true) {
                        return Err(NnError::MalformedLayer {
                            layer: graph_layer,
                            reason: format!("node {ni} has two edges from node {}", e.from.index),
                        });
                    }
                    if !e.weight.is_finite() {
                        return Err(NnError::NonFinite { layer: graph_layer });
                    }
                }
                if !neuron.bias.is_finite() {
                    return Err(NnError::NonFinite { layer: graph_layer });
                }
            }
        }
        Ok(())
    }

    /// Node-by-node, layer-by-layer evaluation.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>, NnError> {
        self.validate()?;
        if x.len() != self.input_width {
            return Err(NnError::DimensionMismatch {
                layer: 0,
                expected: self.input_width,
                found: x.len(),
            });
        }
        let mut prev = x.to_vec();
        for (li, layer) in self.layers.iter().enumerate() {
            let mut cur = Vec::with_capacity(layer.len());
            for neuron in layer {
                let mut acc = 0.0;
                for e in &neuron.edges {
                    acc += e.weight * prev[e.from.index];
                }
                let v = neuron.activation.apply(acc + neuron.bias);
                if !v.is_finite() {
                    return Err(NnError::NonFinite { layer: li });
                }
                cur.push(v);
            }
            prev = cur;
        }
        Ok(prev)
    }
}

/// Each unit `j` of layer `i` becomes a neuron fed by every node of layer
/// `i - 1`, carrying row `j` of the affine map and the unit's activation.
pub fn composition_to_graph(net: &CompositionNet) -> LayeredGraphNet {
    let layers = net
        .layers()
        .iter()
        .enumerate()
        .map(|(li, layer)| {
            (0..layer.n_out())
                .map(|j| Neuron {
                    edges: layer
                        .affine
                        .weight_row(j)
                        .iter()
                        .enumerate()
                        .map(|(k, &w)| Edge {
                            from: NodeRef { layer: li, index: k },
                            weight: w,
                        })
                        .collect(),
                    bias: layer.affine.bias()[j],
                    activation: layer.activations[j],
                })
                .collect()
        })
        .collect();
    LayeredGraphNet {
        input_width: net.input_dim(),
        layers,
    }
}

/// Collapses each graph layer into a dense affine map; absent edges become
/// zero weights.
pub fn graph_to_composition(graph: &LayeredGraphNet) -> Result<CompositionNet, NnError> {
    graph.validate()?;
    let widths = graph.widths();
    let mut layers = Vec::with_capacity(graph.layers.len());
    for (li, neurons) in graph.layers.iter().enumerate() {
        let n_in = widths[li];
        let n_out = neurons.len();
        let mut weights = vec![0.0; n_in * n_out];
        let mut bias = Vec::with_capacity(n_out);
        let mut acts = Vec::with_capacity(n_out);
        for (j, neuron) in neurons.iter().enumerate() {
            for e in &neuron.edges {
                weights[j * n_in + e.from.index] = e.weight;
            }
            bias.push(neuron.bias);
            acts.push(neuron.activation);
        }
        let affine = AffineLayer::new(n_in, n_out, weights, bias)
            .map_err(|reason| NnError::MalformedLayer { layer: li + 1, reason })?;
        layers.push(DenseLayer::new(affine, acts).expect("one activation per neuron"));
    }
    CompositionNet::new(layers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use rand::Rng;

    fn random_net(dims: &[usize], seed: u64) -> CompositionNet {
        let mut rng = rng_from_seed(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let (n_in, n_out) = (w[0], w[1]);
                let weights = (0..n_in * n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
                let bias = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
                let acts = (0..n_out).map(|_| Activation::ALL[rng.random_range(0..3)]).collect();
                DenseLayer::new(AffineLayer::new(n_in, n_out, weights, bias).unwrap(), acts).unwrap()
            })
            .collect();
        CompositionNet::new(layers).unwrap()
    }

    #[test]
    fn identity_net_converts_to_fully_connected_identity_neurons() {
        let net = CompositionNet::new(vec![DenseLayer::uniform(
            AffineLayer::identity(3),
            Activation::Identity,
        )])
        .unwrap();
        let g = composition_to_graph(&net);
        assert_eq!(g.widths(), vec![3, 3]);
        assert_eq!(g.edge_count(), 9);
        assert_eq!(g.forward(&[1.0, -2.0, 0.5]).unwrap(), vec![1.0, -2.0, 0.5]);
        let mut rng = rng_from_seed(3);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            assert_eq!(g.forward(&x).unwrap(), net.forward(&x).unwrap());
        }
    }

    #[test]
    fn single_neuron_sums_its_predecessors() {
        let g = LayeredGraphNet {
            input_width: 2,
            layers: vec![vec![Neuron {
                edges: vec![
                    Edge {
                        from: NodeRef { layer: 0, index: 0 },
                        weight: 1.0,
                    },
                    Edge {
                        from: NodeRef { layer: 0, index: 1 },
                        weight: 1.0,
                    },
                ],
                bias: 0.0,
                activation: Activation::Identity,
            }]],
        };
        assert_eq!(g.forward(&[2.0, 3.0]).unwrap(), vec![5.0]);
        let net = graph_to_composition(&g).unwrap();
        assert_eq!(net.depth(), 1);
        assert_eq!(net.dims(), vec![2, 1]);
    }

    #[test]
    fn edge_count_for_5_4_3_2() {
        let net = random_net(&[5, 4, 3, 2], 11);
        let g = composition_to_graph(&net);
        assert_eq!(g.widths(), vec![5, 4, 3, 2]);
        assert_eq!(g.edge_count(), 5 * 4 + 4 * 3 + 3 * 2);
    }

    #[test]
    fn two_layer_elu_graph_agrees_with_composition() {
        let l1 = AffineLayer::new(2, 2, vec![1.0, -2.0, 2.0, 1.0], vec![0.0, -1.0]).unwrap();
        let l2 = AffineLayer::new(2, 1, vec![1.0, -1.0], vec![1.0]).unwrap();
        let net = CompositionNet::new(vec![
            DenseLayer::uniform(l1, Activation::Elu),
            DenseLayer::uniform(l2, Activation::Elu),
        ])
        .unwrap();
        let g = composition_to_graph(&net);
        assert_eq!(g.forward(&[1.0, 1.0]).unwrap(), net.forward(&[1.0, 1.0]).unwrap());
    }

    #[test]
    fn sparse_graph_becomes_dense_with_zero_weights() {
        // Layer 1: node 0 sees only input 1, node 1 sees inputs 0 and 2.
        // Layer 2: a single tanh node that sees only node 1.
        let g = LayeredGraphNet {
            input_width: 3,
            layers: vec![
                vec![
                    Neuron {
                        edges: vec![Edge {
                            from: NodeRef { layer: 0, index: 1 },
                            weight: 0.7,
                        }],
                        bias: 0.1,
                        activation: Activation::Elu,
                    },
                    Neuron {
                        edges: vec![
                            Edge {
                                from: NodeRef { layer: 0, index: 2 },
                                weight: -1.3,
                            },
                            Edge {
                                from: NodeRef { layer: 0, index: 0 },
                                weight: 0.4,
                            },
                        ],
                        bias: -0.2,
                        activation: Activation::Tanh,
                    },
                ],
                vec![Neuron {
                    edges: vec![Edge {
                        from: NodeRef { layer: 1, index: 1 },
                        weight: 2.0,
                    }],
                    bias: 0.0,
                    activation: Activation::Tanh,
                }],
            ],
        };
        let net = graph_to_composition(&g).unwrap();
        let l0 = &net.layers()[0].affine;
        assert_eq!(l0.weights(), &[0.0, 0.7, 0.0, 0.4, 0.0, -1.3]);
        assert_eq!(net.layers()[1].affine.weights(), &[0.0, 2.0]);
        let mut rng = rng_from_seed(5);
        for _ in 0..100 {
            let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
            let a = g.forward(&x).unwrap();
            let b = net.forward(&x).unwrap();
            assert!((a[0] - b[0]).abs() <= 1e-12);
        }
    }

    #[test]
    fn skipping_edge_is_rejected_with_its_endpoints() {
        let mut g = composition_to_graph(&random_net(&[3, 2, 2], 1));
        g.layers[1][1].edges[0].from = NodeRef { layer: 0, index: 2 };
        assert_eq!(
            graph_to_composition(&g).unwrap_err(),
            NnError::NonLayeredEdge {
                layer: 2,
                node: 1,
                from_layer: 0,
                from_index: 2,
                expected_layer: 1
            }
        );
        assert!(g.forward(&[0.0; 3]).is_err());
    }

    #[test]
    fn round_trip_recovers_parameters_exactly() {
        for seed in 0..20 {
            let net = random_net(&[4, 7, 3, 5], seed);
            let g = composition_to_graph(&net);
            let back = graph_to_composition(&g).unwrap();
            assert_eq!(back, net);
            assert_eq!(composition_to_graph(&back), g);
        }
    }
}
