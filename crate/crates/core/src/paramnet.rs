//! The conditioning network: a two-hidden-layer perceptron mapping a
//! flattened (mutilated) adjacency matrix to a valid circuit parameter
//! vector.
//!
//! A shared ReLU trunk feeds two linear heads. The gate head emits the logits
//! of every sum node's mixture weights and the leaf head emits raw leaf
//! parameters; a [`TransformSpec`] then maps the raw outputs into each
//! parameter's domain.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Var};
use crate::circuit::{CircuitGraph, LeafFamily, Node};
use crate::error::{Error, Result};
use crate::scm::AdjacencyMatrix;

/// Lower bound added to every softplus-transformed scale.
pub const SCALE_FLOOR: f64 = 1e-3;
pub const STABILITY_MIN: f64 = 0.3;
pub const STABILITY_MAX: f64 = 2.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    pub hidden: [usize; 2],
    /// Half-width of the uniform spread of initial location biases.
    pub location_spread: f64,
    /// Initial stability index of stable leaves.
    pub init_stability: f64,
    /// Initial scale (`sigma` or `c`) of continuous leaves.
    pub init_scale: f64,
    /// Multiplier on the head weight initialization.
    pub head_gain: f64,
}

impl Default for NetConfig {
    fn default() -> Self {
        NetConfig {
            hidden: [128, 128],
            location_spread: 1.5,
            init_stability: 1.8,
            init_scale: 0.7,
            head_gain: 0.1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Transform {
    Identity,
    /// `SCALE_FLOOR + softplus(x)`.
    Softplus,
    /// `0.3 + 1.7 sigmoid(x)`, into `[0.3, 2]`.
    Stability,
    Tanh,
    /// Softmax over the whole group.
    Softmax,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformGroup {
    pub offset: usize,
    pub len: usize,
    pub transform: Transform,
}

/// Per-slot transforms, in parameter order, covering the whole vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformSpec {
    pub groups: Vec<TransformGroup>,
}

impl TransformSpec {
    pub fn for_circuit(circuit: &CircuitGraph) -> TransformSpec {
        let mut groups = Vec::new();
        for (node, slot) in circuit.param_layout() {
            let at = |i: usize, transform| TransformGroup {
                offset: slot.offset + i,
                len: 1,
                transform,
            };
            match &circuit.nodes[node] {
                Node::Sum { .. }
                | Node::Leaf {
                    family: LeafFamily::Categorical { .. },
                    ..
                } => groups.push(TransformGroup {
                    offset: slot.offset,
                    len: slot.len,
                    transform: Transform::Softmax,
                }),
                Node::Leaf {
                    family: LeafFamily::Normal,
                    ..
                } => groups.extend([at(0, Transform::Identity), at(1, Transform::Softplus)]),
                Node::Leaf {
                    family: LeafFamily::AlphaStable,
                    ..
                } => groups.extend([
                    at(0, Transform::Stability),
                    at(1, Transform::Tanh),
                    at(2, Transform::Softplus),
                    at(3, Transform::Identity),
                ]),
                Node::Product { .. } => unreachable!("products own no parameters"),
            }
        }
        TransformSpec { groups }
    }

    pub fn len(&self) -> usize {
        self.groups.last().map_or(0, |g| g.offset + g.len)
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    /// Records the transforms of `raw`. Elementwise transforms run as one
    /// vectorized op per kind, softmax once per group.
    pub fn record(&self, tape: &mut Tape, raw: Var) -> Result<Var> {
        let mut parts = Vec::new();
        let mut position = vec![0usize; self.len()];
        let mut placed = 0;
        for kind in [Transform::Identity, Transform::Softplus, Transform::Stability, Transform::Tanh] {
            let index: Vec<usize> = self
                .groups
                .iter()
                .filter(|g| g.transform == kind)
                .flat_map(|g| g.offset..g.offset + g.len)
                .collect();
            if index.is_empty() {
                continue;
            }
            for (j, &i) in index.iter().enumerate() {
                position[i] = placed + j;
            }
            placed += index.len();
            let x = tape.gather(raw, index)?;
            let y = match kind {
                Transform::Identity => x,
                Transform::Softplus => {
                    let s = tape.softplus(x)?;
                    tape.shift(s, SCALE_FLOOR)?
                }
                Transform::Stability => {
                    let s = tape.sigmoid(x)?;
                    let s = tape.scale(s, STABILITY_MAX - STABILITY_MIN)?;
                    tape.shift(s, STABILITY_MIN)?
                }
                Transform::Tanh => tape.tanh(x)?,
                Transform::Softmax => unreachable!(),
            };
            parts.push(y);
        }
        for g in self.groups.iter().filter(|g| g.transform == Transform::Softmax) {
            let x = tape.slice(raw, g.offset, g.len)?;
            parts.push(tape.softmax(x)?);
            for j in 0..g.len {
                position[g.offset + j] = placed + j;
            }
            placed += g.len;
        }
        let joined = tape.concat(&parts)?;
        Ok(tape.gather(joined, position)?)
    }
}

/// Shape and location of one dense layer inside the flat weight vector.
/// Weights are row-major `rows x cols`, followed by `rows` biases.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerShape {
    pub rows: usize,
    pub cols: usize,
    pub offset: usize,
}

impl LayerShape {
    fn weights(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.rows * self.cols
    }

    fn biases(&self) -> std::ops::Range<usize> {
        let start = self.offset + self.rows * self.cols;
        start..start + self.rows
    }

    fn size(&self) -> usize {
        self.rows * (self.cols + 1)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamNet {
    pub config: NetConfig,
    pub input_dim: usize,
    /// Trunk layers, gate head, leaf head.
    pub layers: [LayerShape; 4],
    pub transforms: TransformSpec,
    /// Hash of the circuit the heads are laid out for.
    pub circuit_hash: String,
    pub theta: Vec<f64>,
}

fn inverse_softplus(y: f64) -> f64 {
    // log(exp(y) - 1), stable for large y
    y + (-(-y).exp_m1()).ln()
}

impl ParamNet {
    /// Fresh network for `circuit` over `num_vars` variables.
    ///
    /// Trunk weights are He-uniform, head weights the same scaled by
    /// `head_gain`, trunk biases zero. Head biases put the transformed
    /// parameters at uniform mixtures and categoricals, the configured
    /// stability and scale, zero skew, and locations spread uniformly over
    /// `[-location_spread, location_spread]`.
    pub fn init(config: NetConfig, circuit: &CircuitGraph, num_vars: usize, seed: u64) -> Result<ParamNet> {
        if config.hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        if !(config.init_stability > STABILITY_MIN && config.init_stability < STABILITY_MAX) {
            return Err(Error::Config(format!(
                "initial stability {} must lie strictly inside ({STABILITY_MIN}, {STABILITY_MAX})",
                config.init_stability
            )));
        }
        if !(config.init_scale > SCALE_FLOOR) {
            return Err(Error::Config(format!("initial scale must exceed {SCALE_FLOOR}")));
        }
        let transforms = TransformSpec::for_circuit(circuit);
        let gate_len = circuit.sum_nodes().map(|(_, _, s)| s.len).sum::<usize>();
        let leaf_len = circuit.num_params - gate_len;
        let input_dim = num_vars * num_vars;
        let [h1, h2] = config.hidden;
        let mut offset = 0;
        let mut layer = |rows, cols| {
            let l = LayerShape { rows, cols, offset };
            offset += l.size();
            l
        };
        let layers = [layer(h1, input_dim), layer(h2, h1), layer(gate_len, h2), layer(leaf_len, h2)];
        let mut theta = vec![0.0; offset];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for (i, l) in layers.iter().enumerate() {
            let gain = if i < 2 { 1.0 } else { config.head_gain };
            let bound = gain * (6.0 / l.cols as f64).sqrt();
            for w in &mut theta[l.weights()] {
                *w = rng.random_range(-bound..=bound);
            }
        }
        let raw_bias = |g: &TransformGroup, rng: &mut ChaCha8Rng| match g.transform {
            Transform::Identity => rng.random_range(-config.location_spread..=config.location_spread),
            Transform::Softplus => inverse_softplus(config.init_scale - SCALE_FLOOR),
            Transform::Stability => {
                let s = (config.init_stability - STABILITY_MIN) / (STABILITY_MAX - STABILITY_MIN);
                (s / (1.0 - s)).ln()
            }
            Transform::Tanh | Transform::Softmax => 0.0,
        };
        let mut raw = vec![0.0; circuit.num_params];
        for g in &transforms.groups {
            for j in 0..g.len {
                raw[g.offset + j] = raw_bias(g, &mut rng);
            }
        }
        let (gate_bias, leaf_bias) = raw.split_at(gate_len);
        theta[layers[2].biases()].copy_from_slice(gate_bias);
        theta[layers[3].biases()].copy_from_slice(leaf_bias);
        Ok(ParamNet {
            config,
            input_dim,
            layers,
            transforms,
            circuit_hash: circuit.hash(),
            theta,
        })
    }

    pub fn num_outputs(&self) -> usize {
        self.layers[2].rows + self.layers[3].rows
    }

    fn dense(&self, tape: &mut Tape, theta: Var, layer: usize, x: Var) -> Result<Var> {
        let l = self.layers[layer];
        let w = tape.slice(theta, l.offset, l.rows * l.cols)?;
        let b = tape.slice(theta, l.biases().start, l.rows)?;
        let y = tape.matvec(w, l.rows, l.cols, x)?;
        Ok(tape.add(y, b)?)
    }

    /// Records the forward pass; `theta` must hold [`ParamNet::theta`]'s
    /// shape. Returns the transformed circuit parameters.
    pub fn record(&self, tape: &mut Tape, theta: Var, adjacency: &AdjacencyMatrix) -> Result<Var> {
        let input = adjacency.flatten();
        if input.len() != self.input_dim {
            return Err(Error::Dimension {
                expected: self.input_dim,
                got: input.len(),
            });
        }
        let x = tape.constant(input);
        let h = self.dense(tape, theta, 0, x)?;
        let h = tape.relu(h)?;
        let h = self.dense(tape, theta, 1, h)?;
        let h = tape.relu(h)?;
        let gate = self.dense(tape, theta, 2, h)?;
        let leaf = self.dense(tape, theta, 3, h)?;
        let raw = tape.concat(&[gate, leaf])?;
        self.transforms.record(tape, raw)
    }

    /// Circuit parameters for one adjacency matrix.
    pub fn predict(&self, adjacency: &AdjacencyMatrix) -> Result<Vec<f64>> {
        let mut tape = Tape::new();
        let theta = tape.constant(self.theta.clone());
        let out = self.record(&mut tape, theta, adjacency)?;
        Ok(tape.value(out).to_vec())
    }

    /// Errors unless the network was built for `circuit`.
    pub fn check_circuit(&self, circuit: &CircuitGraph) -> Result<()> {
        if self.circuit_hash != circuit.hash() {
            return Err(Error::Schema(format!(
                "network was built for circuit {}, not {}",
                self.circuit_hash,
                circuit.hash()
            )));
        }
        Ok(())
    }
}
