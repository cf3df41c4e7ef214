//! Sum-product circuits whose nodes compute characteristic functions.
//!
//! A [`CircuitGraph`] holds structure only. Parameters live in a flat vector
//! laid out by [`Slot`]s: every sum node owns its mixture weights and every
//! leaf its family parameters. Sum slots come first, in node order, followed
//! by leaf slots.

mod build;
mod leaf;
mod record;

pub use build::{build_random_structure, ContinuousLeaf, StructureConfig};
pub use leaf::{leaf_cf, LeafFamily, STABLE_CUTOFF};
pub use record::{complex_mul, ComplexVar};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

pub type Complex = num_complex::Complex64;

/// Range of the flat parameter vector owned by one node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub offset: usize,
    pub len: usize,
}

impl Slot {
    pub fn range(self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum Node {
    /// Convex mixture; `slot` holds one weight per child.
    Sum { children: Vec<usize>, slot: Slot },
    Product { children: Vec<usize> },
    Leaf { var: usize, family: LeafFamily, slot: Slot },
}

impl Node {
    pub fn children(&self) -> &[usize] {
        match self {
            Node::Sum { children, .. } | Node::Product { children } => children,
            Node::Leaf { .. } => &[],
        }
    }

    pub fn slot(&self) -> Option<Slot> {
        match self {
            Node::Sum { slot, .. } | Node::Leaf { slot, .. } => Some(*slot),
            Node::Product { .. } => None,
        }
    }
}

/// Nodes are stored children-first, so a forward pass in index order
/// visits every child before its parents.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircuitGraph {
    pub num_vars: usize,
    pub nodes: Vec<Node>,
    pub root: usize,
    /// Sorted variable indices per node.
    pub scopes: Vec<Vec<usize>>,
    pub num_params: usize,
}

impl CircuitGraph {
    /// `(node, slot)` for every parameterized node, in parameter order.
    pub fn param_layout(&self) -> Vec<(usize, Slot)> {
        let mut layout: Vec<(usize, Slot)> = self
            .nodes
            .iter()
            .enumerate()
            .filter_map(|(i, n)| n.slot().map(|s| (i, s)))
            .collect();
        layout.sort_by_key(|(_, s)| s.offset);
        layout
    }

    pub fn sum_nodes(&self) -> impl Iterator<Item = (usize, &[usize], Slot)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Sum { children, slot } => Some((i, children.as_slice(), *slot)),
            _ => None,
        })
    }

    pub fn leaves(&self) -> impl Iterator<Item = (usize, usize, &LeafFamily, Slot)> {
        self.nodes.iter().enumerate().filter_map(|(i, n)| match n {
            Node::Leaf { var, family, slot } => Some((i, *var, family, *slot)),
            _ => None,
        })
    }

    /// Checks completeness, decomposability, scopes, ordering and layout.
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Structure(msg));
        if self.nodes.is_empty() || self.root >= self.nodes.len() {
            return bad("root index outside the node list".into());
        }
        if self.scopes.len() != self.nodes.len() {
            return bad(format!("{} scopes for {} nodes", self.scopes.len(), self.nodes.len()));
        }
        for (i, node) in self.nodes.iter().enumerate() {
            let scope = match node {
                Node::Leaf { var, .. } => {
                    if *var >= self.num_vars {
                        return bad(format!("leaf {i} refers to variable {var}"));
                    }
                    vec![*var]
                }
                Node::Sum { children, .. } | Node::Product { children } => {
                    if children.is_empty() {
                        return bad(format!("node {i} has no children"));
                    }
                    if let Some(&c) = children.iter().find(|&&c| c >= i) {
                        return bad(format!("node {i} has child {c} that is not earlier in the order"));
                    }
                    if matches!(node, Node::Sum { .. }) {
                        let first = &self.scopes[children[0]];
                        if children.iter().any(|&c| &self.scopes[c] != first) {
                            return bad(format!("sum node {i} is not complete"));
                        }
                        first.clone()
                    } else {
                        let mut union: Vec<usize> =
                            children.iter().flat_map(|&c| self.scopes[c].iter().copied()).collect();
                        let total = union.len();
                        union.sort_unstable();
                        union.dedup();
                        if union.len() != total {
                            return bad(format!("product node {i} is not decomposable"));
                        }
                        union
                    }
                }
            };
            if scope != self.scopes[i] {
                return bad(format!("stored scope of node {i} disagrees with its children"));
            }
        }
        if self.scopes[self.root] != (0..self.num_vars).collect::<Vec<_>>() {
            return bad("root scope is not the full variable set".into());
        }
        let mut next = 0;
        for (i, slot) in self.param_layout() {
            let expected = match &self.nodes[i] {
                Node::Sum { children, .. } => children.len(),
                Node::Leaf { family, .. } => family.num_params(),
                Node::Product { .. } => unreachable!(),
            };
            if slot.len != expected {
                return bad(format!("node {i} owns {} parameters, needs {expected}", slot.len));
            }
            if slot.offset != next {
                return bad(format!("parameter slots overlap or leave a gap at offset {next}"));
            }
            next += slot.len;
        }
        if next != self.num_params {
            return bad(format!("slots cover {next} of {} parameters", self.num_params));
        }
        Ok(())
    }

    /// Checks a flat parameter vector against every node's constraints.
    pub fn validate_params(&self, params: &[f64]) -> Result<()> {
        if params.len() != self.num_params {
            return Err(Error::Dimension {
                expected: self.num_params,
                got: params.len(),
            });
        }
        for node in &self.nodes {
            match node {
                Node::Sum { slot, .. } => leaf::check_simplex(&params[slot.range()], "sum weights")?,
                Node::Leaf { family, slot, .. } => family.check_params(&params[slot.range()])?,
                Node::Product { .. } => {}
            }
        }
        Ok(())
    }

    /// Characteristic function of the circuit at one frequency vector.
    pub fn evaluate_cf(&self, params: &[f64], t: &[f64]) -> Result<Complex> {
        self.validate_params(params)?;
        self.check_freq(t)?;
        Ok(self.forward(params, t)[self.root])
    }

    /// [`evaluate_cf`](Self::evaluate_cf) over many frequency vectors,
    /// validating the parameters once.
    pub fn evaluate_cf_batch(&self, params: &[f64], freqs: &[Vec<f64>]) -> Result<Vec<Complex>> {
        self.validate_params(params)?;
        freqs
            .iter()
            .map(|t| {
                self.check_freq(t)?;
                Ok(self.forward(params, t)[self.root])
            })
            .collect()
    }

    /// CF of the marginal over `keep`: frequencies of all other variables
    /// are set to zero.
    pub fn marginalize_scope(&self, params: &[f64], t: &[f64], keep: &[usize]) -> Result<Complex> {
        self.check_freq(t)?;
        let masked: Vec<f64> = t
            .iter()
            .enumerate()
            .map(|(j, &x)| if keep.contains(&j) { x } else { 0.0 })
            .collect();
        self.evaluate_cf(params, &masked)
    }

    fn check_freq(&self, t: &[f64]) -> Result<()> {
        if t.len() != self.num_vars {
            return Err(Error::Dimension {
                expected: self.num_vars,
                got: t.len(),
            });
        }
        if t.iter().any(|x| !x.is_finite()) {
            return Err(Error::Invalid("frequency vector has non-finite entries".into()));
        }
        Ok(())
    }

    /// Values of every node, children first.
    fn forward(&self, params: &[f64], t: &[f64]) -> Vec<Complex> {
        let mut values: Vec<Complex> = Vec::with_capacity(self.nodes.len());
        for node in &self.nodes {
            let v = match node {
                Node::Leaf { var, family, slot } => leaf::leaf_cf_unchecked(family, &params[slot.range()], t[*var]),
                Node::Product { children } => children.iter().map(|&c| values[c]).product(),
                Node::Sum { children, slot } => {
                    // dividing by the weight total keeps phi(0) = 1 exact
                    let w = &params[slot.range()];
                    let total: f64 = w.iter().sum();
                    children.iter().zip(w).map(|(&c, &wj)| values[c] * wj).sum::<Complex>() / total
                }
            };
            values.push(v);
        }
        values
    }

    /// A valid parameter vector drawn at random: uniform-simplex mixture
    /// weights and probabilities, stability in `[0.3, 2]`, skewness in
    /// `[-1, 1]`, scales in `[0.1, 3]`, locations in `[-3, 3]`.
    pub fn random_params(&self, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; self.num_params];
        let simplex = |rng: &mut ChaCha8Rng, out: &mut [f64]| {
            for x in out.iter_mut() {
                *x = -rng.random::<f64>().max(1e-12).ln();
            }
            let total: f64 = out.iter().sum();
            out.iter_mut().for_each(|x| *x /= total);
        };
        for node in &self.nodes {
            match node {
                Node::Sum { slot, .. } => simplex(&mut rng, &mut params[slot.range()]),
                Node::Leaf { family, slot, .. } => {
                    let p = &mut params[slot.range()];
                    match family {
                        LeafFamily::Normal => {
                            p[0] = rng.random_range(-3.0..3.0);
                            p[1] = rng.random_range(0.1..3.0);
                        }
                        LeafFamily::Categorical { .. } => simplex(&mut rng, p),
                        LeafFamily::AlphaStable => {
                            p[0] = rng.random_range(0.3..=2.0);
                            p[1] = rng.random_range(-1.0..=1.0);
                            p[2] = rng.random_range(0.1..3.0);
                            p[3] = rng.random_range(-3.0..3.0);
                        }
                    }
                }
                Node::Product { .. } => {}
            }
        }
        params
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    /// Parses and validates a circuit document.
    pub fn from_json(text: &str) -> Result<CircuitGraph> {
        let graph: CircuitGraph = serde_json::from_str(text)?;
        graph.validate()?;
        Ok(graph)
    }

    /// Hex SHA-256 of the compact JSON document; identifies a structure.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("circuit serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
pub(crate) mod testkit;
#[cfg(test)]
mod tests;
