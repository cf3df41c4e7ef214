use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{CircuitGraph, LeafFamily, Node, Slot};
use crate::error::{Error, Result};
use crate::scm::VariableKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ContinuousLeaf {
    #[default]
    AlphaStable,
    Normal,
}

/// Shape of the random region graph.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StructureConfig {
    /// Number of binary splits from the full variable set down to leaf regions.
    pub depth: usize,
    /// Independent random partitions mixed at the root.
    pub repetitions: usize,
    /// Sum nodes per internal region.
    pub sums: usize,
    /// Leaves per variable in each leaf region.
    pub leaves: usize,
    pub continuous_leaf: ContinuousLeaf,
}

impl Default for StructureConfig {
    fn default() -> Self {
        StructureConfig {
            depth: 2,
            repetitions: 4,
            sums: 4,
            leaves: 4,
            continuous_leaf: ContinuousLeaf::AlphaStable,
        }
    }
}

struct Builder {
    nodes: Vec<Node>,
    scopes: Vec<Vec<usize>>,
}

const UNASSIGNED: Slot = Slot { offset: 0, len: 0 };

impl Builder {
    fn push(&mut self, node: Node, scope: Vec<usize>) -> usize {
        self.nodes.push(node);
        self.scopes.push(scope);
        self.nodes.len() - 1
    }

    fn product(&mut self, children: Vec<usize>) -> usize {
        let mut scope: Vec<usize> = children.iter().flat_map(|&c| self.scopes[c].clone()).collect();
        scope.sort_unstable();
        self.push(Node::Product { children }, scope)
    }

    fn sum(&mut self, children: Vec<usize>) -> usize {
        let scope = self.scopes[children[0]].clone();
        self.push(
            Node::Sum {
                children,
                slot: UNASSIGNED,
            },
            scope,
        )
    }

    /// Output nodes of the region over `vars`.
    fn region(&mut self, vars: &[usize], level: usize, cfg: &StructureConfig, families: &[LeafFamily]) -> Vec<usize> {
        if level == cfg.depth || vars.len() == 1 {
            let leaves: Vec<Vec<usize>> = vars
                .iter()
                .map(|&v| {
                    (0..cfg.leaves)
                        .map(|_| {
                            self.push(
                                Node::Leaf {
                                    var: v,
                                    family: families[v].clone(),
                                    slot: UNASSIGNED,
                                },
                                vec![v],
                            )
                        })
                        .collect()
                })
                .collect();
            return (0..cfg.leaves)
                .map(|i| {
                    if vars.len() == 1 {
                        leaves[0][i]
                    } else {
                        self.product(leaves.iter().map(|l| l[i]).collect())
                    }
                })
                .collect();
        }
        let (left, right) = vars.split_at(vars.len() / 2);
        let left = self.region(left, level + 1, cfg, families);
        let right = self.region(right, level + 1, cfg, families);
        let mut products = Vec::with_capacity(left.len() * right.len());
        for &l in &left {
            for &r in &right {
                products.push(self.product(vec![l, r]));
            }
        }
        if level == 0 {
            return products;
        }
        (0..cfg.sums).map(|_| self.sum(products.clone())).collect()
    }
}

/// Random region-graph circuit over variables of the given kinds.
///
/// Each repetition shuffles the variables and halves them recursively
/// `depth` times. Leaf regions hold `leaves` leaves per variable, combined
/// into that many factorized products; every internal region below the top
/// takes all pairwise products of its two children's outputs and mixes them
/// with `sums` sum nodes. The root mixes the top-level products of all
/// repetitions.
pub fn build_random_structure(kinds: &[VariableKind], cfg: &StructureConfig, seed: u64) -> Result<CircuitGraph> {
    let d = kinds.len();
    if d < 2 {
        return Err(Error::Structure(format!("need at least 2 variables, got {d}")));
    }
    if cfg.depth >= usize::BITS as usize || (1usize << cfg.depth) > d {
        return Err(Error::Structure(format!(
            "depth {} exceeds log2 of the variable count {d}",
            cfg.depth
        )));
    }
    if cfg.repetitions == 0 || cfg.sums == 0 || cfg.leaves == 0 {
        return Err(Error::Structure("repetitions, sums and leaves must be positive".into()));
    }
    let families: Vec<LeafFamily> = kinds
        .iter()
        .map(|k| match k {
            VariableKind::Discrete { support } => LeafFamily::Categorical { codes: support.clone() },
            VariableKind::Continuous => match cfg.continuous_leaf {
                ContinuousLeaf::AlphaStable => LeafFamily::AlphaStable,
                ContinuousLeaf::Normal => LeafFamily::Normal,
            },
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut b = Builder {
        nodes: Vec::new(),
        scopes: Vec::new(),
    };
    let mut top = Vec::new();
    for _ in 0..cfg.repetitions {
        let mut vars: Vec<usize> = (0..d).collect();
        vars.shuffle(&mut rng);
        top.extend(b.region(&vars, 0, cfg, &families));
    }
    let root = b.sum(top);

    let mut offset = 0;
    for node in b.nodes.iter_mut() {
        if let Node::Sum { children, slot } = node {
            *slot = Slot {
                offset,
                len: children.len(),
            };
            offset += children.len();
        }
    }
    for node in b.nodes.iter_mut() {
        if let Node::Leaf { family, slot, .. } = node {
            *slot = Slot {
                offset,
                len: family.num_params(),
            };
            offset += family.num_params();
        }
    }
    let graph = CircuitGraph {
        num_vars: d,
        nodes: b.nodes,
        root,
        scopes: b.scopes,
        num_params: offset,
    };
    graph.validate()?;
    Ok(graph)
}
