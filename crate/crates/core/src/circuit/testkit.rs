//! Hand-built graphs for unit tests.

use super::{CircuitGraph, LeafFamily, Node, Slot};

pub(crate) fn leaf(var: usize, family: LeafFamily, offset: usize) -> Node {
    let len = family.num_params();
    Node::Leaf {
        var,
        family,
        slot: Slot { offset, len },
    }
}

pub(crate) fn sum(children: Vec<usize>, offset: usize) -> Node {
    let len = children.len();
    Node::Sum {
        children,
        slot: Slot { offset, len },
    }
}

/// Hand-written graph; scopes and parameter count are derived.
pub(crate) fn graph(num_vars: usize, nodes: Vec<Node>) -> CircuitGraph {
    let mut scopes: Vec<Vec<usize>> = Vec::new();
    for n in &nodes {
        let mut s: Vec<usize> = match n {
            Node::Leaf { var, .. } => vec![*var],
            _ => n.children().iter().flat_map(|&c| scopes[c].clone()).collect(),
        };
        s.sort_unstable();
        s.dedup();
        scopes.push(s);
    }
    let num_params = nodes.iter().filter_map(|n| n.slot()).map(|s| s.offset + s.len).max().unwrap_or(0);
    let g = CircuitGraph {
        num_vars,
        root: nodes.len() - 1,
        nodes,
        scopes,
        num_params,
    };
    g.validate().unwrap();
    g
}
