use std::f64::consts::PI;

use proptest::prelude::*;

use super::testkit::*;
use super::*;
use crate::autodiff::Tape;
use crate::scm::{build_model, ModelName, VariableKind};

fn close(a: Complex, b: Complex, tol: f64) -> bool {
    (a - b).norm() <= tol
}

#[test]
fn leaf_examples() {
    let z = leaf_cf(&LeafFamily::Normal, &[0.0, 1.0], 1.0).unwrap();
    assert!(close(z, Complex::new((-0.5f64).exp(), 0.0), 1e-15));

    let cat = LeafFamily::Categorical { codes: vec![1, 2] };
    let z = leaf_cf(&cat, &[0.5, 0.5], PI).unwrap();
    assert!(z.norm() < 1e-15);

    let z = leaf_cf(&LeafFamily::AlphaStable, &[2.0, 0.7, 1.0, 0.0], 1.0).unwrap();
    assert!(close(z, Complex::new((-1.0f64).exp(), 0.0), 1e-12));
}

#[test]
fn cauchy_leaf_matches_closed_form() {
    for t in [-3.0, -0.5, 0.25, 2.0] {
        let z = leaf_cf(&LeafFamily::AlphaStable, &[1.0, 0.0, 1.0, 0.0], t).unwrap();
        assert!(close(z, Complex::new((-f64::abs(t)).exp(), 0.0), 1e-15));
    }
}

#[test]
fn every_family_is_one_at_zero() {
    let cases = [
        (LeafFamily::Normal, vec![1.5, 0.3]),
        (LeafFamily::Categorical { codes: vec![0, 3, 7] }, vec![0.2, 0.3, 0.5]),
        (LeafFamily::AlphaStable, vec![1.0, 0.9, 2.0, -1.0]),
        (LeafFamily::AlphaStable, vec![0.4, -0.3, 0.5, 2.0]),
    ];
    for (family, p) in &cases {
        assert_eq!(leaf_cf(family, p, 0.0).unwrap(), Complex::new(1.0, 0.0));
    }
}

#[test]
fn leaf_rejects_domain_violations() {
    assert!(leaf_cf(&LeafFamily::Normal, &[0.0, 0.0], 1.0).is_err());
    assert!(leaf_cf(&LeafFamily::Normal, &[0.0], 1.0).is_err());
    assert!(leaf_cf(&LeafFamily::AlphaStable, &[2.1, 0.0, 1.0, 0.0], 1.0).is_err());
    assert!(leaf_cf(&LeafFamily::AlphaStable, &[1.5, 1.2, 1.0, 0.0], 1.0).is_err());
    assert!(leaf_cf(&LeafFamily::AlphaStable, &[1.5, 0.0, -1.0, 0.0], 1.0).is_err());
    let cat = LeafFamily::Categorical { codes: vec![0, 1] };
    assert!(leaf_cf(&cat, &[0.6, 0.6], 1.0).is_err());
    assert!(leaf_cf(&cat, &[1.2, -0.2], 1.0).is_err());
}

#[test]
fn default_structure_over_causal_health_is_valid() {
    let m = build_model(ModelName::CausalHealth);
    let g = build_random_structure(&m.kinds(), &StructureConfig::default(), 3).unwrap();
    g.validate().unwrap();
    assert_eq!(g.num_vars, 7);
    for (_, var, family, _) in g.leaves() {
        match &m.variables[var].kind {
            VariableKind::Continuous => assert_eq!(*family, LeafFamily::AlphaStable),
            VariableKind::Discrete { support } => assert_eq!(*family, LeafFamily::Categorical { codes: support.clone() }),
        }
    }
    // sum slots precede leaf slots
    let layout = g.param_layout();
    let first_leaf = layout.iter().position(|(i, _)| matches!(g.nodes[*i], Node::Leaf { .. })).unwrap();
    assert!(layout[first_leaf..].iter().all(|(i, _)| matches!(g.nodes[*i], Node::Leaf { .. })));
}

#[test]
fn minimal_structure_is_a_product_under_a_sum() {
    let kinds = vec![VariableKind::Continuous; 2];
    let cfg = StructureConfig {
        depth: 1,
        repetitions: 1,
        sums: 1,
        leaves: 1,
        continuous_leaf: ContinuousLeaf::Normal,
    };
    let g = build_random_structure(&kinds, &cfg, 0).unwrap();
    assert_eq!(g.nodes.len(), 4);
    let Node::Sum { children, .. } = &g.nodes[g.root] else {
        panic!("root is not a sum")
    };
    assert_eq!(children.len(), 1);
    let Node::Product { children } = &g.nodes[children[0]] else {
        panic!("expected a product")
    };
    assert_eq!(children.len(), 2);
    assert!(children.iter().all(|&c| matches!(g.nodes[c], Node::Leaf { .. })));
}

#[test]
fn structure_is_deterministic_and_seed_dependent() {
    let kinds = build_model(ModelName::Student).kinds();
    let cfg = StructureConfig::default();
    let a = build_random_structure(&kinds, &cfg, 11).unwrap();
    let b = build_random_structure(&kinds, &cfg, 11).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.hash(), b.hash());
    let c = build_random_structure(&kinds, &cfg, 12).unwrap();
    assert_ne!(a.hash(), c.hash());
}

#[test]
fn structure_rejects_bad_shapes() {
    let kinds = vec![VariableKind::Continuous; 3];
    let deep = StructureConfig {
        depth: 2,
        ..StructureConfig::default()
    };
    assert!(matches!(build_random_structure(&kinds, &deep, 0), Err(Error::Structure(_))));
    assert!(build_random_structure(&kinds[..1], &StructureConfig::default(), 0).is_err());
    let empty = StructureConfig {
        sums: 0,
        ..StructureConfig::default()
    };
    assert!(build_random_structure(&vec![VariableKind::Continuous; 4], &empty, 0).is_err());
}

#[test]
fn validator_catches_broken_graphs() {
    let normal = || LeafFamily::Normal;
    // sum over different scopes
    let mut g = CircuitGraph {
        num_vars: 1,
        nodes: vec![leaf(0, normal(), 2), leaf(0, normal(), 4), sum(vec![0, 1], 0)],
        root: 2,
        scopes: vec![vec![0], vec![0], vec![0]],
        num_params: 6,
    };
    g.validate().unwrap();
    g.num_vars = 2;
    g.nodes[1] = leaf(1, normal(), 4);
    g.scopes[1] = vec![1];
    assert!(g.validate().is_err());

    // product over overlapping scopes
    let g = CircuitGraph {
        num_vars: 1,
        nodes: vec![leaf(0, normal(), 0), leaf(0, normal(), 2), Node::Product { children: vec![0, 1] }],
        root: 2,
        scopes: vec![vec![0], vec![0], vec![0]],
        num_params: 4,
    };
    assert!(g.validate().unwrap_err().to_string().contains("decomposable"));

    // overlapping parameter slots
    let g = CircuitGraph {
        num_vars: 2,
        nodes: vec![leaf(0, normal(), 0), leaf(1, normal(), 1), Node::Product { children: vec![0, 1] }],
        root: 2,
        scopes: vec![vec![0], vec![1], vec![0, 1]],
        num_params: 4,
    };
    assert!(g.validate().is_err());

    // child after parent
    let g = CircuitGraph {
        num_vars: 1,
        nodes: vec![sum(vec![1], 0), leaf(0, normal(), 1)],
        root: 0,
        scopes: vec![vec![0], vec![0]],
        num_params: 3,
    };
    assert!(g.validate().is_err());
}

#[test]
fn parameter_validation() {
    let g = graph(
        1,
        vec![
            leaf(0, LeafFamily::Normal, 2),
            leaf(0, LeafFamily::AlphaStable, 4),
            sum(vec![0, 1], 0),
        ],
    );
    let good = [0.3, 0.7, 0.0, 1.0, 1.5, 0.0, 1.0, 0.0];
    g.validate_params(&good).unwrap();
    let mut bad = good;
    bad[0] = 0.4;
    assert!(g.validate_params(&bad).is_err());
    let mut bad = good;
    bad[4] = 0.0;
    assert!(g.validate_params(&bad).is_err());
    assert!(matches!(g.validate_params(&good[..7]), Err(Error::Dimension { .. })));
    assert!(g.evaluate_cf(&good, &[1.0, 2.0]).is_err());
}

#[test]
fn independent_product_factorizes() {
    let g = graph(
        2,
        vec![
            leaf(0, LeafFamily::Normal, 0),
            leaf(1, LeafFamily::Normal, 2),
            Node::Product { children: vec![0, 1] },
        ],
    );
    let p = [0.0, 1.0, 0.0, 1.0];
    let z = g.evaluate_cf(&p, &[1.0, 1.0]).unwrap();
    assert!(close(z, Complex::new((-1.0f64).exp(), 0.0), 1e-15));

    // marginalizing onto the first variable leaves its own CF
    let p = [0.5, 2.0, -1.0, 0.7];
    let m = g.marginalize_scope(&p, &[0.8, 3.0], &[0]).unwrap();
    let direct = leaf_cf(&LeafFamily::Normal, &p[..2], 0.8).unwrap();
    assert_eq!(m, direct);
    assert_eq!(g.marginalize_scope(&p, &[0.0, 3.0], &[0]).unwrap(), Complex::new(1.0, 0.0));
    assert_eq!(
        g.marginalize_scope(&p, &[0.8, 3.0], &[0, 1]).unwrap(),
        g.evaluate_cf(&p, &[0.8, 3.0]).unwrap()
    );
}

#[test]
fn mixture_matches_hand_evaluation() {
    let g = graph(
        1,
        vec![
            leaf(0, LeafFamily::Normal, 2),
            leaf(0, LeafFamily::Normal, 4),
            sum(vec![0, 1], 0),
        ],
    );
    let z = g.evaluate_cf(&[0.3, 0.7, 0.0, 1.0, 0.0, 2.0], &[1.0]).unwrap();
    let expected = 0.3 * (-0.5f64).exp() + 0.7 * (-2.0f64).exp();
    assert!((z.re - expected).abs() < 1e-15 && z.im == 0.0);
    assert!((z.re - 0.27671).abs() < 1e-4);
}

fn student_circuit(continuous_leaf: ContinuousLeaf) -> CircuitGraph {
    let cfg = StructureConfig {
        continuous_leaf,
        ..StructureConfig::default()
    };
    build_random_structure(&build_model(ModelName::Student).kinds(), &cfg, 5).unwrap()
}

#[test]
fn cf_is_one_at_origin() {
    for leaf in [ContinuousLeaf::AlphaStable, ContinuousLeaf::Normal] {
        let g = student_circuit(leaf);
        for seed in 0..10 {
            let p = g.random_params(seed);
            assert_eq!(g.evaluate_cf(&p, &[0.0; 6]).unwrap(), Complex::new(1.0, 0.0));
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn modulus_bound_and_hermitian_symmetry(
        seed in any::<u64>(),
        t in prop::collection::vec(-6.0f64..6.0, 6),
    ) {
        let g = student_circuit(ContinuousLeaf::AlphaStable);
        let p = g.random_params(seed);
        let z = g.evaluate_cf(&p, &t).unwrap();
        prop_assert!(z.norm() <= 1.0 + 1e-9);
        let neg: Vec<f64> = t.iter().map(|x| -x).collect();
        let w = g.evaluate_cf(&p, &neg).unwrap();
        prop_assert!((w - z.conj()).norm() <= 1e-12);
    }

    #[test]
    fn tape_matches_plain_evaluation(
        seed in any::<u64>(),
        normal in any::<bool>(),
        t in prop::collection::vec(prop::collection::vec(-4.0f64..4.0, 6), 1..5),
    ) {
        let leaf = if normal { ContinuousLeaf::Normal } else { ContinuousLeaf::AlphaStable };
        let g = student_circuit(leaf);
        let p = g.random_params(seed);
        let mut tape = Tape::new();
        let pv = tape.param(p.clone());
        let out = g.record_cf(&mut tape, pv, &t).unwrap();
        for (j, tj) in t.iter().enumerate() {
            let z = g.evaluate_cf(&p, tj).unwrap();
            prop_assert!((tape.value(out.re)[j] - z.re).abs() < 1e-12);
            prop_assert!((tape.value(out.im)[j] - z.im).abs() < 1e-12);
        }
    }
}

#[test]
fn tape_handles_unit_stability_and_zero_frequency() {
    let g = graph(
        2,
        vec![
            leaf(0, LeafFamily::AlphaStable, 0),
            leaf(1, LeafFamily::AlphaStable, 4),
            Node::Product { children: vec![0, 1] },
        ],
    );
    let p = vec![1.0, 0.6, 1.3, 0.2, 1.7, -0.4, 0.8, -1.0];
    let freqs = vec![vec![0.0, 0.0], vec![0.7, -1.2], vec![-2.0, 0.0]];
    let mut tape = Tape::new();
    let pv = tape.param(p.clone());
    let out = g.record_cf(&mut tape, pv, &freqs).unwrap();
    for (j, t) in freqs.iter().enumerate() {
        let z = g.evaluate_cf(&p, t).unwrap();
        assert!((tape.value(out.re)[j] - z.re).abs() < 1e-14);
        assert!((tape.value(out.im)[j] - z.im).abs() < 1e-14);
    }
    assert_eq!(tape.value(out.re)[0], 1.0);
    assert_eq!(tape.value(out.im)[0], 0.0);
}

/// Joint mass of an all-categorical circuit, evaluated in the probability
/// domain rather than through characteristic functions.
fn mass(g: &CircuitGraph, p: &[f64], x: &[i64], node: usize) -> f64 {
    match &g.nodes[node] {
        Node::Leaf {
            var,
            family: LeafFamily::Categorical { codes },
            slot,
        } => {
            let j = codes.iter().position(|&c| c == x[*var]).unwrap();
            p[slot.offset + j]
        }
        Node::Leaf { .. } => unreachable!(),
        Node::Product { children } => children.iter().map(|&c| mass(g, p, x, c)).product(),
        Node::Sum { children, slot } => children
            .iter()
            .zip(&p[slot.range()])
            .map(|(&c, &w)| w * mass(g, p, x, c))
            .sum(),
    }
}

#[test]
fn categorical_circuit_matches_enumeration() {
    let supports = [vec![0, 1, 2], vec![0, 1], vec![1, 4, 5, 9]];
    let kinds: Vec<VariableKind> = supports
        .iter()
        .map(|s| VariableKind::Discrete { support: s.clone() })
        .collect();
    let cfg = StructureConfig {
        depth: 1,
        repetitions: 2,
        sums: 2,
        leaves: 3,
        ..StructureConfig::default()
    };
    let g = build_random_structure(&kinds, &cfg, 9).unwrap();
    let p = g.random_params(4);
    let mut all = Vec::new();
    for &a in &supports[0] {
        for &b in &supports[1] {
            for &c in &supports[2] {
                all.push([a, b, c]);
            }
        }
    }
    let total: f64 = all.iter().map(|x| mass(&g, &p, x, g.root)).sum();
    assert!((total - 1.0).abs() < 1e-12);
    for t in [[0.3, -1.1, 0.7], [2.0, 0.5, -0.25], [-3.0, 3.0, 1.5]] {
        let oracle: Complex = all
            .iter()
            .map(|x| {
                let dot: f64 = x.iter().zip(&t).map(|(&xi, ti)| xi as f64 * ti).sum();
                Complex::from_polar(mass(&g, &p, x, g.root), dot)
            })
            .sum();
        let z = g.evaluate_cf(&p, &t).unwrap();
        assert!(close(z, oracle, 1e-10), "{z} vs {oracle}");
    }
}

#[test]
fn json_round_trip_preserves_hash() {
    let g = student_circuit(ContinuousLeaf::AlphaStable);
    let text = g.to_json().unwrap();
    let back = CircuitGraph::from_json(&text).unwrap();
    assert_eq!(back, g);
    assert_eq!(back.hash(), g.hash());
    assert_eq!(g.hash().len(), 64);
    let mut broken: serde_json::Value = serde_json::from_str(&text).unwrap();
    broken["num_params"] = serde_json::json!(1);
    assert!(CircuitGraph::from_json(&broken.to_string()).is_err());
}
