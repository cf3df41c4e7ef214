use proptest::prelude::*;

use super::*;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[test]
fn causal_health_has_seven_variables() {
    let m = build_model(ModelName::CausalHealth);
    assert_eq!(m.names(), ["A", "F", "H", "M", "D1", "D2", "D3"]);
    assert!(m.variables[4..].iter().all(|v| v.kind.is_discrete()));
    for d in 4..7 {
        assert_eq!(m.parents(d), vec![0, 1, 2, 3]);
    }
}

#[test]
fn hiring_decision_is_binary_and_student_selection_has_three_levels() {
    let h = build_model(ModelName::Hiring);
    let data = sample(&h, &InterventionSpec::observational(), 5000, 1).unwrap();
    let d = data.column(6);
    assert!(d.iter().all(|&v| v == 0.0 || v == 1.0));
    assert!(d.contains(&0.0) && d.contains(&1.0));

    let s = build_model(ModelName::Student);
    assert_eq!(s.variables[5].kind.codes().unwrap(), vec![0.0, 1.0, 2.0]);
    let data = sample(&s, &InterventionSpec::observational(), 5000, 1).unwrap();
    for code in [0.0, 1.0, 2.0] {
        assert!(data.column(5).contains(&code));
    }
}

#[test]
fn edge_sets_match_the_documented_graphs() {
    let h = build_model(ModelName::Hiring);
    let named: Vec<(String, String)> = h
        .edges
        .iter()
        .map(|&(p, c)| (h.variables[p].name.clone(), h.variables[c].name.clone()))
        .collect();
    for (p, c) in [("Sc", "B"), ("W", "Sk"), ("E", "Sk"), ("Sk", "I"), ("B", "I"), ("I", "D"), ("Sk", "D")] {
        assert!(named.contains(&(p.into(), c.into())), "{p}->{c}");
    }
    for name in ModelName::ALL {
        let m = build_model(name);
        assert!(m.edges.iter().all(|&(p, c)| p < c));
        assert!(m.adjacency().is_dag());
        assert!((0..m.num_vars()).all(|i| !m.adjacency().get(i, i)));
        for v in &m.variables {
            assert!(v.domain_range.0 < v.domain_range.1, "{}", v.name);
            if let VariableKind::Discrete { support } = &v.kind {
                assert!(support.windows(2).all(|w| w[0] < w[1]));
            }
        }
    }
}

#[test]
fn causal_health_age_stays_in_range() {
    let m = build_model(ModelName::CausalHealth);
    let data = sample(&m, &InterventionSpec::observational(), 100_000, 3).unwrap();
    assert_eq!(data.data.dim(), (100_000, 7));
    assert!(data.column(0).iter().all(|&a| (0.0..=100.0).contains(&a)));
    // exactly one diagnosis is active per row
    for r in data.data.rows() {
        assert_eq!(r[4] + r[5] + r[6], 1.0);
    }
}

#[test]
fn perfect_intervention_forces_constant() {
    let m = build_model(ModelName::Student);
    let spec = InterventionSpec::fixed(&[(2, 10.0)]);
    let data = sample(&m, &spec, 4, 9).unwrap();
    assert!(data.column(2).iter().all(|&v| v == 10.0));
}

#[test]
fn hiring_work_experience_mean() {
    let m = build_model(ModelName::Hiring);
    let data = sample(&m, &InterventionSpec::observational(), 100_000, 5).unwrap();
    let w = mean(&data.column(1));
    assert!((w - 2.0).abs() < 0.05, "mean W = {w}");
}

#[test]
fn root_noise_means_within_three_standard_errors() {
    let n = 100_000;
    let se = |sd: f64| 3.0 * sd / (n as f64).sqrt();
    let h = sample(&build_model(ModelName::Hiring), &InterventionSpec::observational(), n, 8).unwrap();
    // W = ChiSq(4) / 2: mean 2, sd sqrt(8) / 2
    assert!((mean(&h.column(1)) - 2.0).abs() < se(8f64.sqrt() / 2.0));
    // E uniform on 0..=6: mean 3, variance (7^2 - 1) / 12
    assert!((mean(&h.column(2)) - 3.0).abs() < se((48.0f64 / 12.0).sqrt()));

    let s = sample(&build_model(ModelName::Student), &InterventionSpec::observational(), n, 8).unwrap();
    assert!((mean(&s.column(2)) - 10.0).abs() < se(3.0));
    // C = 0.8 Q + 0.2 M + Pareto(3), E[Q] = 2.5 - 2, Pareto mean 3/2
    let c_mean = 0.8 * 0.5 + 0.2 * 10.0 + 1.5;
    let c_var: f64 = 0.64 * (9.0 + 2.0) + 0.04 * 9.0 + 3.0 / 4.0;
    assert!((mean(&s.column(3)) - c_mean).abs() < se(c_var.sqrt()));

    let c = sample(&build_model(ModelName::CausalHealth), &InterventionSpec::observational(), n, 8).unwrap();
    assert!((mean(&c.column(0)) - 50.0).abs() < se(100.0 / 12f64.sqrt()));
}

#[test]
fn intervening_on_motivation_raises_test_scores() {
    let m = build_model(ModelName::Student);
    let obs = sample(&m, &InterventionSpec::observational(), 50_000, 2).unwrap();
    let hi = sample(&m, &InterventionSpec::fixed(&[(2, 15.0)]), 50_000, 2).unwrap();
    assert!(mean(&hi.column(4)) > mean(&obs.column(4)));
}

#[test]
fn sampling_is_deterministic() {
    let m = build_model(ModelName::Hiring);
    let spec = InterventionSpec::uniform(&[3]);
    let a = sample(&m, &spec, 500, 77).unwrap();
    let b = sample(&m, &spec, 500, 77).unwrap();
    assert_eq!(a, b);
    let c = sample(&m, &spec, 500, 78).unwrap();
    assert_ne!(a.data, c.data);
}

#[test]
fn invalid_interventions_are_rejected() {
    let m = build_model(ModelName::Hiring);
    let out_of_range = InterventionSpec::fixed(&[(1, 1e6)]);
    assert!(matches!(sample(&m, &out_of_range, 10, 0), Err(Error::Intervention(_))));
    let off_support = InterventionSpec::fixed(&[(2, 2.5)]);
    assert!(sample(&m, &off_support, 10, 0).is_err());
    let twice = InterventionSpec::fixed(&[(2, 1.0), (2, 2.0)]);
    assert!(twice.validate(&m).is_err());
    assert!(sample(&m, &InterventionSpec::observational(), 0, 0).is_err());
}

#[test]
fn mutilation_examples() {
    let s = build_model(ModelName::Student);
    let q = s.var_index("Q").unwrap();
    let adj = mutilate(&s, &InterventionSpec::fixed(&[(q, 1.0)])).unwrap();
    assert!((0..6).all(|i| !adj.get(i, q)));
    assert!(adj.get(q, 3) && adj.get(q, 4));

    let h = build_model(ModelName::Hiring);
    assert_eq!(mutilate(&h, &InterventionSpec::observational()).unwrap().edge_count(), 7);

    let (c, t) = (s.var_index("C").unwrap(), s.var_index("T").unwrap());
    let adj = mutilate(&s, &InterventionSpec::uniform(&[c, t])).unwrap();
    assert!((0..6).all(|i| !adj.get(i, c) && !adj.get(i, t)));
}

proptest! {
    #[test]
    fn mutilate_removes_exactly_incoming_edges(mask in 0u8..16, which in 0usize..3) {
        let m = build_model(ModelName::ALL[which]);
        let targets: Vec<usize> = m.interveneable.iter().enumerate()
            .filter(|(i, _)| mask & (1 << i) != 0).map(|(_, &v)| v).collect();
        let adj = mutilate(&m, &InterventionSpec::uniform(&targets)).unwrap();
        let base = m.adjacency();
        for i in 0..m.num_vars() {
            for j in 0..m.num_vars() {
                let expect = base.get(i, j) && !targets.contains(&j);
                prop_assert_eq!(adj.get(i, j), expect);
            }
        }
        prop_assert!(adj.is_dag());
    }
}

#[test]
fn student_corpus_has_five_datasets() {
    let m = build_model(ModelName::Student);
    let corpus = make_training_corpus(&m, 50, 1).unwrap();
    let labels: Vec<String> = corpus.iter().map(|d| d.intervention.label(&m)).collect();
    assert_eq!(labels, ["observational", "do(Q)", "do(M)", "do(C)", "do(T)"]);
}

#[test]
fn corpus_split_is_eighty_twenty() {
    let m = build_model(ModelName::CausalHealth);
    for d in make_training_corpus(&m, 1000, 4).unwrap() {
        let (train, test) = d.train_test_split();
        assert_eq!((train.len(), test.len()), (800, 200));
    }
}

#[test]
fn hiring_education_intervention_uses_support_codes() {
    let m = build_model(ModelName::Hiring);
    let corpus = make_training_corpus(&m, 2000, 4).unwrap();
    let do_e = corpus
        .iter()
        .find(|d| d.intervention.targets() == vec![2])
        .unwrap();
    let e = do_e.column(2);
    assert!(e.iter().all(|&v| v.fract() == 0.0 && (0.0..=6.0).contains(&v)));
    // every code appears when values are drawn uniformly
    for code in 0..=6 {
        assert!(e.contains(&(code as f64)));
    }
    // continuous value-sampled interventions vary per row within the range
    let do_b = corpus.iter().find(|d| d.intervention.targets() == vec![4]).unwrap();
    let (lo, hi) = m.variables[4].domain_range;
    let b = do_b.column(4);
    assert!(b.iter().all(|&v| v >= lo && v <= hi));
    assert!(b[0] != b[1]);
}

#[test]
fn frozen_calibration_reproduces() {
    for name in ModelName::ALL {
        let fresh = equations::skeleton(name, ScmOptions::default());
        let recomputed = calibrate(&fresh, CALIBRATION_ROWS, CALIBRATION_SEED);
        assert_eq!(recomputed, build_model(name).calibration, "{name}");
    }
}

#[test]
fn variance_option_recalibrates() {
    let opts = ScmOptions {
        normal_scale: NormalScale::Variance,
        ..ScmOptions::default()
    };
    let m = build_model_with(ModelName::Student, opts);
    // M = N(10, var 3): the 99th percentile shrinks relative to sd 3
    assert!(m.variables[2].domain_range.1 < build_model(ModelName::Student).variables[2].domain_range.1);
}

#[test]
fn csv_round_trip_is_exact() {
    let m = build_model(ModelName::Hiring);
    let d = sample(&m, &InterventionSpec::uniform(&[2]), 200, 12).unwrap();
    let dir = tempfile::tempdir().unwrap();
    d.write(dir.path(), "do_E", &m).unwrap();
    let text = std::fs::read_to_string(dir.path().join("do_E.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "Sc,W,E,Sk,B,I,D");
    assert_eq!(lines.next().unwrap(), "d:10,c,d:7,c,c,c,d:2");
    assert!(!text.contains('e'), "no exponent notation");
    let back = Dataset::read(dir.path(), "do_E", &m).unwrap();
    assert_eq!(back, d);
}
