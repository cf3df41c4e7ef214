use super::*;
use crate::circuit::{ContinuousLeaf, StructureConfig};
use crate::paramnet::NetConfig;
use crate::scm::{build_model, make_training_corpus, Dataset};
use crate::trainer::{TrainConfig, TrainingCorpus};

fn untrained(name: ModelName) -> (Checkpoint, Vec<Dataset>) {
    let model = build_model(name);
    let corpus = TrainingCorpus::split(&make_training_corpus(&model, 150, 2).unwrap()).unwrap();
    let structure = StructureConfig {
        depth: 1,
        repetitions: 2,
        sums: 2,
        leaves: 2,
        continuous_leaf: ContinuousLeaf::AlphaStable,
    };
    let net = NetConfig {
        hidden: [8, 8],
        ..NetConfig::default()
    };
    let ckpt = Checkpoint::new(model, structure, net, TrainConfig::default(), &corpus).unwrap();
    (ckpt, corpus.test)
}

fn quick() -> EvalConfig {
    EvalConfig {
        rows: 300,
        k_eval: 32,
        max_accuracy_rows: 20,
        threads: 2,
        ..EvalConfig::default()
    }
}

#[test]
fn causal_health_table_layout() {
    let (ckpt, heldout) = untrained(ModelName::CausalHealth);
    let table = accuracy_table(&ckpt, &heldout, &quick()).unwrap();
    assert_eq!(table.targets, ["D1", "D2", "D3"]);
    let labels: Vec<&str> = table.rows.iter().map(|r| r.intervention.as_str()).collect();
    assert_eq!(labels, ["observational", "do(A)", "do(F)", "do(H)", "do(M)"]);
    for row in &table.rows {
        for cell in row.cells.iter().flatten() {
            assert!((0.0..=1.0).contains(&cell.accuracy));
            assert!((0.0..=1.0).contains(&cell.baseline));
            assert_eq!(cell.count, 20);
        }
    }
}

#[test]
fn hiring_education_is_na_under_its_own_intervention() {
    let (ckpt, heldout) = untrained(ModelName::Hiring);
    let table = accuracy_table(&ckpt, &heldout, &quick()).unwrap();
    assert_eq!(table.targets, ["E", "D"]);
    assert!(table.cell("do(E)", "E").is_none());
    assert!(table.cell("do(E)", "D").is_some());
    assert_eq!(table.cell("observational", "E").unwrap().top_k, 3);
    assert_eq!(table.cell("observational", "D").unwrap().top_k, 1);
    let csv = String::from_utf8(table.to_csv().unwrap()).unwrap();
    assert!(csv.lines().any(|l| l == "do(E),E,N/A,N/A,0,N/A"));
}

#[test]
fn single_eval_writes_reproducible_files() {
    let (ckpt, heldout) = untrained(ModelName::Student);
    let cfg = quick();
    let run = |dir: &Path| {
        let single = run_single_intervention_eval(&ckpt, &heldout, &cfg).unwrap();
        let pairs = run_multi_intervention_eval(&ckpt, &default_pairs(&ckpt.model), &cfg).unwrap();
        write_eval(dir, &ckpt, &single, Some(&pairs), Instant::now()).unwrap();
        single
    };
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let single = run(a.path());
    run(b.path());
    // 4 continuous variables under 5 interventions
    assert_eq!(single.grids.len(), 20);
    let mut csvs = 0;
    for entry in walk(a.path()) {
        if entry.extension().is_some_and(|e| e == "csv") {
            let rel = entry.strip_prefix(a.path()).unwrap();
            assert_eq!(std::fs::read(&entry).unwrap(), std::fs::read(b.path().join(rel)).unwrap(), "{rel:?}");
            csvs += 1;
            if rel.starts_with("grids") || rel.starts_with("pairs/") {
                assert_eq!(std::fs::read_to_string(&entry).unwrap().lines().count(), 201);
            }
        }
    }
    // 20 single grids, 8 pair grids, accuracy, cfd, comparison, modes, pairs
    assert_eq!(csvs, 33);
    assert!(a.path().join("grids/do_M__T.json").exists());
    assert!(a.path().join("pairs/do_C_T__M.csv").exists());
}

fn walk(dir: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_dir() {
            out.extend(walk(&p));
        } else {
            out.push(p);
        }
    }
    out.sort();
    out
}

#[test]
fn pairs_are_validated() {
    let (ckpt, _) = untrained(ModelName::Student);
    let m = &ckpt.model;
    assert_eq!(default_pairs(m), vec![(3, 4), (2, 3)]);
    assert_eq!(parse_pair(m, "C,T").unwrap(), (3, 4));
    assert!(parse_pair(m, "C").is_err());
    assert!(parse_pair(m, "C,X").is_err());
    let sc = m.var_index("Sc").unwrap();
    assert!(matches!(
        run_multi_intervention_eval(&ckpt, &[(sc, 3)], &quick()),
        Err(Error::Intervention(_))
    ));
    assert!(run_multi_intervention_eval(&ckpt, &[(3, 3)], &quick()).is_err());

    let mut multi = ckpt.clone();
    multi.trained_interventions.push(InterventionSpec::uniform(&[2, 3]));
    assert!(matches!(
        run_multi_intervention_eval(&multi, &[(3, 4)], &quick()),
        Err(Error::Intervention(_))
    ));
    let hiring = build_model(ModelName::Hiring);
    let names: Vec<(&str, &str)> = default_pairs(&hiring)
        .iter()
        .map(|&(a, b)| (hiring.variables[a].name.as_str(), hiring.variables[b].name.as_str()))
        .collect();
    assert_eq!(names, [("B", "E"), ("Sk", "B")]);
}

fn cell(accuracy: f64) -> Option<AccuracyCell> {
    Some(AccuracyCell {
        accuracy,
        baseline: 0.5,
        count: 10,
        top_k: 1,
    })
}

#[test]
fn comparison_surfaces_the_largest_drop() {
    let single = SingleEval {
        grids: Vec::new(),
        accuracy: AccuracyTable {
            targets: vec!["D1".into(), "D2".into()],
            rows: vec![
                AccuracyRow {
                    intervention: "observational".into(),
                    cells: vec![cell(0.8), cell(0.7)],
                },
                AccuracyRow {
                    intervention: "do(A)".into(),
                    cells: vec![cell(0.85), cell(0.6)],
                },
                AccuracyRow {
                    intervention: "do(M)".into(),
                    cells: vec![None, cell(0.4)],
                },
            ],
        },
        cfd: Vec::new(),
    };
    let c = compare_obs_vs_interventional(&single).unwrap();
    assert_eq!(c.accuracy.len(), 3);
    let worst = c.largest_drop.clone().unwrap();
    assert_eq!((worst.intervention.as_str(), worst.target.as_str()), ("do(M)", "D2"));
    assert!((worst.drop - 0.3).abs() < 1e-12);
    let csv = String::from_utf8(c.to_csv().unwrap()).unwrap();
    assert_eq!(csv.lines().count(), 4);
}

#[test]
fn file_labels_are_path_safe() {
    assert_eq!(file_label("do(C,T)"), "do_C_T");
    assert_eq!(file_label("observational"), "observational");
}

#[test]
fn par_map_keeps_order_and_propagates_errors() {
    let items: Vec<usize> = (0..37).collect();
    let out = par_map(&items, 4, |&i| Ok(i * 2)).unwrap();
    assert_eq!(out, items.iter().map(|i| i * 2).collect::<Vec<_>>());
    let err = par_map(&items, 3, |&i| if i == 20 { Err(Error::Invalid("x".into())) } else { Ok(i) });
    assert!(err.is_err());
}
