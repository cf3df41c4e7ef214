use std::io::Write;
use std::path::Path;
use std::time::Instant;

use chispn::circuit::Node;
use chispn::evalsuite::{
    default_pairs, parse_pair, run_multi_intervention_eval, run_single_intervention_eval, write_eval,
};
use chispn::inversion::ConditionedModel;
use chispn::io::{read_json, write_atomic, write_json};
use chispn::scm::{
    build_model_with, make_training_corpus, read_corpus_dir, sample, write_corpus_dir, CorpusManifest, ModelName,
};
use chispn::spectral::dump_csv;
use chispn::trainer::{train as run_training, Checkpoint, TrainingCorpus};
use chispn::{Error, Result};
use serde_json::json;

use crate::config::RunConfig;

pub fn generate(mut cfg: RunConfig, dataset: ModelName, rows: Option<usize>, seed: Option<u64>, out: &Path) -> Result<()> {
    cfg.scm.rows = rows.unwrap_or(cfg.scm.rows);
    cfg.scm.seed = seed.unwrap_or(cfg.scm.seed);
    cfg.validate()?;
    let model = build_model_with(dataset, cfg.scm.options());
    let corpus = make_training_corpus(&model, cfg.scm.rows, cfg.scm.seed)?;
    let manifest = write_corpus_dir(out, &model, &corpus, cfg.scm.rows, cfg.scm.seed)?;
    write_json(&out.join("config.json"), &cfg)?;
    for (file, d) in manifest.files.iter().zip(&corpus) {
        println!("{file}.csv\t{} rows", d.len());
    }
    Ok(())
}

pub fn train(
    mut cfg: RunConfig,
    data: &Path,
    resume: Option<&Path>,
    epochs: Option<usize>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    cfg.train.epochs = epochs.unwrap_or(cfg.train.epochs);
    cfg.train.seed = seed.unwrap_or(cfg.train.seed);
    cfg.validate()?;
    let mut ckpt = match resume {
        Some(path) => {
            let mut ckpt = Checkpoint::load(path)?;
            if let Some(e) = epochs {
                ckpt.train.epochs = e;
            }
            ckpt
        }
        None => {
            let manifest: CorpusManifest = read_json(&data.join("corpus.json"))?;
            let model = build_model_with(manifest.model, cfg.scm.options());
            let (_, datasets) = read_corpus_dir(data, &model)?;
            let corpus = TrainingCorpus::split(&datasets)?;
            Checkpoint::new(model, cfg.structure, cfg.paramnet, cfg.train_config(), &corpus)?
        }
    };
    let (_, datasets) = read_corpus_dir(data, &ckpt.model)?;
    let corpus = TrainingCorpus::split(&datasets)?;
    write_json(&out.join("config.json"), &cfg)?;

    let path = out.join("checkpoint.json");
    let every = ckpt.train.checkpoint_every;
    let total = ckpt.train.epochs;
    let outcome = run_training(&mut ckpt, &corpus, |c, e| {
        eprintln!("epoch {}/{total}  held-out CFD {:.6}", e.epoch, e.mean_heldout());
        if e.epoch % every == 0 || e.epoch == total {
            c.save(&path)?;
        }
        Ok(())
    });
    let report = match outcome {
        Ok(r) => r,
        Err(Error::NonFiniteLoss { step, dump }) => {
            let freqs: Vec<Vec<f64>> = dump.iter().map(|d| d.0.clone()).collect();
            let model: Vec<_> = dump.iter().map(|d| chispn::circuit::Complex::new(d.1[0], d.1[1])).collect();
            let ecf: Vec<_> = dump.iter().map(|d| chispn::circuit::Complex::new(d.2[0], d.2[1])).collect();
            let dump_path = out.join("nonfinite_dump.csv");
            write_atomic(&dump_path, &dump_csv(&freqs, &model, &ecf)?)?;
            eprintln!("diagnostic dump written to {}", dump_path.display());
            return Err(Error::NonFiniteLoss { step, dump });
        }
        Err(e) => return Err(e),
    };
    if report.epochs.is_empty() {
        // nothing left to train: still leave a checkpoint behind
        ckpt.save(&path)?;
    }

    let log_path = out.join("log.csv");
    let fresh = report.log_csv()?;
    let log = match std::fs::read(&log_path) {
        Ok(mut old) if resume.is_some() => {
            let body = fresh.iter().position(|&b| b == b'\n').map_or(&fresh[..0], |i| &fresh[i + 1..]);
            old.extend_from_slice(body);
            old
        }
        _ => fresh,
    };
    write_atomic(&log_path, &log)?;
    write_json(&out.join("report.json"), &report)?;
    let last = report.final_heldout().unwrap_or(f64::NAN);
    println!(
        "{} steps, held-out CFD {:.6} -> {:.6}, {:.1}s",
        ckpt.step,
        report.mean_start_heldout(),
        last,
        report.wall_clock_secs
    );
    Ok(())
}

pub fn eval(
    mut cfg: RunConfig,
    checkpoint: &Path,
    data: Option<&Path>,
    dataset: Option<ModelName>,
    pairs: Option<Vec<String>>,
    seed: Option<u64>,
    out: &Path,
) -> Result<()> {
    cfg.eval.seed = seed.unwrap_or(cfg.eval.seed);
    cfg.validate()?;
    let started = Instant::now();
    let ckpt = Checkpoint::load(checkpoint)?;
    if let Some(name) = dataset.filter(|&n| n != ckpt.model.name) {
        return Err(Error::Schema(format!(
            "checkpoint was trained on {}, not {name}",
            ckpt.model.name
        )));
    }
    let ecfg = cfg.eval_config();
    let heldout = match data {
        Some(dir) => TrainingCorpus::split(&read_corpus_dir(dir, &ckpt.model)?.1)?.test,
        None => make_training_corpus(&ckpt.model, ecfg.rows, ecfg.seed)?,
    };
    let single = run_single_intervention_eval(&ckpt, &heldout, &ecfg)?;
    let pair_results = match pairs {
        None => None,
        Some(list) => {
            let list = if list.is_empty() { cfg.eval.pairs.clone() } else { list };
            let parsed = if list.is_empty() {
                default_pairs(&ckpt.model)
            } else {
                list.iter().map(|p| parse_pair(&ckpt.model, p)).collect::<Result<_>>()?
            };
            Some(run_multi_intervention_eval(&ckpt, &parsed, &ecfg)?)
        }
    };
    write_json(&out.join("config.json"), &cfg)?;
    let summary = write_eval(out, &ckpt, &single, pair_results.as_deref(), started)?;
    for row in &single.accuracy.rows {
        let cells: Vec<String> = single
            .accuracy
            .targets
            .iter()
            .zip(&row.cells)
            .map(|(t, c)| match c {
                Some(c) => format!("{t} {:.1}% (baseline {:.1}%)", 100.0 * c.accuracy, 100.0 * c.baseline),
                None => format!("{t} N/A"),
            })
            .collect();
        println!("{:<16} {}", row.intervention, cells.join("  "));
    }
    println!("mean held-out CFD {:.6}", summary.mean_cfd);
    for (label, cfd) in &summary.pairs {
        println!("{label:<16} CFD {cfd:.6}");
    }
    Ok(())
}

pub fn query(
    cfg: RunConfig,
    checkpoint: &Path,
    interventions: &[String],
    var: &str,
    point: Option<f64>,
    seed: Option<u64>,
) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let spec = ckpt.model.parse_fixed(interventions)?;
    let j = ckpt.model.var_index(var)?;
    let model = ConditionedModel::new(&ckpt, &spec)?;
    let mut stdout = std::io::stdout().lock();
    let write_err = |e| Error::io("<stdout>", e);
    match point {
        Some(x) => {
            let d = model.marginal(j, x)?;
            writeln!(stdout, "x,density\n{x},{d}").map_err(write_err)?;
        }
        None => {
            let reference = sample(&ckpt.model, &spec, cfg.eval.rows, seed.unwrap_or(cfg.eval.seed))?;
            let grid = model.density_grid(j, &reference, &cfg.inversion)?;
            stdout.write_all(&grid.to_csv()?).map_err(write_err)?;
        }
    }
    Ok(())
}

pub fn inspect(checkpoint: &Path) -> Result<()> {
    let ckpt = Checkpoint::load(checkpoint)?;
    let count = |f: fn(&Node) -> bool| ckpt.circuit.nodes.iter().filter(|n| f(n)).count();
    let summary = json!({
        "schema_version": ckpt.schema_version,
        "model": ckpt.model.name,
        "variables": ckpt.model.names(),
        "circuit_hash": ckpt.circuit.hash(),
        "nodes": {
            "sum": count(|n| matches!(n, Node::Sum { .. })),
            "product": count(|n| matches!(n, Node::Product { .. })),
            "leaf": count(|n| matches!(n, Node::Leaf { .. })),
        },
        "circuit_params": ckpt.circuit.num_params,
        "network_params": ckpt.net.theta.len(),
        "epoch": ckpt.epoch,
        "step": ckpt.step,
        "trained_interventions": ckpt
            .trained_interventions
            .iter()
            .map(|s| s.label(&ckpt.model))
            .collect::<Vec<_>>(),
        "standardizer": ckpt.standardizer,
        "train": ckpt.train,
    });
    println!("{}", serde_json::to_string_pretty(&summary)?);
    Ok(())
}
