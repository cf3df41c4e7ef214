//! Evaluation runs: density grids, discrete accuracy tables, held-out CFD,
//! multi-intervention generalization and the observational comparison.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inversion::{ConditionedModel, DensityGrid, GridSpec};
use crate::io;
use crate::scm::{derive_seed, sample, Dataset, InterventionSpec, ModelName, StructuralModel, VariableKind};
use crate::trainer::{evaluate_cfd, Checkpoint};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Fresh rows drawn per intervention for grids and pair data.
    pub rows: usize,
    pub seed: u64,
    /// Frequencies for held-out CFD.
    pub k_eval: usize,
    pub eta: f64,
    pub grid: GridSpec,
    /// Cap on held-out rows scored per accuracy cell; 0 scores all.
    pub max_accuracy_rows: usize,
    /// Worker threads for per-row scoring; 0 uses all cores.
    pub threads: usize,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            rows: 4000,
            seed: 99,
            k_eval: 256,
            eta: 1.0,
            grid: GridSpec::default(),
            max_accuracy_rows: 0,
            threads: 0,
        }
    }
}

impl EvalConfig {
    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.k_eval == 0 {
            return Err(Error::Config("eval rows and k_eval must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return Err(Error::Config("eval eta must be positive".into()));
        }
        self.grid.validate()
    }
}

/// Discrete prediction targets of a model's accuracy table.
pub fn accuracy_targets(model: &StructuralModel) -> Vec<usize> {
    let names: &[&str] = match model.name {
        ModelName::CausalHealth => &["D1", "D2", "D3"],
        ModelName::Hiring => &["E", "D"],
        ModelName::Student => &["S"],
    };
    names.iter().map(|n| model.var_index(n).expect("target exists")).collect()
}

/// Education in the hiring model is scored by top-3 accuracy.
pub fn top_k_for(model: &StructuralModel, target: usize) -> usize {
    if model.name == ModelName::Hiring && model.variables[target].name == "E" {
        3
    } else {
        1
    }
}

/// Intervention pairs evaluated by default.
pub fn default_pairs(model: &StructuralModel) -> Vec<(usize, usize)> {
    let names: &[(&str, &str)] = match model.name {
        ModelName::Student => &[("C", "T"), ("M", "C")],
        ModelName::Hiring => &[("B", "E"), ("Sk", "B")],
        ModelName::CausalHealth => &[("F", "M"), ("A", "H")],
    };
    names
        .iter()
        .map(|(a, b)| (model.var_index(a).unwrap(), model.var_index(b).unwrap()))
        .collect()
}

/// Parses `"C,T"` into a pair of variable indices.
pub fn parse_pair(model: &StructuralModel, text: &str) -> Result<(usize, usize)> {
    let parts: Vec<&str> = text.split(',').map(str::trim).collect();
    if parts.len() != 2 {
        return Err(Error::Intervention(format!("pair {text:?} must name two variables")));
    }
    Ok((model.var_index(parts[0])?, model.var_index(parts[1])?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyCell {
    pub accuracy: f64,
    /// Share of the most frequent label(s) among the scored rows.
    pub baseline: f64,
    pub count: usize,
    pub top_k: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyRow {
    pub intervention: String,
    /// One cell per target; `None` where the target is intervened on.
    pub cells: Vec<Option<AccuracyCell>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyTable {
    pub targets: Vec<String>,
    pub rows: Vec<AccuracyRow>,
}

impl AccuracyTable {
    pub fn cell(&self, intervention: &str, target: &str) -> Option<AccuracyCell> {
        let j = self.targets.iter().position(|t| t == target)?;
        self.rows.iter().find(|r| r.intervention == intervention)?.cells[j]
    }

    /// Long format: one line per (intervention, target); N/A cells spelled
    /// out.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let mut rows = Vec::new();
        for row in &self.rows {
            for (target, cell) in self.targets.iter().zip(&row.cells) {
                rows.push(match cell {
                    Some(c) => vec![
                        row.intervention.clone(),
                        target.clone(),
                        format!("{}", c.accuracy),
                        format!("{}", c.baseline),
                        c.count.to_string(),
                        c.top_k.to_string(),
                    ],
                    None => vec![
                        row.intervention.clone(),
                        target.clone(),
                        "N/A".into(),
                        "N/A".into(),
                        "0".into(),
                        "N/A".into(),
                    ],
                });
            }
        }
        io::csv_bytes(&["intervention", "target", "accuracy", "baseline", "count", "top_k"], rows)
    }
}

fn threads(cfg: &EvalConfig) -> usize {
    match cfg.threads {
        0 => std::thread::available_parallelism().map_or(1, |n| n.get()),
        n => n,
    }
}

/// `f` over `items` on scoped threads, results in input order.
fn par_map<T: Sync, R: Send>(items: &[T], workers: usize, f: impl Fn(&T) -> Result<R> + Sync) -> Result<Vec<R>> {
    if items.is_empty() {
        return Ok(Vec::new());
    }
    let chunk = items.len().div_ceil(workers.max(1));
    std::thread::scope(|s| {
        let handles: Vec<_> = items
            .chunks(chunk)
            .map(|part| s.spawn(|| part.iter().map(&f).collect::<Result<Vec<R>>>()))
            .collect();
        let mut out = Vec::with_capacity(items.len());
        for h in handles {
            out.extend(h.join().expect("worker panicked")?);
        }
        Ok(out)
    })
}

/// Accuracy of predicting `target` on `data` with the model conditioned on
/// the dataset's intervention.
pub fn discrete_accuracy(ckpt: &Checkpoint, data: &Dataset, target: usize, cfg: &EvalConfig) -> Result<AccuracyCell> {
    let model = ConditionedModel::new(ckpt, &data.intervention)?;
    let top_k = top_k_for(&ckpt.model, target);
    let n = match cfg.max_accuracy_rows {
        0 => data.len(),
        m => m.min(data.len()),
    };
    if n == 0 {
        return Err(Error::Data("accuracy needs at least one row".into()));
    }
    let rows: Vec<Vec<f64>> = data.data.rows().into_iter().take(n).map(|r| r.to_vec()).collect();
    let hits = par_map(&rows, threads(cfg), |row| {
        let ranked = model.predict_discrete(row, target, top_k)?;
        Ok(ranked.contains(&(row[target] as i64)))
    })?;
    let accuracy = hits.iter().filter(|&&h| h).count() as f64 / n as f64;

    let mut freq: Vec<usize> = match &ckpt.model.variables[target].kind {
        VariableKind::Discrete { support } => support
            .iter()
            .map(|&c| rows.iter().filter(|r| r[target] as i64 == c).count())
            .collect(),
        VariableKind::Continuous => unreachable!("targets are discrete"),
    };
    freq.sort_unstable_by(|a, b| b.cmp(a));
    let baseline = freq.iter().take(top_k).sum::<usize>() as f64 / n as f64;
    Ok(AccuracyCell {
        accuracy,
        baseline,
        count: n,
        top_k,
    })
}

/// Accuracy table over `heldout` datasets (one row each).
pub fn accuracy_table(ckpt: &Checkpoint, heldout: &[Dataset], cfg: &EvalConfig) -> Result<AccuracyTable> {
    let targets = accuracy_targets(&ckpt.model);
    let rows = heldout
        .iter()
        .map(|d| {
            let intervened = d.intervention.targets();
            let cells = targets
                .iter()
                .map(|&t| {
                    if intervened.contains(&t) {
                        Ok(None)
                    } else {
                        discrete_accuracy(ckpt, d, t, cfg).map(Some)
                    }
                })
                .collect::<Result<_>>()?;
            Ok(AccuracyRow {
                intervention: d.intervention.label(&ckpt.model),
                cells,
            })
        })
        .collect::<Result<_>>()?;
    Ok(AccuracyTable {
        targets: targets.iter().map(|&t| ckpt.model.variables[t].name.clone()).collect(),
        rows,
    })
}

/// Grids of every continuous variable under `spec` with uniform draws
/// replaced by representative values, against fresh data.
pub fn intervention_grids(ckpt: &Checkpoint, spec: &InterventionSpec, seed: u64, cfg: &EvalConfig) -> Result<Vec<DensityGrid>> {
    let rep = ckpt.model.representative(spec);
    let reference = sample(&ckpt.model, &rep, cfg.rows, seed)?;
    let model = ConditionedModel::new(ckpt, &rep)?;
    let vars: Vec<usize> = (0..ckpt.model.num_vars())
        .filter(|&j| ckpt.model.variables[j].kind == VariableKind::Continuous)
        .collect();
    par_map(&vars, threads(cfg), |&j| model.density_grid(j, &reference, &cfg.grid))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SingleEval {
    pub grids: Vec<DensityGrid>,
    pub accuracy: AccuracyTable,
    /// Held-out CFD per intervention, in corpus order.
    pub cfd: Vec<(String, f64)>,
}

impl SingleEval {
    pub fn mean_cfd(&self) -> f64 {
        self.cfd.iter().map(|c| c.1).sum::<f64>() / self.cfd.len().max(1) as f64
    }
}

fn check_schema(ckpt: &Checkpoint, data: &[Dataset]) -> Result<()> {
    if ckpt.circuit.hash() != ckpt.net.circuit_hash {
        return Err(Error::Schema("checkpoint network was built for another circuit".into()));
    }
    if let Some(d) = data.iter().find(|d| d.names != ckpt.model.names()) {
        return Err(Error::Schema(format!(
            "dataset columns {:?} do not match the {} checkpoint",
            d.names,
            ckpt.model.name.as_str()
        )));
    }
    Ok(())
}

/// Grids, accuracy table and held-out CFD for every held-out dataset.
pub fn run_single_intervention_eval(ckpt: &Checkpoint, heldout: &[Dataset], cfg: &EvalConfig) -> Result<SingleEval> {
    cfg.validate()?;
    check_schema(ckpt, heldout)?;
    let mut grids = Vec::new();
    for (i, d) in heldout.iter().enumerate() {
        grids.extend(intervention_grids(ckpt, &d.intervention, derive_seed(cfg.seed, i as u64), cfg)?);
    }
    let cfd = heldout
        .iter()
        .map(|d| {
            let v = evaluate_cfd(ckpt, d, cfg.k_eval, cfg.eta, cfg.seed)?;
            Ok((d.intervention.label(&ckpt.model), v))
        })
        .collect::<Result<_>>()?;
    Ok(SingleEval {
        grids,
        accuracy: accuracy_table(ckpt, heldout, cfg)?,
        cfd,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairEval {
    pub label: String,
    pub cfd: f64,
    pub grids: Vec<DensityGrid>,
}

/// Each pair's held-out CFD on fresh value-sampled two-intervention data
/// and its grids at representative values. The checkpoint must have seen
/// single interventions only.
pub fn run_multi_intervention_eval(ckpt: &Checkpoint, pairs: &[(usize, usize)], cfg: &EvalConfig) -> Result<Vec<PairEval>> {
    cfg.validate()?;
    check_schema(ckpt, &[])?;
    if ckpt.trained_interventions.iter().any(|s| s.targets().len() > 1) {
        return Err(Error::Intervention("checkpoint was trained on multi-intervention data".into()));
    }
    let model = &ckpt.model;
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            for v in [a, b] {
                if !model.interveneable.contains(&v) {
                    return Err(Error::Intervention(format!(
                        "{} is not interveneable in {}",
                        model.variables.get(v).map_or("?", |d| d.name.as_str()),
                        model.name.as_str()
                    )));
                }
            }
            if a == b {
                return Err(Error::Intervention("a pair needs two distinct variables".into()));
            }
            let spec = InterventionSpec::uniform(&[a, b]);
            let seed = derive_seed(cfg.seed ^ 0x7061_6972, i as u64);
            let data = sample(model, &spec, cfg.rows, seed)?;
            Ok(PairEval {
                label: spec.label(model),
                cfd: evaluate_cfd(ckpt, &data, cfg.k_eval, cfg.eta, cfg.seed)?,
                grids: intervention_grids(ckpt, &spec, derive_seed(seed, 1), cfg)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccuracyDelta {
    pub intervention: String,
    pub target: String,
    pub observational: f64,
    pub interventional: f64,
    /// `observational - interventional`.
    pub drop: f64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeOffset {
    pub intervention: String,
    pub variable: String,
    pub offset_bins: f64,
    pub observational_offset_bins: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub accuracy: Vec<AccuracyDelta>,
    pub largest_drop: Option<AccuracyDelta>,
    pub modes: Vec<ModeOffset>,
}

impl Comparison {
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let rows = self.accuracy.iter().map(|d| {
            vec![
                d.intervention.clone(),
                d.target.clone(),
                format!("{}", d.observational),
                format!("{}", d.interventional),
                format!("{}", d.drop),
                format!("{}", d.drop.abs()),
                format!("{}", d.baseline),
            ]
        });
        io::csv_bytes(
            &["intervention", "target", "observational", "interventional", "drop", "abs_delta", "baseline"],
            rows,
        )
    }

    pub fn modes_csv(&self) -> Result<Vec<u8>> {
        let rows = self.modes.iter().map(|m| {
            vec![
                m.intervention.clone(),
                m.variable.clone(),
                format!("{}", m.offset_bins),
                format!("{}", m.observational_offset_bins),
            ]
        });
        io::csv_bytes(&["intervention", "variable", "offset_bins", "observational_offset_bins"], rows)
    }
}

/// Accuracy deltas and mode offsets of every interventional row against
/// the observational row.
pub fn compare_obs_vs_interventional(eval: &SingleEval) -> Result<Comparison> {
    let table = &eval.accuracy;
    let obs = table
        .rows
        .iter()
        .find(|r| r.intervention == "observational")
        .ok_or_else(|| Error::Data("comparison needs an observational row".into()))?;
    let mut accuracy = Vec::new();
    for row in table.rows.iter().filter(|r| r.intervention != "observational") {
        for (j, target) in table.targets.iter().enumerate() {
            if let (Some(o), Some(c)) = (obs.cells[j], row.cells[j]) {
                accuracy.push(AccuracyDelta {
                    intervention: row.intervention.clone(),
                    target: target.clone(),
                    observational: o.accuracy,
                    interventional: c.accuracy,
                    drop: o.accuracy - c.accuracy,
                    baseline: c.baseline,
                });
            }
        }
    }
    let largest_drop = accuracy
        .iter()
        .fold(None::<&AccuracyDelta>, |best, d| match best {
            Some(b) if b.drop >= d.drop => Some(b),
            _ => Some(d),
        })
        .cloned();
    let obs_offset = |name: &str| {
        eval.grids
            .iter()
            .find(|g| g.intervention == "observational" && g.name == name)
            .map_or(f64::NAN, DensityGrid::mode_offset_bins)
    };
    let modes = eval
        .grids
        .iter()
        .filter(|g| g.intervention != "observational" && !g.degenerate)
        .map(|g| ModeOffset {
            intervention: g.intervention.clone(),
            variable: g.name.clone(),
            offset_bins: g.mode_offset_bins(),
            observational_offset_bins: obs_offset(&g.name),
        })
        .collect();
    Ok(Comparison {
        accuracy,
        largest_drop,
        modes,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct GridMeta<'a> {
    intervention: &'a str,
    variable: &'a str,
    normalization: f64,
    bin_width: f64,
    degenerate: bool,
    model_mode: f64,
    empirical_mode: f64,
    mode_offset_bins: f64,
}

/// `do(C,T)` becomes `do_C_T`.
fn file_label(label: &str) -> String {
    label
        .chars()
        .filter_map(|c| match c {
            '(' | ',' => Some('_'),
            ')' => None,
            c => Some(c),
        })
        .collect()
}

/// Writes `<label>__<var>.csv` and a JSON sidecar per grid.
pub fn write_grids(dir: &Path, grids: &[DensityGrid]) -> Result<()> {
    for g in grids {
        let stem = format!("{}__{}", file_label(&g.intervention), g.name);
        io::write_atomic(&dir.join(format!("{stem}.csv")), &g.to_csv()?)?;
        let meta = GridMeta {
            intervention: &g.intervention,
            variable: &g.name,
            normalization: g.normalization,
            bin_width: g.bin_width,
            degenerate: g.degenerate,
            model_mode: g.model_mode(),
            empirical_mode: g.empirical_mode(),
            mode_offset_bins: g.mode_offset_bins(),
        };
        io::write_json(&dir.join(format!("{stem}.json")), &meta)?;
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalSummary {
    pub model: ModelName,
    pub circuit_hash: String,
    pub cfd: Vec<(String, f64)>,
    pub mean_cfd: f64,
    pub pairs: Vec<(String, f64)>,
    pub largest_accuracy_drop: Option<AccuracyDelta>,
    pub grid_normalization: Vec<(String, String, f64)>,
    pub runtime_secs: f64,
}

/// Single-intervention artifacts: `grids/`, `accuracy.csv`, `cfd.csv`,
/// `comparison.csv`, `modes.csv`; pair grids under `pairs/` and
/// `pairs.csv` when `pairs` is given; `summary.json` last.
pub fn write_eval(
    dir: &Path,
    ckpt: &Checkpoint,
    single: &SingleEval,
    pairs: Option<&[PairEval]>,
    started: Instant,
) -> Result<EvalSummary> {
    write_grids(&dir.join("grids"), &single.grids)?;
    io::write_atomic(&dir.join("accuracy.csv"), &single.accuracy.to_csv()?)?;
    let cfd_rows = single.cfd.iter().map(|(l, v)| vec![l.clone(), format!("{v}")]);
    io::write_atomic(&dir.join("cfd.csv"), &io::csv_bytes(&["intervention", "cfd"], cfd_rows)?)?;
    let comparison = compare_obs_vs_interventional(single)?;
    io::write_atomic(&dir.join("comparison.csv"), &comparison.to_csv()?)?;
    io::write_atomic(&dir.join("modes.csv"), &comparison.modes_csv()?)?;
    let mut pair_cfd = Vec::new();
    if let Some(pairs) = pairs {
        for p in pairs {
            write_grids(&dir.join("pairs"), &p.grids)?;
            pair_cfd.push((p.label.clone(), p.cfd));
        }
        let rows = pair_cfd.iter().map(|(l, v)| vec![l.clone(), format!("{v}"), format!("{}", single.mean_cfd())]);
        io::write_atomic(
            &dir.join("pairs.csv"),
            &io::csv_bytes(&["pair", "cfd", "mean_single_cfd"], rows)?,
        )?;
    }
    let summary = EvalSummary {
        model: ckpt.model.name,
        circuit_hash: ckpt.circuit.hash(),
        cfd: single.cfd.clone(),
        mean_cfd: single.mean_cfd(),
        pairs: pair_cfd,
        largest_accuracy_drop: comparison.largest_drop,
        grid_normalization: single
            .grids
            .iter()
            .map(|g| (g.intervention.clone(), g.name.clone(), g.normalization))
            .collect(),
        runtime_secs: started.elapsed().as_secs_f64(),
    };
    io::write_json(&dir.join("summary.json"), &summary)?;
    Ok(summary)
}

#[cfg(test)]
mod tests;
