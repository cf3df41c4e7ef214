//! CFD minimization: per-intervention batching, standardization, Adam
//! updates and checkpoints.
//!
//! Every optimizer step takes one batch from one intervention's training
//! rows (interventions visited round-robin), conditions the network on that
//! intervention's mutilated graph, and minimizes the squared CF distance
//! between the circuit and the batch ECF at freshly drawn frequencies.

mod adam;
mod standardize;

pub use adam::Adam;
pub use standardize::Standardizer;

use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, TapeError};
use crate::circuit::{build_random_structure, CircuitGraph, Complex, StructureConfig};
use crate::error::{Error, Result};
use crate::io;
use crate::paramnet::{NetConfig, ParamNet};
use crate::scm::{derive_seed, mutilate, Dataset, InterventionSpec, StructuralModel};
use crate::spectral::{cfd_squared, ecf_batch, record_cfd, sample_frequencies, sample_frequencies_with};
use crate::SCHEMA_VERSION;

const FREQUENCY_STREAM: u64 = 0x6672_6571;
const BATCH_STREAM: u64 = 0x6261_7463;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Rows per ECF batch.
    pub batch_size: usize,
    /// Frequencies drawn per step.
    pub frequencies: usize,
    /// Standard deviation of the frequency distribution.
    pub eta: f64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub standardize: bool,
    /// Epochs between checkpoint writes.
    pub checkpoint_every: usize,
    /// Frequencies used for held-out CFD.
    pub eval_frequencies: usize,
    pub eval_seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 512,
            frequencies: 32,
            eta: 1.0,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            seed: 0,
            standardize: true,
            checkpoint_every: 5,
            eval_frequencies: 256,
            eval_seed: 7,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.into()));
        if self.epochs == 0 {
            return fail("epochs must be positive");
        }
        if self.batch_size < 32 {
            return fail("batch_size must be at least 32");
        }
        if self.frequencies == 0 || self.eval_frequencies == 0 {
            return fail("frequency counts must be positive");
        }
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail("eta must be positive");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be positive");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return fail("adam betas must lie in [0, 1)");
        }
        if !(self.epsilon > 0.0) {
            return fail("adam epsilon must be positive");
        }
        if self.checkpoint_every == 0 {
            return fail("checkpoint_every must be positive");
        }
        Ok(())
    }
}

/// Train and held-out halves of a corpus, aligned by intervention.
#[derive(Debug, Clone)]
pub struct TrainingCorpus {
    pub train: Vec<Dataset>,
    pub test: Vec<Dataset>,
}

impl TrainingCorpus {
    pub fn split(corpus: &[Dataset]) -> Result<TrainingCorpus> {
        if corpus.is_empty() {
            return Err(Error::Data("empty training corpus".into()));
        }
        let names = &corpus[0].names;
        if corpus.iter().any(|d| &d.names != names || d.kinds != corpus[0].kinds) {
            return Err(Error::Schema("datasets in one corpus must share the variable schema".into()));
        }
        let (train, test) = corpus.iter().map(Dataset::train_test_split).unzip();
        Ok(TrainingCorpus { train, test })
    }
}

/// Everything needed to resume training or evaluate a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u32,
    pub model: StructuralModel,
    pub structure: StructureConfig,
    pub train: TrainConfig,
    pub circuit: CircuitGraph,
    pub net: ParamNet,
    pub adam: Adam,
    /// Optimizer steps taken.
    pub step: u64,
    /// Completed epochs.
    pub epoch: usize,
    pub standardizer: Standardizer,
    /// Interventions of the training corpus, in round-robin order.
    pub trained_interventions: Vec<InterventionSpec>,
}

impl Checkpoint {
    /// Untrained model: circuit and network seeded from `train.seed`,
    /// standardizer fitted on the pooled training rows.
    pub fn new(
        model: StructuralModel,
        structure: StructureConfig,
        net_config: NetConfig,
        train: TrainConfig,
        corpus: &TrainingCorpus,
    ) -> Result<Checkpoint> {
        train.validate()?;
        let circuit = build_random_structure(&model.kinds(), &structure, derive_seed(train.seed, 1))?;
        let net = ParamNet::init(net_config, &circuit, model.num_vars(), derive_seed(train.seed, 2))?;
        let standardizer = if train.standardize {
            Standardizer::fit(&corpus.train.iter().collect::<Vec<_>>())?
        } else {
            Standardizer::identity(model.num_vars())
        };
        if corpus.train[0].names != model.names() {
            return Err(Error::Schema(format!("corpus columns do not match {}", model.name.as_str())));
        }
        let adam = Adam::new(net.theta.len(), train.learning_rate, train.beta1, train.beta2, train.epsilon);
        Ok(Checkpoint {
            schema_version: SCHEMA_VERSION,
            model,
            structure,
            train,
            circuit,
            net,
            adam,
            step: 0,
            epoch: 0,
            standardizer,
            trained_interventions: corpus.train.iter().map(|d| d.intervention.clone()).collect(),
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_json(path, self)
    }

    /// Loads and validates a checkpoint.
    pub fn load(path: &Path) -> Result<Checkpoint> {
        let ckpt: Checkpoint = io::read_json(path)?;
        if ckpt.schema_version != SCHEMA_VERSION {
            return Err(Error::Schema(format!(
                "checkpoint schema {} is not the supported {SCHEMA_VERSION}",
                ckpt.schema_version
            )));
        }
        ckpt.circuit.validate()?;
        ckpt.net.check_circuit(&ckpt.circuit)?;
        if ckpt.net.theta.len() != ckpt.adam.m.len() {
            return Err(Error::Schema("optimizer state does not match the network".into()));
        }
        Ok(ckpt)
    }

    /// Circuit parameters conditioned on `spec`'s mutilated graph.
    pub fn params_for(&self, spec: &InterventionSpec) -> Result<Vec<f64>> {
        self.net.predict(&mutilate(&self.model, spec)?)
    }

    /// Model CF under `spec` at standardized-space frequencies.
    pub fn model_cf(&self, spec: &InterventionSpec, freqs: &[Vec<f64>]) -> Result<Vec<Complex>> {
        let params = self.params_for(spec)?;
        self.circuit.evaluate_cf_batch(&params, freqs)
    }

    /// Standardized copy of a dataset's rows.
    pub fn standardize(&self, data: &Dataset) -> Result<Array2<f64>> {
        if data.names != self.model.names() {
            return Err(Error::Schema(format!("dataset columns {:?} do not match the model", data.names)));
        }
        Ok(self.standardizer.apply(&data.data))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub step: u64,
    pub epoch: usize,
    pub intervention: String,
    pub loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    pub epoch: usize,
    /// `(intervention label, mean training loss)` in corpus order.
    pub train_cfd: Vec<(String, f64)>,
    pub heldout_cfd: Vec<(String, f64)>,
}

impl EpochReport {
    pub fn mean_heldout(&self) -> f64 {
        mean(self.heldout_cfd.iter().map(|x| x.1))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    /// Held-out CFD before the first step of this run.
    pub start_heldout: Vec<(String, f64)>,
    pub epochs: Vec<EpochReport>,
    pub log: Vec<LogRow>,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn mean_start_heldout(&self) -> f64 {
        mean(self.start_heldout.iter().map(|x| x.1))
    }

    pub fn final_heldout(&self) -> Option<f64> {
        self.epochs.last().map(EpochReport::mean_heldout)
    }

    pub fn log_csv(&self) -> Result<Vec<u8>> {
        let rows = self.log.iter().map(|r| {
            vec![
                r.step.to_string(),
                r.epoch.to_string(),
                r.intervention.clone(),
                format!("{}", r.loss),
            ]
        });
        io::csv_bytes(&["step", "epoch", "intervention", "loss"], rows)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
    s / n.max(1) as f64
}

/// Result of one optimizer step, before the update was applied.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub loss: f64,
    pub freqs: Vec<Vec<f64>>,
    pub ecf: Vec<Complex>,
}

/// One Adam step on a standardized batch drawn under `spec`.
pub fn train_step(ckpt: &mut Checkpoint, batch: ArrayView2<f64>, spec: &InterventionSpec) -> Result<StepOutcome> {
    let cfg = ckpt.train;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed ^ FREQUENCY_STREAM, ckpt.step));
    let freqs = sample_frequencies_with(&mut rng, ckpt.model.num_vars(), cfg.frequencies, cfg.eta)?.points;
    let ecf = ecf_batch(batch, &freqs)?;
    let adjacency = mutilate(&ckpt.model, spec)?;

    let mut tape = Tape::new();
    let theta = tape.param(ckpt.net.theta.clone());
    let recorded = (|| -> Result<_> {
        let psi = ckpt.net.record(&mut tape, theta, &adjacency)?;
        let cf = ckpt.circuit.record_cf(&mut tape, psi, &freqs)?;
        let loss = record_cfd(&mut tape, cf, &ecf)?;
        Ok(loss)
    })();
    let loss = match recorded {
        Ok(v) if tape.scalar_value(v).is_finite() => v,
        Ok(_) | Err(Error::Tape(TapeError::NonFinite { .. })) => {
            return Err(non_finite(ckpt, spec, &freqs, &ecf));
        }
        Err(e) => return Err(e),
    };
    let grad = tape.backward(loss)?.wrt_len(theta, ckpt.net.theta.len());
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(non_finite(ckpt, spec, &freqs, &ecf));
    }
    ckpt.adam.step(&mut ckpt.net.theta, &grad);
    ckpt.step += 1;
    Ok(StepOutcome {
        loss: tape.scalar_value(loss),
        freqs,
        ecf,
    })
}

fn non_finite(ckpt: &Checkpoint, spec: &InterventionSpec, freqs: &[Vec<f64>], ecf: &[Complex]) -> Error {
    let model = ckpt
        .model_cf(spec, freqs)
        .unwrap_or_else(|_| vec![Complex::new(f64::NAN, f64::NAN); freqs.len()]);
    Error::NonFiniteLoss {
        step: ckpt.step,
        dump: freqs
            .iter()
            .zip(model)
            .zip(ecf)
            .map(|((t, m), e)| (t.clone(), [m.re, m.im], [e.re, e.im]))
            .collect(),
    }
}

/// `(dataset, batch)` pairs of one epoch: batches of each dataset's shuffled
/// rows, interleaved round-robin across datasets.
fn epoch_schedule(ckpt: &Checkpoint, sizes: &[usize]) -> (Vec<Vec<usize>>, Vec<(usize, usize)>) {
    let b = ckpt.train.batch_size;
    let orders: Vec<Vec<usize>> = sizes
        .iter()
        .enumerate()
        .map(|(i, &n)| {
            let seed = derive_seed(derive_seed(ckpt.train.seed ^ BATCH_STREAM, ckpt.epoch as u64), i as u64);
            let mut order: Vec<usize> = (0..n).collect();
            order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
            order
        })
        .collect();
    let counts: Vec<usize> = sizes.iter().map(|n| n.div_ceil(b)).collect();
    let rounds = counts.iter().copied().max().unwrap_or(0);
    let mut schedule = Vec::new();
    for r in 0..rounds {
        for (i, &c) in counts.iter().enumerate() {
            if r < c {
                schedule.push((i, r));
            }
        }
    }
    (orders, schedule)
}

/// Runs the remaining epochs of `ckpt.train.epochs`. `on_epoch` is called
/// after every completed epoch.
pub fn train(
    ckpt: &mut Checkpoint,
    corpus: &TrainingCorpus,
    mut on_epoch: impl FnMut(&Checkpoint, &EpochReport) -> Result<()>,
) -> Result<TrainReport> {
    let started = Instant::now();
    let specs: Vec<InterventionSpec> = corpus.train.iter().map(|d| d.intervention.clone()).collect();
    if specs != ckpt.trained_interventions {
        return Err(Error::Schema("corpus interventions differ from the checkpoint's".into()));
    }
    let labels: Vec<String> = specs.iter().map(|s| s.label(&ckpt.model)).collect();
    let train_std: Vec<Array2<f64>> = corpus
        .train
        .iter()
        .map(|d| ckpt.standardize(d))
        .collect::<Result<_>>()?;
    if train_std.iter().any(|d| d.nrows() == 0) {
        return Err(Error::Data("an intervention has no training rows".into()));
    }
    let heldout = |ckpt: &Checkpoint| -> Result<Vec<(String, f64)>> {
        corpus
            .test
            .iter()
            .zip(&labels)
            .map(|(d, l)| Ok((l.clone(), heldout_or_train_cfd(ckpt, d)?)))
            .collect()
    };
    let start_heldout = heldout(ckpt)?;
    let mut report = TrainReport {
        start_heldout,
        epochs: Vec::new(),
        log: Vec::new(),
        wall_clock_secs: 0.0,
    };
    let sizes: Vec<usize> = train_std.iter().map(Array2::nrows).collect();
    while ckpt.epoch < ckpt.train.epochs {
        let (orders, schedule) = epoch_schedule(ckpt, &sizes);
        let mut sums = vec![(0.0, 0usize); specs.len()];
        for (i, r) in schedule {
            let b = ckpt.train.batch_size;
            let rows = &orders[i][r * b..((r + 1) * b).min(sizes[i])];
            let batch = train_std[i].select(Axis(0), rows);
            let outcome = train_step(ckpt, batch.view(), &specs[i])?;
            sums[i].0 += outcome.loss;
            sums[i].1 += 1;
            report.log.push(LogRow {
                step: ckpt.step,
                epoch: ckpt.epoch + 1,
                intervention: labels[i].clone(),
                loss: outcome.loss,
            });
        }
        ckpt.epoch += 1;
        let epoch = EpochReport {
            epoch: ckpt.epoch,
            train_cfd: labels
                .iter()
                .zip(&sums)
                .map(|(l, (s, n))| (l.clone(), s / (*n).max(1) as f64))
                .collect(),
            heldout_cfd: heldout(ckpt)?,
        };
        on_epoch(ckpt, &epoch)?;
        report.epochs.push(epoch);
    }
    report.wall_clock_secs = started.elapsed().as_secs_f64();
    Ok(report)
}

/// Held-out CFD with the checkpoint's evaluation settings; an empty split
/// counts as zero.
fn heldout_or_train_cfd(ckpt: &Checkpoint, test: &Dataset) -> Result<f64> {
    if test.is_empty() {
        return Ok(0.0);
    }
    evaluate_cfd(ckpt, test, ckpt.train.eval_frequencies, ckpt.train.eta, ckpt.train.eval_seed)
}

/// CFD between the model conditioned on `data`'s intervention and the ECF of
/// all of `data`'s rows, at `k_eval` frequencies drawn from `seed`.
pub fn evaluate_cfd(ckpt: &Checkpoint, data: &Dataset, k_eval: usize, eta: f64, seed: u64) -> Result<f64> {
    let freqs = sample_frequencies(ckpt.model.num_vars(), k_eval, eta, seed)?.points;
    cfd_at(ckpt, ckpt.standardize(data)?.view(), &data.intervention, &freqs)
}

/// CFD on standardized rows at given frequencies.
pub fn cfd_at(ckpt: &Checkpoint, rows: ArrayView2<f64>, spec: &InterventionSpec, freqs: &[Vec<f64>]) -> Result<f64> {
    let ecf = ecf_batch(rows, freqs)?;
    let model = ckpt.model_cf(spec, freqs)?;
    cfd_squared(&model, &ecf)
}
