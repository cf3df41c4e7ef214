//! The run configuration document.

use std::path::Path;

use chispn::circuit::StructureConfig;
use chispn::evalsuite::EvalConfig;
use chispn::inversion::GridSpec;
use chispn::paramnet::NetConfig;
use chispn::scm::{NormalScale, ScmOptions, HEALTH_BRANCH_THRESHOLD};
use chispn::trainer::TrainConfig;
use chispn::{Error, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmSection {
    /// Rows generated per intervention.
    pub rows: usize,
    pub seed: u64,
    pub normal_scale: NormalScale,
    pub health_branch_threshold: f64,
}

impl Default for ScmSection {
    fn default() -> Self {
        ScmSection {
            rows: 20_000,
            seed: 0,
            normal_scale: NormalScale::StdDev,
            health_branch_threshold: HEALTH_BRANCH_THRESHOLD,
        }
    }
}

impl ScmSection {
    pub fn options(&self) -> ScmOptions {
        ScmOptions {
            normal_scale: self.normal_scale,
            health_branch_threshold: self.health_branch_threshold,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub seed: u64,
    pub standardize: bool,
    pub checkpoint_every: usize,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        TrainSection {
            epochs: t.epochs,
            batch_size: t.batch_size,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
            standardize: t.standardize,
            checkpoint_every: t.checkpoint_every,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SpectralSection {
    /// Frequencies per training step.
    pub k: usize,
    pub eta: f64,
    /// Frequencies for held-out distances.
    pub k_eval: usize,
    pub eval_seed: u64,
}

impl Default for SpectralSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        SpectralSection {
            k: t.frequencies,
            eta: t.eta,
            k_eval: t.eval_frequencies,
            eval_seed: t.eval_seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub rows: usize,
    pub seed: u64,
    pub max_accuracy_rows: usize,
    pub threads: usize,
    /// Pairs such as `"C,T"`; empty uses the dataset's default pairs.
    pub pairs: Vec<String>,
}

impl Default for EvalSection {
    fn default() -> Self {
        let e = EvalConfig::default();
        EvalSection {
            rows: e.rows,
            seed: e.seed,
            max_accuracy_rows: e.max_accuracy_rows,
            threads: e.threads,
            pairs: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub scm: ScmSection,
    pub structure: StructureConfig,
    pub paramnet: NetConfig,
    pub train: TrainSection,
    pub spectral: SpectralSection,
    pub inversion: GridSpec,
    pub eval: EvalSection,
}

impl RunConfig {
    /// Defaults, or the document at `path` (missing fields take defaults).
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let cfg = match path {
            None => RunConfig::default(),
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                serde_json::from_str(&text)
                    .map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
            }
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.scm.rows == 0 {
            return Err(Error::Config("scm.rows must be positive".into()));
        }
        self.train_config().validate()?;
        self.eval_config().validate()
    }

    pub fn train_config(&self) -> TrainConfig {
        let t = &self.train;
        TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            frequencies: self.spectral.k,
            eta: self.spectral.eta,
            learning_rate: t.learning_rate,
            beta1: t.beta1,
            beta2: t.beta2,
            epsilon: t.epsilon,
            seed: t.seed,
            standardize: t.standardize,
            checkpoint_every: t.checkpoint_every,
            eval_frequencies: self.spectral.k_eval,
            eval_seed: self.spectral.eval_seed,
        }
    }

    pub fn eval_config(&self) -> EvalConfig {
        EvalConfig {
            rows: self.eval.rows,
            seed: self.eval.seed,
            k_eval: self.spectral.k_eval,
            eta: self.spectral.eta,
            grid: self.inversion,
            max_accuracy_rows: self.eval.max_accuracy_rows,
            threads: self.eval.threads,
        }
    }
}
