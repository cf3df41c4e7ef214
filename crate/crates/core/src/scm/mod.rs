//! Structural causal models for the three mixed-type benchmark datasets,
//! ancestral sampling under perfect interventions, and adjacency encodings
//! of (mutilated) causal graphs.

mod dataset;
mod equations;
mod frozen;

pub use dataset::{read_corpus_dir, write_corpus_dir, CorpusManifest, Dataset, DatasetMeta};
pub use equations::quantile;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Splits one user seed into independent per-task seeds.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelName {
    CausalHealth,
    Hiring,
    Student,
}

impl ModelName {
    pub const ALL: [ModelName; 3] = [ModelName::CausalHealth, ModelName::Hiring, ModelName::Student];

    pub fn as_str(self) -> &'static str {
        match self {
            ModelName::CausalHealth => "causal-health",
            ModelName::Hiring => "hiring",
            ModelName::Student => "student",
        }
    }
}

impl fmt::Display for ModelName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModelName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "causal-health" | "causal_health" | "health" => Ok(ModelName::CausalHealth),
            "hiring" => Ok(ModelName::Hiring),
            "student" => Ok(ModelName::Student),
            other => Err(Error::Invalid(format!("unknown dataset `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum VariableKind {
    Continuous,
    /// Finite, strictly increasing integer codes.
    Discrete { support: Vec<i64> },
}

impl VariableKind {
    pub fn is_discrete(&self) -> bool {
        matches!(self, VariableKind::Discrete { .. })
    }

    pub fn codes(&self) -> Option<Vec<f64>> {
        match self {
            VariableKind::Continuous => None,
            VariableKind::Discrete { support } => Some(support.iter().map(|&c| c as f64).collect()),
        }
    }

    /// CSV kind tag: `c`, or `d:<k>` for a discrete variable with `k` codes.
    pub fn tag(&self) -> String {
        match self {
            VariableKind::Continuous => "c".into(),
            VariableKind::Discrete { support } => format!("d:{}", support.len()),
        }
    }

    fn contains(&self, value: f64) -> bool {
        match self {
            VariableKind::Continuous => true,
            VariableKind::Discrete { support } => support.iter().any(|&c| c as f64 == value),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariableDef {
    pub name: String,
    pub kind: VariableKind,
    /// Range intervention values are drawn from (`low < high`).
    pub domain_range: (f64, f64),
}

/// How the second argument of `N(mu, s)` in the structural equations is read.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum NormalScale {
    #[default]
    StdDev,
    Variance,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmOptions {
    pub normal_scale: NormalScale,
    /// Causal Health `D'1` branch: the cubic form applies when `A <=` this.
    pub health_branch_threshold: f64,
}

pub const HEALTH_BRANCH_THRESHOLD: f64 = 4.09837;

impl Default for ScmOptions {
    fn default() -> Self {
        ScmOptions {
            normal_scale: NormalScale::StdDev,
            health_branch_threshold: HEALTH_BRANCH_THRESHOLD,
        }
    }
}

/// Constants the structural equations leave open, fixed from a large
/// observational draw: classification cutoffs and per-variable intervention
/// ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub cutoffs: BTreeMap<String, f64>,
    /// `[1st, 99th]` percentile per variable; discrete variables use their
    /// support bounds.
    pub ranges: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralModel {
    pub name: ModelName,
    pub variables: Vec<VariableDef>,
    /// `(parent, child)` pairs; every parent precedes its child.
    pub edges: Vec<(usize, usize)>,
    /// Variables with a single-intervention dataset in the training corpus.
    pub interveneable: Vec<usize>,
    pub calibration: Calibration,
    pub options: ScmOptions,
}

/// Value a perfect intervention assigns.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DoValue {
    Fixed(f64),
    /// Drawn per row, uniformly over the variable's domain range (continuous)
    /// or support (discrete).
    Uniform,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Assignment {
    pub var: usize,
    pub value: DoValue,
}

/// A set of perfect interventions; empty means observational.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InterventionSpec {
    pub assignments: Vec<Assignment>,
}

impl InterventionSpec {
    pub fn observational() -> Self {
        Self::default()
    }

    pub fn fixed(assignments: &[(usize, f64)]) -> Self {
        InterventionSpec {
            assignments: assignments
                .iter()
                .map(|&(var, v)| Assignment {
                    var,
                    value: DoValue::Fixed(v),
                })
                .collect(),
        }
    }

    pub fn uniform(vars: &[usize]) -> Self {
        InterventionSpec {
            assignments: vars
                .iter()
                .map(|&var| Assignment {
                    var,
                    value: DoValue::Uniform,
                })
                .collect(),
        }
    }

    pub fn is_observational(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn targets(&self) -> Vec<usize> {
        self.assignments.iter().map(|a| a.var).collect()
    }

    pub fn fixed_value(&self, var: usize) -> Option<f64> {
        self.assignments.iter().find(|a| a.var == var).and_then(|a| match a.value {
            DoValue::Fixed(v) => Some(v),
            DoValue::Uniform => None,
        })
    }

    /// `observational`, `do(Q)`, `do(C,T)`.
    pub fn label(&self, model: &StructuralModel) -> String {
        if self.is_observational() {
            return "observational".into();
        }
        let names: Vec<&str> = self
            .assignments
            .iter()
            .map(|a| model.variables[a.var].name.as_str())
            .collect();
        format!("do({})", names.join(","))
    }

    /// File-name friendly label: `observational`, `do_Q`, `do_C_T`.
    pub fn file_stem(&self, model: &StructuralModel) -> String {
        if self.is_observational() {
            return "observational".into();
        }
        let names: Vec<&str> = self
            .assignments
            .iter()
            .map(|a| model.variables[a.var].name.as_str())
            .collect();
        format!("do_{}", names.join("_"))
    }

    pub fn validate(&self, model: &StructuralModel) -> Result<()> {
        let n = model.variables.len();
        let mut seen = vec![false; n];
        for a in &self.assignments {
            if a.var >= n {
                return Err(Error::Intervention(format!("variable index {} out of range", a.var)));
            }
            if std::mem::replace(&mut seen[a.var], true) {
                return Err(Error::Intervention(format!(
                    "variable {} assigned twice",
                    model.variables[a.var].name
                )));
            }
            if let DoValue::Fixed(v) = a.value {
                let def = &model.variables[a.var];
                let (lo, hi) = def.domain_range;
                if !v.is_finite() || v < lo || v > hi {
                    return Err(Error::Intervention(format!(
                        "value {v} for {} outside domain range [{lo}, {hi}]",
                        def.name
                    )));
                }
                if !def.kind.contains(v) {
                    return Err(Error::Intervention(format!(
                        "value {v} is not in the support of {}",
                        def.name
                    )));
                }
            }
        }
        Ok(())
    }
}

/// `bits[i * n + j] == 1` iff there is an edge `i -> j`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AdjacencyMatrix {
    pub n: usize,
    pub bits: Vec<u8>,
}

impl AdjacencyMatrix {
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Self {
        let mut bits = vec![0; n * n];
        for &(i, j) in edges {
            bits[i * n + j] = 1;
        }
        AdjacencyMatrix { n, bits }
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.bits[i * self.n + j] == 1
    }

    pub fn edge_count(&self) -> usize {
        self.bits.iter().map(|&b| b as usize).sum()
    }

    /// Row-major flattening, as fed to the parameter network.
    pub fn flatten(&self) -> Vec<f64> {
        self.bits.iter().map(|&b| b as f64).collect()
    }

    /// True if the graph has no self-loops and no directed cycle.
    pub fn is_dag(&self) -> bool {
        let n = self.n;
        let mut indegree: Vec<usize> = (0..n).map(|j| (0..n).filter(|&i| self.get(i, j)).count()).collect();
        let mut ready: Vec<usize> = (0..n).filter(|&j| indegree[j] == 0).collect();
        let mut visited = 0;
        while let Some(i) = ready.pop() {
            visited += 1;
            for j in 0..n {
                if self.get(i, j) {
                    indegree[j] -= 1;
                    if indegree[j] == 0 {
                        ready.push(j);
                    }
                }
            }
        }
        visited == n
    }
}

impl StructuralModel {
    pub fn num_vars(&self) -> usize {
        self.variables.len()
    }

    pub fn names(&self) -> Vec<String> {
        self.variables.iter().map(|v| v.name.clone()).collect()
    }

    pub fn kinds(&self) -> Vec<VariableKind> {
        self.variables.iter().map(|v| v.kind.clone()).collect()
    }

    pub fn var_index(&self, name: &str) -> Result<usize> {
        self.variables
            .iter()
            .position(|v| v.name == name)
            .ok_or_else(|| Error::Invalid(format!("unknown variable `{name}` in {}", self.name)))
    }

    pub fn adjacency(&self) -> AdjacencyMatrix {
        AdjacencyMatrix::from_edges(self.num_vars(), &self.edges)
    }

    pub fn parents(&self, child: usize) -> Vec<usize> {
        self.edges.iter().filter(|e| e.1 == child).map(|e| e.0).collect()
    }

    /// Parses `X=1.5` style assignments into a fixed intervention.
    pub fn parse_fixed(&self, items: &[String]) -> Result<InterventionSpec> {
        let mut pairs = Vec::new();
        for item in items {
            let (name, value) = item
                .split_once('=')
                .ok_or_else(|| Error::Intervention(format!("expected VAR=VALUE, got `{item}`")))?;
            let v: f64 = value
                .trim()
                .parse()
                .map_err(|_| Error::Intervention(format!("bad value in `{item}`")))?;
            pairs.push((self.var_index(name.trim())?, v));
        }
        let spec = InterventionSpec::fixed(&pairs);
        spec.validate(self)?;
        Ok(spec)
    }

    /// Midpoint of the domain range, snapped to the nearest support code for
    /// discrete variables.
    pub fn representative_value(&self, var: usize) -> f64 {
        let def = &self.variables[var];
        let (lo, hi) = def.domain_range;
        let mid = 0.5 * (lo + hi);
        match &def.kind {
            VariableKind::Continuous => mid,
            VariableKind::Discrete { support } => support
                .iter()
                .map(|&c| c as f64)
                .min_by(|a, b| (a - mid).abs().total_cmp(&(b - mid).abs()))
                .unwrap_or(mid),
        }
    }

    /// Replaces every `Uniform` assignment by the representative value.
    pub fn representative(&self, spec: &InterventionSpec) -> InterventionSpec {
        InterventionSpec {
            assignments: spec
                .assignments
                .iter()
                .map(|a| Assignment {
                    var: a.var,
                    value: match a.value {
                        DoValue::Uniform => DoValue::Fixed(self.representative_value(a.var)),
                        fixed => fixed,
                    },
                })
                .collect(),
        }
    }
}

/// The hard-coded model with the frozen calibration.
pub fn build_model(name: ModelName) -> StructuralModel {
    let mut model = equations::skeleton(name, ScmOptions::default());
    equations::apply(&mut model, frozen::calibration(name));
    model
}

/// Model with non-default equation options. Options that differ from the
/// defaults invalidate the frozen constants, so they are recalibrated from a
/// fresh observational draw.
pub fn build_model_with(name: ModelName, options: ScmOptions) -> StructuralModel {
    if options == ScmOptions::default() {
        return build_model(name);
    }
    let mut model = equations::skeleton(name, options);
    let calibration = calibrate(&model, CALIBRATION_ROWS, CALIBRATION_SEED);
    equations::apply(&mut model, calibration);
    model
}

pub const CALIBRATION_ROWS: usize = 1_000_000;
pub const CALIBRATION_SEED: u64 = 20_240_101;

/// Recomputes cutoffs and intervention ranges from `rows` observational
/// samples of `model`'s equations.
pub fn calibrate(model: &StructuralModel, rows: usize, seed: u64) -> Calibration {
    equations::calibrate(model, rows, seed)
}

/// Perfect-intervention ancestral sampling.
pub fn sample(
    model: &StructuralModel,
    intervention: &InterventionSpec,
    count: usize,
    seed: u64,
) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::Invalid("sample count must be positive".into()));
    }
    intervention.validate(model)?;
    let n = model.num_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = ndarray::Array2::zeros((count, n));
    let mut fixed: Vec<Option<f64>> = vec![None; n];
    let mut row = vec![0.0; n];
    for mut out in data.rows_mut() {
        for a in &intervention.assignments {
            fixed[a.var] = Some(match a.value {
                DoValue::Fixed(v) => v,
                DoValue::Uniform => draw_uniform(&model.variables[a.var], &mut rng),
            });
        }
        equations::draw_row(model, &mut rng, &fixed, &mut row);
        for (o, v) in out.iter_mut().zip(&row) {
            *o = *v;
        }
    }
    Ok(Dataset {
        names: model.names(),
        kinds: model.kinds(),
        data,
        intervention: intervention.clone(),
        seed,
    })
}

fn draw_uniform(def: &VariableDef, rng: &mut impl Rng) -> f64 {
    match &def.kind {
        VariableKind::Continuous => rng.random_range(def.domain_range.0..def.domain_range.1),
        VariableKind::Discrete { support } => support[rng.random_range(0..support.len())] as f64,
    }
}

/// Base adjacency with every incoming edge of an intervened variable removed.
pub fn mutilate(model: &StructuralModel, intervention: &InterventionSpec) -> Result<AdjacencyMatrix> {
    intervention.validate(model)?;
    let targets = intervention.targets();
    let edges: Vec<(usize, usize)> = model
        .edges
        .iter()
        .copied()
        .filter(|(_, child)| !targets.contains(child))
        .collect();
    Ok(AdjacencyMatrix::from_edges(model.num_vars(), &edges))
}

/// The interventions of the training corpus: observational first, then one
/// value-sampled single intervention per interveneable variable.
pub fn corpus_interventions(model: &StructuralModel) -> Vec<InterventionSpec> {
    std::iter::once(InterventionSpec::observational())
        .chain(model.interveneable.iter().map(|&v| InterventionSpec::uniform(&[v])))
        .collect()
}

/// One dataset per corpus intervention; split each with
/// [`Dataset::train_test_split`].
pub fn make_training_corpus(
    model: &StructuralModel,
    per_intervention_count: usize,
    value_seed: u64,
) -> Result<Vec<Dataset>> {
    corpus_interventions(model)
        .iter()
        .enumerate()
        .map(|(i, spec)| sample(model, spec, per_intervention_count, derive_seed(value_seed, i as u64)))
        .collect()
}

#[cfg(test)]
mod tests;
