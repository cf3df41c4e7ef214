//! Densities and probability masses recovered from circuit CFs.
//!
//! Normal leaves invert in closed form, categorical leaves return their mass
//! directly and stable leaves go through Gauss–Hermite quadrature near their
//! location, or a panelled Fourier integral further out. Sum nodes
//! mix their children's inversions and product nodes multiply them; leaves
//! of marginalized variables contribute 1.

mod quadrature;

pub use quadrature::{QuadratureRule, HERMITE_NODES};

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::circuit::{leaf_cf, CircuitGraph, Complex, LeafFamily, Node};
use crate::error::{Error, Result};
use crate::scm::{mutilate, Dataset, InterventionSpec, VariableKind};
use crate::trainer::Checkpoint;

/// Density (continuous) or mass (categorical) of one leaf at `x`.
pub fn invert_leaf(family: &LeafFamily, params: &[f64], x: f64, rule: &QuadratureRule) -> Result<f64> {
    family.check_params(params)?;
    invert_leaf_unchecked(family, params, x, rule)
}

fn invert_leaf_unchecked(family: &LeafFamily, p: &[f64], x: f64, rule: &QuadratureRule) -> Result<f64> {
    match family {
        LeafFamily::Normal => {
            let z = (x - p[0]) / p[1];
            Ok((-0.5 * z * z).exp() / (p[1] * (2.0 * PI).sqrt()))
        }
        LeafFamily::Categorical { codes } => codes
            .iter()
            .position(|&c| c as f64 == x)
            .map(|j| p[j])
            .ok_or_else(|| Error::Invalid(format!("{x} is not in the categorical support {codes:?}"))),
        LeafFamily::AlphaStable => {
            if p[0] >= HERMITE_MIN_STABILITY && (x - p[3]).abs() <= HERMITE_MAX_OFFSET * p[2] {
                Ok(quadrature_inversion(family, p, x, rule)?.re)
            } else {
                panel_inversion(family, p, x)
            }
        }
    }
}

/// Stable leaves use the Hermite rule only within this many scale units of
/// the location; beyond it the oscillation outruns the nodes.
pub const HERMITE_MAX_OFFSET: f64 = 8.0;
/// Below this stability the CF decays too slowly for the Hermite rule.
pub const HERMITE_MIN_STABILITY: f64 = 1.0;

/// `(1/2pi) int exp(-itx) phi(t) dt` by Gauss–Hermite quadrature after the
/// substitution `t = s / scale`, where `scale` makes a Gaussian CF exactly
/// `exp(-s^2)`. Works for the continuous families; the imaginary part is
/// kept so callers can check it vanishes.
pub fn quadrature_inversion(family: &LeafFamily, p: &[f64], x: f64, rule: &QuadratureRule) -> Result<Complex> {
    let scale = match family {
        LeafFamily::Normal => p[1] / 2f64.sqrt(),
        LeafFamily::AlphaStable => p[2],
        LeafFamily::Categorical { .. } => {
            return Err(Error::Invalid("categorical leaves have no density to integrate".into()));
        }
    };
    let mut total = Complex::new(0.0, 0.0);
    for (&s, &w) in rule.nodes.iter().zip(&rule.scaled_weights) {
        let t = s / scale;
        total += w * Complex::from_polar(1.0, -t * x) * leaf_cf(family, p, t)?;
    }
    Ok(total / (2.0 * PI * scale))
}

/// `(1/pi) int_0^T Re[exp(-itx) phi(t)] dt` over Gauss–Legendre panels
/// narrow enough to follow the oscillation, with `T` where `|phi|` has
/// decayed below 1e-13. The first panel is split geometrically towards
/// `t = 0`, where stable CFs have a cusp.
pub fn panel_inversion(family: &LeafFamily, p: &[f64], x: f64) -> Result<f64> {
    const DECAY: f64 = 29.9;
    let (horizon, rate) = match family {
        LeafFamily::Normal => ((2.0 * DECAY).sqrt() / p[1], (x - p[0]).abs()),
        LeafFamily::AlphaStable => {
            let (alpha, beta, c, mu) = (p[0], p[1], p[2], p[3]);
            let horizon = DECAY.powf(1.0 / alpha) / c;
            // largest slope of the skew phase over [0, horizon]
            let skew = if alpha == 1.0 {
                std::f64::consts::FRAC_2_PI * beta.abs() * c * ((horizon.abs().ln()).abs() + 1.0)
            } else {
                beta.abs() * (std::f64::consts::FRAC_PI_2 * alpha).tan().abs() * alpha * c.powf(alpha)
                    * horizon.powf((alpha - 1.0).max(0.0))
            };
            (horizon, (x - mu).abs() + skew)
        }
        LeafFamily::Categorical { .. } => {
            return Err(Error::Invalid("categorical leaves have no density to integrate".into()));
        }
    };
    let panels = ((horizon * rate / 2.0).ceil() as usize).clamp(16, MAX_PANELS);
    let width = horizon / panels as f64;
    let gl = legendre();
    let panel = |a: f64, b: f64| -> Result<f64> {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let mut total = 0.0;
        for (&s, &w) in gl.nodes.iter().zip(&gl.weights) {
            let t = mid + half * s;
            total += w * (Complex::from_polar(1.0, -t * x) * leaf_cf(family, p, t)?).re;
        }
        Ok(total * half)
    };
    let mut total = 0.0;
    let mut right = width;
    for _ in 0..30 {
        total += panel(0.5 * right, right)?;
        right *= 0.5;
    }
    total += panel(0.0, right)?;
    for i in 1..panels {
        total += panel(i as f64 * width, (i + 1) as f64 * width)?;
    }
    Ok(total / PI)
}

const MAX_PANELS: usize = 20_000;

fn legendre() -> &'static QuadratureRule {
    static RULE: std::sync::OnceLock<QuadratureRule> = std::sync::OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::gauss_legendre(8).expect("8-node rule converges"))
}

/// Mass of code `x` by trapezoid integration of `exp(-itx) phi(t)` over one
/// period `[-pi, pi]`; exact for unit-spaced integer codes.
pub fn categorical_inversion(family: &LeafFamily, p: &[f64], x: f64, points: usize) -> Result<f64> {
    if !matches!(family, LeafFamily::Categorical { .. }) {
        return Err(Error::Invalid("periodic inversion needs a categorical leaf".into()));
    }
    if points < 2 {
        return Err(Error::Invalid("trapezoid rule needs two points".into()));
    }
    let h = 2.0 * PI / (points - 1) as f64;
    let mut total = 0.0;
    for i in 0..points {
        let t = -PI + i as f64 * h;
        let end = if i == 0 || i == points - 1 { 0.5 } else { 1.0 };
        total += end * (Complex::from_polar(1.0, -t * x) * leaf_cf(family, p, t)?).re;
    }
    Ok(total * h / (2.0 * PI))
}

/// Inversion value of every node. `x[j] = None` marginalizes variable `j`.
pub fn node_values(circuit: &CircuitGraph, params: &[f64], x: &[Option<f64>], rule: &QuadratureRule) -> Result<Vec<f64>> {
    circuit.validate_params(params)?;
    if x.len() != circuit.num_vars {
        return Err(Error::Dimension {
            expected: circuit.num_vars,
            got: x.len(),
        });
    }
    let mut values = Vec::with_capacity(circuit.nodes.len());
    for node in &circuit.nodes {
        let v = match node {
            Node::Leaf { var, family, slot } => match x[*var] {
                Some(xv) => invert_leaf_unchecked(family, &params[slot.range()], xv, rule)?,
                None => 1.0,
            },
            Node::Product { children } => children.iter().map(|&c| values[c]).product(),
            Node::Sum { children, slot } => mix(&params[slot.range()], children, &values),
        };
        values.push(v);
    }
    Ok(values)
}

fn mix(w: &[f64], children: &[usize], values: &[f64]) -> f64 {
    let total: f64 = w.iter().sum();
    children.iter().zip(w).map(|(&c, &wj)| values[c] * wj).sum::<f64>() / total
}

/// Inversion at `node` for an assignment covering exactly the node's scope
/// (entries outside the scope must be `None`).
pub fn invert_node(
    circuit: &CircuitGraph,
    params: &[f64],
    node: usize,
    x: &[Option<f64>],
    rule: &QuadratureRule,
) -> Result<f64> {
    let scope = circuit
        .scopes
        .get(node)
        .ok_or_else(|| Error::Invalid(format!("no node {node}")))?;
    if x.len() != circuit.num_vars {
        return Err(Error::Dimension {
            expected: circuit.num_vars,
            got: x.len(),
        });
    }
    for (j, v) in x.iter().enumerate() {
        if v.is_some() != scope.contains(&j) {
            return Err(Error::Invalid(format!(
                "assignment does not match the scope {scope:?} of node {node}"
            )));
        }
    }
    Ok(node_values(circuit, params, x, rule)?[node])
}

/// Joint (or, with `None` entries, marginal) density at the root.
pub fn density(circuit: &CircuitGraph, params: &[f64], x: &[Option<f64>], rule: &QuadratureRule) -> Result<f64> {
    Ok(node_values(circuit, params, x, rule)?[circuit.root])
}

/// Grid layout for marginal density plots.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSpec {
    pub points: usize,
    /// Quantiles of the reference data bounding the grid.
    pub lower_quantile: f64,
    pub upper_quantile: f64,
    /// Histogram bins of the empirical density over the grid range.
    pub bins: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        GridSpec {
            points: 200,
            lower_quantile: 0.01,
            upper_quantile: 0.99,
            bins: 50,
        }
    }
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        if self.points < 2 || self.bins == 0 {
            return Err(Error::Config("grid needs at least two points and one bin".into()));
        }
        if !(0.0 <= self.lower_quantile && self.lower_quantile < self.upper_quantile && self.upper_quantile <= 1.0) {
            return Err(Error::Config("grid quantiles must satisfy 0 <= lower < upper <= 1".into()));
        }
        Ok(())
    }
}

/// Model and empirical density of one variable over a grid, in data units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityGrid {
    pub var: usize,
    pub name: String,
    pub intervention: String,
    pub x: Vec<f64>,
    /// Raw model density; may dip slightly below zero from quadrature ripple.
    pub density: Vec<f64>,
    pub empirical: Vec<f64>,
    pub bin_width: f64,
    /// Trapezoid integral of the raw model density.
    pub normalization: f64,
    /// Set when the variable is fixed by the intervention: the grid then
    /// holds the point mass at the assigned value, not a model output.
    pub degenerate: bool,
}

impl DensityGrid {
    /// Columns `x, density_model, density_empirical`; model density clipped
    /// at zero.
    pub fn to_csv(&self) -> Result<Vec<u8>> {
        let rows = self.x.iter().zip(&self.density).zip(&self.empirical).map(|((x, d), e)| {
            vec![format!("{x}"), format!("{}", d.max(0.0)), format!("{e}")]
        });
        crate::io::csv_bytes(&["x", "density_model", "density_empirical"], rows)
    }

    pub fn model_mode(&self) -> f64 {
        argmax_x(&self.x, &self.density)
    }

    /// Centre of the most populated histogram bin.
    pub fn empirical_mode(&self) -> f64 {
        let lo = self.x[0];
        let x = argmax_x(&self.x, &self.empirical);
        let bin = ((x - lo) / self.bin_width).floor();
        lo + (bin + 0.5) * self.bin_width
    }

    /// `|model mode - empirical mode|` in bin widths.
    pub fn mode_offset_bins(&self) -> f64 {
        (self.model_mode() - self.empirical_mode()).abs() / self.bin_width
    }
}

/// First `x` at which `y` is largest.
fn argmax_x(x: &[f64], y: &[f64]) -> f64 {
    let mut best = 0;
    for (i, v) in y.iter().enumerate() {
        if *v > y[best] {
            best = i;
        }
    }
    x[best]
}

/// Type-7 sample quantile.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let h = (sorted.len() - 1) as f64 * q;
    let (i, frac) = (h.floor() as usize, h - h.floor());
    if i + 1 < sorted.len() {
        sorted[i] + frac * (sorted[i + 1] - sorted[i])
    } else {
        sorted[i]
    }
}

/// A checkpoint's circuit with parameters predicted for one intervention.
#[derive(Debug, Clone)]
pub struct ConditionedModel<'a> {
    pub checkpoint: &'a Checkpoint,
    pub intervention: InterventionSpec,
    pub params: Vec<f64>,
    rule: &'a QuadratureRule,
}

impl<'a> ConditionedModel<'a> {
    pub fn new(checkpoint: &'a Checkpoint, intervention: &InterventionSpec) -> Result<Self> {
        intervention.validate(&checkpoint.model)?;
        mutilate(&checkpoint.model, intervention)?;
        Ok(ConditionedModel {
            checkpoint,
            intervention: intervention.clone(),
            params: checkpoint.params_for(intervention)?,
            rule: QuadratureRule::standard(),
        })
    }

    fn standardized(&self, x: &[Option<f64>]) -> Vec<Option<f64>> {
        let s = &self.checkpoint.standardizer;
        x.iter().enumerate().map(|(j, v)| v.map(|v| s.forward(j, v))).collect()
    }

    /// Model density in data units; `None` entries are marginalized.
    pub fn density(&self, x: &[Option<f64>]) -> Result<f64> {
        let z = self.standardized(x);
        let jacobian: f64 = x
            .iter()
            .enumerate()
            .filter(|(_, v)| v.is_some())
            .map(|(j, _)| self.checkpoint.standardizer.std[j])
            .product();
        Ok(density(&self.checkpoint.circuit, &self.params, &z, self.rule)? / jacobian)
    }

    /// Marginal density of `var` at `x`. Variables the intervention fixes to
    /// a value are conditioned on: the network only sees the mutilated
    /// graph, so the circuit models the intervened variable's spread of
    /// values, and a fixed value is selected by conditioning.
    pub fn marginal(&self, var: usize, x: f64) -> Result<f64> {
        let n = self.checkpoint.model.num_vars();
        let mut given: Vec<Option<f64>> = vec![None; n];
        for t in self.intervention.targets() {
            if t != var {
                given[t] = self.intervention.fixed_value(t);
            }
        }
        let mut joint = given.clone();
        joint[var] = Some(x);
        let numerator = self.density(&joint)?;
        if given.iter().all(Option::is_none) {
            return Ok(numerator);
        }
        let denominator = self.density(&given)?;
        if !(denominator > 0.0) {
            return Err(Error::Numeric(format!(
                "model gives no mass to the intervention values ({denominator})"
            )));
        }
        Ok(numerator / denominator)
    }

    /// Marginal grid of continuous `var` over the quantile range of
    /// `reference` (data drawn under the same intervention), with its
    /// histogram density.
    pub fn density_grid(&self, var: usize, reference: &Dataset, spec: &GridSpec) -> Result<DensityGrid> {
        spec.validate()?;
        let model = &self.checkpoint.model;
        if var >= model.num_vars() {
            return Err(Error::Invalid(format!("no variable {var}")));
        }
        if model.variables[var].kind != VariableKind::Continuous {
            return Err(Error::Invalid(format!(
                "density grids need a continuous variable, {} is discrete",
                model.variables[var].name
            )));
        }
        if reference.is_empty() {
            return Err(Error::Data("density grid needs reference rows".into()));
        }
        let column = reference.column(var);
        let (mut lo, mut hi) = (quantile(&column, spec.lower_quantile), quantile(&column, spec.upper_quantile));
        if hi - lo < 1e-9 * lo.abs().max(1.0) {
            let (dlo, dhi) = model.variables[var].domain_range;
            let pad = 0.05 * (dhi - dlo);
            lo -= pad;
            hi += pad;
        }
        let step = (hi - lo) / (spec.points - 1) as f64;
        let x: Vec<f64> = (0..spec.points).map(|i| lo + i as f64 * step).collect();
        let bin_width = (hi - lo) / spec.bins as f64;
        let bin_of = |v: f64| (((v - lo) / bin_width).floor() as usize).min(spec.bins - 1);
        let mut counts = vec![0usize; spec.bins];
        for &v in &column {
            if (lo..=hi).contains(&v) {
                counts[bin_of(v)] += 1;
            }
        }
        let scale = 1.0 / (column.len() as f64 * bin_width);
        let empirical = x.iter().map(|&v| counts[bin_of(v)] as f64 * scale).collect();

        let fixed = self.intervention.fixed_value(var);
        let density: Vec<f64> = match fixed {
            Some(v) => x
                .iter()
                .map(|&xi| if bin_of(xi) == bin_of(v) { 1.0 / bin_width } else { 0.0 })
                .collect(),
            None => x.iter().map(|&xi| self.marginal(var, xi)).collect::<Result<_>>()?,
        };
        let normalization = density.windows(2).map(|w| 0.5 * (w[0] + w[1]) * step).sum();
        Ok(DensityGrid {
            var,
            name: model.variables[var].name.clone(),
            intervention: self.intervention.label(model),
            x,
            density,
            empirical,
            bin_width,
            normalization,
            degenerate: fixed.is_some(),
        })
    }

    /// Support codes of discrete `target` ranked by the joint density of
    /// `row` with the target set to each code; ties go to the lower code.
    pub fn predict_discrete(&self, row: &[f64], target: usize, top_k: usize) -> Result<Vec<i64>> {
        let model = &self.checkpoint.model;
        if row.len() != model.num_vars() {
            return Err(Error::Dimension {
                expected: model.num_vars(),
                got: row.len(),
            });
        }
        let codes = match &model.variables[target].kind {
            VariableKind::Discrete { support } => support.clone(),
            VariableKind::Continuous => {
                return Err(Error::Invalid(format!("{} is not discrete", model.variables[target].name)));
            }
        };
        if row.iter().enumerate().any(|(j, v)| j != target && !v.is_finite()) {
            return Err(Error::Invalid("row must assign every other variable".into()));
        }
        let circuit = &self.checkpoint.circuit;
        let mut z: Vec<Option<f64>> = self.standardized(&row.iter().map(|&v| Some(v)).collect::<Vec<_>>());
        z[target] = Some(codes[0] as f64);
        // leaves outside the target are shared by every candidate code
        let mut values = node_values(circuit, &self.params, &z, self.rule)?;
        let mut scored = Vec::with_capacity(codes.len());
        for &code in &codes {
            for (i, node) in circuit.nodes.iter().enumerate() {
                values[i] = match node {
                    Node::Leaf { var, family, slot } if *var == target => {
                        invert_leaf_unchecked(family, &self.params[slot.range()], code as f64, self.rule)?
                    }
                    Node::Leaf { .. } => continue,
                    Node::Product { children } => children.iter().map(|&c| values[c]).product(),
                    Node::Sum { children, slot } => mix(&self.params[slot.range()], children, &values),
                };
            }
            scored.push((code, values[circuit.root]));
        }
        // stable sort keeps code order among equal scores
        scored.sort_by(|a, b| b.1.total_cmp(&a.1));
        Ok(scored.into_iter().take(top_k).map(|(c, _)| c).collect())
    }
}
