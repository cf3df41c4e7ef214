use serde::{Deserialize, Serialize};

use super::Complex;
use crate::error::{Error, Result};

/// Below this `|c t|` the stable exponent `|c t|^alpha` is taken as exactly 0.
pub const STABLE_CUTOFF: f64 = 1e-30;

/// Distribution family of a leaf, described by its characteristic function.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum LeafFamily {
    /// Parameters `(mu, sigma)`.
    Normal,
    /// One probability per support code, in code order.
    Categorical { codes: Vec<i64> },
    /// Parameters `(alpha, beta, c, mu)`.
    AlphaStable,
}

impl LeafFamily {
    pub fn num_params(&self) -> usize {
        match self {
            LeafFamily::Normal => 2,
            LeafFamily::Categorical { codes } => codes.len(),
            LeafFamily::AlphaStable => 4,
        }
    }

    pub fn check_params(&self, p: &[f64]) -> Result<()> {
        if p.len() != self.num_params() {
            return Err(Error::Dimension {
                expected: self.num_params(),
                got: p.len(),
            });
        }
        if p.iter().any(|x| !x.is_finite()) {
            return Err(Error::Params(format!("non-finite leaf parameter in {p:?}")));
        }
        match self {
            LeafFamily::Normal => {
                if p[1] <= 0.0 {
                    return Err(Error::Params(format!("normal scale {} must be positive", p[1])));
                }
            }
            LeafFamily::Categorical { .. } => check_simplex(p, "categorical probabilities")?,
            LeafFamily::AlphaStable => {
                let (alpha, beta, c) = (p[0], p[1], p[2]);
                if !(alpha > 0.0 && alpha <= 2.0) {
                    return Err(Error::Params(format!("stability {alpha} outside (0, 2]")));
                }
                if !(-1.0..=1.0).contains(&beta) {
                    return Err(Error::Params(format!("skewness {beta} outside [-1, 1]")));
                }
                if c <= 0.0 {
                    return Err(Error::Params(format!("stable scale {c} must be positive")));
                }
            }
        }
        Ok(())
    }
}

pub(crate) fn check_simplex(p: &[f64], what: &str) -> Result<()> {
    if p.iter().any(|&x| !(x >= 0.0)) {
        return Err(Error::Params(format!("{what} contain a negative entry: {p:?}")));
    }
    let total: f64 = p.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::Params(format!("{what} sum to {total}, not 1")));
    }
    Ok(())
}

pub(crate) fn sign(t: f64) -> f64 {
    if t > 0.0 {
        1.0
    } else if t < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// The skew factor `Phi` of the stable characteristic function.
pub(crate) fn stable_phi(alpha: f64, t: f64) -> f64 {
    if alpha == 1.0 {
        if t == 0.0 {
            0.0
        } else {
            -std::f64::consts::FRAC_2_PI * t.abs().ln()
        }
    } else {
        (std::f64::consts::FRAC_PI_2 * alpha).tan()
    }
}

/// Characteristic function of one leaf at a scalar frequency.
pub fn leaf_cf(family: &LeafFamily, params: &[f64], t: f64) -> Result<Complex> {
    family.check_params(params)?;
    Ok(leaf_cf_unchecked(family, params, t))
}

pub(crate) fn leaf_cf_unchecked(family: &LeafFamily, p: &[f64], t: f64) -> Complex {
    if t == 0.0 {
        return Complex::new(1.0, 0.0);
    }
    match family {
        LeafFamily::Normal => {
            let (mu, sigma) = (p[0], p[1]);
            Complex::new(-0.5 * sigma * sigma * t * t, t * mu).exp()
        }
        LeafFamily::Categorical { codes } => codes
            .iter()
            .zip(p)
            .map(|(&v, &pj)| Complex::from_polar(pj, t * v as f64))
            .sum(),
        LeafFamily::AlphaStable => {
            let (alpha, beta, c, mu) = (p[0], p[1], p[2], p[3]);
            let ct = (c * t).abs();
            let a = if ct < STABLE_CUTOFF { 0.0 } else { (alpha * ct.ln()).exp() };
            let phi = stable_phi(alpha, t);
            Complex::new(-a, t * mu + a * beta * sign(t) * phi).exp()
        }
    }
}
