use std::sync::OnceLock;

use crate::error::{Error, Result};

/// Node count of the rule used for stable-leaf inversion.
pub const HERMITE_NODES: usize = 50;

/// Gauss–Hermite rule for integrals against `exp(-t^2)`, nodes ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadratureRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
    /// For Hermite rules `weights[i] * exp(nodes[i]^2)`, for integrands
    /// without the Gaussian factor; equal to `weights` otherwise.
    pub scaled_weights: Vec<f64>,
}

impl QuadratureRule {
    /// Nodes are the roots of the n-th Hermite polynomial, found by Newton
    /// iteration on the orthonormal recurrence.
    pub fn gauss_hermite(n: usize) -> Result<QuadratureRule> {
        if n == 0 {
            return Err(Error::Invalid("quadrature needs at least one node".into()));
        }
        let nf = n as f64;
        let pim4 = std::f64::consts::PI.powf(-0.25);
        let mut upper = Vec::with_capacity(n.div_ceil(2));
        let mut weights = Vec::with_capacity(n.div_ceil(2));
        let mut z = 0.0;
        for i in 0..n.div_ceil(2) {
            z = match i {
                0 => (2.0 * nf + 1.0).sqrt() - 1.85575 * (2.0 * nf + 1.0).powf(-1.0 / 6.0),
                1 => z - 1.14 * nf.powf(0.426) / z,
                2 => 1.86 * z - 0.86 * upper[0],
                3 => 1.91 * z - 0.91 * upper[1],
                _ => 2.0 * z - upper[i - 2],
            };
            let mut derivative = 0.0;
            for iteration in 0.. {
                if iteration == 100 {
                    return Err(Error::Numeric(format!("Hermite root {i} of {n} did not converge")));
                }
                let (mut p1, mut p2) = (pim4, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = z * (2.0 / (jf + 1.0)).sqrt() * p2 - (jf / (jf + 1.0)).sqrt() * p3;
                }
                derivative = (2.0 * nf).sqrt() * p2;
                let step = p1 / derivative;
                z -= step;
                if step.abs() <= 1e-15 * z.abs().max(1.0) {
                    break;
                }
            }
            upper.push(z);
            weights.push(2.0 / (derivative * derivative));
        }
        let mut pairs: Vec<(f64, f64)> = upper
            .iter()
            .zip(&weights)
            .flat_map(|(&x, &w)| [(x, w), (-x, w)])
            .collect();
        if n % 2 == 1 {
            // the middle root is zero and was pushed twice
            pairs.pop();
            let last = pairs.len() - 1;
            pairs[last].0 = 0.0;
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let nodes: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let weights: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let scaled_weights = nodes.iter().zip(&weights).map(|(x, w)| w * (x * x).exp()).collect();
        Ok(QuadratureRule {
            nodes,
            weights,
            scaled_weights,
        })
    }

    /// Gauss–Legendre rule on `[-1, 1]`, nodes ascending.
    pub fn gauss_legendre(n: usize) -> Result<QuadratureRule> {
        if n == 0 {
            return Err(Error::Invalid("quadrature needs at least one node".into()));
        }
        let nf = n as f64;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut z = (std::f64::consts::PI * (i as f64 + 0.75) / (nf + 0.5)).cos();
            let mut derivative = 0.0;
            for iteration in 0.. {
                if iteration == 100 {
                    return Err(Error::Numeric(format!("Legendre root {i} of {n} did not converge")));
                }
                let (mut p1, mut p2) = (1.0, 0.0);
                for j in 0..n {
                    let p3 = p2;
                    p2 = p1;
                    let jf = j as f64;
                    p1 = ((2.0 * jf + 1.0) * z * p2 - jf * p3) / (jf + 1.0);
                }
                derivative = nf * (z * p1 - p2) / (z * z - 1.0);
                let step = p1 / derivative;
                z -= step;
                if step.abs() <= 1e-15 {
                    break;
                }
            }
            nodes[i] = -z;
            nodes[n - 1 - i] = z;
            let w = 2.0 / ((1.0 - z * z) * derivative * derivative);
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        if n % 2 == 1 {
            nodes[n / 2] = 0.0;
        }
        Ok(QuadratureRule {
            scaled_weights: weights.clone(),
            nodes,
            weights,
        })
    }

    /// The shared 50-node rule.
    pub fn standard() -> &'static QuadratureRule {
        static RULE: OnceLock<QuadratureRule> = OnceLock::new();
        RULE.get_or_init(|| QuadratureRule::gauss_hermite(HERMITE_NODES).expect("50-node rule converges"))
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// `sum_i w_i f(t_i)`, approximating `int exp(-t^2) f(t) dt`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes.iter().zip(&self.weights).map(|(&t, &w)| w * f(t)).sum()
    }
}
