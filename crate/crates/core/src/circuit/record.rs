use std::f64::consts::{FRAC_2_PI, FRAC_PI_2};

use super::leaf::{sign, STABLE_CUTOFF};
use super::{CircuitGraph, LeafFamily, Node};
use crate::autodiff::{Tape, Var};
use crate::error::{Error, Result};

/// Real and imaginary parts of a CF over a batch of frequencies.
#[derive(Debug, Clone, Copy)]
pub struct ComplexVar {
    pub re: Var,
    pub im: Var,
}

pub fn complex_mul(tape: &mut Tape, a: ComplexVar, b: ComplexVar) -> Result<ComplexVar> {
    let rr = tape.mul(a.re, b.re)?;
    let ii = tape.mul(a.im, b.im)?;
    let ri = tape.mul(a.re, b.im)?;
    let ir = tape.mul(a.im, b.re)?;
    Ok(ComplexVar {
        re: tape.sub(rr, ii)?,
        im: tape.add(ri, ir)?,
    })
}

/// `exp(er + i ei)` elementwise.
fn complex_exp(tape: &mut Tape, er: Var, ei: Var) -> Result<ComplexVar> {
    let m = tape.exp(er)?;
    let c = tape.cos(ei)?;
    let s = tape.sin(ei)?;
    Ok(ComplexVar {
        re: tape.mul(m, c)?,
        im: tape.mul(m, s)?,
    })
}

impl CircuitGraph {
    /// Records the root CF at every row of `freqs` (`k x d`) onto `tape`.
    ///
    /// `params` is the transformed flat parameter vector already on the
    /// tape. Normal and stable leaves are evaluated in one vectorized pass
    /// per family; the returned parts have length `k`.
    pub fn record_cf(&self, tape: &mut Tape, params: Var, freqs: &[Vec<f64>]) -> Result<ComplexVar> {
        let k = freqs.len();
        if k == 0 {
            return Err(Error::Invalid("empty frequency batch".into()));
        }
        if let Some(t) = freqs.iter().find(|t| t.len() != self.num_vars) {
            return Err(Error::Dimension {
                expected: self.num_vars,
                got: t.len(),
            });
        }
        if tape.value(params).len() != self.num_params {
            return Err(Error::Dimension {
                expected: self.num_params,
                got: tape.value(params).len(),
            });
        }
        let mut values: Vec<Option<ComplexVar>> = vec![None; self.nodes.len()];

        let normal: Vec<(usize, usize, usize)> = self
            .leaves()
            .filter(|(_, _, f, _)| **f == LeafFamily::Normal)
            .map(|(i, v, _, s)| (i, v, s.offset))
            .collect();
        if !normal.is_empty() {
            let gathered = |field: usize| -> Vec<usize> {
                normal.iter().flat_map(|&(_, _, o)| std::iter::repeat_n(o + field, k)).collect()
            };
            let t: Vec<f64> = normal.iter().flat_map(|&(_, v, _)| freqs.iter().map(move |f| f[v])).collect();
            let mu = tape.gather(params, gathered(0))?;
            let sigma = tape.gather(params, gathered(1))?;
            let tc = tape.constant(t.clone());
            let half_t2 = tape.constant(t.iter().map(|x| -0.5 * x * x).collect());
            let s2 = tape.mul(sigma, sigma)?;
            let er = tape.mul(s2, half_t2)?;
            let ei = tape.mul(mu, tc)?;
            let all = complex_exp(tape, er, ei)?;
            self.scatter(tape, all, normal.iter().map(|l| l.0), k, &mut values)?;
        }

        let stable: Vec<(usize, usize, usize)> = self
            .leaves()
            .filter(|(_, _, f, _)| **f == LeafFamily::AlphaStable)
            .map(|(i, v, _, s)| (i, v, s.offset))
            .collect();
        if !stable.is_empty() {
            let all = self.record_stable(tape, params, freqs, &stable)?;
            self.scatter(tape, all, stable.iter().map(|l| l.0), k, &mut values)?;
        }

        for (i, node) in self.nodes.iter().enumerate() {
            let v = match node {
                Node::Leaf {
                    var,
                    family: LeafFamily::Categorical { codes },
                    slot,
                } => {
                    let p = tape.slice(params, slot.offset, slot.len)?;
                    let angle = |f: &Vec<f64>, c: i64| f[*var] * c as f64;
                    let cos: Vec<f64> = freqs
                        .iter()
                        .flat_map(|f| codes.iter().map(move |&c| angle(f, c).cos()))
                        .collect();
                    let sin: Vec<f64> = freqs
                        .iter()
                        .flat_map(|f| codes.iter().map(move |&c| angle(f, c).sin()))
                        .collect();
                    let cos = tape.constant(cos);
                    let sin = tape.constant(sin);
                    ComplexVar {
                        re: tape.matvec(cos, k, codes.len(), p)?,
                        im: tape.matvec(sin, k, codes.len(), p)?,
                    }
                }
                Node::Leaf { .. } => continue,
                Node::Product { children } => {
                    let mut acc = values[children[0]].expect("children precede parents");
                    for &c in &children[1..] {
                        acc = complex_mul(tape, acc, values[c].expect("children precede parents"))?;
                    }
                    acc
                }
                Node::Sum { children, slot } => {
                    let w = tape.slice(params, slot.offset, slot.len)?;
                    let re: Vec<Var> = children.iter().map(|&c| values[c].unwrap().re).collect();
                    let im: Vec<Var> = children.iter().map(|&c| values[c].unwrap().im).collect();
                    ComplexVar {
                        re: tape.mix(w, &re)?,
                        im: tape.mix(w, &im)?,
                    }
                }
            };
            values[i] = Some(v);
        }
        Ok(values[self.root].expect("root evaluated"))
    }

    /// Stable leaves over `(leaf, frequency)` pairs, leaf-major.
    fn record_stable(
        &self,
        tape: &mut Tape,
        params: Var,
        freqs: &[Vec<f64>],
        leaves: &[(usize, usize, usize)],
    ) -> Result<ComplexVar> {
        let k = freqs.len();
        let values = tape.value(params).to_vec();
        let gathered = |field: usize| -> Vec<usize> {
            leaves.iter().flat_map(|&(_, _, o)| std::iter::repeat_n(o + field, k)).collect()
        };
        let t: Vec<f64> = leaves.iter().flat_map(|&(_, v, _)| freqs.iter().map(move |f| f[v])).collect();
        for &(_, _, o) in leaves {
            tape.note_branch(sign(values[o] - 1.0) as i8);
        }
        let alpha_vals: Vec<f64> = gathered(0).into_iter().map(|i| values[i]).collect();
        let c_vals: Vec<f64> = gathered(2).into_iter().map(|i| values[i]).collect();

        let alpha = tape.gather(params, gathered(0))?;
        let beta = tape.gather(params, gathered(1))?;
        let c = tape.gather(params, gathered(2))?;
        let mu = tape.gather(params, gathered(3))?;

        // |c t|^alpha as exp(alpha log|c t|), exactly 0 below the cutoff
        let above: Vec<bool> = t
            .iter()
            .zip(&c_vals)
            .map(|(ti, ci)| (ci * ti).abs() >= STABLE_CUTOFF)
            .collect();
        let gate = tape.constant(above.iter().map(|&a| if a { 1.0 } else { -1.0 }).collect());
        let abs_t = tape.constant(
            t.iter()
                .zip(&above)
                .map(|(ti, &a)| if a { ti.abs() } else { 1.0 })
                .collect(),
        );
        let ct = tape.mul(c, abs_t)?;
        let one = tape.scalar(1.0);
        let ct = tape.select(gate, ct, one)?;
        let log_ct = tape.log(ct)?;
        let scaled = tape.mul(alpha, log_ct)?;
        let power = tape.exp(scaled)?;
        let zero = tape.scalar(0.0);
        let power = tape.select(gate, power, zero)?;

        // Phi = tan(pi alpha / 2), or -(2/pi) log|t| where alpha is exactly 1
        let not_one = tape.constant(alpha_vals.iter().map(|&a| if a != 1.0 { 1.0 } else { -1.0 }).collect());
        let half = tape.scalar(0.5);
        let alpha_safe = tape.select(not_one, alpha, half)?;
        let angle = tape.scale(alpha_safe, FRAC_PI_2)?;
        let tan = tape.tan(angle)?;
        let log_phi = tape.constant(
            t.iter()
                .map(|&ti| if ti == 0.0 { 0.0 } else { -FRAC_2_PI * ti.abs().ln() })
                .collect(),
        );
        let phi = tape.select(not_one, tan, log_phi)?;

        let sgn = tape.constant(t.iter().map(|&ti| sign(ti)).collect());
        let skew = tape.mul(beta, sgn)?;
        let skew = tape.mul(skew, phi)?;
        let skew = tape.mul(skew, power)?;
        let tc = tape.constant(t);
        let drift = tape.mul(mu, tc)?;
        let ei = tape.add(drift, skew)?;
        let er = tape.neg(power)?;
        complex_exp(tape, er, ei)
    }

    fn scatter(
        &self,
        tape: &mut Tape,
        all: ComplexVar,
        nodes: impl Iterator<Item = usize>,
        k: usize,
        values: &mut [Option<ComplexVar>],
    ) -> Result<()> {
        for (j, node) in nodes.enumerate() {
            values[node] = Some(ComplexVar {
                re: tape.slice(all.re, j * k, k)?,
                im: tape.slice(all.im, j * k, k)?,
            });
        }
        Ok(())
    }
}
