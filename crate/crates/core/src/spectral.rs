//! Empirical characteristic functions, frequency sampling and the squared
//! characteristic function distance.

use ndarray::ArrayView2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::autodiff::{Tape, Var};
use crate::circuit::{Complex, ComplexVar};
use crate::error::{Error, Result};

/// `k` frequency vectors drawn i.i.d. from `N(0, eta^2 I)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyBatch {
    pub eta: f64,
    pub points: Vec<Vec<f64>>,
}

impl FrequencyBatch {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

pub fn sample_frequencies(d: usize, k: usize, eta: f64, seed: u64) -> Result<FrequencyBatch> {
    sample_frequencies_with(&mut ChaCha8Rng::seed_from_u64(seed), d, k, eta)
}

/// Same as [`sample_frequencies`], drawing from a caller-owned generator.
pub fn sample_frequencies_with<R: Rng>(rng: &mut R, d: usize, k: usize, eta: f64) -> Result<FrequencyBatch> {
    if k == 0 {
        return Err(Error::Invalid("frequency count must be positive".into()));
    }
    if !(eta > 0.0 && eta.is_finite()) {
        return Err(Error::Invalid(format!("frequency scale {eta} must be positive")));
    }
    let points = (0..k)
        .map(|_| {
            (0..d)
                .map(|_| eta * rng.sample::<f64, _>(StandardNormal))
                .collect()
        })
        .collect();
    Ok(FrequencyBatch { eta, points })
}

/// Mean of `exp(i t.x)` over the rows of `data`.
pub fn ecf(data: ArrayView2<f64>, t: &[f64]) -> Result<Complex> {
    Ok(ecf_batch(data, std::slice::from_ref(&t.to_vec()))?[0])
}

/// ECF at every frequency vector of `freqs`.
pub fn ecf_batch(data: ArrayView2<f64>, freqs: &[Vec<f64>]) -> Result<Vec<Complex>> {
    let n = data.nrows();
    if n == 0 {
        return Err(Error::Data("empirical CF of an empty sample".into()));
    }
    if let Some(t) = freqs.iter().find(|t| t.len() != data.ncols()) {
        return Err(Error::Dimension {
            expected: data.ncols(),
            got: t.len(),
        });
    }
    let mut out = vec![Complex::new(0.0, 0.0); freqs.len()];
    for row in data.rows() {
        for (acc, t) in out.iter_mut().zip(freqs) {
            let angle: f64 = row.iter().zip(t).map(|(x, ti)| x * ti).sum();
            let (s, c) = angle.sin_cos();
            acc.re += c;
            acc.im += s;
        }
    }
    Ok(out.into_iter().map(|z| z / n as f64).collect())
}

/// `(1/k) sum_j |model_j - ecf_j|^2`.
pub fn cfd_squared(model: &[Complex], ecf: &[Complex]) -> Result<f64> {
    if model.len() != ecf.len() {
        return Err(Error::Dimension {
            expected: model.len(),
            got: ecf.len(),
        });
    }
    if model.is_empty() {
        return Err(Error::Invalid("distance over zero frequencies".into()));
    }
    let total: f64 = model.iter().zip(ecf).map(|(a, b)| (a - b).norm_sqr()).sum();
    Ok(total / model.len() as f64)
}

/// Records [`cfd_squared`] between a taped model CF and a fixed ECF.
pub fn record_cfd(tape: &mut Tape, model: ComplexVar, ecf: &[Complex]) -> Result<Var> {
    let k = tape.value(model.re).len();
    if k != ecf.len() {
        return Err(Error::Dimension {
            expected: k,
            got: ecf.len(),
        });
    }
    let target_re = tape.constant(ecf.iter().map(|z| z.re).collect());
    let target_im = tape.constant(ecf.iter().map(|z| z.im).collect());
    let dr = tape.sub(model.re, target_re)?;
    let di = tape.sub(model.im, target_im)?;
    let dr2 = tape.mul(dr, dr)?;
    let di2 = tape.mul(di, di)?;
    let sq = tape.add(dr2, di2)?;
    let total = tape.sum(sq)?;
    Ok(tape.scale(total, 1.0 / k as f64)?)
}

/// Diagnostic CSV of `(t, model CF, ECF)` triples.
pub fn dump_csv(freqs: &[Vec<f64>], model: &[Complex], ecf: &[Complex]) -> Result<Vec<u8>> {
    let d = freqs.first().map_or(0, Vec::len);
    let mut header: Vec<String> = (0..d).map(|j| format!("t{j}")).collect();
    header.extend(["model_re", "model_im", "ecf_re", "ecf_im"].map(String::from));
    let header: Vec<&str> = header.iter().map(String::as_str).collect();
    let rows = freqs.iter().zip(model).zip(ecf).map(|((t, m), e)| {
        t.iter()
            .chain(&[m.re, m.im, e.re, e.im])
            .map(|x| format!("{x}"))
            .collect()
    });
    crate::io::csv_bytes(&header, rows)
}

#[cfg(test)]
mod tests;
