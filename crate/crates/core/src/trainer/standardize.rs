use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scm::{Dataset, VariableKind};

/// Per-column affine map to zero mean and unit variance. Discrete columns
/// keep their raw codes (mean 0, scale 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn identity(n: usize) -> Self {
        Standardizer {
            mean: vec![0.0; n],
            std: vec![1.0; n],
        }
    }

    /// Statistics of the continuous columns pooled over every dataset.
    /// A constant column gets scale 1.
    pub fn fit(datasets: &[&Dataset]) -> Result<Standardizer> {
        let first = datasets
            .first()
            .ok_or_else(|| Error::Data("cannot standardize an empty corpus".into()))?;
        let n = first.num_vars();
        let mut out = Standardizer::identity(n);
        for j in 0..n {
            if first.kinds[j] != VariableKind::Continuous {
                continue;
            }
            let mut count = 0usize;
            let mut sum = 0.0;
            for d in datasets {
                count += d.len();
                sum += d.data.column(j).sum();
            }
            if count == 0 {
                return Err(Error::Data("cannot standardize an empty corpus".into()));
            }
            let mean = sum / count as f64;
            let ss: f64 = datasets
                .iter()
                .map(|d| d.data.column(j).iter().map(|x| (x - mean).powi(2)).sum::<f64>())
                .sum();
            let std = (ss / count as f64).sqrt();
            out.mean[j] = mean;
            out.std[j] = if std > 1e-12 { std } else { 1.0 };
        }
        Ok(out)
    }

    pub fn apply(&self, data: &Array2<f64>) -> Array2<f64> {
        let mut out = data.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|x| (x - self.mean[j]) / self.std[j]);
        }
        out
    }

    pub fn forward(&self, j: usize, x: f64) -> f64 {
        (x - self.mean[j]) / self.std[j]
    }

    pub fn inverse(&self, j: usize, z: f64) -> f64 {
        z * self.std[j] + self.mean[j]
    }
}
