use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{ChiSquared, Distribution, Pareto, StandardNormal};

use super::{Calibration, ModelName, NormalScale, ScmOptions, StructuralModel, VariableDef, VariableKind};

fn continuous(name: &str) -> VariableDef {
    VariableDef {
        name: name.into(),
        kind: VariableKind::Continuous,
        domain_range: (0.0, 1.0),
    }
}

fn discrete(name: &str, low: i64, high: i64) -> VariableDef {
    VariableDef {
        name: name.into(),
        kind: VariableKind::Discrete {
            support: (low..=high).collect(),
        },
        domain_range: (low as f64, high as f64),
    }
}

/// Variables, edges and interveneable set; calibration left empty.
pub(super) fn skeleton(name: ModelName, options: ScmOptions) -> StructuralModel {
    let (variables, edges, interveneable) = match name {
        ModelName::CausalHealth => {
            let vars = vec![
                continuous("A"),
                continuous("F"),
                continuous("H"),
                continuous("M"),
                discrete("D1", 0, 1),
                discrete("D2", 0, 1),
                discrete("D3", 0, 1),
            ];
            let mut edges = vec![(0, 1), (0, 2), (1, 2), (2, 3)];
            for d in 4..7 {
                edges.extend((0..4).map(|p| (p, d)));
            }
            (vars, edges, vec![0, 1, 2, 3])
        }
        ModelName::Hiring => {
            // Sc, W, E, Sk, B, I, D
            let vars = vec![
                discrete("Sc", 0, 9),
                continuous("W"),
                discrete("E", 0, 6),
                continuous("Sk"),
                continuous("B"),
                continuous("I"),
                discrete("D", 0, 1),
            ];
            let edges = vec![(0, 4), (1, 3), (2, 3), (3, 5), (4, 5), (5, 6), (3, 6)];
            (vars, edges, vec![5, 2, 3, 4])
        }
        ModelName::Student => {
            // Sc, Q, M, C, T, S
            let vars = vec![
                discrete("Sc", 0, 4),
                continuous("Q"),
                continuous("M"),
                continuous("C"),
                continuous("T"),
                discrete("S", 0, 2),
            ];
            let edges = vec![(0, 1), (1, 3), (2, 3), (1, 4), (2, 4), (4, 5), (3, 5)];
            (vars, edges, vec![1, 2, 3, 4])
        }
    };
    let n = variables.len();
    StructuralModel {
        name,
        variables,
        edges,
        interveneable,
        calibration: Calibration {
            cutoffs: BTreeMap::new(),
            ranges: vec![(0.0, 1.0); n],
        },
        options,
    }
}

/// Installs a calibration, copying its ranges onto the continuous variables.
pub(super) fn apply(model: &mut StructuralModel, calibration: Calibration) {
    for (def, &range) in model.variables.iter_mut().zip(&calibration.ranges) {
        if !def.kind.is_discrete() {
            def.domain_range = range;
        }
    }
    model.calibration = calibration;
}

struct Noise<'a, R> {
    rng: &'a mut R,
    scale: NormalScale,
}

impl<R: Rng> Noise<'_, R> {
    /// `N(mu, s)`; `s` is a standard deviation or a variance per the model option.
    fn normal(&mut self, mu: f64, s: f64) -> f64 {
        let sd = match self.scale {
            NormalScale::StdDev => s,
            NormalScale::Variance => s.sqrt(),
        };
        let z: f64 = StandardNormal.sample(self.rng);
        mu + sd * z
    }

    fn uniform(&mut self, low: f64, high: f64) -> f64 {
        self.rng.random_range(low..high)
    }

    /// Inclusive on both ends.
    fn uniform_int(&mut self, low: i64, high: i64) -> f64 {
        self.rng.random_range(low..=high) as f64
    }

    fn chi_squared(&mut self, df: f64) -> f64 {
        ChiSquared::new(df).expect("positive degrees of freedom").sample(self.rng)
    }

    /// Classical Pareto with unit scale, mean `a / (a - 1)`.
    fn pareto(&mut self, shape: f64) -> f64 {
        Pareto::new(1.0, shape).expect("positive shape").sample(self.rng)
    }
}

fn cutoff(model: &StructuralModel, key: &str) -> f64 {
    model.calibration.cutoffs.get(key).copied().unwrap_or(0.0)
}

/// Draws one row in topological order. Variables with a `fixed` value skip
/// their equation (and its noise draw).
pub(super) fn draw_row<R: Rng>(model: &StructuralModel, rng: &mut R, fixed: &[Option<f64>], row: &mut [f64]) {
    let mut noise = Noise {
        rng,
        scale: model.options.normal_scale,
    };
    macro_rules! set {
        ($i:expr, $e:expr) => {
            row[$i] = match fixed[$i] {
                Some(v) => v,
                None => $e,
            }
        };
    }
    match model.name {
        ModelName::CausalHealth => {
            set!(0, noise.uniform(0.0, 100.0));
            let a = row[0];
            set!(1, 0.5 * a + noise.normal(10.0, 10.0));
            let f = row[1];
            set!(2, (100.0 - a * a) / 100.0 + 0.5 * f + noise.normal(40.0, 30.0));
            let h = row[2];
            set!(3, 0.5 * h + noise.normal(20.0, 10.0));
            let m = row[3];
            let d1 = if a <= model.options.health_branch_threshold {
                0.00108 * a.powi(3) - 0.08862 * a * a + 1.337 * a + noise.normal(25.0, 10.0)
            } else {
                noise.normal(5.0, 10.0)
            };
            let d2 = 0.0175 * f + 0.525 * m + noise.normal(0.0, 5.0);
            let d3 = 0.00013857 * a.powi(3) - 0.0135 * a * a + 0.2025 * a + 0.2025 * h + noise.normal(17.1714, 0.2 * a);
            let scores = [d1, d2, d3];
            let winner = (0..3).fold(0, |best, i| if scores[i] > scores[best] { i } else { best });
            for i in 0..3 {
                set!(4 + i, if winner == i { 1.0 } else { 0.0 });
            }
        }
        ModelName::Hiring => {
            set!(0, noise.uniform_int(0, 9));
            set!(1, 0.5 * noise.chi_squared(4.0));
            set!(2, noise.uniform_int(0, 6));
            set!(3, 0.8 * row[2] + 1.2 * row[1] + noise.pareto(2.75));
            set!(4, row[0] + noise.normal(0.0, 1.5));
            set!(5, 3.0 * row[3] - 0.5 * row[4] + noise.normal(0.0, 4.0));
            let score = 3.0 * row[5] + row[3];
            set!(6, if score >= cutoff(model, "hiring") { 1.0 } else { 0.0 });
        }
        ModelName::Student => {
            set!(0, noise.uniform_int(0, 4));
            set!(1, noise.normal(2.5, 3.0) - row[0]);
            set!(2, noise.normal(10.0, 3.0));
            set!(3, 0.8 * row[1] + 0.2 * row[2] + noise.pareto(3.0));
            set!(4, 0.4 * row[1] + 0.6 * row[2] + noise.normal(0.0, 1.0));
            let total = row[4] + row[3];
            let regional = (total >= cutoff(model, "regional")) as u8;
            let national = (total >= cutoff(model, "national")) as u8;
            set!(5, (regional + national) as f64);
        }
    }
}

/// Linear-interpolation quantile of an ascending slice, `q` in `[0, 1]`.
pub fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(f64::total_cmp);
    v
}

pub(super) fn calibrate(model: &StructuralModel, rows: usize, seed: u64) -> Calibration {
    let n = model.num_vars();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fixed = vec![None; n];
    let mut row = vec![0.0; n];
    let mut columns: Vec<Vec<f64>> = vec![Vec::with_capacity(rows); n];
    let mut score = Vec::with_capacity(rows);
    for _ in 0..rows {
        draw_row(model, &mut rng, &fixed, &mut row);
        for (c, v) in columns.iter_mut().zip(&row) {
            c.push(*v);
        }
        match model.name {
            ModelName::Hiring => score.push(3.0 * row[5] + row[3]),
            ModelName::Student => score.push(row[4] + row[3]),
            ModelName::CausalHealth => {}
        }
    }
    let ranges = model
        .variables
        .iter()
        .zip(columns)
        .map(|(def, col)| match def.kind {
            VariableKind::Continuous => {
                let s = sorted(col);
                (quantile(&s, 0.01), quantile(&s, 0.99))
            }
            VariableKind::Discrete { .. } => def.domain_range,
        })
        .collect();
    let mut cutoffs = BTreeMap::new();
    let score = sorted(score);
    match model.name {
        ModelName::Hiring => {
            cutoffs.insert("hiring".into(), quantile(&score, 0.5));
        }
        ModelName::Student => {
            cutoffs.insert("regional".into(), quantile(&score, 0.6));
            cutoffs.insert("national".into(), quantile(&score, 0.9));
        }
        ModelName::CausalHealth => {}
    }
    Calibration { cutoffs, ranges }
}
