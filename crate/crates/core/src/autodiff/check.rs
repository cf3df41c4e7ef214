use super::{Result, Tape, Var};

/// Denominator floor for the relative error, so that coordinates with a
/// vanishing gradient are judged on absolute error instead.
const REL_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckEntry {
    pub index: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
    /// The central-difference stencil crossed a branch boundary, so the
    /// comparison is meaningless for this coordinate.
    pub excluded: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub tolerance: f64,
}

impl GradCheckReport {
    pub fn max_rel_error(&self) -> f64 {
        self.entries
            .iter()
            .filter(|e| !e.excluded)
            .map(|e| e.rel_error)
            .fold(0.0, f64::max)
    }

    pub fn excluded(&self) -> usize {
        self.entries.iter().filter(|e| e.excluded).count()
    }

    pub fn checked(&self) -> usize {
        self.entries.len() - self.excluded()
    }

    pub fn passed(&self) -> bool {
        self.max_rel_error() < self.tolerance
    }
}

fn evaluate<F>(f: &F, point: &[f64]) -> Result<(f64, Vec<i8>)>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.param(point.to_vec());
    let y = f(&mut tape, x)?;
    Ok((tape.scalar_value(y), tape.branch_trace().to_vec()))
}

/// Compares reverse-mode gradients of `f` against central differences with
/// step `h` at every coordinate of `point`.
///
/// `f` receives a fresh tape and the point as one parameter vector, and must
/// return a scalar.
pub fn grad_check<F>(f: F, point: &[f64], h: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let coords: Vec<usize> = (0..point.len()).collect();
    grad_check_coords(f, point, &coords, h, tolerance)
}

/// Like [`grad_check`], restricted to the listed coordinates.
pub fn grad_check_coords<F>(
    f: F,
    point: &[f64],
    coords: &[usize],
    h: f64,
    tolerance: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, Var) -> Result<Var>,
{
    let mut tape = Tape::new();
    let x = tape.param(point.to_vec());
    let y = f(&mut tape, x)?;
    let analytic = tape.backward(y)?.wrt_len(x, point.len());
    let base_trace = tape.branch_trace().to_vec();

    let mut entries = Vec::with_capacity(coords.len());
    let mut shifted = point.to_vec();
    for &i in coords {
        shifted[i] = point[i] + h;
        let (plus, plus_trace) = evaluate(&f, &shifted)?;
        shifted[i] = point[i] - h;
        let (minus, minus_trace) = evaluate(&f, &shifted)?;
        shifted[i] = point[i];

        let numeric = (plus - minus) / (2.0 * h);
        let a = analytic[i];
        let excluded = plus_trace != base_trace || minus_trace != base_trace;
        let rel_error = (a - numeric).abs() / a.abs().max(numeric.abs()).max(REL_FLOOR);
        entries.push(GradCheckEntry {
            index: i,
            analytic: a,
            numeric,
            rel_error,
            excluded,
        });
    }
    Ok(GradCheckReport { entries, tolerance })
}
