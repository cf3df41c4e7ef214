//! Tape-based reverse-mode automatic differentiation over real vectors.
//!
//! Every recorded value is a flat `Vec<f64>`. Elementwise binary primitives
//! accept a length-1 operand on either side and broadcast it; there is no
//! other broadcasting. Complex arithmetic is expressed by callers as pairs of
//! real vectors, so the engine itself never sees a complex number.
//!
//! Every primitive validates its output: domain violations (log of a
//! nonpositive value, division by zero, ...) and non-finite results come back
//! as [`TapeError`] instead of propagating NaN.
//!
//! ```
//! use chispn::autodiff::Tape;
//!
//! let mut tape = Tape::new();
//! let a = tape.param(vec![2.0]);
//! let b = tape.param(vec![3.0]);
//! let y = tape.mul(a, b).unwrap();
//! let grads = tape.backward(y).unwrap();
//! assert_eq!(tape.value(y), &[6.0]);
//! assert_eq!(grads.wrt(a), vec![3.0]);
//! assert_eq!(grads.wrt(b), vec![2.0]);
//! ```

mod check;

pub use check::{grad_check, grad_check_coords, GradCheckEntry, GradCheckReport};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TapeError {
    #[error("{op}: argument outside domain ({detail})")]
    Domain { op: &'static str, detail: String },
    #[error("{op}: non-finite result")]
    NonFinite { op: &'static str },
    #[error("{op}: shape mismatch ({left} vs {right})")]
    Shape {
        op: &'static str,
        left: usize,
        right: usize,
    },
    #[error("loss must be a scalar, got length {0}")]
    NonScalarLoss(usize),
}

pub type Result<T> = std::result::Result<T, TapeError>;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Input,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    Neg(Var),
    Exp(Var),
    Log(Var),
    Sin(Var),
    Cos(Var),
    Tan(Var),
    Powf(Var, f64),
    Abs(Var),
    Select { gate: Var, pos: Var, neg: Var },
    Sum(Var),
    MatVec { matrix: Var, rows: usize, cols: usize, x: Var },
    Max(Var, Var),
    Sigmoid(Var),
    Tanh(Var),
    Softplus(Var),
    Softmax(Var),
    Slice { src: Var, offset: usize },
    Gather { src: Var, index: Vec<usize> },
    Concat(Vec<Var>),
    Mix { weights: Var, parts: Vec<Var> },
}

#[derive(Debug, Clone)]
struct Entry {
    value: Vec<f64>,
    op: Op,
    param: bool,
}

/// Append-only record of a forward computation.
///
/// Entries are single-assignment and stored in creation order, which is a
/// topological order; [`Tape::backward`] walks them in reverse.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    entries: Vec<Entry>,
    branches: Vec<i8>,
}

#[inline]
fn at(v: &[f64], i: usize) -> f64 {
    if v.len() == 1 {
        v[0]
    } else {
        v[i]
    }
}

fn broadcast_len(op: &'static str, a: usize, b: usize) -> Result<usize> {
    if a == b || b == 1 {
        Ok(a)
    } else if a == 1 {
        Ok(b)
    } else {
        Err(TapeError::Shape {
            op,
            left: a,
            right: b,
        })
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], target: Var, len: usize, g: impl Fn(usize) -> f64, n: usize) {
    let slot = adj[target.0].get_or_insert_with(|| vec![0.0; len]);
    if len == 1 && n > 1 {
        slot[0] += (0..n).map(&g).sum::<f64>();
    } else {
        for (i, s) in slot.iter_mut().enumerate() {
            *s += g(i);
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

#[inline]
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Differentiable input. Gradients are reported for it by [`Tape::backward`].
    pub fn param(&mut self, value: Vec<f64>) -> Var {
        self.entries.push(Entry {
            value,
            op: Op::Input,
            param: true,
        });
        Var(self.entries.len() - 1)
    }

    pub fn constant(&mut self, value: Vec<f64>) -> Var {
        self.entries.push(Entry {
            value,
            op: Op::Input,
            param: false,
        });
        Var(self.entries.len() - 1)
    }

    pub fn scalar(&mut self, value: f64) -> Var {
        self.constant(vec![value])
    }

    pub fn is_param(&self, v: Var) -> bool {
        self.entries[v.0].param
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.entries[v.0].value
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        self.entries[v.0].value[0]
    }

    /// Signs of every value-dependent branch taken so far (select gates,
    /// max comparisons, and anything registered through [`Tape::note_branch`]).
    /// Two evaluations with equal traces took the same piecewise path.
    pub fn branch_trace(&self) -> &[i8] {
        &self.branches
    }

    pub fn note_branch(&mut self, tag: i8) {
        self.branches.push(tag);
    }

    fn push(&mut self, op_name: &'static str, value: Vec<f64>, op: Op) -> Result<Var> {
        if value.iter().any(|x| !x.is_finite()) {
            return Err(TapeError::NonFinite { op: op_name });
        }
        self.entries.push(Entry {
            value,
            op,
            param: false,
        });
        Ok(Var(self.entries.len() - 1))
    }

    fn binary(
        &mut self,
        name: &'static str,
        a: Var,
        b: Var,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<Var> {
        let (va, vb) = (&self.entries[a.0].value, &self.entries[b.0].value);
        let n = broadcast_len(name, va.len(), vb.len())?;
        let out = (0..n).map(|i| f(at(va, i), at(vb, i))).collect();
        self.push(name, out, op)
    }

    fn unary(&mut self, name: &'static str, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Result<Var> {
        let out = self.entries[a.0].value.iter().map(|&x| f(x)).collect();
        self.push(name, out, op)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.entries[b.0].value.contains(&0.0) {
            return Err(TapeError::Domain {
                op: "div",
                detail: "division by zero".into(),
            });
        }
        self.binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    /// Multiplies by a constant scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = self.scalar(c);
        self.mul(a, k)
    }

    /// Adds a constant scalar.
    pub fn shift(&mut self, a: Var, c: f64) -> Result<Var> {
        let k = self.scalar(c);
        self.add(a, k)
    }

    pub fn neg(&mut self, a: Var) -> Result<Var> {
        self.unary("neg", a, |x| -x, Op::Neg(a))
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary("exp", a, f64::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: Var) -> Result<Var> {
        if let Some(x) = self.entries[a.0].value.iter().find(|&&x| x <= 0.0) {
            return Err(TapeError::Domain {
                op: "log",
                detail: format!("nonpositive argument {x}"),
            });
        }
        self.unary("log", a, f64::ln, Op::Log(a))
    }

    pub fn sin(&mut self, a: Var) -> Result<Var> {
        self.unary("sin", a, f64::sin, Op::Sin(a))
    }

    pub fn cos(&mut self, a: Var) -> Result<Var> {
        self.unary("cos", a, f64::cos, Op::Cos(a))
    }

    pub fn tan(&mut self, a: Var) -> Result<Var> {
        if self.entries[a.0].value.iter().any(|x| x.cos() == 0.0) {
            return Err(TapeError::Domain {
                op: "tan",
                detail: "pole of tangent".into(),
            });
        }
        self.unary("tan", a, f64::tan, Op::Tan(a))
    }

    /// `a^p` for a constant exponent. Negative bases need an integer exponent,
    /// and zero bases need `p >= 1` so the derivative stays finite.
    pub fn powf(&mut self, a: Var, p: f64) -> Result<Var> {
        for &x in &self.entries[a.0].value {
            if (x < 0.0 && p.fract() != 0.0) || (x == 0.0 && p < 1.0) {
                return Err(TapeError::Domain {
                    op: "powf",
                    detail: format!("base {x} with exponent {p}"),
                });
            }
        }
        self.unary("powf", a, |x| x.powf(p), Op::Powf(a, p))
    }

    /// Absolute value; the derivative at exactly zero is taken as zero.
    pub fn abs(&mut self, a: Var) -> Result<Var> {
        self.unary("abs", a, f64::abs, Op::Abs(a))
    }

    /// `pos[i]` where `gate[i] > 0`, else `neg[i]`. The gate receives no gradient.
    pub fn select(&mut self, gate: Var, pos: Var, neg: Var) -> Result<Var> {
        let n = {
            let g = self.entries[gate.0].value.len();
            let p = self.entries[pos.0].value.len();
            let q = self.entries[neg.0].value.len();
            broadcast_len("select", broadcast_len("select", g, p)?, q)?
        };
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let taken = at(&self.entries[gate.0].value, i) > 0.0;
            self.branches.push(if taken { 1 } else { -1 });
            out.push(if taken {
                at(&self.entries[pos.0].value, i)
            } else {
                at(&self.entries[neg.0].value, i)
            });
        }
        self.push("select", out, Op::Select { gate, pos, neg })
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.entries[a.0].value.iter().sum();
        self.push("sum", vec![s], Op::Sum(a))
    }

    /// Row-major `rows x cols` matrix times a length-`cols` vector.
    pub fn matvec(&mut self, matrix: Var, rows: usize, cols: usize, x: Var) -> Result<Var> {
        let (m, v) = (&self.entries[matrix.0].value, &self.entries[x.0].value);
        if m.len() != rows * cols {
            return Err(TapeError::Shape {
                op: "matvec",
                left: m.len(),
                right: rows * cols,
            });
        }
        if v.len() != cols {
            return Err(TapeError::Shape {
                op: "matvec",
                left: cols,
                right: v.len(),
            });
        }
        let out = m
            .chunks_exact(cols)
            .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect();
        self.push("matvec", out, Op::MatVec { matrix, rows, cols, x })
    }

    /// Elementwise maximum; ties pick `a`.
    pub fn max(&mut self, a: Var, b: Var) -> Result<Var> {
        let n = broadcast_len("max", self.entries[a.0].value.len(), self.entries[b.0].value.len())?;
        let mut out = Vec::with_capacity(n);
        for i in 0..n {
            let (x, y) = (at(&self.entries[a.0].value, i), at(&self.entries[b.0].value, i));
            self.branches.push(if x >= y { 1 } else { -1 });
            out.push(x.max(y));
        }
        self.push("max", out, Op::Max(a, b))
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let zero = self.scalar(0.0);
        self.max(a, zero)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary("sigmoid", a, sigmoid, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary("tanh", a, f64::tanh, Op::Tanh(a))
    }

    pub fn softplus(&mut self, a: Var) -> Result<Var> {
        self.unary("softplus", a, softplus, Op::Softplus(a))
    }

    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let v = &self.entries[a.0].value;
        let m = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = v.iter().map(|x| (x - m).exp()).collect();
        let z: f64 = e.iter().sum();
        let out = e.into_iter().map(|x| x / z).collect();
        self.push("softmax", out, Op::Softmax(a))
    }

    pub fn slice(&mut self, src: Var, offset: usize, len: usize) -> Result<Var> {
        let v = &self.entries[src.0].value;
        if offset + len > v.len() {
            return Err(TapeError::Shape {
                op: "slice",
                left: v.len(),
                right: offset + len,
            });
        }
        let out = v[offset..offset + len].to_vec();
        self.push("slice", out, Op::Slice { src, offset })
    }

    pub fn index(&mut self, src: Var, i: usize) -> Result<Var> {
        self.slice(src, i, 1)
    }

    /// `out[j] = src[index[j]]`; indices may repeat.
    pub fn gather(&mut self, src: Var, index: Vec<usize>) -> Result<Var> {
        let v = &self.entries[src.0].value;
        if let Some(&bad) = index.iter().find(|&&i| i >= v.len()) {
            return Err(TapeError::Shape {
                op: "gather",
                left: v.len(),
                right: bad,
            });
        }
        let out = index.iter().map(|&i| v[i]).collect();
        self.push("gather", out, Op::Gather { src, index })
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let out = parts
            .iter()
            .flat_map(|p| self.entries[p.0].value.iter().copied())
            .collect();
        self.push("concat", out, Op::Concat(parts.to_vec()))
    }

    /// Linear combination `sum_j weights[j] * parts[j]` of equal-length vectors.
    pub fn mix(&mut self, weights: Var, parts: &[Var]) -> Result<Var> {
        let w = &self.entries[weights.0].value;
        if w.len() != parts.len() || parts.is_empty() {
            return Err(TapeError::Shape {
                op: "mix",
                left: w.len(),
                right: parts.len(),
            });
        }
        let n = self.entries[parts[0].0].value.len();
        let mut out = vec![0.0; n];
        for (wj, p) in w.iter().zip(parts) {
            let pv = &self.entries[p.0].value;
            if pv.len() != n {
                return Err(TapeError::Shape {
                    op: "mix",
                    left: n,
                    right: pv.len(),
                });
            }
            for (o, x) in out.iter_mut().zip(pv) {
                *o += wj * x;
            }
        }
        self.push("mix", out, Op::Mix { weights, parts: parts.to_vec() })
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let len = self.entries[loss.0].value.len();
        if len != 1 {
            return Err(TapeError::NonScalarLoss(len));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            let entry = &self.entries[i];
            let out = &entry.value;
            let n = out.len();
            let val = |v: Var| self.entries[v.0].value.as_slice();
            let size = |v: Var| self.entries[v.0].value.len();
            match &entry.op {
                Op::Input => {}
                Op::Add(a, b) => {
                    accumulate(&mut adj, *a, size(*a), |k| g[k], n);
                    accumulate(&mut adj, *b, size(*b), |k| g[k], n);
                }
                Op::Sub(a, b) => {
                    accumulate(&mut adj, *a, size(*a), |k| g[k], n);
                    accumulate(&mut adj, *b, size(*b), |k| -g[k], n);
                }
                Op::Mul(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    accumulate(&mut adj, *a, va.len(), |k| g[k] * at(vb, k), n);
                    accumulate(&mut adj, *b, vb.len(), |k| g[k] * at(va, k), n);
                }
                Op::Div(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    accumulate(&mut adj, *a, va.len(), |k| g[k] / at(vb, k), n);
                    accumulate(&mut adj, *b, vb.len(), |k| -g[k] * out[k] / at(vb, k), n);
                }
                Op::Neg(a) => accumulate(&mut adj, *a, n, |k| -g[k], n),
                Op::Exp(a) => accumulate(&mut adj, *a, n, |k| g[k] * out[k], n),
                Op::Log(a) => {
                    let va = val(*a);
                    accumulate(&mut adj, *a, n, |k| g[k] / va[k], n)
                }
                Op::Sin(a) => {
                    let va = val(*a);
                    accumulate(&mut adj, *a, n, |k| g[k] * va[k].cos(), n)
                }
                Op::Cos(a) => {
                    let va = val(*a);
                    accumulate(&mut adj, *a, n, |k| -g[k] * va[k].sin(), n)
                }
                Op::Tan(a) => accumulate(&mut adj, *a, n, |k| g[k] * (1.0 + out[k] * out[k]), n),
                Op::Powf(a, p) => {
                    let va = val(*a);
                    let p = *p;
                    accumulate(&mut adj, *a, n, |k| g[k] * p * va[k].powf(p - 1.0), n)
                }
                Op::Abs(a) => {
                    let va = val(*a);
                    accumulate(&mut adj, *a, n, |k| g[k] * sign(va[k]), n)
                }
                Op::Select { gate, pos, neg } => {
                    let vg = val(*gate);
                    accumulate(&mut adj, *pos, size(*pos), |k| if at(vg, k) > 0.0 { g[k] } else { 0.0 }, n);
                    accumulate(&mut adj, *neg, size(*neg), |k| if at(vg, k) > 0.0 { 0.0 } else { g[k] }, n);
                }
                Op::Sum(a) => accumulate(&mut adj, *a, size(*a), |_| g[0], size(*a)),
                Op::MatVec { matrix, rows, cols, x } => {
                    let (m, v) = (val(*matrix), val(*x));
                    let (rows, cols) = (*rows, *cols);
                    accumulate(&mut adj, *matrix, rows * cols, |k| g[k / cols] * v[k % cols], rows * cols);
                    let mut gx = vec![0.0; cols];
                    for (r, gr) in g.iter().enumerate().take(rows) {
                        for (c, s) in gx.iter_mut().enumerate() {
                            *s += m[r * cols + c] * gr;
                        }
                    }
                    accumulate(&mut adj, *x, cols, |k| gx[k], cols);
                }
                Op::Max(a, b) => {
                    let (va, vb) = (val(*a), val(*b));
                    accumulate(&mut adj, *a, va.len(), |k| if at(va, k) >= at(vb, k) { g[k] } else { 0.0 }, n);
                    accumulate(&mut adj, *b, vb.len(), |k| if at(va, k) >= at(vb, k) { 0.0 } else { g[k] }, n);
                }
                Op::Sigmoid(a) => accumulate(&mut adj, *a, n, |k| g[k] * out[k] * (1.0 - out[k]), n),
                Op::Tanh(a) => accumulate(&mut adj, *a, n, |k| g[k] * (1.0 - out[k] * out[k]), n),
                Op::Softplus(a) => {
                    let va = val(*a);
                    accumulate(&mut adj, *a, n, |k| g[k] * sigmoid(va[k]), n)
                }
                Op::Softmax(a) => {
                    let dot: f64 = g.iter().zip(out).map(|(x, y)| x * y).sum();
                    accumulate(&mut adj, *a, n, |k| out[k] * (g[k] - dot), n)
                }
                Op::Slice { src, offset } => {
                    let offset = *offset;
                    let slot = adj[src.0].get_or_insert_with(|| vec![0.0; self.entries[src.0].value.len()]);
                    for (k, gk) in g.iter().enumerate() {
                        slot[offset + k] += gk;
                    }
                }
                Op::Gather { src, index } => {
                    let slot = adj[src.0].get_or_insert_with(|| vec![0.0; self.entries[src.0].value.len()]);
                    for (k, &j) in index.iter().enumerate() {
                        slot[j] += g[k];
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = size(*p);
                        accumulate(&mut adj, *p, len, |k| g[offset + k], len);
                        offset += len;
                    }
                }
                Op::Mix { weights, parts } => {
                    let w = val(*weights);
                    let gw: Vec<f64> = parts
                        .iter()
                        .map(|p| val(*p).iter().zip(&g).map(|(x, y)| x * y).sum())
                        .collect();
                    accumulate(&mut adj, *weights, w.len(), |k| gw[k], w.len());
                    for (j, p) in parts.iter().enumerate() {
                        accumulate(&mut adj, *p, n, |k| w[j] * g[k], n);
                    }
                }
            }
            adj[i] = Some(g);
        }
        Ok(Gradients { adjoints: adj })
    }
}

fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Adjoints produced by one backward sweep.
#[derive(Debug, Clone)]
pub struct Gradients {
    adjoints: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.adjoints.get(v.0).and_then(|a| a.as_deref())
    }

    /// Gradient with respect to `v`; zeros if `v` does not influence the loss.
    /// The length is taken from the recorded adjoint, or 1 if there is none,
    /// so prefer [`Gradients::wrt_len`] when the shape matters.
    pub fn wrt(&self, v: Var) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0])
    }

    pub fn wrt_len(&self, v: Var, len: usize) -> Vec<f64> {
        self.get(v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; len])
    }
}
