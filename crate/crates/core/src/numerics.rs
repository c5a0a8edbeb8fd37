//! Dense numerical core shared by every model component.
//!
//! Everything is generic over [`Real`] so the same code runs in `f64` for
//! training and gradient checking and in `f32` where storage precision is
//! enough.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

use num_traits::{Float, FromPrimitive, ToPrimitive};

use crate::error::{Error, Result};

/// Floating-point scalar used throughout the crate.
pub trait Real:
    Float
    + FromPrimitive
    + ToPrimitive
    + Sum
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Default
    + Debug
    + Display
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("representable literal")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("finite scalar")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<T>,
}

impl<T: Real> DenseMatrix<T> {
    pub fn new(rows: usize, cols: usize, data: Vec<T>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::Shape(format!(
                "{} values for a {rows}x{cols} matrix",
                data.len()
            )));
        }
        if let Some(i) = data.iter().position(|x| !x.is_finite()) {
            return Err(Error::NonFinite {
                what: "matrix entry",
                block: 0,
                index: i,
            });
        }
        Ok(Self { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![T::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |i, j| if i == j { T::one() } else { T::zero() })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [T] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: T) {
        self.data[i * self.cols + j] = v;
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.rows == other.rows && self.cols == other.cols
    }

    /// `x · M` for a row vector `x` of length `rows`.
    pub fn left_mul(&self, x: &[T]) -> Vec<T> {
        debug_assert_eq!(x.len(), self.rows);
        let mut out = vec![T::zero(); self.cols];
        for (i, &xi) in x.iter().enumerate() {
            if xi == T::zero() {
                continue;
            }
            for (o, &m) in out.iter_mut().zip(self.row(i)) {
                *o += xi * m;
            }
        }
        out
    }

    /// `y · Mᵀ` for a row vector `y` of length `cols`.
    pub fn left_mul_t(&self, y: &[T]) -> Vec<T> {
        debug_assert_eq!(y.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), y)).collect()
    }

    /// `M += scale · xᵀ y`.
    pub fn add_outer(&mut self, x: &[T], y: &[T], scale: T) {
        debug_assert_eq!(x.len(), self.rows);
        debug_assert_eq!(y.len(), self.cols);
        for (i, &xi) in x.iter().enumerate() {
            let a = xi * scale;
            if a == T::zero() {
                continue;
            }
            for (m, &yj) in self.row_mut(i).iter_mut().zip(y) {
                *m += a * yj;
            }
        }
    }

    pub fn fill_zero(&mut self) {
        self.data.iter_mut().for_each(|x| *x = T::zero());
    }

    pub fn cast<U: Real>(&self) -> DenseMatrix<U> {
        DenseMatrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|x| U::lit(x.as_f64())).collect(),
        }
    }
}

pub fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).fold(T::zero(), |acc, (&x, &y)| acc + x * y)
}

pub fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

/// `y += alpha · x`.
pub fn axpy<T: Real>(alpha: T, x: &[T], y: &mut [T]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// Softmax over the live positions of `mask`; masked positions get exactly 0.
///
/// Masked logits act as `-inf` addends. The maximum live logit is subtracted
/// before exponentiation.
pub fn softmax_masked<T: Real>(logits: &[T], mask: &[bool]) -> Result<Vec<T>> {
    if logits.len() != mask.len() {
        return Err(Error::Shape(format!(
            "{} logits vs {} mask entries",
            logits.len(),
            mask.len()
        )));
    }
    let max = logits
        .iter()
        .zip(mask)
        .filter(|(_, &live)| live)
        .map(|(&x, _)| x)
        .fold(None, |m: Option<T>, x| Some(m.map_or(x, |m| m.max(x))))
        .ok_or(Error::EmptySupport)?;
    let mut out: Vec<T> = logits
        .iter()
        .zip(mask)
        .map(|(&x, &live)| if live { (x - max).exp() } else { T::zero() })
        .collect();
    let z: T = out.iter().copied().sum();
    out.iter_mut().for_each(|p| *p /= z);
    Ok(out)
}

/// Softmax over every position.
pub fn softmax<T: Real>(logits: &[T]) -> Result<Vec<T>> {
    softmax_masked(logits, &vec![true; logits.len()])
}

/// Backward pass of softmax: given probabilities `p` and `dL/dp`, returns `dL/dlogits`.
pub fn softmax_backward<T: Real>(p: &[T], dp: &[T]) -> Vec<T> {
    let s = dot(p, dp);
    p.iter().zip(dp).map(|(&pi, &gi)| pi * (gi - s)).collect()
}

pub fn cosine<T: Real>(u: &[T], v: &[T]) -> Result<T> {
    if u.len() != v.len() {
        return Err(Error::Shape(format!("cosine of lengths {} and {}", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::UndefinedCosine);
    }
    let c = dot(u, v) / (nu * nv);
    Ok(c.max(-T::one()).min(T::one()))
}

/// Gradients of `cosine(u, v)` with respect to `u` and `v`, scaled by `upstream`.
pub fn cosine_backward<T: Real>(u: &[T], v: &[T], upstream: T) -> Result<(Vec<T>, Vec<T>)> {
    let (nu, nv) = (norm(u), norm(v));
    if nu == T::zero() || nv == T::zero() {
        return Err(Error::UndefinedCosine);
    }
    let c = dot(u, v) / (nu * nv);
    let inv = T::one() / (nu * nv);
    let du = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| upstream * (vi * inv - c * ui / (nu * nu)))
        .collect();
    let dv = u
        .iter()
        .zip(v)
        .map(|(&ui, &vi)| upstream * (ui * inv - c * vi / (nv * nv)))
        .collect();
    Ok((du, dv))
}

/// A collection of trainable arrays addressed as flat blocks.
pub trait ParamSet<T> {
    fn blocks(&self) -> Vec<&[T]>;
    fn blocks_mut(&mut self) -> Vec<&mut [T]>;

    fn block_lens(&self) -> Vec<usize> {
        self.blocks().iter().map(|b| b.len()).collect()
    }
}

impl<T> ParamSet<T> for Vec<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![self.as_slice()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.as_mut_slice()]
    }
}

impl<T: Real> ParamSet<T> for DenseMatrix<T> {
    fn blocks(&self) -> Vec<&[T]> {
        vec![self.data()]
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        vec![self.data_mut()]
    }
}

/// Outcome of comparing an analytic gradient to central differences.
#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport<T> {
    pub max_abs_err: T,
    pub max_rel_err: T,
    /// `(block, index)` of the coordinate with the largest scaled error.
    pub worst_index: (usize, usize),
    pub passed: bool,
}

/// Compares the gradient returned by `loss_fn` at `params` against
/// `(f(x+h) - f(x-h)) / 2h` for every coordinate.
///
/// A coordinate passes when `|a - n| / max(1, |a|, |n|) <= tol`, i.e. the
/// absolute error for gradients of magnitude below one and the relative
/// error above.
pub fn grad_check<T, P, F>(loss_fn: F, params: &P, step: T, tol: T) -> Result<GradCheckReport<T>>
where
    T: Real,
    P: ParamSet<T> + Clone,
    F: Fn(&P) -> Result<(T, P)>,
{
    if !(step > T::zero()) {
        return Err(Error::Invalid("finite-difference step must be positive".into()));
    }
    let (base, analytic) = loss_fn(params)?;
    if !base.is_finite() {
        return Err(Error::NonFinite {
            what: "loss",
            block: 0,
            index: 0,
        });
    }
    if analytic.block_lens() != params.block_lens() {
        return Err(Error::Shape("gradient shape differs from parameters".into()));
    }
    let two = T::lit(2.0);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_abs_err: T::zero(),
        max_rel_err: T::zero(),
        worst_index: (0, 0),
        passed: true,
    };
    let mut worst = T::zero();
    let lens = params.block_lens();
    let grads = analytic.blocks();
    for (b, &len) in lens.iter().enumerate() {
        for i in 0..len {
            let x0 = params.blocks()[b][i];
            probe.blocks_mut()[b][i] = x0 + step;
            let (plus, _) = loss_fn(&probe)?;
            probe.blocks_mut()[b][i] = x0 - step;
            let (minus, _) = loss_fn(&probe)?;
            probe.blocks_mut()[b][i] = x0;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFinite {
                    what: "loss",
                    block: b,
                    index: i,
                });
            }
            let numeric = (plus - minus) / (two * step);
            let a = grads[b][i];
            let abs = (a - numeric).abs();
            let mag = a.abs().max(numeric.abs());
            let rel = if mag > T::zero() { abs / mag } else { T::zero() };
            let scaled = abs / mag.max(T::one());
            report.max_abs_err = report.max_abs_err.max(abs);
            report.max_rel_err = report.max_rel_err.max(rel);
            if scaled > worst {
                worst = scaled;
                report.worst_index = (b, i);
            }
        }
    }
    report.passed = worst <= tol;
    Ok(report)
}

/// First/second moment accumulators for [`adam_step`].
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub beta1: T,
    pub beta2: T,
    pub eps: T,
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Real> Default for AdamState<T> {
    fn default() -> Self {
        Self::new(T::lit(0.9), T::lit(0.999), T::lit(1e-8))
    }
}

impl<T: Real> AdamState<T> {
    pub fn new(beta1: T, beta2: T, eps: T) -> Self {
        Self {
            beta1,
            beta2,
            eps,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn moments(&self) -> (&[Vec<T>], &[Vec<T>]) {
        (&self.m, &self.v)
    }
}

/// One bias-corrected Adam update of `params` in place.
pub fn adam_step<T, P>(params: &mut P, grads: &P, state: &mut AdamState<T>, lr: T) -> Result<()>
where
    T: Real,
    P: ParamSet<T>,
{
    let lens = params.block_lens();
    if grads.block_lens() != lens {
        return Err(Error::Shape("gradient blocks differ from parameter blocks".into()));
    }
    if state.m.is_empty() {
        state.m = lens.iter().map(|&n| vec![T::zero(); n]).collect();
        state.v = state.m.clone();
    } else if state.m.iter().map(Vec::len).collect::<Vec<_>>() != lens {
        return Err(Error::Shape("optimizer state differs from parameter blocks".into()));
    }
    state.step += 1;
    let t = state.step as i32;
    let c1 = T::one() - state.beta1.powi(t);
    let c2 = T::one() - state.beta2.powi(t);
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    for (((p, g), m), v) in params
        .blocks_mut()
        .into_iter()
        .zip(grads.blocks())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        for i in 0..p.len() {
            let gi = g[i];
            m[i] = b1 * m[i] + (T::one() - b1) * gi;
            v[i] = b2 * v[i] + (T::one() - b2) * gi * gi;
            let mhat = m[i] / c1;
            let vhat = v[i] / c2;
            p[i] -= lr * mhat / (vhat.sqrt() + eps);
        }
    }
    Ok(())
}
