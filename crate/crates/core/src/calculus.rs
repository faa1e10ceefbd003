//! Delta calculus on finite realizations.
//!
//! On a finite scale every point but the last is right-scattered, so
//! derivatives are difference quotients and integrals are μ-weighted sums.
//! Operations that look one step ahead shrink the support at the top instead
//! of padding it.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::timescale::TimeScale;

/// An `n`-component function sampled on the index window `[lo, hi]` of a scale.
///
/// Values are stored row-major: point `k` occupies
/// `values[(k − lo)·dim .. (k − lo + 1)·dim]`.
#[derive(Debug, Clone)]
pub struct GridFunction {
    scale: Arc<TimeScale>,
    lo: usize,
    dim: usize,
    values: Vec<f64>,
}

impl PartialEq for GridFunction {
    fn eq(&self, other: &Self) -> bool {
        self.same_scale(other) && self.lo == other.lo && self.dim == other.dim && self.values == other.values
    }
}

impl GridFunction {
    pub fn new(scale: Arc<TimeScale>, lo: usize, dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::DimensionMismatch { expected: 1, got: 0 });
        }
        if values.is_empty() || !values.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: values.len(),
            });
        }
        let count = values.len() / dim;
        let hi = lo + count - 1;
        if hi > scale.last_index() {
            return Err(Error::IndexOutOfRange {
                index: hi,
                max: scale.last_index(),
            });
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFiniteValue {
                index: lo + pos / dim,
                component: pos % dim,
            });
        }
        Ok(GridFunction { scale, lo, dim, values })
    }

    /// Samples `f(t)` (an `n`-vector) at every point of the scale.
    pub fn from_fn<F>(scale: &Arc<TimeScale>, dim: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> Vec<f64>,
    {
        let mut values = Vec::with_capacity(scale.len() * dim);
        for &t in scale.points() {
            let v = f(t);
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            values.extend(v);
        }
        Self::new(scale.clone(), 0, dim, values)
    }

    pub fn scalar_from_fn<F>(scale: &Arc<TimeScale>, mut f: F) -> Result<Self>
    where
        F: FnMut(f64) -> f64,
    {
        Self::from_fn(scale, 1, |t| vec![f(t)])
    }

    pub fn constant(scale: &Arc<TimeScale>, value: &[f64]) -> Result<Self> {
        Self::from_fn(scale, value.len(), |_| value.to_vec())
    }

    pub fn zeros(scale: &Arc<TimeScale>, dim: usize) -> Self {
        GridFunction {
            scale: scale.clone(),
            lo: 0,
            dim,
            values: vec![0.0; scale.len() * dim],
        }
    }

    /// Builds a function from per-component columns over `[lo, lo + len)`.
    pub fn from_components(scale: Arc<TimeScale>, lo: usize, columns: &[Vec<f64>]) -> Result<Self> {
        let dim = columns.len();
        let len = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != len) {
            return Err(Error::DimensionMismatch {
                expected: len,
                got: columns.iter().map(Vec::len).find(|&l| l != len).unwrap_or(0),
            });
        }
        let mut values = Vec::with_capacity(len * dim);
        for k in 0..len {
            values.extend(columns.iter().map(|c| c[k]));
        }
        Self::new(scale, lo, dim, values)
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn lo(&self) -> usize {
        self.lo
    }

    pub fn hi(&self) -> usize {
        self.lo + self.values.len() / self.dim - 1
    }

    /// Number of support points.
    pub fn support_len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn covers_full_scale(&self) -> bool {
        self.lo == 0 && self.hi() == self.scale.last_index()
    }

    /// The `n`-vector at point `k`.
    pub fn value(&self, k: usize) -> Result<&[f64]> {
        if k < self.lo || k > self.hi() {
            return Err(Error::IndexOutOfRange {
                index: k,
                max: self.hi(),
            });
        }
        Ok(self.row(k))
    }

    pub(crate) fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    #[inline]
    pub(crate) fn row(&self, k: usize) -> &[f64] {
        let start = (k - self.lo) * self.dim;
        &self.values[start..start + self.dim]
    }

    #[inline]
    pub(crate) fn at(&self, k: usize, i: usize) -> f64 {
        self.values[(k - self.lo) * self.dim + i]
    }

    /// Values of component `i` over the support.
    pub fn component(&self, i: usize) -> Vec<f64> {
        self.values.iter().skip(i).step_by(self.dim).copied().collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn same_scale(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.scale, &other.scale) || *self.scale == *other.scale
    }

    /// Restriction to `[lo, hi]`, which must lie inside the current support.
    pub fn restrict(&self, lo: usize, hi: usize) -> Result<Self> {
        if lo < self.lo || hi > self.hi() || lo > hi {
            return Err(Error::BadRange {
                lo,
                hi,
                support_lo: self.lo,
                support_hi: self.hi(),
            });
        }
        let values = self.values[(lo - self.lo) * self.dim..(hi - self.lo + 1) * self.dim].to_vec();
        Ok(GridFunction {
            scale: self.scale.clone(),
            lo,
            dim: self.dim,
            values,
        })
    }

    /// Same values re-homed on `scale`, starting at index `lo`. Used to move
    /// between a scale and one of its windows.
    pub fn rehome(&self, scale: Arc<TimeScale>, lo: usize) -> Result<Self> {
        Self::new(scale, lo, self.dim, self.values.clone())
    }

    fn zip_with(&self, other: &GridFunction, op: impl Fn(f64, f64) -> f64) -> Result<Self> {
        if !self.same_scale(other) {
            return Err(Error::ScaleMismatch);
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        let lo = self.lo.max(other.lo);
        let hi = self.hi().min(other.hi());
        if lo > hi {
            return Err(Error::SupportMismatch {
                expected_lo: self.lo,
                expected_hi: self.hi(),
                lo: other.lo,
                hi: other.hi(),
            });
        }
        let mut values = Vec::with_capacity((hi - lo + 1) * self.dim);
        for k in lo..=hi {
            values.extend(self.row(k).iter().zip(other.row(k)).map(|(&a, &b)| op(a, b)));
        }
        Self::new(self.scale.clone(), lo, self.dim, values)
    }

    /// Pointwise sum on the common support.
    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    /// Pointwise difference on the common support.
    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    /// Pointwise (componentwise) product on the common support.
    pub fn mul(&self, other: &GridFunction) -> Result<Self> {
        self.zip_with(other, |a, b| a * b)
    }

    pub fn scaled(&self, c: f64) -> Self {
        self.map(|v| c * v)
    }

    /// Scales component `i` by `factors[i]`.
    pub fn scaled_components(&self, factors: &[f64]) -> Result<Self> {
        if factors.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: factors.len(),
            });
        }
        let mut out = self.clone();
        for (j, v) in out.values.iter_mut().enumerate() {
            *v *= factors[j % self.dim];
        }
        Ok(out)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Self {
        GridFunction {
            scale: self.scale.clone(),
            lo: self.lo,
            dim: self.dim,
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    /// Largest pointwise difference on the common support.
    pub fn max_diff(&self, other: &GridFunction) -> Result<f64> {
        Ok(self.sub(other)?.max_abs())
    }

    pub fn delta_derivative(&self) -> Result<Self> {
        delta_derivative(self)
    }

    pub fn delta_second(&self) -> Result<Self> {
        delta_second(self)
    }

    pub fn sigma_shift(&self) -> Result<Self> {
        sigma_shift(self)
    }
}

fn require_support(u: &GridFunction, needed: usize) -> Result<()> {
    if u.support_len() < needed {
        Err(Error::EmptySupport {
            needed,
            have: u.support_len(),
        })
    } else {
        Ok(())
    }
}

/// `u^Δ(p_k) = (u_{k+1} − u_k) / μ(p_k)` on `[lo, hi − 1]`.
pub fn delta_derivative(u: &GridFunction) -> Result<GridFunction> {
    require_support(u, 2)?;
    let ts = &u.scale;
    let mut values = Vec::with_capacity(u.values.len() - u.dim);
    for k in u.lo..u.hi() {
        let mu = ts.mu(k);
        values.extend(u.row(k + 1).iter().zip(u.row(k)).map(|(&next, &cur)| (next - cur) / mu));
    }
    GridFunction::new(u.scale.clone(), u.lo, u.dim, values)
}

/// Second delta derivative on `[lo, hi − 2]`; uses `u_k, u_{k+1}, u_{k+2}`.
pub fn delta_second(u: &GridFunction) -> Result<GridFunction> {
    require_support(u, 3)?;
    delta_derivative(&delta_derivative(u)?)
}

/// `u^σ(p_k) = u_{k+1}` on `[lo, hi − 1]`.
pub fn sigma_shift(u: &GridFunction) -> Result<GridFunction> {
    require_support(u, 2)?;
    GridFunction::new(u.scale.clone(), u.lo, u.dim, u.values[u.dim..].to_vec())
}

/// `∫_{p_lo}^{p_hi} g Δt = Σ_{k=lo}^{hi−1} μ(p_k)·g_k`, componentwise.
///
/// The point `hi` itself is excluded, so `g` only needs values on
/// `[lo, hi − 1]`. An empty range gives zeros.
pub fn delta_integral(g: &GridFunction, lo: usize, hi: usize) -> Result<Vec<f64>> {
    let bad = || Error::BadRange {
        lo,
        hi,
        support_lo: g.lo,
        support_hi: g.hi(),
    };
    if lo > hi || hi > g.scale.last_index() {
        return Err(bad());
    }
    let mut acc = vec![0.0; g.dim];
    if lo == hi {
        return Ok(acc);
    }
    if lo < g.lo || hi - 1 > g.hi() {
        return Err(bad());
    }
    for k in lo..hi {
        let mu = g.scale.mu(k);
        for (a, &v) in acc.iter_mut().zip(g.row(k)) {
            *a += mu * v;
        }
    }
    Ok(acc)
}
