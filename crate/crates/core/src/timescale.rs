//! Finite realizations of time scales.
//!
//! A [`TimeScale`] is a strictly increasing list `p_0 < … < p_N` with `N ≥ 3`.
//! The Dirichlet interval is identified with the whole list:
//! `a = p_0`, `b = p_{N−2}`, `σ(b) = p_{N−1}`, `σ²(b) = p_N`.
//! Every point is addressed by index; σ and ρ saturate at the extremes.

use crate::error::{Error, Result};

/// Absolute tolerance used when looking a point up by value.
pub const LOOKUP_TOL: f64 = 1e-12;

/// How a scale was constructed. Diagnostic only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScaleKind {
    Uniform,
    Quantum,
    Explicit,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeScale {
    points: Vec<f64>,
    kind: ScaleKind,
}

impl TimeScale {
    pub fn from_points(points: Vec<f64>) -> Result<Self> {
        Self::build(points, ScaleKind::Explicit)
    }

    /// `n` equally spaced points on `[a, end]`; the finite stand-in for `hZ`.
    pub fn uniform(a: f64, end: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::TooFewPoints { got: n });
        }
        if !(end > a) || !a.is_finite() || !end.is_finite() {
            return Err(Error::DegenerateInterval { start: a, end });
        }
        let step = (end - a) / (n - 1) as f64;
        let mut points: Vec<f64> = (0..n).map(|k| a + k as f64 * step).collect();
        // pin the right endpoint exactly
        points[n - 1] = end;
        Self::build(points, ScaleKind::Uniform)
    }

    /// Truncation of the closure of `q^Z` to `[0, 1]`:
    /// `{0} ∪ {q^{−K}, …, q^{−1}, 1}`. The accumulation point 0 is kept as an
    /// explicit left endpoint, so `μ(0) = q^{−K}` carries the dropped tail.
    pub fn quantum(q: f64, k: usize) -> Result<Self> {
        if !(q > 1.0) || !q.is_finite() {
            return Err(Error::InvalidBase { q });
        }
        if k < 3 {
            return Err(Error::TooFewPoints { got: k + 2 });
        }
        let mut points = Vec::with_capacity(k + 2);
        points.push(0.0);
        points.extend((0..=k).rev().map(|j| q.powi(-(j as i32))));
        Self::build(points, ScaleKind::Quantum)
    }

    fn build(points: Vec<f64>, kind: ScaleKind) -> Result<Self> {
        if let Some(index) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::NonFinitePoint { index });
        }
        if let Some(w) = points.windows(2).position(|w| !(w[1] > w[0])) {
            return Err(Error::NonMonotonePoints { index: w + 1 });
        }
        if points.len() < 4 {
            return Err(Error::TooFewPoints { got: points.len() });
        }
        Ok(TimeScale { points, kind })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn kind(&self) -> ScaleKind {
        self.kind
    }

    /// Number of points, `N + 1`.
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Largest index `N`.
    pub fn last_index(&self) -> usize {
        self.points.len() - 1
    }

    pub fn point(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.points[k])
    }

    pub fn sigma(&self, k: usize) -> Result<usize> {
        self.check(k)?;
        Ok((k + 1).min(self.last_index()))
    }

    pub fn rho(&self, k: usize) -> Result<usize> {
        self.check(k)?;
        Ok(k.saturating_sub(1))
    }

    pub fn graininess(&self, k: usize) -> Result<f64> {
        self.check(k)?;
        Ok(self.mu(k))
    }

    /// Unchecked graininess for internal loops.
    #[inline]
    pub(crate) fn mu(&self, k: usize) -> f64 {
        if k + 1 < self.points.len() {
            self.points[k + 1] - self.points[k]
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn p(&self, k: usize) -> f64 {
        self.points[k]
    }

    fn check(&self, k: usize) -> Result<()> {
        if k > self.last_index() {
            Err(Error::IndexOutOfRange {
                index: k,
                max: self.last_index(),
            })
        } else {
            Ok(())
        }
    }

    pub fn a(&self) -> f64 {
        self.points[0]
    }

    pub fn b(&self) -> f64 {
        self.points[self.points.len() - 3]
    }

    pub fn sigma_b(&self) -> f64 {
        self.points[self.points.len() - 2]
    }

    pub fn sigma2_b(&self) -> f64 {
        self.points[self.points.len() - 1]
    }

    /// Length of the closed interval `[a, σ²(b)]`.
    pub fn span(&self) -> f64 {
        self.sigma2_b() - self.a()
    }

    /// Indices of the equation points `[a, σ(b))`, i.e. `0..=N−2`.
    pub fn equation_points(&self) -> std::ops::Range<usize> {
        0..self.points.len() - 2
    }

    /// Index of the point equal to `t` within [`LOOKUP_TOL`].
    pub fn index_of(&self, t: f64) -> Option<usize> {
        let i = self.points.partition_point(|&p| p < t - LOOKUP_TOL);
        (i < self.points.len() && (self.points[i] - t).abs() <= LOOKUP_TOL).then_some(i)
    }

    /// Whether the realized left endpoint stands in for a right-dense point of
    /// the underlying scale (a refined interval or the quantum accumulation
    /// point). Assembled equations do not depend on it.
    pub fn models_right_dense_start(&self) -> bool {
        !matches!(self.kind, ScaleKind::Explicit)
    }

    /// Restriction to the index window `[lo, hi]`, used for nested interior
    /// problems.
    pub fn window(&self, lo: usize, hi: usize) -> Result<Self> {
        self.check(hi)?;
        if lo > hi {
            return Err(Error::IndexOutOfRange { index: lo, max: hi });
        }
        Self::build(self.points[lo..=hi].to_vec(), ScaleKind::Explicit)
    }

    /// Smallest graininess over `[a, σ²(b))`; the refinement parameter of a
    /// family member.
    pub fn min_graininess(&self) -> f64 {
        self.points
            .windows(2)
            .map(|w| w[1] - w[0])
            .fold(f64::INFINITY, f64::min)
    }
}
