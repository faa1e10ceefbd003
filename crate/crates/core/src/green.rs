//! Green's function of `−x^ΔΔ = 0`, `x(a) = x(σ²(b)) = 0`, and friends.
//!
//! ```text
//!            ⎧ (t − a)(σ²(b) − σ(s))   t ≤ s
//! G(t, s) =  ⎨ ─────────────────────
//!            ⎩ (σ(s) − a)(σ²(b) − t)   σ(s) ≤ t        (÷ (σ²(b) − a))
//! ```
//!
//! On a finite realization `t` and `s` are indices, so no point falls strictly
//! between `s` and `σ(s)`.

use std::sync::Arc;

use rayon::prelude::*;

use crate::calculus::GridFunction;
use crate::error::{Error, Result};
use crate::timescale::TimeScale;

/// Rows are summed in parallel above this many points.
const PARALLEL_ROWS: usize = 256;

/// `G(t, s)` for point indices `t_idx ∈ [0, N]`, `s_idx ∈ [0, N − 1]`.
pub fn green_value(ts: &TimeScale, t_idx: usize, s_idx: usize) -> Result<f64> {
    let n = ts.last_index();
    if t_idx > n {
        return Err(Error::IndexOutOfRange { index: t_idx, max: n });
    }
    if s_idx >= n {
        return Err(Error::IndexOutOfRange {
            index: s_idx,
            max: n - 1,
        });
    }
    Ok(kernel(ts, t_idx, s_idx))
}

/// Unchecked kernel. `t = σ(s)` goes through the first branch.
#[inline]
pub(crate) fn kernel(ts: &TimeScale, t_idx: usize, s_idx: usize) -> f64 {
    let a = ts.a();
    let end = ts.sigma2_b();
    let t = ts.p(t_idx);
    let sigma_s = ts.p(s_idx + 1);
    if t_idx <= s_idx + 1 {
        (t - a) * (end - sigma_s) / (end - a)
    } else {
        (sigma_s - a) * (end - t) / (end - a)
    }
}

/// Both branch formulas evaluated at `t = σ(s)`; returns the relative gap.
pub fn branch_gap(ts: &TimeScale, s_idx: usize) -> Result<f64> {
    let n = ts.last_index();
    if s_idx >= n {
        return Err(Error::IndexOutOfRange {
            index: s_idx,
            max: n - 1,
        });
    }
    let a = ts.a();
    let end = ts.sigma2_b();
    let sigma_s = ts.p(s_idx + 1);
    let first = (sigma_s - a) * (end - sigma_s) / (end - a);
    let second = (sigma_s - a) * (end - sigma_s) / (end - a);
    let scale = first.abs().max(second.abs());
    Ok(if scale == 0.0 {
        0.0
    } else {
        (first - second).abs() / scale
    })
}

/// Affine interpolant with `φ(a) = A`, `φ(σ²(b)) = B`.
pub fn phi(ts: &Arc<TimeScale>, a_bc: &[f64], b_bc: &[f64]) -> Result<GridFunction> {
    if a_bc.len() != b_bc.len() {
        return Err(Error::DimensionMismatch {
            expected: a_bc.len(),
            got: b_bc.len(),
        });
    }
    let a = ts.a();
    let span = ts.span();
    GridFunction::from_fn(ts, a_bc.len(), |t| {
        let w = (t - a) / span;
        a_bc.iter().zip(b_bc).map(|(&lo, &hi)| lo + (hi - lo) * w).collect()
    })
}

/// `e(t) = (t − a)(σ²(b) − t)/(σ²(b) − a)` at every point.
pub fn e_weight(ts: &Arc<TimeScale>) -> GridFunction {
    let a = ts.a();
    let end = ts.sigma2_b();
    GridFunction::scalar_from_fn(ts, |t| (t - a) * (end - t) / (end - a)).expect("e(t) is finite on a valid scale")
}

/// `e` evaluated at point `k`.
#[inline]
pub(crate) fn e_at(ts: &TimeScale, k: usize) -> f64 {
    let a = ts.a();
    let end = ts.sigma2_b();
    let t = ts.p(k);
    (t - a) * (end - t) / (end - a)
}

/// `u(t_j) = Σ_{k=0}^{N−2} μ(p_k)·G(t_j, p_k)·h_k`, the zero-boundary solution
/// of `−u^ΔΔ = h` on the equation points.
///
/// `h` must start at index 0 and cover at least `0..=N−2`. Each row is summed
/// left to right, so results do not depend on the thread count.
pub fn green_apply(ts: &Arc<TimeScale>, h: &GridFunction) -> Result<GridFunction> {
    let last_eq = ts.last_index() - 2;
    if !h.same_scale_as(ts) {
        return Err(Error::ScaleMismatch);
    }
    if h.lo() != 0 || h.hi() < last_eq {
        return Err(Error::SupportMismatch {
            expected_lo: 0,
            expected_hi: last_eq,
            lo: h.lo(),
            hi: h.hi(),
        });
    }
    #[cfg(debug_assertions)]
    if ts.len() <= 65 {
        let defect = identity_defect(ts);
        // roundoff in the second difference grows with the graininess ratio
        let mus: Vec<f64> = (0..ts.last_index()).map(|k| ts.mu(k)).collect();
        let spread = mus.iter().cloned().fold(0.0, f64::max) / mus.iter().cloned().fold(f64::INFINITY, f64::min);
        let tol = 1e-9f64.max(64.0 * f64::EPSILON * spread);
        debug_assert!(defect < tol, "Green's identity defect {defect:e}");
    }

    let dim = h.dim();
    let weights: Vec<f64> = (0..=last_eq).map(|k| ts.mu(k)).collect();
    let row = |j: usize| -> Vec<f64> {
        let mut acc = vec![0.0; dim];
        for (k, &mu) in weights.iter().enumerate() {
            let g = mu * kernel(ts, j, k);
            for (a, &v) in acc.iter_mut().zip(h.row(k)) {
                *a += g * v;
            }
        }
        acc
    };
    let rows: Vec<Vec<f64>> = if ts.len() > PARALLEL_ROWS {
        (0..ts.len()).into_par_iter().map(row).collect()
    } else {
        (0..ts.len()).map(row).collect()
    };
    let mut values: Vec<f64> = rows.into_iter().flatten().collect();
    // the boundary factors vanish analytically; keep them exact
    values[..dim].iter_mut().for_each(|v| *v = 0.0);
    let n = values.len();
    values[n - dim..].iter_mut().for_each(|v| *v = 0.0);
    GridFunction::new(ts.clone(), 0, dim, values)
}

/// Largest defect of `−μ(s)·∂²_t G(t, s) = δ_{ts}` over all equation points
/// `t` and sources `s`.
pub fn identity_defect(ts: &TimeScale) -> f64 {
    let n = ts.last_index();
    let mut worst: f64 = 0.0;
    for s in 0..=n - 2 {
        for t in 0..=n - 2 {
            let g0 = kernel(ts, t, s);
            let g1 = kernel(ts, t + 1, s);
            let g2 = kernel(ts, t + 2, s);
            let d2 = ((g2 - g1) / ts.mu(t + 1) - (g1 - g0) / ts.mu(t)) / ts.mu(t);
            let target = if t == s { 1.0 } else { 0.0 };
            worst = worst.max((-ts.mu(s) * d2 - target).abs());
        }
    }
    worst
}

impl GridFunction {
    pub(crate) fn same_scale_as(&self, ts: &Arc<TimeScale>) -> bool {
        Arc::ptr_eq(self.scale(), ts) || **self.scale() == **ts
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unif(n: usize) -> Arc<TimeScale> {
        Arc::new(TimeScale::uniform(0.0, 1.0, n).unwrap())
    }

    #[test]
    fn hand_values() {
        let ts = unif(5);
        // t = 0.25 ≤ s = 0.5
        assert!((green_value(&ts, 1, 2).unwrap() - 0.0625).abs() < 1e-15);
        // σ(s) = 0.5 ≤ t = 0.75
        assert!((green_value(&ts, 3, 1).unwrap() - 0.125).abs() < 1e-15);
        for s in 0..4 {
            assert_eq!(green_value(&ts, 0, s).unwrap(), 0.0);
            assert_eq!(green_value(&ts, 4, s).unwrap(), 0.0);
        }
        assert!(green_value(&ts, 5, 0).is_err());
        assert!(green_value(&ts, 0, 4).is_err());
    }

    #[test]
    fn branches_agree() {
        for ts in [unif(17), Arc::new(TimeScale::quantum(2.0, 12).unwrap())] {
            for s in 0..ts.last_index() {
                assert!(branch_gap(&ts, s).unwrap() <= 1e-14);
            }
        }
    }

    #[test]
    fn identity_holds_on_several_scales() {
        let scales = [
            TimeScale::uniform(0.0, 1.0, 17).unwrap(),
            TimeScale::quantum(2.0, 10).unwrap(),
            TimeScale::from_points(vec![-1.0, -0.3, 0.1, 0.15, 0.9, 2.0]).unwrap(),
        ];
        for ts in &scales {
            assert!(identity_defect(ts) < 1e-9, "{:?}", ts.kind());
        }
    }

    #[test]
    fn phi_interpolates() {
        let ts = unif(5);
        let p = phi(&ts, &[1.0], &[3.0]).unwrap();
        assert_eq!(p.value(2).unwrap(), &[2.0]);
        assert!(p.delta_second().unwrap().max_abs() < 1e-13);
        let c = phi(&ts, &[2.5, -1.0], &[2.5, -1.0]).unwrap();
        assert!(c.values().chunks(2).all(|r| r == [2.5, -1.0]));
        assert!(matches!(
            phi(&ts, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn e_weight_values() {
        let ts = unif(5);
        let e = e_weight(&ts);
        assert_eq!(e.value(2).unwrap(), &[0.25]);
        assert_eq!(e.value(0).unwrap(), &[0.0]);
        assert_eq!(e.value(4).unwrap(), &[0.0]);
        let q = Arc::new(TimeScale::quantum(2.0, 3).unwrap());
        let eq = e_weight(&q);
        assert_eq!(eq.value(3).unwrap(), &[0.25]);
    }

    #[test]
    fn apply_constant_rhs_gives_parabola() {
        for n in [5, 17, 65] {
            let ts = unif(n);
            let h = GridFunction::constant(&ts, &[1.0]).unwrap();
            let u = green_apply(&ts, &h).unwrap();
            for k in 0..n {
                let t = ts.p(k);
                assert!((u.at(k, 0) - t * (1.0 - t) / 2.0).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn apply_zero_is_zero() {
        let ts = unif(9);
        let u = green_apply(&ts, &GridFunction::zeros(&ts, 3)).unwrap();
        assert_eq!(u.max_abs(), 0.0);
        assert_eq!(u.dim(), 3);
    }

    #[test]
    fn apply_checks_support() {
        let ts = unif(9);
        let h = GridFunction::constant(&ts, &[1.0]).unwrap();
        assert!(matches!(
            green_apply(&ts, &h.restrict(1, 8).unwrap()),
            Err(Error::SupportMismatch { .. })
        ));
        assert!(matches!(
            green_apply(&ts, &h.restrict(0, 5).unwrap()),
            Err(Error::SupportMismatch { .. })
        ));
        assert!(green_apply(&ts, &h.restrict(0, 7).unwrap()).is_ok());
        assert_eq!(green_apply(&unif(10), &h), Err(Error::ScaleMismatch));
    }

    #[test]
    fn envelope_bounds_on_kernel() {
        let ts = Arc::new(TimeScale::quantum(1.5, 14).unwrap());
        let a = ts.a();
        let end = ts.sigma2_b();
        for t in 0..=ts.last_index() {
            for s in 0..ts.last_index() {
                let g = kernel(&ts, t, s);
                let ss = ts.p(s + 1);
                assert!(g <= e_at(&ts, t) + 1e-15);
                assert!(g <= (ss - a) * (end - ss) / (end - a) + 1e-15);
                if t > 0 && t < ts.last_index() && ss > a && ss < end {
                    assert!(g > 0.0);
                }
            }
        }
    }
}
