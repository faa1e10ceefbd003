//! Sampling falsifiers for the structural hypotheses on `f`.
//!
//! None of these prove anything; a pass only means no counterexample was
//! drawn. Failures carry the worst witness found.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::calculus::GridFunction;
use crate::error::{Error, Result};
use crate::model::Nonlinearity;
use crate::solver::Band;
use crate::timescale::TimeScale;

/// Relative slack for the scaling and monotonicity inequalities.
const REL_TOL: f64 = 1e-12;
/// Upper end of the sampled range for `x_j`.
const X_MAX: f64 = 1e3;

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingWitness {
    pub t: f64,
    pub x: Vec<f64>,
    /// 0-based column that was scaled.
    pub column: usize,
    pub c: f64,
    pub lower: f64,
    pub value: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalingReport {
    pub pass: bool,
    pub shape_ok: bool,
    /// Largest relative excess over either side of the sandwich; `0` when
    /// every sample held.
    pub worst_violation: f64,
    pub witness: Option<ScalingWitness>,
    pub samples: usize,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    if lo >= hi {
        return lo;
    }
    (rng.random_range(lo.ln()..hi.ln())).exp()
}

/// Interior equation points `1..=N−2`, so `t` stays strictly inside.
fn interior_times(ts: &TimeScale) -> Vec<f64> {
    (1..ts.last_index() - 1).map(|k| ts.points()[k]).collect()
}

/// Samples the two-sided scaling inequalities
/// `c^μ f ≤ f(…, c·x_j, …) ≤ c^λ f` for `c ≤ 1` and
/// `c^λ f ≤ f(…, c·x_j, …) ≤ c^μ f` for `c ≥ 1`.
pub fn check_htilde2(f: &Nonlinearity, scale: &TimeScale, samples: usize, seed: u64) -> Result<ScalingReport> {
    let (lambda, mu) = f.exponents().ok_or_else(|| Error::ShapeViolation {
        reason: "no exponents declared".into(),
    })?;
    let times = interior_times(scale);
    let n = f.arity();
    let floor = f.domain_floor() * 10.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = ScalingReport {
        pass: true,
        shape_ok: f.shape_ok(),
        worst_violation: 0.0,
        witness: None,
        samples,
    };
    for _ in 0..samples {
        let t = times[rng.random_range(0..times.len())];
        let j = rng.random_range(0..n);
        let shrink = log_uniform(&mut rng, 1e-4, 1.0);
        let grow = log_uniform(&mut rng, 1.0, 1e4);
        let mut x: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng, floor, X_MAX)).collect();
        // keep c·x_j above the floor
        x[j] = log_uniform(&mut rng, floor / shrink, X_MAX.max(floor / shrink));
        let base = f.evaluate(t, &x)?;
        for c in [shrink, grow] {
            let mut y = x.clone();
            y[j] *= c;
            let value = f.evaluate(t, &y)?;
            let (lo_exp, hi_exp) = if c <= 1.0 {
                (mu[j], lambda[j])
            } else {
                (lambda[j], mu[j])
            };
            let lower = c.powf(lo_exp) * base;
            let upper = c.powf(hi_exp) * base;
            let size = base.abs().max(value.abs()).max(f64::MIN_POSITIVE);
            let excess = ((lower - value).max(value - upper)) / size;
            if excess > REL_TOL {
                report.pass = false;
                if excess > report.worst_violation {
                    report.worst_violation = excess;
                    report.witness = Some(ScalingWitness {
                        t,
                        x: x.clone(),
                        column: j,
                        c,
                        lower,
                        value,
                        upper,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneWitness {
    /// Index of the evaluation time `p_k`; the band is read at `k + 1`.
    pub index: usize,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub fx: f64,
    pub fy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonotoneReport {
    pub pass: bool,
    /// Largest relative amount by which `f(x) > f(y)` for some `x ≤ y`.
    pub worst_violation: f64,
    pub witness: Option<MonotoneWitness>,
    /// Samples dropped because `f` was undefined there.
    pub skipped: usize,
}

fn band_point(rng: &mut ChaCha8Rng, lo: &[f64], hi: &[f64]) -> Vec<f64> {
    lo.iter()
        .zip(hi)
        .map(|(&l, &h)| if l < h { rng.random_range(l..=h) } else { l })
        .collect()
}

/// Samples `f_i(t, α^σ) ≤ f_i(t, x) ≤ f_i(t, β^σ)` and `f_i(t, x) ≤ f_i(t, y)`
/// for ordered `x ≤ y` inside the band, at every equation point.
pub fn check_h3_monotone(
    f: &Nonlinearity,
    alpha: &GridFunction,
    beta: &GridFunction,
    samples: usize,
    seed: u64,
) -> Result<MonotoneReport> {
    let ts = alpha.scale().clone();
    Band::new(&ts, f.arity(), alpha, beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut report = MonotoneReport {
        pass: true,
        worst_violation: 0.0,
        witness: None,
        skipped: 0,
    };
    let ks: Vec<usize> = ts.equation_points().collect();
    for s in 0..samples {
        let k = ks[s % ks.len()];
        let t = ts.points()[k];
        let lo = alpha.value(k + 1)?;
        let hi = beta.value(k + 1)?;
        let p = band_point(&mut rng, lo, hi);
        let q = band_point(&mut rng, lo, hi);
        let x: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a.min(*b)).collect();
        let y: Vec<f64> = p.iter().zip(&q).map(|(a, b)| a.max(*b)).collect();
        let chain = [lo.to_vec(), x, y, hi.to_vec()];
        let values: Vec<Option<f64>> = chain.iter().map(|v| f.evaluate(t, v).ok()).collect();
        for w in 0..3 {
            let (Some(fa), Some(fb)) = (values[w], values[w + 1]) else {
                report.skipped += 1;
                continue;
            };
            let excess = (fa - fb) / fa.abs().max(fb.abs()).max(f64::MIN_POSITIVE);
            if excess > REL_TOL {
                report.pass = false;
                if excess > report.worst_violation {
                    report.worst_violation = excess;
                    report.witness = Some(MonotoneWitness {
                        index: k,
                        x: chain[w].clone(),
                        y: chain[w + 1].clone(),
                        fx: fa,
                        fy: fb,
                    });
                }
            }
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzReport {
    pub pass: bool,
    /// Largest secant slope `|f(x) − f(y)| / ‖x − y‖_∞` seen in the band.
    pub m_estimate: f64,
    pub skipped: usize,
}

/// Estimates the one-sided Lipschitz constant `M` over the band from random
/// ordered pairs plus short secants at both band edges, where singular
/// nonlinearities are steepest.
pub fn check_h3bar_lipschitz(
    f: &Nonlinearity,
    alpha: &GridFunction,
    beta: &GridFunction,
    samples: usize,
    seed: u64,
) -> Result<LipschitzReport> {
    let ts = alpha.scale().clone();
    Band::new(&ts, f.arity(), alpha, beta)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut m: f64 = 0.0;
    let mut skipped = 0;
    let mut secant = |t: f64, x: &[f64], y: &[f64], m: &mut f64| {
        let gap = x.iter().zip(y).fold(0.0f64, |g, (a, b)| g.max((a - b).abs()));
        if gap == 0.0 {
            return;
        }
        match (f.evaluate(t, x), f.evaluate(t, y)) {
            (Ok(fx), Ok(fy)) => *m = m.max((fx - fy).abs() / gap),
            _ => skipped += 1,
        }
    };
    let ks: Vec<usize> = ts.equation_points().collect();
    for &k in &ks {
        let t = ts.points()[k];
        let lo = alpha.value(k + 1)?;
        let hi = beta.value(k + 1)?;
        // step inward from each edge
        for (edge, dir) in [(lo, 1.0), (hi, -1.0)] {
            let inner: Vec<f64> = edge.iter().map(|v| v + dir * 1e-7 * v.abs().max(1e-3)).collect();
            secant(t, &inner, edge, &mut m);
        }
    }
    for s in 0..samples {
        let k = ks[s % ks.len()];
        let t = ts.points()[k];
        let lo = alpha.value(k + 1)?;
        let hi = beta.value(k + 1)?;
        let p = band_point(&mut rng, lo, hi);
        let q = band_point(&mut rng, lo, hi);
        secant(t, &p, &q, &mut m);
    }
    Ok(LipschitzReport {
        pass: m.is_finite(),
        m_estimate: m,
        skipped,
    })
}
