//! Numerical checks of the structural hypotheses, the integral existence
//! criteria, and explicit lower/upper solutions.
//!
//! Integral criteria are improper at the ends of the interval. They are
//! judged over a refinement family: each member contributes the partial sum
//! over its cells `1..=N−2` (the cell at `a` is where a singular integrand
//! may be undefined), and [`classify`] decides from the resulting trail.

mod bounds;
mod classify;
mod hypotheses;

use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::green::e_at;
use crate::model::{DirichletProblem, ProblemMode};
use crate::timescale::TimeScale;

pub use bounds::{
    bounds_from_constants, compute_envelope, construct_bounds, construct_lower, type1_limits, verify_lower,
    verify_upper, BoundConstants, BoundsPair, LowerMode, Type1Report, VerifyReport, Violation,
};
pub use classify::{classify, ConvergenceVerdict, Verdict, MIN_FAMILY};
pub use hypotheses::{
    check_h3_monotone, check_h3bar_lipschitz, check_htilde2, LipschitzReport, MonotoneReport, MonotoneWitness,
    ScalingReport, ScalingWitness,
};

/// Default seed for every sampling check.
pub const DEFAULT_SEED: u64 = 0xD1E5;

/// Point counts of the default uniform refinement family.
pub const UNIFORM_FAMILY: [usize; 6] = [17, 33, 65, 129, 257, 513];
/// Truncation depths of the default quantum family.
pub const QUANTUM_FAMILY: [usize; 5] = [5, 10, 20, 40, 80];

/// Smallest partial sum that counts as positive.
const POSITIVE_FLOOR: f64 = 1e-300;

pub fn uniform_family(a: f64, end: f64, sizes: &[usize]) -> Result<Vec<Arc<TimeScale>>> {
    sizes
        .iter()
        .map(|&n| TimeScale::uniform(a, end, n).map(Arc::new))
        .collect()
}

pub fn quantum_family(q: f64, depths: &[usize]) -> Result<Vec<Arc<TimeScale>>> {
    depths.iter().map(|&k| TimeScale::quantum(q, k).map(Arc::new)).collect()
}

/// The default uniform family on `[a, end]`.
pub fn default_family(a: f64, end: f64) -> Vec<Arc<TimeScale>> {
    uniform_family(a, end, &UNIFORM_FAMILY).expect("default sizes are valid")
}

/// Members sorted coarse to fine, as a stable permutation.
fn ordered(family: &[Arc<TimeScale>]) -> Result<Vec<Arc<TimeScale>>> {
    if family.len() < MIN_FAMILY {
        return Err(Error::FamilyTooShort {
            needed: MIN_FAMILY,
            got: family.len(),
        });
    }
    let mut members = family.to_vec();
    members.sort_by(|x, y| y.min_graininess().total_cmp(&x.min_graininess()));
    Ok(members)
}

/// Partial sum `Σ_{k=1}^{N−2} μ(p_k)·w(k)` and whether every term was
/// nonnegative.
fn improper_partial(ts: &TimeScale, mut w: impl FnMut(usize) -> Result<f64>) -> Result<(f64, bool)> {
    let mut sum = 0.0;
    let mut nonnegative = true;
    for k in 1..ts.last_index() - 1 {
        let v = w(k)?;
        nonnegative &= v >= 0.0;
        sum += ts.mu(k) * v;
    }
    Ok((sum, nonnegative))
}

/// Evaluates one partial per member (in parallel) and classifies each
/// component's trail.
fn judge<F>(family: &[Arc<TimeScale>], dim: usize, partial: F) -> Result<Vec<ConvergenceVerdict>>
where
    F: Fn(&TimeScale, usize) -> Result<(f64, bool)> + Sync,
{
    let members = ordered(family)?;
    let levels: Vec<f64> = members.iter().map(|ts| ts.min_graininess()).collect();
    let rows: Vec<Vec<(f64, bool)>> = members
        .par_iter()
        .map(|ts| (0..dim).map(|i| partial(ts, i)).collect::<Result<Vec<_>>>())
        .collect::<Result<Vec<_>>>()?;
    (0..dim)
        .map(|i| {
            let partials: Vec<f64> = rows.iter().map(|r| r[i].0).collect();
            let mut v = classify(&partials, &levels)?;
            v.positive = rows.iter().all(|r| r[i].1) && partials.iter().any(|&s| s >= POSITIVE_FLOOR);
            Ok(v)
        })
        .collect()
}

/// Finiteness of `∫ (σ(s) − a)(σ²(b) − s)·g_i(s) Δs` for a componentwise
/// bound `g` of `|f|`.
pub fn check_h2_domination<G>(g: G, dim: usize, family: &[Arc<TimeScale>]) -> Result<Vec<ConvergenceVerdict>>
where
    G: Fn(f64) -> Vec<f64> + Sync,
{
    judge(family, dim, |ts, i| {
        let (a, end) = (ts.a(), ts.sigma2_b());
        improper_partial(ts, |k| {
            let s = ts.p(k);
            let gs = g(s);
            if gs.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: gs.len(),
                });
            }
            Ok((ts.p(k + 1) - a) * (end - s) * gs[i])
        })
    })
}

fn require_positive_mode(problem: &DirichletProblem) -> Result<()> {
    if problem.mode() != ProblemMode::Positive {
        return Err(Error::InvalidProblem {
            reason: "criterion applies to zero-boundary positive problems".into(),
        });
    }
    Ok(())
}

/// `∫ f_i(s, E^σ(s)) Δs` with `E = (e, …, e)`, over the family.
pub fn criterion_sufficient(problem: &DirichletProblem, family: &[Arc<TimeScale>]) -> Result<Vec<ConvergenceVerdict>> {
    require_positive_mode(problem)?;
    let n = problem.dim();
    judge(family, n, |ts, i| {
        let f = problem.nonlinearity(i);
        let mut x = vec![0.0; n];
        improper_partial(ts, |k| {
            x.fill(e_at(ts, k + 1));
            f.evaluate(ts.p(k), &x)
        })
    })
}

/// `∫ (σ(s) − a)(σ(b) − σ(s))·f_i(s, [P]) Δs` with every argument pinned at
/// `P`, by default the member's `σ²(b)`.
pub fn criterion_necessary(
    problem: &DirichletProblem,
    family: &[Arc<TimeScale>],
    eval_point_override: Option<f64>,
) -> Result<Vec<ConvergenceVerdict>> {
    require_positive_mode(problem)?;
    for ts in family {
        let p = eval_point_override.unwrap_or(ts.sigma2_b());
        if !(p > 0.0) {
            return Err(Error::NonpositiveEndpoint { value: p });
        }
    }
    let n = problem.dim();
    judge(family, n, |ts, i| {
        let f = problem.nonlinearity(i);
        let x = vec![eval_point_override.unwrap_or(ts.sigma2_b()); n];
        let (a, sb) = (ts.a(), ts.sigma_b());
        improper_partial(ts, |k| {
            let ss = ts.p(k + 1);
            Ok((ss - a) * (sb - ss) * f.evaluate(ts.p(k), &x)?)
        })
    })
}

#[cfg(test)]
mod tests;
