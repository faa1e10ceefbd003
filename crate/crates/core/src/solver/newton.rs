//! Damped Newton on the assembled system, used as an independent oracle.
//!
//! Unknowns are the interior values `u_1..u_{N−1}`; equation `(k, i)` is
//! `−u_i^ΔΔ(p_k) − f_i(p_k, u(p_{k+1}))` for `k = 0..=N−2`. The Jacobian is
//! formed column by column with central differences.

use log::debug;
use nalgebra::{DMatrix, DVector};

use super::{finish, pin_boundary, residual, Band, SolveConfig, SolveReport, Status};
use crate::calculus::GridFunction;
use crate::error::{Error, Result};
use crate::green::phi;
use crate::model::DirichletProblem;

const MAX_NEWTON_ITERS: usize = 100;
const MIN_STEP_FRACTION: f64 = 1.0 / 1024.0;
const ARMIJO: f64 = 1e-4;
const FD_REL_STEP: f64 = 1e-6;
/// Extra steps taken past the tolerance while the residual still halves.
const POLISH_STEPS: usize = 3;

pub(super) fn solve(problem: &DirichletProblem, band: Option<Band>, cfg: &SolveConfig) -> Result<SolveReport> {
    let ts = problem.scale();
    let n = problem.dim();
    let mut u = match band {
        Some(b) => b.midpoint(),
        None => phi(ts, problem.a_bc(), problem.b_bc())?,
    };
    pin_boundary(problem, &mut u);
    let unknowns = (ts.len() - 2) * n;

    let mut f = match eval(problem, &u) {
        Ok(f) => f,
        Err(e) => return Ok(fail(band, u, 0, e, cfg)),
    };
    let max_iters = cfg.max_iters.min(MAX_NEWTON_ITERS);
    let mut polished = 0;
    let mut stalled = false;
    for it in 0..max_iters {
        let res = f.amax();
        debug!("newton {it}: residual {res:e}");
        if res <= cfg.tol_residual {
            if stalled || polished == POLISH_STEPS {
                return Ok(finish(band, u, it, res, Status::Converged, cfg));
            }
            polished += 1;
        }
        let jac = match jacobian(problem, &u, unknowns) {
            Ok(j) => j,
            Err(e) => return Ok(fail(band, u, it, e, cfg)),
        };
        let Some(dx) = jac.lu().solve(&(-&f)) else {
            let mut rep = finish(band, u, it, res, Status::Diverged, cfg);
            rep.message = Some("singular Jacobian".into());
            return Ok(rep);
        };
        let norm = f.norm();
        let mut lambda = 1.0;
        let accepted = loop {
            let mut trial = u.clone();
            {
                let v = trial.values_mut();
                for (z, d) in dx.iter().enumerate() {
                    v[n + z] += lambda * d;
                }
            }
            match eval(problem, &trial) {
                Ok(ft) if ft.norm() <= (1.0 - ARMIJO * lambda) * norm => break Some((trial, ft)),
                _ => {}
            }
            lambda /= 2.0;
            if lambda < MIN_STEP_FRACTION {
                break None;
            }
        };
        match accepted {
            Some((trial, ft)) => {
                stalled = ft.amax() > 0.5 * res;
                u = trial;
                f = ft;
            }
            None if res <= cfg.tol_residual => {
                return Ok(finish(band, u, it, res, Status::Converged, cfg));
            }
            None => {
                let mut rep = finish(band, u, it + 1, res, Status::MaxIters, cfg);
                rep.message = Some("line search failed".into());
                return Ok(rep);
            }
        }
    }
    let res = f.amax();
    let status = if res <= cfg.tol_residual {
        Status::Converged
    } else {
        Status::MaxIters
    };
    Ok(finish(band, u, max_iters, res, status, cfg))
}

fn fail(band: Option<Band>, u: GridFunction, it: usize, err: Error, cfg: &SolveConfig) -> SolveReport {
    super::failed(band, u, it, err, cfg)
}

fn eval(problem: &DirichletProblem, u: &GridFunction) -> Result<DVector<f64>> {
    let r = residual(problem, u)?;
    let v = DVector::from_column_slice(r.values());
    if v.iter().all(|x| x.is_finite()) {
        Ok(v)
    } else {
        Err(Error::NonFiniteResult {
            component: 0,
            t: f64::NAN,
        })
    }
}

/// Equations at point `k`, all components.
fn local(problem: &DirichletProblem, u: &[f64], k: usize, out: &mut [f64]) -> Result<()> {
    let ts = problem.scale();
    let n = problem.dim();
    let (m0, m1) = (ts.mu(k), ts.mu(k + 1));
    let x = &u[(k + 1) * n..(k + 2) * n];
    for (i, fi) in problem.nonlinearities().iter().enumerate() {
        let at = |j: usize| u[j * n + i];
        let d2 = ((at(k + 2) - at(k + 1)) / m1 - (at(k + 1) - at(k)) / m0) / m0;
        out[i] = -d2 - fi.evaluate(ts.p(k), x)?;
    }
    Ok(())
}

fn jacobian(problem: &DirichletProblem, u: &GridFunction, unknowns: usize) -> Result<DMatrix<f64>> {
    let ts = problem.scale();
    let n = problem.dim();
    let last_eq = ts.last_index() - 2;
    let mut jac = DMatrix::zeros(unknowns, unknowns);
    let mut work = u.values().to_vec();
    let mut plus = vec![0.0; n];
    let mut minus = vec![0.0; n];
    for col in 0..unknowns {
        let idx = n + col;
        let point = idx / n;
        let x0 = work[idx];
        let h = FD_REL_STEP * x0.abs().max(1.0);
        let rows: Vec<usize> = (point.saturating_sub(2)..=point.min(last_eq)).collect();
        for &k in &rows {
            // central, then one-sided if a side leaves the domain
            let mut eval_at = |x: f64, out: &mut [f64]| {
                work[idx] = x;
                let r = local(problem, &work, k, out);
                work[idx] = x0;
                r
            };
            let up = eval_at(x0 + h, &mut plus);
            let down = eval_at(x0 - h, &mut minus);
            let (span, ok) = match (up, down) {
                (Ok(()), Ok(())) => (2.0 * h, Ok(())),
                (Ok(()), Err(_)) => (h, eval_at(x0, &mut minus)),
                (Err(_), Ok(())) => (h, eval_at(x0, &mut plus)),
                (Err(e), Err(_)) => (h, Err(e)),
            };
            ok?;
            for i in 0..n {
                jac[(k * n + i, col)] = (plus[i] - minus[i]) / span;
            }
        }
    }
    Ok(jac)
}
