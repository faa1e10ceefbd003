//! Solution strategies for `−x^ΔΔ = f(t, x^σ)` with Dirichlet data.
//!
//! The fixed-point form is
//! `Nu(t) = φ(t) + Σ_s μ(s)·G(t, s)·f*(s, u^σ(s))`, where `f*` evaluates `f` at
//! the point truncated into the band `[α^σ, β^σ]` and adds the bounded
//! regularizer `(d_i − x_i)/(1 + |d_i − x_i|)`.

mod newton;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use log::{debug, info};

use crate::calculus::GridFunction;
use crate::criteria;
use crate::error::{Error, Result};
use crate::green::{green_apply, phi};
use crate::model::{DirichletProblem, Nonlinearity, SignConvention};
use crate::timescale::TimeScale;

/// Damping is never reduced below this.
const MIN_DAMPING: f64 = 1.0 / 64.0;
/// Consecutive residual increases that trigger halving the damping.
const INCREASES_BEFORE_HALVING: usize = 5;
/// Iterations without residual improvement, at a negligible step, after
/// which an iteration is declared stuck.
const STAGNATION_WINDOW: usize = 25;
/// Relative slack allowed when checking monotone iterates.
const MONOTONE_SLACK: f64 = 1e-13;
/// Residuals above this count as divergence.
const BLOWUP: f64 = 1e100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Strategy {
    Picard,
    MonotoneUp,
    MonotoneDown,
    NewtonOracle,
    TruncatedNest,
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::Picard => "picard",
            Strategy::MonotoneUp => "monotone_up",
            Strategy::MonotoneDown => "monotone_down",
            Strategy::NewtonOracle => "newton_oracle",
            Strategy::TruncatedNest => "truncated_nest",
        })
    }
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "picard" => Strategy::Picard,
            "monotone_up" => Strategy::MonotoneUp,
            "monotone_down" => Strategy::MonotoneDown,
            "newton_oracle" | "newton" => Strategy::NewtonOracle,
            "truncated_nest" | "nest" => Strategy::TruncatedNest,
            _ => {
                return Err(Error::InvalidConfig {
                    reason: format!("unknown strategy '{s}'"),
                })
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
    DomainError,
}

impl fmt::Display for Status {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Status::Converged => "CONVERGED",
            Status::MaxIters => "MAX_ITERS",
            Status::Diverged => "DIVERGED",
            Status::DomainError => "DOMAIN_ERROR",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    /// Max-norm of `−u^ΔΔ − f(·, u^σ)` over the equation points.
    pub tol_residual: f64,
    /// Max-norm of the difference of successive iterates.
    pub tol_step: f64,
    pub max_iters: usize,
    /// `θ` in `u ← (1 − θ)u + θ·Nu`.
    pub damping: f64,
    pub strategy: Strategy,
    /// Check the brackets with `verify_lower`/`verify_upper` before solving.
    pub strict: bool,
    /// Keep every iterate in the report.
    pub keep_trace: bool,
    /// Deepest window `[k, N − k]` for the nested strategy; `None` picks
    /// `min(4, (N − 3)/2)`.
    pub nest_depth: Option<usize>,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            tol_residual: 1e-10,
            tol_step: 1e-12,
            max_iters: 10_000,
            damping: 1.0,
            strategy: Strategy::Picard,
            strict: false,
            keep_trace: false,
            nest_depth: None,
        }
    }
}

impl SolveConfig {
    pub fn with_strategy(strategy: Strategy) -> Self {
        SolveConfig {
            strategy,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |reason: String| Err(Error::InvalidConfig { reason });
        if !(self.tol_residual > 0.0) {
            return bad(format!("tol_residual must be positive, got {}", self.tol_residual));
        }
        if !(self.tol_step > 0.0) {
            return bad(format!("tol_step must be positive, got {}", self.tol_step));
        }
        if !(self.damping > 0.0 && self.damping <= 1.0) {
            return bad(format!("damping must lie in (0, 1], got {}", self.damping));
        }
        if self.max_iters == 0 {
            return bad("max_iters must be positive".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SolveReport {
    pub solution: GridFunction,
    pub iterations: usize,
    pub final_residual: f64,
    /// `α ≤ x ≤ β` pointwise; `true` when no brackets were given.
    pub bracket_respected: bool,
    /// `(I_{i1}, I_{i2})` per component, filled in by
    /// [`criteria::compute_envelope`].
    pub envelope: Option<Vec<(f64, f64)>>,
    pub status: Status,
    pub strategy: Strategy,
    pub convention: SignConvention,
    /// Final damping factor.
    pub damping: f64,
    /// Iterates, when requested.
    pub trace: Vec<GridFunction>,
    /// For monotone strategies: whether every step moved in the expected
    /// direction.
    pub monotone: Option<bool>,
    /// For the nested strategy: max-norm change between successive levels on
    /// their common support, deepest level first.
    pub nest_trail: Vec<f64>,
    pub message: Option<String>,
}

/// Lower and upper functions, validated once.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Band<'a> {
    pub alpha: &'a GridFunction,
    pub beta: &'a GridFunction,
}

impl<'a> Band<'a> {
    pub(crate) fn new(
        ts: &Arc<TimeScale>,
        dim: usize,
        alpha: &'a GridFunction,
        beta: &'a GridFunction,
    ) -> Result<Self> {
        for g in [alpha, beta] {
            if !g.same_scale_as(ts) {
                return Err(Error::ScaleMismatch);
            }
            if g.dim() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: g.dim(),
                });
            }
            if !g.covers_full_scale() {
                return Err(Error::SupportMismatch {
                    expected_lo: 0,
                    expected_hi: ts.last_index(),
                    lo: g.lo(),
                    hi: g.hi(),
                });
            }
        }
        for k in 0..ts.len() {
            if let Some(i) = (0..dim).find(|&i| alpha.at(k, i) > beta.at(k, i)) {
                return Err(Error::BracketViolation { index: k, component: i });
            }
        }
        Ok(Band { alpha, beta })
    }

    fn contains(&self, u: &GridFunction) -> bool {
        let tol = |v: f64| 1e-12 * (1.0 + v.abs());
        u.values()
            .iter()
            .zip(self.alpha.values().iter().zip(self.beta.values()))
            .all(|(&x, (&lo, &hi))| x >= lo - tol(lo) && x <= hi + tol(hi))
    }

    fn midpoint(&self) -> GridFunction {
        self.alpha.add(self.beta).expect("band validated").scaled(0.5)
    }
}

/// Clamps `x` componentwise into `[α^σ(t), β^σ(t)]` for `t = p_{t_idx}`.
pub fn truncate_d(alpha: &GridFunction, beta: &GridFunction, t_idx: usize, x: &[f64]) -> Result<Vec<f64>> {
    let s = t_idx + 1;
    let lo = alpha.value(s)?;
    let hi = beta.value(s)?;
    if x.len() != lo.len() || hi.len() != lo.len() {
        return Err(Error::DimensionMismatch {
            expected: lo.len(),
            got: x.len(),
        });
    }
    if let Some(i) = (0..lo.len()).find(|&i| lo[i] > hi[i]) {
        return Err(Error::BracketViolation { index: s, component: i });
    }
    Ok(clamp(x, lo, hi))
}

fn clamp(x: &[f64], lo: &[f64], hi: &[f64]) -> Vec<f64> {
    x.iter()
        .zip(lo.iter().zip(hi))
        .map(|(&v, (&l, &h))| {
            if v < l {
                l
            } else if v > h {
                h
            } else {
                v
            }
        })
        .collect()
}

/// `f*(t, x) = f(t, d(t, x)) + (d_i − x_i)/(1 + |d_i − x_i|)` at
/// `t = p_{t_idx}`.
pub fn modified_rhs(
    f: &Nonlinearity,
    alpha: &GridFunction,
    beta: &GridFunction,
    t_idx: usize,
    x: &[f64],
) -> Result<f64> {
    let d = truncate_d(alpha, beta, t_idx, x)?;
    let t = alpha.scale().point(t_idx)?;
    let i = f.component();
    Ok(f.evaluate(t, &d)? + regularizer(d[i] - x[i]))
}

#[inline]
fn regularizer(gap: f64) -> f64 {
    gap / (1.0 + gap.abs())
}

/// Right-hand side samples `h_k` for `k = 0..=N−2`, padded with zeros to the
/// full scale.
fn rhs(problem: &DirichletProblem, band: Option<Band>, u: &GridFunction, regularize: bool) -> Result<GridFunction> {
    let ts = problem.scale();
    let n = problem.dim();
    let mut values = vec![0.0; ts.len() * n];
    for k in ts.equation_points() {
        let x = u.row(k + 1);
        let t = ts.p(k);
        let h = &mut values[k * n..(k + 1) * n];
        match band {
            Some(b) => {
                let d = clamp(x, b.alpha.row(k + 1), b.beta.row(k + 1));
                for (i, fi) in problem.nonlinearities().iter().enumerate() {
                    h[i] = fi.evaluate(t, &d)?;
                    if regularize {
                        h[i] += regularizer(d[i] - x[i]);
                    }
                }
            }
            None => {
                for (i, fi) in problem.nonlinearities().iter().enumerate() {
                    h[i] = fi.evaluate(t, x)?;
                }
            }
        }
    }
    GridFunction::new(ts.clone(), 0, n, values)
}

fn with_boundary(problem: &DirichletProblem, phi_u: &GridFunction, g: &GridFunction) -> Result<GridFunction> {
    let mut out = phi_u.add(g)?;
    pin_boundary(problem, &mut out);
    Ok(out)
}

/// Overwrites the end values with the boundary data.
pub(crate) fn pin_boundary(problem: &DirichletProblem, u: &mut GridFunction) {
    let n = problem.dim();
    let last = u.values().len() - n;
    let values = u.values_mut();
    values[..n].copy_from_slice(problem.a_bc());
    values[last..].copy_from_slice(problem.b_bc());
}

/// `Nu = φ + G f*(·, u^σ)`.
pub fn apply_n(
    problem: &DirichletProblem,
    alpha: &GridFunction,
    beta: &GridFunction,
    u: &GridFunction,
) -> Result<GridFunction> {
    let ts = problem.scale();
    let band = Band::new(ts, problem.dim(), alpha, beta)?;
    check_iterate(problem, u)?;
    let p = phi(ts, problem.a_bc(), problem.b_bc())?;
    let h = rhs(problem, Some(band), u, true)?;
    with_boundary(problem, &p, &green_apply(ts, &h)?)
}

fn check_iterate(problem: &DirichletProblem, u: &GridFunction) -> Result<()> {
    let ts = problem.scale();
    if !u.same_scale_as(ts) {
        return Err(Error::ScaleMismatch);
    }
    if u.dim() != problem.dim() {
        return Err(Error::DimensionMismatch {
            expected: problem.dim(),
            got: u.dim(),
        });
    }
    if !u.covers_full_scale() {
        return Err(Error::SupportMismatch {
            expected_lo: 0,
            expected_hi: ts.last_index(),
            lo: u.lo(),
            hi: u.hi(),
        });
    }
    Ok(())
}

/// `−u^ΔΔ(p_k) − f(p_k, u(p_{k+1}))` on the equation points `[0, N − 2]`.
pub fn residual(problem: &DirichletProblem, u: &GridFunction) -> Result<GridFunction> {
    check_iterate(problem, u)?;
    let ts = problem.scale();
    let n = problem.dim();
    let mut values = Vec::with_capacity((ts.len() - 2) * n);
    for k in ts.equation_points() {
        let (m0, m1) = (ts.mu(k), ts.mu(k + 1));
        let x = u.row(k + 1);
        for (i, fi) in problem.nonlinearities().iter().enumerate() {
            let d2 = ((u.at(k + 2, i) - u.at(k + 1, i)) / m1 - (u.at(k + 1, i) - u.at(k, i)) / m0) / m0;
            values.push(-d2 - fi.evaluate(ts.p(k), x)?);
        }
    }
    GridFunction::new(ts.clone(), 0, n, values)
}

/// Max-norm of [`residual`]; non-finite residuals give `+∞`.
pub fn residual_norm(problem: &DirichletProblem, u: &GridFunction) -> Result<f64> {
    match residual(problem, u) {
        Ok(r) => Ok(r.max_abs()),
        Err(Error::NonFiniteValue { .. } | Error::NonFiniteResult { .. }) => Ok(f64::INFINITY),
        Err(e) => Err(e),
    }
}

/// Solves the problem with the configured strategy.
///
/// Brackets are optional for `Picard` and `NewtonOracle` and required
/// otherwise. Invalid input is an error; numerical failure is reported
/// through [`SolveReport::status`].
pub fn solve(
    problem: &DirichletProblem,
    alpha: Option<&GridFunction>,
    beta: Option<&GridFunction>,
    cfg: &SolveConfig,
) -> Result<SolveReport> {
    cfg.validate()?;
    let ts = problem.scale();
    let band = match (alpha, beta) {
        (Some(a), Some(b)) => Some(Band::new(ts, problem.dim(), a, b)?),
        (None, None) => None,
        _ => {
            return Err(Error::InvalidConfig {
                reason: "brackets must be given together".into(),
            })
        }
    };
    if cfg.strict {
        if let Some(b) = band {
            for (report, what) in [
                (criteria::verify_lower(problem, b.alpha)?, "lower"),
                (criteria::verify_upper(problem, b.beta)?, "upper"),
            ] {
                if !report.pass {
                    return Err(Error::CriterionNotSatisfied {
                        component: report.violations[0].component,
                        reason: format!(
                            "bracket is not a {what} solution ({} violations)",
                            report.violations.len()
                        ),
                    });
                }
            }
        }
    }
    info!(
        "solving with {} on {} points, n = {}",
        cfg.strategy,
        ts.len(),
        problem.dim()
    );
    match cfg.strategy {
        Strategy::Picard => {
            let start = match band {
                Some(b) => b.midpoint(),
                None => phi(ts, problem.a_bc(), problem.b_bc())?,
            };
            Ok(picard(problem, band, start, cfg))
        }
        Strategy::MonotoneUp | Strategy::MonotoneDown => {
            let b = band.ok_or_else(|| Error::InvalidConfig {
                reason: format!("{} needs brackets", cfg.strategy),
            })?;
            Ok(monotone(problem, b, cfg))
        }
        Strategy::NewtonOracle => newton::solve(problem, band, cfg),
        Strategy::TruncatedNest => {
            let b = band.ok_or_else(|| Error::InvalidConfig {
                reason: "truncated_nest needs brackets".into(),
            })?;
            nest(problem, b, cfg)
        }
    }
}

fn finish(
    band: Option<Band>,
    solution: GridFunction,
    iterations: usize,
    final_residual: f64,
    status: Status,
    cfg: &SolveConfig,
) -> SolveReport {
    let bracket_respected = band.is_none_or(|b| b.contains(&solution));
    let mut status = status;
    let mut message = None;
    if status == Status::Converged && !bracket_respected {
        status = Status::Diverged;
        message = Some("residual tolerance met outside the bracket".into());
    }
    SolveReport {
        solution,
        iterations,
        final_residual,
        bracket_respected,
        envelope: None,
        status,
        strategy: cfg.strategy,
        convention: SignConvention::Canonical,
        damping: cfg.damping,
        trace: Vec::new(),
        monotone: None,
        nest_trail: Vec::new(),
        message,
    }
}

fn picard(problem: &DirichletProblem, band: Option<Band>, start: GridFunction, cfg: &SolveConfig) -> SolveReport {
    let ts = problem.scale();
    let mut u = start;
    pin_boundary(problem, &mut u);
    let mut trace = Vec::new();
    if cfg.keep_trace {
        trace.push(u.clone());
    }
    let p = match phi(ts, problem.a_bc(), problem.b_bc()) {
        Ok(p) => p,
        Err(e) => return failed(band, u, 0, e, cfg),
    };
    let mut theta = cfg.damping;
    let mut prev = match residual_norm(problem, &u) {
        Ok(r) if r <= cfg.tol_residual => {
            let mut rep = finish(band, u, 0, r, Status::Converged, cfg);
            rep.trace = trace;
            return rep;
        }
        Ok(r) => r,
        Err(_) => f64::INFINITY,
    };
    let mut increases = 0;
    let mut best = prev;
    let mut since_best = 0;
    for it in 1..=cfg.max_iters {
        let nu = match rhs(problem, band, &u, true)
            .and_then(|h| green_apply(ts, &h))
            .and_then(|g| with_boundary(problem, &p, &g))
        {
            Ok(v) => v,
            Err(e) => return failed(band, u, it, e, cfg),
        };
        let next = if theta == 1.0 {
            nu
        } else {
            u.scaled(1.0 - theta).add(&nu.scaled(theta)).expect("same support")
        };
        let step = next.max_diff(&u).expect("same support");
        u = next;
        if cfg.keep_trace {
            trace.push(u.clone());
        }
        let res = match residual_norm(problem, &u) {
            Ok(r) => r,
            Err(e) => return failed(band, u, it, e, cfg),
        };
        debug!("picard {it}: residual {res:e}, step {step:e}, damping {theta}");
        let stop = |status, msg: Option<&str>, theta: f64| {
            let mut rep = finish(band, u.clone(), it, res, status, cfg);
            rep.damping = theta;
            if rep.message.is_none() {
                rep.message = msg.map(str::to_owned);
            }
            rep
        };
        if res <= cfg.tol_residual {
            let mut rep = stop(Status::Converged, None, theta);
            rep.trace = trace;
            return rep;
        }
        if !res.is_finite() || res > BLOWUP {
            let mut rep = stop(Status::Diverged, Some("residual blew up"), theta);
            rep.trace = trace;
            return rep;
        }
        if res > prev {
            increases += 1;
            if increases >= INCREASES_BEFORE_HALVING && theta > MIN_DAMPING {
                theta = (theta / 2.0).max(MIN_DAMPING);
                increases = 0;
                debug!("damping reduced to {theta}");
            }
        } else {
            increases = 0;
        }
        prev = res;
        if res < best {
            best = res;
            since_best = 0;
        } else {
            since_best += 1;
        }
        if step <= cfg.tol_step && since_best >= STAGNATION_WINDOW {
            let mut rep = stop(
                Status::MaxIters,
                Some("iteration stagnated above the residual tolerance"),
                theta,
            );
            rep.trace = trace;
            return rep;
        }
    }
    let res = prev;
    let mut rep = finish(band, u, cfg.max_iters, res, Status::MaxIters, cfg);
    rep.damping = theta;
    rep.trace = trace;
    rep
}

fn failed(band: Option<Band>, u: GridFunction, it: usize, err: Error, cfg: &SolveConfig) -> SolveReport {
    let status = match err {
        Error::NonFiniteResult { .. } | Error::NonFiniteValue { .. } => Status::Diverged,
        _ => Status::DomainError,
    };
    let mut rep = finish(band, u, it, f64::INFINITY, status, cfg);
    rep.message = Some(err.to_string());
    rep
}

fn monotone(problem: &DirichletProblem, band: Band, cfg: &SolveConfig) -> SolveReport {
    let ts = problem.scale();
    let up = cfg.strategy == Strategy::MonotoneUp;
    let mut u = if up { band.alpha.clone() } else { band.beta.clone() };
    let mut trace = Vec::new();
    if cfg.keep_trace {
        trace.push(u.clone());
    }
    let p = match phi(ts, problem.a_bc(), problem.b_bc()) {
        Ok(p) => p,
        Err(e) => return failed(Some(band), u, 0, e, cfg),
    };
    let mut ordered = true;
    let mut res = f64::INFINITY;
    for it in 1..=cfg.max_iters {
        let nu = match rhs(problem, None, &u, false)
            .and_then(|h| green_apply(ts, &h))
            .and_then(|g| with_boundary(problem, &p, &g))
        {
            Ok(v) => v,
            Err(e) => {
                let mut rep = failed(Some(band), u, it, e, cfg);
                rep.monotone = Some(ordered);
                rep.trace = trace;
                return rep;
            }
        };
        let next = if cfg.damping == 1.0 {
            nu
        } else {
            u.scaled(1.0 - cfg.damping)
                .add(&nu.scaled(cfg.damping))
                .expect("same support")
        };
        let moved_right_way = next.values().iter().zip(u.values()).all(|(&new, &old)| {
            let slack = MONOTONE_SLACK * (1.0 + old.abs());
            if up {
                new >= old - slack
            } else {
                new <= old + slack
            }
        });
        if !moved_right_way {
            debug!("{}: ordering lost at iteration {it}", cfg.strategy);
        }
        ordered &= moved_right_way;
        u = next;
        if cfg.keep_trace {
            trace.push(u.clone());
        }
        res = match residual_norm(problem, &u) {
            Ok(r) => r,
            Err(e) => {
                let mut rep = failed(Some(band), u, it, e, cfg);
                rep.monotone = Some(ordered);
                rep.trace = trace;
                return rep;
            }
        };
        debug!("{} {it}: residual {res:e}", cfg.strategy);
        let status = if res <= cfg.tol_residual {
            Some(Status::Converged)
        } else if !res.is_finite() || res > BLOWUP {
            Some(Status::Diverged)
        } else {
            None
        };
        if let Some(status) = status {
            let mut rep = finish(Some(band), u, it, res, status, cfg);
            rep.monotone = Some(ordered);
            rep.trace = trace;
            return rep;
        }
    }
    let mut rep = finish(Some(band), u, cfg.max_iters, res, Status::MaxIters, cfg);
    rep.monotone = Some(ordered);
    rep.trace = trace;
    rep
}

/// Solves on the windows `[k, N − k]` for `k = depth, …, 0`, each with
/// boundary data at the band midpoint (the true data at `k = 0`), warm
/// starting from the previous level.
fn nest(problem: &DirichletProblem, band: Band, cfg: &SolveConfig) -> Result<SolveReport> {
    let ts = problem.scale();
    let last = ts.last_index();
    let max_depth = (last - 3) / 2;
    let depth = cfg.nest_depth.unwrap_or(4).min(max_depth);
    let mid = band.midpoint();
    let inner_cfg = SolveConfig {
        strategy: Strategy::Picard,
        keep_trace: false,
        ..cfg.clone()
    };
    let mut prev: Option<GridFunction> = None;
    let mut trail = Vec::with_capacity(depth);
    let mut iterations = 0;
    let mut report = None;
    for k in (0..=depth).rev() {
        let (lo, hi) = (k, last - k);
        let sub_ts = Arc::new(ts.window(lo, hi)?);
        let (a_bc, b_bc) = if k == 0 {
            (problem.a_bc().to_vec(), problem.b_bc().to_vec())
        } else {
            (mid.row(lo).to_vec(), mid.row(hi).to_vec())
        };
        let sub = problem.windowed(sub_ts.clone(), a_bc, b_bc)?;
        let alpha = band.alpha.restrict(lo, hi)?.rehome(sub_ts.clone(), 0)?;
        let beta = band.beta.restrict(lo, hi)?.rehome(sub_ts.clone(), 0)?;
        let sub_band = Band::new(&sub_ts, problem.dim(), &alpha, &beta)?;
        let mut start = mid.restrict(lo, hi)?.rehome(sub_ts.clone(), 0)?;
        if let Some(p) = &prev {
            // previous level covers [lo + 1, hi − 1]
            let n = problem.dim();
            start.values_mut()[n..(hi - lo) * n].copy_from_slice(p.values());
        }
        let rep = picard(&sub, Some(sub_band), start, &inner_cfg);
        iterations += rep.iterations;
        debug!("nest level {k}: {} after {} iterations", rep.status, rep.iterations);
        let here = rep.solution.restrict(0, hi - lo)?;
        if let Some(p) = &prev {
            let inner = here.restrict(1, hi - lo - 1)?.values().to_vec();
            let diff = inner
                .iter()
                .zip(p.values())
                .fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
            trail.push(diff);
        }
        prev = Some(here);
        report = Some(rep);
    }
    let rep = report.expect("at least one level");
    let solution = rep.solution.rehome(ts.clone(), 0)?;
    let final_residual = residual_norm(problem, &solution).unwrap_or(f64::INFINITY);
    let status = if rep.status == Status::Converged && final_residual > cfg.tol_residual {
        Status::MaxIters
    } else {
        rep.status
    };
    let mut out = finish(Some(band), solution, iterations, final_residual, status, cfg);
    out.nest_trail = trail;
    out.damping = rep.damping;
    if out.message.is_none() {
        out.message = rep.message;
    }
    Ok(out)
}
