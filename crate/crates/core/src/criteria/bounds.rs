//! Explicit lower and upper solutions, their verification, and the envelope
//! and boundary-slope diagnostics of computed solutions.

use std::sync::Arc;

use crate::calculus::GridFunction;
use crate::error::{Error, Result};
use crate::green::{e_at, green_apply, phi};
use crate::model::{DirichletProblem, Nonlinearity, ProblemMode};
use crate::timescale::TimeScale;

use super::{
    classify, criterion_necessary, criterion_sufficient, require_positive_mode, ConvergenceVerdict, Verdict, MIN_FAMILY,
};

/// Relative slack in the pointwise inequality checks.
const VERIFY_TOL: f64 = 1e-8;
/// Boundary values this close to zero count as zero in positive mode.
const BOUNDARY_TOL: f64 = 1e-12;

/// Constants produced along with a bound; a field is empty when the
/// constructing operation does not define it.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundConstants {
    pub i1: Vec<f64>,
    pub i2: Vec<f64>,
    pub k1: Vec<f64>,
    pub k2: Vec<f64>,
    pub l1: Vec<f64>,
    pub c: Option<f64>,
    pub c2: Option<f64>,
    pub m: Vec<f64>,
    pub big_m: Vec<f64>,
}

impl BoundConstants {
    /// Populated constants as `(name, values)` rows, in a fixed order.
    pub fn rows(&self) -> Vec<(&'static str, Vec<f64>)> {
        let mut out = Vec::new();
        for (name, v) in [
            ("I1", &self.i1),
            ("I2", &self.i2),
            ("k1", &self.k1),
            ("k2", &self.k2),
            ("L1", &self.l1),
            ("m", &self.m),
            ("M", &self.big_m),
        ] {
            if !v.is_empty() {
                out.push((name, v.clone()));
            }
        }
        for (name, v) in [("C", self.c), ("C2", self.c2)] {
            if let Some(v) = v {
                out.push((name, vec![v]));
            }
        }
        out
    }
}

/// Which weight exponent the lower construction uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LowerMode {
    /// Weight raised to `μ_ii`.
    #[default]
    WithMuIi,
    /// Weight to the first power.
    Without,
}

#[derive(Debug, Clone)]
pub struct BoundsPair {
    pub alpha: GridFunction,
    pub beta: Option<GridFunction>,
    pub constants: BoundConstants,
    /// Outcome of [`verify_lower`] on `alpha`.
    pub lower_verified: bool,
    /// Outcome of [`verify_upper`] on `beta`, when present.
    pub upper_verified: Option<bool>,
    /// Lower constructions only: whether `g_i ≥ L_{i1}·(t − a)(σ²(b) − t)/(σ²(b) − a)²`
    /// held at every point.
    pub lower_display_holds: Option<bool>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Violation {
    /// Point index; boundary violations use `0` and `N`.
    pub index: usize,
    pub component: usize,
    /// Amount by which the inequality fails; `+∞` when `f` is undefined.
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VerifyReport {
    pub pass: bool,
    pub violations: Vec<Violation>,
    /// Largest excess `lhs − rhs` (lower) or `rhs − lhs` (upper); negative
    /// when every inequality holds strictly.
    pub worst_slack: f64,
}

fn declared(f: &Nonlinearity) -> Result<(&[f64], &[f64])> {
    let (lambda, mu) = f.exponents().ok_or_else(|| Error::ShapeViolation {
        reason: format!("f{} has no exponent declaration", f.component() + 1),
    })?;
    let mii = mu[f.component()];
    if !(mii < 1.0) {
        return Err(Error::ShapeViolation {
            reason: format!("f{} needs μ_ii < 1, got {mii}", f.component() + 1),
        });
    }
    Ok((lambda, mu))
}

fn require_satisfied(verdicts: &[ConvergenceVerdict], what: &str) -> Result<()> {
    for (i, v) in verdicts.iter().enumerate() {
        if !v.satisfied() {
            let reason = if v.verdict == Verdict::Convergent {
                format!("{what} integral is not positive")
            } else {
                format!("{what} integral is {}", v.verdict)
            };
            return Err(Error::CriterionNotSatisfied { component: i, reason });
        }
    }
    Ok(())
}

/// Stacks per-equation-point rows `h_k` (for `k = 0..=N−2`) into a grid
/// function padded with zeros.
fn rhs_function(ts: &Arc<TimeScale>, n: usize, rows: &[Vec<f64>]) -> Result<GridFunction> {
    let mut values = vec![0.0; ts.len() * n];
    for (k, r) in rows.iter().enumerate() {
        values[k * n..(k + 1) * n].copy_from_slice(r);
    }
    GridFunction::new(ts.clone(), 0, n, values)
}

/// `α = k₁·y`, `β = k₂·y` with `y = G f(·, E^σ)`.
pub fn construct_bounds(problem: &DirichletProblem, family: &[Arc<TimeScale>]) -> Result<BoundsPair> {
    require_positive_mode(problem)?;
    require_satisfied(&criterion_sufficient(problem, family)?, "sufficient")?;
    let n = problem.dim();
    let exps: Vec<_> = problem.nonlinearities().iter().map(declared).collect::<Result<_>>()?;
    let ts = problem.scale();
    let (a, end, span) = (ts.a(), ts.sigma2_b(), ts.span());

    let mut rows = Vec::with_capacity(ts.len() - 2);
    let mut i1 = vec![0.0; n];
    let mut i2 = vec![0.0; n];
    for k in ts.equation_points() {
        let x = vec![e_at(ts, k + 1); n];
        let h = problem.eval_all(ts.p(k), &x)?;
        let mu = ts.mu(k);
        let w = (ts.p(k) - a) * (end - ts.p(k + 1)) / span;
        for i in 0..n {
            i1[i] += mu * w * h[i] / span;
            i2[i] += mu * h[i];
        }
        rows.push(h);
    }
    if let Some(i) = (0..n).find(|&i| !(i1[i] > 0.0)) {
        return Err(Error::CriterionNotSatisfied {
            component: i,
            reason: format!("I1 = {} is not positive", i1[i]),
        });
    }
    let c = (0..n).fold(1.0f64, |c, i| c.max(1.0 / i1[i]).max(i2[i]));
    let mut k1 = vec![0.0; n];
    let mut k2 = vec![0.0; n];
    for (i, (lambda, mu)) in exps.iter().enumerate() {
        let root = 1.0 / (1.0 - mu[i]);
        let spread: f64 = lambda.iter().zip(mu.iter()).map(|(l, m)| l - m).sum();
        let p2: f64 = (0..n).map(|j| i2[j].powf(lambda[j])).product();
        let p1: f64 = (0..n).map(|j| i1[j].powf(lambda[j])).product();
        k1[i] = (c.powf(spread) * p2).powf(root).min(1.0);
        k2[i] = (c.powf(-spread) * p1).powf(root).max(1.0);
    }
    let y = green_apply(ts, &rhs_function(ts, n, &rows)?)?;
    let alpha = y.scaled_components(&k1)?;
    let beta = y.scaled_components(&k2)?;
    let lower_verified = verify_lower(problem, &alpha)?.pass;
    let upper_verified = Some(verify_upper(problem, &beta)?.pass);
    Ok(BoundsPair {
        alpha,
        beta: Some(beta),
        constants: BoundConstants {
            i1,
            i2,
            k1,
            k2,
            c: Some(c),
            ..Default::default()
        },
        lower_verified,
        upper_verified,
        lower_display_holds: None,
    })
}

/// `α_i = k_{i1}·g_i` with
/// `g_i(t) = Σ_s μ(s)·G(t, s)·w(s)^η·f_i(s, [σ²(b)])`.
pub fn construct_lower(problem: &DirichletProblem, family: &[Arc<TimeScale>], mode: LowerMode) -> Result<BoundsPair> {
    require_positive_mode(problem)?;
    let ts = problem.scale();
    let end = ts.sigma2_b();
    if !(end > 0.0) {
        return Err(Error::NonpositiveEndpoint { value: end });
    }
    require_satisfied(&criterion_necessary(problem, family, None)?, "necessary")?;
    let n = problem.dim();
    let exps: Vec<_> = problem.nonlinearities().iter().map(declared).collect::<Result<_>>()?;
    let (a, span) = (ts.a(), ts.span());
    let pinned = vec![end; n];

    let mut rows = Vec::with_capacity(ts.len() - 2);
    let mut l1 = vec![0.0; n];
    for k in ts.equation_points() {
        let f = problem.eval_all(ts.p(k), &pinned)?;
        let ss = ts.p(k + 1);
        let (left, right) = (ss - a, end - ss);
        let w = left * right / (span * span);
        let mu = ts.mu(k);
        let mut h = vec![0.0; n];
        for i in 0..n {
            let mii = exps[i].1[i];
            let eta = match mode {
                LowerMode::WithMuIi => mii,
                LowerMode::Without => 1.0,
            };
            h[i] = w.powf(eta) * f[i];
            l1[i] += mu * left * right.powf(1.0 + mii) / span.powf(2.0 * mii) * f[i] / span;
        }
        rows.push(h);
    }
    let c2 = l1
        .iter()
        .map(|&l| 1.0 / (end * l.max(1.0)))
        .fold(f64::INFINITY, f64::min);
    let k1: Vec<f64> = exps
        .iter()
        .enumerate()
        .map(|(i, (lambda, mu))| {
            let prod: f64 = (0..n)
                .map(|j| l1[j].powf(mu[j]) * (1.0 / end).powf(lambda[j]) * c2.powf(mu[j] - lambda[j]))
                .product();
            prod.min(1.0).powf(1.0 / (1.0 - mu[i]))
        })
        .collect();
    let g = green_apply(ts, &rhs_function(ts, n, &rows)?)?;
    let display = (0..ts.len()).all(|k| {
        let t = ts.p(k);
        let shape = (t - a) * (end - t) / (span * span);
        (0..n).all(|i| {
            let want = l1[i] * shape;
            g.at(k, i) >= want - VERIFY_TOL * want.abs().max(f64::MIN_POSITIVE)
        })
    });
    let alpha = g.scaled_components(&k1)?;
    let lower_verified = verify_lower(problem, &alpha)?.pass;
    Ok(BoundsPair {
        alpha,
        beta: None,
        constants: BoundConstants {
            k1,
            l1,
            c2: Some(c2),
            ..Default::default()
        },
        lower_verified,
        upper_verified: None,
        lower_display_holds: Some(display),
    })
}

/// `α_i = m_i·G1 + φ_i`, `β_i = M_i·G1 + φ_i` for constant bounds
/// `m_i ≤ f_i ≤ M_i`.
pub fn bounds_from_constants(problem: &DirichletProblem, m: &[f64], big_m: &[f64]) -> Result<BoundsPair> {
    let n = problem.dim();
    for v in [m, big_m] {
        if v.len() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: v.len(),
            });
        }
    }
    if let Some(i) = (0..n).find(|&i| !(m[i] <= big_m[i])) {
        return Err(Error::BoundOrderViolation {
            component: i,
            m: m[i],
            big_m: big_m[i],
        });
    }
    let ts = problem.scale();
    let unit = green_apply(ts, &GridFunction::constant(ts, &[1.0])?)?;
    let p = phi(ts, problem.a_bc(), problem.b_bc())?;
    let build = |c: &[f64]| -> Result<GridFunction> {
        let mut values = Vec::with_capacity(ts.len() * n);
        for k in 0..ts.len() {
            values.extend((0..n).map(|i| c[i] * unit.at(k, 0) + p.at(k, i)));
        }
        GridFunction::new(ts.clone(), 0, n, values)
    };
    let alpha = build(m)?;
    let beta = build(big_m)?;
    let lower_verified = verify_lower(problem, &alpha)?.pass;
    let upper_verified = Some(verify_upper(problem, &beta)?.pass);
    Ok(BoundsPair {
        alpha,
        beta: Some(beta),
        constants: BoundConstants {
            m: m.to_vec(),
            big_m: big_m.to_vec(),
            ..Default::default()
        },
        lower_verified,
        upper_verified,
        lower_display_holds: None,
    })
}

/// Checks `−α^ΔΔ(t) ≤ f(t, α^σ(t))` at every equation point plus the
/// boundary conditions.
pub fn verify_lower(problem: &DirichletProblem, alpha: &GridFunction) -> Result<VerifyReport> {
    verify(problem, alpha, true)
}

/// Checks `−β^ΔΔ(t) ≥ f(t, β^σ(t))` at every equation point plus the
/// boundary conditions.
pub fn verify_upper(problem: &DirichletProblem, beta: &GridFunction) -> Result<VerifyReport> {
    verify(problem, beta, false)
}

fn verify(problem: &DirichletProblem, cand: &GridFunction, lower: bool) -> Result<VerifyReport> {
    let ts = problem.scale();
    let n = problem.dim();
    check_candidate(problem, cand)?;
    let mut violations = Vec::new();
    let mut worst = f64::NEG_INFINITY;
    for k in ts.equation_points() {
        let (m0, m1) = (ts.mu(k), ts.mu(k + 1));
        let x = cand.row(k + 1);
        for (i, f) in problem.nonlinearities().iter().enumerate() {
            let lhs = -((cand.at(k + 2, i) - cand.at(k + 1, i)) / m1 - (cand.at(k + 1, i) - cand.at(k, i)) / m0) / m0;
            // below the floor a singular f is taken as +∞
            let rhs = if f.below_floor(x) {
                Some(f64::INFINITY)
            } else {
                f.evaluate(ts.p(k), x).ok()
            };
            let (excess, scale) = match rhs {
                Some(r) if lower => (lhs - r, r.abs()),
                Some(r) => (r - lhs, r.abs()),
                None => (f64::INFINITY, 1.0),
            };
            let excess = if excess.is_nan() { f64::INFINITY } else { excess };
            worst = worst.max(excess);
            let allowed = if scale.is_finite() {
                VERIFY_TOL * scale.max(1.0)
            } else {
                0.0
            };
            if excess > allowed {
                violations.push(Violation {
                    index: k,
                    component: i,
                    slack: excess,
                });
            }
        }
    }
    let last = ts.last_index();
    for (k, target) in [(0, problem.a_bc()), (last, problem.b_bc())] {
        for i in 0..n {
            let v = cand.at(k, i);
            let excess = match problem.mode() {
                ProblemMode::Positive => v.abs() - BOUNDARY_TOL,
                ProblemMode::General if lower => v - target[i] - BOUNDARY_TOL * target[i].abs().max(1.0),
                ProblemMode::General => target[i] - v - BOUNDARY_TOL * target[i].abs().max(1.0),
            };
            if excess > 0.0 {
                worst = worst.max(excess);
                violations.push(Violation {
                    index: k,
                    component: i,
                    slack: excess,
                });
            }
        }
    }
    Ok(VerifyReport {
        pass: violations.is_empty(),
        violations,
        worst_slack: worst,
    })
}

fn check_candidate(problem: &DirichletProblem, u: &GridFunction) -> Result<()> {
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

/// `(I_{i1}, I_{i2})` for a computed solution, after checking
/// `I_{i1}·e(t) ≤ x_i(t) ≤ I_{i2}·e(t)` at every point.
pub fn compute_envelope(problem: &DirichletProblem, x: &GridFunction) -> Result<Vec<(f64, f64)>> {
    check_candidate(problem, x)?;
    let ts = problem.scale();
    let n = problem.dim();
    let (a, end, span) = (ts.a(), ts.sigma2_b(), ts.span());
    let mut i1 = vec![0.0; n];
    let mut i2 = vec![0.0; n];
    for k in ts.equation_points() {
        let h = problem.eval_all(ts.p(k), x.row(k + 1))?;
        let mu = ts.mu(k);
        let w = (ts.p(k) - a) * (end - ts.p(k + 1)) / span;
        for i in 0..n {
            i1[i] += mu * w * h[i] / span;
            i2[i] += mu * h[i];
        }
    }
    let allowed = VERIFY_TOL * x.max_abs().max(1.0);
    let mut worst: Option<(usize, usize, f64)> = None;
    for k in 0..ts.len() {
        let e = e_at(ts, k);
        for i in 0..n {
            let v = x.at(k, i);
            let excess = (i1[i] * e - v).max(v - i2[i] * e);
            if excess > allowed && worst.is_none_or(|w| excess > w.2) {
                worst = Some((k, i, excess));
            }
        }
    }
    if let Some((index, component, slack)) = worst {
        return Err(Error::EnvelopeViolation {
            index,
            component,
            slack,
        });
    }
    Ok(i1.into_iter().zip(i2).collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Type1Report {
    /// `x^Δ(a)` per member (coarsest first), one trail per component.
    pub left_slope_trail: Vec<Vec<f64>>,
    /// `x^Δ(b)` per member, one trail per component.
    pub right_slope_trail: Vec<Vec<f64>>,
    pub left: Vec<ConvergenceVerdict>,
    pub right: Vec<ConvergenceVerdict>,
    /// Every trail was classified convergent.
    pub bounded: bool,
}

/// Endpoint slopes of solutions computed on each member of a refinement
/// family.
pub fn type1_limits(solutions: &[GridFunction]) -> Result<Type1Report> {
    if solutions.len() < MIN_FAMILY {
        return Err(Error::FamilyTooShort {
            needed: MIN_FAMILY,
            got: solutions.len(),
        });
    }
    let n = solutions[0].dim();
    let mut members: Vec<&GridFunction> = solutions.iter().collect();
    for x in &members {
        if x.dim() != n {
            return Err(Error::DimensionMismatch {
                expected: n,
                got: x.dim(),
            });
        }
        if !x.covers_full_scale() {
            return Err(Error::SupportMismatch {
                expected_lo: 0,
                expected_hi: x.scale().last_index(),
                lo: x.lo(),
                hi: x.hi(),
            });
        }
    }
    members.sort_by(|x, y| y.scale().min_graininess().total_cmp(&x.scale().min_graininess()));
    let levels: Vec<f64> = members.iter().map(|x| x.scale().min_graininess()).collect();
    let mut left_trail = vec![Vec::new(); n];
    let mut right_trail = vec![Vec::new(); n];
    for x in &members {
        let ts = x.scale();
        let b = ts.last_index() - 2;
        for i in 0..n {
            left_trail[i].push((x.at(1, i) - x.at(0, i)) / ts.mu(0));
            right_trail[i].push((x.at(b + 1, i) - x.at(b, i)) / ts.mu(b));
        }
    }
    let left: Vec<_> = left_trail.iter().map(|t| classify(t, &levels)).collect::<Result<_>>()?;
    let right: Vec<_> = right_trail
        .iter()
        .map(|t| classify(t, &levels))
        .collect::<Result<_>>()?;
    let bounded = left.iter().chain(&right).all(|v| v.verdict == Verdict::Convergent);
    Ok(Type1Report {
        left_slope_trail: left_trail,
        right_slope_trail: right_trail,
        left,
        right,
        bounded,
    })
}
