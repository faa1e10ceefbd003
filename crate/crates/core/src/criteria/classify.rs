//! Convergence classification of partial integrals over a refinement family.
//!
//! Partials `S_m` are assumed to approach their limit like
//! `S(h) = L + Σ_{j<J} c_j·h^{β+j}` in the refinement parameter `h`, with the
//! leading exponent `β` unknown. The limit is extrapolated twice, from the
//! last `m` and the last `m − 1` members, and the disagreement of the two
//! estimates is the reported tail.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Smallest usable family.
pub const MIN_FAMILY: usize = 4;
/// A convergent trail needs its last increment ratios below this.
pub const RATIO_LIMIT: f64 = 0.9;
/// Relative Cauchy tail accepted as converged.
pub const TAIL_REL: f64 = 1e-6;
/// Growth over the last three refinements that signals divergence.
pub const GROWTH_FACTOR: f64 = 1.5;
/// Partials beyond this are divergent outright.
pub const BLOWUP: f64 = 1e12;

const MAX_FIT_POINTS: usize = 6;
const BETA_MIN: f64 = 0.02;
const BETA_MAX: f64 = 4.0;
const BETA_GRID: usize = 400;
const BISECTIONS: usize = 80;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Convergent => "CONVERGENT",
            Verdict::Divergent => "DIVERGENT",
            Verdict::Inconclusive => "INCONCLUSIVE",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceVerdict {
    pub verdict: Verdict,
    /// One partial per family member, coarsest first.
    pub partial_values: Vec<f64>,
    /// `|S_{m+1} − S_m| / |S_m − S_{m−1}|`.
    pub ratio_trail: Vec<f64>,
    /// Extrapolated limit; only meaningful when convergent.
    pub limit_estimate: f64,
    /// Disagreement between the two limit estimates.
    pub tail: f64,
    /// Refinement parameter of each member, normalized to the first.
    pub levels: Vec<f64>,
    /// Some partial is positive and the integrand was never negative.
    pub positive: bool,
}

impl ConvergenceVerdict {
    /// Convergent with a strictly positive value.
    pub fn satisfied(&self) -> bool {
        self.verdict == Verdict::Convergent && self.positive
    }
}

/// Classifies `partials` taken at refinement parameters `levels`
/// (coarsest first). `positive` is recorded as given.
pub fn classify(partials: &[f64], levels: &[f64]) -> Result<ConvergenceVerdict> {
    if partials.len() < MIN_FAMILY {
        return Err(Error::FamilyTooShort {
            needed: MIN_FAMILY,
            got: partials.len(),
        });
    }
    if levels.len() != partials.len() {
        return Err(Error::DimensionMismatch {
            expected: partials.len(),
            got: levels.len(),
        });
    }
    let h0 = levels[0];
    let levels: Vec<f64> = levels.iter().map(|h| h / h0).collect();
    let s = partials;
    let n = s.len();
    let last = s[n - 1];
    let diffs: Vec<f64> = s.windows(2).map(|w| w[1] - w[0]).collect();
    let ratios: Vec<f64> = diffs
        .windows(2)
        .map(|w| {
            let (prev, next) = (w[0].abs(), w[1].abs());
            if prev == 0.0 {
                if next == 0.0 {
                    0.0
                } else {
                    f64::INFINITY
                }
            } else {
                next / prev
            }
        })
        .collect();
    let mut out = ConvergenceVerdict {
        verdict: Verdict::Inconclusive,
        partial_values: s.to_vec(),
        ratio_trail: ratios.clone(),
        limit_estimate: last,
        tail: diffs[diffs.len() - 1].abs(),
        levels: levels.clone(),
        positive: false,
    };

    if s.iter().any(|v| !v.is_finite()) || last.abs() > BLOWUP {
        out.verdict = Verdict::Divergent;
        out.limit_estimate = f64::INFINITY;
        return Ok(out);
    }

    let recent = &ratios[ratios.len().saturating_sub(3)..];
    if recent.iter().all(|&r| r < RATIO_LIMIT) {
        let scale = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let negligible = |tail: f64, limit: f64| tail <= TAIL_REL * limit.abs() || tail <= 4.0 * f64::EPSILON * scale;
        if negligible(out.tail, last) {
            out.verdict = Verdict::Convergent;
            return Ok(out);
        }
        if let Some((limit, tail)) = extrapolate(s, &levels) {
            out.limit_estimate = limit;
            out.tail = tail;
            if negligible(tail, limit) {
                out.verdict = Verdict::Convergent;
            }
        }
        return Ok(out);
    }

    let mags: Vec<f64> = s[n - 4..].iter().map(|v| v.abs()).collect();
    let growing = mags.windows(2).all(|w| w[1] > w[0]);
    let grew = mags[3] > GROWTH_FACTOR * mags[0];
    let still_growing = ratios[ratios.len() - 2..].iter().all(|&r| r >= RATIO_LIMIT);
    if growing && grew && still_growing {
        out.verdict = Verdict::Divergent;
        out.limit_estimate = f64::INFINITY;
    }
    Ok(out)
}

/// Two limit estimates from the last `m` and `m − 1` members; returns the
/// first and their distance.
fn extrapolate(s: &[f64], h: &[f64]) -> Option<(f64, f64)> {
    let n = s.len();
    let m = n.min(MAX_FIT_POINTS);
    let aitken = {
        let r = (s[n - 1] - s[n - 2]) / (s[n - 2] - s[n - 3]);
        let q = (h[n - 1] / h[n - 2]).ln();
        (r > 0.0 && q != 0.0).then(|| r.ln() / q)
    };
    let top = fit(&s[n - m..], &h[n - m..], m - 2, aitken)?;
    let next = fit(&s[n - m + 1..], &h[n - m + 1..], m - 3, aitken)?;
    Some((top, (top - next).abs()))
}

/// Fits `L + Σ_{j<terms} c_j h^{β+j}` exactly through all points but the
/// last and picks `β` so that the last point is reproduced too. Returns `L`.
fn fit(s: &[f64], h: &[f64], terms: usize, hint: Option<f64>) -> Option<f64> {
    if terms == 0 {
        return None;
    }
    let k = s.len() - 1;
    let solve = |beta: f64| -> Option<(f64, f64)> {
        let a = DMatrix::from_fn(k, terms + 1, |r, c| {
            if c == 0 {
                1.0
            } else {
                h[r].powf(beta + (c - 1) as f64)
            }
        });
        let x = a.lu().solve(&DVector::from_column_slice(&s[..k]))?;
        let pred = x[0] + (0..terms).map(|j| x[1 + j] * h[k].powf(beta + j as f64)).sum::<f64>();
        let miss = pred - s[k];
        (miss.is_finite() && x[0].is_finite()).then_some((miss, x[0]))
    };

    let grid: Vec<f64> = (0..BETA_GRID)
        .map(|i| BETA_MIN + (BETA_MAX - BETA_MIN) * i as f64 / (BETA_GRID - 1) as f64)
        .collect();
    let values: Vec<Option<f64>> = grid.iter().map(|&b| solve(b).map(|r| r.0)).collect();
    let mut roots = Vec::new();
    for i in 0..BETA_GRID - 1 {
        let (Some(f_lo), Some(f_hi)) = (values[i], values[i + 1]) else {
            continue;
        };
        if f_lo * f_hi > 0.0 {
            continue;
        }
        let (mut lo, mut hi, mut flo) = (grid[i], grid[i + 1], f_lo);
        for _ in 0..BISECTIONS {
            let mid = 0.5 * (lo + hi);
            let Some((fm, _)) = solve(mid) else { break };
            if flo * fm <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
                flo = fm;
            }
        }
        if let Some((_, limit)) = solve(lo) {
            roots.push((lo, limit));
        }
    }
    let best = match hint {
        Some(b) => roots.iter().min_by(|x, y| (x.0 - b).abs().total_cmp(&(y.0 - b).abs())),
        None => roots.first(),
    };
    best.map(|r| r.1)
}
