//! Nonlinearities, the Dirichlet system and the expression language used to
//! write them down.
//!
//! Every problem is solved in the form `−x^ΔΔ(t) = f(t, x^σ(t))` with
//! `x(a) = A`, `x(σ²(b)) = B`.

mod expr;

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::timescale::TimeScale;

pub use expr::{parse_expression, Expr, ExpressionTree, ParseError};

/// Default positivity margin for singular components.
pub const DEFAULT_DOMAIN_FLOOR: f64 = 1e-12;

/// Seed used when spot-checking nonnegativity of a positive problem.
const SPOT_CHECK_SEED: u64 = 0xD1E5;
const SPOT_CHECK_SAMPLES: usize = 64;

type NativeFn = dyn Fn(f64, &[f64]) -> f64 + Send + Sync;

#[derive(Clone)]
pub enum Body {
    Expression(ExpressionTree),
    /// `c·t^p·Π_j x_j^{γ_j}`.
    PowerLaw {
        c: f64,
        p: f64,
        gamma: Vec<f64>,
    },
    Native(Arc<NativeFn>),
}

impl fmt::Debug for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::Expression(e) => write!(f, "Expression({e})"),
            Body::PowerLaw { c, p, gamma } => f
                .debug_struct("PowerLaw")
                .field("c", c)
                .field("p", p)
                .field("gamma", gamma)
                .finish(),
            Body::Native(_) => f.write_str("Native(..)"),
        }
    }
}

impl fmt::Display for Body {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Body::Expression(e) => write!(f, "{e}"),
            Body::PowerLaw { c, p, gamma } => {
                write!(f, "{c} * t^{p}")?;
                for (j, g) in gamma.iter().enumerate() {
                    write!(f, " * x{}^{g}", j + 1)?;
                }
                Ok(())
            }
            Body::Native(_) => f.write_str("<native>"),
        }
    }
}

/// One component `f_i` of the right-hand side.
///
/// Components are 0-based in this API; expressions name them `x1..xn`.
#[derive(Debug, Clone)]
pub struct Nonlinearity {
    arity: usize,
    component: usize,
    body: Body,
    lambda: Option<Vec<f64>>,
    mu: Option<Vec<f64>>,
    boundary: bool,
    domain_floor: f64,
    singular: Vec<bool>,
    nonnegative: bool,
}

impl Nonlinearity {
    fn with_body(body: Body, arity: usize, component: usize) -> Result<Self> {
        if arity == 0 {
            return Err(Error::InvalidProblem {
                reason: "arity must be at least 1".into(),
            });
        }
        if component >= arity {
            return Err(Error::IndexOutOfRange {
                index: component,
                max: arity - 1,
            });
        }
        Ok(Nonlinearity {
            arity,
            component,
            body,
            lambda: None,
            mu: None,
            boundary: false,
            domain_floor: DEFAULT_DOMAIN_FLOOR,
            singular: vec![true; arity],
            nonnegative: false,
        })
    }

    pub fn from_expression(src: &str, arity: usize, component: usize) -> Result<Self> {
        Self::from_tree(parse_expression(src)?, arity, component)
    }

    pub fn from_tree(tree: ExpressionTree, arity: usize, component: usize) -> Result<Self> {
        let used = tree.max_variable();
        if used > arity {
            return Err(Error::UnknownVariable {
                name: format!("x{used}"),
            });
        }
        // a variable that does not occur cannot make f singular
        let singular = (1..=arity).map(|j| tree.uses_variable(j)).collect();
        let mut f = Self::with_body(Body::Expression(tree), arity, component)?;
        f.singular = singular;
        Ok(f)
    }

    /// Wraps a closure. Mostly useful in tests and benchmarks.
    pub fn from_fn<F>(arity: usize, component: usize, f: F) -> Result<Self>
    where
        F: Fn(f64, &[f64]) -> f64 + Send + Sync + 'static,
    {
        Self::with_body(Body::Native(Arc::new(f)), arity, component)
    }

    /// Emden–Fowler term `c·t^p·Π_j x_j^{γ_j}` for component `component`.
    ///
    /// The exponents are declared as `λ = μ = γ`, which meets the scaling
    /// inequalities only with equality, so the result is flagged as boundary.
    /// Components with `γ_j ≥ 0` are not floored.
    ///
    /// # Panics
    /// If `c ≤ 0`, `gamma` is empty or `component ≥ gamma.len()`.
    pub fn emden_fowler(c: f64, p: f64, gamma: &[f64], component: usize) -> Self {
        assert!(c > 0.0, "coefficient must be positive");
        assert!(component < gamma.len(), "component out of range");
        let mut f = Self::with_body(
            Body::PowerLaw {
                c,
                p,
                gamma: gamma.to_vec(),
            },
            gamma.len(),
            component,
        )
        .expect("arity and component checked above");
        f.lambda = Some(gamma.to_vec());
        f.mu = Some(gamma.to_vec());
        f.boundary = true;
        f.singular = gamma.iter().map(|&g| g < 0.0).collect();
        f
    }

    /// Attaches a scaling-exponent declaration without checking its shape.
    pub fn with_exponents(mut self, lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        for v in [&lambda, &mu] {
            if v.len() != self.arity {
                return Err(Error::DimensionMismatch {
                    expected: self.arity,
                    got: v.len(),
                });
            }
            if v.iter().any(|e| !e.is_finite()) {
                return Err(Error::ShapeViolation {
                    reason: "exponents must be finite".into(),
                });
            }
        }
        self.boundary = lambda.iter().zip(&mu).any(|(l, m)| l == m);
        self.lambda = Some(lambda);
        self.mu = Some(mu);
        Ok(self)
    }

    /// Like [`with_exponents`](Self::with_exponents), but insists on the
    /// strict shape `λ_ij < μ_ij < 1`, `λ_ii < 0 < μ_ii`, `μ_ij < 0` for
    /// `j ≠ i`.
    pub fn with_strict_exponents(self, lambda: Vec<f64>, mu: Vec<f64>) -> Result<Self> {
        let f = self.with_exponents(lambda, mu)?;
        if let Some(reason) = f.shape_defect() {
            return Err(Error::ShapeViolation { reason });
        }
        Ok(f)
    }

    pub fn with_domain_floor(mut self, floor: f64) -> Result<Self> {
        if !(floor > 0.0) || !floor.is_finite() {
            return Err(Error::InvalidProblem {
                reason: format!("domain floor must be positive, got {floor}"),
            });
        }
        self.domain_floor = floor;
        Ok(self)
    }

    /// Marks component `j` (0-based) as allowed to reach zero or go negative.
    pub fn with_nonsingular(mut self, j: usize) -> Result<Self> {
        if j >= self.arity {
            return Err(Error::IndexOutOfRange {
                index: j,
                max: self.arity - 1,
            });
        }
        self.singular[j] = false;
        Ok(self)
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn component(&self) -> usize {
        self.component
    }

    pub fn body(&self) -> &Body {
        &self.body
    }

    pub fn lambda(&self) -> Option<&[f64]> {
        self.lambda.as_deref()
    }

    pub fn mu(&self) -> Option<&[f64]> {
        self.mu.as_deref()
    }

    /// `(λ_i·, μ_i·)` when declared.
    pub fn exponents(&self) -> Option<(&[f64], &[f64])> {
        Some((self.lambda.as_deref()?, self.mu.as_deref()?))
    }

    /// Some `λ_ij = μ_ij`: the declaration can only hold with equality.
    pub fn is_boundary(&self) -> bool {
        self.boundary
    }

    pub fn domain_floor(&self) -> f64 {
        self.domain_floor
    }

    pub fn is_singular(&self, j: usize) -> bool {
        self.singular.get(j).copied().unwrap_or(false)
    }

    pub fn is_nonnegative_mode(&self) -> bool {
        self.nonnegative
    }

    /// Whether the declared exponents have the strict shape.
    pub fn shape_ok(&self) -> bool {
        self.exponents().is_some() && self.shape_defect().is_none()
    }

    fn shape_defect(&self) -> Option<String> {
        let Some((lambda, mu)) = self.exponents() else {
            return Some("no exponents declared".into());
        };
        let i = self.component;
        for j in 0..self.arity {
            let (l, m) = (lambda[j], mu[j]);
            if !(l < m && m < 1.0) {
                return Some(format!("need λ < μ < 1 in column {}, got λ = {l}, μ = {m}", j + 1));
            }
            if j == i && !(l < 0.0 && m > 0.0) {
                return Some(format!("need λ_ii < 0 < μ_ii, got λ = {l}, μ = {m}"));
            }
            if j != i && !(m < 0.0) {
                return Some(format!("need μ < 0 off the diagonal in column {}, got {m}", j + 1));
            }
        }
        None
    }

    /// Some singular component of `x` lies below the domain floor.
    pub fn below_floor(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(&self.singular)
            .any(|(&v, &singular)| singular && v < self.domain_floor)
    }

    /// Evaluates `f_i(t, x)`.
    ///
    /// Singular components must satisfy `x_j ≥ domain_floor`. In positive
    /// mode a negative value is a domain violation.
    pub fn evaluate(&self, t: f64, x: &[f64]) -> Result<f64> {
        if x.len() != self.arity {
            return Err(Error::DimensionMismatch {
                expected: self.arity,
                got: x.len(),
            });
        }
        if !t.is_finite() {
            return Err(Error::domain(format!("t = {t} is not finite")));
        }
        for (j, (&v, &singular)) in x.iter().zip(&self.singular).enumerate() {
            if v.is_nan() || (singular && v < self.domain_floor) {
                return Err(Error::domain(format!(
                    "x{} = {v} below domain floor {}",
                    j + 1,
                    self.domain_floor
                )));
            }
        }
        let value = match &self.body {
            Body::Expression(e) => e.eval(t, x)?,
            Body::PowerLaw { c, p, gamma } => {
                let mut v = c * pow(t, *p)?;
                for (&xj, &g) in x.iter().zip(gamma) {
                    v *= pow(xj, g)?;
                }
                v
            }
            Body::Native(f) => f(t, x),
        };
        if !value.is_finite() {
            return Err(Error::NonFiniteResult {
                component: self.component + 1,
                t,
            });
        }
        if self.nonnegative && value < 0.0 {
            return Err(Error::domain(format!(
                "f{} = {value} is negative at t = {t}",
                self.component + 1
            )));
        }
        Ok(value)
    }
}

fn pow(base: f64, exp: f64) -> Result<f64> {
    if exp == 0.0 {
        Ok(1.0)
    } else if base > 0.0 {
        Ok(base.powf(exp))
    } else if base == 0.0 && exp > 0.0 {
        Ok(0.0)
    } else if base < 0.0 && exp.fract() == 0.0 {
        Ok(base.powf(exp))
    } else {
        Err(Error::domain(format!("{base} raised to power {exp}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ProblemMode {
    /// Arbitrary boundary data, solutions may change sign.
    General,
    /// Zero boundary data and `f ≥ 0`; positive solutions are sought.
    Positive,
}

/// The only supported form, `−x^ΔΔ = f(t, x^σ)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SignConvention {
    Canonical,
}

impl fmt::Display for SignConvention {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("-x^DD = f(t, x^sigma)")
    }
}

#[derive(Debug, Clone)]
pub struct DirichletProblem {
    scale: Arc<TimeScale>,
    f: Vec<Nonlinearity>,
    a_bc: Vec<f64>,
    b_bc: Vec<f64>,
    mode: ProblemMode,
}

impl DirichletProblem {
    /// `−x^ΔΔ = f(t, x^σ)`, `x(a) = A`, `x(σ²(b)) = B`.
    pub fn new(scale: Arc<TimeScale>, f: Vec<Nonlinearity>, a_bc: Vec<f64>, b_bc: Vec<f64>) -> Result<Self> {
        let n = f.len();
        if n == 0 {
            return Err(Error::InvalidProblem {
                reason: "no nonlinearities".into(),
            });
        }
        for (len, what) in [(a_bc.len(), "A"), (b_bc.len(), "B")] {
            if len != n {
                return Err(Error::InvalidProblem {
                    reason: format!("{what} has {len} entries for {n} components"),
                });
            }
        }
        if let Some(v) = a_bc.iter().chain(&b_bc).find(|v| !v.is_finite()) {
            return Err(Error::InvalidProblem {
                reason: format!("boundary value {v} is not finite"),
            });
        }
        for (i, fi) in f.iter().enumerate() {
            if fi.arity != n {
                return Err(Error::InvalidProblem {
                    reason: format!("f{} has arity {}, expected {n}", i + 1, fi.arity),
                });
            }
            if fi.component != i {
                return Err(Error::InvalidProblem {
                    reason: format!("entry {} is declared as component {}", i + 1, fi.component + 1),
                });
            }
        }
        Ok(DirichletProblem {
            scale,
            f,
            a_bc,
            b_bc,
            mode: ProblemMode::General,
        })
    }

    /// Zero boundary data and nonnegative `f`. Nonnegativity is spot-checked
    /// by sampling and enforced on every later evaluation.
    pub fn positive(scale: Arc<TimeScale>, f: Vec<Nonlinearity>) -> Result<Self> {
        let n = f.len();
        let mut p = Self::new(scale, f, vec![0.0; n], vec![0.0; n])?;
        p.mode = ProblemMode::Positive;
        for fi in &mut p.f {
            fi.nonnegative = true;
        }
        p.spot_check_nonnegative()?;
        Ok(p)
    }

    fn spot_check_nonnegative(&self) -> Result<()> {
        let ts = &self.scale;
        let interior: Vec<usize> = (1..ts.last_index() - 1).collect();
        if interior.is_empty() {
            return Ok(());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(SPOT_CHECK_SEED);
        let n = self.dim();
        let floor = self.f.iter().map(|fi| fi.domain_floor).fold(0.0, f64::max);
        let lo = (floor * 10.0).log10().min(2.0);
        let mut x = vec![0.0; n];
        for _ in 0..SPOT_CHECK_SAMPLES {
            let k = interior[rng.random_range(0..interior.len())];
            for xj in x.iter_mut() {
                *xj = 10f64.powf(rng.random_range(lo..3.0));
            }
            for fi in &self.f {
                match fi.evaluate(ts.p(k), &x) {
                    Err(Error::DomainViolation { reason }) if reason.contains("negative") => {
                        return Err(Error::InvalidProblem {
                            reason: format!("positive problem with {reason}"),
                        })
                    }
                    _ => {}
                }
            }
        }
        Ok(())
    }

    pub fn scale(&self) -> &Arc<TimeScale> {
        &self.scale
    }

    pub fn nonlinearities(&self) -> &[Nonlinearity] {
        &self.f
    }

    pub fn nonlinearity(&self, i: usize) -> &Nonlinearity {
        &self.f[i]
    }

    /// Number of components `n`.
    pub fn dim(&self) -> usize {
        self.f.len()
    }

    pub fn a_bc(&self) -> &[f64] {
        &self.a_bc
    }

    pub fn b_bc(&self) -> &[f64] {
        &self.b_bc
    }

    pub fn mode(&self) -> ProblemMode {
        self.mode
    }

    pub fn sign_convention(&self) -> SignConvention {
        SignConvention::Canonical
    }

    /// The same system on another scale, e.g. a refinement family member.
    pub fn on_scale(&self, scale: Arc<TimeScale>) -> Self {
        DirichletProblem { scale, ..self.clone() }
    }

    /// The same nonlinearities on a sub-window with its own boundary data.
    pub(crate) fn windowed(&self, scale: Arc<TimeScale>, a_bc: Vec<f64>, b_bc: Vec<f64>) -> Result<Self> {
        let mut p = Self::new(scale, self.f.clone(), a_bc, b_bc)?;
        p.mode = self.mode;
        Ok(p)
    }

    /// `(f_1(t, x), …, f_n(t, x))`.
    pub fn eval_all(&self, t: f64, x: &[f64]) -> Result<Vec<f64>> {
        self.f.iter().map(|fi| fi.evaluate(t, x)).collect()
    }
}
