//! TOML run configuration.
//!
//! ```toml
//! [scale]
//! kind = "uniform"        # uniform | quantum | explicit
//! a = 0.0
//! end = 1.0
//! n = 65
//!
//! [f.1]
//! expr = "x1^-0.5"
//! lambda = [-0.5]
//! mu = [0.5]
//!
//! [solver]
//! strategy = "picard"
//! bracket = "construct"
//! ```
//!
//! Every error names the offending key and, when it came from the file,
//! its line.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::path::PathBuf;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use toml::Spanned;

use tsdyn::criteria::{self, LowerMode, DEFAULT_SEED, MIN_FAMILY, QUANTUM_FAMILY, UNIFORM_FAMILY};
use tsdyn::model::{parse_expression, ExpressionTree, DEFAULT_DOMAIN_FLOOR};
use tsdyn::solver::{SolveConfig, Strategy};
use tsdyn::{DirichletProblem, Nonlinearity, TimeScale};

/// Default number of samples for the hypothesis checkers.
pub const DEFAULT_SAMPLES: usize = 1000;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfigError {
    pub key: String,
    pub line: Option<usize>,
    pub message: String,
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.line {
            Some(line) => write!(f, "{} (line {line}): {}", self.key, self.message),
            None => write!(f, "{}: {}", self.key, self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Command {
    Check,
    Solve,
    Bounds,
    Quadrature,
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Command::Check => "check",
            Command::Solve => "solve",
            Command::Bounds => "bounds",
            Command::Quadrature => "quadrature",
        })
    }
}

/// Command-line values that take precedence over the file.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub strategy: Option<String>,
    pub family: Option<Vec<usize>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(f64),
    Many(Vec<f64>),
}

impl OneOrMany {
    fn into_vec(self) -> Vec<f64> {
        match self {
            OneOrMany::One(v) => vec![v],
            OneOrMany::Many(v) => v,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    scale: Spanned<RawScale>,
    problem: Option<RawProblem>,
    f: Spanned<BTreeMap<String, Spanned<RawF>>>,
    bc: Option<RawBc>,
    solver: Option<RawSolver>,
    bounds: Option<RawBounds>,
    family: Option<RawFamily>,
    check: Option<RawCheck>,
    quadrature: Option<RawQuadrature>,
    output: Option<RawOutput>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScale {
    kind: Spanned<String>,
    a: Option<Spanned<f64>>,
    end: Option<Spanned<f64>>,
    n: Option<Spanned<usize>>,
    q: Option<Spanned<f64>>,
    k: Option<Spanned<usize>>,
    points: Option<Spanned<Vec<f64>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawProblem {
    mode: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawF {
    expr: Option<Spanned<String>>,
    c: Option<Spanned<f64>>,
    p: Option<Spanned<f64>>,
    gamma: Option<Spanned<OneOrMany>>,
    lambda: Option<Spanned<OneOrMany>>,
    mu: Option<Spanned<OneOrMany>>,
    floor: Option<Spanned<f64>>,
    nonsingular: Option<Spanned<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBc {
    #[serde(rename = "A")]
    a: Option<Spanned<OneOrMany>>,
    #[serde(rename = "B")]
    b: Option<Spanned<OneOrMany>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    strategy: Option<Spanned<String>>,
    tol_residual: Option<Spanned<f64>>,
    tol_step: Option<Spanned<f64>>,
    max_iters: Option<Spanned<usize>>,
    damping: Option<Spanned<f64>>,
    strict: Option<bool>,
    nest_depth: Option<usize>,
    bracket: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawBounds {
    method: Option<Spanned<String>>,
    m: Option<Spanned<OneOrMany>>,
    #[serde(rename = "M")]
    big_m: Option<Spanned<OneOrMany>>,
    lower_mode: Option<Spanned<String>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawFamily {
    sizes: Option<Spanned<Vec<usize>>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawCheck {
    samples: Option<usize>,
    seed: Option<u64>,
    necessary_point: Option<f64>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawQuadrature {
    integrand: Spanned<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    path: Option<PathBuf>,
}

/// The effective configuration after defaults and overrides. This is what
/// gets echoed into output headers.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub command: Command,
    pub version: String,
    pub scale: ScaleSpec,
    pub mode: String,
    pub f: Vec<FSpec>,
    pub bc: BcSpec,
    pub solver: SolverSpec,
    pub bounds: BoundsSpec,
    pub family: FamilySpec,
    pub check: CheckSpec,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub quadrature: Option<QuadratureSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleSpec {
    pub kind: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub a: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub end: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub q: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub points: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FSpec {
    pub body: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mu: Option<Vec<f64>>,
    pub floor: f64,
    pub nonsingular: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct BcSpec {
    #[serde(rename = "A")]
    pub a: Vec<f64>,
    #[serde(rename = "B")]
    pub b: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolverSpec {
    pub strategy: String,
    pub tol_residual: f64,
    pub tol_step: f64,
    pub max_iters: usize,
    pub damping: f64,
    pub strict: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nest_depth: Option<usize>,
    pub bracket: Bracket,
}

/// How `solve` obtains lower and upper solutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bracket {
    None,
    Construct,
    Constants,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundsMethod {
    Construct,
    Lower,
    Constants,
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundsSpec {
    pub method: BoundsMethod,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub m: Option<Vec<f64>>,
    #[serde(rename = "M", skip_serializing_if = "Option::is_none")]
    pub big_m: Option<Vec<f64>>,
    pub lower_mode: String,
    /// Whether the `[bounds]` table was present at all.
    #[serde(skip)]
    pub explicit: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct FamilySpec {
    pub sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CheckSpec {
    pub samples: usize,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub necessary_point: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureSpec {
    pub integrand: String,
}

/// A validated configuration together with the objects it describes.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: RunConfig,
    pub problem: DirichletProblem,
    pub family: Vec<Arc<TimeScale>>,
    pub solve: SolveConfig,
    pub lower_mode: LowerMode,
    /// Integrand of the `quadrature` command, a function of `t` only.
    pub integrand: Option<ExpressionTree>,
}

impl Loaded {
    /// The resolved configuration as TOML.
    pub fn resolved_toml(&self) -> String {
        toml::to_string(&self.config).expect("resolved config serializes")
    }
}

struct Ctx<'a> {
    src: &'a str,
}

impl Ctx<'_> {
    fn line(&self, span: Range<usize>) -> usize {
        let end = span.start.min(self.src.len());
        self.src.as_bytes()[..end].iter().filter(|&&b| b == b'\n').count() + 1
    }

    fn err<T>(
        &self,
        key: impl Into<String>,
        span: Option<Range<usize>>,
        message: impl Into<String>,
    ) -> Result<T, ConfigError> {
        Err(ConfigError {
            key: key.into(),
            line: span.map(|s| self.line(s)),
            message: message.into(),
        })
    }
}

/// Parses and validates a configuration for `command`.
pub fn parse(src: &str, command: Command, overrides: &Overrides) -> Result<Loaded, ConfigError> {
    let ctx = Ctx { src };
    let raw: RawConfig = match toml::from_str(src) {
        Ok(r) => r,
        Err(e) => {
            let key = e.message().split('`').nth(1).unwrap_or("config").to_string();
            return ctx.err(key, e.span(), e.message().trim().to_string());
        }
    };

    let (ts, scale_spec) = build_scale(&ctx, &raw.scale)?;

    let f_span = raw.f.span();
    let table = raw.f.into_inner();
    let n = table.len();
    if n == 0 {
        return ctx.err("f", Some(f_span), "at least one nonlinearity is required");
    }
    let mut entries: Vec<Option<(Spanned<RawF>, String)>> = (0..n).map(|_| None).collect();
    for (key, entry) in table {
        let name = format!("f.{key}");
        match key.parse::<usize>() {
            Ok(i) if (1..=n).contains(&i) => entries[i - 1] = Some((entry, name)),
            _ => return ctx.err(name, Some(entry.span()), format!("components must be numbered 1..={n}")),
        }
    }
    let mut fs = Vec::with_capacity(n);
    let mut f_specs = Vec::with_capacity(n);
    for (i, slot) in entries.into_iter().enumerate() {
        let (entry, name) = slot.expect("keys are a permutation of 1..=n");
        let (f, spec) = build_f(&ctx, &name, entry, n, i)?;
        fs.push(f);
        f_specs.push(spec);
    }

    let mode = match raw.problem.as_ref().and_then(|p| p.mode.as_ref()) {
        Some(m) => match m.get_ref().as_str() {
            "positive" | "general" => m.get_ref().clone(),
            other => {
                return ctx.err(
                    "problem.mode",
                    Some(m.span()),
                    format!("unknown mode {other:?}; expected positive or general"),
                )
            }
        },
        None if raw.bc.is_some() => "general".into(),
        None => "positive".into(),
    };
    let vector = |key: &str, v: &Option<Spanned<OneOrMany>>, default: f64| -> Result<Vec<f64>, ConfigError> {
        match v {
            None => Ok(vec![default; n]),
            Some(s) => {
                let span = s.span();
                let vals = match s.get_ref() {
                    OneOrMany::One(x) => vec![*x],
                    OneOrMany::Many(x) => x.clone(),
                };
                if vals.len() != n {
                    return ctx.err(key, Some(span), format!("expected {n} values, got {}", vals.len()));
                }
                Ok(vals)
            }
        }
    };
    let a_bc = vector("bc.A", &raw.bc.as_ref().and_then(|b| b.a.as_ref().map(respan)), 0.0)?;
    let b_bc = vector("bc.B", &raw.bc.as_ref().and_then(|b| b.b.as_ref().map(respan)), 0.0)?;

    let problem = if mode == "positive" {
        if a_bc.iter().chain(&b_bc).any(|&v| v != 0.0) {
            return ctx.err("problem.mode", None, "positive mode requires zero boundary values");
        }
        DirichletProblem::positive(ts.clone(), fs)
    } else {
        DirichletProblem::new(ts.clone(), fs, a_bc.clone(), b_bc.clone())
    }
    .or_else(|e| ctx.err("f", Some(f_span.clone()), e.to_string()))?;

    let solver = raw.solver.unwrap_or(RawSolver {
        strategy: None,
        tol_residual: None,
        tol_step: None,
        max_iters: None,
        damping: None,
        strict: None,
        nest_depth: None,
        bracket: None,
    });
    let mut solve = SolveConfig::default();
    let strategy_src = match (&overrides.strategy, &solver.strategy) {
        (Some(s), _) => Some((s.clone(), "--strategy".to_string(), None)),
        (None, Some(s)) => Some((s.get_ref().clone(), "solver.strategy".to_string(), Some(s.span()))),
        (None, None) => None,
    };
    if let Some((s, key, span)) = strategy_src {
        solve.strategy = match s.parse::<Strategy>() {
            Ok(v) => v,
            Err(e) => return ctx.err(key, span, e.to_string()),
        };
    }
    if let Some(v) = &solver.tol_residual {
        solve.tol_residual = *v.get_ref();
    }
    if let Some(v) = &solver.tol_step {
        solve.tol_step = *v.get_ref();
    }
    if let Some(v) = &solver.max_iters {
        solve.max_iters = *v.get_ref();
    }
    if let Some(v) = &solver.damping {
        solve.damping = *v.get_ref();
    }
    solve.strict = solver.strict.unwrap_or(false);
    solve.nest_depth = solver.nest_depth;
    if let Err(e) = solve.validate() {
        let span = solver
            .tol_residual
            .as_ref()
            .or(solver.tol_step.as_ref())
            .or(solver.damping.as_ref())
            .map(|s| s.span());
        return ctx.err("solver", span, e.to_string());
    }
    let bracket = match &solver.bracket {
        None => Bracket::None,
        Some(b) => match b.get_ref().as_str() {
            "none" => Bracket::None,
            "construct" => Bracket::Construct,
            "constants" => Bracket::Constants,
            other => {
                return ctx.err(
                    "solver.bracket",
                    Some(b.span()),
                    format!("unknown bracket {other:?}; expected none, construct or constants"),
                )
            }
        },
    };

    let bounds_explicit = raw.bounds.is_some();
    let rb = raw.bounds.unwrap_or(RawBounds {
        method: None,
        m: None,
        big_m: None,
        lower_mode: None,
    });
    let method = match &rb.method {
        None => BoundsMethod::Construct,
        Some(m) => match m.get_ref().as_str() {
            "construct" => BoundsMethod::Construct,
            "lower" => BoundsMethod::Lower,
            "constants" => BoundsMethod::Constants,
            other => {
                return ctx.err(
                    "bounds.method",
                    Some(m.span()),
                    format!("unknown method {other:?}; expected construct, lower or constants"),
                )
            }
        },
    };
    let m =
        rb.m.as_ref()
            .map(|_| vector("bounds.m", &rb.m.as_ref().map(respan), 0.0))
            .transpose()?;
    let big_m = rb
        .big_m
        .as_ref()
        .map(|_| vector("bounds.M", &rb.big_m.as_ref().map(respan), 0.0))
        .transpose()?;
    let needs_constants = method == BoundsMethod::Constants || bracket == Bracket::Constants;
    if needs_constants && (m.is_none() || big_m.is_none()) {
        return ctx.err("bounds.m", None, "constant bounds need both bounds.m and bounds.M");
    }
    let (lower_mode, lower_name) = match &rb.lower_mode {
        None => (LowerMode::WithMuIi, "with_mu_ii".to_string()),
        Some(s) => match s.get_ref().as_str() {
            "with_mu_ii" => (LowerMode::WithMuIi, "with_mu_ii".into()),
            "without" => (LowerMode::Without, "without".into()),
            other => {
                return ctx.err(
                    "bounds.lower_mode",
                    Some(s.span()),
                    format!("unknown mode {other:?}; expected with_mu_ii or without"),
                )
            }
        },
    };

    let family_src = match (&overrides.family, raw.family.as_ref().and_then(|f| f.sizes.as_ref())) {
        (Some(v), _) => Some((v.clone(), "--family".to_string(), None)),
        (None, Some(v)) => Some((v.get_ref().clone(), "family.sizes".to_string(), Some(v.span()))),
        (None, None) => None,
    };
    let (family, sizes) = build_family(&ctx, &scale_spec, family_src)?;

    let rc = raw.check.unwrap_or(RawCheck {
        samples: None,
        seed: None,
        necessary_point: None,
    });
    let check = CheckSpec {
        samples: rc.samples.unwrap_or(DEFAULT_SAMPLES),
        seed: overrides.seed.or(rc.seed).unwrap_or(DEFAULT_SEED),
        necessary_point: rc.necessary_point,
    };
    if check.samples == 0 {
        return ctx.err("check.samples", None, "must be positive");
    }

    let (integrand, quadrature) = match raw.quadrature {
        Some(q) => {
            let span = q.integrand.span();
            let src = q.integrand.into_inner();
            let tree = parse_expression(&src)
                .or_else(|e| ctx.err("quadrature.integrand", Some(span.clone()), e.to_string()))?;
            if tree.max_variable() > 0 {
                return ctx.err("quadrature.integrand", Some(span), "the integrand may only use t");
            }
            (Some(tree), Some(QuadratureSpec { integrand: src }))
        }
        None => (None, None),
    };
    if command == Command::Quadrature && integrand.is_none() {
        return ctx.err(
            "quadrature.integrand",
            None,
            "the quadrature command needs [quadrature] integrand",
        );
    }

    let config = RunConfig {
        command,
        version: tsdyn::VERSION.to_string(),
        scale: scale_spec,
        mode,
        f: f_specs,
        bc: BcSpec { a: a_bc, b: b_bc },
        solver: SolverSpec {
            strategy: solve.strategy.to_string(),
            tol_residual: solve.tol_residual,
            tol_step: solve.tol_step,
            max_iters: solve.max_iters,
            damping: solve.damping,
            strict: solve.strict,
            nest_depth: solve.nest_depth,
            bracket,
        },
        bounds: BoundsSpec {
            method,
            m,
            big_m,
            lower_mode: lower_name,
            explicit: bounds_explicit,
        },
        family: FamilySpec { sizes },
        check,
        quadrature,
        output: overrides.out.clone().or(raw.output.and_then(|o| o.path)),
    };
    Ok(Loaded {
        config,
        problem,
        family,
        solve,
        lower_mode,
        integrand,
    })
}

fn respan(s: &Spanned<OneOrMany>) -> Spanned<OneOrMany> {
    let inner = match s.get_ref() {
        OneOrMany::One(v) => OneOrMany::One(*v),
        OneOrMany::Many(v) => OneOrMany::Many(v.clone()),
    };
    Spanned::new(s.span(), inner)
}

fn build_scale(ctx: &Ctx, raw: &Spanned<RawScale>) -> Result<(Arc<TimeScale>, ScaleSpec), ConfigError> {
    let s = raw.get_ref();
    let kind = s.kind.get_ref().as_str();
    let need_f = |v: &Option<Spanned<f64>>, key: &str| -> Result<f64, ConfigError> {
        v.as_ref()
            .map(|x| *x.get_ref())
            .ok_or(())
            .or_else(|_| ctx.err(key, Some(raw.span()), format!("required for kind = {kind:?}")))
    };
    let need_u = |v: &Option<Spanned<usize>>, key: &str| -> Result<usize, ConfigError> {
        v.as_ref()
            .map(|x| *x.get_ref())
            .ok_or(())
            .or_else(|_| ctx.err(key, Some(raw.span()), format!("required for kind = {kind:?}")))
    };
    let mut spec = ScaleSpec {
        kind: kind.to_string(),
        a: None,
        end: None,
        n: None,
        q: None,
        k: None,
        points: None,
    };
    let built = match kind {
        "uniform" => {
            let a = s.a.as_ref().map_or(0.0, |v| *v.get_ref());
            let end = s.end.as_ref().map_or(1.0, |v| *v.get_ref());
            let n = need_u(&s.n, "scale.n")?;
            spec.a = Some(a);
            spec.end = Some(end);
            spec.n = Some(n);
            TimeScale::uniform(a, end, n)
        }
        "quantum" => {
            let q = need_f(&s.q, "scale.q")?;
            let k = need_u(&s.k, "scale.k")?;
            spec.q = Some(q);
            spec.k = Some(k);
            TimeScale::quantum(q, k)
        }
        "explicit" => {
            let points = s
                .points
                .as_ref()
                .map(|p| p.get_ref().clone())
                .ok_or(())
                .or_else(|_| ctx.err("scale.points", Some(raw.span()), "required for kind = \"explicit\""))?;
            spec.points = Some(points.clone());
            TimeScale::from_points(points)
        }
        other => {
            return ctx.err(
                "scale.kind",
                Some(s.kind.span()),
                format!("unknown kind {other:?}; expected uniform, quantum or explicit"),
            )
        }
    };
    let ts = built.or_else(|e| ctx.err("scale", Some(raw.span()), e.to_string()))?;
    Ok((Arc::new(ts), spec))
}

fn build_f(
    ctx: &Ctx,
    name: &str,
    entry: Spanned<RawF>,
    n: usize,
    i: usize,
) -> Result<(Nonlinearity, FSpec), ConfigError> {
    let span = entry.span();
    let raw = entry.into_inner();
    let key = |k: &str| format!("{name}.{k}");
    let (mut f, body) = match (&raw.expr, &raw.gamma) {
        (Some(e), None) => {
            if raw.c.is_some() || raw.p.is_some() {
                return ctx.err(key("expr"), Some(e.span()), "c and p only apply to the gamma form");
            }
            let f = Nonlinearity::from_expression(e.get_ref(), n, i)
                .or_else(|err| ctx.err(key("expr"), Some(e.span()), err.to_string()))?;
            (f, e.get_ref().clone())
        }
        (None, Some(g)) => {
            let gamma = respan(g).into_inner().into_vec();
            if gamma.len() != n {
                return ctx.err(
                    key("gamma"),
                    Some(g.span()),
                    format!("expected {n} exponents, got {}", gamma.len()),
                );
            }
            let c = raw.c.as_ref().map_or(1.0, |v| *v.get_ref());
            if !(c > 0.0) {
                return ctx.err(key("c"), raw.c.as_ref().map(|v| v.span()), "must be positive");
            }
            let p = raw.p.as_ref().map_or(0.0, |v| *v.get_ref());
            let f = Nonlinearity::emden_fowler(c, p, &gamma, i);
            (f, f_body_text(c, p, &gamma))
        }
        (Some(e), Some(_)) => return ctx.err(name, Some(e.span()), "give either expr or gamma, not both"),
        (None, None) => return ctx.err(key("expr"), Some(span), "missing expr (or gamma)"),
    };
    let lambda = raw
        .lambda
        .as_ref()
        .map(|v| (respan(v).into_inner().into_vec(), v.span()));
    let mu = raw.mu.as_ref().map(|v| (respan(v).into_inner().into_vec(), v.span()));
    match (lambda.clone(), mu.clone()) {
        (Some((l, ls)), Some((m, ms))) => {
            if l.len() != n {
                return ctx.err(
                    key("lambda"),
                    Some(ls),
                    format!("expected {n} exponents, got {}", l.len()),
                );
            }
            if m.len() != n {
                return ctx.err(key("mu"), Some(ms), format!("expected {n} exponents, got {}", m.len()));
            }
            f = f
                .with_exponents(l, m)
                .or_else(|e| ctx.err(key("lambda"), Some(ls), e.to_string()))?;
        }
        (Some((_, s)), None) => return ctx.err(key("mu"), Some(s), "lambda given without mu"),
        (None, Some((_, s))) => return ctx.err(key("lambda"), Some(s), "mu given without lambda"),
        (None, None) => {}
    }
    let floor = raw.floor.as_ref().map_or(DEFAULT_DOMAIN_FLOOR, |v| *v.get_ref());
    if let Some(v) = &raw.floor {
        f = f
            .with_domain_floor(floor)
            .or_else(|e| ctx.err(key("floor"), Some(v.span()), e.to_string()))?;
    }
    let nonsingular = raw
        .nonsingular
        .as_ref()
        .map(|v| v.get_ref().clone())
        .unwrap_or_default();
    for &j in &nonsingular {
        let s = raw.nonsingular.as_ref().map(|v| v.span());
        if j == 0 || j > n {
            return ctx.err(key("nonsingular"), s, format!("component {j} is not in 1..={n}"));
        }
        f = f
            .with_nonsingular(j - 1)
            .or_else(|e| ctx.err(key("nonsingular"), s, e.to_string()))?;
    }
    Ok((
        f,
        FSpec {
            body,
            lambda: lambda.map(|l| l.0),
            mu: mu.map(|m| m.0),
            floor,
            nonsingular,
        },
    ))
}

fn f_body_text(c: f64, p: f64, gamma: &[f64]) -> String {
    let mut s = format!("{c} * t^{p}");
    for (j, g) in gamma.iter().enumerate() {
        s.push_str(&format!(" * x{}^{g}", j + 1));
    }
    s
}

fn build_family(
    ctx: &Ctx,
    scale: &ScaleSpec,
    sizes: Option<(Vec<usize>, String, Option<Range<usize>>)>,
) -> Result<(Vec<Arc<TimeScale>>, Vec<usize>), ConfigError> {
    let quantum = scale.kind == "quantum";
    let (sizes, key, span) = match sizes {
        Some(s) => s,
        None if quantum => (QUANTUM_FAMILY.to_vec(), "family.sizes".into(), None),
        None => (UNIFORM_FAMILY.to_vec(), "family.sizes".into(), None),
    };
    if sizes.len() < MIN_FAMILY {
        return ctx.err(
            key,
            span,
            format!(
                "a refinement family needs at least {MIN_FAMILY} members, got {}",
                sizes.len()
            ),
        );
    }
    let fam = if quantum {
        criteria::quantum_family(scale.q.expect("quantum scale has q"), &sizes)
    } else {
        let (a, end) = match (&scale.a, &scale.end, &scale.points) {
            (Some(a), Some(end), _) => (*a, *end),
            (_, _, Some(p)) => (p[0], p[p.len() - 1]),
            _ => unreachable!("resolved scales always have bounds or points"),
        };
        criteria::uniform_family(a, end, &sizes)
    };
    match fam {
        Ok(f) => Ok((f, sizes)),
        Err(e) => ctx.err(key, span, e.to_string()),
    }
}
