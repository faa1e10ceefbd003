use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use log::info;
use serde_json::{json, Value};

use tsdyn::criteria::{
    bounds_from_constants, check_h3_monotone, check_h3bar_lipschitz, check_htilde2, classify, compute_envelope,
    construct_bounds, construct_lower, criterion_necessary, criterion_sufficient, BoundsPair, ConvergenceVerdict,
    Verdict,
};
use tsdyn::solver::{residual, solve, Status};
use tsdyn::{ProblemMode, TimeScale};

use crate::config::{self, BoundsMethod, Bracket, Command, ConfigError, Loaded, Overrides};
use crate::output;

pub const EXIT_OK: u8 = 0;
pub const EXIT_IO: u8 = 1;
/// A criterion failed, or the solve diverged / hit a domain error.
pub const EXIT_FAILED: u8 = 2;
/// An inconclusive verdict, or the iteration limit.
pub const EXIT_UNDECIDED: u8 = 3;
pub const EXIT_CONFIG: u8 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(#[from] ConfigError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Library(#[from] tsdyn::Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Io { .. } => EXIT_IO,
            CliError::Library(_) => EXIT_FAILED,
        }
    }
}

/// Result of one command: the text to write and the exit code.
#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub text: String,
    pub exit_code: u8,
    /// Set when the command stopped before producing data.
    pub message: Option<String>,
}

/// Reads `path`, runs `command` and writes the result to the configured
/// output (stdout by default). Returns the exit code.
pub fn run(command: Command, path: &Path, overrides: &Overrides) -> Result<u8, CliError> {
    let src = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let loaded = config::parse(&src, command, overrides)?;
    let report = execute(&loaded)?;
    if let Some(msg) = &report.message {
        eprintln!("tsdyn: {msg}");
    }
    match &loaded.config.output {
        Some(out) => fs::write(out, &report.text).map_err(|source| CliError::Io {
            path: out.clone(),
            source,
        })?,
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(report.text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: PathBuf::from("<stdout>"),
                    source,
                })?;
        }
    }
    Ok(report.exit_code)
}

/// Parses `src` and runs `command` without touching the file system.
pub fn run_str(command: Command, src: &str, overrides: &Overrides) -> Result<Report, CliError> {
    execute(&config::parse(src, command, overrides)?)
}

pub fn execute(loaded: &Loaded) -> Result<Report, CliError> {
    info!(
        "running {} on {} points",
        loaded.config.command,
        loaded.problem.scale().len()
    );
    match loaded.config.command {
        Command::Solve => solve_cmd(loaded),
        Command::Bounds => bounds_cmd(loaded),
        Command::Check => check_cmd(loaded),
        Command::Quadrature => quadrature_cmd(loaded),
    }
}

fn verdict_code(v: Verdict) -> u8 {
    match v {
        Verdict::Convergent => EXIT_OK,
        Verdict::Divergent => EXIT_FAILED,
        Verdict::Inconclusive => EXIT_UNDECIDED,
    }
}

fn status_code(s: Status) -> u8 {
    match s {
        Status::Converged => EXIT_OK,
        Status::Diverged | Status::DomainError => EXIT_FAILED,
        Status::MaxIters => EXIT_UNDECIDED,
    }
}

fn verdict_json(v: &ConvergenceVerdict) -> Value {
    json!({
        "verdict": v.verdict.to_string(),
        "limit_estimate": v.limit_estimate,
        "tail": v.tail,
        "positive": v.positive,
        "partial_values": v.partial_values,
        "ratio_trail": v.ratio_trail,
    })
}

/// Runs the criterion a construction depends on; `Err` carries the exit
/// code and a message when it is not convergent.
fn gate(verdicts: &[ConvergenceVerdict], name: &str) -> Result<(), (u8, String)> {
    for (i, v) in verdicts.iter().enumerate() {
        if v.verdict != Verdict::Convergent {
            return Err((
                verdict_code(v.verdict),
                format!("{name} criterion for f.{} is {}", i + 1, v.verdict),
            ));
        }
    }
    Ok(())
}

/// Header plus a message row, for commands that stopped before any data.
fn stopped(loaded: &Loaded, code: u8, message: String) -> Report {
    let mut text = output::header(&loaded.resolved_toml());
    output::summary_text(&mut text, "message", &message);
    Report {
        text,
        exit_code: code,
        message: Some(message),
    }
}

fn build_bounds(loaded: &Loaded, method: BoundsMethod) -> Result<Result<BoundsPair, (u8, String)>, CliError> {
    let p = &loaded.problem;
    let needs_positive = method != BoundsMethod::Constants;
    if needs_positive && p.mode() != ProblemMode::Positive {
        return Err(ConfigError {
            key: "problem.mode".into(),
            line: None,
            message: "constructed bounds need a positive-mode problem".into(),
        }
        .into());
    }
    Ok(match method {
        BoundsMethod::Construct => match gate(&criterion_sufficient(p, &loaded.family)?, "sufficient") {
            Ok(()) => Ok(construct_bounds(p, &loaded.family)?),
            Err(e) => Err(e),
        },
        BoundsMethod::Lower => {
            let point = loaded.config.check.necessary_point;
            match gate(&criterion_necessary(p, &loaded.family, point)?, "necessary") {
                Ok(()) => Ok(construct_lower(p, &loaded.family, loaded.lower_mode)?),
                Err(e) => Err(e),
            }
        }
        BoundsMethod::Constants => {
            let b = &loaded.config.bounds;
            let (m, big_m) = (
                b.m.as_deref().unwrap_or_default(),
                b.big_m.as_deref().unwrap_or_default(),
            );
            match bounds_from_constants(p, m, big_m) {
                Ok(pair) => Ok(pair),
                Err(e @ tsdyn::Error::BoundOrderViolation { .. }) => {
                    return Err(ConfigError {
                        key: "bounds.m".into(),
                        line: None,
                        message: e.to_string(),
                    }
                    .into())
                }
                Err(e) => return Err(e.into()),
            }
        }
    })
}

fn solve_cmd(loaded: &Loaded) -> Result<Report, CliError> {
    let p = &loaded.problem;
    let ts = p.scale();
    let n = p.dim();
    let bracket = match loaded.config.solver.bracket {
        Bracket::None => None,
        Bracket::Construct => match build_bounds(loaded, BoundsMethod::Construct)? {
            Ok(b) => Some(b),
            Err((code, msg)) => return Ok(stopped(loaded, code, msg)),
        },
        Bracket::Constants => match build_bounds(loaded, BoundsMethod::Constants)? {
            Ok(b) => Some(b),
            Err((code, msg)) => return Ok(stopped(loaded, code, msg)),
        },
    };
    let (alpha, beta) = match &bracket {
        Some(b) => (Some(&b.alpha), b.beta.as_ref()),
        None => (None, None),
    };
    let mut rep = solve(p, alpha, beta, &loaded.solve)?;
    let mut code = status_code(rep.status);
    let mut envelope_error = None;
    if rep.status == Status::Converged && p.mode() == ProblemMode::Positive {
        match compute_envelope(p, &rep.solution) {
            Ok(env) => rep.envelope = Some(env),
            Err(e) => {
                envelope_error = Some(e.to_string());
                code = EXIT_FAILED;
            }
        }
    }
    let res = residual(p, &rep.solution).ok();

    let mut out = output::header(&loaded.resolved_toml());
    let mut head = vec!["t".to_string()];
    head.extend((1..=n).map(|i| format!("x{i}")));
    head.push("residual".into());
    out.push_str(&head.join(","));
    out.push('\n');
    for (k, &t) in ts.points().iter().enumerate() {
        let x = rep.solution.value(k)?;
        let r = res
            .as_ref()
            .and_then(|r| r.value(k).ok())
            .map(|v| v.iter().fold(0.0f64, |m, x| m.max(x.abs())));
        output::row(
            &mut out,
            std::iter::once(Some(t))
                .chain(x.iter().map(|&v| Some(v)))
                .chain(std::iter::once(r)),
        );
    }
    output::summary_text(&mut out, "status", &rep.status.to_string());
    output::summary_text(&mut out, "strategy", &rep.strategy.to_string());
    output::summary_text(&mut out, "convention", &rep.convention.to_string());
    output::summary_text(&mut out, "iterations", &rep.iterations.to_string());
    output::summary(&mut out, "final_residual", &[rep.final_residual]);
    output::summary(&mut out, "damping", &[rep.damping]);
    output::summary_text(&mut out, "bracket_respected", &rep.bracket_respected.to_string());
    if let Some(m) = rep.monotone {
        output::summary_text(&mut out, "monotone", &m.to_string());
    }
    if !rep.nest_trail.is_empty() {
        output::summary(&mut out, "nest_trail", &rep.nest_trail);
    }
    if let Some(env) = &rep.envelope {
        output::summary(&mut out, "I1", &env.iter().map(|e| e.0).collect::<Vec<_>>());
        output::summary(&mut out, "I2", &env.iter().map(|e| e.1).collect::<Vec<_>>());
    }
    if let Some(e) = &envelope_error {
        output::summary_text(&mut out, "envelope", e);
    }
    if let Some(b) = &bracket {
        let mut c = b.constants.clone();
        // the envelope rows above already carry I1, I2 for the solution
        c.i1.clear();
        c.i2.clear();
        output::constants(&mut out, &c);
        output::summary_text(&mut out, "lower_verified", &b.lower_verified.to_string());
        if let Some(u) = b.upper_verified {
            output::summary_text(&mut out, "upper_verified", &u.to_string());
        }
    }
    if let Some(m) = &rep.message {
        output::summary_text(&mut out, "message", m);
    }
    Ok(Report {
        text: out,
        exit_code: code,
        message: rep.message.clone().filter(|_| code != EXIT_OK),
    })
}

fn bounds_cmd(loaded: &Loaded) -> Result<Report, CliError> {
    let p = &loaded.problem;
    let n = p.dim();
    let pair = match build_bounds(loaded, loaded.config.bounds.method)? {
        Ok(b) => b,
        Err((code, msg)) => return Ok(stopped(loaded, code, msg)),
    };
    let mut out = output::header(&loaded.resolved_toml());
    let mut head = vec!["t".to_string()];
    head.extend((1..=n).map(|i| format!("alpha{i}")));
    if pair.beta.is_some() {
        head.extend((1..=n).map(|i| format!("beta{i}")));
    }
    out.push_str(&head.join(","));
    out.push('\n');
    for (k, &t) in p.scale().points().iter().enumerate() {
        let mut cells = vec![Some(t)];
        cells.extend(pair.alpha.value(k)?.iter().map(|&v| Some(v)));
        if let Some(b) = &pair.beta {
            cells.extend(b.value(k)?.iter().map(|&v| Some(v)));
        }
        output::row(&mut out, cells);
    }
    output::constants(&mut out, &pair.constants);
    output::summary_text(&mut out, "lower_verified", &pair.lower_verified.to_string());
    if let Some(u) = pair.upper_verified {
        output::summary_text(&mut out, "upper_verified", &u.to_string());
    }
    if let Some(d) = pair.lower_display_holds {
        output::summary_text(&mut out, "lower_display_holds", &d.to_string());
    }
    let verified = pair.lower_verified && pair.upper_verified.unwrap_or(true);
    Ok(Report {
        text: out,
        exit_code: if verified { EXIT_OK } else { EXIT_FAILED },
        message: (!verified).then(|| "constructed bounds did not verify".to_string()),
    })
}

fn worst(code: &mut u8, new: u8) {
    // failures dominate undecided results, which dominate success
    let rank = |c: u8| match c {
        EXIT_FAILED => 2,
        EXIT_UNDECIDED => 1,
        _ => 0,
    };
    if rank(new) > rank(*code) {
        *code = new;
    }
}

fn check_cmd(loaded: &Loaded) -> Result<Report, CliError> {
    let p = &loaded.problem;
    let cfg = &loaded.config.check;
    let mut lines: Vec<Value> = Vec::new();
    let mut code = EXIT_OK;

    for (i, f) in p.nonlinearities().iter().enumerate() {
        let component = i + 1;
        if f.exponents().is_none() {
            lines.push(json!({"check": "htilde2", "component": component, "skipped": "no exponents declared"}));
            continue;
        }
        let r = check_htilde2(f, p.scale(), cfg.samples, cfg.seed)?;
        if !r.pass {
            worst(&mut code, EXIT_FAILED);
        }
        let witness = r.witness.as_ref().map(|w| {
            json!({"t": w.t, "x": w.x, "column": w.column + 1, "c": w.c, "lower": w.lower, "value": w.value, "upper": w.upper})
        });
        lines.push(json!({
            "check": "htilde2",
            "component": component,
            "pass": r.pass,
            "shape_ok": r.shape_ok,
            "boundary": f.is_boundary(),
            "worst_violation": r.worst_violation,
            "samples": r.samples,
            "witness": witness,
        }));
    }

    if p.mode() == ProblemMode::Positive {
        for (name, verdicts) in [
            ("criterion_sufficient", criterion_sufficient(p, &loaded.family)),
            (
                "criterion_necessary",
                criterion_necessary(p, &loaded.family, cfg.necessary_point),
            ),
        ] {
            match verdicts {
                Ok(vs) => {
                    for (i, v) in vs.iter().enumerate() {
                        worst(&mut code, verdict_code(v.verdict));
                        let mut line = verdict_json(v);
                        line["check"] = json!(name);
                        line["component"] = json!(i + 1);
                        lines.push(line);
                    }
                }
                Err(e) => {
                    worst(&mut code, EXIT_FAILED);
                    lines.push(json!({"check": name, "error": e.to_string()}));
                }
            }
        }
    }

    if loaded.config.bounds.explicit {
        match build_bounds(loaded, loaded.config.bounds.method)? {
            Ok(pair) => {
                if let Some(beta) = &pair.beta {
                    for (i, f) in p.nonlinearities().iter().enumerate() {
                        let mono = check_h3_monotone(f, &pair.alpha, beta, cfg.samples, cfg.seed)?;
                        if !mono.pass {
                            worst(&mut code, EXIT_FAILED);
                        }
                        let witness = mono
                            .witness
                            .as_ref()
                            .map(|w| json!({"index": w.index, "x": w.x, "y": w.y, "fx": w.fx, "fy": w.fy}));
                        lines.push(json!({
                            "check": "h3_monotone",
                            "component": i + 1,
                            "pass": mono.pass,
                            "worst_violation": mono.worst_violation,
                            "skipped": mono.skipped,
                            "witness": witness,
                        }));
                        let lip = check_h3bar_lipschitz(f, &pair.alpha, beta, cfg.samples, cfg.seed)?;
                        if !lip.pass {
                            worst(&mut code, EXIT_FAILED);
                        }
                        lines.push(json!({
                            "check": "h3bar_lipschitz",
                            "component": i + 1,
                            "pass": lip.pass,
                            "m_estimate": lip.m_estimate,
                            "skipped": lip.skipped,
                        }));
                    }
                }
            }
            Err((c, msg)) => {
                worst(&mut code, c);
                lines.push(json!({"check": "bounds", "error": msg}));
            }
        }
    }

    let mut text = String::new();
    for l in &lines {
        text.push_str(&serde_json::to_string(l).expect("JSON values serialize"));
        text.push('\n');
    }
    Ok(Report {
        text,
        exit_code: code,
        message: None,
    })
}

/// `Σ μ_k g(p_k)` over `k` in `range`.
fn quad_sum(ts: &TimeScale, g: &tsdyn::ExpressionTree, range: std::ops::Range<usize>) -> tsdyn::Result<f64> {
    let pts = ts.points();
    let mut sum = 0.0;
    for k in range {
        let v = g.eval(pts[k], &[])?;
        if !v.is_finite() {
            return Err(tsdyn::Error::NonFiniteResult {
                component: 0,
                t: pts[k],
            });
        }
        sum += (pts[k + 1] - pts[k]) * v;
    }
    Ok(sum)
}

fn quadrature_cmd(loaded: &Loaded) -> Result<Report, CliError> {
    let g = loaded.integrand.as_ref().expect("validated by the config");
    let ts = loaded.problem.scale();
    let last = ts.last_index();
    // ∫ over [a, σ(b)); drop the cell at a when g is undefined there
    let (value, improper) = match quad_sum(ts, g, 0..last - 1) {
        Ok(v) => (v, false),
        Err(_) => (quad_sum(ts, g, 1..last - 1)?, true),
    };
    let mut members = loaded.family.clone();
    members.sort_by(|x, y| y.min_graininess().total_cmp(&x.min_graininess()));
    let partials = members
        .iter()
        .map(|m| quad_sum(m, g, 1..m.last_index() - 1))
        .collect::<tsdyn::Result<Vec<_>>>()?;
    let levels: Vec<f64> = members.iter().map(|m| m.min_graininess()).collect();
    let v = classify(&partials, &levels)?;
    let mut family = verdict_json(&v);
    family["quadrature"] = json!("family");
    family["levels"] = json!(levels);
    let scale = json!({"quadrature": "scale", "value": value, "improper": improper, "points": ts.len()});
    let text = format!(
        "{}\n{}\n",
        serde_json::to_string(&scale).expect("serializes"),
        serde_json::to_string(&family).expect("serializes")
    );
    Ok(Report {
        text,
        exit_code: verdict_code(v.verdict),
        message: None,
    })
}
