use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tsdyn_cli::{run_str, Command as Cmd, Overrides, EXIT_CONFIG, EXIT_FAILED, EXIT_OK, EXIT_UNDECIDED};

fn example(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("examples").join(name)
}

fn tsdyn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tsdyn"))
        .args(args)
        .env_remove("TSDYN_LOG")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#')).collect()
}

#[test]
fn solve_happy_path() {
    let path = example("emden_fowler.toml");
    let o = tsdyn(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows = data_rows(&out);
    assert_eq!(rows[0], "t,x1,residual");
    // 65 grid points
    assert_eq!(rows.len(), 66);
    assert!(out.contains("# status,CONVERGED"));
    for r in &rows[1..] {
        let cells: Vec<&str> = r.split(',').collect();
        assert_eq!(cells.len(), 3);
        let x: f64 = cells[1].parse().unwrap();
        assert!(x >= 0.0);
    }
    // residual is blank where no equation is posed
    assert!(rows[65].ends_with(','));
    assert!(rows[64].ends_with(','));
    let r: f64 = rows[10].split(',').nth(2).unwrap().parse().unwrap();
    assert!(r < 1e-9);
}

#[test]
fn header_carries_version_and_config() {
    let path = example("emden_fowler.toml");
    let out = stdout(&tsdyn(&["solve", path.to_str().unwrap()]));
    let first = out.lines().next().unwrap();
    assert_eq!(first, format!("# tsdyn {}", tsdyn::VERSION));
    for key in [
        "# [scale]",
        "# n = 65",
        "# lambda = [-0.7]",
        "# strategy = \"picard\"",
        "# [family]",
    ] {
        assert!(out.contains(key), "missing {key}");
    }
}

#[test]
fn output_is_byte_identical() {
    let path = example("quantum.toml");
    let a = tsdyn(&["solve", path.to_str().unwrap()]);
    let b = tsdyn(&["solve", path.to_str().unwrap()]);
    assert_eq!(a.status.code(), Some(0), "{}", stderr(&a));
    assert_eq!(a.stdout, b.stdout);
    assert!(!a.stdout.contains(&b'\r'));
}

#[test]
fn numbers_use_seventeen_digits() {
    let path = example("emden_fowler.toml");
    let out = stdout(&tsdyn(&["solve", path.to_str().unwrap()]));
    let row = data_rows(&out)[5];
    for cell in row.split(',').filter(|c| !c.is_empty()) {
        let mantissa = cell.split('e').next().unwrap().trim_start_matches('-');
        assert_eq!(mantissa.replace('.', "").len(), 17, "{cell}");
        // round-trips exactly
        let v: f64 = cell.parse().unwrap();
        assert_eq!(format!("{v:.16e}"), cell);
    }
}

#[test]
fn divergent_criterion_exits_two() {
    let path = example("divergent.toml");
    let o = tsdyn(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    let out = stdout(&o);
    let sufficient = out
        .lines()
        .map(|l| serde_json::from_str::<serde_json::Value>(l).unwrap())
        .find(|v| v["check"] == "criterion_sufficient")
        .unwrap();
    assert_eq!(sufficient["verdict"], "DIVERGENT");

    let o = tsdyn(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stdout(&o).contains("DIVERGENT"));
    assert!(stderr(&o).contains("DIVERGENT"));
}

#[test]
fn malformed_expression_reports_position() {
    let path = example("malformed.toml");
    let o = tsdyn(&["solve", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    let err = stderr(&o);
    assert!(err.contains("f.1.expr"), "{err}");
    assert!(err.contains("line 6"), "{err}");
    assert!(err.contains("position 18"), "{err}");
}

#[test]
fn config_errors_name_key_and_line() {
    let cases = [
        (
            "[scale]\nkind = \"uniform\"\nn = 33\nwidth = 2\n[f.1]\nexpr = \"1\"\n",
            "width",
            Some(4),
        ),
        (
            "[scale]\nkind = \"uniform\"\nn = 33\n[f.1]\nexpr = \"x2\"\n",
            "f.1.expr",
            Some(5),
        ),
        (
            "[scale]\nkind = \"cubic\"\nn = 33\n[f.1]\nexpr = \"1\"\n",
            "scale.kind",
            Some(2),
        ),
        (
            "[scale]\nkind = \"uniform\"\nn = 33\n[f.1]\nexpr = \"1\"\n[solver]\nstrategy = \"bisect\"\n",
            "solver.strategy",
            Some(7),
        ),
        ("[scale]\nkind = \"uniform\"\nn = 33\n[f.2]\nexpr = \"1\"\n", "f", None),
        (
            "[scale]\nkind = \"uniform\"\nn = 33\n[f.1]\nexpr = \"1\"\nlambda = [-1, -2]\nmu = [0.5]\n",
            "f.1.lambda",
            Some(6),
        ),
    ];
    for (src, key, line) in cases {
        let e = match run_str(Cmd::Solve, src, &Overrides::default()) {
            Err(tsdyn_cli::CliError::Config(e)) => e,
            other => panic!("expected a config error for {src:?}, got {other:?}"),
        };
        assert!(e.key.starts_with(key), "{src:?}: key {}", e.key);
        if let Some(l) = line {
            assert_eq!(e.line, Some(l), "{src:?}: {e}");
        }
    }
}

#[test]
fn unknown_key_exits_four() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.toml");
    fs::write(
        &path,
        "[scale]\nkind = \"uniform\"\nn = 33\n[f.1]\nexpr = \"1\"\nexprr = \"2\"\n",
    )
    .unwrap();
    let o = tsdyn(&["check", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("exprr"));
}

#[test]
fn missing_file_exits_one() {
    let o = tsdyn(&["solve", "/nonexistent/problem.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn out_flag_writes_file() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sol.csv");
    let path = example("emden_fowler.toml");
    let o = tsdyn(&["solve", path.to_str().unwrap(), "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    assert!(o.stdout.is_empty());
    let direct = stdout(&tsdyn(&["solve", path.to_str().unwrap()]));
    let written = fs::read_to_string(&out).unwrap();
    // the resolved config records the output path, otherwise identical
    assert_eq!(data_rows(&written), data_rows(&direct));
    assert!(written.contains("sol.csv"));
}

#[test]
fn strategy_override_changes_method() {
    let path = example("emden_fowler.toml");
    let o = tsdyn(&["solve", path.to_str().unwrap(), "--strategy", "newton"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    assert!(out.contains("# strategy = \"newton"));
    let picard = stdout(&tsdyn(&["solve", path.to_str().unwrap()]));
    let x = |s: &str, k: usize| -> f64 { data_rows(s)[k].split(',').nth(1).unwrap().parse().unwrap() };
    for k in [5, 20, 33, 50] {
        assert!((x(&out, k) - x(&picard, k)).abs() < 1e-8);
    }
}

#[test]
fn family_override_is_validated() {
    let path = example("emden_fowler.toml");
    let o = tsdyn(&["check", path.to_str().unwrap(), "--family", "17,33"]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).contains("--family"));
    let o = tsdyn(&["check", path.to_str().unwrap(), "--family", "65,129,257,513,1025,2049"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
}

#[test]
fn seed_changes_samples_not_verdicts() {
    let path = example("emden_fowler.toml");
    let a = stdout(&tsdyn(&["check", path.to_str().unwrap(), "--seed", "1"]));
    let b = stdout(&tsdyn(&["check", path.to_str().unwrap(), "--seed", "1"]));
    assert_eq!(a, b);
    let c = tsdyn(&["check", path.to_str().unwrap(), "--seed", "2"]);
    assert_eq!(c.status.code(), Some(0));
}

#[test]
fn bounds_command_writes_both_bounds() {
    let path = example("bounds.toml");
    let o = tsdyn(&["bounds", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let out = stdout(&o);
    let rows = data_rows(&out);
    assert_eq!(rows[0], "t,alpha1,beta1");
    assert_eq!(rows.len(), 130);
    for r in &rows[1..] {
        let v: Vec<f64> = r.split(',').map(|c| c.parse().unwrap()).collect();
        assert!(0.0 <= v[1] && v[1] <= v[2]);
    }
    for row in [
        "# k1,",
        "# k2,",
        "# C,",
        "# lower_verified,true",
        "# upper_verified,true",
    ] {
        assert!(out.contains(row), "missing {row}");
    }
}

#[test]
fn constant_bounds_are_checked_for_order() {
    let src = "[scale]\nkind = \"uniform\"\nn = 33\n[bc]\nA = 1\nB = 2\n[f.1]\nexpr = \"1 + x1\"\n[bounds]\nmethod = \"constants\"\nm = 3\nM = 1\n";
    match run_str(Cmd::Bounds, src, &Overrides::default()) {
        Err(e) => assert_eq!(e.exit_code(), EXIT_CONFIG),
        Ok(r) => panic!("accepted m > M: {r:?}"),
    }
}

#[test]
fn quadrature_of_an_improper_integral() {
    let path = example("quadrature.toml");
    let o = tsdyn(&["quadrature", path.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let lines: Vec<serde_json::Value> = stdout(&o).lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(lines[0]["improper"], true);
    // Σ_{j=2}^{40} 2^{-j} · 2^{j/2}
    let expect: f64 = (2..=40).map(|j| 2f64.powf(-(j as f64) / 2.0)).sum();
    let got = lines[0]["value"].as_f64().unwrap();
    assert!((got - expect).abs() < 1e-12, "{got} vs {expect}");
    assert_eq!(lines[1]["verdict"], "CONVERGENT");
    let limit = lines[1]["limit_estimate"].as_f64().unwrap();
    let series = 0.5 / (1.0 - 0.5f64.sqrt());
    assert!((limit - series).abs() < 1e-6);
}

#[test]
fn quadrature_of_a_divergent_integral() {
    let src = "[scale]\nkind = \"uniform\"\nn = 65\n[f.1]\nexpr = \"1\"\n[quadrature]\nintegrand = \"t^(-2)\"\n";
    let r = run_str(Cmd::Quadrature, src, &Overrides::default()).unwrap();
    assert_eq!(r.exit_code, EXIT_FAILED);
    assert!(r.text.contains("\"verdict\":\"DIVERGENT\""));
}

#[test]
fn quadrature_needs_an_integrand() {
    let src = "[scale]\nkind = \"uniform\"\nn = 65\n[f.1]\nexpr = \"1\"\n";
    let e = run_str(Cmd::Quadrature, src, &Overrides::default()).unwrap_err();
    assert_eq!(e.exit_code(), EXIT_CONFIG);
}

#[test]
fn iteration_limit_exits_three() {
    let src = "[scale]\nkind = \"uniform\"\nn = 33\n[bc]\nA = 0\nB = 1\n[f.1]\nexpr = \"1 + 0.5 * x1\"\n[solver]\nmax_iters = 2\ntol_residual = 1e-14\ntol_step = 1e-16\n";
    let r = run_str(Cmd::Solve, src, &Overrides::default()).unwrap();
    assert_eq!(r.exit_code, EXIT_UNDECIDED, "{}", r.text);
    assert!(r.text.contains("# status,MAX_ITERS"));
}

#[test]
fn general_problem_solves_with_boundary_data() {
    // -x'' = 2, x(0) = 0, x(σ²(b)) = 1; the quadratic is exact on any grid
    let src = "[scale]\nkind = \"uniform\"\nn = 33\n[bc]\nA = 0\nB = 1\n[f.1]\nexpr = \"2\"\n";
    let r = run_str(Cmd::Solve, src, &Overrides::default()).unwrap();
    assert_eq!(r.exit_code, EXIT_OK, "{}", r.text);
    let rows = data_rows(&r.text);
    let pts: Vec<(f64, f64)> = rows[1..]
        .iter()
        .map(|l| {
            let c: Vec<&str> = l.split(',').collect();
            (c[0].parse().unwrap(), c[1].parse().unwrap())
        })
        .collect();
    let end = pts.last().unwrap().0;
    for &(t, x) in &pts {
        let exact = t * (end - t) + t / end;
        assert!((x - exact).abs() < 1e-9, "t = {t}: {x} vs {exact}");
    }
    assert!(!r.text.contains("# I1"), "envelope only applies in positive mode");
}

#[test]
fn check_runs_band_hypotheses_on_explicit_bounds() {
    let src = "[scale]\nkind = \"uniform\"\nn = 33\n[bc]\nA = 1\nB = 1\n[f.1]\nexpr = \"1 + x1\"\n[bounds]\nmethod = \"constants\"\nm = 0\nM = 5\n";
    let r = run_str(Cmd::Check, src, &Overrides::default()).unwrap();
    let lines: Vec<serde_json::Value> = r.text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    let mono = lines.iter().find(|v| v["check"] == "h3_monotone").unwrap();
    assert_eq!(mono["pass"], true);
    let lip = lines.iter().find(|v| v["check"] == "h3bar_lipschitz").unwrap();
    assert!((lip["m_estimate"].as_f64().unwrap() - 1.0).abs() < 1e-6);
    assert!(lines
        .iter()
        .any(|v| v["check"] == "htilde2" && v["skipped"].is_string()));
    assert_eq!(r.exit_code, EXIT_OK);
}
