use std::sync::Arc;

use proptest::prelude::*;

use tsdyn::calculus::{delta_derivative, delta_integral, sigma_shift};
use tsdyn::criteria::{compute_envelope, construct_bounds, criterion_sufficient, default_family, Verdict};
use tsdyn::green::{green_apply, green_value};
use tsdyn::model::{parse_expression, Expr, ExpressionTree};
use tsdyn::solver::{apply_n, solve, SolveConfig, Status, Strategy as Method};
use tsdyn::{DirichletProblem, GridFunction, Nonlinearity, TimeScale};

fn scale() -> impl Strategy<Value = Arc<TimeScale>> {
    prop_oneof![
        (-5.0..0.0f64, 0.5..5.0f64, 4usize..80).prop_map(|(a, b, n)| TimeScale::uniform(a, b, n).unwrap()),
        (1.1..4.0f64, 3usize..14).prop_map(|(q, k)| TimeScale::quantum(q, k).unwrap()),
        prop::collection::vec(1e-3..0.5f64, 3..50).prop_map(|gaps| {
            let mut pts = vec![-1.0];
            for g in gaps {
                pts.push(pts.last().unwrap() + g);
            }
            TimeScale::from_points(pts).unwrap()
        }),
    ]
    .prop_map(Arc::new)
}

fn scale_and_values(count: usize) -> impl Strategy<Value = (Arc<TimeScale>, Vec<Vec<f64>>)> {
    scale().prop_flat_map(move |ts| {
        let n = ts.points().len();
        (
            Just(ts),
            prop::collection::vec(prop::collection::vec(-10.0..10.0f64, n), count),
        )
    })
}

fn function(ts: &Arc<TimeScale>, v: &[f64]) -> GridFunction {
    GridFunction::new(ts.clone(), 0, 1, v.to_vec()).unwrap()
}

fn at(u: &GridFunction, k: usize) -> f64 {
    u.value(k).unwrap()[0]
}

proptest! {
    #[test]
    fn fundamental_theorem((ts, vals) in scale_and_values(1), cut in 0.0..1.0f64) {
        let u = function(&ts, &vals[0]);
        let du = delta_derivative(&u).unwrap();
        let n = ts.last_index();
        let lo = ((n - 1) as f64 * cut) as usize;
        for hi in lo..=n {
            let got = delta_integral(&du, lo, hi).unwrap()[0];
            let want = vals[0][hi] - vals[0][lo];
            let allowed = 1e-12 * ((hi - lo) as f64).max(1.0) * u.max_abs().max(1.0);
            prop_assert!((got - want).abs() <= allowed, "{got} vs {want}");
        }
    }

    #[test]
    fn product_rule((ts, vals) in scale_and_values(2)) {
        let (u, v) = (function(&ts, &vals[0]), function(&ts, &vals[1]));
        let d = delta_derivative(&u.mul(&v).unwrap()).unwrap();
        let (du, dv) = (delta_derivative(&u).unwrap(), delta_derivative(&v).unwrap());
        let vs = sigma_shift(&v).unwrap();
        for k in 0..ts.last_index() {
            let (a, b) = (at(&du, k) * at(&vs, k), at(&u, k) * at(&dv, k));
            let size = a.abs().max(b.abs()).max(1.0);
            prop_assert!((at(&d, k) - a - b).abs() <= 1e-12 * size);
        }
    }

    #[test]
    fn integral_is_linear_and_additive((ts, vals) in scale_and_values(2), c in -3.0..3.0f64, cut in 0.0..1.0f64) {
        let (u, v) = (function(&ts, &vals[0]), function(&ts, &vals[1]));
        let n = ts.last_index();
        let mid = (n as f64 * cut) as usize;
        let whole = delta_integral(&u, 0, n).unwrap()[0];
        let split = delta_integral(&u, 0, mid).unwrap()[0] + delta_integral(&u, mid, n).unwrap()[0];
        let size = ts.span() * 10.0;
        prop_assert!((whole - split).abs() <= 1e-12 * size);
        let combo = u.scaled(c).add(&v).unwrap();
        let lhs = delta_integral(&combo, 0, n).unwrap()[0];
        let rhs = c * whole + delta_integral(&v, 0, n).unwrap()[0];
        prop_assert!((lhs - rhs).abs() <= 1e-12 * size * 4.0);
    }

    #[test]
    fn green_is_linear((ts, vals) in scale_and_values(2), c in -3.0..3.0f64) {
        let (h1, h2) = (function(&ts, &vals[0]), function(&ts, &vals[1]));
        let lhs = green_apply(&ts, &h1.scaled(c).add(&h2).unwrap()).unwrap();
        let rhs = green_apply(&ts, &h1).unwrap().scaled(c).add(&green_apply(&ts, &h2).unwrap()).unwrap();
        let size = lhs.max_abs().max(rhs.max_abs()).max(1e-300);
        prop_assert!(lhs.max_diff(&rhs).unwrap() <= 1e-12 * size.max(1.0));
    }

    #[test]
    fn green_solves_the_equation((ts, vals) in scale_and_values(1)) {
        let h = function(&ts, &vals[0]);
        let u = green_apply(&ts, &h).unwrap();
        let d2 = u.delta_second().unwrap();
        let hmax = vals[0][..ts.last_index() - 1].iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        // conditioning grows with the graininess ratio
        let mus: Vec<f64> = ts.points().windows(2).map(|w| w[1] - w[0]).collect();
        let spread = mus.iter().cloned().fold(0.0, f64::max) / mus.iter().cloned().fold(f64::INFINITY, f64::min);
        for k in 0..=ts.last_index() - 2 {
            prop_assert!((at(&d2, k) + vals[0][k]).abs() <= 1e-10 * hmax * spread.max(1.0) * ts.span().max(1.0));
        }
    }

    #[test]
    fn green_is_positive_and_enveloped(ts in scale()) {
        let n = ts.last_index();
        let (a, end) = (ts.a(), ts.sigma2_b());
        for s in 0..=n - 2 {
            let ss = ts.points()[s + 1];
            for t in 0..=n {
                let g = green_value(&ts, t, s).unwrap();
                let p = ts.points()[t];
                let e = (p - a) * (end - p) / (end - a);
                let w = (ss - a) * (end - ss) / (end - a);
                let slack = 1e-12 * (end - a);
                prop_assert!(g <= e + slack && g <= w + slack);
                if t == 0 || t == n {
                    prop_assert_eq!(g, 0.0);
                } else if ss < end {
                    prop_assert!(g > 0.0);
                }
            }
        }
    }

    #[test]
    fn power_law_scaling(gamma in -2.0..2.0f64, c in 1e-3..1e3f64, x in 0.01..100.0f64, t in 0.05..0.95f64) {
        let f = Nonlinearity::emden_fowler(1.5, 0.5, &[gamma], 0);
        let base = f.evaluate(t, &[x]).unwrap();
        let scaled = f.evaluate(t, &[c * x]).unwrap();
        let want = c.powf(gamma) * base;
        prop_assert!((scaled - want).abs() <= 1e-14 * want.abs() * 4.0);
    }

    #[test]
    fn printed_trees_reparse(tree in expr_tree()) {
        let tree = ExpressionTree::new(tree);
        let printed = tree.to_string();
        let back = parse_expression(&printed).unwrap();
        prop_assert_eq!(back.to_string(), printed.clone());
        let (a, b) = (tree.eval(0.3, &[1.7, 0.4]), back.eval(0.3, &[1.7, 0.4]));
        match (a, b) {
            (Ok(x), Ok(y)) => prop_assert!(x.to_bits() == y.to_bits() || (x.is_nan() && y.is_nan()), "{printed}: {x} vs {y}"),
            (Err(_), Err(_)) => {}
            (x, y) => prop_assert!(false, "{printed}: {x:?} vs {y:?}"),
        }
    }

    #[test]
    fn monotone_operator(lo in 0.0..0.2f64, hi in 0.0..0.2f64) {
        let ts = Arc::new(TimeScale::uniform(0.0, 1.0, 17).unwrap());
        let f = Nonlinearity::from_expression("1 + x1", 1, 0).unwrap().with_nonsingular(0).unwrap();
        let p = DirichletProblem::positive(ts.clone(), vec![f]).unwrap();
        let alpha = GridFunction::zeros(&ts, 1);
        let beta = GridFunction::scalar_from_fn(&ts, |t| t * (1.0 - t)).unwrap();
        let (small, large) = (lo.min(hi), lo.max(hi));
        let u = beta.scaled(small * 4.0);
        let v = beta.scaled(large * 4.0);
        let nu = apply_n(&p, &alpha, &beta, &u).unwrap();
        let nv = apply_n(&p, &alpha, &beta, &v).unwrap();
        for k in 0..ts.points().len() {
            prop_assert!(at(&nu, k) <= at(&nv, k) + 1e-15);
            prop_assert!(at(&alpha, k) - 1e-15 <= at(&nu, k) && at(&nu, k) <= at(&beta, k) + 1e-15);
        }
    }
}

fn expr_tree() -> impl Strategy<Value = Expr> {
    let leaf = prop_oneof![
        (0u32..1000, 0i32..4).prop_map(|(m, e)| Expr::Const(m as f64 / 10f64.powi(e))),
        Just(Expr::T),
        (1usize..=2).prop_map(Expr::X),
    ];
    leaf.prop_recursive(5, 48, 2, |inner| {
        prop_oneof![
            inner.clone().prop_map(|a| Expr::Neg(Box::new(a))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Add(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Sub(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Mul(Box::new(a), Box::new(b))),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::Div(Box::new(a), Box::new(b))),
            (inner.clone(), inner).prop_map(|(a, b)| Expr::Pow(Box::new(a), Box::new(b))),
        ]
    })
}

const CANONICAL: [&str; 50] = [
    "1",
    "t",
    "x1",
    "x2",
    "0.5",
    "-x1",
    "--x1",
    "x1 + x2",
    "x1 - x2",
    "x1 * x2",
    "x1 / x2",
    "x1^2",
    "x1^-0.5",
    "x1^-0.5 * t",
    "t * (1 - t)",
    "(t + 1) * x1",
    "x1 - (x2 - 1)",
    "x1 - x2 - 1",
    "x1 / (x2 * t)",
    "x1 / x2 / t",
    "2^3^2",
    "(2^3)^2",
    "-x1^2",
    "(-x1)^2",
    "x1^-x2",
    "x1^(1 / 3)",
    "1 + 2 * 3",
    "(1 + 2) * 3",
    "t^0.5 * x1^-0.25",
    "3 * t^-1.5 * x1^0.5",
    "x1 * x2 * t",
    "x1 * (x2 * t)",
    "x1 + x2 + t",
    "x1 + (x2 + t)",
    "-(x1 + x2)",
    "-(x1 * x2)",
    "-x1 * x2",
    "1 / -x1",
    "x1^2 + 2 * x1 * x2 + x2^2",
    "(x1 + x2)^2",
    "0.001",
    "1000000",
    "1.25 * t - 0.75",
    "t / (1 - t)",
    "x1^-0.5 + x2^-0.5",
    "2 * x1 - x2^3",
    "(t - 0.5)^2 * x1",
    "1 - t^2",
    "x2^-0.25 / (1 + t)",
    "-t - -x1",
];

#[test]
fn canonical_corpus_round_trips() {
    for src in CANONICAL {
        let printed = parse_expression(src).unwrap().to_string();
        assert_eq!(printed, src);
    }
}

#[test]
fn evaluation_is_deterministic() {
    let f = Nonlinearity::from_expression("t^0.5 * x1^-0.25 + x2^3 / (1 + t)", 2, 0).unwrap();
    let a = f.evaluate(0.37, &[0.21, 1.9]).unwrap();
    for _ in 0..100 {
        assert_eq!(f.evaluate(0.37, &[0.21, 1.9]).unwrap().to_bits(), a.to_bits());
    }
}

fn power(gamma: f64) -> Nonlinearity {
    Nonlinearity::emden_fowler(1.0, 0.0, &[-gamma], 0)
        .with_exponents(vec![-gamma], vec![(-gamma + 0.3).min(0.9)])
        .unwrap()
}

#[test]
fn classifier_never_accepts_divergent_powers() {
    let fam = default_family(0.0, 1.0);
    let ts = Arc::new(TimeScale::uniform(0.0, 1.0, 17).unwrap());
    for (gamma, expect_convergent) in [(0.25, true), (0.5, true), (1.0, false), (1.1, false), (1.5, false)] {
        let p = DirichletProblem::positive(ts.clone(), vec![power(gamma)]).unwrap();
        let v = criterion_sufficient(&p, &fam).unwrap().remove(0);
        assert_eq!(
            v.verdict == Verdict::Convergent,
            expect_convergent,
            "γ = {gamma}: {}",
            v.verdict
        );
    }
    // slow convergence is reported as undecided, never as divergent
    for gamma in [0.75, 0.9] {
        let p = DirichletProblem::positive(ts.clone(), vec![power(gamma)]).unwrap();
        let v = criterion_sufficient(&p, &fam).unwrap().remove(0);
        assert_ne!(v.verdict, Verdict::Divergent, "γ = {gamma}");
    }
}

#[test]
fn converged_solutions_satisfy_the_envelope() {
    let fam = default_family(0.0, 1.0);
    let ts = Arc::new(TimeScale::uniform(0.0, 1.0, 33).unwrap());
    for gamma in [0.1, 0.3, 0.5] {
        for c in [0.5, 1.0, 3.0] {
            let f = Nonlinearity::emden_fowler(c, 0.0, &[-gamma], 0)
                .with_exponents(vec![-gamma - 0.1], vec![-gamma + 0.1])
                .unwrap();
            let p = DirichletProblem::positive(ts.clone(), vec![f]).unwrap();
            let b = construct_bounds(&p, &fam).unwrap();
            let k = &b.constants;
            assert!(k.k1[0] <= 1.0 && 1.0 <= k.k2[0] && k.k1[0] * k.k2[0] >= k.k1[0]);
            let rep = solve(
                &p,
                Some(&b.alpha),
                b.beta.as_ref(),
                &SolveConfig::with_strategy(Method::Picard),
            )
            .unwrap();
            assert_eq!(rep.status, Status::Converged);
            compute_envelope(&p, &rep.solution).unwrap();
        }
    }
}
