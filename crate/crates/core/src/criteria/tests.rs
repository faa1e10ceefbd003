use super::*;
use crate::calculus::GridFunction;
use crate::model::Nonlinearity;
use crate::solver::{solve, SolveConfig, Status, Strategy};

fn unit(n: usize) -> Arc<TimeScale> {
    Arc::new(TimeScale::uniform(0.0, 1.0, n).unwrap())
}

fn power(gamma: f64) -> Nonlinearity {
    Nonlinearity::from_expression(&format!("x1^(-{gamma})"), 1, 0)
        .unwrap()
        .with_exponents(vec![-gamma], vec![0.5])
        .unwrap()
}

fn positive(ts: Arc<TimeScale>, f: Nonlinearity) -> DirichletProblem {
    DirichletProblem::positive(ts, vec![f]).unwrap()
}

#[test]
fn sufficient_criterion_examples() {
    let fam = default_family(0.0, 1.0);
    let p = positive(unit(65), power(0.5));
    let v = &criterion_sufficient(&p, &fam).unwrap()[0];
    assert_eq!(v.verdict, Verdict::Convergent);
    assert!(v.positive);
    assert!((v.limit_estimate - std::f64::consts::PI).abs() < 1e-5);

    let p = positive(unit(65), power(1.5));
    assert_eq!(criterion_sufficient(&p, &fam).unwrap()[0].verdict, Verdict::Divergent);

    let one = Nonlinearity::from_expression("1", 1, 0).unwrap();
    let v = &criterion_sufficient(&positive(unit(65), one), &fam).unwrap()[0];
    assert_eq!(v.verdict, Verdict::Convergent);
    assert!((v.limit_estimate - 1.0).abs() < 1e-9);
}

#[test]
fn general_problems_are_rejected() {
    let f = Nonlinearity::from_expression("1", 1, 0).unwrap();
    let p = DirichletProblem::new(unit(9), vec![f], vec![0.0], vec![1.0]).unwrap();
    assert!(matches!(
        criterion_sufficient(&p, &default_family(0.0, 1.0)),
        Err(Error::InvalidProblem { .. })
    ));
}

#[test]
fn short_family_is_an_error() {
    let p = positive(unit(9), power(0.5));
    let fam = uniform_family(0.0, 1.0, &[17, 33, 65]).unwrap();
    assert_eq!(
        criterion_sufficient(&p, &fam),
        Err(Error::FamilyTooShort { needed: 4, got: 3 })
    );
}

#[test]
fn family_order_does_not_matter() {
    let p = positive(unit(9), power(0.25));
    let mut fam = default_family(0.0, 1.0);
    let a = criterion_sufficient(&p, &fam).unwrap();
    fam.reverse();
    assert_eq!(criterion_sufficient(&p, &fam).unwrap(), a);
}

#[test]
fn domination_examples() {
    let fam = default_family(0.0, 1.0);
    let v = &check_h2_domination(|_| vec![1.0], 1, &fam).unwrap()[0];
    assert_eq!(v.verdict, Verdict::Convergent);
    assert!((v.limit_estimate - 1.0 / 6.0).abs() < 1e-9);

    let v = &check_h2_domination(|s| vec![s.powi(-3)], 1, &fam).unwrap()[0];
    assert_eq!(v.verdict, Verdict::Divergent);

    // slow O(h log h) approach; needs a longer family
    let sizes: Vec<usize> = (4..=14).map(|k| (1 << k) + 1).collect();
    let long = uniform_family(0.0, 1.0, &sizes).unwrap();
    let v = &check_h2_domination(|s| vec![1.0 / (s * (1.0 - s))], 1, &long).unwrap()[0];
    assert_eq!(v.verdict, Verdict::Convergent);
    assert!((v.limit_estimate - 1.0).abs() < 1e-3);
}

#[test]
fn necessary_criterion_on_quantum_scales() {
    let fam = quantum_family(2.0, &QUANTUM_FAMILY).unwrap();
    let ts = fam[0].clone();
    for (p, want) in [(1.0, Verdict::Convergent), (3.0, Verdict::Divergent)] {
        let f = Nonlinearity::from_expression(&format!("t^(-{p})"), 1, 0).unwrap();
        let prob = positive(ts.clone(), f);
        assert_eq!(
            criterion_necessary(&prob, &fam, None).unwrap()[0].verdict,
            want,
            "p = {p}"
        );
    }
    let one = Nonlinearity::from_expression("1", 1, 0).unwrap();
    let prob = positive(unit(9), one);
    let v = &criterion_necessary(&prob, &default_family(0.0, 1.0), None).unwrap()[0];
    assert_eq!(v.verdict, Verdict::Convergent);
}

#[test]
fn necessary_criterion_needs_positive_endpoint() {
    let ts = Arc::new(TimeScale::uniform(-2.0, -1.0, 9).unwrap());
    let one = Nonlinearity::from_expression("1", 1, 0).unwrap();
    let prob = positive(ts, one);
    let fam = uniform_family(-2.0, -1.0, &[17, 33, 65, 129]).unwrap();
    assert!(matches!(
        criterion_necessary(&prob, &fam, None),
        Err(Error::NonpositiveEndpoint { .. })
    ));
    assert!(criterion_necessary(&prob, &fam, Some(2.0)).is_ok());
}

#[test]
fn scaling_checker_examples() {
    let ts = unit(33);
    let good = power(0.5);
    let r = check_htilde2(&good, &ts, 500, DEFAULT_SEED).unwrap();
    assert!(r.pass && r.shape_ok);

    let boundary = Nonlinearity::emden_fowler(1.0, 0.0, &[-0.5], 0);
    let r = check_htilde2(&boundary, &ts, 500, DEFAULT_SEED).unwrap();
    assert!(r.pass && !r.shape_ok);

    let square = Nonlinearity::from_expression("x1^2", 1, 0)
        .unwrap()
        .with_exponents(vec![-0.5], vec![0.5])
        .unwrap();
    let r = check_htilde2(&square, &ts, 500, DEFAULT_SEED).unwrap();
    assert!(!r.pass);
    let w = r.witness.unwrap();
    assert!(w.value < w.lower || w.value > w.upper);
}

#[test]
fn monotone_checker_examples() {
    let ts = unit(17);
    let alpha = GridFunction::constant(&ts, &[0.1]).unwrap();
    let beta = GridFunction::constant(&ts, &[2.0]).unwrap();
    let root = Nonlinearity::from_expression("x1^0.5", 1, 0).unwrap();
    assert!(check_h3_monotone(&root, &alpha, &beta, 200, DEFAULT_SEED).unwrap().pass);
    let one = Nonlinearity::from_expression("1", 1, 0).unwrap();
    assert!(check_h3_monotone(&one, &alpha, &beta, 200, DEFAULT_SEED).unwrap().pass);
    let r = check_h3_monotone(&power(0.5), &alpha, &beta, 200, DEFAULT_SEED).unwrap();
    assert!(!r.pass);
    let w = r.witness.unwrap();
    assert!(w.fx > w.fy);
}

#[test]
fn lipschitz_checker_examples() {
    let ts = unit(17);
    let alpha = GridFunction::constant(&ts, &[0.1]).unwrap();
    let beta = GridFunction::constant(&ts, &[2.0]).unwrap();
    let linear = Nonlinearity::from_expression("x1", 1, 0).unwrap();
    let r = check_h3bar_lipschitz(&linear, &alpha, &beta, 200, DEFAULT_SEED).unwrap();
    assert!(r.pass && (r.m_estimate - 1.0).abs() < 1e-6);
    let one = Nonlinearity::from_expression("3", 1, 0).unwrap();
    assert_eq!(
        check_h3bar_lipschitz(&one, &alpha, &beta, 200, DEFAULT_SEED)
            .unwrap()
            .m_estimate,
        0.0
    );
    let r = check_h3bar_lipschitz(&power(0.5), &alpha, &beta, 200, DEFAULT_SEED).unwrap();
    let bound = 0.5 * 0.1f64.powf(-1.5);
    assert!(r.m_estimate <= bound * (1.0 + 1e-6) && r.m_estimate > 0.9 * bound);
}

#[test]
fn bounds_for_singular_power() {
    let ts = unit(129);
    let p = positive(ts.clone(), power(0.5));
    let b = construct_bounds(&p, &default_family(0.0, 1.0)).unwrap();
    let c = &b.constants;
    assert!(c.k1[0] <= 1.0 && c.k2[0] >= 1.0);
    assert!(c.i1[0] < c.i2[0]);
    assert!(b.lower_verified);
    assert_eq!(b.upper_verified, Some(true));
    let beta = b.beta.as_ref().unwrap();
    assert!(b.alpha.values().iter().zip(beta.values()).all(|(a, b)| a <= b));
    assert_eq!(b.alpha.value(0).unwrap(), &[0.0]);
    assert_eq!(beta.value(128).unwrap(), &[0.0]);
}

#[test]
fn bounds_need_declared_exponents() {
    let f = Nonlinearity::from_expression("x1^(-0.5)", 1, 0).unwrap();
    let p = positive(unit(33), f);
    assert!(matches!(
        construct_bounds(&p, &default_family(0.0, 1.0)),
        Err(Error::ShapeViolation { .. })
    ));
    let p = positive(unit(33), power(1.5));
    assert!(matches!(
        construct_bounds(&p, &default_family(0.0, 1.0)),
        Err(Error::CriterionNotSatisfied { .. })
    ));
}

#[test]
fn lower_construction_for_constant_rhs() {
    let ts = unit(65);
    let one = Nonlinearity::from_expression("1", 1, 0)
        .unwrap()
        .with_exponents(vec![-0.5], vec![0.5])
        .unwrap();
    let p = positive(ts.clone(), one);
    let fam = default_family(0.0, 1.0);
    let b = construct_lower(&p, &fam, LowerMode::Without).unwrap();
    // the weight without the exponent is too small near the ends
    assert_eq!(b.lower_display_holds, Some(false));
    assert!(b.lower_verified);
    // g is the Green's image of the weight
    let w = GridFunction::scalar_from_fn(&ts, |s| {
        let k = ts.index_of(s).unwrap();
        if k + 1 < ts.len() {
            let ss = ts.p(k + 1);
            ss * (1.0 - ss)
        } else {
            0.0
        }
    })
    .unwrap();
    let g = crate::green::green_apply(&ts, &w).unwrap();
    let k1 = b.constants.k1[0];
    for k in 0..ts.len() {
        assert!((b.alpha.at(k, 0) / k1 - g.at(k, 0)).abs() < 1e-12);
    }
    let b = construct_lower(&p, &fam, LowerMode::WithMuIi).unwrap();
    assert_eq!(b.lower_display_holds, Some(true));
    assert_eq!(b.alpha.value(0).unwrap(), &[0.0]);
    assert_eq!(b.alpha.value(64).unwrap(), &[0.0]);
    assert!(b.lower_verified);
}

#[test]
fn constant_bounds() {
    let ts = unit(33);
    let f = Nonlinearity::from_expression("2", 1, 0).unwrap();
    let p = positive(ts.clone(), f);
    let b = bounds_from_constants(&p, &[2.0], &[2.0]).unwrap();
    for k in 0..ts.len() {
        let t = ts.p(k);
        assert!((b.alpha.at(k, 0) - t * (1.0 - t)).abs() < 1e-14);
    }
    assert!(b.lower_verified && b.upper_verified == Some(true));
    let b = bounds_from_constants(&p, &[0.0], &[3.0]).unwrap();
    assert_eq!(b.alpha.max_abs(), 0.0);
    let beta = b.beta.unwrap();
    assert!((1..32).all(|k| beta.at(k, 0) > b.alpha.at(k, 0)));
    assert!(matches!(
        bounds_from_constants(&p, &[2.0], &[1.0]),
        Err(Error::BoundOrderViolation { .. })
    ));
}

#[test]
fn verification_examples() {
    let ts = unit(33);
    let p = positive(ts.clone(), power(0.5));
    let zero = GridFunction::zeros(&ts, 1);
    assert!(verify_lower(&p, &zero).unwrap().pass);
    let r = verify_upper(&p, &zero).unwrap();
    assert!(!r.pass);
    assert!(r.violations.iter().all(|v| v.slack == f64::INFINITY));

    let one = Nonlinearity::from_expression("1", 1, 0).unwrap();
    let p = positive(ts.clone(), one);
    let exact = GridFunction::scalar_from_fn(&ts, |t| t * (1.0 - t) / 2.0).unwrap();
    assert!(verify_lower(&p, &exact).unwrap().pass);
    assert!(verify_upper(&p, &exact).unwrap().pass);
    let shifted = exact.map(|v| v + 0.1);
    let r = verify_lower(&p, &shifted).unwrap();
    assert!(!r.pass);
    assert!(r.violations.iter().any(|v| v.index == 0));
}

#[test]
fn envelope_of_constant_rhs() {
    let ts = unit(65);
    let one = Nonlinearity::from_expression("1", 1, 0).unwrap();
    let p = positive(ts.clone(), one);
    let x = GridFunction::scalar_from_fn(&ts, |t| t * (1.0 - t) / 2.0).unwrap();
    let env = compute_envelope(&p, &x).unwrap();
    let (i1, i2) = env[0];
    // Σ μ over the equation points is σ(b) − a
    assert!((i2 - ts.sigma_b()).abs() < 1e-14);
    assert!((i2 - 1.0).abs() <= ts.mu(63));
    assert!(0.0 < i1 && i1 < i2);
    let bad = x.map(|v| 3.0 * v);
    assert!(matches!(
        compute_envelope(&p, &bad),
        Err(Error::EnvelopeViolation { .. })
    ));
}

#[test]
fn envelope_of_singular_solution() {
    let ts = unit(65);
    let p = positive(ts.clone(), power(0.5));
    let b = construct_bounds(&p, &default_family(0.0, 1.0)).unwrap();
    let rep = solve(
        &p,
        Some(&b.alpha),
        b.beta.as_ref(),
        &SolveConfig::with_strategy(Strategy::Picard),
    )
    .unwrap();
    assert_eq!(rep.status, Status::Converged);
    let env = compute_envelope(&p, &rep.solution).unwrap();
    assert!(env[0].0 > 0.0 && env[0].0 < env[0].1);
}

#[test]
fn endpoint_slopes() {
    let fam = default_family(0.0, 1.0);
    let parabola: Vec<GridFunction> = fam
        .iter()
        .map(|ts| GridFunction::scalar_from_fn(ts, |t| t * (1.0 - t) / 2.0).unwrap())
        .collect();
    let r = type1_limits(&parabola).unwrap();
    assert!(r.bounded);
    assert!((r.left[0].limit_estimate - 0.5).abs() < 1e-9);
    assert!((r.right[0].limit_estimate + 0.5).abs() < 1e-9);

    let root: Vec<GridFunction> = fam
        .iter()
        .map(|ts| GridFunction::scalar_from_fn(ts, |t| t.powf(0.25) * (1.0 - t)).unwrap())
        .collect();
    let r = type1_limits(&root).unwrap();
    assert!(!r.bounded);
    assert_eq!(r.left[0].verdict, Verdict::Divergent);

    let zero: Vec<GridFunction> = fam.iter().map(|ts| GridFunction::zeros(ts, 1)).collect();
    assert!(type1_limits(&zero).unwrap().bounded);
    assert!(matches!(type1_limits(&zero[..3]), Err(Error::FamilyTooShort { .. })));
}
