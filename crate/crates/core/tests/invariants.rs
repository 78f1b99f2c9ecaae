use std::collections::BTreeMap;
use std::sync::Arc;

use proptest::prelude::*;
use rps_core::classifier::{classify, cross_check, CrossCheckOptions, Verdict};
use rps_core::criteria::{build_report, CriteriaOptions, Sandwich};
use rps_core::expr::Expr;
use rps_core::iteration::{solve, solve_observed, SolveOptions};
use rps_core::model::{
    assemble, check_hypotheses, EquationInput, Nonlinearity, ProblemInput, ProblemSpec, SampleBudget, Weight,
};
use rps_core::operators::{PhiFamily, PhiOperator, ValidationRange};
use rps_core::oracle::{lair_criteria, LairExistence, LairInstance};
use rps_core::quadrature::{ProbeOptions, ProbeSchedule, RadialGrid};

fn op(f: PhiFamily) -> Arc<PhiOperator> {
    Arc::new(PhiOperator::new(f).unwrap())
}

fn weight(src: &str, params: &BTreeMap<String, f64>) -> Weight {
    Weight::from_expr(Expr::parse(src, params).unwrap())
}

#[allow(clippy::too_many_arguments)]
fn build(
    ops: [Arc<PhiOperator>; 2],
    a: [&str; 2],
    f: [Nonlinearity; 2],
    alpha: f64,
    beta: f64,
    params: &BTreeMap<String, f64>,
) -> ProblemSpec {
    let [o1, o2] = ops;
    let [f1, f2] = f;
    assemble(ProblemInput {
        n: 3,
        alpha,
        beta,
        eqs: [
            EquationInput::new(o1, weight(a[0], params), f1),
            EquationInput::new(o2, weight(a[1], params), f2),
        ],
        validation: ValidationRange::default(),
    })
    .unwrap()
}

/// Monotone iterates, floors, radial monotonicity and the upper sandwich
/// for every iterate; the lower bound for the converged solution.
fn check_iteration(spec: &ProblemSpec, r_max: f64, step: f64) {
    let grid = RadialGrid::new(r_max, step).unwrap();
    let rep = build_report(spec, &CriteriaOptions::default()).unwrap();
    let mut sandwich = Sandwich::new(spec, grid.nodes(), rep.simplified_constants());
    let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
    let mut failures = Vec::new();
    let mut checked = [0usize; 2];
    let sol = solve_observed(spec, &grid, &SolveOptions::default(), |s| {
        for (x, c) in [(&s.u, spec.alpha), (&s.v, spec.beta)] {
            if x.iter().any(|&y| y < c) {
                failures.push(format!("floor broken at iteration {}", s.m));
            }
            if x.windows(2).any(|w| w[1] < w[0] - 1e-12) {
                failures.push(format!("not radially nondecreasing at iteration {}", s.m));
            }
        }
        if let Some((pu, pv)) = &prev {
            let up = s.u.iter().zip(pu).all(|(a, b)| *a >= b - 1e-12);
            let vp = s.v.iter().zip(pv).all(|(a, b)| *a >= b - 1e-12);
            if !(up && vp) {
                failures.push(format!("iterates decreased at iteration {}", s.m));
            }
        }
        for (i, x) in [&s.u, &s.v].into_iter().enumerate() {
            match sandwich.check_upper(i, x, 1e-6) {
                Some(Ok(c)) if !c.holds => failures.push(format!("upper bound {i} fails at iteration {}: {c:?}", s.m)),
                Some(Err(e)) => failures.push(format!("upper bound {i} not evaluated: {e}")),
                Some(Ok(_)) => checked[i] += 1,
                None => {}
            }
        }
        prev = Some((s.u.clone(), s.v.clone()));
    })
    .unwrap();
    assert!(failures.is_empty(), "{failures:?}");
    assert!(checked.iter().all(|&k| k > 0), "upper bound never checked");
    assert!(sol.converged);
    for (i, x) in [&sol.u, &sol.v].into_iter().enumerate() {
        if let Some(c) = sandwich.check_lower(i, x, 1e-6) {
            assert!(c.holds, "lower bound {i}: {c:?}");
        }
    }
}

#[test]
fn lair_linear_iteration_invariants() {
    let lap = op(PhiFamily::Laplacian);
    let spec = build(
        [lap.clone(), lap],
        ["1", "1"],
        [Nonlinearity::identity(), Nonlinearity::identity()],
        1.0,
        1.0,
        &BTreeMap::new(),
    );
    check_iteration(&spec, 8.0, 1e-2);
}

#[test]
fn mixed_operator_iteration_invariants() {
    let spec = build(
        [
            op(PhiFamily::PLaplacian { p: 3.0 }),
            op(PhiFamily::Plasma { p: 2.0, q: 3.0 }),
        ],
        ["(1+r)^(-3)", "exp(-r)"],
        [Nonlinearity::power(0.5), Nonlinearity::log1p()],
        1.0,
        2.0,
        &BTreeMap::new(),
    );
    check_iteration(&spec, 10.0, 1e-2);
}

#[test]
fn lair_existence_matches_classifier() {
    let lap = op(PhiFamily::Laplacian);
    for (a1, a2) in [("1", "1"), ("(1+r)^(-4)", "(1+r)^(-4)"), ("1/(1+r)", "1/(1+r)^2")] {
        let none = BTreeMap::new();
        let spec = build(
            [lap.clone(), lap.clone()],
            [a1, a2],
            [Nonlinearity::identity(), Nonlinearity::identity()],
            1.0,
            1.0,
            &none,
        );
        let rep = build_report(&spec, &CriteriaOptions::default()).unwrap();
        let class = classify(&spec, &rep, &check_hypotheses(&spec, &SampleBudget::default()));
        let lair = lair_criteria(
            &LairInstance {
                alpha_exp: 1.0,
                beta_exp: 1.0,
                a1: weight(a1, &none),
                a2: weight(a2, &none),
                n: 3,
            },
            &ProbeSchedule::default(),
            &ProbeOptions::default(),
            1024,
        )
        .unwrap();
        assert_eq!(
            class.verdict == Verdict::BothLarge,
            lair.existence == LairExistence::Exists,
            "{a1}, {a2}: {} vs {:?}",
            class.verdict,
            lair.existence
        );
    }
}

#[test]
fn bounded_manufactured_instance_cross_checks() {
    // u = v = 2 − (1+r²)^{−1/2} solves Δu = 3(1+r²)^{−5/2} in ℝ³.
    let lap = op(PhiFamily::Laplacian);
    let a = "3*(1+r^2)^(-2.5)/(2-(1+r^2)^(-0.5))";
    let spec = build(
        [lap.clone(), lap],
        [a, a],
        [Nonlinearity::identity(), Nonlinearity::identity()],
        1.0,
        1.0,
        &BTreeMap::new(),
    );
    let rep = build_report(&spec, &CriteriaOptions::default()).unwrap();
    let class = classify(&spec, &rep, &check_hypotheses(&spec, &SampleBudget::default()));
    assert_eq!(class.verdict, Verdict::BothBounded, "{class:?}");
    let grid = RadialGrid::new(16.0, 1e-3).unwrap();
    let sol = solve(&spec, &grid, &SolveOptions::default()).unwrap();
    let exact = |r: f64| 2.0 - 1.0 / (1.0 + r * r).sqrt();
    let err = sol
        .r
        .iter()
        .zip(&sol.u)
        .map(|(&r, &u)| (u - exact(r)).abs())
        .fold(0.0, f64::max);
    assert!(err < 1e-4, "{err}");
    let cc = cross_check(&spec, &class, &sol, &CrossCheckOptions::default());
    assert!(cc.agree, "{cc:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn iteration_invariants_hold(c in 0.1f64..2.0, decay in 0.0f64..4.0, gamma in 0.3f64..1.0, alpha in 0.5f64..2.0) {
        let mut p = BTreeMap::new();
        p.insert("c".to_string(), c);
        p.insert("d".to_string(), decay);
        let lap = op(PhiFamily::Laplacian);
        let spec = build(
            [lap.clone(), lap],
            ["c*(1+r)^(-d)", "c/(1+r^2)"],
            [Nonlinearity::power(gamma), Nonlinearity::identity()],
            alpha,
            1.0,
            &p,
        );
        check_iteration(&spec, 4.0, 2e-2);
    }

    #[test]
    fn symmetric_specs_give_equal_components(c in 0.1f64..2.0, alpha in 0.5f64..2.0) {
        let mut p = BTreeMap::new();
        p.insert("c".to_string(), c);
        let lap = op(PhiFamily::PLaplacian { p: 2.5 });
        let spec = build(
            [lap.clone(), lap],
            ["c*exp(-r)", "c*exp(-r)"],
            [Nonlinearity::power(0.5), Nonlinearity::power(0.5)],
            alpha,
            alpha,
            &p,
        );
        let sol = solve(&spec, &RadialGrid::new(3.0, 1e-2).unwrap(), &SolveOptions::default()).unwrap();
        for (u, v) in sol.u.iter().zip(&sol.v) {
            prop_assert!((u - v).abs() <= 1e-8 * (1.0 + u));
        }
    }
}
