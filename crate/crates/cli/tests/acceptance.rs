//! Acceptance suite: one PASS/FAIL line per criterion.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rps_cli::{commands::try_run, Command, Overrides};
use rps_core::classifier::{classify, Verdict};
use rps_core::criteria::{build_report, CriteriaOptions, Sandwich};
use rps_core::expr::Expr;
use rps_core::iteration::{residual, solve, solve_observed, SolveOptions};
use rps_core::model::{
    assemble, check_hypotheses, EquationInput, Nonlinearity, ProblemInput, ProblemSpec, SampleBudget, Weight,
};
use rps_core::operators::{log_space, PhiFamily, PhiOperator, ValidationRange};
use rps_core::oracle::{lair_criteria, manufactured_problem, yang_check, LairExistence, LairInstance};
use rps_core::quadrature::{ProbeOptions, ProbeSchedule, RadialGrid};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn op(f: PhiFamily) -> Arc<PhiOperator> {
    Arc::new(PhiOperator::new(f).unwrap())
}

fn weight(src: &str) -> Weight {
    Weight::from_expr(Expr::parse_plain(src).unwrap())
}

fn problem(ops: [Arc<PhiOperator>; 2], a: [Weight; 2], f: [Nonlinearity; 2], alpha: f64, beta: f64) -> ProblemSpec {
    let [o1, o2] = ops;
    let [a1, a2] = a;
    let [f1, f2] = f;
    assemble(ProblemInput {
        n: 3,
        alpha,
        beta,
        eqs: [EquationInput::new(o1, a1, f1), EquationInput::new(o2, a2, f2)],
        validation: ValidationRange::default(),
    })
    .unwrap()
}

fn catalog() -> Vec<PhiFamily> {
    vec![
        PhiFamily::Laplacian,
        PhiFamily::PLaplacian { p: 1.5 },
        PhiFamily::PLaplacian { p: 3.0 },
        PhiFamily::Plasma { p: 2.0, q: 3.0 },
        PhiFamily::Elasticity { p: 1.0 },
        PhiFamily::Elasticity { p: 0.75 },
        PhiFamily::Plasticity { p: 2.0, q: 1.0 },
        PhiFamily::Newtonian { p: 0.5, q: 1.0 },
    ]
}

fn random_weight(rng: &mut ChaCha8Rng) -> Weight {
    let c = rng.gen_range(0.1..2.0);
    let k = rng.gen_range(0.5..4.0);
    let src = match rng.gen_range(0..4) {
        0 => format!("{c}"),
        1 => format!("{c}*(1+r)^(-{k})"),
        2 => format!("{c}*exp(-{k}*r)"),
        _ => format!("{c}/(1+r^2)"),
    };
    weight(&src)
}

fn random_instances() -> Vec<ProblemSpec> {
    let mut rng = ChaCha8Rng::seed_from_u64(20261016);
    let ops: Vec<Arc<PhiOperator>> = catalog().into_iter().map(op).collect();
    (0..25)
        .map(|_| {
            let o = [
                ops[rng.gen_range(0..ops.len())].clone(),
                ops[rng.gen_range(0..ops.len())].clone(),
            ];
            let a = [random_weight(&mut rng), random_weight(&mut rng)];
            let f = [
                Nonlinearity::power(rng.gen_range(0.2..1.0)),
                Nonlinearity::power(rng.gen_range(0.2..1.0)),
            ];
            problem(o, a, f, rng.gen_range(0.5..2.0), rng.gen_range(0.5..2.0))
        })
        .collect()
}

const GRID_R_MAX: f64 = 4.0;
const GRID_STEP: f64 = 1e-2;

/// Criteria 1 and 2 share the instances and the iteration run.
fn iteration_criteria() -> (Outcome, Outcome) {
    let start = Instant::now();
    let specs = random_instances();
    let grid = RadialGrid::new(GRID_R_MAX, GRID_STEP).unwrap();
    let mut monotone_bad = Vec::new();
    let mut upper_bad = Vec::new();
    let mut lower_bad = Vec::new();
    let mut upper_checked = 0usize;
    let mut lower_checked = 0usize;
    let mut not_converged = 0usize;
    for (k, spec) in specs.iter().enumerate() {
        let rep = build_report(spec, &CriteriaOptions::default()).unwrap();
        let mut sandwich = Sandwich::new(spec, grid.nodes(), rep.simplified_constants());
        let mut prev: Option<(Vec<f64>, Vec<f64>)> = None;
        let sol = solve_observed(spec, &grid, &SolveOptions::default(), |s| {
            if let Some((pu, pv)) = &prev {
                let ok = s.u.iter().zip(pu).all(|(a, b)| *a >= b - 1e-12)
                    && s.v.iter().zip(pv).all(|(a, b)| *a >= b - 1e-12);
                if !ok {
                    monotone_bad.push(format!("instance {k} iteration {}", s.m));
                }
            }
            for (i, x) in [&s.u, &s.v].into_iter().enumerate() {
                match sandwich.check_upper(i, x, 1e-6) {
                    Some(Ok(c)) if c.holds => upper_checked += 1,
                    Some(Ok(c)) => upper_bad.push(format!(
                        "instance {k} side {i} iteration {}: excess {:e} at r = {}",
                        s.m, c.worst_excess, c.at_radius
                    )),
                    Some(Err(e)) => upper_bad.push(format!("instance {k} side {i}: {e}")),
                    None => {}
                }
            }
            prev = Some((s.u.clone(), s.v.clone()));
        })
        .unwrap();
        if !sol.converged {
            not_converged += 1;
        }
        for (i, x) in [&sol.u, &sol.v].into_iter().enumerate() {
            if let Some(c) = sandwich.check_lower(i, x, 1e-6) {
                lower_checked += 1;
                if !c.holds {
                    lower_bad.push(format!(
                        "instance {k} side {i}: excess {:e} at r = {}",
                        c.worst_excess, c.at_radius
                    ));
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let c1 = outcome(
        monotone_bad.is_empty() && secs < 60.0,
        format!(
            "25 instances, {} violations, {not_converged} not converged, {secs:.1} s{}",
            monotone_bad.len(),
            monotone_bad
                .first()
                .map(|s| format!(" (first: {s})"))
                .unwrap_or_default()
        ),
    );
    let bad: Vec<&String> = upper_bad.iter().chain(&lower_bad).collect();
    let c2 = outcome(
        bad.is_empty() && upper_checked > 0 && lower_checked > 0,
        format!(
            "{upper_checked} upper checks over iterates, {lower_checked} lower checks, {} violations{}",
            bad.len(),
            bad.first().map(|s| format!(" (first: {s})")).unwrap_or_default()
        ),
    );
    (c1, c2)
}

fn criterion_3() -> Outcome {
    let grid = RadialGrid::new(2.0, 1e-3).unwrap();
    let exact = |r: f64| 1.0 + r * r;
    let mut parts = Vec::new();
    let mut pass = true;
    let lap = op(PhiFamily::Laplacian);
    let analytic = problem(
        [lap.clone(), lap],
        [weight("6/(1+r^2)"), weight("6/(1+r^2)")],
        [Nonlinearity::identity(), Nonlinearity::identity()],
        1.0,
        1.0,
    );
    let u_star = Expr::parse_plain("1+r^2").unwrap();
    let p3 = op(PhiFamily::PLaplacian { p: 3.0 });
    let plap = manufactured_problem(
        &u_star,
        &u_star,
        p3.clone(),
        p3,
        Nonlinearity::identity(),
        Nonlinearity::identity(),
        3,
        &grid,
    )
    .unwrap();
    for (name, spec) in [("laplacian", analytic), ("p_laplacian(3)", plap)] {
        let start = Instant::now();
        let sol = solve(&spec, &grid, &SolveOptions::default()).unwrap();
        let secs = start.elapsed().as_secs_f64();
        let err = sol
            .r
            .iter()
            .zip(sol.u.iter().zip(&sol.v))
            .map(|(&r, (&u, &v))| (u - exact(r)).abs().max((v - exact(r)).abs()))
            .fold(0.0, f64::max);
        let (ru, rv) = residual(&spec, &sol).unwrap();
        let ok = err <= 1e-4 && ru <= 1e-5 && rv <= 1e-5 && secs < 10.0;
        pass &= ok;
        parts.push(format!(
            "{name}: sup error {err:.2e}, residuals {ru:.1e}/{rv:.1e}, {secs:.2} s"
        ));
    }
    outcome(pass, parts.join("; "))
}

fn criterion_4() -> Outcome {
    let rep = yang_check(
        &Nonlinearity::identity(),
        &weight("(1+r^2)^(-2)"),
        3,
        &ProbeSchedule::default(),
        &ProbeOptions::default(),
        1024,
    )
    .unwrap();
    match rep.a_limit.finite_value() {
        Some((v, _)) => {
            let rel = (v - 0.5).abs() / 0.5;
            outcome(rel <= 1e-4, format!("limit {v:.9}, relative error {rel:.2e}"))
        }
        None => outcome(false, format!("probe verdict {}", rep.a_limit)),
    }
}

fn criterion_5() -> Outcome {
    let families = [
        PhiFamily::Plasma { p: 2.0, q: 3.0 },
        PhiFamily::Elasticity { p: 1.0 },
        PhiFamily::Plasticity { p: 2.0, q: 1.0 },
        PhiFamily::Newtonian { p: 0.5, q: 1.0 },
    ];
    let s = log_space(1e-3, 1e3, 64);
    let mut violations = 0usize;
    let mut parts = Vec::new();
    for fam in families {
        let o = op(fam.clone());
        let (env, _) = match o.derive_envelopes(&ValidationRange::default()) {
            Ok(e) => e,
            Err(e) => {
                parts.push(format!("{fam}: {e}"));
                violations += 1;
                continue;
            }
        };
        let mut v = 0usize;
        for &s1 in &s {
            for &s2 in &s {
                let mid = o.h_inverse(s1 * s2).unwrap();
                let lo = env.k_under * env.theta_under.eval(s1).unwrap() * env.psi_under.eval(s2).unwrap();
                let hi = env.k_bar * env.theta_bar.eval(s1).unwrap() * env.psi_bar.eval(s2).unwrap();
                if lo > mid * (1.0 + 1e-12) || mid > hi * (1.0 + 1e-12) {
                    v += 1;
                }
            }
        }
        violations += v;
        parts.push(format!("{fam}: {v}"));
    }
    outcome(
        violations == 0,
        format!("64x64 grid on [1e-3, 1e3]^2, violations {}", parts.join(", ")),
    )
}

fn workspace_file(rel: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").join(rel)
}

fn criterion_6(dir: &Path) -> Outcome {
    let csv = dir.join("sweep.csv");
    let report = dir.join("sweep.json");
    let over = Overrides {
        report_json: Some(report),
        csv: Some(csv.clone()),
    };
    if let Err(e) = try_run(Command::Sweep, &workspace_file("configs/sweep_sigma.json"), &over) {
        return outcome(false, format!("sweep failed: {e}"));
    }
    let mut rdr = csv::Reader::from_path(&csv).unwrap();
    let mut got = Vec::new();
    let mut pass = true;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let sigma: f64 = rec[0].parse().unwrap();
        let verdict = rec[1].to_string();
        let want = if sigma <= 2.0 { "BothLarge" } else { "BothBounded" };
        pass &= verdict == want;
        got.push(format!("{sigma}:{verdict}"));
    }
    pass &= got.len() == 6;
    let mixed = dir.join("mixed.json");
    let over = Overrides {
        report_json: Some(mixed.clone()),
        csv: Some(dir.join("mixed.csv")),
    };
    let mixed_verdict = match try_run(Command::Classify, &workspace_file("configs/mixed.json"), &over) {
        Ok(()) => {
            let v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&mixed).unwrap()).unwrap();
            v["classification"]["verdict"].as_str().unwrap_or("?").to_string()
        }
        Err(e) => format!("error {e}"),
    };
    pass &= mixed_verdict == "UBoundedVLarge";
    outcome(
        pass,
        format!(
            "sigma sweep [{}]; mixed a1 = (1+r)^-6, a2 = 1: {mixed_verdict}",
            got.join(" ")
        ),
    )
}

fn criterion_7() -> Outcome {
    let cases: [(f64, f64, &str, &str); 10] = [
        (1.0, 1.0, "1", "1"),
        (1.0, 1.0, "(1+r)^(-4)", "(1+r)^(-4)"),
        (0.5, 1.0, "1", "1/(1+r)"),
        (0.5, 0.5, "exp(-r)", "exp(-r)"),
        (1.0, 0.5, "(1+r)^(-1)", "(1+r)^(-1)"),
        (0.5, 2.0, "1", "1"),
        (0.25, 1.0, "1/(1+r^2)", "exp(-2*r)"),
        (1.0, 1.0, "(1+r)^(-3)", "1"),
        (0.5, 0.5, "(1+r)^(-5)", "(1+r)^(-3)"),
        (1.0, 0.75, "1/(1+r)", "(1+r)^(-1.5)"),
    ];
    let lap = op(PhiFamily::Laplacian);
    let mut agree = 0;
    let mut abstain = 0;
    let mut mismatches = Vec::new();
    for (ea, eb, a1, a2) in cases {
        let spec = problem(
            [lap.clone(), lap.clone()],
            [weight(a1), weight(a2)],
            [Nonlinearity::power(ea), Nonlinearity::power(eb)],
            1.0,
            1.0,
        );
        let rep = build_report(&spec, &CriteriaOptions::default()).unwrap();
        let class = classify(&spec, &rep, &check_hypotheses(&spec, &SampleBudget::default()));
        let lair = lair_criteria(
            &LairInstance {
                alpha_exp: ea,
                beta_exp: eb,
                a1: weight(a1),
                a2: weight(a2),
                n: 3,
            },
            &ProbeSchedule::default(),
            &ProbeOptions::default(),
            1024,
        )
        .unwrap();
        if class.verdict == Verdict::Indeterminate || lair.existence == LairExistence::Unknown {
            abstain += 1;
            continue;
        }
        if (class.verdict == Verdict::BothLarge) == (lair.existence == LairExistence::Exists) {
            agree += 1;
        } else {
            mismatches.push(format!(
                "({ea},{eb},{a1},{a2}): {} vs {:?}",
                class.verdict, lair.existence
            ));
        }
    }
    outcome(
        mismatches.is_empty() && abstain <= 2,
        format!(
            "{agree} agree, {abstain} abstain, {} disagree {:?}",
            mismatches.len(),
            mismatches
        ),
    )
}

fn criterion_8() -> Outcome {
    let ts = log_space(1e-6, 1e6, 1000);
    let mut worst = 0.0f64;
    let mut at = String::new();
    for fam in catalog() {
        let o = op(fam.clone());
        for &t in &ts {
            let back = o.h_inverse(o.h_eval(t).unwrap()).unwrap();
            let rel = (back - t).abs() / t;
            if rel > worst {
                worst = rel;
                at = format!("{fam} at t = {t:e}");
            }
        }
    }
    outcome(worst <= 1e-10, format!("worst relative error {worst:.2e} ({at})"))
}

fn criterion_9(dir: &Path) -> Outcome {
    let config = workspace_file("configs/decaying.json");
    let mut texts = Vec::new();
    for k in 0..2 {
        let report = dir.join(format!("determinism_{k}.json"));
        let over = Overrides {
            report_json: Some(report.clone()),
            csv: Some(dir.join(format!("determinism_{k}.csv"))),
        };
        if let Err(e) = try_run(Command::Classify, &config, &over) {
            return outcome(false, format!("classify failed: {e}"));
        }
        texts.push(std::fs::read(&report).unwrap());
    }
    outcome(texts[0] == texts[1], format!("{} bytes per report", texts[0].len()))
}

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let (c1, c2) = iteration_criteria();
    let results = [
        ("1 monotone iteration", c1),
        ("2 sandwich bounds", c2),
        ("3 manufactured convergence", criterion_3()),
        ("4 Yang limit identity", criterion_4()),
        ("5 envelope inequality", criterion_5()),
        ("6 classifier dichotomy", criterion_6(dir.path())),
        ("7 Lair agreement", criterion_7()),
        ("8 h-inversion round trip", criterion_8()),
        ("9 determinism", criterion_9(dir.path())),
    ];
    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
