use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rps_core::classifier::{classify, cross_check, Classification, ConsistencyReport, CrossCheckOptions, Verdict};
use rps_core::criteria::{build_report, CriteriaReport};
use rps_core::expr::Expr;
use rps_core::iteration::{solve, RadialSolution, SupDiff};
use rps_core::model::{check_hypotheses, CheckStatus, HypothesisReport, ProblemSpec, SampleBudget};
use rps_core::operators::{EnvelopeOrigin, GrowthExponents};
use rps_core::oracle::{lair_criteria, yang_check, LairInstance, LairReport, YangReport};
use rps_core::par;
use serde::Serialize;

use crate::config::{NumericsConfig, RunConfig};
use crate::format::{central_difference, sci12, to_json, write_csv, write_json};
use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Solve,
    Classify,
    Validate,
    Sweep,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Solve => "solve",
            Command::Classify => "classify",
            Command::Validate => "validate",
            Command::Sweep => "sweep",
        }
    }
}

/// Output paths given on the command line; they win over the config.
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub report_json: Option<PathBuf>,
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EquationSummary {
    pub operator: String,
    pub weight: String,
    pub nonlinearity: String,
    pub m_big: f64,
    pub m_small: f64,
    pub c2_threshold: f64,
    pub envelopes: EnvelopeOrigin,
    pub growth: Option<GrowthExponents>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProblemSummary {
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    pub equations: [EquationSummary; 2],
    pub warnings: Vec<String>,
}

impl ProblemSummary {
    fn new(spec: &ProblemSpec) -> ProblemSummary {
        ProblemSummary {
            n: spec.n,
            alpha: spec.alpha,
            beta: spec.beta,
            equations: [0, 1].map(|i| {
                let eq = &spec.eqs[i];
                EquationSummary {
                    operator: eq.op.family().to_string(),
                    weight: eq.weight.label.clone(),
                    nonlinearity: eq.f.to_string(),
                    m_big: eq.m_big,
                    m_small: eq.m_small,
                    c2_threshold: eq.c2_threshold,
                    envelopes: eq.env.origin,
                    growth: eq.growth,
                }
            }),
            warnings: spec.warnings.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SolutionSummary {
    pub converged: bool,
    pub iterations_used: usize,
    pub residual_u: f64,
    pub residual_v: f64,
    pub nodes: usize,
    pub u_at_r_max: f64,
    pub v_at_r_max: f64,
    pub history: Vec<SupDiff>,
}

impl SolutionSummary {
    fn new(sol: &RadialSolution) -> SolutionSummary {
        SolutionSummary {
            converged: sol.converged,
            iterations_used: sol.iterations_used,
            residual_u: sol.residual_u,
            residual_v: sol.residual_v,
            nodes: sol.r.len(),
            u_at_r_max: *sol.u.last().expect("nonempty"),
            v_at_r_max: *sol.v.last().expect("nonempty"),
            history: sol.history.clone(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ManufacturedError {
    pub u_star: String,
    pub v_star: String,
    pub sup_error_u: f64,
    pub sup_error_v: f64,
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct Validation {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub manufactured: Option<ManufacturedError>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lair: Option<LairReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub yang: Option<[YangReport; 2]>,
}

#[derive(Debug, Clone, Serialize)]
pub struct Failure {
    pub command: &'static str,
    pub status: &'static str,
    pub error: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct SolveReport {
    pub command: &'static str,
    pub status: &'static str,
    pub problem: ProblemSummary,
    pub numerics: NumericsConfig,
    pub solution: SolutionSummary,
    pub validation: Validation,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClassifyReport {
    pub command: &'static str,
    pub problem: ProblemSummary,
    pub numerics: NumericsConfig,
    pub hypotheses: HypothesisReport,
    pub criteria: CriteriaReport,
    pub classification: Classification,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub solution: Option<SolutionSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub consistency: Option<ConsistencyReport>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidateReport {
    pub command: &'static str,
    pub problem: ProblemSummary,
    pub hypotheses: HypothesisReport,
    pub all_passed: bool,
    pub failures: Vec<String>,
    pub validation: Validation,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepPoint {
    pub parameters: BTreeMap<String, f64>,
    pub verdict: Option<Verdict>,
    pub matched_rule: Option<String>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepReport {
    pub command: &'static str,
    pub points: Vec<SweepPoint>,
}

/// `Some` carries a failure whose report has already been written.
type Reported = Option<CliError>;

fn emit_json<T: Serialize>(path: Option<&Path>, value: &T) -> Result<(), CliError> {
    match path {
        Some(p) => write_json(p, value),
        None => {
            print!("{}", to_json(value));
            Ok(())
        }
    }
}

/// Write the failure diagnostics, then hand the error back.
fn fail(cmd: Command, path: Option<&Path>, err: CliError) -> CliError {
    if let CliError::Numeric(msg) = &err {
        let report = Failure {
            command: cmd.name(),
            status: "numeric_failure",
            error: msg.clone(),
        };
        if let Err(e) = emit_json(path, &report) {
            return e;
        }
    }
    err
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

fn hypotheses(spec: &ProblemSpec) -> HypothesisReport {
    check_hypotheses(spec, &SampleBudget::default())
}

fn run_solve(cfg: &RunConfig, spec: &ProblemSpec) -> Result<RadialSolution, CliError> {
    let grid = cfg.numerics.grid()?;
    solve(spec, &grid, &cfg.numerics.solve_options()).map_err(numeric)
}

fn manufactured_error(cfg: &RunConfig, sol: &RadialSolution) -> Result<Option<ManufacturedError>, CliError> {
    let Some(m) = &cfg.manufactured else {
        return Ok(None);
    };
    let params = &cfg.problem.params;
    let sup_err = |src: &str, x: &[f64]| -> Result<f64, CliError> {
        let e = Expr::parse(src, params).map_err(|e| CliError::Config(e.to_string()))?;
        let mut worst = 0.0f64;
        for (r, x) in sol.r.iter().zip(x) {
            let exact = e.eval(*r).map_err(numeric)?;
            worst = worst.max((x - exact).abs());
        }
        Ok(worst)
    };
    Ok(Some(ManufacturedError {
        u_star: m.u_star.clone(),
        v_star: m.v_star.clone(),
        sup_error_u: sup_err(&m.u_star, &sol.u)?,
        sup_error_v: sup_err(&m.v_star, &sol.v)?,
    }))
}

fn solution_rows(sol: &RadialSolution) -> (Vec<String>, Vec<Vec<String>>) {
    let du = central_difference(&sol.u, &sol.r);
    let dv = central_difference(&sol.v, &sol.r);
    let header = ["r", "u", "v", "u_prime", "v_prime"].map(String::from).to_vec();
    let rows = (0..sol.r.len())
        .map(|i| [sol.r[i], sol.u[i], sol.v[i], du[i], dv[i]].map(sci12).to_vec())
        .collect();
    (header, rows)
}

fn cmd_solve(cfg: &RunConfig, report: Option<&Path>, csv: Option<&Path>) -> Result<Reported, CliError> {
    let spec = cfg.build_problem()?;
    let hyp = hypotheses(&spec);
    if let Some((name, check)) = hyp.first_failure() {
        return Err(CliError::Config(format!(
            "hypothesis {name} fails: {}",
            check.detail.as_deref().unwrap_or("sampled violation")
        )));
    }
    let sol = run_solve(cfg, &spec)?;
    if let Some(path) = csv {
        let (header, rows) = solution_rows(&sol);
        write_csv(path, &header, &rows)?;
    }
    let validation = Validation {
        manufactured: manufactured_error(cfg, &sol)?,
        ..Validation::default()
    };
    let out = SolveReport {
        command: "solve",
        status: if sol.converged { "converged" } else { "not_converged" },
        problem: ProblemSummary::new(&spec),
        numerics: cfg.numerics,
        solution: SolutionSummary::new(&sol),
        validation,
    };
    emit_json(report, &out)?;
    if !sol.converged {
        return Ok(Some(CliError::Numeric(format!(
            "no convergence after {} iterations (residuals {:e}, {:e})",
            sol.iterations_used, sol.residual_u, sol.residual_v
        ))));
    }
    Ok(None)
}

fn classify_problem(
    cfg: &RunConfig,
) -> Result<(ProblemSpec, HypothesisReport, CriteriaReport, Classification), CliError> {
    let spec = cfg.build_problem()?;
    let hyp = hypotheses(&spec);
    let report = build_report(&spec, &cfg.numerics.criteria_options()).map_err(numeric)?;
    let class = classify(&spec, &report, &hyp);
    Ok((spec, hyp, report, class))
}

fn cmd_classify(cfg: &RunConfig, report: Option<&Path>, csv: Option<&Path>) -> Result<Reported, CliError> {
    let (spec, hyp, criteria, class) = classify_problem(cfg)?;
    let (solution, consistency) = if cfg.classify.cross_check {
        let sol = run_solve(cfg, &spec)?;
        if let Some(path) = csv {
            let (header, rows) = solution_rows(&sol);
            write_csv(path, &header, &rows)?;
        }
        let cc = cross_check(&spec, &class, &sol, &CrossCheckOptions::default());
        (Some(SolutionSummary::new(&sol)), Some(cc))
    } else {
        (None, None)
    };
    let out = ClassifyReport {
        command: "classify",
        problem: ProblemSummary::new(&spec),
        numerics: cfg.numerics,
        hypotheses: hyp,
        criteria,
        classification: class,
        solution,
        consistency,
    };
    emit_json(report, &out)?;
    Ok(None)
}

fn cmd_validate(cfg: &RunConfig, report: Option<&Path>) -> Result<Reported, CliError> {
    let spec = cfg.build_problem()?;
    let hyp = hypotheses(&spec);
    let groups = [
        ("A", &hyp.weights),
        ("C1", &hyp.c1),
        ("C2", &hyp.c2),
        ("C3", &hyp.c3),
        ("ineq", &hyp.ineq),
    ];
    let mut failures = Vec::new();
    for (name, checks) in groups {
        for (i, c) in checks.iter().enumerate() {
            if c.status == CheckStatus::Fail {
                let detail = c.detail.as_deref().unwrap_or("sampled violation");
                failures.push(format!("{name} (equation {}): {detail}", i + 1));
            }
        }
    }
    let n = &cfg.numerics;
    let mut validation = Validation::default();
    if let Some((a, b)) = &cfg.oracles.lair {
        let params = &cfg.problem.params;
        let [a1, a2] = cfg.weights()?;
        let inst = LairInstance {
            alpha_exp: a.resolve(params, "oracles.lair")?,
            beta_exp: b.resolve(params, "oracles.lair")?,
            a1,
            a2,
            n: spec.n,
        };
        validation.lair = Some(
            lair_criteria(&inst, &n.probe, &n.probe_options(), n.cells_per_block)
                .map_err(|e| CliError::Config(format!("oracles.lair: {e}")))?,
        );
    }
    if cfg.oracles.yang {
        let run = |i: usize| -> Result<YangReport, CliError> {
            let eq = &spec.eqs[i];
            yang_check(
                &eq.f,
                &eq.weight,
                spec.n,
                &n.probe,
                &n.probe_options(),
                n.cells_per_block,
            )
            .map_err(|e| CliError::Numeric(format!("oracles.yang (equation {}): {e}", i + 1)))
        };
        validation.yang = Some([run(0)?, run(1)?]);
    }
    let out = ValidateReport {
        command: "validate",
        problem: ProblemSummary::new(&spec),
        hypotheses: hyp,
        all_passed: failures.is_empty(),
        failures: failures.clone(),
        validation,
    };
    emit_json(report, &out)?;
    if failures.is_empty() {
        Ok(None)
    } else {
        Ok(Some(CliError::Config(failures.join("; "))))
    }
}

fn sweep_point(cfg: &RunConfig, params: &BTreeMap<String, f64>) -> SweepPoint {
    match classify_problem(&cfg.with_params(params)) {
        Ok((_, _, _, class)) => SweepPoint {
            parameters: params.clone(),
            verdict: Some(class.verdict),
            matched_rule: Some(class.matched_rule),
            error: None,
        },
        Err(e) => SweepPoint {
            parameters: params.clone(),
            verdict: None,
            matched_rule: None,
            error: Some(e.to_string()),
        },
    }
}

/// Threads for sweeps, from `RPS_THREADS` (unset or 0: rayon's default).
pub fn sweep_threads() -> Result<Option<usize>, CliError> {
    match std::env::var("RPS_THREADS") {
        Err(_) => Ok(None),
        Ok(s) => match s.trim().parse::<usize>() {
            Ok(0) => Ok(None),
            Ok(n) => Ok(Some(n)),
            Err(_) => Err(CliError::Config(format!("RPS_THREADS = `{s}` is not a thread count"))),
        },
    }
}

#[cfg(feature = "parallel")]
fn sweep_map(cfg: &RunConfig, points: &[BTreeMap<String, f64>]) -> Result<Vec<SweepPoint>, CliError> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = sweep_threads()? {
        builder = builder.num_threads(n);
    }
    let pool = builder
        .build()
        .map_err(|e| CliError::Config(format!("thread pool: {e}")))?;
    Ok(pool.install(|| par::map(points, |p| sweep_point(cfg, p))))
}

#[cfg(not(feature = "parallel"))]
fn sweep_map(cfg: &RunConfig, points: &[BTreeMap<String, f64>]) -> Result<Vec<SweepPoint>, CliError> {
    sweep_threads()?;
    Ok(par::map(points, |p| sweep_point(cfg, p)))
}

fn cmd_sweep(cfg: &RunConfig, report: Option<&Path>, csv: Option<&Path>) -> Result<Reported, CliError> {
    let sweep = cfg
        .sweep
        .as_ref()
        .ok_or_else(|| CliError::Config("sweep: missing `sweep` section".into()))?;
    let points = sweep.points();
    let results = sweep_map(cfg, &points)?;
    if let Some(path) = csv {
        let mut header: Vec<String> = sweep.parameters.keys().cloned().collect();
        header.extend(["verdict", "matched_rule", "error"].map(String::from));
        let rows: Vec<Vec<String>> = results
            .iter()
            .map(|p| {
                let mut row: Vec<String> = p.parameters.values().map(|v| sci12(*v)).collect();
                row.push(p.verdict.map(|v| v.to_string()).unwrap_or_default());
                row.push(p.matched_rule.clone().unwrap_or_default());
                row.push(p.error.clone().unwrap_or_default());
                row
            })
            .collect();
        write_csv(path, &header, &rows)?;
    }
    let failed = results.iter().filter(|p| p.error.is_some()).count();
    emit_json(
        report,
        &SweepReport {
            command: "sweep",
            points: results,
        },
    )?;
    if failed > 0 {
        return Ok(Some(CliError::Numeric(format!("{failed} sweep point(s) failed"))));
    }
    Ok(None)
}

/// Run `cmd` on the config at `config_path`; returns the process exit code.
pub fn run(cmd: Command, config_path: &Path, overrides: &Overrides) -> i32 {
    match try_run(cmd, config_path, overrides) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("rps {}: {e}", cmd.name());
            e.exit_code()
        }
    }
}

pub fn try_run(cmd: Command, config_path: &Path, overrides: &Overrides) -> Result<(), CliError> {
    let text = std::fs::read_to_string(config_path)
        .map_err(|e| CliError::Config(format!("cannot read {}: {e}", config_path.display())))?;
    let cfg = RunConfig::from_json(&text)?;
    // Paths from the config are relative to the config file; overrides to the working directory.
    let base = config_path.parent().unwrap_or(Path::new(""));
    let from_config = |p: &Option<PathBuf>| p.as_ref().map(|p| base.join(p));
    let report = overrides
        .report_json
        .clone()
        .or_else(|| from_config(&cfg.outputs.report_json));
    let csv = overrides.csv.clone().or_else(|| match cmd {
        Command::Sweep => from_config(&cfg.outputs.sweep_csv),
        _ => from_config(&cfg.outputs.solution_csv),
    });
    let (report, csv) = (report.as_deref(), csv.as_deref());
    let result = match cmd {
        Command::Solve => cmd_solve(&cfg, report, csv),
        Command::Classify => cmd_classify(&cfg, report, csv),
        Command::Validate => cmd_validate(&cfg, report),
        Command::Sweep => cmd_sweep(&cfg, report, csv),
    };
    match result {
        Ok(None) => Ok(()),
        Ok(Some(e)) => Err(e),
        Err(e) => Err(fail(cmd, report, e)),
    }
}
