//! Run configuration: a single JSON document with `problem`, `numerics`,
//! `outputs` and optional `manufactured`, `classify`, `oracles` and `sweep`
//! sections.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::Arc;

use rps_core::criteria::CriteriaOptions;
use rps_core::expr::{Expr, VARIABLE_NAMES};
use rps_core::func::ScalarFn;
use rps_core::iteration::SolveOptions;
use rps_core::model::{
    assemble_unchecked, EquationInput, LowerEnvelope, Nonlinearity, ProblemInput, ProblemSpec, UpperEnvelope, Weight,
};
use rps_core::operators::{make_operator, EnvelopeOrigin, EnvelopeSet, PhiOperator, ValidationRange};
use rps_core::oracle::manufactured_problem;
use rps_core::quadrature::{ProbeOptions, ProbeSchedule, RadialGrid};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// A number, or an expression over the problem parameters.
#[derive(Debug, Clone, PartialEq, Deserialize, Serialize)]
#[serde(untagged)]
pub enum Num {
    Value(f64),
    Expr(String),
}

impl Num {
    pub fn resolve(&self, params: &BTreeMap<String, f64>, what: &str) -> Result<f64, CliError> {
        match self {
            Num::Value(v) => Ok(*v),
            Num::Expr(src) => {
                let e = parse(src, params, what)?;
                if !e.is_constant() {
                    return Err(CliError::Config(format!("{what}: `{src}` must not depend on r")));
                }
                e.eval(0.0).map_err(|err| CliError::Config(format!("{what}: {err}")))
            }
        }
    }
}

fn parse(src: &str, params: &BTreeMap<String, f64>, what: &str) -> Result<Expr, CliError> {
    Expr::parse(src, params)
        .map_err(|e| CliError::Config(format!("{what}: cannot parse `{src}` at position {}: {e}", e.offset())))
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemConfig,
    #[serde(default)]
    pub numerics: NumericsConfig,
    #[serde(default)]
    pub outputs: OutputsConfig,
    #[serde(default)]
    pub manufactured: Option<ManufacturedConfig>,
    #[serde(default)]
    pub classify: ClassifyConfig,
    #[serde(default)]
    pub oracles: OraclesConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub n: u32,
    pub alpha: Num,
    pub beta: Num,
    /// Named constants usable in every expression and numeric field.
    #[serde(default)]
    pub params: BTreeMap<String, f64>,
    pub equations: [EquationConfig; 2],
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EquationConfig {
    pub operator: OperatorConfig,
    /// `a(r)`; may be omitted when the weights are manufactured.
    #[serde(default)]
    pub weight: Option<String>,
    pub nonlinearity: NonlinearityConfig,
    #[serde(default)]
    pub envelopes: Option<EnvelopeConfig>,
    #[serde(default)]
    pub m_big: Option<Num>,
    #[serde(default)]
    pub m_small: Option<Num>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
pub struct OperatorConfig {
    pub family: String,
    /// `phi(t)` for the `custom` family.
    #[serde(default)]
    pub expr: Option<String>,
    #[serde(flatten)]
    pub params: BTreeMap<String, Num>,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum NonlinearityConfig {
    Identity,
    Power {
        gamma: Num,
    },
    PowerSum {
        /// `(c, γ)` pairs of `Σ c·t^γ`.
        terms: Vec<(Num, Num)>,
    },
    ExpMinusOne,
    Log1p,
    Custom {
        f: String,
        #[serde(default)]
        upper: Option<UpperConfig>,
        #[serde(default)]
        lower: Option<LowerConfig>,
    },
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct UpperConfig {
    pub c_bar: Num,
    pub g: String,
    pub xi_bar: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct LowerConfig {
    pub c_under: Num,
    pub xi_under: String,
}

#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct EnvelopeConfig {
    pub k_under: Num,
    pub k_bar: Num,
    pub theta_under: String,
    pub theta_bar: String,
    pub psi_under: String,
    pub psi_bar: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct NumericsConfig {
    pub r_max: f64,
    pub step: f64,
    pub conv_tol: f64,
    pub max_iter: usize,
    pub residual_tol: f64,
    pub probe: ProbeSchedule,
    pub tail_tol: f64,
    pub blowup_threshold: f64,
    pub cells_per_block: usize,
}

impl Default for NumericsConfig {
    fn default() -> Self {
        let solve = SolveOptions::default();
        let crit = CriteriaOptions::default();
        NumericsConfig {
            r_max: 10.0,
            step: 1e-3,
            conv_tol: solve.conv_tol,
            max_iter: solve.max_iter,
            residual_tol: solve.residual_tol,
            probe: crit.schedule,
            tail_tol: crit.probe.tail_tol,
            blowup_threshold: crit.probe.blowup_threshold,
            cells_per_block: crit.cells_per_block,
        }
    }
}

impl NumericsConfig {
    pub fn validate(&self) -> Result<(), CliError> {
        let positive = [
            ("r_max", self.r_max),
            ("step", self.step),
            ("conv_tol", self.conv_tol),
            ("residual_tol", self.residual_tol),
            ("tail_tol", self.tail_tol),
            ("blowup_threshold", self.blowup_threshold),
            ("probe.r0", self.probe.r0),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(CliError::Config(format!("numerics.{name} = {v} must be positive")));
            }
        }
        if self.max_iter == 0 || self.cells_per_block == 0 {
            return Err(CliError::Config(
                "numerics.max_iter and cells_per_block must be positive".into(),
            ));
        }
        self.probe
            .validate()
            .map_err(|e| CliError::Config(format!("numerics.probe: {e}")))
    }

    pub fn grid(&self) -> Result<RadialGrid, CliError> {
        RadialGrid::new(self.r_max, self.step).map_err(|e| CliError::Config(format!("numerics: {e}")))
    }

    pub fn solve_options(&self) -> SolveOptions {
        SolveOptions {
            conv_tol: self.conv_tol,
            max_iter: self.max_iter,
            residual_tol: self.residual_tol,
        }
    }

    pub fn probe_options(&self) -> ProbeOptions {
        ProbeOptions {
            tail_tol: self.tail_tol,
            blowup_threshold: self.blowup_threshold,
        }
    }

    pub fn criteria_options(&self) -> CriteriaOptions {
        CriteriaOptions {
            schedule: self.probe,
            probe: self.probe_options(),
            cells_per_block: self.cells_per_block,
        }
    }
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputsConfig {
    pub solution_csv: Option<PathBuf>,
    pub report_json: Option<PathBuf>,
    pub sweep_csv: Option<PathBuf>,
}

/// Exact solution from which the weights are derived.
#[derive(Debug, Clone, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ManufacturedConfig {
    pub u_star: String,
    pub v_star: String,
}

#[derive(Debug, Clone, Copy, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifyConfig {
    /// Also solve on `[0, r_max]` and compare the solution with the verdict.
    pub cross_check: bool,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(default, deny_unknown_fields)]
pub struct OraclesConfig {
    /// Exponents `(α, β)` for the Lair criteria on the configured weights.
    pub lair: Option<(Num, Num)>,
    /// Run the single-equation criterion on each `(f_i, a_i)`.
    pub yang: bool,
}

#[derive(Debug, Clone, Default, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    /// Parameter name to values; the sweep runs over the cartesian product.
    pub parameters: BTreeMap<String, Vec<f64>>,
}

impl SweepConfig {
    /// Every combination, in lexicographic order of parameter names.
    pub fn points(&self) -> Vec<BTreeMap<String, f64>> {
        let mut out = vec![BTreeMap::new()];
        for (name, values) in &self.parameters {
            out = out
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.insert(name.clone(), v);
                        q
                    })
                })
                .collect();
        }
        if self.parameters.is_empty() {
            out.clear();
        }
        out
    }
}

fn scalar(src: &str, params: &BTreeMap<String, f64>, what: &str) -> Result<ScalarFn, CliError> {
    Ok(ScalarFn::Expr(parse(src, params, what)?))
}

impl NonlinearityConfig {
    fn build(&self, params: &BTreeMap<String, f64>, what: &str) -> Result<Nonlinearity, CliError> {
        Ok(match self {
            NonlinearityConfig::Identity => Nonlinearity::identity(),
            NonlinearityConfig::Power { gamma } => Nonlinearity::power(gamma.resolve(params, what)?),
            NonlinearityConfig::PowerSum { terms } => Nonlinearity::power_sum(
                terms
                    .iter()
                    .map(|(c, g)| Ok((c.resolve(params, what)?, g.resolve(params, what)?)))
                    .collect::<Result<_, CliError>>()?,
            ),
            NonlinearityConfig::ExpMinusOne => Nonlinearity::exp_minus_one(),
            NonlinearityConfig::Log1p => Nonlinearity::log1p(),
            NonlinearityConfig::Custom { f, upper, lower } => Nonlinearity::custom(
                scalar(f, params, what)?,
                upper
                    .as_ref()
                    .map(|u| {
                        Ok::<_, CliError>(UpperEnvelope {
                            c_bar: u.c_bar.resolve(params, what)?,
                            g: scalar(&u.g, params, what)?,
                            xi_bar: scalar(&u.xi_bar, params, what)?,
                        })
                    })
                    .transpose()?,
                lower
                    .as_ref()
                    .map(|l| {
                        Ok::<_, CliError>(LowerEnvelope {
                            c_under: l.c_under.resolve(params, what)?,
                            xi_under: scalar(&l.xi_under, params, what)?,
                        })
                    })
                    .transpose()?,
            ),
        })
    }
}

impl EquationConfig {
    fn operator(&self, params: &BTreeMap<String, f64>, what: &str) -> Result<Arc<PhiOperator>, CliError> {
        let resolved = self
            .operator
            .params
            .iter()
            .map(|(k, v)| Ok((k.clone(), v.resolve(params, what)?)))
            .collect::<Result<BTreeMap<_, _>, CliError>>()?;
        let op = make_operator(&self.operator.family, &resolved, self.operator.expr.as_deref())
            .map_err(|e| CliError::Config(format!("{what}: {e}")))?;
        Ok(Arc::new(op))
    }

    fn input(
        &self,
        op: Arc<PhiOperator>,
        weight: Weight,
        params: &BTreeMap<String, f64>,
        what: &str,
    ) -> Result<EquationInput, CliError> {
        let mut eq = EquationInput::new(op, weight, self.nonlinearity.build(params, what)?);
        eq.m_big = self.m_big.as_ref().map(|m| m.resolve(params, what)).transpose()?;
        eq.m_small = self.m_small.as_ref().map(|m| m.resolve(params, what)).transpose()?;
        eq.envelope_override = self
            .envelopes
            .as_ref()
            .map(|e| {
                Ok::<_, CliError>(EnvelopeSet {
                    k_under: e.k_under.resolve(params, what)?,
                    k_bar: e.k_bar.resolve(params, what)?,
                    theta_under: scalar(&e.theta_under, params, what)?,
                    theta_bar: scalar(&e.theta_bar, params, what)?,
                    psi_under: scalar(&e.psi_under, params, what)?,
                    psi_bar: scalar(&e.psi_bar, params, what)?,
                    origin: EnvelopeOrigin::User,
                })
            })
            .transpose()?;
        Ok(eq)
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<RunConfig, CliError> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))?;
        cfg.numerics.validate()?;
        let swept = cfg.sweep.iter().flat_map(|s| s.parameters.keys());
        for name in cfg.problem.params.keys().chain(swept) {
            if VARIABLE_NAMES.contains(&name.as_str()) || name == "pi" || name == "e" {
                return Err(CliError::Config(format!("parameter name `{name}` is reserved")));
            }
        }
        Ok(cfg)
    }

    /// Copy with extra parameter values taking precedence.
    pub fn with_params(&self, extra: &BTreeMap<String, f64>) -> RunConfig {
        let mut cfg = self.clone();
        cfg.problem.params.extend(extra.iter().map(|(k, v)| (k.clone(), *v)));
        cfg
    }

    pub fn weights(&self) -> Result<[Weight; 2], CliError> {
        let params = &self.problem.params;
        let w = |i: usize| -> Result<Weight, CliError> {
            let what = format!("problem.equations[{i}].weight");
            let src = self.problem.equations[i]
                .weight
                .as_deref()
                .ok_or_else(|| CliError::Config(format!("{what} is required")))?;
            Ok(Weight::from_expr(parse(src, params, &what)?))
        };
        Ok([w(0)?, w(1)?])
    }

    pub fn nonlinearity(&self, i: usize) -> Result<Nonlinearity, CliError> {
        self.problem.equations[i]
            .nonlinearity
            .build(&self.problem.params, &format!("problem.equations[{i}].nonlinearity"))
    }

    /// Assemble the problem without rejecting failed hypotheses.
    pub fn build_problem(&self) -> Result<ProblemSpec, CliError> {
        let p = &self.problem;
        let params = &p.params;
        let what = |i: usize| format!("problem.equations[{i}]");
        let ops = [
            p.equations[0].operator(params, &what(0))?,
            p.equations[1].operator(params, &what(1))?,
        ];
        let alpha = p.alpha.resolve(params, "problem.alpha")?;
        let beta = p.beta.resolve(params, "problem.beta")?;
        if let Some(m) = &self.manufactured {
            let u = parse(&m.u_star, params, "manufactured.u_star")?;
            let v = parse(&m.v_star, params, "manufactured.v_star")?;
            let grid = self.numerics.grid()?;
            let f1 = self.nonlinearity(0)?;
            let f2 = self.nonlinearity(1)?;
            let spec = manufactured_problem(&u, &v, ops[0].clone(), ops[1].clone(), f1, f2, p.n, &grid)
                .map_err(|e| CliError::Config(format!("manufactured: {e}")))?;
            if (spec.alpha - alpha).abs() > 1e-12 * alpha.abs() || (spec.beta - beta).abs() > 1e-12 * beta.abs() {
                return Err(CliError::Config(format!(
                    "manufactured: u*(0) = {}, v*(0) = {} differ from alpha = {alpha}, beta = {beta}",
                    spec.alpha, spec.beta
                )));
            }
            return Ok(spec);
        }
        let [w1, w2] = self.weights()?;
        let [o1, o2] = ops;
        let input = ProblemInput {
            n: p.n,
            alpha,
            beta,
            eqs: [
                p.equations[0].input(o1, w1, params, &what(0))?,
                p.equations[1].input(o2, w2, params, &what(1))?,
            ],
            validation: ValidationRange::default(),
        };
        assemble_unchecked(input).map_err(|e| CliError::Config(e.to_string()))
    }
}
