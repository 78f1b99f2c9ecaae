//! Problem instances: weights, nonlinearities with their growth envelopes,
//! the constants `M_i`, `m_i`, and sampled checks of the standing hypotheses.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::func::ScalarFn;
use crate::operators::{
    log_space, EnvelopeOrigin, EnvelopeSet, GrowthExponents, OperatorError, PhiOperator, ValidationRange,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("dimension N = {0} must be an integer >= 3")]
    Dimension(u32),
    #[error("central value {name} = {value} must be positive and finite")]
    CentralValue { name: &'static str, value: f64 },
    #[error("operator {index}: {source}")]
    Operator {
        index: usize,
        #[source]
        source: OperatorError,
    },
    #[error("{name}: {message}")]
    Constraint { name: String, message: String },
    #[error("hypothesis {name} fails: {detail}")]
    Hypothesis { name: String, detail: String },
    #[error("evaluation of {what}: {source}")]
    Eval {
        what: String,
        #[source]
        source: EvalError,
    },
}

/// Nonnegative radial weight `a(r)`.
#[derive(Debug, Clone)]
pub struct Weight {
    pub a: ScalarFn,
    pub label: String,
}

impl Weight {
    pub fn new(a: ScalarFn, label: impl Into<String>) -> Weight {
        Weight { a, label: label.into() }
    }

    pub fn from_expr(e: Expr) -> Weight {
        let label = e.to_string();
        Weight::new(ScalarFn::Expr(e), label)
    }

    pub fn zero() -> Weight {
        Weight::new(ScalarFn::Const(0.0), "0")
    }

    pub fn eval(&self, r: f64) -> Result<f64, EvalError> {
        self.a.eval_finite(r)
    }

    /// Right end of the domain for tabulated weights.
    pub fn domain_end(&self) -> Option<f64> {
        match &self.a {
            ScalarFn::Table(t) => Some(t.r_max()),
            _ => None,
        }
    }

    /// True when `a` is identically zero by construction.
    pub fn is_zero(&self) -> bool {
        matches!(self.a, ScalarFn::Const(c) if c == 0.0)
    }
}

/// Data of the upper growth condition: `f(t·w) ≤ c̄·g(t)·ξ̄(w)` for `w ≥ 1`
/// and `t` above the threshold.
#[derive(Debug, Clone)]
pub struct UpperEnvelope {
    pub c_bar: f64,
    pub g: ScalarFn,
    pub xi_bar: ScalarFn,
}

/// Data of the lower growth condition: `f(m·w) ≥ c̲·ξ̲(w)` for `w ≥ 1`.
#[derive(Debug, Clone)]
pub struct LowerEnvelope {
    pub c_under: f64,
    pub xi_under: ScalarFn,
}

#[derive(Debug, Clone, PartialEq)]
pub enum NonlinearityFamily {
    /// `t^γ`
    Power(f64),
    /// `Σ c_j t^{γ_j}` with `c_j, γ_j > 0`
    PowerSum(Vec<(f64, f64)>),
    /// `e^t − 1`
    ExpMinusOne,
    /// `ln(1 + t)`
    Log1p,
    Custom,
}

#[derive(Debug, Clone)]
pub struct Nonlinearity {
    pub f: ScalarFn,
    pub family: NonlinearityFamily,
    /// Replaces the family's upper envelope (required for custom `f`).
    pub upper_override: Option<UpperEnvelope>,
    /// Replaces the family's lower envelope.
    pub lower_override: Option<LowerEnvelope>,
}

impl Nonlinearity {
    pub fn power(gamma: f64) -> Nonlinearity {
        Nonlinearity {
            f: ScalarFn::Power(gamma),
            family: NonlinearityFamily::Power(gamma),
            upper_override: None,
            lower_override: None,
        }
    }

    pub fn identity() -> Nonlinearity {
        Nonlinearity::power(1.0)
    }

    pub fn power_sum(terms: Vec<(f64, f64)>) -> Nonlinearity {
        Nonlinearity {
            f: ScalarFn::PowerSum(terms.clone()),
            family: NonlinearityFamily::PowerSum(terms),
            upper_override: None,
            lower_override: None,
        }
    }

    pub fn exp_minus_one() -> Nonlinearity {
        Nonlinearity {
            f: ScalarFn::ExpM1,
            family: NonlinearityFamily::ExpMinusOne,
            upper_override: None,
            lower_override: None,
        }
    }

    pub fn log1p() -> Nonlinearity {
        Nonlinearity {
            f: ScalarFn::Ln1p,
            family: NonlinearityFamily::Log1p,
            upper_override: None,
            lower_override: None,
        }
    }

    pub fn custom(f: ScalarFn, upper: Option<UpperEnvelope>, lower: Option<LowerEnvelope>) -> Nonlinearity {
        Nonlinearity {
            f,
            family: NonlinearityFamily::Custom,
            upper_override: upper,
            lower_override: lower,
        }
    }

    /// Check family parameters.
    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |message: String| {
            Err(ModelError::Constraint {
                name: "nonlinearity".into(),
                message,
            })
        };
        match &self.family {
            NonlinearityFamily::Power(g) if !(g.is_finite() && *g > 0.0) => {
                bad(format!("power exponent must be positive, got {g}"))
            }
            NonlinearityFamily::PowerSum(terms)
                if terms.is_empty()
                    || terms
                        .iter()
                        .any(|(c, g)| !(c.is_finite() && g.is_finite() && *c > 0.0 && *g > 0.0)) =>
            {
                bad("power_sum needs nonempty (coefficient, exponent) pairs, all positive".into())
            }
            _ => Ok(()),
        }
    }

    /// Upper envelope: the override if given, else the family's exact one.
    pub fn upper(&self) -> Option<UpperEnvelope> {
        if let Some(u) = &self.upper_override {
            return Some(u.clone());
        }
        match &self.family {
            NonlinearityFamily::Power(g) => Some(UpperEnvelope {
                c_bar: 1.0,
                g: ScalarFn::Power(*g),
                xi_bar: ScalarFn::Power(*g),
            }),
            NonlinearityFamily::PowerSum(terms) => {
                let top = terms.iter().map(|t| t.1).fold(0.0, f64::max);
                Some(UpperEnvelope {
                    c_bar: 1.0,
                    g: self.f.clone(),
                    xi_bar: ScalarFn::Power(top),
                })
            }
            // Concave with f(0) = 0, so f(t·w) ≤ w·f(t) for w ≥ 1.
            NonlinearityFamily::Log1p => Some(UpperEnvelope {
                c_bar: 1.0,
                g: ScalarFn::Ln1p,
                xi_bar: ScalarFn::identity(),
            }),
            NonlinearityFamily::ExpMinusOne | NonlinearityFamily::Custom => None,
        }
    }

    /// Lower envelope for the constant `m`. With `m ≥ 1` it is always
    /// `c̲ = 1`, `ξ̲ = f`.
    pub fn lower(&self, m: f64) -> Option<LowerEnvelope> {
        if let Some(l) = &self.lower_override {
            return Some(l.clone());
        }
        if m >= 1.0 {
            return Some(LowerEnvelope {
                c_under: 1.0,
                xi_under: self.f.clone(),
            });
        }
        match &self.family {
            NonlinearityFamily::Power(g) => Some(LowerEnvelope {
                c_under: m.powf(*g),
                xi_under: ScalarFn::Power(*g),
            }),
            NonlinearityFamily::PowerSum(_) | NonlinearityFamily::Log1p => Some(LowerEnvelope {
                c_under: 1.0,
                xi_under: ScalarFn::Dilated(Box::new(self.f.clone()), m),
            }),
            // Convex with f(0) = 0, so f(m·w) ≥ w·f(m) for w ≥ 1.
            NonlinearityFamily::ExpMinusOne => Some(LowerEnvelope {
                c_under: m.exp_m1(),
                xi_under: ScalarFn::identity(),
            }),
            NonlinearityFamily::Custom => None,
        }
    }
}

impl fmt::Display for Nonlinearity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.f)
    }
}

/// User-facing description of one equation before assembly.
#[derive(Debug, Clone)]
pub struct EquationInput {
    pub op: Arc<PhiOperator>,
    pub envelope_override: Option<EnvelopeSet>,
    pub weight: Weight,
    pub f: Nonlinearity,
    pub m_big: Option<f64>,
    pub m_small: Option<f64>,
}

impl EquationInput {
    pub fn new(op: Arc<PhiOperator>, weight: Weight, f: Nonlinearity) -> EquationInput {
        EquationInput {
            op,
            envelope_override: None,
            weight,
            f,
            m_big: None,
            m_small: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct ProblemInput {
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    pub eqs: [EquationInput; 2],
    pub validation: ValidationRange,
}

/// One equation of the assembled system. Equation 0 is
/// `Δ_{φ₁} u = a₁ f₁(v)` with `u(0) = α`; equation 1 is the `v` equation.
#[derive(Debug, Clone)]
pub struct Equation {
    pub op: Arc<PhiOperator>,
    pub env: EnvelopeSet,
    pub growth: Option<GrowthExponents>,
    pub weight: Weight,
    pub f: Nonlinearity,
    pub m_big: f64,
    pub m_big_bound: f64,
    pub m_small: f64,
    pub m_small_bound: f64,
    /// Threshold above which the upper growth condition must hold.
    pub c2_threshold: f64,
    pub upper: Option<UpperEnvelope>,
    pub lower: Option<LowerEnvelope>,
}

#[derive(Debug, Clone)]
pub struct ProblemSpec {
    pub n: u32,
    pub alpha: f64,
    pub beta: f64,
    pub eqs: [Equation; 2],
    pub validation: ValidationRange,
    pub warnings: Vec<String>,
}

impl ProblemSpec {
    /// `α` for equation 0, `β` for equation 1.
    pub fn center(&self, i: usize) -> f64 {
        if i == 0 {
            self.alpha
        } else {
            self.beta
        }
    }
}

pub const THRESHOLD_FLOOR: f64 = 1e-300;

fn eval(f: &ScalarFn, x: f64, what: &str) -> Result<f64, ModelError> {
    f.eval(x).map_err(|source| ModelError::Eval {
        what: what.to_string(),
        source,
    })
}

/// Assemble without running the hypothesis checks.
pub fn assemble_unchecked(input: ProblemInput) -> Result<ProblemSpec, ModelError> {
    if input.n < 3 {
        return Err(ModelError::Dimension(input.n));
    }
    for (name, value) in [("alpha", input.alpha), ("beta", input.beta)] {
        if !(value > 0.0 && value.is_finite()) {
            return Err(ModelError::CentralValue { name, value });
        }
    }
    let mut warnings = Vec::new();
    let mut envs = Vec::with_capacity(2);
    for (index, eq) in input.eqs.iter().enumerate() {
        eq.f.validate()?;
        let pair = match &eq.envelope_override {
            Some(env) => {
                env.verify(&eq.op, input.validation.s_max, input.validation.ineq_points)
                    .map_err(|source| ModelError::Operator { index, source })?;
                (env.clone(), None)
            }
            None => {
                let (env, g) = eq
                    .op
                    .derive_envelopes(&input.validation)
                    .map_err(|source| ModelError::Operator { index, source })?;
                (env, Some(g))
            }
        };
        envs.push(pair);
    }
    let centers = [input.alpha, input.beta];
    let mut eqs = Vec::with_capacity(2);
    for i in 0..2 {
        let o = 1 - i;
        let (env_o, f_o) = (&envs[o].0, &input.eqs[o].f.f);
        let label = i + 1;
        let f_o_c = eval(f_o, centers[i], "nonlinearity")?;
        let mut theta_bar = eval(&env_o.theta_bar, f_o_c, "theta_bar")?;
        if !(theta_bar >= THRESHOLD_FLOOR) {
            warnings.push(format!(
                "θ̄{}(f{}({})) = {theta_bar:e} floored to {THRESHOLD_FLOOR:e}",
                o + 1,
                o + 1,
                centers[i]
            ));
            theta_bar = THRESHOLD_FLOOR;
        }
        let theta_under = eval(&env_o.theta_under, f_o_c, "theta_under")?;
        let m_big_bound = 1f64.max(centers[o] / theta_bar);
        let m_big = match input.eqs[i].m_big {
            Some(m) if !(m >= m_big_bound) || !m.is_finite() => {
                return Err(ModelError::Constraint {
                    name: format!("M{label}"),
                    message: format!("M{label} = {m} < max{{1, center/θ̄(f(center))}} = {m_big_bound}"),
                })
            }
            Some(m) => m,
            None => m_big_bound,
        };
        let m_small_bound = centers[o].min(theta_under);
        let m_small = match input.eqs[i].m_small {
            Some(m) if !(m > 0.0 && m < m_small_bound) => {
                return Err(ModelError::Constraint {
                    name: format!("m{label}"),
                    message: format!("m{label} = {m} outside (0, {m_small_bound})"),
                })
            }
            Some(m) => m,
            None => 0.5 * m_small_bound,
        };
        if !(m_small > 0.0) {
            return Err(ModelError::Constraint {
                name: format!("m{label}"),
                message: format!("admissible interval (0, {m_small_bound}) is empty"),
            });
        }
        let eq = &input.eqs[i];
        eqs.push(Equation {
            op: Arc::clone(&eq.op),
            env: envs[i].0.clone(),
            growth: envs[i].1,
            weight: eq.weight.clone(),
            f: eq.f.clone(),
            m_big,
            m_big_bound,
            m_small,
            m_small_bound,
            c2_threshold: m_big * theta_bar,
            upper: eq.f.upper(),
            lower: eq.f.lower(m_small),
        });
    }
    let e1 = eqs.pop().expect("two equations");
    let e0 = eqs.pop().expect("two equations");
    Ok(ProblemSpec {
        n: input.n,
        alpha: input.alpha,
        beta: input.beta,
        eqs: [e0, e1],
        validation: input.validation,
        warnings,
    })
}

/// Assemble and reject the instance if a standing hypothesis fails.
pub fn assemble(input: ProblemInput) -> Result<ProblemSpec, ModelError> {
    let spec = assemble_unchecked(input)?;
    let report = check_hypotheses(&spec, &SampleBudget::default());
    if let Some((name, check)) = report.first_failure() {
        return Err(ModelError::Hypothesis {
            name,
            detail: check.detail.clone().unwrap_or_default(),
        });
    }
    Ok(spec)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Unavailable,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub status: CheckStatus,
    /// Largest sampled violation (relative for inequalities, absolute for
    /// sign and monotonicity checks); 0 when none.
    pub worst_violation: f64,
    pub detail: Option<String>,
}

impl Check {
    fn pass() -> Check {
        Check {
            status: CheckStatus::Pass,
            worst_violation: 0.0,
            detail: None,
        }
    }

    fn unavailable(why: &str) -> Check {
        Check {
            status: CheckStatus::Unavailable,
            worst_violation: 0.0,
            detail: Some(why.to_string()),
        }
    }

    fn from_worst(worst: f64, detail: Option<String>) -> Check {
        if worst > 0.0 {
            Check {
                status: CheckStatus::Fail,
                worst_violation: worst,
                detail,
            }
        } else {
            Check::pass()
        }
    }

    fn fail(detail: String) -> Check {
        Check {
            status: CheckStatus::Fail,
            worst_violation: f64::INFINITY,
            detail: Some(detail),
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CheckStatus::Pass
    }
}

/// Per-equation results of the sampled hypothesis checks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HypothesisReport {
    pub weights: [Check; 2],
    pub c1: [Check; 2],
    pub c2: [Check; 2],
    pub c3: [Check; 2],
    pub ineq: [Check; 2],
    pub warnings: Vec<String>,
}

impl HypothesisReport {
    pub fn c1_holds(&self) -> bool {
        self.c1.iter().all(Check::passed)
    }

    /// First failing check in the order (A), (C1), (C2), (C3), envelopes.
    pub fn first_failure(&self) -> Option<(String, &Check)> {
        let groups: [(&str, &[Check; 2]); 5] = [
            ("A", &self.weights),
            ("C1", &self.c1),
            ("C2", &self.c2),
            ("C3", &self.c3),
            ("ineq", &self.ineq),
        ];
        for (name, checks) in groups {
            for (i, c) in checks.iter().enumerate() {
                if c.status == CheckStatus::Fail {
                    return Some((format!("{name} (equation {})", i + 1), c));
                }
            }
        }
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleBudget {
    /// Weights are sampled on `[0, weight_r_max]` (clipped to tabulated
    /// domains) plus log-spaced points up to `1e6`.
    pub weight_r_max: f64,
    pub weight_points: usize,
    pub c1_points: usize,
    pub t_points: usize,
    pub w_doublings: u32,
}

impl Default for SampleBudget {
    fn default() -> Self {
        SampleBudget {
            weight_r_max: 100.0,
            weight_points: 4097,
            c1_points: 256,
            t_points: 64,
            w_doublings: 10,
        }
    }
}

const REL_SLACK: f64 = 1e-12;

fn check_weight(w: &Weight, budget: &SampleBudget) -> Check {
    let end = w
        .domain_end()
        .map_or(budget.weight_r_max, |e| e.min(budget.weight_r_max));
    let mut rs: Vec<f64> = (0..budget.weight_points)
        .map(|k| end * k as f64 / (budget.weight_points - 1) as f64)
        .collect();
    if w.domain_end().is_none() {
        rs.extend(log_space(end, 1e6, 64));
    }
    let mut worst = 0.0f64;
    let mut detail = None;
    for r in rs {
        match w.eval(r) {
            Ok(a) if a < 0.0 => {
                if -a > worst {
                    worst = -a;
                    detail = Some(format!("a({r}) = {a} < 0"));
                }
            }
            Ok(_) => {}
            Err(e) => return Check::fail(format!("a({r}): {e}")),
        }
    }
    Check::from_worst(worst, detail)
}

fn check_c1(f: &ScalarFn, budget: &SampleBudget) -> Check {
    let mut ts = vec![0.0];
    ts.extend(log_space(1e-8, 1e8, budget.c1_points));
    let mut prev = f64::NEG_INFINITY;
    let mut worst = 0.0f64;
    let mut detail = None;
    for &t in &ts {
        let v = match f.eval(t) {
            Ok(v) => v,
            Err(e) => return Check::fail(format!("f({t}): {e}")),
        };
        if t == 0.0 && v < 0.0 {
            return Check::fail(format!("f(0) = {v} < 0"));
        }
        if t > 0.0 && !(v > 0.0) {
            return Check::fail(format!("f({t:e}) = {v} is not positive"));
        }
        if v < prev {
            let drop = (prev - v) / prev.abs().max(f64::MIN_POSITIVE);
            if drop > worst {
                worst = drop;
                detail = Some(format!("f decreases near t = {t:e} ({prev:e} -> {v:e})"));
            }
        }
        prev = v;
    }
    Check::from_worst(worst, detail)
}

fn w_samples(budget: &SampleBudget) -> Vec<f64> {
    (0..=budget.w_doublings).map(|k| 2f64.powi(k as i32)).collect()
}

fn check_c2(eq: &Equation, budget: &SampleBudget) -> Check {
    let Some(up) = &eq.upper else {
        return Check::unavailable("no upper growth envelope for this nonlinearity");
    };
    if !(up.c_bar > 0.0) {
        return Check::fail(format!("c̄ = {} must be positive", up.c_bar));
    }
    let t0 = eq.c2_threshold.max(THRESHOLD_FLOOR);
    let ts = log_space(t0, t0 * 1e8, budget.t_points);
    let mut worst = 0.0f64;
    let mut detail = None;
    for &t in &ts {
        let g = match up.g.eval(t) {
            Ok(g) => g,
            Err(e) => return Check::fail(format!("g({t:e}): {e}")),
        };
        for w in w_samples(budget) {
            let lhs = match eq.f.f.eval(t * w) {
                Ok(v) => v,
                Err(e) => return Check::fail(format!("f({:e}): {e}", t * w)),
            };
            let xi = match up.xi_bar.eval(w) {
                Ok(v) => v,
                Err(e) => return Check::fail(format!("ξ̄({w}): {e}")),
            };
            let rhs = up.c_bar * g * xi;
            if lhs.is_infinite() && rhs.is_infinite() {
                continue;
            }
            if lhs > rhs * (1.0 + REL_SLACK) {
                let v = if rhs > 0.0 { lhs / rhs - 1.0 } else { f64::INFINITY };
                if v > worst {
                    worst = v;
                    detail = Some(format!("f({t:e}·{w}) = {lhs:e} > c̄·g(t)·ξ̄(w) = {rhs:e}"));
                }
            }
        }
    }
    Check::from_worst(worst, detail)
}

fn check_c3(eq: &Equation, budget: &SampleBudget) -> Check {
    let Some(low) = &eq.lower else {
        return Check::unavailable("no lower growth envelope for this nonlinearity");
    };
    if !(low.c_under > 0.0) {
        return Check::fail(format!("c̲ = {} must be positive", low.c_under));
    }
    let mut worst = 0.0f64;
    let mut detail = None;
    for w in w_samples(budget) {
        let lhs = match eq.f.f.eval(eq.m_small * w) {
            Ok(v) => v,
            Err(e) => return Check::fail(format!("f(m·{w}): {e}")),
        };
        let rhs = match low.xi_under.eval(w) {
            Ok(v) => low.c_under * v,
            Err(e) => return Check::fail(format!("ξ̲({w}): {e}")),
        };
        if lhs * (1.0 + REL_SLACK) < rhs {
            let v = if lhs > 0.0 { rhs / lhs - 1.0 } else { f64::INFINITY };
            if v > worst {
                worst = v;
                detail = Some(format!("f(m·{w}) = {lhs:e} < c̲·ξ̲(w) = {rhs:e}"));
            }
        }
    }
    Check::from_worst(worst, detail)
}

/// Sampled checks of the weight, monotonicity and growth hypotheses. The
/// checks are heuristic: each quantifies over an unbounded range that is only
/// sampled.
pub fn check_hypotheses(spec: &ProblemSpec, budget: &SampleBudget) -> HypothesisReport {
    let each = |f: &dyn Fn(&Equation) -> Check| [f(&spec.eqs[0]), f(&spec.eqs[1])];
    let ineq = each(&|eq| match eq
        .env
        .verify(&eq.op, spec.validation.s_max, spec.validation.ineq_points)
    {
        Ok(()) => Check::pass(),
        Err(e) => Check::fail(e.to_string()),
    });
    let mut warnings = spec.warnings.clone();
    for (i, eq) in spec.eqs.iter().enumerate() {
        if eq.env.origin == EnvelopeOrigin::User {
            warnings.push(format!("equation {}: user-supplied envelope set", i + 1));
        }
    }
    HypothesisReport {
        weights: each(&|eq| check_weight(&eq.weight, budget)),
        c1: each(&|eq| check_c1(&eq.f.f, budget)),
        c2: each(&|eq| check_c2(eq, budget)),
        c3: each(&|eq| check_c3(eq, budget)),
        ineq,
        warnings,
    }
}
