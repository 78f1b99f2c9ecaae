//! The growth functionals `A̅`, `A̲`, `P̄`, `P̲`, `H` and `M⁺`, their limits
//! as `r → ∞`, and the pointwise solution bounds they imply.
//!
//! Side `i = 0` is the pair `1,2` (the `u` equation), side `i = 1` is `2,1`.
//!
//! ```text
//! A̅_j(t)  = ∫₀^t k̄_j ψ̄_j(K[a_j](s)) ds            (A̲ with k̲, ψ̲)
//! P̄_i(r)  = ∫₀^r ψ̄_i(c̄_i K[a_i ξ̄_i(1 + A̅_o)](y)) dy
//! P̲_i(r)  = ∫₀^r h_i⁻¹(c̲_i K[a_i ξ̲_i(1 + A̲_o)](y)) dy
//! H_i(r)  = ∫_{c_i}^r dt / θ̄_i(g_i(M_i θ̄_o(f_o(t))))
//! M⁺_i    = sup_t A̅_o(t)
//! ```
//!
//! where `o` is the other side and `c_i` the central value (`α` or `β`).
//! When `M⁺_i` is finite and positive the simplified pair
//! `P̄_i = ∫ ψ̄_i(K[a_i])` with `H_i` built from `f_i` instead of `g_i` and
//! `M′_i = max{M_i, bound_i·(1 + M⁺_i)}` replaces the upper condition.

use serde::Serialize;
use thiserror::Error;

use crate::expr::EvalError;
use crate::func::ScalarFn;
use crate::model::{Equation, ProblemSpec};
use crate::par;
use crate::quadrature::{
    classify_trace, cumulative_integral, radial_kernel, GaussLegendre, GradedMesh, LimitVerdict, ProbeOptions,
    ProbeSchedule, QuadError, RadialGrid,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CriteriaError {
    #[error("{0} is unavailable: {1}")]
    Unavailable(String, String),
    #[error("{0}: {1}")]
    Failed(String, String),
    #[error("H argument {x} lies below the anchor {anchor}")]
    BelowAnchor { x: f64, anchor: f64 },
    #[error("H value {y} is not reached below x = {x_cap:e}")]
    OutOfRange { y: f64, x_cap: f64 },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

/// Why a functional has no values.
#[derive(Debug, Clone, PartialEq)]
pub enum Missing {
    Unavailable(String),
    Failed(String),
}

pub type Values = Result<Vec<f64>, Missing>;

fn side_label(i: usize) -> &'static str {
    if i == 0 {
        "1,2"
    } else {
        "2,1"
    }
}

/// Apply a nondecreasing `f` elementwise. Non-finite inputs and overflow map
/// to `+∞`, so a functional that escapes to infinity stays there.
fn sat_map(xs: &[f64], f: &ScalarFn, scale: f64) -> Result<Vec<f64>, EvalError> {
    xs.iter()
        .map(|&x| {
            let y = scale * x;
            if !y.is_finite() {
                return Ok(f64::INFINITY);
            }
            match f.eval(y) {
                Ok(v) if v.is_nan() => Err(EvalError::Domain(format!("{f} at {y}"))),
                Ok(v) => Ok(v),
                Err(EvalError::Overflow(_)) => Ok(f64::INFINITY),
                Err(e) => Err(e),
            }
        })
        .collect()
}

fn first_non_finite(xs: &[f64]) -> usize {
    xs.iter().position(|x| !x.is_finite()).unwrap_or(xs.len())
}

fn sat_kernel(w: &[f64], n: u32, nodes: &[f64]) -> Vec<f64> {
    let k = first_non_finite(w);
    let mut out = if k == 0 {
        Vec::new()
    } else {
        radial_kernel(&w[..k], n, &nodes[..k]).expect("finite prefix")
    };
    out.resize(w.len(), f64::INFINITY);
    out
}

fn sat_cumulative(w: &[f64], nodes: &[f64]) -> Vec<f64> {
    let k = first_non_finite(w);
    let mut out = if k == 0 {
        Vec::new()
    } else {
        cumulative_integral(&w[..k], &nodes[..k]).expect("finite prefix")
    };
    out.resize(w.len(), f64::INFINITY);
    out
}

fn failed(what: impl Into<String>) -> impl FnOnce(EvalError) -> Missing {
    let what = what.into();
    move |e| Missing::Failed(format!("{what}: {e}"))
}

/// Every functional on one ascending node set starting at 0.
#[derive(Debug, Clone)]
pub struct FunctionalTable {
    pub nodes: Vec<f64>,
    /// `K[a_j]` at every node.
    pub kernel_a: [Values; 2],
    pub a_bar: [Values; 2],
    pub a_under: [Values; 2],
    pub p_bar: [Values; 2],
    pub p_under: [Values; 2],
    /// `∫₀^r ψ̄_i(K[a_i])`, the simplified upper functional.
    pub p_bar_simple: [Values; 2],
}

fn sample_weight(eq: &Equation, nodes: &[f64]) -> Values {
    nodes
        .iter()
        .map(|&r| eq.weight.eval(r))
        .collect::<Result<Vec<_>, _>>()
        .map_err(failed(format!("weight {}", eq.weight.label)))
}

fn scaled_integral(psi: &ScalarFn, k: f64, kernel: &[f64], nodes: &[f64], what: &str) -> Values {
    let inner = sat_map(kernel, psi, 1.0).map_err(failed(what))?;
    let scaled: Vec<f64> = inner.iter().map(|x| k * x).collect();
    Ok(sat_cumulative(&scaled, nodes))
}

/// `∫₀^r outer(c·K[a·ξ(1 + A)])`.
#[allow(clippy::too_many_arguments)]
fn nested(
    n: u32,
    nodes: &[f64],
    a: &[f64],
    xi: &ScalarFn,
    other_a: &[f64],
    c: f64,
    outer: &ScalarFn,
    what: &str,
) -> Values {
    let shifted: Vec<f64> = other_a.iter().map(|x| 1.0 + x).collect();
    let xi_vals = sat_map(&shifted, xi, 1.0).map_err(failed(format!("{what} ξ")))?;
    let w: Vec<f64> = a
        .iter()
        .zip(&xi_vals)
        .map(|(&ai, &x)| if ai == 0.0 { 0.0 } else { ai * x })
        .collect();
    let k = sat_kernel(&w, n, nodes);
    let d = sat_map(&k, outer, c).map_err(failed(format!("{what} outer")))?;
    Ok(sat_cumulative(&d, nodes))
}

fn with<T>(
    a: &Result<Vec<f64>, Missing>,
    b: &Result<Vec<f64>, Missing>,
    f: impl FnOnce(&[f64], &[f64]) -> Result<T, Missing>,
) -> Result<T, Missing> {
    match (a, b) {
        (Ok(x), Ok(y)) => f(x, y),
        (Err(e), _) | (_, Err(e)) => Err(e.clone()),
    }
}

impl FunctionalTable {
    pub fn compute(spec: &ProblemSpec, nodes: &[f64]) -> FunctionalTable {
        let n = spec.n;
        let weights = [sample_weight(&spec.eqs[0], nodes), sample_weight(&spec.eqs[1], nodes)];
        let kernel_a: [Values; 2] = [0, 1].map(|j| {
            weights[j]
                .as_ref()
                .map(|w| sat_kernel(w, n, nodes))
                .map_err(Clone::clone)
        });
        let env_integral = |j: usize, under: bool| -> Values {
            let env = &spec.eqs[j].env;
            let (psi, k) = if under {
                (&env.psi_under, env.k_under)
            } else {
                (&env.psi_bar, env.k_bar)
            };
            let what = format!("A{}{}", if under { "_under" } else { "_bar" }, j + 1);
            match &kernel_a[j] {
                Ok(ka) => scaled_integral(psi, k, ka, nodes, &what),
                Err(e) => Err(e.clone()),
            }
        };
        let a_bar = [env_integral(0, false), env_integral(1, false)];
        let a_under = [env_integral(0, true), env_integral(1, true)];

        let side = |i: usize| -> (Values, Values, Values) {
            let eq = &spec.eqs[i];
            let o = 1 - i;
            let label = side_label(i);
            let p_bar = match &eq.upper {
                None => Err(Missing::Unavailable(
                    "no upper growth envelope for this nonlinearity".into(),
                )),
                Some(up) => with(&weights[i], &a_bar[o], |a, other| {
                    nested(
                        n,
                        nodes,
                        a,
                        &up.xi_bar,
                        other,
                        up.c_bar,
                        &eq.env.psi_bar,
                        &format!("P_bar{label}"),
                    )
                }),
            };
            let p_under = match &eq.lower {
                None => Err(Missing::Unavailable(
                    "no lower growth envelope for this nonlinearity".into(),
                )),
                Some(low) => with(&weights[i], &a_under[o], |a, other| {
                    let h_inv = ScalarFn::HInverse(eq.op.clone());
                    nested(
                        n,
                        nodes,
                        a,
                        &low.xi_under,
                        other,
                        low.c_under,
                        &h_inv,
                        &format!("P_under{label}"),
                    )
                }),
            };
            let p_simple = match &kernel_a[i] {
                Ok(ka) => scaled_integral(&eq.env.psi_bar, 1.0, ka, nodes, &format!("P_bar{label} simplified")),
                Err(e) => Err(e.clone()),
            };
            (p_bar, p_under, p_simple)
        };
        let ((pb0, pu0, ps0), (pb1, pu1, ps1)) = par::join(|| side(0), || side(1));
        FunctionalTable {
            nodes: nodes.to_vec(),
            kernel_a,
            a_bar,
            a_under,
            p_bar: [pb0, pb1],
            p_under: [pu0, pu1],
            p_bar_simple: [ps0, ps1],
        }
    }
}

/// The integrand `1/θ̄_i(outer(M·θ̄_o(f_o(t))))` of `H_i`.
#[derive(Debug, Clone)]
pub struct HIntegrand {
    pub theta_i: ScalarFn,
    pub outer: ScalarFn,
    pub m: f64,
    pub theta_o: ScalarFn,
    pub f_o: ScalarFn,
}

impl HIntegrand {
    /// Standard integrand, `outer = g_i`. `None` without upper data.
    pub fn standard(spec: &ProblemSpec, i: usize) -> Option<HIntegrand> {
        let eq = &spec.eqs[i];
        let o = &spec.eqs[1 - i];
        eq.upper.as_ref().map(|up| HIntegrand {
            theta_i: eq.env.theta_bar.clone(),
            outer: up.g.clone(),
            m: eq.m_big,
            theta_o: o.env.theta_bar.clone(),
            f_o: o.f.f.clone(),
        })
    }

    /// Simplified integrand, `outer = f_i`, with the constant `m_prime`.
    pub fn simplified(spec: &ProblemSpec, i: usize, m_prime: f64) -> HIntegrand {
        let eq = &spec.eqs[i];
        let o = &spec.eqs[1 - i];
        HIntegrand {
            theta_i: eq.env.theta_bar.clone(),
            outer: eq.f.f.clone(),
            m: m_prime,
            theta_o: o.env.theta_bar.clone(),
            f_o: o.f.f.clone(),
        }
    }

    pub fn eval(&self, t: f64) -> Result<f64, CriteriaError> {
        let fail = |e: EvalError| CriteriaError::Failed("H integrand".into(), format!("t = {t}: {e}"));
        let chain = [&self.f_o, &self.theta_o];
        let mut x = t;
        for f in chain {
            x = if x.is_finite() {
                f.eval(x).map_err(fail)?
            } else {
                f64::INFINITY
            };
        }
        x *= self.m;
        for f in [&self.outer, &self.theta_i] {
            x = if x.is_finite() {
                f.eval(x).map_err(fail)?
            } else {
                f64::INFINITY
            };
        }
        let v = 1.0 / x;
        if !v.is_finite() || v.is_nan() {
            return Err(CriteriaError::Failed(
                "H integrand".into(),
                format!("non-finite at t = {t} (denominator {x:e})"),
            ));
        }
        Ok(v)
    }
}

/// `H(x) = ∫_{anchor}^x integrand`, tabulated on geometrically widening
/// cells with 5-point Gauss–Legendre per cell, extended on demand.
#[derive(Debug, Clone)]
pub struct HFunction {
    integrand: HIntegrand,
    anchor: f64,
    h0: f64,
    edges: Vec<f64>,
    cum: Vec<f64>,
    rule: GaussLegendre,
}

/// Largest abscissa an `HFunction` is extended to.
pub const H_X_CAP: f64 = 1e15;

impl HFunction {
    pub fn new(integrand: HIntegrand, anchor: f64) -> HFunction {
        HFunction {
            integrand,
            anchor,
            h0: 1e-4 * anchor.max(1.0),
            edges: vec![anchor],
            cum: vec![0.0],
            rule: GaussLegendre::new(5),
        }
    }

    pub fn anchor(&self) -> f64 {
        self.anchor
    }

    fn cell(&self, a: f64, b: f64) -> Result<f64, CriteriaError> {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut s = 0.0;
        for (x, w) in self.rule.nodes.iter().zip(&self.rule.weights) {
            s += w * self.integrand.eval(mid + half * x)?;
        }
        Ok(s * half)
    }

    fn ensure(&mut self, x: f64) -> Result<(), CriteriaError> {
        if x > H_X_CAP {
            return Err(CriteriaError::OutOfRange {
                y: f64::NAN,
                x_cap: H_X_CAP,
            });
        }
        while *self.edges.last().expect("nonempty") < x {
            let a = *self.edges.last().expect("nonempty");
            let b = a + self.h0.max(1e-3 * (a - self.anchor));
            let c = self.cell(a, b)?;
            let total = self.cum.last().expect("nonempty") + c;
            self.edges.push(b);
            self.cum.push(total);
        }
        Ok(())
    }

    pub fn eval(&mut self, x: f64) -> Result<f64, CriteriaError> {
        if x < self.anchor {
            return Err(CriteriaError::BelowAnchor { x, anchor: self.anchor });
        }
        self.ensure(x)?;
        let k = self.edges.partition_point(|&e| e <= x).saturating_sub(1);
        let a = self.edges[k];
        if x == a {
            return Ok(self.cum[k]);
        }
        Ok(self.cum[k] + self.cell(a, x)?)
    }

    /// `H′(x)` (the integrand).
    pub fn derivative(&self, x: f64) -> Result<f64, CriteriaError> {
        self.integrand.eval(x)
    }

    /// The `x ≥ anchor` with `H(x) = y`, by bisection on the monotone `H`.
    pub fn inverse(&mut self, y: f64) -> Result<f64, CriteriaError> {
        if !(y >= 0.0) {
            return Err(CriteriaError::Failed("H inverse".into(), format!("argument {y}")));
        }
        if y == 0.0 {
            return Ok(self.anchor);
        }
        let mut hi = self.anchor + self.h0.max(1.0);
        while self.eval(hi)? < y {
            let next = self.anchor + 2.0 * (hi - self.anchor);
            if next > H_X_CAP {
                return Err(CriteriaError::OutOfRange { y, x_cap: H_X_CAP });
            }
            hi = next;
        }
        let mut lo = self.anchor;
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
                break;
            }
            if self.eval(mid)? < y {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CriteriaOptions {
    pub schedule: ProbeSchedule,
    pub probe: ProbeOptions,
    pub cells_per_block: usize,
}

impl Default for CriteriaOptions {
    fn default() -> Self {
        CriteriaOptions {
            schedule: ProbeSchedule::default(),
            probe: ProbeOptions::default(),
            cells_per_block: 1024,
        }
    }
}

/// One functional limit: a probe verdict, or why there is none.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum Entry {
    Computed(LimitVerdict),
    Unavailable { reason: String },
    Failed { error: String },
}

impl Entry {
    pub fn verdict(&self) -> Option<&LimitVerdict> {
        match self {
            Entry::Computed(v) => Some(v),
            _ => None,
        }
    }

    fn from_values(values: &Values, mesh: &GradedMesh, opts: &ProbeOptions) -> Entry {
        match values {
            Ok(v) => Entry::Computed(classify_trace(mesh.probe_trace(v), opts)),
            Err(Missing::Unavailable(reason)) => Entry::Unavailable { reason: reason.clone() },
            Err(Missing::Failed(error)) => Entry::Failed { error: error.clone() },
        }
    }
}

/// Probe `H(anchor + R_k)`; a failing evaluation ends the trace.
fn probe_h(h: &mut HFunction, opts: &CriteriaOptions) -> Entry {
    let mut probes = Vec::new();
    for r in opts.schedule.radii() {
        match h.eval(h.anchor() + r) {
            Ok(v) => probes.push((r, v)),
            Err(e @ CriteriaError::Failed(..)) if probes.is_empty() => return Entry::Failed { error: e.to_string() },
            Err(e) => {
                return Entry::Computed(LimitVerdict {
                    kind: crate::quadrature::LimitKind::Divergent {
                        note: format!("evaluation failed at R = {r}: {e}"),
                    },
                    probes,
                })
            }
        }
    }
    Entry::Computed(classify_trace(probes, &opts.probe))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimplifiedSide {
    pub m_prime: f64,
    pub h: Entry,
    pub p_bar: Entry,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SideReport {
    pub pair: String,
    pub anchor: f64,
    pub k_bar: f64,
    pub m_big: f64,
    pub p_bar: Entry,
    pub p_under: Entry,
    pub h: Entry,
    pub m_plus: Entry,
    /// Present when `M⁺` is finite and positive.
    pub simplified: Option<SimplifiedSide>,
}

impl SideReport {
    /// `(H, P̄, simplified?)` used for classification.
    pub fn effective_upper(&self) -> (&Entry, &Entry, bool) {
        match &self.simplified {
            Some(s) => (&s.h, &s.p_bar, true),
            None => (&self.h, &self.p_bar, false),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CriteriaReport {
    pub n: u32,
    pub a_anchor: f64,
    pub b_anchor: f64,
    pub options: CriteriaOptions,
    pub sides: [SideReport; 2],
}

impl CriteriaReport {
    /// `M′_i` for each side whose simplified pair is in use.
    pub fn simplified_constants(&self) -> [Option<f64>; 2] {
        [0, 1].map(|i| self.sides[i].simplified.as_ref().map(|s| s.m_prime))
    }
}

/// `M′ = max{M, bound·(1 + M⁺ + error)}` when `M⁺` is finite and positive.
pub fn simplified_constant(eq: &Equation, m_plus: &Entry) -> Option<f64> {
    let (value, error) = m_plus.verdict()?.finite_value()?;
    if value > 0.0 {
        Some(eq.m_big.max(eq.m_big_bound * (1.0 + value + error)))
    } else {
        None
    }
}

/// Probe every functional limit.
pub fn build_report(spec: &ProblemSpec, opts: &CriteriaOptions) -> Result<CriteriaReport, CriteriaError> {
    let mesh = GradedMesh::new(0.0, opts.schedule, opts.cells_per_block)?;
    let table = FunctionalTable::compute(spec, &mesh.nodes);
    let side = |i: usize| -> SideReport {
        let eq = &spec.eqs[i];
        let o = 1 - i;
        let m_plus = Entry::from_values(&table.a_bar[o], &mesh, &opts.probe);
        let h = match HIntegrand::standard(spec, i) {
            Some(integrand) => probe_h(&mut HFunction::new(integrand, spec.center(i)), opts),
            None => Entry::Unavailable {
                reason: "no upper growth envelope for this nonlinearity".into(),
            },
        };
        let simplified = simplified_constant(eq, &m_plus).map(|m_prime| {
            let integrand = HIntegrand::simplified(spec, i, m_prime);
            SimplifiedSide {
                m_prime,
                h: probe_h(&mut HFunction::new(integrand, spec.center(i)), opts),
                p_bar: Entry::from_values(&table.p_bar_simple[i], &mesh, &opts.probe),
            }
        });
        SideReport {
            pair: side_label(i).to_string(),
            anchor: spec.center(i),
            k_bar: eq.env.k_bar,
            m_big: eq.m_big,
            p_bar: Entry::from_values(&table.p_bar[i], &mesh, &opts.probe),
            p_under: Entry::from_values(&table.p_under[i], &mesh, &opts.probe),
            h,
            m_plus,
            simplified,
        }
    };
    let (s0, s1) = par::join(|| side(0), || side(1));
    Ok(CriteriaReport {
        n: spec.n,
        a_anchor: spec.alpha,
        b_anchor: spec.beta,
        options: *opts,
        sides: [s0, s1],
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Bar,
    Under,
}

fn point_value(values: &Values, what: &str) -> Result<f64, CriteriaError> {
    match values {
        Ok(v) => Ok(*v.last().expect("nonempty grid")),
        Err(Missing::Unavailable(r)) => Err(CriteriaError::Unavailable(what.into(), r.clone())),
        Err(Missing::Failed(e)) => Err(CriteriaError::Failed(what.into(), e.clone())),
    }
}

fn table_to(spec: &ProblemSpec, t: f64, step: f64) -> Result<Option<FunctionalTable>, CriteriaError> {
    if t == 0.0 {
        return Ok(None);
    }
    let grid = RadialGrid::new(t, step)?;
    Ok(Some(FunctionalTable::compute(spec, grid.nodes())))
}

/// `A̅_j(t)` or `A̲_j(t)` on a uniform grid of spacing `≤ step`.
pub fn eval_a(spec: &ProblemSpec, j: usize, variant: Variant, t: f64, step: f64) -> Result<f64, CriteriaError> {
    match table_to(spec, t, step)? {
        None => Ok(0.0),
        Some(tab) => match variant {
            Variant::Bar => point_value(&tab.a_bar[j], "A_bar"),
            Variant::Under => point_value(&tab.a_under[j], "A_under"),
        },
    }
}

/// `P̄_i(r)` or `P̲_i(r)` on a uniform grid of spacing `≤ step`.
pub fn eval_p(spec: &ProblemSpec, i: usize, variant: Variant, r: f64, step: f64) -> Result<f64, CriteriaError> {
    match table_to(spec, r, step)? {
        None => Ok(0.0),
        Some(tab) => match variant {
            Variant::Bar => point_value(&tab.p_bar[i], "P_bar"),
            Variant::Under => point_value(&tab.p_under[i], "P_under"),
        },
    }
}

/// `H_i` with the standard integrand, anchored at the central value.
pub fn h_function(spec: &ProblemSpec, i: usize) -> Result<HFunction, CriteriaError> {
    let integrand = HIntegrand::standard(spec, i)
        .ok_or_else(|| CriteriaError::Unavailable(format!("H{}", side_label(i)), "no upper growth envelope".into()))?;
    Ok(HFunction::new(integrand, spec.center(i)))
}

/// Limit of `A̅_o` for side `i`.
pub fn eval_m_plus(spec: &ProblemSpec, i: usize, opts: &CriteriaOptions) -> Result<Entry, CriteriaError> {
    let mesh = GradedMesh::new(0.0, opts.schedule, opts.cells_per_block)?;
    let table = FunctionalTable::compute(spec, &mesh.nodes);
    Ok(Entry::from_values(&table.a_bar[1 - i], &mesh, &opts.probe))
}

/// Result of a pointwise bound check over a grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BoundCheck {
    pub holds: bool,
    /// Largest amount by which the bound is exceeded (≤ 0 when it holds).
    pub worst_excess: f64,
    pub at_radius: f64,
}

/// Pointwise solution bounds on a fixed grid:
/// `c_i + P̲_i(r) ≤ u_i(r)` and `H_i(u_i(r)) ≤ k̄_i P̄_i(r)`.
#[derive(Debug, Clone)]
pub struct Sandwich {
    pub nodes: Vec<f64>,
    pub centers: [f64; 2],
    pub k_bar: [f64; 2],
    pub p_bar: [Option<Vec<f64>>; 2],
    pub p_under: [Option<Vec<f64>>; 2],
    pub h: [Option<HFunction>; 2],
}

impl Sandwich {
    /// `simplified[i] = Some(M′)` selects the simplified upper pair for side `i`.
    pub fn new(spec: &ProblemSpec, nodes: &[f64], simplified: [Option<f64>; 2]) -> Sandwich {
        let table = FunctionalTable::compute(spec, nodes);
        let mut p_bar = [None, None];
        let mut h = [None, None];
        for i in 0..2 {
            match simplified[i] {
                Some(m_prime) => {
                    p_bar[i] = table.p_bar_simple[i].clone().ok();
                    h[i] = Some(HFunction::new(HIntegrand::simplified(spec, i, m_prime), spec.center(i)));
                }
                None => {
                    p_bar[i] = table.p_bar[i].clone().ok();
                    h[i] = HIntegrand::standard(spec, i).map(|g| HFunction::new(g, spec.center(i)));
                }
            }
            if p_bar[i].is_none() {
                h[i] = None;
            }
        }
        Sandwich {
            nodes: nodes.to_vec(),
            centers: [spec.alpha, spec.beta],
            k_bar: [spec.eqs[0].env.k_bar, spec.eqs[1].env.k_bar],
            p_under: [table.p_under[0].clone().ok(), table.p_under[1].clone().ok()],
            p_bar,
            h,
        }
    }

    /// `u(r) ≤ H⁻¹(k̄P̄(r)) + tol`, checked as `H(max(u − tol, c)) ≤ k̄P̄(r)`.
    pub fn check_upper(&mut self, i: usize, x: &[f64], tol: f64) -> Option<Result<BoundCheck, CriteriaError>> {
        let p = self.p_bar[i].as_ref()?;
        let k_bar = self.k_bar[i];
        let c = self.centers[i];
        let h = self.h[i].as_mut()?;
        let mut worst = f64::NEG_INFINITY;
        let mut at = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            let rhs = k_bar * p[j];
            if rhs.is_infinite() {
                continue;
            }
            let lhs = match h.eval((xj - tol).max(c)) {
                Ok(v) => v,
                Err(e) => return Some(Err(e)),
            };
            let excess = lhs - rhs * (1.0 + 1e-12);
            if excess > worst {
                worst = excess;
                at = self.nodes[j];
            }
        }
        Some(Ok(BoundCheck {
            holds: worst <= 0.0,
            worst_excess: worst,
            at_radius: at,
        }))
    }

    /// `u(r) ≥ c + P̲(r) − tol`.
    pub fn check_lower(&self, i: usize, x: &[f64], tol: f64) -> Option<BoundCheck> {
        let p = self.p_under[i].as_ref()?;
        let c = self.centers[i];
        let mut worst = f64::NEG_INFINITY;
        let mut at = 0.0;
        for (j, &xj) in x.iter().enumerate() {
            let excess = c + p[j] - tol - xj;
            if excess > worst {
                worst = excess;
                at = self.nodes[j];
            }
        }
        Some(BoundCheck {
            holds: worst <= 0.0,
            worst_excess: worst,
            at_radius: at,
        })
    }

    /// `H⁻¹(k̄P̄(r))` at every node; `None` where `k̄P̄(r)` is beyond the
    /// range of `H`.
    pub fn upper_curve(&mut self, i: usize) -> Option<Vec<Option<f64>>> {
        let p = self.p_bar[i].clone()?;
        let k_bar = self.k_bar[i];
        let h = self.h[i].as_mut()?;
        Some(p.iter().map(|&y| h.inverse(k_bar * y).ok()).collect())
    }
}
