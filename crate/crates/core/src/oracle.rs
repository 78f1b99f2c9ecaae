//! Independent reference results: the Lair criteria for power-law systems,
//! the Yang criterion for a single equation, and manufactured solutions.

use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::classifier::Truth;
use crate::expr::{EvalError, Expr};
use crate::func::{ScalarFn, Table};
use crate::model::{assemble, EquationInput, ModelError, Nonlinearity, ProblemInput, ProblemSpec, Weight};
use crate::operators::{OperatorError, PhiOperator, ValidationRange};
use crate::quadrature::{
    classify_trace, cumulative_integral, power_kernel, radial_kernel, GradedMesh, LimitKind, LimitVerdict,
    ProbeOptions, ProbeSchedule, QuadError, RadialGrid,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("exponents must be positive, got {0} and {1}")]
    Exponent(f64, f64),
    #[error("dimension N = {0} must be at least 3")]
    Dimension(u32),
    #[error("evaluation of {what} at r = {r}: {source}")]
    Eval {
        what: String,
        r: f64,
        #[source]
        source: EvalError,
    },
    #[error("operator: {0}")]
    Operator(#[from] OperatorError),
    #[error("f{index}(v*({r})) = {value} vanishes or is not finite")]
    VanishingNonlinearity { index: usize, r: f64, value: f64 },
    #[error("manufactured weight a{index}({r}) = {value} is negative")]
    NegativeWeight { index: usize, r: f64, value: f64 },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Quad(#[from] QuadError),
}

fn eval_at(f: &ScalarFn, r: f64, what: &str) -> Result<f64, OracleError> {
    f.eval_finite(r).map_err(|source| OracleError::Eval {
        what: what.into(),
        r,
        source,
    })
}

/// `Δu = a₁ v^α`, `Δv = a₂ u^β` in `ℝᴺ`.
#[derive(Debug, Clone)]
pub struct LairInstance {
    pub alpha_exp: f64,
    pub beta_exp: f64,
    pub a1: Weight,
    pub a2: Weight,
    pub n: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum LairExistence {
    /// Large solutions exist.
    Exists,
    /// No large solution (only decided when `αβ ≤ 1`).
    DoesNotExist,
    Unknown,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LairReport {
    /// `∫₀^∞ t a₁(t) (t^{2−N} ∫₀^t s^{N−3} Q(s) ds)^α dt`.
    pub integral_1: LimitVerdict,
    /// Same with `a₂`, `P`, `β`.
    pub integral_2: LimitVerdict,
    /// `∫₀^∞ r a₁(r) dr`.
    pub moment_1: LimitVerdict,
    pub moment_2: LimitVerdict,
    /// Integral 1 infinite.
    pub c1l: Truth,
    pub c2l: Truth,
    /// Integral 1 finite.
    pub c3l: Truth,
    pub c4l: Truth,
    /// Both moments infinite.
    pub l7: Truth,
    /// Both moments finite.
    pub l8: Truth,
    pub existence: LairExistence,
}

fn divergent(v: &LimitVerdict) -> Truth {
    match v.kind {
        LimitKind::Divergent { .. } => Truth::True,
        LimitKind::Finite { .. } => Truth::False,
        LimitKind::Indeterminate { .. } => Truth::Unknown,
    }
}

fn finite(v: &LimitVerdict) -> Truth {
    match divergent(v) {
        Truth::True => Truth::False,
        Truth::False => Truth::True,
        Truth::Unknown => Truth::Unknown,
    }
}

fn and(a: Truth, b: Truth) -> Truth {
    match (a, b) {
        (Truth::False, _) | (_, Truth::False) => Truth::False,
        (Truth::True, Truth::True) => Truth::True,
        _ => Truth::Unknown,
    }
}

fn or(a: Truth, b: Truth) -> Truth {
    match (a, b) {
        (Truth::True, _) | (_, Truth::True) => Truth::True,
        (Truth::False, Truth::False) => Truth::False,
        _ => Truth::Unknown,
    }
}

fn sample(w: &Weight, nodes: &[f64], what: &str) -> Result<Vec<f64>, OracleError> {
    nodes
        .iter()
        .map(|&r| {
            w.eval(r).map_err(|source| OracleError::Eval {
                what: what.into(),
                r,
                source,
            })
        })
        .collect()
}

/// Probe verdict of a prefix integral; a non-finite prefix is divergent.
fn verdict(values: Vec<f64>, nodes: &[f64], mesh: &GradedMesh, opts: &ProbeOptions) -> LimitVerdict {
    let k = values.iter().position(|x| !x.is_finite()).unwrap_or(values.len());
    let mut prefix = cumulative_integral(&values[..k], &nodes[..k]).expect("finite prefix");
    prefix.resize(values.len(), f64::INFINITY);
    classify_trace(mesh.probe_trace(&prefix), opts)
}

pub fn lair_criteria(
    inst: &LairInstance,
    schedule: &ProbeSchedule,
    opts: &ProbeOptions,
    cells_per_block: usize,
) -> Result<LairReport, OracleError> {
    if !(inst.alpha_exp > 0.0 && inst.beta_exp > 0.0) {
        return Err(OracleError::Exponent(inst.alpha_exp, inst.beta_exp));
    }
    if inst.n < 3 {
        return Err(OracleError::Dimension(inst.n));
    }
    let mesh = GradedMesh::new(0.0, *schedule, cells_per_block)?;
    let r = &mesh.nodes;
    let a1 = sample(&inst.a1, r, "a1")?;
    let a2 = sample(&inst.a2, r, "a2")?;
    let moment = |a: &[f64]| -> Vec<f64> { a.iter().zip(r).map(|(a, r)| a * r).collect() };
    let (ra1, ra2) = (moment(&a1), moment(&a2));
    let p = cumulative_integral(&ra1, r)?;
    let q = cumulative_integral(&ra2, r)?;
    // t^{2−N} ∫₀^t s^{N−3} Q(s) ds.
    let inner = |w: &[f64]| -> Result<Vec<f64>, OracleError> {
        let k = power_kernel(w, inst.n - 2, r)?;
        Ok(k.iter()
            .zip(r)
            .map(|(k, &t)| if t == 0.0 { 0.0 } else { k / t })
            .collect())
    };
    let (iq, ip) = (inner(&q)?, inner(&p)?);
    let outer = |ra: &[f64], inner: &[f64], e: f64| -> Vec<f64> {
        ra.iter()
            .zip(inner)
            .map(|(&x, &y)| if x == 0.0 { 0.0 } else { x * y.powf(e) })
            .collect()
    };
    let integral_1 = verdict(outer(&ra1, &iq, inst.alpha_exp), r, &mesh, opts);
    let integral_2 = verdict(outer(&ra2, &ip, inst.beta_exp), r, &mesh, opts);
    let moment_1 = verdict(ra1, r, &mesh, opts);
    let moment_2 = verdict(ra2, r, &mesh, opts);
    let c1l = divergent(&integral_1);
    let c2l = divergent(&integral_2);
    let c3l = finite(&integral_1);
    let c4l = finite(&integral_2);
    let existence = if inst.alpha_exp * inst.beta_exp <= 1.0 {
        match and(c1l, c2l) {
            Truth::True => LairExistence::Exists,
            Truth::False => LairExistence::DoesNotExist,
            Truth::Unknown => LairExistence::Unknown,
        }
    } else {
        match or(c3l, c4l) {
            Truth::True => LairExistence::Exists,
            _ => LairExistence::Unknown,
        }
    };
    Ok(LairReport {
        l7: and(divergent(&moment_1), divergent(&moment_2)),
        l8: and(finite(&moment_1), finite(&moment_2)),
        integral_1,
        integral_2,
        moment_1,
        moment_2,
        c1l,
        c2l,
        c3l,
        c4l,
        existence,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Solvability {
    Solvable,
    NotSolvable,
    Unknown,
    /// `∫₁^∞ 1/f` is finite, so the criterion does not apply.
    NotApplicable,
}

/// Comparison of the probed `𝒜` limit with `(1/(N−2)) ∫₀^∞ r a(r) dr`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct IdentityCheck {
    pub a_limit: f64,
    pub moment_formula: f64,
    pub relative_error: f64,
    pub passes: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct YangReport {
    /// `∫₁^∞ dt / f(t)`; the condition holds when it diverges.
    pub dy_integral: LimitVerdict,
    pub dy_holds: Truth,
    /// `lim 𝒜_a(t)`, `𝒜_a(t) = ∫₀^t s^{1−N} ∫₀^s z^{N−1} a(z) dz ds`.
    pub a_limit: LimitVerdict,
    /// `(1/(N−2)) ∫₀^∞ r a(r) dr`.
    pub moment_formula: LimitVerdict,
    pub identity: Option<IdentityCheck>,
    pub dye_solvable: Solvability,
}

/// Relative tolerance of the limit identity.
pub const YANG_IDENTITY_TOL: f64 = 1e-4;

pub fn yang_check(
    f: &Nonlinearity,
    a: &Weight,
    n: u32,
    schedule: &ProbeSchedule,
    opts: &ProbeOptions,
    cells_per_block: usize,
) -> Result<YangReport, OracleError> {
    if n < 3 {
        return Err(OracleError::Dimension(n));
    }
    let from_one = GradedMesh::new(1.0, *schedule, cells_per_block)?;
    let inv: Vec<f64> = from_one
        .nodes
        .iter()
        .map(|&t| match f.f.eval(t) {
            Ok(v) if v > 0.0 => Ok(1.0 / v),
            Ok(v) => Err(OracleError::VanishingNonlinearity {
                index: 1,
                r: t,
                value: v,
            }),
            Err(EvalError::Overflow(_)) => Ok(0.0),
            Err(source) => Err(OracleError::Eval {
                what: "f".into(),
                r: t,
                source,
            }),
        })
        .collect::<Result<_, _>>()?;
    let dy_integral = verdict(inv, &from_one.nodes, &from_one, opts);
    let dy_holds = divergent(&dy_integral);

    let mesh = GradedMesh::new(0.0, *schedule, cells_per_block)?;
    let r = &mesh.nodes;
    let w = sample(a, r, "a")?;
    let k = radial_kernel(&w, n, r)?;
    let a_limit = verdict(k, r, &mesh, opts);
    let scaled: Vec<f64> = w.iter().zip(r).map(|(a, r)| a * r / (n - 2) as f64).collect();
    let moment_formula = verdict(scaled, r, &mesh, opts);
    let identity = match (a_limit.finite_value(), moment_formula.finite_value()) {
        (Some((x, _)), Some((y, _))) => {
            let relative_error = if x == y {
                0.0
            } else {
                (x - y).abs() / x.abs().max(y.abs())
            };
            Some(IdentityCheck {
                a_limit: x,
                moment_formula: y,
                relative_error,
                passes: relative_error <= YANG_IDENTITY_TOL,
            })
        }
        _ => None,
    };
    let dye_solvable = match dy_holds {
        Truth::True => match divergent(&a_limit) {
            Truth::True => Solvability::Solvable,
            Truth::False => Solvability::NotSolvable,
            Truth::Unknown => Solvability::Unknown,
        },
        Truth::False => Solvability::NotApplicable,
        Truth::Unknown => Solvability::Unknown,
    };
    Ok(YangReport {
        dy_integral,
        dy_holds,
        a_limit,
        moment_formula,
        identity,
        dye_solvable,
    })
}

/// Finite-difference noise tolerated below zero in manufactured weights.
pub const NEGATIVE_WEIGHT_TOL: f64 = 1e-8;

/// `a(r) = (r^{N−1} h(x′))′ / (r^{N−1} f(y))` at the grid nodes, by central
/// differences with the grid step.
fn manufactured_weight(
    index: usize,
    x: &ScalarFn,
    y: &ScalarFn,
    op: &PhiOperator,
    f: &Nonlinearity,
    n: u32,
    grid: &RadialGrid,
) -> Result<Vec<f64>, OracleError> {
    let d = grid.step();
    let what = if index == 1 { "u*" } else { "v*" };
    // x is extended evenly to negative r.
    let xv = |r: f64| eval_at(x, r.abs(), what);
    let deriv = |r: f64| -> Result<f64, OracleError> { Ok((xv(r + d)? - xv(r - d)?) / (2.0 * d)) };
    let flux = |r: f64| -> Result<f64, OracleError> {
        if r == 0.0 {
            return Ok(0.0);
        }
        let s = deriv(r)?;
        let h = if s >= 0.0 { op.h_eval(s)? } else { -op.h_eval(-s)? };
        Ok(r.powi(n as i32 - 1) * h)
    };
    let mut out = Vec::with_capacity(grid.len());
    for &r in grid.nodes() {
        let fy =
            f.f.eval(eval_at(y, r, "counterpart")?)
                .map_err(|source| OracleError::Eval {
                    what: format!("f{index}"),
                    r,
                    source,
                })?;
        if !(fy > 0.0 && fy.is_finite()) {
            return Err(OracleError::VanishingNonlinearity { index, r, value: fy });
        }
        let lap = if r == 0.0 {
            n as f64 * op.h_eval(deriv(d)?.max(0.0))? / d
        } else {
            (flux(r + d)? - flux(r - d)?) / (2.0 * d) / r.powi(n as i32 - 1)
        };
        let a = lap / fy;
        if a < -NEGATIVE_WEIGHT_TOL {
            return Err(OracleError::NegativeWeight { index, r, value: a });
        }
        out.push(a.max(0.0));
    }
    Ok(out)
}

/// Weights for which `(u*, v*)` solves the system on `grid`, with
/// `α = u*(0)` and `β = v*(0)`.
#[allow(clippy::too_many_arguments)]
pub fn manufactured_problem(
    u_star: &Expr,
    v_star: &Expr,
    op1: Arc<PhiOperator>,
    op2: Arc<PhiOperator>,
    f1: Nonlinearity,
    f2: Nonlinearity,
    n: u32,
    grid: &RadialGrid,
) -> Result<ProblemSpec, OracleError> {
    if n < 3 {
        return Err(OracleError::Dimension(n));
    }
    let u = ScalarFn::Expr(u_star.clone());
    let v = ScalarFn::Expr(v_star.clone());
    let a1 = manufactured_weight(1, &u, &v, &op1, &f1, n, grid)?;
    let a2 = manufactured_weight(2, &v, &u, &op2, &f2, n, grid)?;
    let table = |values: Vec<f64>| {
        ScalarFn::Table(Arc::new(Table {
            step: grid.step(),
            values,
        }))
    };
    let alpha = eval_at(&u, 0.0, "u*")?;
    let beta = eval_at(&v, 0.0, "v*")?;
    let spec = assemble(ProblemInput {
        n,
        alpha,
        beta,
        eqs: [
            EquationInput::new(op1, Weight::new(table(a1), format!("manufactured from {u_star}")), f1),
            EquationInput::new(op2, Weight::new(table(a2), format!("manufactured from {v_star}")), f2),
        ],
        validation: ValidationRange::default(),
    })?;
    Ok(spec)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::iteration::{solve, SolveOptions};
    use crate::operators::PhiFamily;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn w(s: &str) -> Weight {
        Weight::from_expr(Expr::parse_plain(s).unwrap())
    }

    fn lap() -> Arc<PhiOperator> {
        Arc::new(PhiOperator::new(PhiFamily::Laplacian).unwrap())
    }

    fn lair(a1: &str, a2: &str) -> LairReport {
        let inst = LairInstance {
            alpha_exp: 1.0,
            beta_exp: 1.0,
            a1: w(a1),
            a2: w(a2),
            n: 3,
        };
        lair_criteria(&inst, &ProbeSchedule::default(), &ProbeOptions::default(), 1024).unwrap()
    }

    #[test]
    fn lair_constant_weights() {
        let rep = lair("1", "1");
        assert_eq!(rep.l7, Truth::True);
        assert_eq!(rep.c1l, Truth::True);
        assert_eq!(rep.c2l, Truth::True);
        assert_eq!(rep.existence, LairExistence::Exists);
    }

    #[test]
    fn lair_decaying_weights() {
        let rep = lair("(1+r)^(-4)", "(1+r)^(-4)");
        let (m, _) = rep.moment_1.finite_value().unwrap();
        assert_relative_eq!(m, 1.0 / 6.0, max_relative = 1e-5);
        assert_eq!(rep.l8, Truth::True);
        assert_eq!(rep.c3l, Truth::True);
        assert_eq!(rep.c4l, Truth::True);
        assert_eq!(rep.existence, LairExistence::DoesNotExist);
    }

    #[test]
    fn lair_zero_weights() {
        let rep = lair("0", "0");
        for v in [&rep.integral_1, &rep.integral_2, &rep.moment_1, &rep.moment_2] {
            assert_eq!(v.finite_value(), Some((0.0, 0.0)));
        }
    }

    #[test]
    fn lair_rejects_bad_exponent() {
        let inst = LairInstance {
            alpha_exp: 0.0,
            beta_exp: 1.0,
            a1: w("1"),
            a2: w("1"),
            n: 3,
        };
        assert!(lair_criteria(&inst, &ProbeSchedule::default(), &ProbeOptions::default(), 64).is_err());
    }

    fn yang(f: Nonlinearity, a: &str) -> YangReport {
        yang_check(&f, &w(a), 3, &ProbeSchedule::default(), &ProbeOptions::default(), 1024).unwrap()
    }

    #[test]
    fn yang_linear_f_satisfies_dy() {
        let rep = yang(Nonlinearity::identity(), "1");
        assert_eq!(rep.dy_holds, Truth::True);
        assert_eq!(rep.dye_solvable, Solvability::Solvable);
    }

    #[test]
    fn yang_square_f_fails_dy() {
        let rep = yang(Nonlinearity::power(2.0), "1");
        assert_eq!(rep.dy_holds, Truth::False);
        let (v, _) = rep.dy_integral.finite_value().unwrap();
        assert_relative_eq!(v, 1.0, max_relative = 1e-4);
        assert_eq!(rep.dye_solvable, Solvability::NotApplicable);
    }

    #[test]
    fn yang_identity() {
        let rep = yang(Nonlinearity::identity(), "(1+r^2)^(-2)");
        let id = rep.identity.unwrap();
        assert_relative_eq!(id.a_limit, 0.5, max_relative = 1e-4);
        assert!(id.passes, "{id:?}");
        assert_eq!(rep.dye_solvable, Solvability::NotSolvable);
    }

    #[test]
    fn manufactured_laplacian_weights() {
        let grid = RadialGrid::new(2.0, 1e-3).unwrap();
        let u = Expr::parse_plain("1+r^2").unwrap();
        let spec = manufactured_problem(
            &u,
            &u,
            lap(),
            lap(),
            Nonlinearity::identity(),
            Nonlinearity::identity(),
            3,
            &grid,
        )
        .unwrap();
        // Central differences of the flux carry a relative error of order (step/r)².
        for &r in grid.nodes().iter().skip(1).step_by(97) {
            let a = spec.eqs[0].weight.eval(r).unwrap();
            assert!((a - 6.0 / (1.0 + r * r)).abs() <= 3e-6 / (r * r), "a({r}) = {a}");
        }
        assert_relative_eq!(spec.eqs[0].weight.eval(0.0).unwrap(), 6.0, max_relative = 1e-5);
        let sol = solve(&spec, &grid, &SolveOptions::default()).unwrap();
        let err = sol
            .r
            .iter()
            .zip(&sol.u)
            .map(|(r, u)| (u - 1.0 - r * r).abs())
            .fold(0.0, f64::max);
        assert!(err <= 1e-4, "{err}");
    }

    #[test]
    fn manufactured_constant_is_zero_weight() {
        let grid = RadialGrid::new(1.0, 1e-2).unwrap();
        let c = Expr::parse_plain("2").unwrap();
        let spec = manufactured_problem(
            &c,
            &c,
            lap(),
            lap(),
            Nonlinearity::identity(),
            Nonlinearity::identity(),
            3,
            &grid,
        )
        .unwrap();
        assert!(grid.nodes().iter().all(|&r| spec.eqs[0].weight.eval(r).unwrap() == 0.0));
        assert_eq!(spec.alpha, 2.0);
    }

    #[test]
    fn manufactured_p_laplacian_weight() {
        let grid = RadialGrid::new(2.0, 1e-3).unwrap();
        let u = Expr::parse_plain("1+r^2").unwrap();
        let p3 = Arc::new(PhiOperator::new(PhiFamily::PLaplacian { p: 3.0 }).unwrap());
        let spec = manufactured_problem(
            &u,
            &u,
            p3,
            lap(),
            Nonlinearity::identity(),
            Nonlinearity::identity(),
            3,
            &grid,
        )
        .unwrap();
        for &r in grid.nodes().iter().skip(2).step_by(101) {
            let a = spec.eqs[0].weight.eval(r).unwrap();
            let want = 16.0 * r / (1.0 + r * r);
            assert!((a - want).abs() <= 2e-6 * want / (r * r), "a({r}) = {a}, want {want}");
        }
    }

    #[test]
    fn manufactured_decreasing_solution_is_rejected() {
        let grid = RadialGrid::new(1.0, 1e-2).unwrap();
        let u = Expr::parse_plain("2-r^2").unwrap();
        let e = manufactured_problem(
            &u,
            &u,
            lap(),
            lap(),
            Nonlinearity::identity(),
            Nonlinearity::identity(),
            3,
            &grid,
        );
        assert!(matches!(e, Err(OracleError::NegativeWeight { .. })), "{e:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(8))]
        #[test]
        fn manufactured_round_trip(c in 0.2f64..2.0, alpha in 0.5f64..2.0) {
            let grid = RadialGrid::new(2.0, 1e-3).unwrap();
            let mut p = std::collections::BTreeMap::new();
            p.insert("c".to_string(), c);
            p.insert("alpha".to_string(), alpha);
            let u = Expr::parse("alpha+c*r^2", &p).unwrap();
            let v = Expr::parse("alpha+c*r^4/4", &p).unwrap();
            let spec = manufactured_problem(&u, &v, lap(), lap(), Nonlinearity::identity(), Nonlinearity::power(0.5), 3, &grid).unwrap();
            let sol = solve(&spec, &grid, &SolveOptions::default()).unwrap();
            for (j, &r) in sol.r.iter().enumerate() {
                prop_assert!((sol.u[j] - u.eval(r).unwrap()).abs() <= 1e-4);
                prop_assert!((sol.v[j] - v.eval(r).unwrap()).abs() <= 1e-4);
            }
        }
    }
}
