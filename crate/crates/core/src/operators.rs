//! φ-Laplacian operators: catalog families, the flux map `h(t) = t·φ(t)`,
//! its inverse, and the envelope functions bracketing `h⁻¹(s₁s₂)`.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::Serialize;
use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::func::ScalarFn;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OperatorError {
    #[error("{family}: {message}")]
    Param { family: String, message: String },
    #[error("unknown operator family `{0}`")]
    UnknownFamily(String),
    #[error("operator validation failed: {0}")]
    Validation(String),
    #[error("h is not onto the needed range: no t ≤ 1e300 with h(t) ≥ {s:e}")]
    NotSurjective { s: f64 },
    #[error("h({t:e}) is not finite")]
    NonFinite { t: f64 },
    #[error("invalid argument {0} (must be finite and nonnegative)")]
    Argument(f64),
    #[error("growth exponents: {0}")]
    Growth(String),
    #[error("envelope inequality violated at s1 = {s1:e}, s2 = {s2:e}: {lhs:e} > {rhs:e} ({side} side)")]
    Ineq {
        s1: f64,
        s2: f64,
        lhs: f64,
        rhs: f64,
        side: &'static str,
    },
    #[error(transparent)]
    Eval(#[from] EvalError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PhiFamily {
    Laplacian,
    PLaplacian {
        p: f64,
    },
    Plasma {
        p: f64,
        q: f64,
    },
    Elasticity {
        p: f64,
    },
    Plasticity {
        p: f64,
        q: f64,
    },
    Newtonian {
        p: f64,
        q: f64,
    },
    /// `φ` given as an expression in `t`.
    Custom(Expr),
}

impl PhiFamily {
    /// Build a family from its catalog name and parameter map. `custom`
    /// expects the expression source in `expr`; `params` are then available
    /// inside it as named constants.
    pub fn from_name(
        name: &str,
        params: &BTreeMap<String, f64>,
        expr: Option<&str>,
    ) -> Result<PhiFamily, OperatorError> {
        let get = |key: &str| {
            params.get(key).copied().ok_or_else(|| OperatorError::Param {
                family: name.to_string(),
                message: format!("missing parameter `{key}`"),
            })
        };
        Ok(match name {
            "laplacian" => PhiFamily::Laplacian,
            "p_laplacian" => PhiFamily::PLaplacian { p: get("p")? },
            "plasma" => PhiFamily::Plasma {
                p: get("p")?,
                q: get("q")?,
            },
            "elasticity" => PhiFamily::Elasticity { p: get("p")? },
            "plasticity" => PhiFamily::Plasticity {
                p: get("p")?,
                q: get("q")?,
            },
            "newtonian" => PhiFamily::Newtonian {
                p: get("p")?,
                q: get("q")?,
            },
            "custom" => {
                let src = expr.ok_or_else(|| OperatorError::Param {
                    family: "custom".into(),
                    message: "missing `expr`".into(),
                })?;
                let e = Expr::parse(src, params).map_err(|e| OperatorError::Param {
                    family: "custom".into(),
                    message: e.to_string(),
                })?;
                PhiFamily::Custom(e)
            }
            other => return Err(OperatorError::UnknownFamily(other.to_string())),
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            PhiFamily::Laplacian => "laplacian",
            PhiFamily::PLaplacian { .. } => "p_laplacian",
            PhiFamily::Plasma { .. } => "plasma",
            PhiFamily::Elasticity { .. } => "elasticity",
            PhiFamily::Plasticity { .. } => "plasticity",
            PhiFamily::Newtonian { .. } => "newtonian",
            PhiFamily::Custom(_) => "custom",
        }
    }

    fn check_params(&self) -> Result<(), OperatorError> {
        let bad = |message: &str| {
            Err(OperatorError::Param {
                family: self.to_string(),
                message: message.to_string(),
            })
        };
        let finite = |xs: &[f64]| xs.iter().all(|x| x.is_finite());
        match *self {
            PhiFamily::Laplacian | PhiFamily::Custom(_) => Ok(()),
            PhiFamily::PLaplacian { p } => {
                if finite(&[p]) && p > 1.0 {
                    Ok(())
                } else {
                    bad("requires p > 1")
                }
            }
            PhiFamily::Plasma { p, q } => {
                if finite(&[p, q]) && 1.0 < p && p < q {
                    Ok(())
                } else {
                    bad("requires 1 < p < q")
                }
            }
            PhiFamily::Elasticity { p } => {
                if finite(&[p]) && p > 0.5 {
                    Ok(())
                } else {
                    bad("requires p > 1/2")
                }
            }
            PhiFamily::Plasticity { p, q } => {
                if finite(&[p, q]) && p > 1.0 && q > 0.0 {
                    Ok(())
                } else {
                    bad("requires p > 1 and q > 0")
                }
            }
            PhiFamily::Newtonian { p, q } => {
                if finite(&[p, q]) && (0.0..=1.0).contains(&p) && q > 0.0 {
                    Ok(())
                } else {
                    bad("requires 0 <= p <= 1 and q > 0")
                }
            }
        }
    }

    /// Limits of the log-slope `t·h′(t)/h(t)` as `t → 0⁺` and `t → ∞`.
    fn slope_limits(&self) -> Option<(f64, f64)> {
        match *self {
            PhiFamily::Laplacian => Some((1.0, 1.0)),
            PhiFamily::PLaplacian { p } => Some((p - 1.0, p - 1.0)),
            PhiFamily::Plasma { p, q } => Some((p - 1.0, q - 1.0)),
            PhiFamily::Elasticity { p } => Some((1.0, 2.0 * p - 1.0)),
            PhiFamily::Plasticity { p, q } => Some((p + q - 1.0, p - 1.0)),
            PhiFamily::Newtonian { p, q } => Some((1.0 + q - p, 1.0 - p)),
            PhiFamily::Custom(_) => None,
        }
    }
}

impl fmt::Display for PhiFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PhiFamily::Laplacian => f.write_str("laplacian"),
            PhiFamily::PLaplacian { p } => write!(f, "p_laplacian(p={p})"),
            PhiFamily::Plasma { p, q } => write!(f, "plasma(p={p}, q={q})"),
            PhiFamily::Elasticity { p } => write!(f, "elasticity(p={p})"),
            PhiFamily::Plasticity { p, q } => write!(f, "plasticity(p={p}, q={q})"),
            PhiFamily::Newtonian { p, q } => write!(f, "newtonian(p={p}, q={q})"),
            PhiFamily::Custom(e) => write!(f, "custom({e})"),
        }
    }
}

/// Log-spaced sample points used for validation and exponent estimation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ValidationRange {
    pub t_min: f64,
    pub t_max: f64,
    pub points: usize,
    /// Upper end `S` of the `(s₁, s₂)` box on which the envelope inequality
    /// is sampled; the box is `[S·1e-6, S]²`.
    pub s_max: f64,
    pub ineq_points: usize,
}

impl Default for ValidationRange {
    fn default() -> Self {
        ValidationRange {
            t_min: 1e-8,
            t_max: 1e8,
            points: 512,
            s_max: 1e3,
            ineq_points: 64,
        }
    }
}

pub fn log_space(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| {
            if i == n - 1 {
                hi
            } else {
                (a + (b - a) * i as f64 / (n - 1) as f64).exp()
            }
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct PhiOperator {
    family: PhiFamily,
}

impl PhiOperator {
    /// Check parameters and run the sampled validation on the default range.
    pub fn new(family: PhiFamily) -> Result<PhiOperator, OperatorError> {
        family.check_params()?;
        let op = PhiOperator { family };
        op.validate(&ValidationRange::default())?;
        Ok(op)
    }

    pub fn family(&self) -> &PhiFamily {
        &self.family
    }

    pub fn has_analytic_inverse(&self) -> bool {
        match self.family {
            PhiFamily::Laplacian | PhiFamily::PLaplacian { .. } => true,
            PhiFamily::Plasma { p, q } => plasma_quadratic(p, q),
            PhiFamily::Elasticity { p } => p == 1.0,
            _ => false,
        }
    }

    /// `φ(t)` for `t > 0`.
    pub fn phi(&self, t: f64) -> Result<f64, OperatorError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(OperatorError::Argument(t));
        }
        match &self.family {
            PhiFamily::Custom(e) => Ok(e.eval(t)?),
            _ => Ok(self.h_eval(t)? / t),
        }
    }

    /// `h(t) = t·φ(t)`, with `h(0) = 0`.
    pub fn h_eval(&self, t: f64) -> Result<f64, OperatorError> {
        if !(t >= 0.0) || t.is_nan() {
            return Err(OperatorError::Argument(t));
        }
        if t == 0.0 {
            return Ok(0.0);
        }
        let h = match self.family {
            PhiFamily::Laplacian => t,
            PhiFamily::PLaplacian { p } => t.powf(p - 1.0),
            PhiFamily::Plasma { p, q } => t.powf(p - 1.0) + t.powf(q - 1.0),
            PhiFamily::Elasticity { p } => 2.0 * p * t * (1.0 + t * t).powf(p - 1.0),
            PhiFamily::Plasticity { p, q } => {
                let l = t.ln_1p();
                p * t.powf(p - 1.0) * l.powf(q) + q * t.powf(p) * l.powf(q - 1.0) / (1.0 + t)
            }
            PhiFamily::Newtonian { p, q } => t.powf(1.0 - p) * t.asinh().powf(q),
            PhiFamily::Custom(ref e) => t * e.eval(t)?,
        };
        if h.is_finite() {
            Ok(h)
        } else {
            Err(OperatorError::NonFinite { t })
        }
    }

    /// The unique `t ≥ 0` with `h(t) = s`.
    pub fn h_inverse(&self, s: f64) -> Result<f64, OperatorError> {
        if !(s >= 0.0) || !s.is_finite() {
            return Err(OperatorError::Argument(s));
        }
        if s == 0.0 {
            return Ok(0.0);
        }
        match self.family {
            PhiFamily::Laplacian => return Ok(s),
            PhiFamily::PLaplacian { p } => return Ok(s.powf(1.0 / (p - 1.0))),
            PhiFamily::Plasma { p, q } if plasma_quadratic(p, q) => {
                let x = 2.0 * s / (1.0 + (1.0 + 4.0 * s).sqrt());
                return Ok(x.powf(1.0 / (p - 1.0)));
            }
            PhiFamily::Elasticity { p: 1.0 } => return Ok(s / 2.0),
            _ => {}
        }
        self.bisect_inverse(s)
    }

    fn bisect_inverse(&self, s: f64) -> Result<f64, OperatorError> {
        const CAP: f64 = 1e300;
        let (mut lo, mut hi);
        if self.h_eval(1.0)? < s {
            hi = 2.0;
            loop {
                match self.h_eval(hi) {
                    Ok(h) if h >= s => break,
                    Ok(_) => {}
                    // Overflow of h past s means s is bracketed.
                    Err(OperatorError::NonFinite { .. }) => break,
                    Err(e) => return Err(e),
                }
                if hi >= CAP {
                    return Err(OperatorError::NotSurjective { s });
                }
                hi *= 2.0;
            }
            lo = hi / 2.0;
        } else {
            lo = 0.5;
            while self.h_eval(lo)? >= s {
                if lo < 1e-300 {
                    return Ok(lo);
                }
                lo *= 0.5;
            }
            hi = 2.0 * lo;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if mid <= lo || mid >= hi || hi - lo <= 1e-15 * hi {
                break;
            }
            let below = match self.h_eval(mid) {
                Ok(h) => h < s,
                Err(OperatorError::NonFinite { .. }) => false,
                Err(e) => return Err(e),
            };
            if below {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// Sampled checks: `φ` finite and positive, `h` strictly increasing,
    /// `h(t) → 0` as `t → 0⁺` and `h` unbounded.
    pub fn validate(&self, range: &ValidationRange) -> Result<(), OperatorError> {
        let ts = log_space(range.t_min, range.t_max, range.points);
        let mut prev = 0.0;
        let mut hs = Vec::with_capacity(ts.len());
        for &t in &ts {
            let phi = self
                .phi(t)
                .map_err(|e| OperatorError::Validation(format!("φ({t:e}): {e}")))?;
            if !(phi.is_finite() && phi > 0.0) {
                return Err(OperatorError::Validation(format!(
                    "φ({t:e}) = {phi} is not finite and positive"
                )));
            }
            let h = self.h_eval(t)?;
            if h <= prev {
                return Err(OperatorError::Validation(format!(
                    "h is not strictly increasing near t = {t:e} ({h:e} <= {prev:e})"
                )));
            }
            prev = h;
            hs.push(h);
        }
        let slope = |a: f64, b: f64| -> Result<f64, OperatorError> {
            Ok((self.h_eval(b)? / self.h_eval(a)?).ln() / (b / a).ln())
        };
        let lo_end = (range.t_min * 100.0).min(range.t_max);
        if slope(range.t_min, lo_end)? <= 0.01 {
            return Err(OperatorError::Validation(format!(
                "t·φ(t) does not decay to 0 as t → 0 (h({:e}) = {:e})",
                range.t_min, hs[0]
            )));
        }
        if slope(range.t_max / 10.0, range.t_max)? <= 0.01 {
            return Err(OperatorError::Validation(format!(
                "h appears bounded (h({:e}) = {:e})",
                range.t_max,
                hs[hs.len() - 1]
            )));
        }
        Ok(())
    }

    /// Estimate the growth exponents and build the envelope set
    /// `ψ̄ = ψ̲ = h⁻¹`, `k̲ = k̄ = 1`, `θ̲ = min{t^{1/a₁}, t^{1/a₀}}`,
    /// `θ̄ = max{t^{1/a₁}, t^{1/a₀}}`, then verify the envelope inequality.
    pub fn derive_envelopes(
        self: &Arc<Self>,
        range: &ValidationRange,
    ) -> Result<(EnvelopeSet, GrowthExponents), OperatorError> {
        let s_lo = range.s_max * 1e-6;
        let t_lo = range.t_min.min(self.h_inverse(s_lo * s_lo)?);
        let t_hi = range.t_max.max(self.h_inverse(range.s_max * range.s_max)?);
        let ts = log_space(t_lo, t_hi, range.points);
        let hs = ts.iter().map(|&t| self.h_eval(t)).collect::<Result<Vec<_>, _>>()?;

        let (mut a0, mut a1) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 1..ts.len() {
            let b = (hs[k] / hs[k - 1]).ln() / (ts[k] / ts[k - 1]).ln();
            a0 = a0.min(b);
            a1 = a1.max(b);
        }
        // Catalog slopes move monotonically between their limits, so the
        // limits are exact bounds unless the samples say otherwise.
        let exact = match self.family.slope_limits() {
            Some((s0, s_inf)) => {
                let (lo, hi) = (s0.min(s_inf), s0.max(s_inf));
                let inside = a0 >= lo * (1.0 - 1e-9) && a1 <= hi * (1.0 + 1e-9);
                a0 = a0.min(lo);
                a1 = a1.max(hi);
                inside
            }
            None => false,
        };
        if !exact {
            a0 *= 1.0 - 1e-6;
            a1 *= 1.0 + 1e-6;
        }
        if !(a0 > 0.0 && a0.is_finite() && a1.is_finite()) {
            return Err(OperatorError::Growth(format!(
                "log-slope of h must stay in a compact subset of (0, ∞), got [{a0}, {a1}]"
            )));
        }

        let phi_big = cumulative_power_law(&ts, &hs);
        let (mut l, mut m) = (f64::INFINITY, f64::NEG_INFINITY);
        for k in 0..ts.len() {
            let ratio = ts[k] * hs[k] / phi_big[k];
            l = l.min(ratio);
            m = m.max(ratio);
        }
        if !(l > 1.0) {
            return Err(OperatorError::Growth(format!(
                "t·Φ′(t)/Φ(t) drops to {l} (must stay above 1)"
            )));
        }
        let growth = GrowthExponents { l, m, a0, a1 };
        let env = EnvelopeSet {
            k_under: 1.0,
            k_bar: 1.0,
            theta_under: ScalarFn::MinPow(1.0 / a1, 1.0 / a0),
            theta_bar: ScalarFn::MaxPow(1.0 / a1, 1.0 / a0),
            psi_under: ScalarFn::HInverse(Arc::clone(self)),
            psi_bar: ScalarFn::HInverse(Arc::clone(self)),
            origin: EnvelopeOrigin::Derived,
        };
        env.verify(self, range.s_max, range.ineq_points)?;
        Ok((env, growth))
    }
}

fn plasma_quadratic(p: f64, q: f64) -> bool {
    ((q - 1.0) - 2.0 * (p - 1.0)).abs() <= 1e-12 * q
}

/// `Φ(t_k) = ∫₀^{t_k} h`, integrating each cell exactly for the power law
/// through its endpoint values; the first cell `[0, t₀]` uses the slope of
/// the first interval.
fn cumulative_power_law(ts: &[f64], hs: &[f64]) -> Vec<f64> {
    let slope = |k: usize| (hs[k] / hs[k - 1]).ln() / (ts[k] / ts[k - 1]).ln();
    let mut out = Vec::with_capacity(ts.len());
    let mut acc = ts[0] * hs[0] / (slope(1) + 1.0);
    out.push(acc);
    for k in 1..ts.len() {
        let b = slope(k);
        let cell = if (b + 1.0).abs() < 1e-12 {
            ts[k - 1] * hs[k - 1] * (ts[k] / ts[k - 1]).ln()
        } else {
            (ts[k] * hs[k] - ts[k - 1] * hs[k - 1]) / (b + 1.0)
        };
        acc += cell;
        out.push(acc);
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum EnvelopeOrigin {
    Derived,
    User,
}

/// Functions with `k̲·θ̲(s₁)·ψ̲(s₂) ≤ h⁻¹(s₁s₂) ≤ k̄·θ̄(s₁)·ψ̄(s₂)`.
#[derive(Debug, Clone)]
pub struct EnvelopeSet {
    pub k_under: f64,
    pub k_bar: f64,
    pub theta_under: ScalarFn,
    pub theta_bar: ScalarFn,
    pub psi_under: ScalarFn,
    pub psi_bar: ScalarFn,
    pub origin: EnvelopeOrigin,
}

impl EnvelopeSet {
    /// Sample the envelope inequality on a log grid over `[S·1e-6, S]²`.
    pub fn verify(&self, op: &PhiOperator, s_max: f64, points: usize) -> Result<(), OperatorError> {
        if !(self.k_under > 0.0 && self.k_bar > 0.0) {
            return Err(OperatorError::Validation(format!(
                "envelope constants must be positive (k_under = {}, k_bar = {})",
                self.k_under, self.k_bar
            )));
        }
        let ss = log_space(s_max * 1e-6, s_max, points);
        let slack = 1.0 + 1e-12;
        let mut psi_u = Vec::with_capacity(ss.len());
        let mut psi_b = Vec::with_capacity(ss.len());
        for &s in &ss {
            psi_u.push(self.psi_under.eval(s)?);
            psi_b.push(self.psi_bar.eval(s)?);
        }
        for &s1 in &ss {
            let th_u = self.theta_under.eval(s1)?;
            let th_b = self.theta_bar.eval(s1)?;
            for (j, &s2) in ss.iter().enumerate() {
                let mid = op.h_inverse(s1 * s2)?;
                let lower = self.k_under * th_u * psi_u[j];
                let upper = self.k_bar * th_b * psi_b[j];
                if lower > mid * slack {
                    return Err(OperatorError::Ineq {
                        s1,
                        s2,
                        lhs: lower,
                        rhs: mid,
                        side: "lower",
                    });
                }
                if mid > upper * slack {
                    return Err(OperatorError::Ineq {
                        s1,
                        s2,
                        lhs: mid,
                        rhs: upper,
                        side: "upper",
                    });
                }
            }
        }
        Ok(())
    }

    /// True when `ψ̄` is the operator's own `h⁻¹`.
    pub fn psi_bar_is_h_inverse(&self) -> bool {
        matches!(self.psi_bar, ScalarFn::HInverse(_))
    }
}

/// Bounds on `t·Φ′/Φ` (`l`, `m`) and on the log-slope of `h` (`a0`, `a1`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GrowthExponents {
    pub l: f64,
    pub m: f64,
    pub a0: f64,
    pub a1: f64,
}

/// Parse a family by name and build a validated operator.
pub fn make_operator(
    name: &str,
    params: &BTreeMap<String, f64>,
    expr: Option<&str>,
) -> Result<PhiOperator, OperatorError> {
    PhiOperator::new(PhiFamily::from_name(name, params, expr)?)
}
