//! Scalar functions on `[0, ∞)` used for weights, nonlinearities and envelopes.

use std::fmt;
use std::sync::Arc;

use crate::expr::{EvalError, Expr};
use crate::operators::{OperatorError, PhiOperator};

/// Node-sampled function on a uniform grid, linearly interpolated between
/// nodes. Evaluation outside the table is an error.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub step: f64,
    pub values: Vec<f64>,
}

impl Table {
    pub fn eval(&self, x: f64) -> Result<f64, EvalError> {
        let last = (self.values.len() - 1) as f64 * self.step;
        if !(x >= 0.0) || x > last * (1.0 + 1e-12) {
            return Err(EvalError::Domain(format!(
                "tabulated function evaluated at {x}, outside [0, {last}]"
            )));
        }
        let pos = x / self.step;
        let i = (pos.floor() as usize).min(self.values.len() - 1);
        if i + 1 >= self.values.len() {
            return Ok(self.values[self.values.len() - 1]);
        }
        let frac = pos - i as f64;
        if frac <= 0.0 {
            return Ok(self.values[i]);
        }
        Ok(self.values[i] + frac * (self.values[i + 1] - self.values[i]))
    }

    pub fn r_max(&self) -> f64 {
        (self.values.len() - 1) as f64 * self.step
    }
}

#[derive(Debug, Clone)]
pub enum ScalarFn {
    Expr(Expr),
    /// `t^γ`
    Power(f64),
    /// `Σ c_j t^{γ_j}`
    PowerSum(Vec<(f64, f64)>),
    /// `e^t − 1`
    ExpM1,
    /// `ln(1 + t)`
    Ln1p,
    Const(f64),
    /// `min{t^a, t^b}`
    MinPow(f64, f64),
    /// `max{t^a, t^b}`
    MaxPow(f64, f64),
    /// The inverse flux map of an operator.
    HInverse(Arc<PhiOperator>),
    /// `t ↦ f(k·t)`
    Dilated(Box<ScalarFn>, f64),
    Table(Arc<Table>),
}

impl ScalarFn {
    pub fn identity() -> ScalarFn {
        ScalarFn::Power(1.0)
    }

    pub fn eval(&self, t: f64) -> Result<f64, EvalError> {
        if !(t >= 0.0) {
            return Err(EvalError::Domain(format!("argument {t} is negative or NaN")));
        }
        let v = match self {
            ScalarFn::Expr(e) => return e.eval(t),
            ScalarFn::Power(g) => pow0(t, *g),
            ScalarFn::PowerSum(terms) => terms.iter().map(|(c, g)| c * pow0(t, *g)).sum(),
            ScalarFn::ExpM1 => t.exp_m1(),
            ScalarFn::Ln1p => t.ln_1p(),
            ScalarFn::Const(c) => *c,
            ScalarFn::MinPow(a, b) => pow0(t, *a).min(pow0(t, *b)),
            ScalarFn::MaxPow(a, b) => pow0(t, *a).max(pow0(t, *b)),
            ScalarFn::HInverse(op) => {
                return op.h_inverse(t).map_err(|e| match e {
                    OperatorError::NotSurjective { .. } => EvalError::Overflow(e.to_string()),
                    _ => EvalError::Domain(e.to_string()),
                })
            }
            ScalarFn::Dilated(f, k) => return f.eval(k * t),
            ScalarFn::Table(table) => return table.eval(t),
        };
        if v.is_nan() {
            return Err(EvalError::Domain(format!("{self} undefined at {t}")));
        }
        // +inf is a legitimate saturation for the closed-form families
        // (e.g. e^t − 1 past 709); callers decide what to do with it.
        Ok(v)
    }

    /// Evaluate and reject non-finite values.
    pub fn eval_finite(&self, t: f64) -> Result<f64, EvalError> {
        let v = self.eval(t)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::Overflow(format!("{self} at {t}")))
        }
    }
}

/// `t^g` with `0^0 = 1` and `0^g = 0` for `g > 0`.
fn pow0(t: f64, g: f64) -> f64 {
    if g == 1.0 {
        t
    } else {
        t.powf(g)
    }
}

impl fmt::Display for ScalarFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarFn::Expr(e) => write!(f, "{e}"),
            ScalarFn::Power(g) => write!(f, "t^{g}"),
            ScalarFn::PowerSum(terms) => {
                for (i, (c, g)) in terms.iter().enumerate() {
                    if i > 0 {
                        f.write_str(" + ")?;
                    }
                    write!(f, "{c}*t^{g}")?;
                }
                Ok(())
            }
            ScalarFn::ExpM1 => f.write_str("exp(t)-1"),
            ScalarFn::Ln1p => f.write_str("ln(1+t)"),
            ScalarFn::Const(c) => write!(f, "{c}"),
            ScalarFn::MinPow(a, b) => write!(f, "min(t^{a}, t^{b})"),
            ScalarFn::MaxPow(a, b) => write!(f, "max(t^{a}, t^{b})"),
            ScalarFn::HInverse(op) => write!(f, "h^-1[{}]", op.family()),
            ScalarFn::Dilated(inner, k) => write!(f, "({inner})({k}*t)"),
            ScalarFn::Table(t) => write!(f, "table[{} nodes, step {}]", t.values.len(), t.step),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        assert_eq!(ScalarFn::Power(2.0).eval(3.0).unwrap(), 9.0);
        assert_eq!(ScalarFn::Power(0.5).eval(0.0).unwrap(), 0.0);
        assert_eq!(
            ScalarFn::PowerSum(vec![(1.0, 1.0), (2.0, 2.0)]).eval(2.0).unwrap(),
            10.0
        );
        assert_eq!(ScalarFn::MinPow(0.5, 2.0).eval(4.0).unwrap(), 2.0);
        assert_eq!(ScalarFn::MaxPow(0.5, 2.0).eval(4.0).unwrap(), 16.0);
        assert_eq!(ScalarFn::MaxPow(0.5, 2.0).eval(0.25).unwrap(), 0.5);
        assert_eq!(
            ScalarFn::Dilated(Box::new(ScalarFn::Power(2.0)), 0.5)
                .eval(4.0)
                .unwrap(),
            4.0
        );
        assert!(ScalarFn::ExpM1.eval(1000.0).unwrap().is_infinite());
        assert!(ScalarFn::ExpM1.eval_finite(1000.0).is_err());
        assert!(ScalarFn::Power(1.0).eval(-1.0).is_err());
    }

    #[test]
    fn table_interpolates_and_refuses_outside() {
        let table = ScalarFn::Table(Arc::new(Table {
            step: 0.5,
            values: vec![0.0, 1.0, 4.0],
        }));
        assert_eq!(table.eval(0.25).unwrap(), 0.5);
        assert_eq!(table.eval(1.0).unwrap(), 4.0);
        assert!(table.eval(1.5).is_err());
    }
}
