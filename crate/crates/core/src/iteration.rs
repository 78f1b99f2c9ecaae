//! Monotone successive approximation of the radial integral system
//!
//! ```text
//! u_m(r) = α + ∫₀^r h₁⁻¹(K[a₁ f₁(v_{m−1})](t)) dt
//! v_m(r) = β + ∫₀^r h₂⁻¹(K[a₂ f₂(u_m)](t)) dt
//! ```
//!
//! starting from `u₀ ≡ α`, `v₀ ≡ β`.

use serde::Serialize;
use thiserror::Error;

use crate::model::ProblemSpec;
use crate::quadrature::{cumulative_integral, radial_kernel, QuadError, RadialGrid};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum IterError {
    #[error("{stage} of equation {equation} at r = {radius}: {message}")]
    Eval {
        equation: usize,
        stage: &'static str,
        radius: f64,
        message: String,
    },
    #[error("non-finite {stage} of equation {equation} at r = {radius} (iteration {iteration})")]
    NonFinite {
        equation: usize,
        stage: &'static str,
        radius: f64,
        iteration: usize,
    },
    #[error(transparent)]
    Quad(#[from] QuadError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SupDiff {
    pub m: usize,
    pub du: f64,
    pub dv: f64,
}

#[derive(Debug, Clone)]
pub struct IterationState {
    pub m: usize,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub sup_diff_history: Vec<SupDiff>,
}

/// Weights sampled once on the grid.
#[derive(Debug, Clone)]
pub struct Discretization<'a> {
    pub spec: &'a ProblemSpec,
    pub nodes: &'a [f64],
    pub weights: [Vec<f64>; 2],
}

impl<'a> Discretization<'a> {
    pub fn new(spec: &'a ProblemSpec, nodes: &'a [f64]) -> Result<Discretization<'a>, IterError> {
        let sample = |i: usize| -> Result<Vec<f64>, IterError> {
            nodes
                .iter()
                .map(|&r| {
                    spec.eqs[i].weight.eval(r).map_err(|e| IterError::Eval {
                        equation: i + 1,
                        stage: "weight",
                        radius: r,
                        message: e.to_string(),
                    })
                })
                .collect()
        };
        Ok(Discretization {
            spec,
            nodes,
            weights: [sample(0)?, sample(1)?],
        })
    }

    /// `c + ∫₀^r h⁻¹(K[a·f(other)])` for equation `i`, plus the derivative
    /// `h⁻¹(K[…])` at every node.
    pub fn apply(&self, i: usize, other: &[f64], iteration: usize) -> Result<(Vec<f64>, Vec<f64>), IterError> {
        let eq = &self.spec.eqs[i];
        let equation = i + 1;
        let mut w = Vec::with_capacity(other.len());
        for (k, (&a, &x)) in self.weights[i].iter().zip(other).enumerate() {
            let radius = self.nodes[k];
            let fx = if a == 0.0 {
                0.0
            } else {
                eq.f.f.eval(x).map_err(|e| IterError::Eval {
                    equation,
                    stage: "nonlinearity",
                    radius,
                    message: e.to_string(),
                })?
            };
            let val = a * fx;
            if !val.is_finite() {
                return Err(IterError::NonFinite {
                    equation,
                    stage: "source term",
                    radius,
                    iteration,
                });
            }
            w.push(val);
        }
        let k = radial_kernel(&w, self.spec.n, self.nodes)?;
        let mut d = Vec::with_capacity(k.len());
        for (j, &kv) in k.iter().enumerate() {
            let radius = self.nodes[j];
            if !kv.is_finite() {
                return Err(IterError::NonFinite {
                    equation,
                    stage: "kernel",
                    radius,
                    iteration,
                });
            }
            d.push(eq.op.h_inverse(kv).map_err(|e| IterError::Eval {
                equation,
                stage: "h inverse",
                radius,
                message: e.to_string(),
            })?);
        }
        let mut out = cumulative_integral(&d, self.nodes)?;
        let c = self.spec.center(i);
        for (j, x) in out.iter_mut().enumerate() {
            *x += c;
            if !x.is_finite() {
                return Err(IterError::NonFinite {
                    equation,
                    stage: "solution",
                    radius: self.nodes[j],
                    iteration,
                });
            }
        }
        Ok((out, d))
    }
}

pub fn init_state(spec: &ProblemSpec, grid: &RadialGrid) -> IterationState {
    IterationState {
        m: 0,
        u: vec![spec.alpha; grid.len()],
        v: vec![spec.beta; grid.len()],
        sup_diff_history: Vec::new(),
    }
}

fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn sup(a: &[f64]) -> f64 {
    a.iter().map(|x| x.abs()).fold(0.0, f64::max)
}

/// One sweep: `u` from the old `v`, then `v` from the new `u`.
pub fn step(state: &IterationState, disc: &Discretization<'_>) -> Result<IterationState, IterError> {
    let m = state.m + 1;
    let (u, _) = disc.apply(0, &state.v, m)?;
    let (v, _) = disc.apply(1, &u, m)?;
    let mut history = state.sup_diff_history.clone();
    history.push(SupDiff {
        m,
        du: sup_diff(&u, &state.u),
        dv: sup_diff(&v, &state.v),
    });
    Ok(IterationState {
        m,
        u,
        v,
        sup_diff_history: history,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SolveOptions {
    pub conv_tol: f64,
    pub max_iter: usize,
    /// Residuals must not exceed `residual_tol·(1 + sup|u|)` for the run to
    /// count as converged.
    pub residual_tol: f64,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            conv_tol: 1e-8,
            max_iter: 200,
            residual_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct RadialSolution {
    pub r: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `u′ = h₁⁻¹(K[a₁f₁(v)])` from the last operator application.
    pub u_prime: Vec<f64>,
    pub v_prime: Vec<f64>,
    pub iterations_used: usize,
    pub converged: bool,
    pub residual_u: f64,
    pub residual_v: f64,
    pub history: Vec<SupDiff>,
}

/// Iterate until the relative sup-norm change of both components drops below
/// `conv_tol` or `max_iter` sweeps are done. `observer` sees every iterate,
/// including the initial state.
pub fn solve_observed<F>(
    spec: &ProblemSpec,
    grid: &RadialGrid,
    opts: &SolveOptions,
    mut observer: F,
) -> Result<RadialSolution, IterError>
where
    F: FnMut(&IterationState),
{
    let disc = Discretization::new(spec, grid.nodes())?;
    let mut state = init_state(spec, grid);
    observer(&state);
    let mut settled = false;
    while state.m < opts.max_iter {
        state = step(&state, &disc)?;
        observer(&state);
        let last = state.sup_diff_history.last().expect("one step done");
        if last.du <= opts.conv_tol * (1.0 + sup(&state.u)) && last.dv <= opts.conv_tol * (1.0 + sup(&state.v)) {
            settled = true;
            break;
        }
    }
    let (u_next, u_prime) = disc.apply(0, &state.v, state.m + 1)?;
    let (v_next, v_prime) = disc.apply(1, &state.u, state.m + 1)?;
    let residual_u = sup_diff(&u_next, &state.u);
    let residual_v = sup_diff(&v_next, &state.v);
    let converged = settled
        && residual_u <= opts.residual_tol * (1.0 + sup(&state.u))
        && residual_v <= opts.residual_tol * (1.0 + sup(&state.v));
    Ok(RadialSolution {
        r: grid.nodes().to_vec(),
        u: state.u,
        v: state.v,
        u_prime,
        v_prime,
        iterations_used: state.m,
        converged,
        residual_u,
        residual_v,
        history: state.sup_diff_history,
    })
}

pub fn solve(spec: &ProblemSpec, grid: &RadialGrid, opts: &SolveOptions) -> Result<RadialSolution, IterError> {
    solve_observed(spec, grid, opts, |_| {})
}

/// Sup-norm residuals of `(u, v)` against one application of the integral
/// operators on the solution's own grid.
pub fn residual(spec: &ProblemSpec, sol: &RadialSolution) -> Result<(f64, f64), IterError> {
    let disc = Discretization::new(spec, &sol.r)?;
    let (u_next, _) = disc.apply(0, &sol.v, sol.iterations_used + 1)?;
    let (v_next, _) = disc.apply(1, &sol.u, sol.iterations_used + 1)?;
    Ok((sup_diff(&u_next, &sol.u), sup_diff(&v_next, &sol.v)))
}
