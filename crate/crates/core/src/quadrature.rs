//! Grids, prefix integrals, the radial kernel `K[w](t) = t^{1−N} ∫₀^t s^{N−1} w(s) ds`
//! and a heuristic probe for limits of nondecreasing functionals as `R → ∞`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum QuadError {
    #[error("non-finite sample {value} at node {index} (r = {radius})")]
    NonFinite { index: usize, radius: f64, value: f64 },
    #[error("length mismatch: {values} values for {nodes} nodes")]
    Length { values: usize, nodes: usize },
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("dimension N = {0} must be at least 3")]
    Dimension(u32),
}

/// Uniform grid `0 = r₀ < … < r_n = r_max`.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    r_max: f64,
    step: f64,
    nodes: Vec<f64>,
}

impl RadialGrid {
    /// Grid on `[0, r_max]` whose spacing is the largest value `≤ step` that
    /// divides `r_max` evenly.
    pub fn new(r_max: f64, step: f64) -> Result<RadialGrid, QuadError> {
        if !(r_max > 0.0 && r_max.is_finite() && step > 0.0 && step.is_finite()) {
            return Err(QuadError::Grid(format!(
                "need positive finite r_max and step, got {r_max} and {step}"
            )));
        }
        let cells = (r_max / step - 1e-9).ceil().max(1.0);
        if cells > 5e8 {
            return Err(QuadError::Grid(format!("{cells} cells is too many")));
        }
        let cells = cells as usize;
        let step = r_max / cells as f64;
        let mut nodes: Vec<f64> = (0..=cells).map(|i| i as f64 * step).collect();
        nodes[cells] = r_max;
        Ok(RadialGrid { r_max, step, nodes })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }
}

/// Radii `R_k = R₀·factor^k`, `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbeSchedule {
    pub r0: f64,
    pub factor: f64,
    pub count: usize,
}

impl Default for ProbeSchedule {
    fn default() -> Self {
        ProbeSchedule {
            r0: 1.0,
            factor: 2.0,
            count: 40,
        }
    }
}

impl ProbeSchedule {
    pub fn radii(&self) -> Vec<f64> {
        let mut radii = Vec::with_capacity(self.count);
        let mut r = self.r0;
        for _ in 0..self.count {
            radii.push(r);
            r *= self.factor;
        }
        radii
    }

    pub fn last(&self) -> f64 {
        self.r0 * self.factor.powi(self.count.saturating_sub(1) as i32)
    }

    pub fn validate(&self) -> Result<(), QuadError> {
        if !(self.r0 > 0.0 && self.factor > 1.0 && self.count >= 6 && self.last().is_finite()) {
            return Err(QuadError::Grid(format!(
                "probe schedule needs r0 > 0, factor > 1, count >= 6: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeOptions {
    pub tail_tol: f64,
    pub blowup_threshold: f64,
}

impl Default for ProbeOptions {
    fn default() -> Self {
        ProbeOptions {
            tail_tol: 1e-6,
            blowup_threshold: 1e8,
        }
    }
}

/// Nodes `start + [0, R₀]` (uniform, `cells` cells) followed by one uniform
/// block of `cells` cells per probe interval `[R_{k−1}, R_k]`. Every probe
/// radius is a node.
#[derive(Debug, Clone)]
pub struct GradedMesh {
    pub start: f64,
    pub nodes: Vec<f64>,
    /// Index of `start + R_k` in `nodes`.
    pub probe_index: Vec<usize>,
    pub schedule: ProbeSchedule,
}

impl GradedMesh {
    pub fn new(start: f64, schedule: ProbeSchedule, cells: usize) -> Result<GradedMesh, QuadError> {
        schedule.validate()?;
        if cells == 0 {
            return Err(QuadError::Grid("cells per block must be positive".into()));
        }
        let radii = schedule.radii();
        let mut nodes = Vec::with_capacity(cells * radii.len() + 1);
        let mut probe_index = Vec::with_capacity(radii.len());
        nodes.push(start);
        let mut lo = 0.0;
        for &hi in &radii {
            let width = hi - lo;
            for i in 1..cells {
                nodes.push(start + lo + width * i as f64 / cells as f64);
            }
            nodes.push(start + hi);
            probe_index.push(nodes.len() - 1);
            lo = hi;
        }
        Ok(GradedMesh {
            start,
            nodes,
            probe_index,
            schedule,
        })
    }

    /// `(R_k, values[probe_index[k]])` pairs, with `R_k` measured from `start`.
    pub fn probe_trace(&self, values: &[f64]) -> Vec<(f64, f64)> {
        self.schedule
            .radii()
            .into_iter()
            .zip(&self.probe_index)
            .map(|(r, &i)| (r, values[i]))
            .collect()
    }
}

fn check_samples(values: &[f64], nodes: &[f64]) -> Result<(), QuadError> {
    if values.len() != nodes.len() {
        return Err(QuadError::Length {
            values: values.len(),
            nodes: nodes.len(),
        });
    }
    if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(QuadError::NonFinite {
            index,
            radius: nodes[index],
            value,
        });
    }
    Ok(())
}

/// Composite-trapezoid prefix integral over ascending `nodes`; `out[0] = 0`.
pub fn cumulative_integral(values: &[f64], nodes: &[f64]) -> Result<Vec<f64>, QuadError> {
    check_samples(values, nodes)?;
    let mut out = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    if !values.is_empty() {
        out.push(0.0);
    }
    for j in 1..values.len() {
        acc += 0.5 * (nodes[j] - nodes[j - 1]) * (values[j] + values[j - 1]);
        out.push(acc);
    }
    Ok(out)
}

/// `K[w](t) = t^{1−N} ∫₀^t s^{N−1} w(s) ds` at every node, `N ≥ 3`.
///
/// `w` is interpolated linearly between nodes and the `s^{N−1}` factor is
/// integrated exactly, so `K[c] = c·t/N` and `K[s] = t²/(N+1)` up to rounding.
pub fn radial_kernel(w: &[f64], n: u32, nodes: &[f64]) -> Result<Vec<f64>, QuadError> {
    if n < 3 {
        return Err(QuadError::Dimension(n));
    }
    power_kernel(w, n, nodes)
}

/// `t^{1−d} ∫₀^t s^{d−1} w(s) ds` for any integer `d ≥ 1`, same scheme as
/// [`radial_kernel`]. Nodes must start at 0.
pub fn power_kernel(w: &[f64], d: u32, nodes: &[f64]) -> Result<Vec<f64>, QuadError> {
    check_samples(w, nodes)?;
    if d == 0 {
        return Err(QuadError::Dimension(d));
    }
    if nodes.first().is_some_and(|&r| r != 0.0) {
        return Err(QuadError::Grid("kernel nodes must start at 0".into()));
    }
    let rule = GaussLegendre::new((d as usize) / 2 + 1);
    let p = d as i32 - 1;
    let mut out = Vec::with_capacity(w.len());
    if w.is_empty() {
        return Ok(out);
    }
    out.push(0.0);
    let mut k = 0.0;
    for j in 1..w.len() {
        let (a, b) = (nodes[j - 1], nodes[j]);
        let rho = a / b;
        // ∫_a^b (s/b)^{d−1} ℓ(s) ds with ℓ the linear interpolant of w.
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        let mut cell = 0.0;
        for (x, wt) in rule.nodes.iter().zip(&rule.weights) {
            let s = mid + half * x;
            let lam = (s - a) / (b - a);
            let ell = w[j - 1] * (1.0 - lam) + w[j] * lam;
            cell += wt * (s / b).powi(p) * ell;
        }
        cell *= half;
        k = rho.powi(p) * k + cell;
        out.push(k);
    }
    Ok(out)
}

/// Gauss–Legendre rule on `[−1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> GaussLegendre {
        let n = n.max(1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            // Chebyshev initial guess, then Newton on P_n.
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        GaussLegendre { nodes, weights }
    }
}

/// `(P_n(x), P_n'(x))` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind")]
pub enum LimitKind {
    Finite { value: f64, error: f64 },
    Divergent { note: String },
    Indeterminate { note: String },
}

/// Outcome of probing `lim_{R→∞} F(R)` together with the probe trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LimitVerdict {
    #[serde(flatten)]
    pub kind: LimitKind,
    pub probes: Vec<(f64, f64)>,
}

impl LimitVerdict {
    pub fn is_finite(&self) -> bool {
        matches!(self.kind, LimitKind::Finite { .. })
    }

    pub fn is_divergent(&self) -> bool {
        matches!(self.kind, LimitKind::Divergent { .. })
    }

    pub fn is_indeterminate(&self) -> bool {
        matches!(self.kind, LimitKind::Indeterminate { .. })
    }

    /// `(value, error)` when finite.
    pub fn finite_value(&self) -> Option<(f64, f64)> {
        match self.kind {
            LimitKind::Finite { value, error } => Some((value, error)),
            _ => None,
        }
    }
}

impl fmt::Display for LimitVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            LimitKind::Finite { value, error } => write!(f, "Finite({value:.6e} ± {error:.1e})"),
            LimitKind::Divergent { note } => write!(f, "Divergent({note})"),
            LimitKind::Indeterminate { note } => write!(f, "Indeterminate({note})"),
        }
    }
}

const DECAY_RATIO: f64 = 0.9;
const WINDOW: usize = 4;

/// Evaluate `f` at the schedule radii and decide whether it converges.
///
/// Divergent when the last value exceeds `blowup_threshold`, when `f` fails or
/// turns non-finite, or when none of the last increments shrinks by a ratio
/// below 0.9. Finite when all of them do and the geometric tail bound is below
/// `tail_tol`. Anything else is Indeterminate.
pub fn improper_limit_probe<E, F>(mut f: F, schedule: &ProbeSchedule, opts: &ProbeOptions) -> LimitVerdict
where
    E: fmt::Display,
    F: FnMut(f64) -> Result<f64, E>,
{
    let mut probes = Vec::with_capacity(schedule.count);
    for r in schedule.radii() {
        match f(r) {
            Ok(v) => probes.push((r, v)),
            Err(e) => {
                return LimitVerdict {
                    kind: LimitKind::Divergent {
                        note: format!("evaluation failed at R = {r}: {e}"),
                    },
                    probes,
                }
            }
        }
    }
    classify_trace(probes, opts)
}

/// The decision rule of [`improper_limit_probe`] applied to an existing trace.
pub fn classify_trace(probes: Vec<(f64, f64)>, opts: &ProbeOptions) -> LimitVerdict {
    let verdict = |kind| LimitVerdict {
        kind,
        probes: probes.clone(),
    };
    if let Some(&(r, v)) = probes.iter().find(|(_, v)| !v.is_finite()) {
        return verdict(LimitKind::Divergent {
            note: format!("non-finite value {v} at R = {r}"),
        });
    }
    let Some(&(r_last, last)) = probes.last() else {
        return verdict(LimitKind::Indeterminate {
            note: "empty probe schedule".into(),
        });
    };
    if last > opts.blowup_threshold {
        return verdict(LimitKind::Divergent {
            note: format!("F({r_last}) = {last:e} exceeds {:e}", opts.blowup_threshold),
        });
    }
    if probes.len() < WINDOW + 1 {
        return verdict(LimitKind::Indeterminate {
            note: format!("need at least {} probes", WINDOW + 1),
        });
    }
    let noise = 1e-14 * last.abs().max(1.0);
    let incs: Vec<f64> = probes.windows(2).map(|w| w[1].1 - w[0].1).collect();
    let window = &incs[incs.len() - WINDOW..];
    let clean: Vec<f64> = window.iter().map(|&d| if d.abs() <= noise { 0.0 } else { d }).collect();
    if clean.iter().all(|&d| d == 0.0) {
        return verdict(LimitKind::Finite {
            value: last,
            error: 0.0,
        });
    }
    if clean.iter().any(|&d| d < 0.0) {
        return verdict(LimitKind::Indeterminate {
            note: "functional decreased inside the decay window".into(),
        });
    }
    let ratios: Vec<f64> = clean
        .windows(2)
        .map(|w| match (w[0], w[1]) {
            (_, 0.0) => 0.0,
            (0.0, _) => f64::INFINITY,
            (a, b) => b / a,
        })
        .collect();
    if ratios.iter().all(|&q| q >= DECAY_RATIO) {
        return verdict(LimitKind::Divergent {
            note: format!("increments not decaying (last ratios {})", fmt_list(&ratios)),
        });
    }
    if ratios.iter().all(|&q| q < DECAY_RATIO) {
        let rho = ratios.iter().cloned().fold(0.0, f64::max);
        let tail = clean[clean.len() - 1] * rho / (1.0 - rho);
        if tail < opts.tail_tol {
            return verdict(LimitKind::Finite {
                value: last,
                error: tail,
            });
        }
        return verdict(LimitKind::Indeterminate {
            note: format!("geometric tail bound {tail:.3e} above tolerance"),
        });
    }
    verdict(LimitKind::Indeterminate {
        note: format!("mixed increment ratios {}", fmt_list(&ratios)),
    })
}

fn fmt_list(xs: &[f64]) -> String {
    let parts: Vec<String> = xs.iter().map(|x| format!("{x:.3}")).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn uniform(r_max: f64, step: f64) -> Vec<f64> {
        RadialGrid::new(r_max, step).unwrap().nodes().to_vec()
    }

    #[test]
    fn grid_is_uniform_and_anchored() {
        let g = RadialGrid::new(2.0, 1e-3).unwrap();
        assert_eq!(g.len(), 2001);
        assert_eq!(g.nodes()[0], 0.0);
        assert_eq!(*g.nodes().last().unwrap(), 2.0);
        for w in g.nodes().windows(2) {
            assert!(((w[1] - w[0]) - g.step()).abs() <= 4.0 * f64::EPSILON * 2.0);
        }
        assert!(RadialGrid::new(0.0, 1e-3).is_err());
        assert!(RadialGrid::new(1.0, -1.0).is_err());
    }

    #[test]
    fn trapezoid_is_exact_for_linear() {
        let nodes = uniform(1.0, 0.01);
        let ones = vec![1.0; nodes.len()];
        let out = cumulative_integral(&ones, &nodes).unwrap();
        assert_eq!(out[0], 0.0);
        assert_relative_eq!(*out.last().unwrap(), 1.0, epsilon = 1e-13);
        let lin = cumulative_integral(&nodes, &nodes).unwrap();
        assert_relative_eq!(*lin.last().unwrap(), 0.5, epsilon = 1e-13);
    }

    #[test]
    fn trapezoid_square_within_tolerance() {
        // ∫₀¹ s² ds = 1/3
        let nodes = uniform(1.0, 1e-3);
        let sq: Vec<f64> = nodes.iter().map(|s| s * s).collect();
        let out = cumulative_integral(&sq, &nodes).unwrap();
        assert!((out.last().unwrap() - 1.0 / 3.0).abs() < 1e-6);
    }

    #[test]
    fn cumulative_rejects_non_finite() {
        let nodes = uniform(1.0, 0.5);
        let err = cumulative_integral(&[0.0, f64::NAN, 1.0], &nodes).unwrap_err();
        assert!(matches!(err, QuadError::NonFinite { index: 1, .. }));
        assert!(radial_kernel(&[0.0, f64::INFINITY, 1.0], 3, &nodes).is_err());
    }

    #[test]
    fn kernel_examples() {
        let nodes = uniform(3.0, 1e-3);
        let ones = vec![1.0; nodes.len()];
        let k = radial_kernel(&ones, 3, &nodes).unwrap();
        assert_eq!(k[0], 0.0);
        assert_relative_eq!(*k.last().unwrap(), 1.0, epsilon = 1e-12);
        let zeros = vec![0.0; nodes.len()];
        assert!(radial_kernel(&zeros, 3, &nodes).unwrap().iter().all(|&v| v == 0.0));

        let nodes = uniform(2.0, 1e-3);
        let k = radial_kernel(&nodes, 3, &nodes).unwrap();
        // ∫₀^t s³ ds / t² = t²/4
        assert_relative_eq!(*k.last().unwrap(), 1.0, epsilon = 1e-12);
        assert!(radial_kernel(&nodes, 2, &nodes).is_err());
    }

    #[test]
    fn kernel_of_constant_is_exact_for_every_dimension() {
        let nodes = uniform(5.0, 1e-3);
        for n in 3..=9u32 {
            let c = 2.5;
            let w = vec![c; nodes.len()];
            let k = radial_kernel(&w, n, &nodes).unwrap();
            for (t, kv) in nodes.iter().zip(&k).skip(1) {
                assert!((kv - c * t / n as f64).abs() < 1e-8, "N={n} t={t}");
            }
        }
    }

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        for n in 1..8 {
            let rule = GaussLegendre::new(n);
            let total: f64 = rule.weights.iter().sum();
            assert_relative_eq!(total, 2.0, epsilon = 1e-14);
            // ∫_{-1}^{1} x^{2n-2} dx = 2/(2n-1)
            let deg = 2 * n - 2;
            let approx: f64 = rule
                .nodes
                .iter()
                .zip(&rule.weights)
                .map(|(x, w)| w * x.powi(deg as i32))
                .sum();
            assert_relative_eq!(approx, 2.0 / (deg as f64 + 1.0), epsilon = 1e-13);
        }
    }

    #[test]
    fn graded_mesh_contains_probe_radii() {
        let sched = ProbeSchedule {
            r0: 1.0,
            factor: 2.0,
            count: 10,
        };
        let mesh = GradedMesh::new(0.0, sched, 16).unwrap();
        assert_eq!(mesh.nodes[0], 0.0);
        for (k, &i) in mesh.probe_index.iter().enumerate() {
            assert_eq!(mesh.nodes[i], 2f64.powi(k as i32));
        }
        assert!(mesh.nodes.windows(2).all(|w| w[1] > w[0]));
        let shifted = GradedMesh::new(3.0, sched, 16).unwrap();
        assert_eq!(shifted.nodes[shifted.probe_index[2]], 7.0);
    }

    fn probe<F: Fn(f64) -> f64>(f: F) -> LimitVerdict {
        improper_limit_probe(
            |r| Ok::<f64, String>(f(r)),
            &ProbeSchedule::default(),
            &ProbeOptions::default(),
        )
    }

    #[test]
    fn probe_known_limits() {
        let v = probe(|r| 1.0 - (-r).exp());
        let (value, _) = v.finite_value().expect("finite");
        assert_relative_eq!(value, 1.0, epsilon = 1e-9);

        let v = probe(|r| 2.0 - 1.0 / r);
        let (value, err) = v.finite_value().expect("finite");
        assert_relative_eq!(value, 2.0, epsilon = 1e-9);
        assert!(err < 1e-6);

        let v = probe(|r| (1.0 + r).ln());
        assert!(v.is_divergent(), "{v}");
        assert!(probe(|r| r * r).is_divergent());
        assert!(probe(|_| 0.0).is_finite());
    }

    #[test]
    fn probe_failures_are_divergent() {
        let v = improper_limit_probe(
            |r| if r > 100.0 { Err("boom") } else { Ok(r) },
            &ProbeSchedule::default(),
            &ProbeOptions::default(),
        );
        assert!(v.is_divergent());
        let v = probe(|r| if r > 100.0 { f64::INFINITY } else { 1.0 });
        assert!(v.is_divergent());
    }

    #[test]
    fn short_schedule_cannot_certify_slow_tails() {
        // 2 − 1/R on a 15-point schedule leaves a tail of ~6e-5.
        let sched = ProbeSchedule {
            r0: 1.0,
            factor: 2.0,
            count: 15,
        };
        let v = improper_limit_probe(|r| Ok::<_, String>(2.0 - 1.0 / r), &sched, &ProbeOptions::default());
        assert!(v.is_indeterminate(), "{v}");
    }

    proptest! {
        #[test]
        fn cumulative_is_linear(
            a in -5.0f64..5.0,
            b in -5.0f64..5.0,
            w1 in proptest::collection::vec(-10.0f64..10.0, 50),
            w2 in proptest::collection::vec(-10.0f64..10.0, 50),
        ) {
            let nodes: Vec<f64> = (0..50).map(|i| i as f64 * 0.1).collect();
            let comb: Vec<f64> = w1.iter().zip(&w2).map(|(x, y)| a * x + b * y).collect();
            let i1 = cumulative_integral(&w1, &nodes).unwrap();
            let i2 = cumulative_integral(&w2, &nodes).unwrap();
            let ic = cumulative_integral(&comb, &nodes).unwrap();
            for j in 0..50 {
                prop_assert!((ic[j] - (a * i1[j] + b * i2[j])).abs() <= 1e-12 * (1.0 + ic[j].abs()) * 50.0);
            }
        }

        #[test]
        fn finite_never_follows_growing_increment(
            incs in proptest::collection::vec(0.0f64..1.0, 10),
        ) {
            let mut acc = 0.0;
            let probes: Vec<(f64, f64)> = incs
                .iter()
                .enumerate()
                .map(|(k, d)| {
                    acc += d;
                    (2f64.powi(k as i32), acc)
                })
                .collect();
            let v = classify_trace(probes, &ProbeOptions { tail_tol: 1e3, blowup_threshold: 1e8 });
            if v.is_finite() {
                let window = &incs[incs.len() - WINDOW..];
                for w in window.windows(2) {
                    prop_assert!(w[1] <= w[0] + 1e-14);
                }
            }
        }
    }
}
