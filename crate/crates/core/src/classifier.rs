//! Decision table from functional limits and hypothesis checks to the
//! asymptotic class of the radial solution.

use std::fmt;

use serde::Serialize;

use crate::criteria::{CriteriaReport, Entry, Sandwich, SideReport};
use crate::func::ScalarFn;
use crate::iteration::RadialSolution;
use crate::model::{HypothesisReport, ProblemSpec};
use crate::operators::log_space;
use crate::quadrature::LimitKind;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    BothLarge,
    BothBounded,
    UBoundedVLarge,
    ULargeVBounded,
    ExistsUnclassified,
    Indeterminate,
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Expected behaviour of one component.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Growth {
    Large,
    Bounded,
    Unspecified,
}

impl Verdict {
    pub fn components(self) -> [Growth; 2] {
        use Growth::*;
        match self {
            Verdict::BothLarge => [Large, Large],
            Verdict::BothBounded => [Bounded, Bounded],
            Verdict::UBoundedVLarge => [Bounded, Large],
            Verdict::ULargeVBounded => [Large, Bounded],
            Verdict::ExistsUnclassified | Verdict::Indeterminate => [Unspecified, Unspecified],
        }
    }
}

/// Three-valued truth.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Truth {
    True,
    False,
    Unknown,
}

impl Truth {
    fn and(self, other: Truth) -> Truth {
        match (self, other) {
            (Truth::False, _) | (_, Truth::False) => Truth::False,
            (Truth::Unknown, _) | (_, Truth::Unknown) => Truth::Unknown,
            _ => Truth::True,
        }
    }

    fn from_bool(b: bool) -> Truth {
        if b {
            Truth::True
        } else {
            Truth::False
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Evidence {
    pub predicate: String,
    pub value: Truth,
}

/// Data needed to rebuild the pointwise bounds of the bounded components.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundsData {
    /// Which components carry the bound `c + P̲(r) ≤ x(r) ≤ H⁻¹(k̄P̄(r))`.
    pub sides: [bool; 2],
    /// `M′` for sides using the simplified upper pair.
    pub simplified: [Option<f64>; 2],
}

/// The necessary condition of the large-solution theorem, checked against
/// the upper functionals when lower and upper data coincide.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConverseAdvisory {
    pub enabled: bool,
    /// `Some(false)` when a large verdict meets a finite `P̄`.
    pub consistent: Option<bool>,
    pub note: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub verdict: Verdict,
    pub matched_rule: String,
    pub evidence: Vec<Evidence>,
    pub bounds: Option<BoundsData>,
    pub converse: ConverseAdvisory,
    pub warnings: Vec<String>,
}

fn is_divergent(e: &Entry) -> Truth {
    match e {
        Entry::Computed(v) => match v.kind {
            LimitKind::Divergent { .. } => Truth::True,
            LimitKind::Finite { .. } => Truth::False,
            LimitKind::Indeterminate { .. } => Truth::Unknown,
        },
        _ => Truth::False,
    }
}

fn is_finite(e: &Entry) -> Truth {
    match e {
        Entry::Computed(v) => match v.kind {
            LimitKind::Finite { .. } => Truth::True,
            LimitKind::Divergent { .. } => Truth::False,
            LimitKind::Indeterminate { .. } => Truth::Unknown,
        },
        _ => Truth::False,
    }
}

/// `k·P(∞) < H(∞) < ∞`, with both errors counted against the comparison.
fn below_finite(k: f64, p: &Entry, h: &Entry) -> Truth {
    let hv = match is_finite(h) {
        Truth::True => h.verdict().and_then(|v| v.finite_value()).expect("finite"),
        t => return t,
    };
    let pv = match is_finite(p) {
        Truth::True => p.verdict().and_then(|v| v.finite_value()).expect("finite"),
        t => return t,
    };
    let (lhs, lerr) = (k * pv.0, k * pv.1);
    let (rhs, rerr) = hv;
    if lhs + lerr < rhs - rerr {
        Truth::True
    } else if lhs - lerr >= rhs + rerr {
        Truth::False
    } else {
        Truth::Unknown
    }
}

struct Predicates<'a> {
    sides: &'a [SideReport; 2],
    hyp: &'a HypothesisReport,
    evidence: Vec<Evidence>,
}

impl Predicates<'_> {
    fn record(&mut self, name: String, t: Truth) -> Truth {
        if !self.evidence.iter().any(|e| e.predicate == name) {
            self.evidence.push(Evidence {
                predicate: name,
                value: t,
            });
        }
        t
    }

    fn label(i: usize) -> &'static str {
        if i == 0 {
            "1,2"
        } else {
            "2,1"
        }
    }

    fn h_inf(&mut self, i: usize) -> Truth {
        let (h, _, s) = self.sides[i].effective_upper();
        let t = is_divergent(h);
        let name = format!("H{}{}(inf) = inf", Self::label(i), if s { "'" } else { "" });
        self.record(name, t)
    }

    fn p_bar_finite(&mut self, i: usize) -> Truth {
        let (_, p, s) = self.sides[i].effective_upper();
        let t = is_finite(p);
        let name = format!("P_bar{}{}(inf) < inf", Self::label(i), if s { "'" } else { "" });
        self.record(name, t)
    }

    fn p_under_inf(&mut self, i: usize) -> Truth {
        let t = is_divergent(&self.sides[i].p_under);
        self.record(format!("P_under{}(inf) = inf", Self::label(i)), t)
    }

    fn sandwich(&mut self, i: usize) -> Truth {
        let side = &self.sides[i];
        let (h, p, s) = side.effective_upper();
        let t = below_finite(side.k_bar, p, h);
        let prime = if s { "'" } else { "" };
        let name = format!("k_bar P_bar{0}{prime}(inf) < H{0}{prime}(inf) < inf", Self::label(i));
        self.record(name, t)
    }

    fn c1(&mut self) -> Truth {
        let t = Truth::from_bool(self.hyp.c1_holds());
        self.record("C1".into(), t)
    }

    /// The upper growth condition, waived on a side whose simplified pair is in use.
    fn c2(&mut self) -> Truth {
        let t = Truth::from_bool((0..2).all(|i| self.hyp.c2[i].passed() || self.sides[i].simplified.is_some()));
        self.record("C2".into(), t)
    }

    fn c3(&mut self, i: usize) -> Truth {
        let t = Truth::from_bool(self.hyp.c3[i].passed());
        self.record(format!("C3 (equation {})", i + 1), t)
    }

    fn all(&mut self, parts: &[&dyn Fn(&mut Self) -> Truth]) -> Truth {
        let mut acc = Truth::True;
        for p in parts {
            acc = acc.and(p(self));
        }
        acc
    }
}

struct Rule {
    name: &'static str,
    verdict: Verdict,
    bounded: [bool; 2],
    eval: fn(&mut Predicates<'_>) -> Truth,
}

const RULES: [Rule; 7] = [
    Rule {
        name: "th1-large",
        verdict: Verdict::BothLarge,
        bounded: [false, false],
        eval: |p| {
            p.all(&[
                &|p| p.h_inf(0),
                &|p| p.h_inf(1),
                &|p| p.c1(),
                &|p| p.c2(),
                &|p| p.c3(0),
                &|p| p.c3(1),
                &|p| p.p_under_inf(0),
                &|p| p.p_under_inf(1),
            ])
        },
    },
    Rule {
        name: "th12",
        verdict: Verdict::BothBounded,
        bounded: [true, true],
        eval: |p| {
            p.all(&[
                &|p| p.h_inf(0),
                &|p| p.h_inf(1),
                &|p| p.c1(),
                &|p| p.c2(),
                &|p| p.p_bar_finite(0),
                &|p| p.p_bar_finite(1),
            ])
        },
    },
    Rule {
        name: "th13-1",
        verdict: Verdict::UBoundedVLarge,
        bounded: [true, false],
        eval: |p| {
            p.all(&[
                &|p| p.h_inf(0),
                &|p| p.h_inf(1),
                &|p| p.c1(),
                &|p| p.c2(),
                &|p| p.c3(1),
                &|p| p.p_bar_finite(0),
                &|p| p.p_under_inf(1),
            ])
        },
    },
    Rule {
        name: "th13-2",
        verdict: Verdict::ULargeVBounded,
        bounded: [false, true],
        eval: |p| {
            p.all(&[
                &|p| p.h_inf(0),
                &|p| p.h_inf(1),
                &|p| p.c1(),
                &|p| p.c2(),
                &|p| p.c3(0),
                &|p| p.p_bar_finite(1),
                &|p| p.p_under_inf(0),
            ])
        },
    },
    Rule {
        name: "th2",
        verdict: Verdict::BothBounded,
        bounded: [true, true],
        eval: |p| p.all(&[&|p| p.c1(), &|p| p.c2(), &|p| p.sandwich(0), &|p| p.sandwich(1)]),
    },
    Rule {
        name: "th21",
        verdict: Verdict::ULargeVBounded,
        bounded: [false, true],
        eval: |p| {
            p.all(&[
                &|p| p.c1(),
                &|p| p.c2(),
                &|p| p.c3(0),
                &|p| p.h_inf(0),
                &|p| p.p_under_inf(0),
                &|p| p.sandwich(1),
            ])
        },
    },
    Rule {
        name: "th22",
        verdict: Verdict::UBoundedVLarge,
        bounded: [true, false],
        eval: |p| {
            p.all(&[
                &|p| p.c1(),
                &|p| p.c2(),
                &|p| p.c3(1),
                &|p| p.h_inf(1),
                &|p| p.p_under_inf(1),
                &|p| p.sandwich(0),
            ])
        },
    },
];

fn fallback(p: &mut Predicates<'_>) -> Truth {
    p.all(&[&|p| p.h_inf(0), &|p| p.h_inf(1), &|p| p.c1(), &|p| p.c2()])
}

fn same_sampled(a: &ScalarFn, b: &ScalarFn) -> bool {
    log_space(1e-3, 1e6, 64)
        .into_iter()
        .all(|t| match (a.eval(t), b.eval(t)) {
            (Ok(x), Ok(y)) => (x - y).abs() <= 1e-12 * x.abs().max(y.abs()).max(1e-300),
            _ => false,
        })
}

fn converse(spec: &ProblemSpec, report: &CriteriaReport, verdict: Verdict) -> ConverseAdvisory {
    let enabled = spec.eqs.iter().all(|eq| match (&eq.upper, &eq.lower) {
        (Some(up), Some(low)) => {
            up.c_bar == low.c_under
                && eq.env.k_bar == 1.0
                && eq.env.psi_bar_is_h_inverse()
                && same_sampled(&up.xi_bar, &low.xi_under)
        }
        _ => false,
    });
    if !enabled {
        return ConverseAdvisory {
            enabled,
            consistent: None,
            note: "lower and upper data differ; necessary condition not checked".into(),
        };
    }
    let diverge = report
        .sides
        .iter()
        .map(|s| s.p_bar.verdict().map(|v| v.is_divergent()))
        .collect::<Option<Vec<_>>>();
    let (consistent, note) = match (verdict, diverge) {
        (Verdict::BothLarge, Some(d)) if d.iter().all(|x| *x) => {
            (Some(true), "large solution and both P_bar divergent".to_string())
        }
        (Verdict::BothLarge, Some(_)) => (
            Some(false),
            "large solution requires both P_bar to diverge, but one does not".to_string(),
        ),
        (Verdict::BothLarge, None) => (None, "P_bar unavailable".to_string()),
        _ => (None, "applies to large verdicts only".to_string()),
    };
    ConverseAdvisory {
        enabled,
        consistent,
        note,
    }
}

/// Apply the decision table; the first rule not refuted decides.
pub fn classify(spec: &ProblemSpec, report: &CriteriaReport, hyp: &HypothesisReport) -> Classification {
    let mut p = Predicates {
        sides: &report.sides,
        hyp,
        evidence: Vec::new(),
    };
    let simplified = report.simplified_constants();
    let mut decided: Option<(&Rule, Truth)> = None;
    let mut warnings = Vec::new();
    for rule in &RULES {
        let t = (rule.eval)(&mut p);
        match (decided, t) {
            (_, Truth::False) => {}
            (None, t) => {
                decided = Some((rule, t));
                if t == Truth::Unknown {
                    break;
                }
            }
            (Some((first, _)), Truth::True) if first.verdict != rule.verdict => warnings.push(format!(
                "rule {} also matches with {}; {} takes precedence",
                rule.name, rule.verdict, first.name
            )),
            _ => {}
        }
    }
    let (verdict, matched_rule, bounds) = match decided {
        Some((rule, Truth::True)) => (
            rule.verdict,
            rule.name.to_string(),
            rule.bounded.iter().any(|b| *b).then(|| BoundsData {
                sides: rule.bounded,
                simplified: [0, 1].map(|i| if rule.bounded[i] { simplified[i] } else { None }),
            }),
        ),
        Some((rule, _)) => (Verdict::Indeterminate, rule.name.to_string(), None),
        None => match fallback(&mut p) {
            Truth::True => (Verdict::ExistsUnclassified, "th1-existence".to_string(), None),
            Truth::Unknown => (Verdict::Indeterminate, "th1-existence".to_string(), None),
            Truth::False => (Verdict::Indeterminate, "none".to_string(), None),
        },
    };
    Classification {
        verdict,
        matched_rule,
        evidence: p.evidence,
        bounds,
        converse: converse(spec, report, verdict),
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossCheckOptions {
    pub growth_margin: f64,
    pub sandwich_tol: f64,
}

impl Default for CrossCheckOptions {
    fn default() -> Self {
        CrossCheckOptions {
            growth_margin: 1e-6,
            sandwich_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ComponentCheck {
    pub expected: Growth,
    /// `None` when nothing is predicted or the check could not run.
    pub agrees: Option<bool>,
    pub late_increment: f64,
    pub early_increment: f64,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyReport {
    pub components: [ComponentCheck; 2],
    pub agree: bool,
}

fn value_at(sol: &RadialSolution, x: &[f64], r: f64) -> f64 {
    let k = sol.r.partition_point(|&s| s < r).min(sol.r.len() - 1);
    x[k]
}

/// Confront a verdict with a computed solution on `[0, r_max]`.
pub fn cross_check(
    spec: &ProblemSpec,
    class: &Classification,
    sol: &RadialSolution,
    opts: &CrossCheckOptions,
) -> ConsistencyReport {
    let r_max = *sol.r.last().expect("nonempty grid");
    let expected = class.verdict.components();
    let mut sandwich = class.bounds.as_ref().map(|b| Sandwich::new(spec, &sol.r, b.simplified));
    let comps = [0, 1].map(|i| {
        let x = if i == 0 { &sol.u } else { &sol.v };
        let top = x[x.len() - 1];
        let half = value_at(sol, x, 0.5 * r_max);
        let quarter = value_at(sol, x, 0.25 * r_max);
        let late = top - half;
        let early = half - quarter;
        let (agrees, detail) = match expected[i] {
            Growth::Unspecified => (None, "no growth prediction".to_string()),
            Growth::Large => {
                let ok = late > opts.growth_margin;
                (Some(ok), format!("x(r_max) - x(r_max/2) = {late:e}"))
            }
            Growth::Bounded => {
                let flat = late < early || late <= opts.growth_margin;
                let upper = sandwich.as_mut().and_then(|s| s.check_upper(i, x, opts.sandwich_tol));
                match upper {
                    Some(Ok(c)) => (
                        Some(flat && c.holds),
                        format!(
                            "increments {early:e} then {late:e}; upper bound excess {:e} at r = {}",
                            c.worst_excess, c.at_radius
                        ),
                    ),
                    Some(Err(e)) => (Some(false), format!("upper bound evaluation failed: {e}")),
                    None => (
                        Some(flat),
                        format!("increments {early:e} then {late:e}; no upper bound data"),
                    ),
                }
            }
        };
        ComponentCheck {
            expected: expected[i],
            agrees,
            late_increment: late,
            early_increment: early,
            detail,
        }
    });
    let agree = comps.iter().all(|c| c.agrees != Some(false));
    ConsistencyReport {
        components: comps,
        agree,
    }
}
