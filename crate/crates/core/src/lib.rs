//! Radial φ-Laplacian systems: iterative solver, growth criteria and classifier.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classifier;
pub mod criteria;
pub mod expr;
pub mod func;
pub mod iteration;
pub mod model;
pub mod operators;
pub mod oracle;
pub mod par;
pub mod quadrature;

pub use classifier::{classify, cross_check, Classification, ConsistencyReport, Verdict};
pub use criteria::{build_report, CriteriaOptions, CriteriaReport};
pub use expr::Expr;
pub use iteration::{solve, RadialSolution, SolveOptions};
pub use model::{assemble, check_hypotheses, ProblemInput, ProblemSpec};
pub use operators::{PhiFamily, PhiOperator};
pub use quadrature::{LimitVerdict, ProbeSchedule, RadialGrid};
