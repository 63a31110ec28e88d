//! Goal-oriented error machinery written against [`ModelPair`]: residuals,
//! the estimators Ξ₁ and Ξ₂, first- and second-order approximate error
//! problems, and the convergence-order harness.

mod estimators;
mod order;
mod pair;
mod report;

pub use estimators::{
    adjoint_residual, adjoint_residual_dual, estimate_q_ehat, estimate_xi1, estimate_xi2,
    residual, residual_dual, solve_error_forward, solve_errors_first_order,
    solve_errors_second_order, ApproximateErrors, SecondOrderOptions,
};
pub use order::{fit_loglog_slope, order_study, OrderRow, OrderStudy};
pub use pair::{ModelPair, StateVector};
pub use report::{analyze, Analysis, ErrorEstimateReport, ErrorSource, EstimateProvenance};
