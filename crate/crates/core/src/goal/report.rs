use std::fmt;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::estimators::{
    estimate_q_ehat, estimate_xi1, estimate_xi2, solve_errors_first_order,
    solve_errors_second_order, SecondOrderOptions,
};
use super::pair::{ModelPair, StateVector};

/// Where the error pair `(e, ε)` fed to the estimators came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ErrorSource {
    /// `e = u − u₀`, `ε = p − p₀` from fine solves.
    ExactSolve,
    FirstOrder,
    SecondOrder,
}

impl fmt::Display for ErrorSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ErrorSource::ExactSolve => "exact-solve",
            ErrorSource::FirstOrder => "first-order",
            ErrorSource::SecondOrder => "second-order",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateProvenance {
    pub estimate: String,
    pub formula: String,
    pub error_source: ErrorSource,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorEstimateReport {
    pub q_coarse: f64,
    pub q_fine_exact: Option<f64>,
    pub exact_error: Option<f64>,
    pub xi1: f64,
    pub xi2: f64,
    pub q_ehat: f64,
    pub error_source: ErrorSource,
    pub provenance: Vec<EstimateProvenance>,
    pub fine_parameters: Vec<f64>,
    pub coarse_parameters: Vec<f64>,
    /// Newton iterations on the quadratic error problem (second order only).
    pub newton_iterations: usize,
    pub elapsed_seconds: f64,
}

impl ErrorEstimateReport {
    fn provenance_for(source: ErrorSource) -> Vec<EstimateProvenance> {
        let p = match source {
            ErrorSource::ExactSolve => "p",
            _ => "p0 + eps_hat",
        };
        let (e, eps) = match source {
            ErrorSource::ExactSolve => ("u - u0", "p - p0"),
            _ => ("e_hat", "eps_hat"),
        };
        let entry = |estimate: &str, formula: String| EstimateProvenance {
            estimate: estimate.into(),
            formula,
            error_source: source,
        };
        vec![
            entry("xi1", format!("R(u0; {p})")),
            entry(
                "xi2",
                format!("R(u0; p0 + {eps}) - Q''(u0; {e}, {e}) + B''(u0; {e}, {e}, p0 + ({eps})/2)"),
            ),
            entry("q_ehat", format!("Q'(u0; {e})")),
        ]
    }
}

/// Coarse and (optionally) fine solutions plus one report per requested
/// error source.
#[derive(Debug, Clone)]
pub struct Analysis<S> {
    pub u0: S,
    pub p0: S,
    /// `(u, p)` when fine solves were requested.
    pub fine: Option<(S, S)>,
    pub reports: Vec<ErrorEstimateReport>,
}

/// Runs the estimators for each requested source. Fine solves are done when
/// `with_exact` is set or [`ErrorSource::ExactSolve`] is requested.
pub fn analyze<T: Real, P: ModelPair<T>>(
    pair: &P,
    sources: &[ErrorSource],
    with_exact: bool,
    second_order: &SecondOrderOptions<T>,
) -> Result<Analysis<P::State>> {
    let u0 = pair.solve_coarse_forward()?;
    let p0 = pair.solve_coarse_adjoint(&u0)?;
    let q_coarse = pair.qoi(&u0);

    let need_fine = with_exact || sources.contains(&ErrorSource::ExactSolve);
    let fine = if need_fine {
        let u = pair.solve_fine_forward()?;
        let p = pair.solve_fine_adjoint(&u)?;
        Some((u, p))
    } else {
        None
    };
    let q_fine = fine.as_ref().map(|(u, _)| pair.qoi(u));

    let mut reports = Vec::with_capacity(sources.len());
    for &source in sources {
        let start = Instant::now();
        let (e, eps, newton_iterations) = match source {
            ErrorSource::ExactSolve => {
                let (u, p) = fine.as_ref().ok_or_else(|| {
                    Error::InvalidArgument("exact error source needs fine solves".into())
                })?;
                (u.combine(-T::one(), &u0), p.combine(-T::one(), &p0), 0)
            }
            ErrorSource::FirstOrder => {
                let a = solve_errors_first_order(pair, &u0, &p0)?;
                (a.e_hat, a.eps_hat, a.newton_iterations)
            }
            ErrorSource::SecondOrder => {
                let a = solve_errors_second_order(pair, &u0, &p0, second_order)?;
                (a.e_hat, a.eps_hat, a.newton_iterations)
            }
        };
        let p = p0.combine(T::one(), &eps);
        let xi1 = estimate_xi1(pair, &u0, &p)?;
        let xi2 = estimate_xi2(pair, &u0, &p0, &e, &eps)?;
        let q_ehat = estimate_q_ehat(pair, &u0, &e);
        reports.push(ErrorEstimateReport {
            q_coarse: q_coarse.as_f64(),
            q_fine_exact: q_fine.map(|q| q.as_f64()),
            exact_error: q_fine.map(|q| (q - q_coarse).as_f64()),
            xi1: xi1.as_f64(),
            xi2: xi2.as_f64(),
            q_ehat: q_ehat.as_f64(),
            error_source: source,
            provenance: ErrorEstimateReport::provenance_for(source),
            fine_parameters: pair.fine_parameters().iter().map(|v| v.as_f64()).collect(),
            coarse_parameters: pair.coarse_parameters().iter().map(|v| v.as_f64()).collect(),
            newton_iterations,
            elapsed_seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok(Analysis {
        u0,
        p0,
        fine,
        reports,
    })
}
