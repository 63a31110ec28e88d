use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

use super::estimators::{estimate_q_ehat, estimate_xi1, solve_error_forward};
use super::pair::ModelPair;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderRow {
    pub s: f64,
    pub exact_error: f64,
    /// `Ξ₁` evaluated with the fine adjoint.
    pub xi1: f64,
    pub q_ehat: f64,
    pub xi1_deficit: f64,
    pub q_ehat_deficit: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    pub rows: Vec<OrderRow>,
    /// Log-log slope of `|exact − Ξ₁|` against `|exact|`.
    pub xi1_slope: Option<f64>,
    /// Log-log slope of `|exact − Q(ê₀)|` against `|exact|`.
    pub q_ehat_slope: Option<f64>,
    /// Level and message of the first failed level; rows stop before it.
    pub aborted: Option<(f64, String)>,
}

/// Least-squares slope of `ln y` against `ln x`. Pairs with a non-positive
/// or non-finite coordinate are skipped; fewer than two usable points gives
/// `None`.
pub fn fit_loglog_slope(x: &[f64], y: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = x
        .iter()
        .zip(y)
        .filter(|(a, b)| **a > 0.0 && **b > 0.0 && a.is_finite() && b.is_finite())
        .map(|(a, b)| (a.ln(), b.ln()))
        .collect();
    if pts.len() < 2 {
        return None;
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

fn level<T: Real, P: ModelPair<T>>(pair: &P, s: f64) -> Result<OrderRow> {
    let u0 = pair.solve_coarse_forward()?;
    let u = pair.solve_fine_forward()?;
    let p = pair.solve_fine_adjoint(&u)?;
    let exact = pair.qoi(&u) - pair.qoi(&u0);
    let xi1 = estimate_xi1(pair, &u0, &p)?;
    let e_hat = solve_error_forward(pair, &u0)?;
    let q_ehat = estimate_q_ehat(pair, &u0, &e_hat);
    Ok(OrderRow {
        s,
        exact_error: exact.as_f64(),
        xi1: xi1.as_f64(),
        q_ehat: q_ehat.as_f64(),
        xi1_deficit: (exact - xi1).abs().as_f64(),
        q_ehat_deficit: (exact - q_ehat).abs().as_f64(),
    })
}

/// Evaluates the estimators along a mismatch homotopy `s ↦ family(s)` (with
/// `s = 0` meaning coinciding models) and fits the decay rate of the
/// estimator deficits. Levels run concurrently; a failing level truncates
/// the table there.
pub fn order_study<T, P, F>(family: F, levels: &[f64]) -> Result<OrderStudy>
where
    T: Real,
    P: ModelPair<T>,
    F: Fn(f64) -> Result<P> + Sync,
{
    if levels.is_empty() {
        return Err(Error::InvalidArgument("order study needs at least one level".into()));
    }
    let results: Vec<Result<OrderRow>> = levels
        .par_iter()
        .map(|&s| family(s).and_then(|pair| level(&pair, s)))
        .collect();

    let mut rows = Vec::with_capacity(levels.len());
    let mut aborted = None;
    for (r, &s) in results.into_iter().zip(levels) {
        match r {
            Ok(row) => rows.push(row),
            Err(e) => {
                log::warn!("order study level s={s} failed: {e}");
                aborted = Some((s, e.to_string()));
                break;
            }
        }
    }
    let scale: Vec<f64> = rows.iter().map(|r| r.exact_error.abs()).collect();
    let xi1_def: Vec<f64> = rows.iter().map(|r| r.xi1_deficit).collect();
    let qe_def: Vec<f64> = rows.iter().map(|r| r.q_ehat_deficit).collect();
    Ok(OrderStudy {
        xi1_slope: fit_loglog_slope(&scale, &xi1_def),
        q_ehat_slope: fit_loglog_slope(&scale, &qe_def),
        rows,
        aborted,
    })
}
