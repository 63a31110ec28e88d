//! Bayesian calibration of fine-model parameters against the coarse-model
//! QoI, with the goal-oriented error estimate standing in for the fine
//! solve in the likelihood.
//!
//! Scalars are `f64` throughout; the PDE layer underneath may be generic.

mod diagnostics;
mod sampler;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::goal::{solve_error_forward, ModelPair};

pub use diagnostics::{write_chain_csv, write_diagnostics_csv, write_summary_json};
pub use sampler::{
    mh_step, run_chains, summarize, AcceptedSample, CalibrationRun, ChainRecord, ChainState,
    PosteriorSummary, SamplerConfig,
};

/// `ln θ ~ N(μ, diag(s²))`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalPrior {
    ln_mean: Vec<f64>,
    ln_std: Vec<f64>,
}

impl LognormalPrior {
    pub fn new(ln_mean: Vec<f64>, ln_std: Vec<f64>) -> Result<Self> {
        if ln_mean.is_empty() || ln_mean.len() != ln_std.len() {
            return Err(Error::InvalidArgument(format!(
                "prior needs matching non-empty ln_mean and ln_std, got {} and {}",
                ln_mean.len(),
                ln_std.len()
            )));
        }
        if let Some(s) = ln_std.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
            return Err(Error::InvalidArgument(format!("ln_std entries must be positive, got {s}")));
        }
        if ln_mean.iter().any(|m| !m.is_finite()) {
            return Err(Error::InvalidArgument("ln_mean entries must be finite".into()));
        }
        Ok(Self { ln_mean, ln_std })
    }

    /// Prior on (κ, α) for the elliptic pair.
    pub fn elliptic_default() -> Self {
        Self::new(vec![-0.6535, 2.5475], vec![0.1997, 0.5003]).expect("valid constants")
    }

    /// `μ = ln(0.5, 0.1, 0.01, 1) + 0.16`, `s = 0.4` on (λᵖ, λᵈ, ε, C).
    pub fn tumor_default() -> Self {
        let mean = [0.5f64, 0.1, 0.01, 1.0].iter().map(|t| t.ln() + 0.16).collect();
        Self::new(mean, vec![0.4; 4]).expect("valid constants")
    }

    pub fn dim(&self) -> usize {
        self.ln_mean.len()
    }

    pub fn ln_mean(&self) -> &[f64] {
        &self.ln_mean
    }

    pub fn ln_std(&self) -> &[f64] {
        &self.ln_std
    }

    /// `exp(μ)` componentwise.
    pub fn median(&self) -> Vec<f64> {
        self.ln_mean.iter().map(|m| m.exp()).collect()
    }

    /// Log-density in θ, including normalization and the `1/θᵢ` Jacobian;
    /// `−∞` if any component is non-positive or the length is wrong.
    pub fn log_density(&self, theta: &[f64]) -> f64 {
        if theta.len() != self.dim() || theta.iter().any(|t| !(*t > 0.0)) {
            return f64::NEG_INFINITY;
        }
        theta
            .iter()
            .zip(&self.ln_mean)
            .zip(&self.ln_std)
            .map(|((t, m), s)| {
                let z = (t.ln() - m) / s;
                -0.5 * z * z - t.ln() - (s * (2.0 * PI).sqrt()).ln()
            })
            .sum()
    }

    pub fn sample(&self, rng: &mut impl rand::Rng) -> Vec<f64> {
        use rand_distr::{Distribution, StandardNormal};
        self.ln_mean
            .iter()
            .zip(&self.ln_std)
            .map(|(m, s)| {
                let z: f64 = StandardNormal.sample(rng);
                (m + s * z).exp()
            })
            .collect()
    }
}

/// Zero-mean Gaussian density of the total (modeling plus data) error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    sigma: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self { sigma: 0.01 }
    }
}

impl NoiseModel {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::InvalidArgument(format!("noise sigma must be positive, got {sigma}")));
        }
        Ok(Self { sigma })
    }

    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `ΔQ̂² / (2σ²)`; the normalization constant is not included.
    pub fn cost(&self, dq: f64) -> f64 {
        dq * dq / (2.0 * self.sigma * self.sigma)
    }

    /// `−cost − ln(σ√(2π))`
    pub fn log_likelihood(&self, dq: f64) -> f64 {
        -self.cost(dq) - (self.sigma * (2.0 * PI).sqrt()).ln()
    }
}

/// Target evaluation at one parameter vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Evaluation {
    pub log_posterior: f64,
    /// Likelihood misfit `ΔQ̂²/(2σ²)`; zero for targets without one.
    pub cost: f64,
    /// `ΔQ̂ = Q(θ₀; u₀) − Q(θ; u)` (estimated or exact); NaN if not defined.
    pub qoi_error: f64,
}

/// Unnormalized log-posterior the sampler draws from.
pub trait LogTarget: Sync {
    fn dim(&self) -> usize;

    fn evaluate(&self, theta: &[f64]) -> Evaluation;

    fn prior(&self) -> &LognormalPrior;

    /// `Q(θ₀; u₀)`, when the target has one.
    fn reference_qoi(&self) -> Option<f64> {
        None
    }
}

/// The prior alone as a target.
#[derive(Debug, Clone)]
pub struct PriorTarget(pub LognormalPrior);

impl LogTarget for PriorTarget {
    fn dim(&self) -> usize {
        self.0.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        Evaluation {
            log_posterior: self.0.log_density(theta),
            cost: 0.0,
            qoi_error: f64::NAN,
        }
    }

    fn prior(&self) -> &LognormalPrior {
        &self.0
    }
}

/// A target given by a closure for the log-density; the prior is only used
/// to draw starting points.
pub struct FnTarget<F> {
    pub log_density: F,
    pub start: LognormalPrior,
}

impl<F: Fn(&[f64]) -> f64 + Sync> LogTarget for FnTarget<F> {
    fn dim(&self) -> usize {
        self.start.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        Evaluation {
            log_posterior: (self.log_density)(theta),
            cost: 0.0,
            qoi_error: f64::NAN,
        }
    }

    fn prior(&self) -> &LognormalPrior {
        &self.start
    }
}

/// How the likelihood obtains `Q(θ; u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LikelihoodMode {
    /// `ΔQ̂ = −Q(ê₀)` from one linearized error solve.
    #[default]
    Estimate,
    /// `ΔQ̂ = Q(u₀) − Q(u)` from a fine solve.
    Exact,
}

/// Prior, noise model and model pair with its coarse solution cached.
pub struct CalibrationContext<P: ModelPair<f64>> {
    pair: P,
    u0: P::State,
    q0: f64,
    prior: LognormalPrior,
    noise: NoiseModel,
    mode: LikelihoodMode,
}

impl<P: ModelPair<f64>> CalibrationContext<P> {
    pub fn new(pair: P, prior: LognormalPrior, noise: NoiseModel, mode: LikelihoodMode) -> Result<Self> {
        let m = pair.fine_parameters().len();
        if prior.dim() != m {
            return Err(Error::InvalidArgument(format!(
                "prior has {} components, model has {m} parameters",
                prior.dim()
            )));
        }
        let u0 = pair.solve_coarse_forward()?;
        let q0 = pair.qoi(&u0);
        Ok(Self {
            pair,
            u0,
            q0,
            prior,
            noise,
            mode,
        })
    }

    pub fn pair(&self) -> &P {
        &self.pair
    }

    pub fn coarse_solution(&self) -> &P::State {
        &self.u0
    }

    pub fn coarse_qoi(&self) -> f64 {
        self.q0
    }

    pub fn noise(&self) -> NoiseModel {
        self.noise
    }

    pub fn mode(&self) -> LikelihoodMode {
        self.mode
    }

    /// `ΔQ̂(θ)` according to the likelihood mode.
    pub fn qoi_error(&self, theta: &[f64]) -> Result<f64> {
        let pair = self.pair.with_fine_parameters(theta)?;
        match self.mode {
            LikelihoodMode::Estimate => {
                let e_hat = solve_error_forward(&pair, &self.u0)?;
                Ok(-pair.qoi_derivative(&self.u0, &e_hat))
            }
            LikelihoodMode::Exact => {
                let u = pair.solve_fine_forward()?;
                Ok(self.q0 - pair.qoi(&u))
            }
        }
    }

    pub fn log_likelihood(&self, theta: &[f64]) -> f64 {
        match self.qoi_error(theta) {
            Ok(dq) => self.noise.log_likelihood(dq),
            Err(e) => {
                log::warn!("likelihood evaluation failed at {theta:?}: {e}");
                f64::NEG_INFINITY
            }
        }
    }
}

impl<P: ModelPair<f64>> LogTarget for CalibrationContext<P> {
    fn dim(&self) -> usize {
        self.prior.dim()
    }

    fn evaluate(&self, theta: &[f64]) -> Evaluation {
        let lp = self.prior.log_density(theta);
        if lp == f64::NEG_INFINITY {
            return Evaluation {
                log_posterior: lp,
                cost: f64::INFINITY,
                qoi_error: f64::NAN,
            };
        }
        match self.qoi_error(theta) {
            Ok(dq) if dq.is_finite() => Evaluation {
                log_posterior: lp + self.noise.log_likelihood(dq),
                cost: self.noise.cost(dq),
                qoi_error: dq,
            },
            Ok(dq) => {
                log::warn!("non-finite QoI error {dq} at {theta:?}");
                Evaluation {
                    log_posterior: f64::NEG_INFINITY,
                    cost: f64::INFINITY,
                    qoi_error: dq,
                }
            }
            Err(e) => {
                log::warn!("likelihood evaluation failed at {theta:?}: {e}");
                Evaluation {
                    log_posterior: f64::NEG_INFINITY,
                    cost: f64::INFINITY,
                    qoi_error: f64::NAN,
                }
            }
        }
    }

    fn prior(&self) -> &LognormalPrior {
        &self.prior
    }

    fn reference_qoi(&self) -> Option<f64> {
        Some(self.q0)
    }
}
