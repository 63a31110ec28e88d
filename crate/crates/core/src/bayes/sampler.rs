use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Evaluation, LogTarget};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub n_chains: usize,
    /// Proposals per chain.
    pub max_samples: usize,
    /// Fraction of each chain's accepted samples discarded as burn-in. The
    /// same fraction of proposals is the adaptation window.
    pub burn_in_fraction: f64,
    pub seed: u64,
    /// Initial random-walk step per component, as a multiple of the prior
    /// ln-std.
    pub initial_scale: f64,
    pub adapt: bool,
    /// Proposals between scale updates during adaptation.
    pub adapt_interval: usize,
    /// Acceptance band the adaptation steers into.
    pub target_acceptance: (f64, f64),
    /// Acceptance below this after adaptation flags the chain.
    pub low_acceptance: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            n_chains: 4,
            max_samples: 5000,
            burn_in_fraction: 0.5,
            seed: 0,
            initial_scale: 0.25,
            adapt: true,
            adapt_interval: 50,
            target_acceptance: (0.2, 0.4),
            low_acceptance: 0.01,
        }
    }
}

impl SamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if self.n_chains == 0 {
            return bad("n_chains must be at least 1");
        }
        if self.max_samples == 0 {
            return bad("max_samples must be at least 1");
        }
        if !(0.0..1.0).contains(&self.burn_in_fraction) {
            return bad("burn_in_fraction must lie in [0, 1)");
        }
        if !(self.initial_scale >= 0.0 && self.initial_scale.is_finite()) {
            return bad("initial_scale must be non-negative");
        }
        let (lo, hi) = self.target_acceptance;
        if !(0.0 < lo && lo < hi && hi < 1.0) {
            return bad("target_acceptance must satisfy 0 < low < high < 1");
        }
        if self.adapt && self.adapt_interval == 0 {
            return bad("adapt_interval must be positive");
        }
        Ok(())
    }

    fn adaptation_window(&self) -> usize {
        if self.adapt {
            (self.burn_in_fraction * self.max_samples as f64).floor() as usize
        } else {
            0
        }
    }
}

/// Current point of a chain.
#[derive(Debug, Clone, PartialEq)]
pub struct ChainState {
    pub theta: Vec<f64>,
    pub eval: Evaluation,
}

/// One accepted proposal.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AcceptedSample {
    /// 1-based index of the proposal that was accepted.
    pub proposal_index: usize,
    pub theta: Vec<f64>,
    pub cost: f64,
    pub qoi_error: f64,
    /// Accepted samples so far, this one included.
    pub accepted_count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainRecord {
    pub chain: usize,
    pub seed: u64,
    pub initial_theta: Vec<f64>,
    pub accepted: Vec<AcceptedSample>,
    pub proposals: usize,
    /// Per proposal: cost and QoI error of the chain state after it.
    pub cost_series: Vec<f64>,
    pub qoi_error_series: Vec<f64>,
    /// Per proposal: accepted so far divided by proposals so far.
    pub running_acceptance: Vec<f64>,
    /// Random-walk step per component after adaptation.
    pub final_scale: Vec<f64>,
    pub adaptation_window: usize,
    /// Acceptance over the proposals after the adaptation window.
    pub post_adaptation_acceptance: f64,
    pub low_acceptance: bool,
}

impl ChainRecord {
    pub fn acceptance_rate(&self) -> f64 {
        if self.proposals == 0 {
            0.0
        } else {
            self.accepted.len() as f64 / self.proposals as f64
        }
    }

    /// Accepted samples after discarding the leading burn-in fraction.
    pub fn post_burn_in(&self, fraction: f64) -> &[AcceptedSample] {
        let skip = (fraction * self.accepted.len() as f64).floor() as usize;
        &self.accepted[skip.min(self.accepted.len())..]
    }

    /// Relative change of the running mean of the accepted-sample cost over
    /// the second half of the chain: mean over the [50%, 75%] span against
    /// the mean over [50%, 100%]. `None` with fewer than four samples in the
    /// second half.
    pub fn cost_stabilization(&self) -> Option<f64> {
        let n = self.accepted.len();
        let half = n / 2;
        let three_q = (3 * n) / 4;
        if n - half < 4 || three_q <= half {
            return None;
        }
        let mean = |s: &[AcceptedSample]| s.iter().map(|a| a.cost).sum::<f64>() / s.len() as f64;
        let partial = mean(&self.accepted[half..three_q]);
        let full = mean(&self.accepted[half..]);
        let denom = full.abs().max(f64::MIN_POSITIVE);
        Some((partial - full).abs() / denom)
    }
}

/// One Metropolis step: Gaussian random walk in `ln θ` with per-component
/// `scale`. Returns whether the proposal was accepted.
pub fn mh_step<R: rand::Rng>(
    state: &mut ChainState,
    scale: &[f64],
    target: &dyn LogTarget,
    rng: &mut R,
) -> bool {
    let proposal: Vec<f64> = state
        .theta
        .iter()
        .zip(scale)
        .map(|(t, s)| {
            let z: f64 = StandardNormal.sample(rng);
            (t.ln() + s * z).exp()
        })
        .collect();
    let eval = target.evaluate(&proposal);
    // The proposal is symmetric in ln θ; the density lives in θ, so the
    // Hastings ratio carries the Jacobian θ'/θ.
    let log_jacobian: f64 = proposal
        .iter()
        .zip(&state.theta)
        .map(|(p, t)| p.ln() - t.ln())
        .sum();
    let log_alpha = eval.log_posterior - state.eval.log_posterior + log_jacobian;
    let u: f64 = rng.random();
    let accept = eval.log_posterior > f64::NEG_INFINITY && (log_alpha >= 0.0 || u.ln() < log_alpha);
    if accept {
        state.theta = proposal;
        state.eval = eval;
    }
    accept
}

fn chain_seed(seed: u64, chain: usize) -> u64 {
    seed.wrapping_add((chain as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

fn run_chain(target: &dyn LogTarget, cfg: &SamplerConfig, chain: usize) -> Result<ChainRecord> {
    let seed = chain_seed(cfg.seed, chain);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let prior = target.prior();

    let mut start = None;
    for _ in 0..100 {
        let theta = prior.sample(&mut rng);
        let eval = target.evaluate(&theta);
        if eval.log_posterior.is_finite() {
            start = Some(ChainState { theta, eval });
            break;
        }
    }
    let mut state = start.ok_or_else(|| {
        Error::InvalidArgument(format!("chain {chain}: no prior draw with finite posterior in 100 tries"))
    })?;
    let initial_theta = state.theta.clone();

    let mut scale: Vec<f64> = prior.ln_std().iter().map(|s| s * cfg.initial_scale).collect();
    let window = cfg.adaptation_window();
    let mut accepted = Vec::new();
    let mut cost_series = Vec::with_capacity(cfg.max_samples);
    let mut qoi_error_series = Vec::with_capacity(cfg.max_samples);
    let mut running_acceptance = Vec::with_capacity(cfg.max_samples);
    let mut batch_accepts = 0usize;
    let mut post_accepts = 0usize;

    for i in 1..=cfg.max_samples {
        let ok = mh_step(&mut state, &scale, target, &mut rng);
        if ok {
            accepted.push(AcceptedSample {
                proposal_index: i,
                theta: state.theta.clone(),
                cost: state.eval.cost,
                qoi_error: state.eval.qoi_error,
                accepted_count: accepted.len() + 1,
            });
            batch_accepts += 1;
            if i > window {
                post_accepts += 1;
            }
        }
        cost_series.push(state.eval.cost);
        qoi_error_series.push(state.eval.qoi_error);
        running_acceptance.push(accepted.len() as f64 / i as f64);

        if i <= window && i % cfg.adapt_interval == 0 {
            let rate = batch_accepts as f64 / cfg.adapt_interval as f64;
            let factor = if rate < cfg.target_acceptance.0 {
                0.7
            } else if rate > cfg.target_acceptance.1 {
                1.4
            } else {
                1.0
            };
            for s in &mut scale {
                *s *= factor;
            }
            batch_accepts = 0;
        }
    }
    let post = cfg.max_samples.saturating_sub(window);
    let post_rate = if post == 0 { 1.0 } else { post_accepts as f64 / post as f64 };
    Ok(ChainRecord {
        chain,
        seed,
        initial_theta,
        accepted,
        proposals: cfg.max_samples,
        cost_series,
        qoi_error_series,
        running_acceptance,
        final_scale: scale,
        adaptation_window: window,
        post_adaptation_acceptance: post_rate,
        low_acceptance: post_rate < cfg.low_acceptance,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorSummary {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub sample_count: usize,
    pub acceptance_rates: Vec<f64>,
    pub low_acceptance_chains: Vec<usize>,
    /// `Q(θ₀; u₀)`, if the target defines it.
    pub coarse_qoi: Option<f64>,
    /// `ΔQ̂` at the posterior mean.
    pub qoi_error_at_mean: Option<f64>,
    /// `Q(ê₀)` at the posterior mean, i.e. `−ΔQ̂` (the estimate of `Q(u) − Q(u₀)`).
    pub q_ehat_at_mean: Option<f64>,
    /// `|Q(ê₀)| / Q(u₀)` at the posterior mean.
    pub relative_qoi_error_at_mean: Option<f64>,
    pub cost_definition: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationRun {
    pub config: SamplerConfig,
    pub chains: Vec<ChainRecord>,
    pub summary: PosteriorSummary,
}

/// Pools post-burn-in accepted samples and evaluates the target at the
/// posterior mean.
pub fn summarize(chains: &[ChainRecord], burn_in_fraction: f64, target: &dyn LogTarget) -> Result<PosteriorSummary> {
    let pooled: Vec<&AcceptedSample> = chains.iter().flat_map(|c| c.post_burn_in(burn_in_fraction)).collect();
    if pooled.is_empty() {
        return Err(Error::InvalidArgument("no accepted samples left after burn-in".into()));
    }
    let m = target.dim();
    let n = pooled.len() as f64;
    let mut mean = vec![0.0; m];
    for s in &pooled {
        for (a, t) in mean.iter_mut().zip(&s.theta) {
            *a += t / n;
        }
    }
    let mut var = vec![0.0; m];
    for s in &pooled {
        for ((v, t), mu) in var.iter_mut().zip(&s.theta).zip(&mean) {
            *v += (t - mu) * (t - mu);
        }
    }
    let denom = (n - 1.0).max(1.0);
    let std = var.iter().map(|v| (v / denom).sqrt()).collect();
    let at_mean = target.evaluate(&mean);
    let coarse_qoi = target.reference_qoi();
    let dq = Some(at_mean.qoi_error).filter(|d| d.is_finite());
    Ok(PosteriorSummary {
        mean,
        std,
        sample_count: pooled.len(),
        acceptance_rates: chains.iter().map(ChainRecord::acceptance_rate).collect(),
        low_acceptance_chains: chains.iter().filter(|c| c.low_acceptance).map(|c| c.chain).collect(),
        coarse_qoi,
        qoi_error_at_mean: dq,
        q_ehat_at_mean: dq.map(|d| -d),
        relative_qoi_error_at_mean: coarse_qoi.zip(dq).map(|(q, d)| d.abs() / q.abs()),
        cost_definition: "cost = dq^2 / (2 sigma^2), normalization excluded".into(),
    })
}

/// Runs independent chains concurrently, each seeded from `cfg.seed` and
/// its index, then summarizes.
pub fn run_chains(target: &dyn LogTarget, cfg: &SamplerConfig) -> Result<CalibrationRun> {
    cfg.validate()?;
    let chains = (0..cfg.n_chains)
        .into_par_iter()
        .map(|c| run_chain(target, cfg, c))
        .collect::<Result<Vec<_>>>()?;
    for c in &chains {
        if c.low_acceptance {
            log::warn!(
                "chain {} acceptance {:.4} after adaptation is below {}",
                c.chain,
                c.post_adaptation_acceptance,
                cfg.low_acceptance
            );
        }
    }
    let summary = summarize(&chains, cfg.burn_in_fraction, target)?;
    Ok(CalibrationRun {
        config: cfg.clone(),
        chains,
        summary,
    })
}
