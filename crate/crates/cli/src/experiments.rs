use std::fmt::Write as _;
use std::io::Write;
use std::sync::Arc;

use goal_calib::bayes::{
    run_chains, write_chain_csv, write_diagnostics_csv, write_summary_json, CalibrationContext,
    LikelihoodMode, NoiseModel, SamplerConfig,
};
use goal_calib::elliptic::{EllipticCoarseParams, EllipticFineParams};
use goal_calib::fem::{Field, StructuredMesh};
use goal_calib::goal::{analyze, order_study, ErrorEstimateReport, ErrorSource, ModelPair, OrderStudy, SecondOrderOptions};
use goal_calib::tumor::{TimeGrid, TumorCoarseParams, TumorFineParams};
use goal_calib::{EllipticPair, Mesh, TumorPair};
use serde::Serialize;

use crate::artifacts::RunDir;
use crate::config::{ConfigError, EllipticConfig, Estimator, ModelConfig, RunConfig, TimeConfig, TumorConfig};
use crate::{Command, RunError};

type Res<T> = Result<T, RunError>;

fn model<T>(r: goal_calib::Result<T>) -> Res<T> {
    r.map_err(RunError::model)
}

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// Checks that only depend on the command/config combination.
pub(crate) fn check(command: Command, cfg: &RunConfig) -> Result<(), ConfigError> {
    if command == Command::Calibrate && cfg.estimator == Estimator::SecondOrder {
        return Err(ConfigError::Invalid {
            key: "estimator".into(),
            message: "calibration supports `first-order` or `exact-fine-oracle`".into(),
        });
    }
    if let ModelConfig::Tumor { time, .. } = &cfg.model {
        let grid = TimeGrid::new(time.dt, time.t_final).expect("validated grid");
        if let Some(&n) = cfg.export.trajectory_steps.iter().find(|&&n| n > grid.n_steps()) {
            return Err(ConfigError::Range {
                key: "export.trajectory_steps".into(),
                value: n.to_string(),
                expected: format!("time index at most {}", grid.n_steps()),
            });
        }
    }
    Ok(())
}

pub(crate) fn dispatch(command: Command, cfg: &RunConfig, dir: &mut RunDir) -> Res<String> {
    let mesh = Arc::new(model(StructuredMesh::unit_square(cfg.mesh.nx, cfg.mesh.ny))?);
    match (&cfg.model, command) {
        (ModelConfig::Elliptic(e), Command::Verify) => verify_elliptic(cfg, e, mesh, dir),
        (ModelConfig::Tumor { time, tumor }, Command::Verify) => verify_tumor(cfg, time, tumor, mesh, dir),
        (ModelConfig::Elliptic(e), Command::OrderStudy) => {
            let base = elliptic_pair(e, mesh, e.kappa0, 0.0)?;
            let alpha = cfg.order_study.alpha;
            let kappa0 = e.kappa0;
            let study = dir.phase("order-study", |_| {
                model(order_study(
                    |s| Ok(base.with_fine_parameters(&[kappa0, s * alpha])?),
                    &cfg.order_study.levels,
                ))
            })?;
            write_order_study(dir, &study)
        }
        (ModelConfig::Tumor { time, tumor }, Command::OrderStudy) => {
            let base = tumor_homotopy_base(time, tumor, mesh)?;
            let (coarse, target) = (tumor.coarse, tumor.fine);
            let study = dir.phase("order-study", |_| {
                model(order_study(
                    |s| base.with_fine_params(tumor_homotopy(coarse, target, s)?),
                    &cfg.order_study.levels,
                ))
            })?;
            write_order_study(dir, &study)
        }
        (ModelConfig::Elliptic(e), Command::Calibrate) => {
            let prior = cfg.prior();
            let median = prior.median();
            let pair = elliptic_pair(e, mesh, median[0], median[1])?;
            calibrate(cfg, pair, dir)
        }
        (ModelConfig::Tumor { time, tumor }, Command::Calibrate) => {
            let pair = tumor_pair(time, tumor, mesh)?;
            calibrate(cfg, pair, dir)
        }
    }
}

pub(crate) fn elliptic_pair(e: &EllipticConfig, mesh: Arc<Mesh>, kappa: f64, alpha: f64) -> Res<EllipticPair> {
    let build = || {
        EllipticPair::new(
            mesh,
            EllipticCoarseParams::new(e.kappa0)?,
            EllipticFineParams::new(kappa, alpha)?,
            e.nonlinearity,
        )
    };
    model(build())
}

pub(crate) fn tumor_pair(time: &TimeConfig, t: &TumorConfig, mesh: Arc<Mesh>) -> Res<TumorPair> {
    let grid = model(TimeGrid::new(time.dt, time.t_final))?;
    model(TumorPair::new(mesh, grid, t.qoi.clone(), t.coarse, t.fine))
}

/// Coarse model without proliferation; the fine model at `s = 0` coincides
/// with it.
fn tumor_homotopy_base(time: &TimeConfig, t: &TumorConfig, mesh: Arc<Mesh>) -> Res<TumorPair> {
    let c = t.coarse;
    let coarse = model(TumorCoarseParams::new_nonnegative(0.0, c.lambda_d0, c.diffusivity))?;
    let grid = model(TimeGrid::new(time.dt, time.t_final))?;
    let fine = model(tumor_homotopy(c, t.fine, 0.0))?;
    model(TumorPair::new(mesh, grid, t.qoi.clone(), coarse, fine))
}

/// `λᵖ = sλᵖ`, `C = sC`, `λᵈ` and `ε` interpolate linearly from the coarse
/// `λᵈ₀` and `D` to their targets.
pub(crate) fn tumor_homotopy(
    coarse: TumorCoarseParams<f64>,
    target: TumorFineParams<f64>,
    s: f64,
) -> goal_calib::Result<TumorFineParams<f64>> {
    TumorFineParams::new_nonnegative(
        s * target.lambda_p,
        coarse.lambda_d0 + s * (target.lambda_d - coarse.lambda_d0),
        coarse.diffusivity + s * (target.epsilon - coarse.diffusivity),
        s * target.c,
    )
}

#[derive(Serialize)]
struct SourceFailure {
    error_source: ErrorSource,
    message: String,
}

#[derive(Serialize)]
struct VerifyReport<'a> {
    reports: &'a [ErrorEstimateReport],
    failures: &'a [SourceFailure],
}

/// Runs the estimators for every error source. The second-order problem is
/// solved separately so that its failure leaves the other rows intact.
fn estimate_table<P: ModelPair<f64>>(pair: &P, dir: &mut RunDir) -> Res<(goal_calib::goal::Analysis<P::State>, Vec<SourceFailure>)> {
    let mut analysis = dir.phase("estimates", |_| {
        model(analyze(pair, &[ErrorSource::ExactSolve, ErrorSource::FirstOrder], true, &SecondOrderOptions::default()))
    })?;
    let mut failures = Vec::new();
    let second = dir.phase("second-order", |_| {
        Ok(analyze(pair, &[ErrorSource::SecondOrder], false, &SecondOrderOptions::default()))
    })?;
    match second {
        Ok(a) => {
            let (q_fine, exact) = (analysis.reports[0].q_fine_exact, analysis.reports[0].exact_error);
            analysis.reports.extend(a.reports.into_iter().map(|r| ErrorEstimateReport {
                q_fine_exact: q_fine,
                exact_error: exact,
                ..r
            }));
        }
        Err(e) => {
            log::warn!("second-order error problem failed: {e}");
            failures.push(SourceFailure {
                error_source: ErrorSource::SecondOrder,
                message: e.to_string(),
            });
        }
    }
    Ok((analysis, failures))
}

fn write_estimates(dir: &mut RunDir, reports: &[ErrorEstimateReport], failures: &[SourceFailure]) -> Res<String> {
    dir.write_json("report.json", &VerifyReport { reports, failures })?;
    dir.write_with("estimates.csv", |w| {
        writeln!(w, "error_source,q_coarse,q_fine,exact_error,xi1,xi2,q_ehat")?;
        for r in reports {
            writeln!(
                w,
                "{},{},{},{},{},{},{}",
                r.error_source,
                num(r.q_coarse),
                opt_num(r.q_fine_exact),
                opt_num(r.exact_error),
                num(r.xi1),
                num(r.xi2),
                num(r.q_ehat)
            )?;
        }
        Ok(())
    })?;
    let mut s = String::new();
    if let Some(r) = reports.first() {
        let _ = writeln!(s, "Q(u0) = {:.6}", r.q_coarse);
        if let (Some(q), Some(e)) = (r.q_fine_exact, r.exact_error) {
            let _ = writeln!(s, "Q(u)  = {q:.6}\nexact error = {e:.6}");
        }
    }
    let _ = writeln!(s, "{:<14}{:>14}{:>14}{:>14}", "source", "Xi1", "Xi2", "Q(e_hat)");
    for r in reports {
        let _ = writeln!(s, "{:<14}{:>14.6}{:>14.6}{:>14.6}", r.error_source.to_string(), r.xi1, r.xi2, r.q_ehat);
    }
    for f in failures {
        let _ = writeln!(s, "{:<14} failed: {}", f.error_source.to_string(), f.message);
    }
    Ok(s)
}

fn write_field(dir: &mut RunDir, rel: &str, f: &Field<f64>) -> Res<()> {
    dir.write_with(rel, |w| f.write_csv(w))
}

fn verify_elliptic(cfg: &RunConfig, e: &EllipticConfig, mesh: Arc<Mesh>, dir: &mut RunDir) -> Res<String> {
    let pair = elliptic_pair(e, mesh, e.kappa, e.alpha)?;
    let (analysis, failures) = estimate_table(&pair, dir)?;
    if cfg.export.fields {
        dir.phase("export", |dir| {
            write_field(dir, "fields/u0.csv", &analysis.u0)?;
            write_field(dir, "fields/p0.csv", &analysis.p0)?;
            if let Some((u, p)) = &analysis.fine {
                write_field(dir, "fields/u.csv", u)?;
                write_field(dir, "fields/p.csv", p)?;
            }
            Ok(())
        })?;
    }
    write_estimates(dir, &analysis.reports, &failures)
}

fn verify_tumor(cfg: &RunConfig, time: &TimeConfig, t: &TumorConfig, mesh: Arc<Mesh>, dir: &mut RunDir) -> Res<String> {
    let pair = tumor_pair(time, t, mesh)?;
    let (analysis, failures) = estimate_table(&pair, dir)?;
    if cfg.export.fields {
        let steps = if cfg.export.trajectory_steps.is_empty() {
            default_steps(&pair)
        } else {
            cfg.export.trajectory_steps.clone()
        };
        dir.phase("export", |dir| {
            let root = dir.root().to_path_buf();
            let written = model(analysis.u0.export(&root.join("trajectory_coarse"), &steps, &t.qoi))?;
            dir.record(written);
            if let Some((u, _)) = &analysis.fine {
                let written = model(u.export(&root.join("trajectory_fine"), &steps, &t.qoi))?;
                dir.record(written);
            }
            Ok(())
        })?;
    }
    write_estimates(dir, &analysis.reports, &failures)
}

/// Initial step, the end of every observation window and the final step.
fn default_steps(pair: &TumorPair) -> Vec<usize> {
    let w = pair.step_weights();
    let n = w.len() - 1;
    let mut steps = vec![0];
    for k in 1..n {
        if w[k] > 0.0 && w[k + 1] == 0.0 {
            steps.push(k);
        }
    }
    steps.push(n);
    steps
}

fn write_order_study(dir: &mut RunDir, study: &OrderStudy) -> Res<String> {
    dir.write_json("order_study.json", study)?;
    dir.write_with("order_study.csv", |w| {
        writeln!(w, "s,exact_error,xi1,q_ehat,xi1_deficit,q_ehat_deficit")?;
        for r in &study.rows {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                num(r.s),
                num(r.exact_error),
                num(r.xi1),
                num(r.q_ehat),
                num(r.xi1_deficit),
                num(r.q_ehat_deficit)
            )?;
        }
        Ok(())
    })?;
    let mut s = String::new();
    let _ = writeln!(s, "{:>8}{:>14}{:>14}{:>14}", "s", "exact", "|dev Xi1|", "|dev Q(e)|");
    for r in &study.rows {
        let _ = writeln!(s, "{:>8.4}{:>14.6e}{:>14.6e}{:>14.6e}", r.s, r.exact_error, r.xi1_deficit, r.q_ehat_deficit);
    }
    let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |v| format!("{v:.3}"));
    let _ = writeln!(s, "slope Xi1: {}  slope Q(e_hat): {}", fmt(study.xi1_slope), fmt(study.q_ehat_slope));
    if let Some((level, msg)) = &study.aborted {
        let _ = writeln!(s, "stopped at s = {level}: {msg}");
    }
    Ok(s)
}

fn calibrate<P: ModelPair<f64>>(cfg: &RunConfig, pair: P, dir: &mut RunDir) -> Res<String> {
    let mode = match cfg.estimator {
        Estimator::ExactFineOracle => LikelihoodMode::Exact,
        _ => LikelihoodMode::Estimate,
    };
    let noise = model(NoiseModel::new(cfg.sigma))?;
    let ctx = dir.phase("coarse-solve", |_| model(CalibrationContext::new(pair, cfg.prior(), noise, mode)))?;
    let sampler = SamplerConfig {
        n_chains: cfg.mcmc.chains,
        max_samples: cfg.mcmc.max_samples,
        burn_in_fraction: cfg.mcmc.burn_in,
        seed: cfg.mcmc.seed,
        initial_scale: cfg.mcmc.proposal_scale,
        adapt: cfg.mcmc.adapt,
        ..SamplerConfig::default()
    };
    let run = dir.phase("sampling", |_| model(run_chains(&ctx, &sampler)))?;
    dir.phase("export", |dir| {
        for c in &run.chains {
            dir.write_with(&format!("chain_{}.csv", c.chain), |w| write_chain_csv(c, w))?;
            dir.write_with(&format!("diagnostics_{}.csv", c.chain), |w| write_diagnostics_csv(c, w))?;
        }
        dir.write_with("summary.json", |w| {
            write_summary_json(&run.summary, &mut *w).map_err(std::io::Error::other)?;
            writeln!(w)
        })
    })?;

    let sm = &run.summary;
    let mut s = String::new();
    let _ = writeln!(s, "posterior mean: {:?}", sm.mean);
    let _ = writeln!(s, "posterior std:  {:?}", sm.std);
    let _ = writeln!(s, "samples after burn-in: {}", sm.sample_count);
    let _ = writeln!(s, "acceptance rates: {:?}", sm.acceptance_rates);
    if let Some(q) = sm.coarse_qoi {
        let _ = writeln!(s, "Q(u0) = {q:.6}");
    }
    if let Some(r) = sm.relative_qoi_error_at_mean {
        let _ = writeln!(s, "|dQ| / Q(u0) at the posterior mean: {:.3}%", 100.0 * r);
    }
    if !sm.low_acceptance_chains.is_empty() {
        let _ = writeln!(s, "chains with acceptance below 1%: {:?}", sm.low_acceptance_chains);
    }
    Ok(s)
}
