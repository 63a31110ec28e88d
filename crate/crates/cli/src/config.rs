//! Run configuration: a TOML file, parsed into raw optional blocks and then
//! validated into a [`RunConfig`] with defaults filled in.

use std::fs;
use std::path::{Path, PathBuf};

use goal_calib::bayes::LognormalPrior;
use goal_calib::elliptic::Nonlinearity;
use goal_calib::tumor::{QoISpec, TumorCoarseParams, TumorFineParams};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Syntax(String),
    #[error("missing required key `{key}`")]
    Missing { key: String },
    #[error("key `{key}` = {value} is out of range: {expected}")]
    Range {
        key: String,
        value: String,
        expected: String,
    },
    #[error("key `{key}`: {message}")]
    Invalid { key: String, message: String },
}

impl ConfigError {
    /// Dotted path of the offending key, if the error names one.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::Missing { key } | ConfigError::Range { key, .. } | ConfigError::Invalid { key, .. } => {
                Some(key)
            }
            _ => None,
        }
    }
}

fn range(key: &str, value: impl ToString, expected: &str) -> ConfigError {
    ConfigError::Range {
        key: key.into(),
        value: value.to_string(),
        expected: expected.into(),
    }
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.into(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Application {
    Elliptic,
    Tumor,
}

/// How `ΔQ̂` is computed inside the likelihood, and which approximate
/// source the verification table leads with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Estimator {
    FirstOrder,
    SecondOrder,
    ExactFineOracle,
}

// Raw file layout. Every field is optional so that validation can name the
// missing key itself.

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    application: Option<String>,
    estimator: Option<Estimator>,
    output_dir: Option<PathBuf>,
    mesh: Option<RawMesh>,
    time: Option<RawTime>,
    elliptic: Option<RawElliptic>,
    tumor: Option<RawTumor>,
    prior: Option<RawPrior>,
    noise: Option<RawNoise>,
    mcmc: Option<RawMcmc>,
    order_study: Option<RawOrderStudy>,
    export: Option<RawExport>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    nx: Option<i64>,
    ny: Option<i64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: Option<f64>,
    t_final: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawElliptic {
    kappa0: Option<f64>,
    nonlinearity: Option<Nonlinearity>,
    kappa: Option<f64>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTumor {
    lambda_p0: Option<f64>,
    lambda_d0: Option<f64>,
    diffusivity: Option<f64>,
    lambda_p: Option<f64>,
    lambda_d: Option<f64>,
    epsilon: Option<f64>,
    c: Option<f64>,
    observation_times: Option<Vec<f64>>,
    window: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPrior {
    ln_mean: Option<Vec<f64>>,
    ln_std: Option<Vec<f64>>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNoise {
    sigma: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMcmc {
    chains: Option<i64>,
    max_samples: Option<i64>,
    burn_in: Option<f64>,
    seed: Option<u64>,
    proposal_scale: Option<f64>,
    adapt: Option<bool>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOrderStudy {
    levels: Option<Vec<f64>>,
    alpha: Option<f64>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawExport {
    fields: Option<bool>,
    trajectory_steps: Option<Vec<i64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MeshConfig {
    pub nx: usize,
    pub ny: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeConfig {
    pub dt: f64,
    pub t_final: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EllipticConfig {
    pub kappa0: f64,
    pub nonlinearity: Nonlinearity,
    /// Fine parameters used by `verify`.
    pub kappa: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TumorConfig {
    pub coarse: TumorCoarseParams<f64>,
    /// Fine parameters used by `verify`.
    pub fine: TumorFineParams<f64>,
    pub qoi: QoISpec,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum ModelConfig {
    Elliptic(EllipticConfig),
    Tumor { time: TimeConfig, tumor: TumorConfig },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McmcConfig {
    pub chains: usize,
    pub max_samples: usize,
    pub burn_in: f64,
    pub seed: u64,
    /// Initial random-walk step in `ln θ`, in units of the prior ln-std.
    pub proposal_scale: f64,
    pub adapt: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OrderStudyConfig {
    pub levels: Vec<f64>,
    /// Elliptic only: fine `α` at `s = 1`.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExportConfig {
    /// Write nodal CSVs of the coarse and fine solutions from `verify`.
    pub fields: bool,
    /// Time indices exported for tumor trajectories; empty means the
    /// observation window ends plus the final step.
    pub trajectory_steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub application: Application,
    pub estimator: Estimator,
    pub output_dir: Option<PathBuf>,
    pub mesh: MeshConfig,
    pub model: ModelConfig,
    pub prior_ln_mean: Vec<f64>,
    pub prior_ln_std: Vec<f64>,
    pub sigma: f64,
    pub mcmc: McmcConfig,
    pub order_study: OrderStudyConfig,
    pub export: ExportConfig,
}

impl RunConfig {
    pub fn prior(&self) -> LognormalPrior {
        LognormalPrior::new(self.prior_ln_mean.clone(), self.prior_ln_std.clone())
            .expect("validated prior")
    }

    pub fn time(&self) -> Option<&TimeConfig> {
        match &self.model {
            ModelConfig::Tumor { time, .. } => Some(time),
            ModelConfig::Elliptic(_) => None,
        }
    }
}

/// Reads and validates a config file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config_str(&text)
}

pub fn parse_config_str(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = toml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    validate(raw)
}

fn positive(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(range(key, v, "must be positive"))
    }
}

fn nonnegative(key: &str, v: f64) -> Result<f64, ConfigError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(range(key, v, "must be nonnegative"))
    }
}

fn count(key: &str, v: i64) -> Result<usize, ConfigError> {
    if v >= 1 {
        Ok(v as usize)
    } else {
        Err(range(key, v, "must be at least 1"))
    }
}

fn validate(raw: RawConfig) -> Result<RunConfig, ConfigError> {
    let application = match raw.application.as_deref() {
        None => return Err(ConfigError::Missing { key: "application".into() }),
        Some("elliptic") => Application::Elliptic,
        Some("tumor") => Application::Tumor,
        Some(other) => {
            return Err(invalid(
                "application",
                format!("unknown application `{other}` (expected `elliptic` or `tumor`)"),
            ))
        }
    };

    let mesh_raw = raw.mesh.unwrap_or_default();
    let mesh = MeshConfig {
        nx: count("mesh.nx", mesh_raw.nx.unwrap_or(50))?,
        ny: count("mesh.ny", mesh_raw.ny.unwrap_or(50))?,
    };

    let model = match application {
        Application::Elliptic => {
            if raw.time.is_some() {
                return Err(invalid("time", "time stepping applies to the tumor application only"));
            }
            if raw.tumor.is_some() {
                return Err(invalid("tumor", "block not valid for the elliptic application"));
            }
            let e = raw.elliptic.unwrap_or_default();
            let kappa0 = positive("elliptic.kappa0", e.kappa0.unwrap_or(0.25))?;
            let alpha = e.alpha.unwrap_or(1.0);
            if !alpha.is_finite() {
                return Err(range("elliptic.alpha", alpha, "must be finite"));
            }
            ModelConfig::Elliptic(EllipticConfig {
                kappa0,
                nonlinearity: e.nonlinearity.unwrap_or(Nonlinearity::Quadratic),
                kappa: positive("elliptic.kappa", e.kappa.unwrap_or(kappa0))?,
                alpha,
            })
        }
        Application::Tumor => {
            if raw.elliptic.is_some() {
                return Err(invalid("elliptic", "block not valid for the tumor application"));
            }
            let t = raw.time.ok_or_else(|| ConfigError::Missing { key: "time.dt".into() })?;
            let dt = t.dt.ok_or_else(|| ConfigError::Missing { key: "time.dt".into() })?;
            let time = TimeConfig {
                dt: positive("time.dt", dt)?,
                t_final: positive("time.t_final", t.t_final.unwrap_or(1.0))?,
            };
            goal_calib::tumor::TimeGrid::new(time.dt, time.t_final)
                .map_err(|e| invalid("time.dt", e.to_string()))?;

            let r = raw.tumor.unwrap_or_default();
            let cd = TumorCoarseParams::<f64>::default();
            let coarse = TumorCoarseParams::new_nonnegative(
                nonnegative("tumor.lambda_p0", r.lambda_p0.unwrap_or(cd.lambda_p0))?,
                nonnegative("tumor.lambda_d0", r.lambda_d0.unwrap_or(cd.lambda_d0))?,
                positive("tumor.diffusivity", r.diffusivity.unwrap_or(cd.diffusivity))?,
            )
            .map_err(|e| invalid("tumor", e.to_string()))?;
            let ft = TumorFineParams::<f64>::test_values();
            let fine = TumorFineParams::new(
                positive("tumor.lambda_p", r.lambda_p.unwrap_or(ft.lambda_p))?,
                positive("tumor.lambda_d", r.lambda_d.unwrap_or(ft.lambda_d))?,
                positive("tumor.epsilon", r.epsilon.unwrap_or(ft.epsilon))?,
                positive("tumor.c", r.c.unwrap_or(ft.c))?,
            )
            .map_err(|e| invalid("tumor", e.to_string()))?;
            let default_qoi = QoISpec::table1();
            let qoi = QoISpec {
                observation_times: r.observation_times.unwrap_or(default_qoi.observation_times),
                window: positive("tumor.window", r.window.unwrap_or(default_qoi.window))?,
            };
            for &tau in &qoi.observation_times {
                nonnegative("tumor.observation_times", tau)?;
            }
            let grid = goal_calib::tumor::TimeGrid::new(time.dt, time.t_final).expect("checked above");
            qoi.step_weights(&grid)
                .map_err(|e| invalid("tumor.observation_times", e.to_string()))?;
            ModelConfig::Tumor {
                time,
                tumor: TumorConfig { coarse, fine, qoi },
            }
        }
    };

    let estimator = raw.estimator.unwrap_or(Estimator::FirstOrder);

    let default_prior = match application {
        Application::Elliptic => LognormalPrior::elliptic_default(),
        Application::Tumor => LognormalPrior::tumor_default(),
    };
    let p = raw.prior.unwrap_or_default();
    let prior_ln_mean = p.ln_mean.unwrap_or_else(|| default_prior.ln_mean().to_vec());
    let prior_ln_std = p.ln_std.unwrap_or_else(|| default_prior.ln_std().to_vec());
    let dim = default_prior.dim();
    if prior_ln_mean.len() != dim {
        return Err(invalid("prior.ln_mean", format!("expected {dim} entries, got {}", prior_ln_mean.len())));
    }
    if prior_ln_std.len() != dim {
        return Err(invalid("prior.ln_std", format!("expected {dim} entries, got {}", prior_ln_std.len())));
    }
    for &s in &prior_ln_std {
        positive("prior.ln_std", s)?;
    }
    if prior_ln_mean.iter().any(|m| !m.is_finite()) {
        return Err(range("prior.ln_mean", format!("{prior_ln_mean:?}"), "must be finite"));
    }

    let sigma = positive("noise.sigma", raw.noise.unwrap_or_default().sigma.unwrap_or(0.01))?;

    let m = raw.mcmc.unwrap_or_default();
    let burn_in = m.burn_in.unwrap_or(0.5);
    if !(0.0..1.0).contains(&burn_in) {
        return Err(range("burn_in", burn_in, "must lie in [0, 1)"));
    }
    let mcmc = McmcConfig {
        chains: count("mcmc.chains", m.chains.unwrap_or(4))?,
        max_samples: count("mcmc.max_samples", m.max_samples.unwrap_or(5000))?,
        burn_in,
        seed: m.seed.unwrap_or(0),
        proposal_scale: nonnegative("mcmc.proposal_scale", m.proposal_scale.unwrap_or(0.25))?,
        adapt: m.adapt.unwrap_or(true),
    };

    let o = raw.order_study.unwrap_or_default();
    let levels = o.levels.unwrap_or_else(|| match application {
        Application::Elliptic => vec![1.0, 0.5, 0.25, 0.125],
        // at s = 1 the tumor nonlinearity dominates and the exact error is no
        // longer monotone in s
        Application::Tumor => vec![0.5, 0.25, 0.125, 0.0625],
    });
    if levels.is_empty() {
        return Err(invalid("order_study.levels", "needs at least one level"));
    }
    for &s in &levels {
        positive("order_study.levels", s)?;
    }
    let order_study = OrderStudyConfig {
        levels,
        alpha: nonnegative("order_study.alpha", o.alpha.unwrap_or(10.0))?,
    };

    let x = raw.export.unwrap_or_default();
    let trajectory_steps = x
        .trajectory_steps
        .unwrap_or_default()
        .into_iter()
        .map(|n| {
            usize::try_from(n).map_err(|_| range("export.trajectory_steps", n, "must be nonnegative"))
        })
        .collect::<Result<Vec<_>, _>>()?;
    if application == Application::Elliptic && !trajectory_steps.is_empty() {
        return Err(invalid("export.trajectory_steps", "applies to the tumor application only"));
    }

    Ok(RunConfig {
        application,
        estimator,
        output_dir: raw.output_dir,
        mesh,
        model,
        prior_ln_mean,
        prior_ln_std,
        sigma,
        mcmc,
        order_study,
        export: ExportConfig {
            fields: x.fields.unwrap_or(true),
            trajectory_steps,
        },
    })
}
