//! Configuration-driven experiment runner for `goal-calib`: parses run
//! configs, dispatches `verify`, `order-study` and `calibrate`, and writes
//! every artifact together with a manifest.

pub mod artifacts;
pub mod config;
mod experiments;

use std::fmt;
use std::path::{Path, PathBuf};

use thiserror::Error;

pub use artifacts::{RunManifest, RunStatus};
pub use config::{parse_config, parse_config_str, ConfigError, RunConfig};

use artifacts::RunDir;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Verify,
    OrderStudy,
    Calibrate,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Verify => "verify",
            Command::OrderStudy => "order-study",
            Command::Calibrate => "calibrate",
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{phase}: {source}")]
    Model {
        phase: String,
        #[source]
        source: goal_calib::Error,
    },
    #[error("{phase}: cannot write {path}: {source}")]
    Io {
        phase: String,
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("output directory {0} exists and was not written by a previous run")]
    OutputExists(PathBuf),
}

impl RunError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RunError::Io {
            phase: String::new(),
            path: path.into(),
            source,
        }
    }

    pub(crate) fn model(source: goal_calib::Error) -> Self {
        RunError::Model {
            phase: String::new(),
            source,
        }
    }

    /// Tags the error with the phase it happened in, unless already tagged.
    pub(crate) fn in_phase(self, name: &str) -> Self {
        match self {
            RunError::Model { phase, source } if phase.is_empty() => RunError::Model {
                phase: name.into(),
                source,
            },
            RunError::Io { phase, path, source } if phase.is_empty() => RunError::Io {
                phase: name.into(),
                path,
                source,
            },
            other => other,
        }
    }

    pub fn phase(&self) -> Option<&str> {
        match self {
            RunError::Model { phase, .. } | RunError::Io { phase, .. } if !phase.is_empty() => Some(phase),
            _ => None,
        }
    }

    /// 2 for configuration errors, 3 for solver failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) => 2,
            RunError::Model { source, .. } if source.is_solver_failure() => 3,
            RunError::Model {
                source: goal_calib::Error::InvalidArgument(_),
                ..
            } => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Overrides `mcmc.seed`.
    pub seed: Option<u64>,
    /// Overrides `output_dir`.
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub manifest: RunManifest,
    /// Short human-readable result table.
    pub summary: String,
}

fn default_out(cfg: &RunConfig, command: Command) -> PathBuf {
    let app = match cfg.application {
        config::Application::Elliptic => "elliptic",
        config::Application::Tumor => "tumor",
    };
    Path::new("runs").join(format!("{app}-{command}"))
}

/// Runs one experiment. `config_bytes` are the raw config file contents,
/// hashed into the manifest.
///
/// On failure the run directory keeps its `.partial` suffix and holds a
/// manifest describing the failed phase.
pub fn run_experiment(
    command: Command,
    cfg: &RunConfig,
    config_bytes: &[u8],
    opts: &RunOptions,
) -> Result<RunOutcome, RunError> {
    let mut cfg = cfg.clone();
    if let Some(seed) = opts.seed {
        cfg.mcmc.seed = seed;
    }
    experiments::check(command, &cfg)?;
    let target = opts
        .out
        .clone()
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| default_out(&cfg, command));
    let mut dir = RunDir::create(&target)?;
    let result = experiments::dispatch(command, &cfg, &mut dir);
    let echo = serde_json::to_value(&cfg).expect("config serializes");
    let seed = (command == Command::Calibrate).then_some(cfg.mcmc.seed);
    let hash = artifacts::sha256_hex(config_bytes);
    match result {
        Ok(summary) => {
            let (dir, manifest) = dir.finish(command.name(), echo, hash, seed, None)?;
            Ok(RunOutcome { dir, manifest, summary })
        }
        Err(e) => {
            if let Err(io) = dir.finish(command.name(), echo, hash, seed, Some(&e)) {
                log::error!("could not write manifest for failed run: {io}");
            }
            Err(e)
        }
    }
}
