//! Experiment runner: strict INI configs, one subcommand per experiment,
//! deterministic CSV outputs and a checksummed run manifest.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use thiserror::Error;

pub use config::{ConfigError, ExperimentConfig};
pub use output::{fmt_f64, RunDir, RunManifest};

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Core(#[from] infomax_core::Error),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("{0}")]
    Failed(String),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    /// 2 for configuration problems, 1 for everything that fails at run time.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            _ => 1,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Core(infomax_core::Error::Diverged { .. }) => "diverged",
            CliError::Core(_) => "runtime",
            CliError::Io(_) | CliError::Csv(_) | CliError::Json(_) => "io",
            CliError::Failed(_) => "check_failed",
        }
    }

    /// One-line JSON for stderr.
    pub fn json_line(&self) -> String {
        serde_json::json!({
            "error": self.kind(),
            "message": self.to_string(),
            "exit_code": self.exit_code(),
        })
        .to_string()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Subcommand {
    Gradcheck,
    EstimateMi,
    JsdKl,
    TrainDim,
    Ndm,
    Probe,
    Negsweep,
}

impl Subcommand {
    pub fn name(self) -> &'static str {
        match self {
            Subcommand::Gradcheck => "gradcheck",
            Subcommand::EstimateMi => "estimate-mi",
            Subcommand::JsdKl => "jsd-kl",
            Subcommand::TrainDim => "train-dim",
            Subcommand::Ndm => "ndm",
            Subcommand::Probe => "probe",
            Subcommand::Negsweep => "negsweep",
        }
    }
}

/// Runs `cmd` under `cfg`, writing CSVs and `manifest.json` into
/// `run.out_dir`. Returns the manifest path.
pub fn run(cmd: Subcommand, cfg: &ExperimentConfig) -> CliResult<PathBuf> {
    let dtype: String = cfg.get("run", "dtype")?;
    if dtype != "float64" {
        return Err(cfg.invalid("run", "dtype", "computation runs in float64 only").into());
    }
    let seed: u64 = cfg.get("run", "seed")?;
    let out = cfg.path("run", "out_dir").ok_or_else(|| cfg.invalid("run", "out_dir", "must not be empty"))?;
    let mut dir = RunDir::create(out)?;
    let outcome = match cmd {
        Subcommand::Gradcheck => commands::gradcheck::run(cfg, &mut dir),
        Subcommand::EstimateMi => commands::estimate_mi::run(cfg, seed, &mut dir),
        Subcommand::JsdKl => commands::jsd_kl::run(cfg, seed, &mut dir),
        Subcommand::TrainDim => commands::train_dim::run(cfg, seed, &mut dir),
        Subcommand::Ndm => commands::ndm::run(cfg, seed, &mut dir),
        Subcommand::Probe => commands::probe::run(cfg, seed, &mut dir),
        Subcommand::Negsweep => commands::negsweep::run(cfg, seed, &mut dir),
    };
    match outcome {
        Ok(()) => dir.finish(cmd.name(), cfg, seed),
        // A failed check still leaves its CSVs and manifest behind.
        Err(CliError::Failed(msg)) => {
            dir.finish(cmd.name(), cfg, seed)?;
            Err(CliError::Failed(msg))
        }
        Err(e) => Err(e),
    }
}

/// Caps rayon's worker count from `INFOMAX_THREADS`, if set.
pub fn init_threads() -> Result<(), ConfigError> {
    let Ok(raw) = std::env::var("INFOMAX_THREADS") else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| ConfigError::Value {
        key: "INFOMAX_THREADS".into(),
        value: raw.clone(),
        reason: "expected a positive integer".into(),
    })?;
    if n == 0 {
        return Err(ConfigError::Value {
            key: "INFOMAX_THREADS".into(),
            value: raw,
            reason: "expected a positive integer".into(),
        });
    }
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}
