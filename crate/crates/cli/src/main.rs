use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser};
use infomax_cli::{init_threads, run, CliError, ExperimentConfig, Subcommand};

#[derive(Parser)]
#[command(name = "infomax", version, about = "Mutual-information estimation and Deep InfoMax experiments")]
enum Cli {
    /// Finite-difference gradient checks of every op and both scorers.
    Gradcheck(Common),
    /// Neural MI estimates on correlated Gaussian pairs.
    EstimateMi(Common),
    /// Rank agreement of exact JSD and KL on random discrete joints.
    JsdKl(Common),
    /// Train a Deep InfoMax encoder on toy images and evaluate it.
    TrainDim(Common),
    /// Neural dependency measure on Gaussian pairs or saved features.
    Ndm(Common),
    /// Train linear or MLP probes on saved features.
    Probe(Common),
    /// Estimator bias against the number of negative samples.
    Negsweep(Common),
}

#[derive(Args)]
struct Common {
    /// INI config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides run.seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.out_dir.
    #[arg(long)]
    out: Option<PathBuf>,
    /// section.key=value, repeatable.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli {
        Cli::Gradcheck(c) => (Subcommand::Gradcheck, c),
        Cli::EstimateMi(c) => (Subcommand::EstimateMi, c),
        Cli::JsdKl(c) => (Subcommand::JsdKl, c),
        Cli::TrainDim(c) => (Subcommand::TrainDim, c),
        Cli::Ndm(c) => (Subcommand::Ndm, c),
        Cli::Probe(c) => (Subcommand::Probe, c),
        Cli::Negsweep(c) => (Subcommand::Negsweep, c),
    };
    match execute(cmd, common) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.json_line());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cmd: Subcommand, common: Common) -> Result<PathBuf, CliError> {
    init_threads()?;
    let mut overrides = common.set;
    if let Some(seed) = common.seed {
        overrides.push(format!("run.seed={seed}"));
    }
    if let Some(out) = common.out {
        overrides.push(format!("run.out_dir={}", out.display()));
    }
    let cfg = ExperimentConfig::load(common.config.as_deref(), &overrides)?;
    run(cmd, &cfg)
}
