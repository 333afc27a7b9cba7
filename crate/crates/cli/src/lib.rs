//! Command-line driver: flat TOML configs, deterministic seeding, CSV/JSON
//! artifacts and a manifest that `replay` can verify.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod error;
pub mod run;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{Mode, Overrides, RunConfig};
pub use error::CliError;
pub use run::{compute, execute, replay, Execution};

#[derive(Debug, Parser)]
#[command(name = "qpv", version, about = "Loss-tolerant quantum position verification simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Verify the PPT certificates and evaluate the soundness bounds.
    Bounds(RunArgs),
    /// Monte Carlo runs of the single-qubit protocol.
    SimulateQubit(RunArgs),
    /// Monte Carlo runs of the decoy-state protocol with photon-number ground truth.
    SimulateDecoy(RunArgs),
    /// Estimated single-photon error rate versus overall loss.
    Figure3(RunArgs),
    /// Sampled guessing probability of the LOCC attacks.
    AttackBench(RunArgs),
    /// Re-run a recorded experiment and compare output hashes.
    Replay {
        /// Manifest written by an earlier run.
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML file; flags take precedence over its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory (required here or as `out` in the config file).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Pulse counts, comma separated.
    #[arg(long = "N", value_delimiter = ',')]
    pub n_pulses: Option<Vec<f64>>,
    /// Overall loss between the verifiers, in dB.
    #[arg(long)]
    pub loss_db: Option<f64>,
    #[arg(long)]
    pub nu: Option<f64>,
    #[arg(long)]
    pub trials: Option<u64>,
    /// Conclusive-outcome rates, comma separated.
    #[arg(long, value_delimiter = ',')]
    pub eta: Option<Vec<f64>>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            out: self.out.clone(),
            n_pulses: self.n_pulses.clone(),
            loss_db: self.loss_db,
            nu: self.nu,
            trials: self.trials,
            eta: self.eta.clone(),
        }
    }
}

/// Runs a parsed command line.
pub fn dispatch(cli: &Cli) -> Result<Execution, CliError> {
    let (mode, args) = match &cli.command {
        Command::Bounds(a) => (Mode::Bounds, a),
        Command::SimulateQubit(a) => (Mode::Qubit, a),
        Command::SimulateDecoy(a) => (Mode::Decoy, a),
        Command::Figure3(a) => (Mode::Figure3, a),
        Command::AttackBench(a) => (Mode::AttackBench, a),
        Command::Replay { manifest, out } => return replay(manifest, out),
    };
    let cfg = RunConfig::assemble(mode, args.config.as_deref(), args.overrides())?;
    cfg.out_dir()?;
    execute(&cfg)
}
