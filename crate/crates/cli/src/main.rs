use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use condcl_cli::commands;
use condcl_cli::config::{Overrides, RunConfig};
use condcl_cli::rundir::RunDir;
use condcl_cli::{Outcome, UsageError};

/// Conditional contrastive learning experiments.
#[derive(Parser)]
#[command(name = "condcl", version)]
struct Cli {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (must not exist).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides `experiment.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// CIFAR-10 directory; overrides `[data] dir`. CONDCL_DATA_DIR is the
    /// fallback when neither is set.
    #[arg(long, global = true)]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Finite-difference check of every loss and the encoder.
    Gradcheck,
    /// Check that y-aware InfoNCE splits into alignment plus uniformity.
    Decompose,
    /// Finite-batch loss against its large-sample limit.
    Converge,
    /// Train an encoder and save a checkpoint.
    Train,
    /// Linear probe on frozen features.
    Probe {
        /// Checkpoint to probe; a random-init encoder otherwise.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Also write the test-set features.
        #[arg(long)]
        export_features: bool,
    },
    /// Train and probe every loss kind across seeds.
    Compare,
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Gradcheck => "gradcheck",
            Command::Decompose => "decompose",
            Command::Converge => "converge",
            Command::Train => "train",
            Command::Probe { .. } => "probe",
            Command::Compare => "compare",
        }
    }
}

fn run(cli: Cli) -> Result<Outcome> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| UsageError(format!("--threads: {e}")))?;
    }
    let ov = Overrides {
        seed: cli.seed,
        data_dir: cli.data_dir,
        default_data_dir: std::env::var_os("CONDCL_DATA_DIR").map(PathBuf::from),
    };
    let cfg = match &cli.config {
        Some(p) => RunConfig::load(p, &ov),
        None => RunConfig::defaults(&ov),
    }
    .map_err(|e| UsageError(format!("{e:#}")))?;

    let mut rd = RunDir::create(cli.out.as_deref(), cli.command.name(), cfg.experiment.seed)?;
    rd.write("config.toml", cfg.to_toml())?;
    let outcome = match &cli.command {
        Command::Gradcheck => commands::run_gradcheck(&cfg, &mut rd)?,
        Command::Decompose => commands::run_decompose(&cfg, &mut rd)?,
        Command::Converge => commands::run_converge(&cfg, &mut rd)?,
        Command::Train => commands::run_train(&cfg, &mut rd)?,
        Command::Probe {
            checkpoint,
            export_features,
        } => commands::run_probe(&cfg, &mut rd, checkpoint.as_deref(), *export_features)?,
        Command::Compare => commands::run_compare(&cfg, &mut rd)?,
    };
    rd.log(match outcome {
        Outcome::Pass => "result: PASS",
        Outcome::Fail => "result: FAIL",
    });
    let dir = rd.finish()?;
    eprintln!("wrote {}", dir.display());
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(o) => ExitCode::from(o.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}
