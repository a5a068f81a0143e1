use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Args, Parser, Subcommand};
use ensgan_cli::commands::{self, EvalOptions};
use ensgan_cli::ExperimentConfig;

#[derive(Parser)]
#[command(
    name = "ensgan",
    version,
    about = "Generative adversarial ensembles on disconnected 2-D data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Experiment configuration file
    #[arg(long)]
    config: PathBuf,
    /// Output directory, overriding `[output] dir`
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed for dataset, training and evaluation, overriding the config
    #[arg(long)]
    seed: Option<u64>,
    /// Replace existing outputs
    #[arg(long)]
    force_overwrite: bool,
}

impl Common {
    fn load(&self) -> Result<ExperimentConfig> {
        let mut cfg = ExperimentConfig::load(&self.config)?;
        if let Some(out) = &self.out {
            cfg.output = out.clone();
        }
        if let Some(seed) = self.seed {
            cfg.override_seed(seed);
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Build and certify the dataset
    GenData(Common),
    /// Train every run of the configuration
    Train(Common),
    /// Evaluate checkpoints into metrics.csv
    Eval {
        #[command(flatten)]
        common: Common,
        /// Evaluate the dataset resampler instead of checkpoints
        #[arg(long)]
        resampler: bool,
        /// Checkpoint to evaluate (repeatable); defaults to every epoch checkpoint
        #[arg(long)]
        checkpoint: Vec<PathBuf>,
        /// Also write scatter.svg
        #[arg(long)]
        svg: bool,
    },
    /// Merge metrics of several runs into compare.csv
    Compare {
        /// Configuration whose runs are compared when no run is listed
        #[arg(long)]
        config: Option<PathBuf>,
        /// Directory receiving compare.csv
        #[arg(long)]
        out: Option<PathBuf>,
        /// Replace an existing compare.csv
        #[arg(long)]
        force_overwrite: bool,
        /// Run directories holding metrics.csv
        runs: Vec<PathBuf>,
    },
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::GenData(c) => {
            let cfg = c.load()?;
            let ds = commands::gen_data(&cfg, c.force_overwrite)?;
            println!(
                "wrote {} points in {} components to {} (separation {})",
                ds.len(),
                ds.k(),
                cfg.output.display(),
                ds.separation()
            );
        }
        Command::Train(c) => {
            let cfg = c.load()?;
            for run in commands::train(&cfg, c.force_overwrite)? {
                println!(
                    "{}: {} epochs, {} checkpoints, final coupling {}",
                    run.dir.display(),
                    run.epochs,
                    run.checkpoints,
                    run.final_coupling
                );
            }
        }
        Command::Eval {
            common,
            resampler,
            checkpoint,
            svg,
        } => {
            let cfg = common.load()?;
            let opts = EvalOptions {
                resampler,
                checkpoints: checkpoint,
                svg,
            };
            for (dir, rows) in commands::eval(&cfg, &opts, common.force_overwrite)? {
                println!(
                    "{}: {} rows",
                    dir.join(commands::METRICS_CSV).display(),
                    rows.len()
                );
            }
        }
        Command::Compare {
            config,
            out,
            force_overwrite,
            mut runs,
        } => {
            let mut cfg = config.as_deref().map(ExperimentConfig::load).transpose()?;
            if let (Some(c), Some(o)) = (&mut cfg, &out) {
                c.output = o.clone();
            }
            if runs.is_empty() {
                match &cfg {
                    Some(c) => runs = commands::config_runs(c),
                    None => bail!("list run directories or pass --config"),
                }
            }
            let out = match (out, &cfg) {
                (Some(o), _) => o,
                (None, Some(c)) => c.output.clone(),
                (None, None) => bail!("pass --out or --config"),
            };
            let n = commands::compare(&runs, &out, force_overwrite)?;
            println!(
                "wrote {n} rows to {}",
                out.join(commands::COMPARE_CSV).display()
            );
        }
    }
    Ok(())
}
