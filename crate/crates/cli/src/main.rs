use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use msmae_cli::commands::{self, Overrides};
use msmae_cli::CliError;

/// Multi-scale masked-autoencoder pre-training on synthetic multi-band
/// imagery.
#[derive(Parser)]
#[command(name = "msmae", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML run configuration; unspecified keys keep their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run seed (overrides the config file).
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of reconstruction scales: 1, 2 or 3.
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    levels: Option<u8>,
    /// Per-scale loss weights as `a1,a2,a3`.
    #[arg(long, value_parser = parse_alpha)]
    alpha: Option<[f64; 3]>,
}

impl Common {
    fn overrides(&self) -> Overrides {
        Overrides {
            seed: self.seed,
            levels: self.levels.map(usize::from),
            alpha: self.alpha,
        }
    }

    fn resolve(&self) -> Result<msmae_cli::config::RunConfig, CliError> {
        commands::resolve_config(self.config.as_deref(), &self.overrides())
    }
}

#[derive(Subcommand)]
enum Command {
    /// Pre-train the autoencoder and write checkpoints plus a metric log.
    Pretrain(Common),
    /// Finetune a classifier, optionally starting from a pre-trained checkpoint.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Pre-training checkpoint to initialise the encoder from.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Print the validation metric of a finetuned checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        /// Finetuned checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
    },
    /// Write PPM images of a sample and its multi-scale reconstructions.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        /// Pre-training checkpoint.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Index of the pre-training sample.
        #[arg(long, default_value_t = 0)]
        index: usize,
    },
    /// Compare pre-training with different numbers of scales.
    Ablate {
        #[command(flatten)]
        common: Common,
        /// Scale counts to compare, e.g. `1,2,3`.
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        scales: Vec<usize>,
        /// Seeds per scale count (default from the config).
        #[arg(long)]
        seeds: Option<usize>,
    },
}

fn parse_alpha(s: &str) -> Result<[f64; 3], String> {
    let parts: Vec<f64> = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("{p:?}: {e}")))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|v: Vec<f64>| format!("expected 3 weights, got {}", v.len()))
}

fn threads_from_env() -> Option<usize> {
    std::env::var("MSMAE_THREADS").ok()?.parse().ok().filter(|&n| n > 0)
}

fn run(cli: Cli) -> Result<(), CliError> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match cli.command {
        Command::Pretrain(common) => {
            let cfg = common.resolve()?;
            let path = commands::cmd_pretrain(&cfg, &common.out, &mut out)?;
            writeln!(out, "checkpoint={}", path.display())?;
        }
        Command::Finetune { common, checkpoint } => {
            let cfg = common.resolve()?;
            let path = commands::cmd_finetune(&cfg, checkpoint.as_deref(), &common.out, &mut out)?;
            writeln!(out, "checkpoint={}", path.display())?;
        }
        Command::Eval { common, checkpoint } => {
            let cfg = match common.config {
                Some(_) => Some(common.resolve()?),
                None => None,
            };
            commands::cmd_eval(&checkpoint, cfg.as_ref(), &mut out)?;
        }
        Command::Reconstruct {
            common,
            checkpoint,
            index,
        } => {
            let rec = commands::cmd_reconstruct(&checkpoint, index, &common.out, &mut out)?;
            for f in rec.files {
                writeln!(out, "wrote {}", f.display())?;
            }
        }
        Command::Ablate { common, scales, seeds } => {
            let cfg = common.resolve()?;
            let seeds = seeds.unwrap_or(cfg.ablation_seeds);
            commands::cmd_ablate(&cfg, &scales, seeds, threads_from_env(), &mut out)?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
