//! `featfilter` command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or config error,
//! 3 I/O error.

mod commands;
mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use crate::commands::{checkpoint_dir, Suite};
use crate::config::RunConfig;

/// Bad flags, config keys or values.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// A check ran to completion and reported failures.
#[derive(Debug)]
pub struct VerificationFailed(pub String);

impl std::fmt::Display for VerificationFailed {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for VerificationFailed {}

pub const OUT_ENV: &str = "FEATFILTER_OUT";

#[derive(Parser, Debug)]
#[command(name = "featfilter", version, about = "Convolutional feature filter experiments")]
struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Override one config key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    overrides: Vec<String>,
    /// Exact output directory (default: a per-command directory under
    /// $FEATFILTER_OUT, or ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate the synthetic dataset.
    Gen {
        #[arg(long)]
        count: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train a network, writing losses, metrics and probe checkpoints.
    Train {
        #[arg(long)]
        data: Option<PathBuf>,
        /// unet | fcn
        #[arg(long)]
        net: Option<String>,
        /// on | off
        #[arg(long)]
        cff: Option<String>,
        /// Number of seeds.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-sample Dice and Hausdorff of one checkpoint.
    Eval {
        #[arg(long)]
        data: Option<PathBuf>,
        /// Run directory; the checkpoint is picked by --tag.
        #[arg(long, required_unless_present = "checkpoint")]
        run: Option<PathBuf>,
        /// Checkpoint directory, instead of --run/--tag.
        #[arg(long, conflicts_with = "run")]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        tag: Option<String>,
        /// train | val | all
        #[arg(long)]
        split: Option<String>,
    },
    /// Layer entropies and center signals of a filtered network.
    Probe {
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        run: PathBuf,
        /// Comma-separated probe tags.
        #[arg(long)]
        tags: Option<String>,
    },
    /// Run a verification suite: grad | entropy | theorem1 | linearity | metrics.
    Check { suite: String },
    /// Compare two run directories.
    Compare { run_a: PathBuf, run_b: PathBuf },
}

fn out_root() -> PathBuf {
    std::env::var_os(OUT_ENV).map_or_else(|| PathBuf::from("out"), PathBuf::from)
}

fn resolve_data(config: &mut RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    if let Some(dir) = flag {
        config.data.dir = Some(dir);
    }
    let dir = config.data.dir.clone().unwrap_or_else(|| out_root().join("data"));
    config.data.dir = Some(dir.clone());
    Ok(dir)
}

fn set(config: &mut RunConfig, key: &str, value: Option<String>) -> Result<()> {
    if let Some(v) = value {
        config.set(key, &v)?;
    }
    Ok(())
}

fn report(path: &Path) {
    println!("{}", path.display());
}

fn run(cli: Cli) -> Result<()> {
    let mut config = RunConfig::default();
    if let Some(path) = &cli.config {
        config.apply_file(path)?;
    }
    for pair in &cli.overrides {
        config.set_pair(pair)?;
    }
    match cli.command {
        Command::Gen { count, seed } => {
            set(&mut config, "data.count", count.map(|c| c.to_string()))?;
            set(&mut config, "data.seed", seed.map(|s| s.to_string()))?;
            config.validate()?;
            let out = match cli.out {
                Some(out) => out,
                None => resolve_data(&mut config, None)?,
            };
            report(&commands::cmd_gen(&config, &out)?);
        }
        Command::Train {
            data,
            net,
            cff,
            runs,
            seed,
        } => {
            set(&mut config, "net.family", net)?;
            set(&mut config, "net.cff", cff)?;
            set(&mut config, "train.runs", runs.map(|r| r.to_string()))?;
            if let Some(s) = seed {
                config.set("train.seed", &s.to_string())?;
                config.set("net.seed", &s.to_string())?;
            }
            config.validate()?;
            let data = resolve_data(&mut config, data)?;
            let name = format!("{}{}", config.net.family, if config.net.with_cff { "-cff" } else { "" });
            let out = cli.out.unwrap_or_else(|| out_root().join(name));
            report(&commands::cmd_train(&config, &data, &out)?);
        }
        Command::Eval {
            data,
            run,
            checkpoint,
            tag,
            split,
        } => {
            set(&mut config, "eval.tag", tag)?;
            set(&mut config, "eval.split", split)?;
            config.validate()?;
            let data = resolve_data(&mut config, data)?;
            let default_name = format!("eval_{}_{}", config.eval_tag, config.eval_split);
            let (ckpt, default_out) = match (run, checkpoint) {
                (_, Some(c)) => (c, out_root().join(default_name)),
                (Some(r), None) => (checkpoint_dir(&r, config.eval_tag)?, r.join(default_name)),
                (None, None) => bail!(UsageError("eval needs --run or --checkpoint".into())),
            };
            let out = cli.out.unwrap_or(default_out);
            report(&commands::cmd_eval(&config, &data, &ckpt, &out)?);
        }
        Command::Probe { data, run, tags } => {
            set(&mut config, "probe.tags", tags)?;
            config.validate()?;
            let data = resolve_data(&mut config, data)?;
            let out = cli.out.unwrap_or_else(|| run.join("probe"));
            report(&commands::cmd_probe(&config, &data, &run, &out)?);
        }
        Command::Check { suite } => {
            let suite: Suite = suite.parse().map_err(UsageError)?;
            commands::cmd_check(suite, &config)?;
        }
        Command::Compare { run_a, run_b } => {
            let out = cli.out.unwrap_or_else(|| out_root().join("compare"));
            report(&commands::cmd_compare(&config, &run_a, &run_b, &out)?);
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<VerificationFailed>() {
            return 1;
        }
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<featfilter::Error>() {
            return match e {
                featfilter::Error::Io { .. } | featfilter::Error::Format { .. } => 3,
                featfilter::Error::NonFinite { .. } => 1,
                _ => 2,
            };
        }
        if cause.is::<std::io::Error>() {
            return 3;
        }
    }
    2
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
