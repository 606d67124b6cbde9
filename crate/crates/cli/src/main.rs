use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hqinet::train::{cmd_eval, cmd_generate, cmd_reconstruct, cmd_train, ensure_fresh_dir, RunConfig, TrainError};

#[derive(Parser)]
#[command(name = "hqinet", version, about = "Low-dose CT slice restoration")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// JSON run config; defaults to the desk preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write into a non-empty output directory.
    #[arg(long)]
    force: bool,
    /// Zero the wall-time column so equal runs give identical logs.
    #[arg(long)]
    strict_determinism: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the train and test volumes.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a model on a generated dataset.
    Train {
        #[command(flatten)]
        common: Common,
        /// Continue from this checkpoint.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Score a checkpoint on the test split.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Dataset directory; defaults to the one in the checkpoint's config.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Restore every interior slice of an HQIV volume.
    Reconstruct {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        input: PathBuf,
    },
}

fn load_config(common: &Common) -> Result<RunConfig, TrainError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::desk(),
    };
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if common.strict_determinism {
        cfg.strict_determinism = true;
    }
    Ok(cfg)
}

fn parent_or_here(path: &Path) -> PathBuf {
    path.parent()
        .filter(|p| !p.as_os_str().is_empty())
        .map_or_else(|| PathBuf::from("."), Path::to_path_buf)
}

fn run(cli: Cli) -> Result<(), TrainError> {
    match cli.command {
        Command::Generate { common } => {
            let mut cfg = load_config(&common)?;
            if let Some(out) = common.out {
                cfg.data.dir = out;
            }
            let index = cmd_generate(&cfg, common.force)?;
            println!(
                "wrote {} train and {} test volume pairs to {}",
                index.train.len(),
                index.test.len(),
                cfg.data.dir.display()
            );
        }
        Command::Train { common, resume } => {
            let mut cfg = load_config(&common)?;
            if let Some(out) = common.out {
                cfg.output_dir = out;
            }
            if resume.is_none() {
                ensure_fresh_dir(&cfg.output_dir, common.force)?;
            }
            let s = cmd_train(&cfg, resume.as_deref())?;
            println!(
                "trained {} epochs ({} steps); best validation loss {}; outputs in {}",
                s.epochs,
                s.steps,
                s.best_val_loss,
                s.output_dir.display()
            );
        }
        Command::Eval {
            common,
            checkpoint,
            data,
        } => {
            let out = common.out.unwrap_or_else(|| parent_or_here(&checkpoint));
            let report = cmd_eval(&checkpoint, data.as_deref(), &out)?;
            print!("{}", report.table());
        }
        Command::Reconstruct {
            common,
            checkpoint,
            input,
        } => {
            let out = common.out.unwrap_or_else(|| PathBuf::from("reconstruction"));
            ensure_fresh_dir(&out, common.force)?;
            let vol = cmd_reconstruct(&checkpoint, &input, &out)?;
            println!(
                "reconstructed {} interior slices of {} into {}",
                vol.n_slices - 2,
                input.display(),
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
