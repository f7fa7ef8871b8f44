use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nop_cli::{exit_code, run, Command, RunConfig};

#[global_allocator]
static GLOBAL: mimalloc::MiMalloc = mimalloc::MiMalloc;

/// Neural operator pipeline: data generation, training, evaluation and inversion.
#[derive(Parser)]
#[command(name = "nop", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// TOML run configuration.
    #[arg(short, long)]
    config: Option<PathBuf>,
    /// Override a configuration value, e.g. `--set train.epochs=50`.
    #[arg(long = "set", value_name = "SECTION.KEY=VALUE")]
    set: Vec<String>,
    /// Output directory (overrides `out` in the configuration).
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Draw inputs from the configured measure and solve for outputs.
    GenData(Common),
    /// Train a model on `data.path`, checkpointing into the output directory.
    Train(Common),
    /// Relative L2 errors of a model on one or more datasets.
    Eval(Common),
    /// Zero-shot evaluation of a checkpoint on finer datasets.
    Superres(Common),
    /// pCN posterior means with the solver and optionally a surrogate forward map.
    Invert(Common),
    /// Energy spectra of the dataset outputs and optional model predictions.
    Spectra(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (cmd, common) = match cli.command {
        Cmd::GenData(c) => (Command::GenData, c),
        Cmd::Train(c) => (Command::Train, c),
        Cmd::Eval(c) => (Command::Eval, c),
        Cmd::Superres(c) => (Command::Superres, c),
        Cmd::Invert(c) => (Command::Invert, c),
        Cmd::Spectra(c) => (Command::Spectra, c),
    };
    let cfg = match RunConfig::load(common.config.as_deref(), &common.set) {
        Ok(mut c) => {
            if common.out.is_some() {
                c.out = common.out;
            }
            c
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(exit_code(&e) as u8);
        }
    };
    match run(cmd, &cfg) {
        Ok(summary) => {
            println!("{}", summary.trim_end());
            ExitCode::SUCCESS
        }
        Err(f) => {
            eprintln!("error: {}", f.error);
            if let Some(p) = f.last_checkpoint {
                eprintln!("last checkpoint: {}", p.display());
            } else if f.error.is_numerical() && cmd == Command::Train {
                eprintln!("last checkpoint: none written");
            }
            ExitCode::from(exit_code(&f.error) as u8)
        }
    }
}
