use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use smartbill::billing::TariffMode;
use smartbill::pipeline::{run, Command, PipelineError, RunConfig, EXIT_CONFIG};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Sub {
    GenData,
    Bill,
    Train,
    Eval,
    Bench,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum Mode {
    Static,
    Dynamic,
}

/// Privacy-preserving smart-meter billing and theft detection.
#[derive(Debug, Parser)]
#[command(name = "smartbill", version)]
struct Cli {
    #[arg(value_enum)]
    command: Sub,
    /// JSON run config; flags below override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Field modulus (2305843009213693951 or 251).
    #[arg(long)]
    modulus: Option<u64>,
    /// Number of computation parties.
    #[arg(long)]
    parties: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
}

fn resolve(cli: &Cli) -> Result<RunConfig, PipelineError> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(m) = cli.modulus {
        cfg.modulus = m;
    }
    if let Some(p) = cli.parties {
        cfg.parties = p;
    }
    if let Some(m) = cli.mode {
        cfg.mode = match m {
            Mode::Static => TariffMode::Static,
            Mode::Dynamic => TariffMode::Dynamic,
        };
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_CONFIG as u8 } else { 0 });
        }
    };
    let command = match cli.command {
        Sub::GenData => Command::GenData,
        Sub::Bill => Command::Bill,
        Sub::Train => Command::Train,
        Sub::Eval => Command::Eval,
        Sub::Bench => Command::Bench,
    };
    match resolve(&cli).and_then(|cfg| run(command, &cfg)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("smartbill {}: {e}", command.as_str());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
