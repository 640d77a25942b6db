use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use qconserve_cli::{execute, Command, Overrides};

/// Conservation of POVMs under repeated quantum instruments.
#[derive(Parser)]
#[command(name = "qconserve", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Run configuration (JSON).
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, value_name = "DIR")]
    out: Option<PathBuf>,

    #[arg(long, global = true, value_name = "REAL")]
    tol: Option<f64>,

    #[arg(long, global = true, value_name = "INT")]
    seed: Option<u64>,

    /// Number of compositions or witness levels.
    #[arg(long, global = true, value_name = "INT")]
    n: Option<usize>,

    /// Exit with status 1 unless the POVM is conserved.
    #[arg(long, global = true)]
    expect_conserved: bool,
}

#[derive(Clone, Copy, Subcommand)]
enum Cmd {
    /// Check the model instrument (and an optional POVM file).
    Validate,
    /// n-fold composition of the instrument.
    Compose,
    /// Decide the post-processing order between two POVM files.
    PovmOrder,
    /// Check whether the instrument conserves the POVM.
    Conserve,
    /// Finite approximants E_1..E_n and their consistency residuals.
    InfiniteApprox,
    /// Kernel chain witnessing minimality of the infinite composition.
    Witness,
    /// Monte Carlo trajectories and count statistics.
    Simulate,
}

impl From<Cmd> for Command {
    fn from(c: Cmd) -> Self {
        match c {
            Cmd::Validate => Command::Validate,
            Cmd::Compose => Command::Compose,
            Cmd::PovmOrder => Command::PovmOrder,
            Cmd::Conserve => Command::Conserve,
            Cmd::InfiniteApprox => Command::InfiniteApprox,
            Cmd::Witness => Command::Witness,
            Cmd::Simulate => Command::Simulate,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Some(config) = cli.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(2);
    };
    let overrides = Overrides {
        out: cli.out,
        tol: cli.tol,
        seed: cli.seed,
        n: cli.n,
        expect_conserved: cli.expect_conserved,
    };
    match execute(cli.command.into(), &config, &overrides) {
        Ok(summary) => {
            println!("{}", summary.message);
            for f in &summary.files {
                println!("  wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
