use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use einsel_core::exec::Execution;

mod commands;
mod config;
mod error;
mod verify;

use config::{Overrides, RunConfig};
use error::CliError;

/// Single bosonic mode under photon loss and number dephasing.
#[derive(Parser)]
#[command(name = "einsel", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Exact evolution: moments.csv and optional density snapshots.
    Evolve(RunArgs),
    /// Quantum-trajectory ensemble compared with the exact propagator.
    Trajectories(RunArgs),
    /// Wigner grids and angular harmonics at the configured times.
    Wigner(RunArgs),
    /// Pointer-state optimization at one coupling.
    Optimize(RunArgs),
    /// Pointer-state optimization across the coupling ratio.
    Sweep(RunArgs),
    /// Run the oracle checks; exits nonzero on any failure.
    Verify {
        /// Offset added to the closed-form Wigner kernels (negative control).
        #[arg(long, default_value_t = 0.0, hide = true)]
        perturb_kernel: f64,
    },
}

#[derive(Copy, Clone, ValueEnum)]
enum ExecArg {
    Sequential,
    Parallel,
}

#[derive(Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Basis dimension.
    #[arg(long)]
    dim: Option<usize>,
    /// Trajectories per time point.
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, value_enum)]
    execution: Option<ExecArg>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, CliError> {
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            dim: self.dim,
            n_samples: self.samples,
            execution: self.execution.map(|e| match e {
                ExecArg::Sequential => Execution::Sequential,
                ExecArg::Parallel => Execution::Parallel,
            }),
        };
        RunConfig::load(&self.config, &overrides)
    }
}

fn run(cli: Cli) -> Result<Vec<String>, CliError> {
    match cli.command {
        Command::Evolve(a) => commands::evolve(&a.load()?),
        Command::Trajectories(a) => commands::trajectories(&a.load()?),
        Command::Wigner(a) => commands::wigner(&a.load()?),
        Command::Optimize(a) => commands::optimize(&a.load()?),
        Command::Sweep(a) => commands::sweep(&a.load()?),
        Command::Verify { perturb_kernel } => {
            let checks = verify::run(perturb_kernel)?;
            let lines: Vec<String> = checks.iter().map(verify::Check::line).collect();
            let failed = checks.iter().filter(|c| !c.passed()).count();
            if failed > 0 {
                for l in &lines {
                    println!("{l}");
                }
                return Err(CliError::Numeric(format!("{failed} of {} checks failed", checks.len())));
            }
            Ok(lines)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(lines) => {
            for l in lines {
                println!("{l}");
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("einsel: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
