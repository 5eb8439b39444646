use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use lipobs_cli::commands;
use lipobs_cli::{CliError, RunConfig};

/// Robust observer synthesis for Lipschitz sampled-data systems.
#[derive(Debug, Parser)]
#[command(name = "lipobs", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the configured LMI design and write a JSON report.
    Design {
        #[arg(long)]
        config: PathBuf,
        /// Output path for the report; defaults to output.report_path, then stdout.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Run plant and observer from a design report and write a CSV trajectory.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Design report produced by `design`.
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the disturbance seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Grid estimate of the Lipschitz constant of f over the region.
    Lipschitz {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Steady-state error against sampling time, one CSV row per T.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long, value_delimiter = ',', required = true, allow_negative_numbers = true)]
        t_list: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the built-in benchmark end to end and print a comparison table.
    ReproduceExample {
        /// Composite JSON report.
        #[arg(long)]
        report: Option<PathBuf>,
        /// Trajectory CSV of the disturbed run.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Design { config, report } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_design(&cfg, report.as_deref()).map(drop)
        }
        Command::Simulate {
            config,
            report,
            out,
            seed,
        } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_simulate(&cfg, &report, out.as_deref(), seed).map(drop)
        }
        Command::Lipschitz { config, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_lipschitz(&cfg, out.as_deref()).map(drop)
        }
        Command::Sweep { config, t_list, out } => {
            let cfg = RunConfig::load(&config)?;
            commands::cmd_sweep(&cfg, &t_list, out.as_deref()).map(drop)
        }
        Command::ReproduceExample { report, out, seed } => {
            commands::cmd_reproduce_example(report.as_deref(), out.as_deref(), seed).map(drop)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(3);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("lipobs: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
