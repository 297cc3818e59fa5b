use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use renewal_dpp::{solve_lp, LpStatus};
use renewal_dpp_cli::experiment::{render_report, render_validation, validate_instance, write_lp};
use renewal_dpp_cli::{load_config, run_experiment, CliError};

#[derive(Parser)]
#[command(name = "renewal-dpp", version, about = "Drift-plus-penalty control of coupled renewal systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate every (V, seed) cell of the config and write CSV results.
    Run {
        config: PathBuf,
        /// Output directory; overrides `output` in [run].
        #[arg(long)]
        out: Option<PathBuf>,
        /// Assert the key-feature and sample-path inequalities; exit 3 on violation.
        #[arg(long)]
        check: bool,
        #[arg(long)]
        slots: Option<u64>,
        /// Replaces the seed list with a single seed.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Solve the optimal-stationary benchmark only.
    Lp {
        config: PathBuf,
        /// Also write lp.csv into this directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Sample each system's frames and check the declared bounds and means.
    Validate {
        config: PathBuf,
        #[arg(long, default_value_t = 100_000)]
        samples: u64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config, out, check, slots, seed } => {
            let mut cfg = load_config(&config)?;
            if let Some(slots) = slots {
                if slots == 0 {
                    return Err(CliError::Runtime(renewal_dpp::Error::ZeroSlots));
                }
                cfg.slots = slots;
            }
            if let Some(seed) = seed {
                cfg.seeds = vec![seed];
            }
            cfg.diagnostics.check |= check;
            let out_dir = out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("results"));
            let report = run_experiment(&cfg, &out_dir)?;
            print!("{}", render_report(&cfg, &report));
            match report.check_failures() {
                failures if report.check && failures > 0 => Err(CliError::CheckFailed(failures)),
                _ => Ok(()),
            }
        }
        Command::Lp { config, out } => {
            let cfg = load_config(&config)?;
            let lp = solve_lp(&cfg.instance.lp)?;
            match lp.status {
                LpStatus::Optimal => {
                    println!("objective {:.9}", lp.objective);
                    for (l, (g, d)) in lp.achieved.iter().zip(&cfg.instance.lp.bounds).enumerate() {
                        println!("constraint {}: {g:.6} <= {d}", l + 1);
                    }
                }
                status => println!("status {status:?}"),
            }
            if let Some(dir) = out {
                std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
                write_lp(&cfg, &lp, &dir.join("lp.csv"))?;
            }
            Ok(())
        }
        Command::Validate { config, samples, seed } => {
            let cfg = load_config(&config)?;
            let reports = validate_instance(&cfg, samples, seed);
            print!("{}", render_validation(&reports));
            let problems: u64 =
                reports.iter().map(|(_, r)| r.violation_count() + r.flagged_residual_count() as u64).sum();
            if problems > 0 {
                Err(CliError::CheckFailed(problems))
            } else {
                Ok(())
            }
        }
    }
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
