//! Command-line front end: `solve`, `sweep-tau`, `oracle` and `verify-pmp`.
//!
//! Exit codes: 0 success, 2 usage or configuration error, 3 infeasible
//! scenario, 4 numerical failure.

pub mod commands;
pub mod config;
pub mod output;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Error;
use commands::SweepSpec;
use config::ScenarioConfig;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_INFEASIBLE: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sircap", version, about = "Optimal strict-quarantine timing for an SIR epidemic under an infected cap")]
pub struct Cli {
    /// Scenario configuration (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads for sweeps and oracle lattices.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// RK4 step; overrides `step` from the config.
    #[arg(long, global = true)]
    pub step: Option<f64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Solve one scenario: policy.json and trajectory.csv.
    Solve,
    /// Solve over a range of budgets: sweep.csv and boundaries.json.
    SweepTau {
        #[arg(long)]
        tau_start: f64,
        #[arg(long)]
        tau_end: f64,
        #[arg(long)]
        tau_step: f64,
        /// Also run the brute-force search for every row (slow).
        #[arg(long)]
        with_oracle: bool,
        /// Bracket width for locating case transitions; 0 disables refinement.
        #[arg(long, default_value_t = 1e-3)]
        boundary_tol: f64,
    },
    /// Brute-force search: surface.csv and comparison.json.
    Oracle,
    /// Adjoint check of a solved policy: pmp_report.json.
    VerifyPmp {
        /// policy.json written by `solve`.
        #[arg(long)]
        policy: PathBuf,
    },
}

/// Failure with its exit code and a message for stderr.
#[derive(Debug)]
pub struct RunError {
    pub code: i32,
    pub message: String,
}

impl RunError {
    fn usage(message: impl Into<String>) -> Self {
        RunError { code: EXIT_USAGE, message: message.into() }
    }
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::InvalidParams(_) | Error::Domain { .. } | Error::Schedule(_) => EXIT_USAGE,
        Error::Infeasible(_) => EXIT_INFEASIBLE,
        _ => EXIT_NUMERICAL,
    }
}

/// Runs a parsed command line. Configuration problems are reported before
/// any file is written.
pub fn run(cli: Cli) -> Result<(), RunError> {
    let config_path = cli.config.clone().ok_or_else(|| RunError::usage("--config is required"))?;
    let mut cfg = ScenarioConfig::load(&config_path).map_err(|e| RunError::usage(e.to_string()))?;
    if let Some(step) = cli.step {
        cfg.step = step;
    }
    cfg.validate().map_err(|e| RunError::usage(e.to_string()))?;
    let out = cli.out.clone().or_else(|| cfg.output_dir.clone()).unwrap_or_else(|| PathBuf::from("out"));

    let policy = match &cli.command {
        Command::VerifyPmp { policy } => Some(commands::load_policy(policy).map_err(RunError::usage)?),
        _ => None,
    };
    if let Command::SweepTau { tau_start, tau_end, tau_step, .. } = &cli.command {
        commands::tau_grid(*tau_start, *tau_end, *tau_step).map_err(|e| RunError::usage(e.to_string()))?;
    }

    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = cli.workers {
        if n == 0 {
            return Err(RunError::usage("--workers must be at least 1"));
        }
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| RunError { code: EXIT_NUMERICAL, message: e.to_string() })?;

    let params = cfg.params();
    let name = match &cli.command {
        Command::Solve => "solve",
        Command::SweepTau { .. } => "sweep-tau",
        Command::Oracle => "oracle",
        Command::VerifyPmp { .. } => "verify-pmp",
    };
    let result = pool.install(|| -> crate::Result<()> {
        if let Err(Error::Infeasible(reason)) = params.validate() {
            return Err(Error::Infeasible(reason));
        }
        match &cli.command {
            Command::Solve => commands::cmd_solve(&cfg, &out).map(|_| ()),
            Command::SweepTau { tau_start, tau_end, tau_step, with_oracle, boundary_tol } => {
                let spec = SweepSpec {
                    start: *tau_start,
                    end: *tau_end,
                    step: *tau_step,
                    with_oracle: *with_oracle,
                    boundary_tol: (*boundary_tol > 0.0).then_some(*boundary_tol),
                };
                commands::cmd_sweep_tau(&cfg, &spec, &out).map(|_| ())
            }
            Command::Oracle => commands::cmd_oracle(&cfg, &out).map(|_| ()),
            Command::VerifyPmp { .. } => {
                commands::cmd_verify_pmp(&cfg, policy.as_ref().expect("loaded above"), &out).map(|_| ())
            }
        }
    });
    match result {
        Ok(()) => Ok(()),
        Err(Error::Infeasible(reason)) => {
            let _ = commands::write_infeasibility(&out, name, &params, &reason);
            Err(RunError { code: EXIT_INFEASIBLE, message: format!("infeasible problem: {reason}") })
        }
        Err(e) => Err(RunError { code: exit_code(&e), message: e.to_string() }),
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn run_from_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    match Cli::try_parse_from(args) {
        Ok(cli) => match run(cli) {
            Ok(()) => EXIT_OK,
            Err(e) => {
                eprintln!("error: {}", e.message);
                e.code
            }
        },
        Err(e) => {
            let _ = e.print();
            if e.use_stderr() {
                EXIT_USAGE
            } else {
                EXIT_OK
            }
        }
    }
}
