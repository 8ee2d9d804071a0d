//! `platesize`: forward solves, work gaps and size-estimate experiments for
//! plates with elastic inclusions.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use platesize_core::{Error, ErrorClass};

mod commands;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "PLATESIZE_OUT";

#[derive(Debug, Parser)]
#[command(name = "platesize", version, about = "Plate inclusion size-estimate lab")]
struct Cli {
    /// Experiment config (`key = value` lines).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Directory for CSV output; stdout when unset.
    #[arg(long, global = true, env = OUT_ENV)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Load compatibility tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
    /// Solve with the dense eigendecomposition oracle.
    #[arg(long, global = true)]
    dense_oracle: bool,
    /// Use the plain shear strain instead of the assumed-strain interpolation.
    #[arg(long, global = true)]
    full_integration: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve with the configured inclusion (if any) and write the nodal state.
    Solve {
        /// Solve the inclusion-free reference problem instead.
        #[arg(long)]
        reference: bool,
    },
    /// Boundary works with and without the inclusion.
    Work,
    /// Check the two-sided energy comparison over the inclusion.
    EnergyLemma,
    /// Area bounds from the work gap.
    Size,
    /// Three-spheres interpolation at one center.
    ThreeSpheres,
    /// Local-to-global energy ratios over interior centers.
    Lps,
    /// Refinement study against the closed-form solution.
    Convergence,
    /// Fit envelope constants on a directory of configs.
    Calibrate {
        /// Directory holding `*.cfg` files.
        dir: PathBuf,
    },
}

fn exit_code(e: &Error) -> u8 {
    match e.class() {
        ErrorClass::Input => 1,
        ErrorClass::Numerical => 2,
        ErrorClass::Check => 3,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    if let Some(n) = cli.jobs {
        if n == 0 {
            eprintln!("error: --jobs must be at least 1");
            return ExitCode::from(1);
        }
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(1);
        }
    }
    match commands::run(&cli) {
        Ok(commands::Outcome::Ok) => ExitCode::SUCCESS,
        Ok(commands::Outcome::CheckFailed(msg)) => {
            eprintln!("check failed: {msg}");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
