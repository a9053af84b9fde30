mod commands;
mod config;
mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

/// Corner bookkeeping, composition tables and spectral/heat experiments.
#[derive(Debug, Parser)]
#[command(name = "acclab", version)]
pub struct Cli {
    /// Experiment configuration (sectioned key = value file)
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Directory for CSV/JSON artifacts; without it CSV goes to stdout
    #[arg(long, global = true, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// Worker threads for mode and probe fan-out
    #[arg(long, global = true, value_name = "N")]
    pub jobs: Option<usize>,
    /// Overrides the solver's relative tolerance
    #[arg(long, global = true, value_name = "X")]
    pub tolerance: Option<f64>,
    /// Check every shipped golden table before running the command
    #[arg(long, global = true)]
    pub verify_tables: bool,
    #[command(subcommand)]
    pub command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Face and corner inventory of a blown-up space
    Faces {
        /// b_heat, conic_heat, sc_heat, acc_double, acc_heat, sc_triple_heat, acc_triple_heat
        kind: String,
        /// Print the JSON table instead of the text table
        #[arg(long)]
        json: bool,
    },
    /// Pull a monomial back along beta_L, beta_R or beta_C
    Lift {
        map: String,
        /// e.g. `rho_d2`, `rho_100^2 rho_010`, `1`
        monomial: String,
    },
    /// Compose two operator orders given as JSON files
    Compose {
        #[arg(long)]
        calculus: String,
        a: PathBuf,
        b: PathBuf,
        /// Dimension used to order symbolic exponents
        #[arg(long, default_value_t = 3)]
        n: i64,
        #[arg(long)]
        json: bool,
    },
    /// Per-mode eigenvalues for every ε of the schedule
    Spectrum,
    /// Eigenvalue flow, accumulation clusters and the reference verdict
    Flow,
    /// Heat-kernel probe decay table
    Heat {
        /// interior_F0101 or scaled_F1010; defaults to the config value
        #[arg(long)]
        regime: Option<String>,
    },
    /// Check every shipped golden table
    VerifyTables,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
