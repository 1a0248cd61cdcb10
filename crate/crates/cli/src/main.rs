//! `ising-bell`: run Bell-CHSH experiments on Ising lattice spec files.
//!
//! Exit codes: 0 success, 1 output could not be written, 2 input error
//! (unreadable or invalid spec, bad arguments), 3 resource cap exceeded,
//! 4 numerical failure.

mod commands;
mod manifest;
mod table;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(name = "ising-bell", version, about = "Bell-CHSH experiments on classical and quantum Ising lattices")]
pub struct Cli {
    /// Spec file, or `builtin:<name>` for a bundled spec
    #[arg(long, global = true, default_value = "builtin:fig1-default")]
    pub spec: String,
    /// Output directory, created if missing
    #[arg(long, global = true, default_value = "ising-bell-out")]
    pub out: PathBuf,
    /// Worker threads; results are identical for any value
    #[arg(long, global = true, env = "ISING_BELL_THREADS")]
    pub threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Csv)]
    pub format: Format,
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Text,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Overrides {
    /// Inverse temperature, must be positive
    #[arg(long, global = true)]
    pub beta: Option<f64>,
    /// Coupling on every edge
    #[arg(long, global = true)]
    pub coupling: Option<f64>,
    /// `VALUE` for every site or `LABEL=VALUE` for one site; repeatable
    #[arg(long, global = true)]
    pub field: Vec<String>,
    /// Sign placement: minus-mm, minus-pp, minus-mp, minus-pm or max
    #[arg(long, global = true, default_value = "minus-mm")]
    pub convention: String,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Correlators, CHSH value and independence diagnostics
    Chsh {
        /// Hidden sites to condition on, by label; defaults to all hidden sites
        #[arg(long, value_delimiter = ',')]
        lambda_subset: Option<Vec<String>>,
    },
    /// Independence diagnostics for one hidden subset, or every subset
    Diagnose {
        #[arg(long, value_delimiter = ',')]
        lambda_subset: Option<Vec<String>>,
    },
    /// Exact grid sweep of the CHSH value
    Sweep {
        /// `NAME=LOW:HIGH:POINTS` with NAME one of J, beta, h or h_<label>; repeatable
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        /// Tie each field to its mirror image
        #[arg(long)]
        symmetric: bool,
        #[arg(long, default_value_t = ising_bell::search::DEFAULT_GRID_BUDGET)]
        budget: usize,
    },
    /// Local ascent of the CHSH value from a start point
    Search {
        /// `NAME=LOW:HIGH@START`; repeatable
        #[arg(long = "param", required = true)]
        params: Vec<String>,
        #[arg(long)]
        symmetric: bool,
        /// First step as a fraction of each range
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 20_000)]
        max_evaluations: usize,
    },
    /// Evaluate the two published parameter points on every candidate geometry
    Reproduce {
        /// Site-7 field values for the second point; defaults to 0..2.5
        #[arg(long, value_delimiter = ',')]
        h7: Option<Vec<f64>>,
    },
    /// Transverse-field model by exact diagonalization
    Quantum {
        /// Transverse coupling h; defaults to the spec's [quantum] block
        #[arg(long)]
        transverse: Option<f64>,
        /// Use the ground state instead of the thermal state
        #[arg(long)]
        ground: bool,
        /// Add the spec's site fields as a longitudinal Z field
        #[arg(long)]
        longitudinal: bool,
        #[arg(long, default_value_t = ising_bell::DEFAULT_QUANTUM_CAP)]
        cap: usize,
    },
    /// Metropolis estimates with batch-means errors
    Mc {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 202_000)]
        sweeps: usize,
        #[arg(long, default_value_t = 2_000)]
        burn_in: usize,
        #[arg(long, default_value_t = 1)]
        thinning: usize,
        #[arg(long, default_value_t = 50)]
        batches: usize,
        #[arg(long, default_value_t = 4)]
        chains: usize,
    },
    /// Full configuration table and the effective spec
    Dump,
}

#[derive(Debug)]
pub enum CliError {
    Core(ising_bell::Error),
    Input(String),
    Output(String),
}

impl CliError {
    pub fn output(path: &Path, e: impl fmt::Display) -> Self {
        Self::Output(format!("{}: {e}", path.display()))
    }

    pub fn csv(e: impl fmt::Display) -> Self {
        Self::Output(format!("csv: {e}"))
    }

    pub fn exit_code(&self) -> u8 {
        use ising_bell::Error as E;
        match self {
            Self::Output(_) => 1,
            Self::Input(_) => 2,
            Self::Core(E::CapExceeded { .. } | E::BudgetExceeded { .. }) => 3,
            Self::Core(E::NonFiniteEnergy { .. } | E::Diagonalization) => 4,
            Self::Core(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Core(e) => write!(f, "{e}"),
            Self::Input(m) | Self::Output(m) => f.write_str(m),
        }
    }
}

impl From<ising_bell::Error> for CliError {
    fn from(e: ising_bell::Error) -> Self {
        Self::Core(e)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
