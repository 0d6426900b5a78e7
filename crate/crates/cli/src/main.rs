//! `gridcopula`: simulate, fit and assess piecewise-constant copulas.
//!
//! Exit status: 0 on success, 1 when a numerical procedure fails, 2 for
//! input, output and usage errors.

mod commands;
mod data;
mod heatmap;
mod study;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gridcopula::{CopulaFamily, McmcConfig, TieMode};

#[derive(Parser)]
#[command(
    name = "gridcopula",
    version,
    about = "Piecewise-constant copula estimation"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Draw a sample from a reference copula family.
    Simulate(SimulateArgs),
    /// Run the Gibbs sampler on a data file.
    Fit(FitArgs),
    /// Goodness-of-fit row for a fitted chain.
    Gof(GofArgs),
    /// Heatmap of a density grid (posterior mean, sample copula or family).
    Heatmap(HeatmapArgs),
    /// Run the simulation-study matrix and print its tables.
    Study(StudyArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DataMode {
    /// Data are already pseudo-observations in (0, 1].
    Raw,
    /// Apply the modified rank transform first.
    Rank,
}

impl DataMode {
    pub fn as_str(self) -> &'static str {
        match self {
            DataMode::Raw => "raw",
            DataMode::Rank => "rank",
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct FamilyArgs {
    /// product, gumbel, clayton, amh or normal
    #[arg(long)]
    pub family: Option<String>,
    /// Family parameter (not used by product)
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
}

impl FamilyArgs {
    pub fn family(&self) -> anyhow::Result<Option<CopulaFamily>> {
        match &self.family {
            None if self.theta.is_some() => anyhow::bail!("--theta given without --family"),
            None => Ok(None),
            Some(name) => Ok(Some(CopulaFamily::from_name(name, self.theta)?)),
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct DataArgs {
    /// Input CSV: header row and two numeric columns
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "rank")]
    pub mode: DataMode,
    /// Break ties by position in rank mode instead of failing
    #[arg(long)]
    pub lenient_ties: bool,
}

impl DataArgs {
    pub fn ties(&self) -> TieMode {
        if self.lenient_ties {
            TieMode::Lenient
        } else {
            TieMode::Strict
        }
    }
}

#[derive(Args, Clone, Debug)]
pub struct PriorArgs {
    #[arg(long, default_value_t = 0.1)]
    pub a: f64,
    #[arg(long, default_value_t = 0.1)]
    pub b: f64,
    /// Common number of binomial trials per free cell
    #[arg(long, default_value_t = 1)]
    pub c: u32,
}

#[derive(Args, Clone, Debug)]
pub struct McmcArgs {
    /// Proposal scale relative to the conditional support length
    #[arg(long, default_value_t = 0.25)]
    pub delta: f64,
    #[arg(long, default_value_t = 5000)]
    pub iters: usize,
    #[arg(long, default_value_t = 500)]
    pub burnin: usize,
    #[arg(long, default_value_t = 2)]
    pub thin: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl McmcArgs {
    pub fn config(&self) -> McmcConfig {
        McmcConfig {
            iterations: self.iters,
            burn_in: self.burnin,
            thin: self.thin,
            delta: self.delta,
            seed: self.seed,
        }
    }
}

#[derive(Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub family: FamilyArgs,
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output CSV with columns u,v
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Grid order
    #[arg(long, default_value_t = 5)]
    pub m: usize,
    #[command(flatten)]
    pub prior: PriorArgs,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Output directory for chain.csv and summary.json
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct GofArgs {
    /// Chain CSV written by `fit`
    #[arg(long)]
    pub chain: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    /// Reference family for the sup norm
    #[arg(long = "reference")]
    pub reference: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Also report the sup norm of the sample copula
    #[arg(long)]
    pub sample_copula: bool,
    /// Prior c, for the table row label
    #[arg(long)]
    pub c: Option<u32>,
    #[arg(long, default_value_t = 0.95)]
    pub level: f64,
    /// Write the report as JSON here
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args)]
pub struct HeatmapArgs {
    /// Posterior mean of this chain
    #[arg(long)]
    pub chain: Option<PathBuf>,
    /// Sample copula of this data file
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rank")]
    pub mode: DataMode,
    #[arg(long)]
    pub lenient_ties: bool,
    /// True density of this family
    #[arg(long = "reference")]
    pub reference: Option<String>,
    #[arg(long, allow_hyphen_values = true)]
    pub theta: Option<f64>,
    /// Grid order for sample-copula and family sources (default 5 and 128)
    #[arg(long)]
    pub m: Option<usize>,
    /// Points per axis of the exported CDF surface
    #[arg(long, default_value_t = 32)]
    pub cdf_points: usize,
    /// Output directory for heatmap.svg, cells.csv and cdf.csv
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Args)]
pub struct StudyArgs {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    /// Families as name or name:theta; default is the full study list
    #[arg(long, value_delimiter = ',')]
    pub families: Vec<String>,
    #[arg(long = "grid-m", value_delimiter = ',', default_values_t = [5usize, 8])]
    pub grid_m: Vec<usize>,
    #[arg(long = "prior-c", value_delimiter = ',', default_values_t = [0u32, 1, 2])]
    pub prior_c: Vec<u32>,
    #[arg(long, default_value_t = 0.1)]
    pub a: f64,
    #[arg(long, default_value_t = 0.1)]
    pub b: f64,
    #[command(flatten)]
    pub mcmc: McmcArgs,
    /// Output directory for the tables and study.json
    #[arg(long)]
    pub out: PathBuf,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    use gridcopula::Error;
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<Error>() {
            return match e {
                Error::InfeasibleState { .. } | Error::EmptyChain => 1,
                _ => 2,
            };
        }
        if cause.downcast_ref::<commands::NumericFailure>().is_some() {
            return 1;
        }
    }
    2
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => commands::simulate(&a),
        Command::Fit(a) => commands::fit(&a),
        Command::Gof(a) => commands::gof(&a),
        Command::Heatmap(a) => heatmap::run(&a),
        Command::Study(a) => study::run(&a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
