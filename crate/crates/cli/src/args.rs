use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use specthresh::Init;

#[derive(Debug, Parser)]
#[command(
    name = "specthresh",
    version,
    about = "Spectral hard-threshold estimation of Markov transition densities on the torus"
)]
pub struct Cli {
    /// Worker threads for parallel sections; outputs do not depend on it.
    #[arg(long, global = true, env = "SPECTHRESH_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Simulate a periodized Ornstein-Uhlenbeck chain.
    #[command(allow_negative_numbers = true)]
    Simulate(SimulateArgs),
    /// Estimate the transition operator from a trajectory file.
    #[command(allow_negative_numbers = true)]
    Estimate(EstimateArgs),
    /// Run a replicated loss experiment.
    #[command(allow_negative_numbers = true)]
    Experiment(ExperimentArgs),
    /// Emit the four density grids of the figure comparison.
    #[command(allow_negative_numbers = true)]
    FigureData(FigureArgs),
    /// Report singular values and their log-linear decay slope.
    #[command(allow_negative_numbers = true)]
    Spectrum(SpectrumArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Default)]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn ext(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KernelKind {
    Ou,
    Uniform,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 2.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    /// Number of transitions; the file holds n + 1 observations.
    #[arg(long)]
    pub n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// `stationary` or `fixed:<x0>`.
    #[arg(long, default_value = "stationary")]
    pub init: Init,
    /// Output file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    /// Trajectory file (CSV, or JSON when the extension is `.json`).
    pub input: PathBuf,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 0.0)]
    pub alpha: f64,
    /// Also write the `tau`-step power of the estimate when greater than 1.
    #[arg(long, default_value_t = 1)]
    pub tau: u32,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct ExperimentArgs {
    /// TOML manifest with flag-named keys; flags override its values.
    #[arg(long, conflicts_with = "preset")]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub preset: Option<Preset>,
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    pub n: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub m: Vec<usize>,
    #[arg(long, value_delimiter = ',')]
    pub alpha: Vec<f64>,
    #[arg(long)]
    pub reps: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub init: Option<Init>,
    #[arg(long)]
    pub truth_block: Option<usize>,
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    /// Output directory for `loss_table.csv` and `loss_table.json`;
    /// the table goes to standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Preset {
    Table1,
}

#[derive(Debug, Args)]
pub struct FigureArgs {
    #[arg(long, default_value_t = 2.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    #[arg(long, default_value = "fixed:0.5")]
    pub init: Init,
    /// Grid points per axis.
    #[arg(long, default_value_t = 256)]
    pub resolution: usize,
    #[arg(long, default_value_t = 4)]
    pub projection_m: usize,
    #[arg(long, default_value_t = 3)]
    pub raw_m: usize,
    #[arg(long, default_value_t = 0.0)]
    pub raw_alpha: f64,
    /// Basis size of the thresholded panel.
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Threshold of the thresholded panel.
    #[arg(long, default_value_t = 0.2)]
    pub alpha: f64,
    #[arg(long, default_value_t = 512)]
    pub quad_nodes: usize,
    /// Output directory for `grid_<panel>.<ext>`.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Args)]
pub struct SpectrumArgs {
    /// Trajectory file; required unless `--oracle` is given.
    #[arg(required_unless_present = "oracle")]
    pub input: Option<PathBuf>,
    /// Use the quadrature oracle instead of an empirical R̂.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, value_enum, default_value_t = KernelKind::Ou, requires = "oracle")]
    pub kernel: KernelKind,
    #[arg(long, default_value_t = 2.0)]
    pub theta: f64,
    #[arg(long, default_value_t = 2.0)]
    pub sigma: f64,
    #[arg(long)]
    pub m: usize,
    #[arg(long, default_value_t = 512)]
    pub quad_nodes: usize,
    /// Number of leading singular values in the slope fit.
    #[arg(long, default_value_t = 4)]
    pub fit: usize,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}
