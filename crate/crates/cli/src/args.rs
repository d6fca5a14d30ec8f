//! Command-line surface. Every option is global so that a config file can
//! carry any of them; keys in the file are the long flag names.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

#[derive(Debug, Parser)]
#[command(
    name = "stdgm",
    version,
    about = "Spectral analysis and dependence graphs for multitype spatio-temporal point patterns",
    args_override_self = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    #[command(flatten)]
    pub opts: Opts,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Load, deduplicate and bin an event table; write it back with an intensity summary.
    Ingest,
    /// Simulate a pattern with known dependence structure.
    Simulate,
    /// Pair correlation and K-function estimates.
    Classical,
    /// Raw and smoothed periodogram matrices and their polar summaries.
    Spectra,
    /// Partial coherency and |d_ij| for every pair (needs d >= 3).
    Partial,
    /// Dependence graph at threshold --xi (needs d >= 3).
    Graph,
    /// Lag-domain covariance characteristics.
    Invert,
    /// The whole chain, writing every intermediate artifact.
    Pipeline,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum SimKindArg {
    Poisson,
    LinkedCluster,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum NormArg {
    SqrtCounts,
    Unit,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum DftArg {
    Direct,
    Separable,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum FormatArg {
    Dot,
    Json,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum CurveArg {
    /// Pair correlation function.
    G,
    /// K-function.
    K,
    /// Centred mark-weighted K-function.
    MarkK,
}

#[derive(Clone, Debug, Default, Args)]
pub struct Opts {
    /// key=value file; command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "STDGM_THREADS")]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for simulation and null calibration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    /// Event table (CSV with x, y, time, type and optional mark).
    #[arg(long, global = true)]
    pub input: Option<PathBuf>,
    /// Time column holds integer steps 1..T rather than timestamps.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub time_is_index: Option<bool>,
    /// Time bin width for timestamps, e.g. 1month, 7d, 12h.
    #[arg(long, global = true)]
    pub bin_width: Option<String>,
    /// Start of the first time bin (default: earliest timestamp).
    #[arg(long, global = true)]
    pub bin_origin: Option<String>,
    /// Column remapping, e.g. x=lon,y=lat,time=date,type=category.
    #[arg(long, global = true)]
    pub col: Option<String>,
    /// Spatial window x_min,x_max,y_min,y_max (default: bounding box).
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub window: Option<String>,

    /// Simulate instead of reading --input.
    #[arg(long, global = true, value_enum)]
    pub sim_kind: Option<SimKindArg>,
    /// Number of simulated components.
    #[arg(long, global = true)]
    pub components: Option<usize>,
    /// Events per component per step: one value, or one per component.
    #[arg(long, global = true)]
    pub rates: Option<String>,
    /// Number of simulated time steps.
    #[arg(long, global = true)]
    pub t_steps: Option<u32>,
    /// Shared-parent links `i,j,parent_rate,offspring_rate,dispersion`
    /// (1-based components), separated by `;`.
    #[arg(long, global = true)]
    pub link: Option<String>,
    /// I.i.d. marks for simulated events, `normal:mu,sigma`.
    #[arg(long, global = true)]
    pub mark_dist: Option<String>,

    /// Largest spatial frequency p (p runs from 0).
    #[arg(long, global = true)]
    pub p_max: Option<i32>,
    /// Smallest spatial frequency q.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub q_min: Option<i32>,
    /// Largest spatial frequency q.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub q_max: Option<i32>,
    /// Smallest temporal frequency u (default: full range for T).
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub u_min: Option<i32>,
    /// Largest temporal frequency u.
    #[arg(long, global = true, allow_negative_numbers = true)]
    pub u_max: Option<i32>,
    /// Let the (0,0,0) ordinate enter smoothing and the sup statistics.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub include_dc: Option<bool>,
    /// Daniell half-widths `hp,hq,hu`.
    #[arg(long, global = true)]
    pub half_widths: Option<String>,
    /// Use the marked DFT (requires a mark column).
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub marked: Option<bool>,
    /// Periodogram scaling (default: divide by sqrt(n_i n_j)).
    #[arg(long, global = true, value_enum)]
    pub normalisation: Option<NormArg>,
    /// DFT evaluation (both give the same values).
    #[arg(long, global = true, value_enum)]
    pub dft: Option<DftArg>,

    /// Edge threshold: a number, or `null:qNN` to calibrate against Poisson.
    #[arg(long, global = true)]
    pub xi: Option<String>,
    /// Replicates for `--xi null:qNN`.
    #[arg(long, global = true)]
    pub null_replicates: Option<usize>,
    /// Also build one spatial graph per time step.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub per_slice: Option<bool>,
    /// Graph output for `graph` (pipeline writes both).
    #[arg(long, global = true, value_enum)]
    pub format: Option<FormatArg>,

    /// Classical curve (default: k).
    #[arg(long, global = true, value_enum)]
    pub curve: Option<CurveArg>,
    /// Reference type set for classical curves, 1-based, e.g. `1+2`.
    #[arg(long, global = true)]
    pub types_c: Option<String>,
    /// Partner type set for classical curves.
    #[arg(long, global = true)]
    pub types_d: Option<String>,
    /// Spatial lags, comma separated.
    #[arg(long, global = true)]
    pub r_grid: Option<String>,
    /// Temporal lags, comma separated.
    #[arg(long, global = true)]
    pub t_grid: Option<String>,
    /// Spatial bandwidth (default: Scott's rule).
    #[arg(long, global = true)]
    pub eps: Option<f64>,
    /// Temporal bandwidth (default: Scott's rule).
    #[arg(long, global = true)]
    pub delta: Option<f64>,
    /// Constant plug-in intensity; `--homogeneous=false` uses the separable kernel estimate.
    #[arg(long, global = true, num_args = 0..=1, default_missing_value = "true")]
    pub homogeneous: Option<bool>,
    /// Cells per axis for kernel intensity surfaces.
    #[arg(long, global = true)]
    pub intensity_cells: Option<usize>,
}
