//! `contrastbnb`: simulate event windows, solve them globally, run the lattice oracle and the
//! local baseline, score estimates, and run seeded benchmark batteries.
//!
//! Every command prints `key: value` lines and writes a run manifest from which `replay`
//! reproduces it.

pub mod commands;
pub mod manifest;

use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use contrast_bnb::bounds::BoundsError;
use contrast_bnb::contrast::{Loss, LossKind, DEFAULT_DELTA};
use contrast_bnb::experiment::ExperimentError;
use contrast_bnb::solver::{SolveError, SplitMode, TerminationMode};
use contrast_bnb::warp::WarpError;

pub use manifest::{Record, RunManifest};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_PRECONDITION: i32 = 3;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("{0}")]
    Failed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => EXIT_USAGE,
            CliError::Precondition(_) => EXIT_PRECONDITION,
            _ => EXIT_FAILURE,
        }
    }
}

fn classify_warp(e: WarpError) -> CliError {
    match e {
        WarpError::IntervalTooWide { .. } => CliError::Precondition(e.to_string()),
        other => CliError::Usage(other.to_string()),
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        match e {
            SolveError::Bounds(BoundsError::Warp(w)) => classify_warp(w),
            SolveError::EmptyWindow => CliError::Precondition(e.to_string()),
            SolveError::InvalidConfig(m) => CliError::Usage(m),
            other => CliError::Failed(other.to_string()),
        }
    }
}

impl From<WarpError> for CliError {
    fn from(e: WarpError) -> Self {
        classify_warp(e)
    }
}

impl From<ExperimentError> for CliError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Solve(s) => s.into(),
            ExperimentError::Warp(w) => w.into(),
            other => CliError::Failed(other.to_string()),
        }
    }
}

/// Closed interval written `a:b`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Range {
    pub min: f64,
    pub max: f64,
}

impl FromStr for Range {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (a, b) = s
            .split_once(':')
            .ok_or_else(|| format!("expected 'min:max', got '{s}'"))?;
        let parse = |x: &str| {
            x.trim()
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| format!("bad number '{x}'"))
        };
        let (min, max) = (parse(a)?, parse(b)?);
        if min > max {
            return Err(format!("empty range {min}:{max}"));
        }
        Ok(Range { min, max })
    }
}

impl std::fmt::Display for Range {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.min, self.max)
    }
}

fn parse_loss(s: &str) -> Result<LossKind, String> {
    s.parse::<LossKind>().map_err(|e| e.to_string())
}

#[derive(Debug, Parser)]
#[command(name = "contrastbnb", version, about = "Globally optimal contrast maximisation for event cameras")]
pub struct Cli {
    /// Where to write the run manifest (default: next to the command's main input or output).
    #[arg(long, global = true)]
    pub manifest: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate synthetic event windows from a random line-segment scene.
    Simulate(SimulateArgs),
    /// Branch-and-bound search for the motion that maximises the loss.
    Solve(SolveArgs),
    /// Exhaustive lattice search.
    Grid(GridArgs),
    /// Local gradient ascent on the smoothed loss.
    Local(LocalArgs),
    /// RMS error of per-window estimates against ground truth.
    Eval(EvalArgs),
    /// Seeded trial batteries written as CSV.
    Bench(BenchArgs),
    /// Re-run a command from its manifest and check that it reproduces.
    Replay(ReplayArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RigArgs {
    /// Key-value rig file (keys f, u0, v0, s, d, width, height).
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct LossArgs {
    /// sos, var, soe, sosa, soeas or sosaas.
    #[arg(long, value_parser = parse_loss)]
    pub loss: LossKind,
    /// Shift factor of the SoSA losses.
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
}

impl LossArgs {
    pub fn loss(&self) -> Result<Loss, CliError> {
        Loss::new(self.loss, self.delta).map_err(|e| CliError::Usage(e.to_string()))
    }
}

#[derive(Debug, Clone, Args)]
pub struct EventsArgs {
    /// Event file (`t_us x y p` lines).
    #[arg(long)]
    pub events: PathBuf,
    /// Window length when the file has no window header (default: the event span).
    #[arg(long)]
    pub dt: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct SpaceArgs {
    #[arg(long, default_value = "0.4:0.6", allow_hyphen_values = true)]
    pub omega_range: Range,
    #[arg(long, default_value = "0.4:0.6", allow_hyphen_values = true)]
    pub v_range: Range,
}

#[derive(Debug, Clone, Args)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 0.00078)]
    pub eps_omega: f64,
    #[arg(long, default_value_t = 0.00078)]
    pub eps_v: f64,
    /// Branching limit (maximum number of splits).
    #[arg(long, default_value_t = 100_000)]
    pub nb: usize,
    /// either-width or both-widths.
    #[arg(long, default_value_t = TerminationMode::EitherWidth)]
    pub mode: TerminationMode,
    /// quad or longest.
    #[arg(long, default_value_t = SplitMode::Quad)]
    pub split: SplitMode,
    /// Relative tolerance for bound equality and pruning.
    #[arg(long, default_value_t = 1e-9)]
    pub tol: f64,
}

#[derive(Debug, Clone, Args)]
pub struct SimulateArgs {
    #[arg(long, default_value_t = 20)]
    pub segments: usize,
    /// Signal events per window.
    #[arg(long, default_value_t = 1000)]
    pub events: usize,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = 0.5)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.5)]
    pub v: f64,
    /// Noise events per signal event.
    #[arg(long, default_value_t = 0.0)]
    pub ne_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Event file, or the sequence manifest when `--windows` > 1.
    #[arg(long)]
    pub out: PathBuf,
    /// Side of the square the segments are drawn in (m).
    #[arg(long, default_value_t = contrast_bnb::sim::DEFAULT_EXTENT)]
    pub extent: f64,
    /// Plane depth (m); overrides the rig's `d`.
    #[arg(long, default_value_t = contrast_bnb::sim::DEFAULT_DEPTH)]
    pub depth: f64,
    #[arg(long, default_value_t = 1)]
    pub windows: usize,
    /// Amplitude of the sinusoidal ω profile across windows (rad/s).
    #[arg(long, default_value_t = 0.0)]
    pub omega_amp: f64,
    /// Keep sub-pixel event coordinates.
    #[arg(long)]
    pub continuous_px: bool,
    #[command(flatten)]
    pub rig: RigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct SolveArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub rig: RigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    #[command(flatten)]
    pub loss: LossArgs,
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long, default_value_t = 0.001)]
    pub step_omega: f64,
    #[arg(long, default_value_t = 0.001)]
    pub step_v: f64,
    #[command(flatten)]
    pub rig: RigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct LocalArgs {
    #[command(flatten)]
    pub input: EventsArgs,
    #[command(flatten)]
    pub loss: LossArgs,
    /// Sizes the image padding.
    #[command(flatten)]
    pub space: SpaceArgs,
    #[arg(long)]
    pub init_omega: f64,
    #[arg(long)]
    pub init_v: f64,
    /// Gaussian smoothing (px).
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.05)]
    pub init_step: f64,
    #[arg(long, default_value_t = 200)]
    pub max_iters: usize,
    #[command(flatten)]
    pub rig: RigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// One `omega v` pair per line (rad/s, m/s).
    #[arg(long)]
    pub estimates: PathBuf,
    /// Same format as the estimates.
    #[arg(long)]
    pub truths: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 100)]
    pub trials: usize,
    /// Comma-separated noise ratios.
    #[arg(long, default_value = "0", value_delimiter = ',')]
    pub ne_ratios: Vec<f64>,
    /// Seed of the first trial; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1000)]
    pub events: usize,
    #[arg(long, default_value_t = 20)]
    pub segments: usize,
    #[arg(long, default_value_t = 0.5)]
    pub omega: f64,
    #[arg(long, default_value_t = 0.5)]
    pub v: f64,
    #[arg(long, default_value_t = 0.1)]
    pub dt: f64,
    #[arg(long, default_value_t = LossKind::SoS, value_parser = parse_loss)]
    pub loss: LossKind,
    #[arg(long, default_value_t = DEFAULT_DELTA)]
    pub delta: f64,
    /// Search range for ω (default 0.4:0.6, or the trajectory's ω span widened by 0.1).
    #[arg(long, allow_hyphen_values = true)]
    pub omega_range: Option<Range>,
    /// Search range for v (default 0.4:0.6, or v ± 0.2 for trajectories).
    #[arg(long, allow_hyphen_values = true)]
    pub v_range: Option<Range>,
    #[command(flatten)]
    pub solver: SolverArgs,
    /// Compare BnB with the local baseline along a curved multi-window trajectory instead.
    #[arg(long)]
    pub trajectory: bool,
    #[arg(long, default_value_t = 10)]
    pub windows: usize,
    #[arg(long, default_value_t = 0.5)]
    pub omega_amp: f64,
    /// Starting points of the local baseline form a k×k grid over the search space.
    #[arg(long, default_value_t = 3)]
    pub init_grid: usize,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    /// CSV output.
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub rig: RigArgs,
}

#[derive(Debug, Clone, Args)]
pub struct ReplayArgs {
    #[arg(long = "from")]
    pub from: PathBuf,
}

/// Parses `argv` (program name first), runs the command, prints its record to `out` and
/// errors to `err`; returns the process exit code.
pub fn run_from_args<I, S>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<String>,
{
    let argv: Vec<String> = argv.into_iter().map(Into::into).collect();
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            if code == 0 {
                let _ = write!(out, "{rendered}");
            } else {
                let _ = write!(err, "{rendered}");
            }
            return code;
        }
    };
    match commands::execute(&cli, &argv[1..]) {
        Ok(record) => {
            let _ = write!(out, "{record}");
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            e.exit_code()
        }
    }
}
