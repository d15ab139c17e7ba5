//! Seeded synthetic experiments shared by the benchmark command and the acceptance suite:
//! single-window trials against the lattice oracle, and BnB versus warm-started local
//! ascent along a curved trajectory.

use thiserror::Error;

use crate::contrast::{evaluate, Loss};
use crate::event::{EventWindow, GridSpec};
use crate::sim::{
    curved_trajectory, gradient_ascent, grid_search, rms_eval, trial_sequence, trial_window,
    AscentConfig, GroundTruth, SimError, TrialSetup,
};
use crate::solver::{solve, SolveError, SolveReport, SolverConfig};
use crate::warp::{AckermannWarp, MotionParams, SearchSpace, WarpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Warp(#[from] WarpError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DeskConfig {
    pub setup: TrialSetup,
    pub space: SearchSpace,
    pub loss: Loss,
    pub solver: SolverConfig,
    /// Lattice step of the oracle; `None` skips it.
    pub grid_step: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub seed: u64,
    pub ne_ratio: f64,
    pub n_events: usize,
    pub truth: GroundTruth,
    pub bnb: SolveReport,
    /// Loss at the BnB estimate, recomputed from scratch.
    pub bnb_loss: f64,
    pub grid: Option<(MotionParams, f64)>,
}

impl TrialOutcome {
    pub fn omega_err(&self) -> f64 {
        self.bnb.theta_hat.omega - self.truth.omega
    }

    pub fn v_err(&self) -> f64 {
        self.bnb.theta_hat.v - self.truth.v
    }
}

pub fn padded_grid(
    setup: &TrialSetup,
    space: &SearchSpace,
    warp: &AckermannWarp,
) -> Result<GridSpec, WarpError> {
    let sensor = GridSpec::sensor(setup.opts.width, setup.opts.height);
    warp.padded_grid(&sensor, space, setup.dt)
}

/// Generates one noisy window and solves it (and optionally runs the lattice oracle).
pub fn desk_trial(
    cfg: &DeskConfig,
    warp: &AckermannWarp,
    seed: u64,
    ne_ratio: f64,
) -> Result<TrialOutcome, ExperimentError> {
    let window = trial_window(&cfg.setup, warp, seed, ne_ratio)?;
    let spec = padded_grid(&cfg.setup, &cfg.space, warp)?;
    desk_trial_on(cfg, warp, &spec, &window, seed, ne_ratio)
}

pub fn desk_trial_on(
    cfg: &DeskConfig,
    warp: &AckermannWarp,
    spec: &GridSpec,
    window: &EventWindow,
    seed: u64,
    ne_ratio: f64,
) -> Result<TrialOutcome, ExperimentError> {
    let bnb = solve(window, &cfg.space, &cfg.loss, &cfg.solver, warp, spec)?;
    let n = window.len() as u64;
    let bnb_loss = evaluate(&warp.build_iwe(window, bnb.theta_hat, spec), &cfg.loss, n);
    let grid = match cfg.grid_step {
        Some(step) => Some(grid_search(window, &cfg.space, step, step, &cfg.loss, warp, spec)?),
        None => None,
    };
    Ok(TrialOutcome {
        seed,
        ne_ratio,
        n_events: window.len(),
        truth: cfg.setup.truth,
        bnb,
        bnb_loss,
        grid,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryConfig {
    pub setup: TrialSetup,
    pub n_windows: usize,
    pub omega_mean: f64,
    pub omega_amp: f64,
    pub space: SearchSpace,
    pub loss: Loss,
    pub solver: SolverConfig,
    pub sigma: f64,
    pub ascent: AscentConfig,
    /// Starting points of the local baseline for the first window.
    pub inits: Vec<MotionParams>,
}

impl TrajectoryConfig {
    /// `k × k` starting points spread over `space`, edges included.
    pub fn init_grid(space: &SearchSpace, k: usize) -> Vec<MotionParams> {
        let at = |lo: f64, hi: f64, i: usize| {
            if k <= 1 {
                0.5 * (lo + hi)
            } else {
                lo + (hi - lo) * i as f64 / (k - 1) as f64
            }
        };
        let mut out = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                out.push(MotionParams::new(
                    at(space.omega_min, space.omega_max, i),
                    at(space.v_min, space.v_max, j),
                ));
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalRun {
    pub init: MotionParams,
    pub estimates: Vec<MotionParams>,
    pub rms: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryOutcome {
    pub truths: Vec<GroundTruth>,
    pub bnb: Vec<MotionParams>,
    /// `(ω in °/s, v in m/s)`.
    pub bnb_rms: (f64, f64),
    pub local: Vec<LocalRun>,
}

/// BnB on every window of a curved trajectory versus the local baseline, which starts each
/// window from its previous estimate.
pub fn trajectory_comparison(
    cfg: &TrajectoryConfig,
    warp: &AckermannWarp,
    seed: u64,
) -> Result<TrajectoryOutcome, ExperimentError> {
    let truths = curved_trajectory(cfg.n_windows, cfg.omega_mean, cfg.omega_amp, cfg.setup.truth.v);
    let (_, windows) = trial_sequence(&cfg.setup, &truths, warp, seed)?;
    let spec = padded_grid(&cfg.setup, &cfg.space, warp)?;

    let bnb = windows
        .iter()
        .map(|w| solve(w, &cfg.space, &cfg.loss, &cfg.solver, warp, &spec).map(|r| r.theta_hat))
        .collect::<Result<Vec<_>, _>>()?;
    let bnb_rms = rms_eval(&bnb, &truths)?;

    let mut local = Vec::with_capacity(cfg.inits.len());
    for &init in &cfg.inits {
        let mut theta = init;
        let mut estimates = Vec::with_capacity(windows.len());
        for w in &windows {
            theta = gradient_ascent(w, theta, &cfg.loss, cfg.sigma, &cfg.ascent, warp, &spec)?.0;
            estimates.push(theta);
        }
        let rms = rms_eval(&estimates, &truths)?;
        local.push(LocalRun {
            init,
            estimates,
            rms,
        });
    }
    Ok(TrajectoryOutcome {
        truths,
        bnb,
        bnb_rms,
        local,
    })
}
