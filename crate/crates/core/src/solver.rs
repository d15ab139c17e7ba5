//! Best-first branch and bound over (ω, v).

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use thiserror::Error;

use crate::bounds::{rb, BoundsError};
use crate::contrast::Loss;
use crate::event::{EventWindow, GridSpec};
use crate::warp::{check_interval, AckermannWarp, MotionParams, SearchSpace, WarpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolveError {
    #[error("cannot solve on an empty window")]
    EmptyWindow,
    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Bounds(#[from] BoundsError),
}

impl From<WarpError> for SolveError {
    fn from(e: WarpError) -> Self {
        SolveError::Bounds(BoundsError::Warp(e))
    }
}

/// A sub-space with its bounds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Branch {
    pub space: SearchSpace,
    pub lower: f64,
    pub upper: f64,
}

impl Branch {
    pub fn bound(
        window: &EventWindow,
        space: SearchSpace,
        loss: &Loss,
        warp: &AckermannWarp,
        spec: &GridSpec,
    ) -> Result<Self, BoundsError> {
        let (lower, upper) = rb(window, &space, loss, warp, spec)?;
        Ok(Self { space, lower, upper })
    }

    pub fn is_tight(&self, tol: f64) -> bool {
        self.upper - self.lower <= tol * self.upper.abs().max(self.lower.abs())
    }
}

/// When the width test stops the search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TerminationMode {
    /// Stop once either dimension of the best open branch is below its ε.
    #[default]
    EitherWidth,
    /// Stop only once both are.
    BothWidths,
}

impl FromStr for TerminationMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "either" | "either-width" => Ok(Self::EitherWidth),
            "both" | "both-widths" => Ok(Self::BothWidths),
            other => Err(format!("unknown termination mode '{other}' (either-width, both-widths)")),
        }
    }
}

impl fmt::Display for TerminationMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::EitherWidth => "either-width",
            Self::BothWidths => "both-widths",
        })
    }
}

/// How a popped branch is subdivided.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SplitMode {
    /// Bisect both dimensions (four children).
    #[default]
    Quad,
    /// Bisect the wider dimension only (two children).
    Longest,
}

impl FromStr for SplitMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "quad" => Ok(Self::Quad),
            "longest" => Ok(Self::Longest),
            other => Err(format!("unknown split mode '{other}' (quad, longest)")),
        }
    }
}

impl fmt::Display for SplitMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Quad => "quad",
            Self::Longest => "longest",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    /// Maximum number of outer iterations (branches split).
    pub branching_limit: usize,
    pub width_eps_omega: f64,
    pub width_eps_v: f64,
    pub termination_mode: TerminationMode,
    pub split_mode: SplitMode,
    /// Relative tolerance for bound equality and pruning.
    pub bound_eq_tol: f64,
    /// Worker threads for bounding sibling branches; results do not depend on it.
    pub threads: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            branching_limit: 100_000,
            width_eps_omega: 0.00078,
            width_eps_v: 0.00078,
            termination_mode: TerminationMode::EitherWidth,
            split_mode: SplitMode::Quad,
            bound_eq_tol: 1e-9,
            threads: 1,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolveError> {
        let positive = |x: f64| x > 0.0 && x.is_finite();
        if self.branching_limit == 0 {
            return Err(SolveError::InvalidConfig("branching limit must be at least 1".into()));
        }
        if !positive(self.width_eps_omega) || !positive(self.width_eps_v) {
            return Err(SolveError::InvalidConfig("width thresholds must be positive".into()));
        }
        if !(self.bound_eq_tol >= 0.0 && self.bound_eq_tol.is_finite()) {
            return Err(SolveError::InvalidConfig("bound tolerance must be non-negative".into()));
        }
        if self.threads == 0 {
            return Err(SolveError::InvalidConfig("thread count must be at least 1".into()));
        }
        Ok(())
    }

    fn width_reached(&self, s: &SearchSpace) -> bool {
        let w = s.omega_width() <= self.width_eps_omega;
        let v = s.v_width() <= self.width_eps_v;
        match self.termination_mode {
            TerminationMode::EitherWidth => w || v,
            TerminationMode::BothWidths => w && v,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    /// No open branch can beat the incumbent.
    Converged,
    Width,
    Limit,
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Converged => "converged",
            Self::Width => "width",
            Self::Limit => "limit",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveReport {
    pub theta_hat: MotionParams,
    /// Loss at `theta_hat` (the incumbent's exact lower bound).
    pub best_lower: f64,
    /// Upper bound of the incumbent branch.
    pub best_upper: f64,
    /// Upper bound on the loss anywhere in the initial space.
    pub global_upper: f64,
    pub incumbent: SearchSpace,
    pub iterations: usize,
    /// Branches bounded, excluding the root.
    pub branches_explored: usize,
    pub branches_pruned: usize,
    pub wall_time: f64,
    pub terminated_by: Termination,
}

/// A branch is prunable when it cannot beat `l_star` by more than the tolerance.
pub fn is_prunable(upper: f64, l_star: f64, tol: f64) -> bool {
    upper <= l_star + tol * l_star.abs()
}

/// Removes every branch whose upper bound cannot beat `l_star`; returns how many were removed.
pub fn prune(queue: &mut Vec<Branch>, l_star: f64, tol: f64) -> usize {
    let before = queue.len();
    queue.retain(|b| !is_prunable(b.upper, l_star, tol));
    before - queue.len()
}

struct Queued {
    branch: Branch,
    seq: u64,
}

impl PartialEq for Queued {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Queued {}

impl PartialOrd for Queued {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Queued {
    // highest upper bound first, older branches first on ties
    fn cmp(&self, other: &Self) -> Ordering {
        self.branch
            .upper
            .total_cmp(&other.branch.upper)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

fn bound_children(
    window: &EventWindow,
    children: Vec<SearchSpace>,
    loss: &Loss,
    warp: &AckermannWarp,
    spec: &GridSpec,
    threads: usize,
) -> Result<Vec<Branch>, BoundsError> {
    if threads <= 1 || children.len() <= 1 {
        return children
            .into_iter()
            .map(|s| Branch::bound(window, s, loss, warp, spec))
            .collect();
    }
    let per = children.len().div_ceil(threads);
    std::thread::scope(|scope| {
        let handles: Vec<_> = children
            .chunks(per)
            .map(|chunk| {
                scope.spawn(move || {
                    chunk
                        .iter()
                        .map(|&s| Branch::bound(window, s, loss, warp, spec))
                        .collect::<Result<Vec<_>, _>>()
                })
            })
            .collect();
        let mut out = Vec::with_capacity(children.len());
        for h in handles {
            out.extend(h.join().expect("bounding thread panicked")?);
        }
        Ok(out)
    })
}

/// Maximises the loss over `space`.
///
/// Branches are explored best-upper-bound first; each popped branch is split and its
/// children bounded. The incumbent is the branch with the highest lower bound seen so far
/// and its centre is the estimate. The search stops when no open branch can beat the
/// incumbent (`Converged`), when the best open branch is narrower than the width thresholds
/// (`Width`), or after `branching_limit` splits (`Limit`).
pub fn solve(
    window: &EventWindow,
    space: &SearchSpace,
    loss: &Loss,
    cfg: &SolverConfig,
    warp: &AckermannWarp,
    spec: &GridSpec,
) -> Result<SolveReport, SolveError> {
    let started = Instant::now();
    cfg.validate()?;
    if window.is_empty() {
        return Err(SolveError::EmptyWindow);
    }
    check_interval(space, window.duration())?;

    let tol = cfg.bound_eq_tol;
    let root = Branch::bound(window, *space, loss, warp, spec)?;
    let mut incumbent = root;
    let mut queue = BinaryHeap::new();
    let mut seq = 0u64;
    queue.push(Queued { branch: root, seq });
    let mut iterations = 0;
    let mut explored = 0;
    let mut pruned = 0;

    let terminated_by = loop {
        // drop whatever the incumbent has made hopeless
        let before = queue.len();
        queue.retain(|q| !is_prunable(q.branch.upper, incumbent.lower, tol));
        pruned += before - queue.len();

        let Some(top) = queue.peek() else {
            break Termination::Converged;
        };
        if cfg.width_reached(&top.branch.space) {
            break Termination::Width;
        }
        if iterations >= cfg.branching_limit {
            break Termination::Limit;
        }
        let popped = queue.pop().expect("peeked").branch;
        iterations += 1;

        let children = match cfg.split_mode {
            SplitMode::Quad => popped.space.quadrisect().to_vec(),
            SplitMode::Longest => popped.space.bisect_longest().to_vec(),
        };
        for child in bound_children(window, children, loss, warp, spec, cfg.threads)? {
            explored += 1;
            if child.lower > incumbent.lower {
                incumbent = child;
            }
            if is_prunable(child.upper, incumbent.lower, tol) {
                pruned += 1;
            } else {
                seq += 1;
                queue.push(Queued { branch: child, seq });
            }
        }
    };

    let global_upper = queue
        .peek()
        .map_or(incumbent.upper, |q| q.branch.upper.max(incumbent.lower));
    Ok(SolveReport {
        theta_hat: incumbent.space.center(),
        best_lower: incumbent.lower,
        best_upper: incumbent.upper,
        global_upper,
        incumbent: incumbent.space,
        iterations,
        branches_explored: explored,
        branches_pruned: pruned,
        wall_time: started.elapsed().as_secs_f64(),
        terminated_by,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contrast::{evaluate, LossKind};
    use crate::sim::{generate_events, generate_scene, grid_search, EventOptions};
    use crate::warp::{CameraIntrinsics, RigGeometry};

    fn warp() -> AckermannWarp {
        AckermannWarp::new(
            CameraIntrinsics::new(200.0, 173.0, 130.0).unwrap(),
            RigGeometry::new(-0.45, 2.0).unwrap(),
        )
    }

    fn window(seed: u64, n: usize) -> EventWindow {
        let scene = generate_scene(20, 4.0, 2.0, seed).unwrap();
        generate_events(
            &scene,
            MotionParams::new(0.5, 0.5),
            n,
            0.1,
            &warp(),
            EventOptions::sensor(346, 260),
            seed,
        )
        .unwrap()
    }

    fn branch(upper: f64) -> Branch {
        Branch {
            space: SearchSpace::point(MotionParams::default()),
            lower: upper.min(0.0),
            upper,
        }
    }

    #[test]
    fn prune_examples() {
        let mut q = vec![branch(1.0), branch(2.0), branch(0.5)];
        assert_eq!(prune(&mut q, 0.0, 1e-9), 0);
        assert_eq!(q.len(), 3);
        assert_eq!(prune(&mut q, 1.0, 1e-9), 2);
        assert_eq!(q, vec![branch(2.0)]);
        // sign-aware: a negative incumbent still prunes ties
        let mut q = vec![branch(-3.0), branch(-2.0)];
        assert_eq!(prune(&mut q, -3.0, 1e-9), 1);
        assert_eq!(q, vec![branch(-2.0)]);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        for bad in [
            SolverConfig { branching_limit: 0, ..Default::default() },
            SolverConfig { width_eps_v: 0.0, ..Default::default() },
            SolverConfig { bound_eq_tol: -1.0, ..Default::default() },
            SolverConfig { threads: 0, ..Default::default() },
        ] {
            assert!(bad.validate().is_err());
        }
        assert_eq!("both".parse::<TerminationMode>(), Ok(TerminationMode::BothWidths));
        assert_eq!("longest".parse::<SplitMode>(), Ok(SplitMode::Longest));
        assert!("sideways".parse::<SplitMode>().is_err());
    }

    #[test]
    fn degenerate_space_echoes_the_centre() {
        let w = window(1, 300);
        let point = SearchSpace::point(MotionParams::new(0.52, 0.47));
        let spec = warp().padded_grid(&GridSpec::sensor(346, 260), &point, 0.1).unwrap();
        let r = solve(&w, &point, &Loss::with_default_delta(LossKind::SoS), &SolverConfig::default(), &warp(), &spec)
            .unwrap();
        assert_eq!(r.theta_hat, MotionParams::new(0.52, 0.47));
        assert_eq!(r.terminated_by, Termination::Converged);
        assert_eq!(r.best_lower, r.best_upper);
        assert_eq!(r.branches_explored, 0);
    }

    #[test]
    fn empty_window_is_rejected() {
        let w = EventWindow::new(vec![], 0.0, 0.1).unwrap();
        let sp = SearchSpace::new(0.4, 0.6, 0.4, 0.6).unwrap();
        let spec = GridSpec::sensor(346, 260);
        let err = solve(&w, &sp, &Loss::with_default_delta(LossKind::SoS), &SolverConfig::default(), &warp(), &spec);
        assert_eq!(err.unwrap_err(), SolveError::EmptyWindow);
    }

    #[test]
    fn too_wide_space_is_rejected() {
        let w = window(1, 50);
        let sp = SearchSpace::new(-20.0, 20.0, 0.4, 0.6).unwrap();
        let spec = GridSpec::sensor(346, 260);
        let err = solve(&w, &sp, &Loss::with_default_delta(LossKind::SoS), &SolverConfig::default(), &warp(), &spec)
            .unwrap_err();
        assert!(matches!(err, SolveError::Bounds(BoundsError::Warp(WarpError::IntervalTooWide { .. }))));
    }

    #[test]
    fn tiny_space_pins_the_answer() {
        let w = window(2, 500);
        let sp = SearchSpace::new(0.4996, 0.5004, 0.4996, 0.5004).unwrap();
        let spec = warp().padded_grid(&GridSpec::sensor(346, 260), &sp, 0.1).unwrap();
        let r = solve(&w, &sp, &Loss::with_default_delta(LossKind::SoS), &SolverConfig::default(), &warp(), &spec)
            .unwrap();
        assert!(matches!(r.terminated_by, Termination::Width | Termination::Converged));
        assert!((r.theta_hat.omega - 0.5).abs() <= 0.0004 && (r.theta_hat.v - 0.5).abs() <= 0.0004);
    }

    #[test]
    fn report_is_consistent_and_deterministic() {
        let w = window(3, 600);
        let sp = SearchSpace::new(0.4, 0.6, 0.4, 0.6).unwrap();
        let spec = warp().padded_grid(&GridSpec::sensor(346, 260), &sp, 0.1).unwrap();
        let cfg = SolverConfig { branching_limit: 400, ..Default::default() };
        for kind in LossKind::ALL {
            let loss = Loss::with_default_delta(kind);
            let a = solve(&w, &sp, &loss, &cfg, &warp(), &spec).unwrap();
            let b = solve(&w, &sp, &loss, &SolverConfig { threads: 3, ..cfg }, &warp(), &spec).unwrap();
            assert_eq!(SolveReport { wall_time: 0.0, ..a.clone() }, SolveReport { wall_time: 0.0, ..b });
            let at_hat = evaluate(&warp().build_iwe(&w, a.theta_hat, &spec), &loss, w.len() as u64);
            assert!((a.best_lower - at_hat).abs() <= 1e-9 * at_hat.abs(), "{kind}");
            assert!(a.branches_explored <= 4 * cfg.branching_limit);
            assert!(a.best_lower <= a.global_upper);
        }
    }

    #[test]
    fn never_worse_than_the_lattice() {
        let sp = SearchSpace::new(0.4, 0.6, 0.4, 0.6).unwrap();
        let spec = warp().padded_grid(&GridSpec::sensor(346, 260), &sp, 0.1).unwrap();
        let loss = Loss::with_default_delta(LossKind::SoS);
        for seed in 0..2 {
            let w = window(10 + seed, 800);
            let r = solve(&w, &sp, &loss, &SolverConfig::default(), &warp(), &spec).unwrap();
            let (_, g) = grid_search(&w, &sp, 0.005, 0.005, &loss, &warp(), &spec).unwrap();
            assert!(r.best_lower >= g - 1e-9, "{} < {g}", r.best_lower);
        }
    }
}
