//! Synthetic line-segment scenes and event generation, salt-and-pepper noise, the exhaustive
//! grid-search oracle, a smoothed gradient-ascent baseline and RMS evaluation.

use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::contrast::{evaluate_sparse, smoothed_into, Loss, SmoothedIwe};
use crate::event::{round_half_up, Event, EventError, EventWindow, GridSpec, Polarity};
use crate::warp::{camera_motion, AckermannWarp, MotionParams, SearchSpace};

/// Default plane depth (m).
pub const DEFAULT_DEPTH: f64 = 2.0;
/// Default scene extent (m).
pub const DEFAULT_EXTENT: f64 = 4.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("scene must contain at least one segment")]
    NoSegments,
    #[error("scene is not visible: gave up after {attempts} projection attempts")]
    SceneInvisible { attempts: usize },
    #[error("camera height {rig_d} does not match the scene depth {depth}")]
    DepthMismatch { rig_d: f64, depth: f64 },
    #[error("{0} estimates but {1} ground-truth values")]
    LengthMismatch(usize, usize),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Event(#[from] EventError),
}

/// Motion used to generate a window.
pub type GroundTruth = MotionParams;

/// Straight segment in 3-D (m), expressed in the frame of the camera at time zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Segment {
    pub a: Vector3<f64>,
    pub b: Vector3<f64>,
}

impl Segment {
    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    pub fn is_axis_aligned(&self) -> bool {
        self.a.x == self.b.x || self.a.y == self.b.y
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanarScene {
    pub segments: Vec<Segment>,
    pub depth: f64,
}

/// `n_segments` horizontal or vertical segments on the plane `z = depth`, endpoints uniform
/// in an `extent × extent` square centred on the optical axis.
pub fn generate_scene(
    n_segments: usize,
    extent: f64,
    depth: f64,
    seed: u64,
) -> Result<PlanarScene, SimError> {
    if n_segments == 0 {
        return Err(SimError::NoSegments);
    }
    if !(extent > 0.0 && depth > 0.0) {
        return Err(SimError::Invalid(format!("extent {extent}, depth {depth}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = 0.5 * extent;
    let segments = (0..n_segments)
        .map(|_| {
            let fixed = rng.gen_range(-half..half);
            let p = rng.gen_range(-half..half);
            let q = rng.gen_range(-half..half);
            if rng.gen_bool(0.5) {
                Segment {
                    a: Vector3::new(p, fixed, depth),
                    b: Vector3::new(q, fixed, depth),
                }
            } else {
                Segment {
                    a: Vector3::new(fixed, p, depth),
                    b: Vector3::new(fixed, q, depth),
                }
            }
        })
        .collect();
    Ok(PlanarScene { segments, depth })
}

/// Rigid transform `X_outer = r · X_inner + t`.
#[derive(Debug, Clone, Copy)]
struct Rigid {
    r: Matrix3<f64>,
    t: Vector3<f64>,
}

impl Rigid {
    fn identity() -> Self {
        Self {
            r: Matrix3::identity(),
            t: Vector3::zeros(),
        }
    }

    fn compose(&self, inner: &Rigid) -> Rigid {
        Rigid {
            r: self.r * inner.r,
            t: self.r * inner.t + self.t,
        }
    }

    fn inverse_apply(&self, x: &Vector3<f64>) -> Vector3<f64> {
        self.r.transpose() * (x - self.t)
    }
}

/// Options for event generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventOptions {
    pub width: usize,
    pub height: usize,
    /// Keep sub-pixel event coordinates instead of rounding to the pixel grid.
    pub continuous_px: bool,
}

impl EventOptions {
    pub fn sensor(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            continuous_px: false,
        }
    }
}

struct SegmentSampler<'a> {
    scene: &'a PlanarScene,
    cumulative: Vec<f64>,
}

impl<'a> SegmentSampler<'a> {
    fn new(scene: &'a PlanarScene) -> Self {
        let mut acc = 0.0;
        let cumulative = scene
            .segments
            .iter()
            .map(|s| {
                acc += s.length();
                acc
            })
            .collect();
        Self { scene, cumulative }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> Vector3<f64> {
        let total = *self.cumulative.last().unwrap_or(&0.0);
        let idx = if total > 0.0 {
            let u = rng.gen_range(0.0..total);
            self.cumulative.partition_point(|&c| c <= u).min(self.cumulative.len() - 1)
        } else {
            rng.gen_range(0..self.scene.segments.len())
        };
        let s = &self.scene.segments[idx];
        let f: f64 = rng.gen_range(0.0..=1.0);
        s.a + (s.b - s.a) * f
    }
}

fn random_polarity(rng: &mut ChaCha8Rng) -> Polarity {
    if rng.gen_bool(0.5) {
        Polarity::Positive
    } else {
        Polarity::Negative
    }
}

/// Timestamp uniform in `[t0, t0 + dt]`, quantised to whole microseconds.
fn sample_time_us(rng: &mut ChaCha8Rng, t0: f64, dt: f64) -> f64 {
    let start = (t0 * 1e6).round() as i64;
    let span = (dt * 1e6).round() as i64;
    (start + rng.gen_range(0..=span)) as f64 / 1e6
}

fn check_depth(scene: &PlanarScene, warp: &AckermannWarp) -> Result<(), SimError> {
    if (scene.depth - warp.rig.d).abs() > 1e-12 {
        return Err(SimError::DepthMismatch {
            rig_d: warp.rig.d,
            depth: scene.depth,
        });
    }
    if scene.segments.is_empty() {
        return Err(SimError::NoSegments);
    }
    Ok(())
}

/// Generates one window per entry of `truths`, each `dt` long and holding `n_events` events.
///
/// Window `k` starts at `k·dt`; the camera pose at its start chains the motions of all
/// earlier windows. Each event projects a random scene point (uniform by segment length)
/// into the camera at a random time of its window.
pub fn generate_sequence(
    scene: &PlanarScene,
    truths: &[GroundTruth],
    n_events: usize,
    dt: f64,
    warp: &AckermannWarp,
    opts: EventOptions,
    seed: u64,
) -> Result<Vec<EventWindow>, SimError> {
    check_depth(scene, warp)?;
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(SimError::Invalid(format!("window duration {dt}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sampler = SegmentSampler::new(scene);
    let k = &warp.intrinsics;
    let (w, h) = (opts.width as f64, opts.height as f64);
    let max_attempts = 100 * n_events.max(1);

    let mut world_from_ref = Rigid::identity();
    let mut windows = Vec::with_capacity(truths.len());
    for (wi, truth) in truths.iter().enumerate() {
        let t_ref = wi as f64 * dt;
        let mut events = Vec::with_capacity(n_events);
        let mut attempts = 0;
        while events.len() < n_events {
            attempts += 1;
            if attempts > max_attempts {
                return Err(SimError::SceneInvisible { attempts });
            }
            let p_world = sampler.sample(&mut rng);
            let t = sample_time_us(&mut rng, t_ref, dt);
            let (r_c, t_c) = camera_motion(*truth, t - t_ref, &warp.rig);
            let cam = world_from_ref.compose(&Rigid { r: r_c, t: t_c });
            let p = cam.inverse_apply(&p_world);
            if p.z <= 0.0 {
                continue;
            }
            let mut x = k.f * p.x / p.z + k.u0;
            let mut y = k.f * p.y / p.z + k.v0;
            if !opts.continuous_px {
                x = round_half_up(x);
                y = round_half_up(y);
            }
            if x < -0.5 || y < -0.5 || x >= w - 0.5 || y >= h - 0.5 {
                continue;
            }
            events.push(Event::new(x, y, t, random_polarity(&mut rng)));
        }
        windows.push(EventWindow::from_unsorted(events, t_ref, dt)?);
        let (r_c, t_c) = camera_motion(*truth, dt, &warp.rig);
        world_from_ref = world_from_ref.compose(&Rigid { r: r_c, t: t_c });
    }
    Ok(windows)
}

/// A single window starting at time zero.
pub fn generate_events(
    scene: &PlanarScene,
    truth: GroundTruth,
    n_events: usize,
    dt: f64,
    warp: &AckermannWarp,
    opts: EventOptions,
    seed: u64,
) -> Result<EventWindow, SimError> {
    let mut v = generate_sequence(scene, &[truth], n_events, dt, warp, opts, seed)?;
    Ok(v.remove(0))
}

/// Salt-and-pepper noise: `ne_ratio` noise events per signal event.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub ne_ratio: f64,
    pub seed: u64,
}

/// Appends `round(ne_ratio · N)` events at uniform sensor pixels and uniform times.
pub fn add_noise(
    window: &EventWindow,
    noise: &NoiseSpec,
    sensor: &GridSpec,
) -> Result<EventWindow, SimError> {
    if !(noise.ne_ratio >= 0.0 && noise.ne_ratio.is_finite()) {
        return Err(SimError::Invalid(format!("noise ratio {}", noise.ne_ratio)));
    }
    let n_noise = (noise.ne_ratio * window.len() as f64).round() as usize;
    if n_noise == 0 {
        return Ok(window.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let mut events = window.events().to_vec();
    for _ in 0..n_noise {
        let x = rng.gen_range(0..sensor.width) as f64;
        let y = rng.gen_range(0..sensor.height) as f64;
        let t = sample_time_us(&mut rng, window.t_ref(), window.duration());
        events.push(Event::new(x, y, t, random_polarity(&mut rng)));
    }
    // stable: signal events keep their order among equal timestamps
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    Ok(EventWindow::new(events, window.t_ref(), window.duration())?)
}

/// One synthetic trial: scene, window and noise drawn from a single seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrialSetup {
    pub n_segments: usize,
    pub n_events: usize,
    pub extent: f64,
    pub dt: f64,
    pub truth: GroundTruth,
    pub opts: EventOptions,
}

impl TrialSetup {
    /// Single-window protocol at 0.5 rad/s, 0.5 m/s over 0.1 s.
    pub fn desk(width: usize, height: usize) -> Self {
        Self {
            n_segments: 20,
            n_events: 1000,
            extent: DEFAULT_EXTENT,
            dt: 0.1,
            truth: MotionParams::new(0.5, 0.5),
            opts: EventOptions::sensor(width, height),
        }
    }
}

const SCENE_RETRIES: u64 = 16;

fn scene_seed(seed: u64, attempt: u64) -> u64 {
    seed.wrapping_add(attempt.wrapping_mul(0x9E37_79B9_7F4A_7C15))
}

/// Scene and signal windows for `truths`; a scene that leaves the camera blind is redrawn
/// from a derived seed.
pub fn trial_sequence(
    setup: &TrialSetup,
    truths: &[GroundTruth],
    warp: &AckermannWarp,
    seed: u64,
) -> Result<(PlanarScene, Vec<EventWindow>), SimError> {
    let mut last = SimError::NoSegments;
    for attempt in 0..SCENE_RETRIES {
        let s = scene_seed(seed, attempt);
        let scene = generate_scene(setup.n_segments, setup.extent, warp.rig.d, s)?;
        match generate_sequence(&scene, truths, setup.n_events, setup.dt, warp, setup.opts, s ^ 0x5EED) {
            Ok(w) => return Ok((scene, w)),
            Err(e @ SimError::SceneInvisible { .. }) => last = e,
            Err(e) => return Err(e),
        }
    }
    Err(last)
}

/// One noisy window of the single-window protocol.
pub fn trial_window(
    setup: &TrialSetup,
    warp: &AckermannWarp,
    seed: u64,
    ne_ratio: f64,
) -> Result<EventWindow, SimError> {
    let (_, mut windows) = trial_sequence(setup, &[setup.truth], warp, seed)?;
    let w = windows.remove(0);
    let sensor = GridSpec::sensor(setup.opts.width, setup.opts.height);
    add_noise(&w, &NoiseSpec { ne_ratio, seed: seed ^ 0x0015E }, &sensor)
}

/// Piecewise-constant motions along a curve: `ω_k = mean + amp·sin(2πk/n)`, constant v.
pub fn curved_trajectory(n_windows: usize, omega_mean: f64, omega_amp: f64, v: f64) -> Vec<GroundTruth> {
    (0..n_windows)
        .map(|k| {
            let phase = std::f64::consts::TAU * k as f64 / n_windows as f64;
            MotionParams::new(omega_mean + omega_amp * phase.sin(), v)
        })
        .collect()
}

fn lattice(min: f64, max: f64, step: f64) -> Vec<f64> {
    let n = ((max - min) / step + 1e-9).floor() as usize + 1;
    (0..n).map(|i| min + i as f64 * step).collect()
}

/// Exhaustive maximisation of the loss over the inclusive lattice
/// `{ω_min + i·step_omega} × {v_min + j·step_v}` inside `space`.
///
/// Ties go to the smallest ω, then the smallest v.
pub fn grid_search(
    window: &EventWindow,
    space: &SearchSpace,
    step_omega: f64,
    step_v: f64,
    loss: &Loss,
    warp: &AckermannWarp,
    spec: &GridSpec,
) -> Result<(MotionParams, f64), SimError> {
    if !(step_omega > 0.0 && step_v > 0.0) {
        return Err(SimError::Invalid(format!(
            "lattice steps must be positive ({step_omega}, {step_v})"
        )));
    }
    let omegas = lattice(space.omega_min, space.omega_max, step_omega);
    let vs = lattice(space.v_min, space.v_max, step_v);
    let n_p = spec.num_accumulators();
    let n = window.len() as u64;
    let mut counts = vec![0u32; n_p];
    let mut touched: Vec<usize> = Vec::with_capacity(window.len());
    let mut nonzero: Vec<u32> = Vec::with_capacity(window.len());
    let mut terms = Vec::with_capacity(window.len());
    let mut best: Option<(MotionParams, f64)> = None;

    for &omega in &omegas {
        terms.clear();
        terms.extend(
            window
                .events()
                .iter()
                .map(|e| warp.linear_in_v(e.x, e.y, e.t - window.t_ref(), omega)),
        );
        for &v in &vs {
            for lin in &terms {
                let (x, y) = lin.at(v);
                let acc = crate::event::nearest_accumulator(x, y);
                if let Some(i) = spec.index_of(acc) {
                    if counts[i] == 0 {
                        touched.push(i);
                    }
                    counts[i] += 1;
                }
            }
            nonzero.clear();
            nonzero.extend(touched.iter().map(|&i| counts[i]));
            let value = evaluate_sparse(&nonzero, n_p, loss, n);
            for &i in &touched {
                counts[i] = 0;
            }
            touched.clear();
            if best.is_none_or(|(_, b)| value > b) {
                best = Some((MotionParams::new(omega, v), value));
            }
        }
    }
    best.ok_or_else(|| SimError::Invalid("empty lattice".into()))
}

/// Step schedule for [`gradient_ascent`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AscentConfig {
    /// Initial step length along the normalised gradient, in parameter units.
    pub initial_step: f64,
    pub min_step: f64,
    pub max_halvings: usize,
    pub max_iters: usize,
    /// Central-difference step.
    pub fd_step: f64,
}

impl Default for AscentConfig {
    fn default() -> Self {
        Self {
            initial_step: 0.05,
            min_step: 1e-6,
            max_halvings: 20,
            max_iters: 200,
            fd_step: 1e-5,
        }
    }
}

/// Local ascent of the Gaussian-smoothed loss from `theta_init`.
///
/// Central-difference gradients, a step along the normalised gradient with backtracking
/// (halve until the loss improves). Stops when no step of at least `min_step` improves the
/// loss, or after `max_iters` iterations.
#[allow(clippy::too_many_arguments)]
pub fn gradient_ascent(
    window: &EventWindow,
    theta_init: MotionParams,
    loss: &Loss,
    sigma: f64,
    cfg: &AscentConfig,
    warp: &AckermannWarp,
    spec: &GridSpec,
) -> Result<(MotionParams, f64), SimError> {
    if !(sigma > 0.0) {
        return Err(SimError::Invalid(format!("sigma {sigma}")));
    }
    let mut img = SmoothedIwe::new(*spec);
    let n = window.len() as u64;
    let mut objective = |theta: MotionParams| {
        smoothed_into(&mut img, window, theta, sigma, warp);
        img.evaluate(loss, n)
    };
    let mut theta = theta_init;
    let mut value = objective(theta);
    let mut step = cfg.initial_step;
    let h = cfg.fd_step;
    for _ in 0..cfg.max_iters {
        let gw = (objective(MotionParams::new(theta.omega + h, theta.v))
            - objective(MotionParams::new(theta.omega - h, theta.v)))
            / (2.0 * h);
        let gv = (objective(MotionParams::new(theta.omega, theta.v + h))
            - objective(MotionParams::new(theta.omega, theta.v - h)))
            / (2.0 * h);
        let norm = gw.hypot(gv);
        if !(norm > 0.0) {
            break;
        }
        let (dw, dv) = (gw / norm, gv / norm);
        let mut trial = step;
        let mut moved = false;
        for _ in 0..=cfg.max_halvings {
            if trial < cfg.min_step {
                break;
            }
            let cand = MotionParams::new(theta.omega + trial * dw, theta.v + trial * dv);
            let cv = objective(cand);
            if cv > value {
                theta = cand;
                value = cv;
                moved = true;
                break;
            }
            trial *= 0.5;
        }
        if !moved {
            break;
        }
        step = (2.0 * trial).min(cfg.initial_step);
    }
    Ok((theta, value))
}

/// Root-mean-square errors: ω in degrees per second, v in metres per second.
pub fn rms_eval(estimates: &[MotionParams], truths: &[GroundTruth]) -> Result<(f64, f64), SimError> {
    if estimates.len() != truths.len() {
        return Err(SimError::LengthMismatch(estimates.len(), truths.len()));
    }
    if estimates.is_empty() {
        return Ok((0.0, 0.0));
    }
    let n = estimates.len() as f64;
    let (mut sw, mut sv) = (0.0, 0.0);
    for (e, g) in estimates.iter().zip(truths) {
        sw += (e.omega - g.omega).powi(2);
        sv += (e.v - g.v).powi(2);
    }
    Ok(((sw / n).sqrt().to_degrees(), (sv / n).sqrt()))
}
