//! Focus losses over an image of warped events, and the Gaussian-smoothed variant used by
//! local search.

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::event::{AccumulatorGrid, EventWindow, GridSpec};
use crate::warp::{AckermannWarp, MotionParams};

/// Default shift factor for the suppressed-accumulation losses.
pub const DEFAULT_DELTA: f64 = 1.0;

/// Above this many accumulators, sums switch from naive to pairwise accumulation.
const PAIRWISE_THRESHOLD: usize = 1 << 16;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("unknown loss `{0}` (expected sos|var|soe|sosa|soeas|sosaas)")]
    UnknownKind(String),
    #[error("shift factor must be positive and finite, got {0}")]
    BadDelta(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Sum of squares.
    SoS,
    /// Variance.
    Var,
    /// Sum of exponentials.
    SoE,
    /// Sum of suppressed accumulations.
    SoSA,
    /// SoE and squares.
    SoEaS,
    /// SoSA and squares.
    SoSAaS,
}

impl LossKind {
    pub const ALL: [LossKind; 6] = [
        LossKind::SoS,
        LossKind::Var,
        LossKind::SoE,
        LossKind::SoSA,
        LossKind::SoEaS,
        LossKind::SoSAaS,
    ];

    pub fn name(self) -> &'static str {
        match self {
            LossKind::SoS => "sos",
            LossKind::Var => "var",
            LossKind::SoE => "soe",
            LossKind::SoSA => "sosa",
            LossKind::SoEaS => "soeas",
            LossKind::SoSAaS => "sosaas",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = LossError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LossKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| LossError::UnknownKind(s.to_string()))
    }
}

/// A loss together with its shift factor `delta` (only read by the SoSA family).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Loss {
    pub kind: LossKind,
    pub delta: f64,
}

impl Loss {
    pub fn new(kind: LossKind, delta: f64) -> Result<Self, LossError> {
        if !(delta.is_finite() && delta > 0.0) {
            return Err(LossError::BadDelta(delta));
        }
        Ok(Self { kind, delta })
    }

    pub fn with_default_delta(kind: LossKind) -> Self {
        Self {
            kind,
            delta: DEFAULT_DELTA,
        }
    }

    /// Contribution of one accumulator holding `i` (possibly fractional) events.
    ///
    /// For `Var` this is `(i - μ)² / N_p`; the other losses ignore `mu` and `n_p`.
    #[inline]
    pub fn cell_term(&self, i: f64, mu: f64, n_p: f64) -> f64 {
        match self.kind {
            LossKind::SoS => i * i,
            LossKind::Var => {
                let d = i - mu;
                d * d / n_p
            }
            LossKind::SoE => i.exp(),
            LossKind::SoSA => (-i * self.delta).exp(),
            LossKind::SoEaS => i * i + i.exp(),
            LossKind::SoSAaS => i * i + (-i * self.delta).exp(),
        }
    }

    /// Loss of an empty image.
    pub fn empty_value(&self, n_p: usize) -> f64 {
        match self.kind {
            LossKind::SoS | LossKind::Var => 0.0,
            _ => n_p as f64,
        }
    }
}

impl fmt::Display for Loss {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (delta={})", self.kind, self.delta)
    }
}

fn pairwise_sum<T: Copy>(values: &[T], term: &impl Fn(T) -> f64) -> f64 {
    const BLOCK: usize = 512;
    if values.len() <= BLOCK {
        values.iter().map(|&v| term(v)).sum()
    } else {
        let (a, b) = values.split_at(values.len() / 2);
        pairwise_sum(a, term) + pairwise_sum(b, term)
    }
}

fn sum_terms<T: Copy>(values: &[T], term: impl Fn(T) -> f64) -> f64 {
    if values.len() > PAIRWISE_THRESHOLD {
        pairwise_sum(values, &term)
    } else {
        values.iter().map(|&v| term(v)).sum()
    }
}

/// Evaluates `loss` over every accumulator of the padded grid.
///
/// `n_events` fixes `μ_I = n_events / N_p` for the variance.
pub fn evaluate(grid: &AccumulatorGrid, loss: &Loss, n_events: u64) -> f64 {
    let n_p = grid.spec().num_accumulators();
    let counts = grid.counts();
    match loss.kind {
        // exact integer accumulation
        LossKind::SoS => counts.iter().map(|&c| (c as u64) * (c as u64)).sum::<u64>() as f64,
        _ => {
            let mu = n_events as f64 / n_p as f64;
            let n_p = n_p as f64;
            sum_terms(counts, |c| loss.cell_term(c as f64, mu, n_p))
        }
    }
}

/// Loss from the non-zero accumulator counts alone; every other cell is empty.
pub fn evaluate_sparse(nonzero: &[u32], n_p: usize, loss: &Loss, n_events: u64) -> f64 {
    let zeros = n_p - nonzero.len();
    let mu = n_events as f64 / n_p as f64;
    let n_pf = n_p as f64;
    match loss.kind {
        LossKind::SoS => nonzero.iter().map(|&c| (c as u64) * (c as u64)).sum::<u64>() as f64,
        _ => {
            zeros as f64 * loss.cell_term(0.0, mu, n_pf)
                + sum_terms(nonzero, |c| loss.cell_term(c as f64, mu, n_pf))
        }
    }
}

/// Real-valued image of warped events built by splatting each event as a truncated Gaussian.
#[derive(Debug, Clone)]
pub struct SmoothedIwe {
    spec: GridSpec,
    values: Vec<f64>,
    touched: Vec<usize>,
    mass: f64,
}

impl SmoothedIwe {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            values: vec![0.0; spec.num_accumulators()],
            touched: Vec::new(),
            mass: 0.0,
        }
    }

    pub fn clear(&mut self) {
        for &i in &self.touched {
            self.values[i] = 0.0;
        }
        self.touched.clear();
        self.mass = 0.0;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total splatted mass that landed on the grid.
    pub fn mass(&self) -> f64 {
        self.mass
    }

    /// Adds unit mass centred at `(x, y)` with standard deviation `sigma` px.
    ///
    /// Weights are `exp(-r²/2σ²) - exp(-4.5)` per axis, zero beyond 3σ, renormalised to 1,
    /// which keeps the image continuous in the event position.
    pub fn splat(&mut self, x: f64, y: f64, sigma: f64) {
        let wx = axis_weights(x, sigma);
        let wy = axis_weights(y, sigma);
        for &(py, wyv) in &wy.cells[..wy.len] {
            for &(px, wxv) in &wx.cells[..wx.len] {
                let acc = crate::event::Accumulator { x: px, y: py };
                if let Some(i) = self.spec.index_of(acc) {
                    let w = wxv * wyv;
                    if self.values[i] == 0.0 {
                        self.touched.push(i);
                    }
                    self.values[i] += w;
                    self.mass += w;
                }
            }
        }
    }

    /// Applies `loss` to the real-valued image; `n_events` fixes `μ_I`.
    pub fn evaluate(&self, loss: &Loss, n_events: u64) -> f64 {
        let n_p = self.spec.num_accumulators();
        let mu = n_events as f64 / n_p as f64;
        let n_pf = n_p as f64;
        let mut touched = self.touched.clone();
        touched.sort_unstable();
        touched.dedup();
        let zeros = n_p - touched.len();
        zeros as f64 * loss.cell_term(0.0, mu, n_pf)
            + sum_terms(&touched, |i| loss.cell_term(self.values[i], mu, n_pf))
    }
}

const MAX_AXIS_CELLS: usize = 64;

struct AxisWeights {
    cells: [(i64, f64); MAX_AXIS_CELLS],
    len: usize,
}

fn axis_weights(c: f64, sigma: f64) -> AxisWeights {
    let mut out = AxisWeights {
        cells: [(0, 0.0); MAX_AXIS_CELLS],
        len: 0,
    };
    let radius = 3.0 * sigma;
    let floor_w = (-4.5f64).exp();
    let lo = (c - radius).ceil() as i64;
    let hi = (c + radius).floor() as i64;
    let mut total = 0.0;
    let mut i = lo;
    while i <= hi && out.len < MAX_AXIS_CELLS {
        let d = (i as f64 - c) / sigma;
        let w = ((-0.5 * d * d).exp() - floor_w).max(0.0);
        if w > 0.0 {
            out.cells[out.len] = (i, w);
            out.len += 1;
            total += w;
        }
        i += 1;
    }
    if out.len == 0 {
        // support narrower than a pixel: fall back to the nearest accumulator
        out.cells[0] = (crate::event::round_half_up(c) as i64, 1.0);
        out.len = 1;
        return out;
    }
    for cell in &mut out.cells[..out.len] {
        cell.1 /= total;
    }
    out
}

/// Smoothed loss of `window` warped by `theta`: each event contributes a unit-mass Gaussian
/// of width `sigma` px instead of a single count. Continuous in `theta`.
pub fn evaluate_smoothed(
    window: &EventWindow,
    theta: MotionParams,
    loss: &Loss,
    sigma: f64,
    spec: &GridSpec,
    warp: &AckermannWarp,
) -> f64 {
    let mut img = SmoothedIwe::new(*spec);
    smoothed_into(&mut img, window, theta, sigma, warp);
    img.evaluate(loss, window.len() as u64)
}

/// Builds the smoothed image into a reusable buffer (cleared first).
pub fn smoothed_into(
    img: &mut SmoothedIwe,
    window: &EventWindow,
    theta: MotionParams,
    sigma: f64,
    warp: &AckermannWarp,
) {
    img.clear();
    for e in window.events() {
        let (x, y) = warp.warp(e.x, e.y, e.t - window.t_ref(), theta);
        img.splat(x, y, sigma);
    }
}
