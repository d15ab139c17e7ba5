//! Recursive lower and upper bounds of a focus loss over one branch of the search space.
//!
//! Events are consumed in temporal order. The lower bound is the loss of the image warped at
//! the branch centre, built one event at a time; the upper bound tracks a second image in
//! which every event lands on the currently fullest accumulator inside its bounding box.

use thiserror::Error;

use crate::contrast::{Loss, LossKind};
use crate::event::{round_half_up, AccumulatorGrid, Event, EventWindow, GridSpec};
use crate::warp::{AckermannWarp, MotionParams, PixelBox, SearchSpace, WarpError};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoundsError {
    #[error(transparent)]
    Warp(#[from] WarpError),
    #[error("event {index} warps off the padded grid; padding does not cover the search space")]
    OffGrid { index: usize },
}

/// Per-event change of `(lower, upper)` given the centre-image count `i_eta` at the event's
/// accumulator and the largest upper-image count `q` inside its bounding box.
pub fn bound_increments(loss: &Loss, q: u32, i_eta: u32, mu: f64, n_p: usize) -> (f64, f64) {
    let n_p = n_p as f64;
    let sos = |i: u32| 1.0 + 2.0 * i as f64;
    let var = |i: u32| (1.0 - 2.0 * mu + 2.0 * i as f64) / n_p;
    let soe = |i: u32| (std::f64::consts::E - 1.0) * (i as f64).exp();
    let sosa = |i: u32| ((-loss.delta).exp() - 1.0) * (-loss.delta * i as f64).exp();
    let inc = |i: u32| match loss.kind {
        LossKind::SoS => sos(i),
        LossKind::Var => var(i),
        LossKind::SoE => soe(i),
        LossKind::SoSA => sosa(i),
        LossKind::SoEaS => sos(i) + soe(i),
        LossKind::SoSAaS => sos(i) + sosa(i),
    };
    (inc(i_eta), inc(q))
}

/// Bookkeeping of the recursive bounds for one branch.
#[derive(Debug, Clone)]
pub struct BoundState {
    loss: Loss,
    center: MotionParams,
    center_iwe: AccumulatorGrid,
    upper_iwe: AccumulatorGrid,
    /// μ_I, fixed from the window's total event count.
    mu: f64,
    /// Σ (1 + 2·i) over processed events, kept exact for the squared terms.
    sq_lower: u64,
    sq_upper: u64,
    /// Running sums of the exponential increments.
    exp_lower: f64,
    exp_upper: f64,
    n_processed: u64,
}

impl BoundState {
    /// Fresh state for a window of `n_events` events and a branch centred at `center`.
    pub fn new(loss: Loss, spec: GridSpec, n_events: u64, center: MotionParams) -> Self {
        Self {
            loss,
            center,
            center_iwe: AccumulatorGrid::new(spec),
            upper_iwe: AccumulatorGrid::new(spec),
            mu: n_events as f64 / spec.num_accumulators() as f64,
            sq_lower: 0,
            sq_upper: 0,
            exp_lower: 0.0,
            exp_upper: 0.0,
            n_processed: 0,
        }
    }

    fn n_p(&self) -> usize {
        self.center_iwe.spec().num_accumulators()
    }

    fn combine(&self, sq: u64, exp_sum: f64) -> f64 {
        let n_p = self.n_p() as f64;
        let l0 = self.loss.empty_value(self.n_p());
        match self.loss.kind {
            LossKind::SoS => sq as f64,
            LossKind::Var => {
                let n = self.n_processed as f64;
                self.mu * self.mu + (sq as f64 - 2.0 * self.mu * n) / n_p
            }
            LossKind::SoE | LossKind::SoSA => l0 + exp_sum,
            LossKind::SoEaS | LossKind::SoSAaS => (l0 + sq as f64) + exp_sum,
        }
    }

    /// Loss of the centre image so far.
    pub fn lower(&self) -> f64 {
        self.combine(self.sq_lower, self.exp_lower)
    }

    /// Upper bound on the loss of any parameter in the branch, so far.
    pub fn upper(&self) -> f64 {
        self.combine(self.sq_upper, self.exp_upper)
    }

    pub fn n_processed(&self) -> u64 {
        self.n_processed
    }

    pub fn center_iwe(&self) -> &AccumulatorGrid {
        &self.center_iwe
    }

    pub fn upper_iwe(&self) -> &AccumulatorGrid {
        &self.upper_iwe
    }

    /// Consumes one event observed `t` seconds after the reference time.
    ///
    /// `index` only labels errors.
    pub fn push(
        &mut self,
        event: &Event,
        t: f64,
        space: &SearchSpace,
        warp: &AckermannWarp,
        index: usize,
    ) -> Result<(), BoundsError> {
        let bbox = warp.bounding_box(event.x, event.y, t, space)?;
        let (q, nu) = self
            .box_argmax(&bbox)
            .ok_or(BoundsError::OffGrid { index })?;

        let (xc, yc) = warp.warp(event.x, event.y, t, self.center);
        let eta = self
            .center_iwe
            .spec()
            .index_of(crate::event::nearest_accumulator(xc, yc))
            .ok_or(BoundsError::OffGrid { index })?;
        let i_eta = self.center_iwe.count_at_index(eta);

        match self.loss.kind {
            LossKind::SoS | LossKind::Var => {}
            _ => {
                let (dl, du) = bound_increments(&self.loss, q, i_eta, self.mu, self.n_p());
                match self.loss.kind {
                    LossKind::SoEaS | LossKind::SoSAaS => {
                        // squared part is tracked exactly below
                        let (sl, su) = (1.0 + 2.0 * i_eta as f64, 1.0 + 2.0 * q as f64);
                        self.exp_lower += dl - sl;
                        self.exp_upper += du - su;
                    }
                    _ => {
                        self.exp_lower += dl;
                        self.exp_upper += du;
                    }
                }
            }
        }
        self.sq_lower += 1 + 2 * i_eta as u64;
        self.sq_upper += 1 + 2 * q as u64;

        self.upper_iwe.increment_index(nu);
        self.center_iwe.increment_index(eta);
        self.n_processed += 1;
        Ok(())
    }

    /// Largest upper-image count among the accumulators the box can round to, and the cell
    /// holding it (lowest row, then lowest column). An all-zero box yields its centre cell.
    fn box_argmax(&self, bbox: &PixelBox) -> Option<(u32, usize)> {
        let spec = self.upper_iwe.spec();
        let (gx0, gx1, gy0, gy1) = spec.pixel_extent();
        let x0 = (round_half_up(bbox.x_min) as i64).max(gx0);
        let x1 = (round_half_up(bbox.x_max) as i64).min(gx1);
        let y0 = (round_half_up(bbox.y_min) as i64).max(gy0);
        let y1 = (round_half_up(bbox.y_max) as i64).min(gy1);
        if x0 > x1 || y0 > y1 {
            return None;
        }
        let pw = spec.padded_width() as i64;
        let col0 = x0 + spec.pad_left as i64;
        let counts = self.upper_iwe.counts();
        let mut best: Option<(u32, usize)> = None;
        for y in y0..=y1 {
            let row_start = ((y + spec.pad_top as i64) * pw + col0) as usize;
            let row = &counts[row_start..row_start + (x1 - x0 + 1) as usize];
            for (dx, &c) in row.iter().enumerate() {
                if best.is_none_or(|(b, _)| c > b) {
                    best = Some((c, row_start + dx));
                }
            }
        }
        let (q, idx) = best?;
        if q > 0 {
            return Some((q, idx));
        }
        let (mx, my) = bbox.midpoint();
        let cx = (round_half_up(mx) as i64).clamp(x0, x1);
        let cy = (round_half_up(my) as i64).clamp(y0, y1);
        let centre = ((cy + spec.pad_top as i64) * pw + cx + spec.pad_left as i64) as usize;
        Some((0, centre))
    }
}

/// Runs the recursive bound computation over every event of `window` for `space`.
pub fn recursive_bounds(
    window: &EventWindow,
    space: &SearchSpace,
    loss: &Loss,
    warp: &AckermannWarp,
    spec: &GridSpec,
) -> Result<BoundState, BoundsError> {
    crate::warp::check_interval(space, window.duration())?;
    let mut state = BoundState::new(*loss, *spec, window.len() as u64, space.center());
    for (index, e) in window.events().iter().enumerate() {
        state.push(e, e.t - window.t_ref(), space, warp, index)?;
    }
    Ok(state)
}

/// `(lower, upper)` for `space`.
pub fn rb(
    window: &EventWindow,
    space: &SearchSpace,
    loss: &Loss,
    warp: &AckermannWarp,
    spec: &GridSpec,
) -> Result<(f64, f64), BoundsError> {
    let s = recursive_bounds(window, space, loss, warp, spec)?;
    Ok((s.lower(), s.upper()))
}
