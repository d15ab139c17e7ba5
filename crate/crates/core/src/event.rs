//! Event-stream data model, window slicing and image-of-warped-events accumulation.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EventError {
    #[error("event {index} has a non-finite coordinate or timestamp")]
    NonFinite { index: usize },
    #[error("event {index} has a negative timestamp {t}")]
    NegativeTime { index: usize, t: f64 },
    #[error("events are not sorted by time (event {index} precedes its predecessor)")]
    Unsorted { index: usize },
    #[error("event {index} at t={t} lies outside the window [{start}, {end}]")]
    OutsideWindow {
        index: usize,
        t: f64,
        start: f64,
        end: f64,
    },
    #[error("window duration must be finite and non-negative, got {0}")]
    BadDuration(f64),
    #[error("accumulator grid has no cells")]
    EmptyGrid,
}

/// Sign of the brightness change. Carried through ingest and output, never used by estimation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Polarity {
    Negative,
    Positive,
}

impl Polarity {
    pub fn sign(self) -> i8 {
        match self {
            Polarity::Negative => -1,
            Polarity::Positive => 1,
        }
    }

    /// Maps the on-disk `{0, 1}` encoding.
    pub fn from_bit(bit: u8) -> Option<Self> {
        match bit {
            0 => Some(Polarity::Negative),
            1 => Some(Polarity::Positive),
            _ => None,
        }
    }

    pub fn bit(self) -> u8 {
        match self {
            Polarity::Negative => 0,
            Polarity::Positive => 1,
        }
    }
}

/// A single timestamped pixel observation. `t` is in seconds relative to stream start.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Event {
    pub x: f64,
    pub y: f64,
    pub t: f64,
    pub polarity: Polarity,
}

impl Event {
    pub fn new(x: f64, y: f64, t: f64, polarity: Polarity) -> Self {
        Self { x, y, t, polarity }
    }

    fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.t.is_finite()
    }
}

fn check_stream(events: &[Event]) -> Result<(), EventError> {
    let mut prev = f64::NEG_INFINITY;
    for (index, e) in events.iter().enumerate() {
        if !e.is_finite() {
            return Err(EventError::NonFinite { index });
        }
        if e.t < 0.0 {
            return Err(EventError::NegativeTime { index, t: e.t });
        }
        if e.t < prev {
            return Err(EventError::Unsorted { index });
        }
        prev = e.t;
    }
    Ok(())
}

/// Events of one time interval `[t_ref, t_ref + duration]`, sorted by timestamp.
#[derive(Debug, Clone, PartialEq)]
pub struct EventWindow {
    events: Vec<Event>,
    t_ref: f64,
    duration: f64,
}

impl EventWindow {
    pub fn new(events: Vec<Event>, t_ref: f64, duration: f64) -> Result<Self, EventError> {
        if !duration.is_finite() || duration < 0.0 {
            return Err(EventError::BadDuration(duration));
        }
        check_stream(&events)?;
        let end = t_ref + duration;
        if let Some((index, e)) = events
            .iter()
            .enumerate()
            .find(|(_, e)| e.t < t_ref || e.t > end)
        {
            return Err(EventError::OutsideWindow {
                index,
                t: e.t,
                start: t_ref,
                end,
            });
        }
        Ok(Self {
            events,
            t_ref,
            duration,
        })
    }

    /// Sorts the events by time before validating.
    pub fn from_unsorted(
        mut events: Vec<Event>,
        t_ref: f64,
        duration: f64,
    ) -> Result<Self, EventError> {
        events.sort_by(|a, b| a.t.total_cmp(&b.t));
        Self::new(events, t_ref, duration)
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    pub fn t_ref(&self) -> f64 {
        self.t_ref
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }
}

/// Splits a sorted stream into consecutive half-open windows `[k·dt, (k+1)·dt)`.
///
/// Windows are produced from `k = 0` up to the window holding the last event; gaps in the
/// stream yield empty windows so that window indices stay aligned with time.
pub fn slice_windows(stream: &[Event], dt: f64) -> Result<Vec<EventWindow>, EventError> {
    if !(dt.is_finite() && dt > 0.0) {
        return Err(EventError::BadDuration(dt));
    }
    check_stream(stream)?;
    let Some(last) = stream.last() else {
        return Ok(Vec::new());
    };
    let window_of = |t: f64| -> usize {
        let mut k = (t / dt).floor() as usize;
        // floor(t/dt) can land one off either way in floating point
        if (k as f64 + 1.0) * dt <= t {
            k += 1;
        } else if k > 0 && (k as f64) * dt > t {
            k -= 1;
        }
        k
    };
    let n_windows = window_of(last.t) + 1;
    let mut buckets: Vec<Vec<Event>> = vec![Vec::new(); n_windows];
    for e in stream {
        buckets[window_of(e.t)].push(*e);
    }
    Ok(buckets
        .into_iter()
        .enumerate()
        .map(|(k, events)| EventWindow {
            events,
            t_ref: k as f64 * dt,
            duration: dt,
        })
        .collect())
}

/// Sensor dimensions plus the margin of extra accumulators on each side.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    pub pad_top: usize,
    pub pad_bottom: usize,
}

impl GridSpec {
    /// Unpadded sensor grid.
    pub fn sensor(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            pad_left: 0,
            pad_right: 0,
            pad_top: 0,
            pad_bottom: 0,
        }
    }

    pub fn with_padding(self, left: usize, right: usize, top: usize, bottom: usize) -> Self {
        Self {
            pad_left: left,
            pad_right: right,
            pad_top: top,
            pad_bottom: bottom,
            ..self
        }
    }

    pub fn padded_width(&self) -> usize {
        self.width + self.pad_left + self.pad_right
    }

    pub fn padded_height(&self) -> usize {
        self.height + self.pad_top + self.pad_bottom
    }

    /// Total accumulator count `N_p`.
    pub fn num_accumulators(&self) -> usize {
        self.padded_width() * self.padded_height()
    }

    /// Inclusive pixel-coordinate range `(x_min, x_max, y_min, y_max)` covered by the grid.
    pub fn pixel_extent(&self) -> (i64, i64, i64, i64) {
        (
            -(self.pad_left as i64),
            (self.width + self.pad_right) as i64 - 1,
            -(self.pad_top as i64),
            (self.height + self.pad_bottom) as i64 - 1,
        )
    }

    /// Storage index of an accumulator, or `None` when it lies off the padded grid.
    pub fn index_of(&self, acc: Accumulator) -> Option<usize> {
        let col = acc.x + self.pad_left as i64;
        let row = acc.y + self.pad_top as i64;
        if col < 0 || row < 0 {
            return None;
        }
        let (col, row) = (col as usize, row as usize);
        if col >= self.padded_width() || row >= self.padded_height() {
            return None;
        }
        Some(row * self.padded_width() + col)
    }

    pub fn accumulator_at(&self, index: usize) -> Accumulator {
        let pw = self.padded_width();
        Accumulator {
            x: (index % pw) as i64 - self.pad_left as i64,
            y: (index / pw) as i64 - self.pad_top as i64,
        }
    }
}

/// Integer accumulator location in sensor pixel coordinates (may be negative inside padding).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Accumulator {
    pub x: i64,
    pub y: i64,
}

/// Nearest-integer rounding with ties toward +∞.
#[inline]
pub fn round_half_up(v: f64) -> f64 {
    (v + 0.5).floor()
}

/// The accumulator a continuous position falls into, ignoring grid bounds.
#[inline]
pub fn nearest_accumulator(x: f64, y: f64) -> Accumulator {
    Accumulator {
        x: round_half_up(x) as i64,
        y: round_half_up(y) as i64,
    }
}

/// Nearest accumulator to `(x, y)`, or `None` when it falls outside the padded grid.
pub fn round_to_accumulator(x: f64, y: f64, spec: &GridSpec) -> Option<Accumulator> {
    if !(x.is_finite() && y.is_finite()) {
        return None;
    }
    let acc = nearest_accumulator(x, y);
    spec.index_of(acc).map(|_| acc)
}

/// Integer accumulator image over a padded grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AccumulatorGrid {
    spec: GridSpec,
    counts: Vec<u32>,
    total: u64,
}

impl AccumulatorGrid {
    pub fn new(spec: GridSpec) -> Self {
        Self {
            spec,
            counts: vec![0; spec.num_accumulators()],
            total: 0,
        }
    }

    /// Builds a grid directly from row-major counts over the padded grid.
    pub fn from_counts(spec: GridSpec, counts: Vec<u32>) -> Result<Self, EventError> {
        if spec.num_accumulators() == 0 || counts.len() != spec.num_accumulators() {
            return Err(EventError::EmptyGrid);
        }
        let total = counts.iter().map(|&c| c as u64).sum();
        Ok(Self {
            spec,
            counts,
            total,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Row-major counts over the padded grid.
    pub fn counts(&self) -> &[u32] {
        &self.counts
    }

    pub fn get(&self, acc: Accumulator) -> Option<u32> {
        self.spec.index_of(acc).map(|i| self.counts[i])
    }

    pub fn count_at_index(&self, index: usize) -> u32 {
        self.counts[index]
    }

    /// Adds one event at `acc`. Returns the count before the increment, or `None` if off-grid.
    pub fn increment(&mut self, acc: Accumulator) -> Option<u32> {
        let i = self.spec.index_of(acc)?;
        Some(self.increment_index(i))
    }

    pub fn increment_index(&mut self, index: usize) -> u32 {
        let before = self.counts[index];
        self.counts[index] = before + 1;
        self.total += 1;
        before
    }

    /// Number of accumulated events.
    pub fn total(&self) -> u64 {
        self.total
    }

    pub fn max_count(&self) -> u32 {
        self.counts.iter().copied().max().unwrap_or(0)
    }

    pub fn clear(&mut self) {
        self.counts.iter_mut().for_each(|c| *c = 0);
        self.total = 0;
    }
}

/// Accumulates every event of `window` at the accumulator nearest to its warped position.
///
/// `warp` receives the event and `t = t_event - t_ref`; events rounding off the padded grid
/// are dropped.
pub fn build_iwe<F>(window: &EventWindow, spec: &GridSpec, mut warp: F) -> AccumulatorGrid
where
    F: FnMut(&Event, f64) -> (f64, f64),
{
    let mut grid = AccumulatorGrid::new(*spec);
    for e in window.events() {
        let (x, y) = warp(e, e.t - window.t_ref());
        if let Some(acc) = round_to_accumulator(x, y, spec) {
            grid.increment(acc);
        }
    }
    grid
}

/// Mean accumulator value `N / N_p`.
pub fn mean_intensity(n_events: u64, spec: &GridSpec) -> f64 {
    n_events as f64 / spec.num_accumulators() as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(x: f64, y: f64, t: f64) -> Event {
        Event::new(x, y, t, Polarity::Positive)
    }

    #[test]
    fn rounding_examples() {
        let spec = GridSpec::sensor(346, 260);
        assert_eq!(
            round_to_accumulator(10.4, 20.6, &spec),
            Some(Accumulator { x: 10, y: 21 })
        );
        assert_eq!(
            round_to_accumulator(10.5, 20.5, &spec),
            Some(Accumulator { x: 11, y: 21 })
        );
        assert_eq!(round_to_accumulator(-3.0, 5.0, &spec), None);
        assert_eq!(round_to_accumulator(f64::NAN, 5.0, &spec), None);
        // negative ties also go up
        assert_eq!(round_half_up(-2.5), -2.0);
    }

    #[test]
    fn padding_extends_the_grid() {
        let spec = GridSpec::sensor(10, 10).with_padding(3, 1, 2, 0);
        assert_eq!(spec.num_accumulators(), 14 * 12);
        assert_eq!(
            round_to_accumulator(-3.0, -2.0, &spec),
            Some(Accumulator { x: -3, y: -2 })
        );
        assert_eq!(round_to_accumulator(-3.6, 0.0, &spec), None);
        assert_eq!(round_to_accumulator(10.4, 9.0, &spec), Some(Accumulator { x: 10, y: 9 }));
        assert_eq!(round_to_accumulator(11.0, 9.0, &spec), None);
        for i in [0, 5, 14 * 12 - 1] {
            let acc = spec.accumulator_at(i);
            assert_eq!(spec.index_of(acc), Some(i));
        }
    }

    #[test]
    fn empty_window_gives_zero_grid() {
        let spec = GridSpec::sensor(8, 6);
        let w = EventWindow::new(vec![], 0.0, 0.1).unwrap();
        let g = build_iwe(&w, &spec, |e, _| (e.x, e.y));
        assert_eq!(g.total(), 0);
        assert!(g.counts().iter().all(|&c| c == 0));
    }

    #[test]
    fn single_event_identity() {
        let spec = GridSpec::sensor(346, 260);
        let w = EventWindow::new(vec![ev(100.0, 50.0, 0.0)], 0.0, 0.1).unwrap();
        let g = build_iwe(&w, &spec, |e, _| (e.x, e.y));
        assert_eq!(g.total(), 1);
        assert_eq!(g.get(Accumulator { x: 100, y: 50 }), Some(1));
        assert_eq!(g.max_count(), 1);
    }

    #[test]
    fn off_grid_events_are_dropped() {
        let spec = GridSpec::sensor(4, 4);
        let w = EventWindow::new(vec![ev(1.0, 1.0, 0.0), ev(9.0, 1.0, 0.01)], 0.0, 0.1).unwrap();
        let g = build_iwe(&w, &spec, |e, _| (e.x, e.y));
        assert_eq!(g.total(), 1);
    }

    #[test]
    fn window_validation() {
        assert!(matches!(
            EventWindow::new(vec![ev(0.0, 0.0, 0.2), ev(0.0, 0.0, 0.1)], 0.0, 1.0),
            Err(EventError::Unsorted { index: 1 })
        ));
        assert!(matches!(
            EventWindow::new(vec![ev(0.0, 0.0, 0.2)], 0.0, 0.1),
            Err(EventError::OutsideWindow { index: 0, .. })
        ));
        assert!(matches!(
            EventWindow::new(vec![ev(f64::INFINITY, 0.0, 0.0)], 0.0, 0.1),
            Err(EventError::NonFinite { index: 0 })
        ));
        let w =
            EventWindow::from_unsorted(vec![ev(0.0, 0.0, 0.05), ev(1.0, 0.0, 0.01)], 0.0, 0.1)
                .unwrap();
        assert_eq!(w.events()[0].t, 0.01);
    }

    #[test]
    fn slicing_examples() {
        let ws = slice_windows(&[ev(0.0, 0.0, 0.01), ev(0.0, 0.0, 0.05)], 0.04).unwrap();
        assert_eq!(ws.len(), 2);
        assert!(ws.iter().all(|w| w.len() == 1));
        assert_eq!(ws[1].t_ref(), 0.04);

        let ws = slice_windows(&[ev(0.0, 0.0, 0.0), ev(0.0, 0.0, 0.039)], 0.04).unwrap();
        assert_eq!(ws.len(), 1);
        assert_eq!(ws[0].len(), 2);

        let stream: Vec<Event> = (0..10_000)
            .map(|i| ev(0.0, 0.0, i as f64 * 0.4 / 10_000.0))
            .collect();
        let ws = slice_windows(&stream, 0.04).unwrap();
        assert_eq!(ws.len(), 10);
        assert!(ws.iter().all(|w| w.len() == 1000));
        for (k, w) in ws.iter().enumerate() {
            assert!((w.t_ref() - k as f64 * 0.04).abs() < 1e-15);
        }

        assert!(slice_windows(&[], 0.04).unwrap().is_empty());
        assert!(slice_windows(&[ev(0.0, 0.0, 0.0)], 0.0).is_err());
    }

    #[test]
    fn slicing_keeps_gaps() {
        let ws = slice_windows(&[ev(0.0, 0.0, 0.0), ev(0.0, 0.0, 0.13)], 0.04).unwrap();
        assert_eq!(ws.iter().map(|w| w.len()).collect::<Vec<_>>(), vec![1, 0, 0, 1]);
    }

    #[test]
    fn mean_intensity_examples() {
        let spec = GridSpec::sensor(346, 260);
        assert_eq!(mean_intensity(0, &spec), 0.0);
        assert_eq!(mean_intensity(89_960, &spec), 1.0);
        assert!((mean_intensity(1000, &spec) - 1000.0 / 89_960.0).abs() < 1e-18);
        assert!((mean_intensity(1000, &spec) - 0.011116).abs() < 1e-6);
    }

    #[test]
    fn polarity_bits() {
        assert_eq!(Polarity::from_bit(0), Some(Polarity::Negative));
        assert_eq!(Polarity::from_bit(1).map(Polarity::sign), Some(1));
        assert_eq!(Polarity::from_bit(2), None);
    }
}
