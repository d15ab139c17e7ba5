//! Python bindings. Motion parameters travel as `(omega, v)` tuples and search spaces as
//! `(omega_min, omega_max, v_min, v_max)`.

use std::path::PathBuf;

use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;

use contrast_bnb::bounds::rb;
use contrast_bnb::contrast::{evaluate, Loss, LossKind, DEFAULT_DELTA};
use contrast_bnb::event::{Event, EventWindow, GridSpec, Polarity};
use contrast_bnb::io::{read_events_file, window_from_file, write_events_file, EventHeader, RigConfig};
use contrast_bnb::sim::{gradient_ascent, grid_search, rms_eval, trial_window, AscentConfig, TrialSetup};
use contrast_bnb::solver::{solve as bnb_solve, SolverConfig, TerminationMode};
use contrast_bnb::warp::{AckermannWarp, MotionParams, SearchSpace};

type Theta = (f64, f64);
type Space = (f64, f64, f64, f64);

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn theta(t: Theta) -> MotionParams {
    MotionParams::new(t.0, t.1)
}

fn space(s: Space) -> PyResult<SearchSpace> {
    SearchSpace::new(s.0, s.1, s.2, s.3).map_err(err)
}

fn loss(name: &str, delta: f64) -> PyResult<Loss> {
    Loss::new(name.parse::<LossKind>().map_err(err)?, delta).map_err(err)
}

/// Camera intrinsics, rig geometry and sensor size.
#[pyclass(name = "Rig", from_py_object)]
#[derive(Clone)]
struct PyRig {
    cfg: RigConfig,
    warp: AckermannWarp,
}

impl PyRig {
    fn grid(&self, sp: &SearchSpace, dt: f64) -> PyResult<GridSpec> {
        self.warp.padded_grid(&self.cfg.sensor(), sp, dt).map_err(err)
    }
}

#[pymethods]
impl PyRig {
    #[new]
    #[pyo3(signature = (f=200.0, u0=173.0, v0=130.0, s=-0.45, d=2.0, width=346, height=260))]
    fn new(f: f64, u0: f64, v0: f64, s: f64, d: f64, width: usize, height: usize) -> PyResult<Self> {
        let cfg = RigConfig { f, u0, v0, s, d, width, height };
        let warp = cfg.warp().map_err(err)?;
        Ok(Self { cfg, warp })
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let cfg = RigConfig::load(&path).map_err(err)?;
        let warp = cfg.warp().map_err(err)?;
        Ok(Self { cfg, warp })
    }

    /// Pixel position of an event at `(x, y)`, `t` seconds after the reference, under `theta`.
    fn warp(&self, x: f64, y: f64, t: f64, theta: Theta) -> (f64, f64) {
        self.warp.warp(x, y, t, self::theta(theta))
    }

    /// `(x_min, x_max, y_min, y_max)` covering every warp of the event over `space`.
    fn bounding_box(&self, x: f64, y: f64, t: f64, space: Space) -> PyResult<(f64, f64, f64, f64)> {
        let b = self.warp.bounding_box(x, y, t, &self::space(space)?).map_err(err)?;
        Ok((b.x_min, b.x_max, b.y_min, b.y_max))
    }

    fn __repr__(&self) -> String {
        let c = &self.cfg;
        format!(
            "Rig(f={}, u0={}, v0={}, s={}, d={}, width={}, height={})",
            c.f, c.u0, c.v0, c.s, c.d, c.width, c.height
        )
    }
}

/// A time-sorted event window.
#[pyclass(name = "Window", from_py_object)]
#[derive(Clone)]
struct PyWindow {
    inner: EventWindow,
    gt: Option<MotionParams>,
}

#[pymethods]
impl PyWindow {
    /// `events` are `(t, x, y, polarity)` tuples in any order; polarity is 0 or 1.
    #[new]
    #[pyo3(signature = (events, t_ref, duration))]
    fn new(events: Vec<(f64, f64, f64, u8)>, t_ref: f64, duration: f64) -> PyResult<Self> {
        let events = events
            .into_iter()
            .map(|(t, x, y, p)| {
                let pol = Polarity::from_bit(p).ok_or_else(|| err(format!("polarity {p}")))?;
                Ok(Event::new(x, y, t, pol))
            })
            .collect::<PyResult<Vec<_>>>()?;
        let inner = EventWindow::from_unsorted(events, t_ref, duration).map_err(err)?;
        Ok(Self { inner, gt: None })
    }

    /// Reads an event file; `dt` is used when the file has no window header.
    #[staticmethod]
    #[pyo3(signature = (path, dt=None))]
    fn read(path: PathBuf, dt: Option<f64>) -> PyResult<Self> {
        let (events, header) = read_events_file(&path).map_err(|e| PyIOError::new_err(e.to_string()))?;
        let inner = window_from_file(events, &header, dt).map_err(err)?;
        Ok(Self { inner, gt: header.gt })
    }

    fn write(&self, path: PathBuf) -> PyResult<()> {
        let header = EventHeader {
            gt: self.gt,
            window: Some((self.inner.t_ref(), self.inner.duration())),
        };
        write_events_file(&path, self.inner.events(), &header).map_err(|e| PyIOError::new_err(e.to_string()))
    }

    fn events(&self) -> Vec<(f64, f64, f64, u8)> {
        self.inner.events().iter().map(|e| (e.t, e.x, e.y, e.polarity.bit())).collect()
    }

    #[getter]
    fn t_ref(&self) -> f64 {
        self.inner.t_ref()
    }

    #[getter]
    fn duration(&self) -> f64 {
        self.inner.duration()
    }

    /// Ground-truth motion recorded with the events, if any.
    #[getter]
    fn ground_truth(&self) -> Option<Theta> {
        self.gt.map(|g| (g.omega, g.v))
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }
}

/// One synthetic window of a random planar line scene seen under `truth`.
#[pyfunction]
#[pyo3(signature = (rig, truth=(0.5, 0.5), events=1000, segments=20, dt=0.1, ne_ratio=0.0, seed=0))]
fn simulate(
    rig: &PyRig,
    truth: Theta,
    events: usize,
    segments: usize,
    dt: f64,
    ne_ratio: f64,
    seed: u64,
) -> PyResult<PyWindow> {
    let setup = TrialSetup {
        n_segments: segments,
        n_events: events,
        dt,
        truth: theta(truth),
        ..TrialSetup::desk(rig.cfg.width, rig.cfg.height)
    };
    let inner = trial_window(&setup, &rig.warp, seed, ne_ratio).map_err(err)?;
    Ok(PyWindow { inner, gt: Some(theta(truth)) })
}

/// Loss of the image of warped events at `theta`.
#[pyfunction]
#[pyo3(signature = (window, rig, theta, loss="sos", delta=DEFAULT_DELTA, space=(0.4, 0.6, 0.4, 0.6)))]
fn contrast(window: &PyWindow, rig: &PyRig, theta: Theta, loss: &str, delta: f64, space: Space) -> PyResult<f64> {
    let l = self::loss(loss, delta)?;
    let spec = rig.grid(&self::space(space)?, window.inner.duration())?;
    let iwe = rig.warp.build_iwe(&window.inner, self::theta(theta), &spec);
    Ok(evaluate(&iwe, &l, window.inner.len() as u64))
}

/// `(lower, upper)` bounds of the loss over `space`.
#[pyfunction]
#[pyo3(signature = (window, rig, space, loss="sos", delta=DEFAULT_DELTA))]
fn bounds(window: &PyWindow, rig: &PyRig, space: Space, loss: &str, delta: f64) -> PyResult<(f64, f64)> {
    let sp = self::space(space)?;
    let spec = rig.grid(&sp, window.inner.duration())?;
    rb(&window.inner, &sp, &self::loss(loss, delta)?, &rig.warp, &spec).map_err(err)
}

/// Globally optimal motion over `space`. Returns a dict with the estimate, bounds and counters.
#[pyfunction]
#[pyo3(signature = (
    window, rig, space=(0.4, 0.6, 0.4, 0.6), loss="sos", delta=DEFAULT_DELTA,
    eps_omega=0.00078, eps_v=0.00078, max_branches=100_000, mode="either",
))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    window: &PyWindow,
    rig: &PyRig,
    space: Space,
    loss: &str,
    delta: f64,
    eps_omega: f64,
    eps_v: f64,
    max_branches: usize,
    mode: &str,
) -> PyResult<Bound<'py, pyo3::types::PyDict>> {
    let sp = self::space(space)?;
    let spec = rig.grid(&sp, window.inner.duration())?;
    let cfg = SolverConfig {
        branching_limit: max_branches,
        width_eps_omega: eps_omega,
        width_eps_v: eps_v,
        termination_mode: mode.parse::<TerminationMode>().map_err(err)?,
        ..SolverConfig::default()
    };
    let l = self::loss(loss, delta)?;
    let r = py
        .detach(|| bnb_solve(&window.inner, &sp, &l, &cfg, &rig.warp, &spec))
        .map_err(err)?;
    let d = pyo3::types::PyDict::new(py);
    d.set_item("theta", (r.theta_hat.omega, r.theta_hat.v))?;
    d.set_item("loss", r.best_lower)?;
    d.set_item("upper", r.global_upper)?;
    d.set_item("branches", r.branches_explored)?;
    d.set_item("pruned", r.branches_pruned)?;
    d.set_item("iterations", r.iterations)?;
    d.set_item("terminated_by", r.terminated_by.to_string())?;
    d.set_item("wall_s", r.wall_time)?;
    Ok(d)
}

/// Exhaustive lattice search; returns `((omega, v), loss)`.
#[pyfunction]
#[pyo3(signature = (window, rig, space=(0.4, 0.6, 0.4, 0.6), step=0.001, loss="sos", delta=DEFAULT_DELTA))]
fn grid(window: &PyWindow, rig: &PyRig, space: Space, step: f64, loss: &str, delta: f64) -> PyResult<(Theta, f64)> {
    let sp = self::space(space)?;
    let spec = rig.grid(&sp, window.inner.duration())?;
    let (t, v) = grid_search(&window.inner, &sp, step, step, &self::loss(loss, delta)?, &rig.warp, &spec).map_err(err)?;
    Ok(((t.omega, t.v), v))
}

/// Gradient ascent on the smoothed loss from `init`; returns `((omega, v), loss)`.
#[pyfunction]
#[pyo3(signature = (window, rig, init, space=(0.4, 0.6, 0.4, 0.6), sigma=1.0, loss="sos", delta=DEFAULT_DELTA))]
fn local(
    window: &PyWindow,
    rig: &PyRig,
    init: Theta,
    space: Space,
    sigma: f64,
    loss: &str,
    delta: f64,
) -> PyResult<(Theta, f64)> {
    let spec = rig.grid(&self::space(space)?, window.inner.duration())?;
    let (t, v) = gradient_ascent(
        &window.inner,
        theta(init),
        &self::loss(loss, delta)?,
        sigma,
        &AscentConfig::default(),
        &rig.warp,
        &spec,
    )
    .map_err(err)?;
    Ok(((t.omega, t.v), v))
}

/// RMS errors `(deg/s, m/s)` of estimates against truths.
#[pyfunction]
fn rms(estimates: Vec<Theta>, truths: Vec<Theta>) -> PyResult<(f64, f64)> {
    let e: Vec<_> = estimates.into_iter().map(theta).collect();
    let t: Vec<_> = truths.into_iter().map(theta).collect();
    rms_eval(&e, &t).map_err(err)
}

#[pymodule]
#[pyo3(name = "contrast_bnb")]
fn init_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRig>()?;
    m.add_class::<PyWindow>()?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    m.add_function(wrap_pyfunction!(contrast, m)?)?;
    m.add_function(wrap_pyfunction!(bounds, m)?)?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(grid, m)?)?;
    m.add_function(wrap_pyfunction!(local, m)?)?;
    m.add_function(wrap_pyfunction!(rms, m)?)?;
    Ok(())
}
