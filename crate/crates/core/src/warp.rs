//! Planar Ackermann motion of a downward-facing camera: pose chaining, the ground-plane
//! homography, the closed-form event warp and interval bounding boxes over `(ω, v)`.
//!
//! Conventions: the vehicle drives along its `+y` axis and rotates about `z`; the camera
//! looks down the `+z` axis at a plane `d` metres away, offset `s` metres along `y` from the
//! vehicle origin. `t` is always `t_event - t_ref`.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector2, Vector3};
use thiserror::Error;

use crate::event::{build_iwe, AccumulatorGrid, EventWindow, GridSpec};

/// Below this |ω| the `v/ω` terms switch to their analytic limits.
pub const OMEGA_EPS: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum WarpError {
    #[error("interval too wide: |omega|max * t = {product} must stay below pi/2")]
    IntervalTooWide { product: f64 },
    #[error("invalid search space: {0}")]
    InvalidSpace(String),
    #[error("invalid camera geometry: {0}")]
    InvalidGeometry(String),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub f: f64,
    pub u0: f64,
    pub v0: f64,
}

impl CameraIntrinsics {
    pub fn new(f: f64, u0: f64, v0: f64) -> Result<Self, WarpError> {
        if !(f.is_finite() && f > 0.0 && u0.is_finite() && v0.is_finite()) {
            return Err(WarpError::InvalidGeometry(format!(
                "focal length must be positive and finite (f={f}, u0={u0}, v0={v0})"
            )));
        }
        Ok(Self { f, u0, v0 })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.f, 0.0, self.u0, 0.0, self.f, self.v0, 0.0, 0.0, 1.0)
    }

    pub fn inverse_matrix(&self) -> Matrix3<f64> {
        let fi = 1.0 / self.f;
        Matrix3::new(fi, 0.0, -self.u0 * fi, 0.0, fi, -self.v0 * fi, 0.0, 0.0, 1.0)
    }
}

/// Camera mounting: signed forward offset `s` (m) and height above the plane `d` (m).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RigGeometry {
    pub s: f64,
    pub d: f64,
}

impl RigGeometry {
    pub fn new(s: f64, d: f64) -> Result<Self, WarpError> {
        if !(s.is_finite() && d.is_finite() && d > 0.0) {
            return Err(WarpError::InvalidGeometry(format!(
                "camera height must be positive and finite (s={s}, d={d})"
            )));
        }
        Ok(Self { s, d })
    }

    /// Ground-plane normal in the camera frame.
    pub fn plane_normal() -> Vector3<f64> {
        Vector3::new(0.0, 0.0, -1.0)
    }
}

/// Angular velocity `omega` (rad/s) and translational velocity `v` (m/s).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct MotionParams {
    pub omega: f64,
    pub v: f64,
}

impl MotionParams {
    pub fn new(omega: f64, v: f64) -> Self {
        Self { omega, v }
    }
}

/// Axis-aligned box in `(ω, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchSpace {
    pub omega_min: f64,
    pub omega_max: f64,
    pub v_min: f64,
    pub v_max: f64,
}

impl SearchSpace {
    pub fn new(omega_min: f64, omega_max: f64, v_min: f64, v_max: f64) -> Result<Self, WarpError> {
        let all_finite = [omega_min, omega_max, v_min, v_max]
            .iter()
            .all(|v| v.is_finite());
        if !all_finite || omega_min > omega_max || v_min > v_max {
            return Err(WarpError::InvalidSpace(format!(
                "omega [{omega_min}, {omega_max}], v [{v_min}, {v_max}]"
            )));
        }
        Ok(Self {
            omega_min,
            omega_max,
            v_min,
            v_max,
        })
    }

    /// Degenerate space holding a single parameter pair.
    pub fn point(theta: MotionParams) -> Self {
        Self {
            omega_min: theta.omega,
            omega_max: theta.omega,
            v_min: theta.v,
            v_max: theta.v,
        }
    }

    pub fn center(&self) -> MotionParams {
        MotionParams {
            omega: 0.5 * (self.omega_min + self.omega_max),
            v: 0.5 * (self.v_min + self.v_max),
        }
    }

    pub fn omega_width(&self) -> f64 {
        self.omega_max - self.omega_min
    }

    pub fn v_width(&self) -> f64 {
        self.v_max - self.v_min
    }

    pub fn max_abs_omega(&self) -> f64 {
        self.omega_min.abs().max(self.omega_max.abs())
    }

    pub fn contains(&self, theta: MotionParams) -> bool {
        (self.omega_min..=self.omega_max).contains(&theta.omega)
            && (self.v_min..=self.v_max).contains(&theta.v)
    }

    pub fn contains_space(&self, other: &SearchSpace) -> bool {
        self.omega_min <= other.omega_min
            && other.omega_max <= self.omega_max
            && self.v_min <= other.v_min
            && other.v_max <= self.v_max
    }

    /// Bisects both dimensions; children ordered (ω low, v low), (ω low, v high), (ω high, v low), (ω high, v high).
    pub fn quadrisect(&self) -> [SearchSpace; 4] {
        let c = self.center();
        [
            SearchSpace { omega_max: c.omega, v_max: c.v, ..*self },
            SearchSpace { omega_max: c.omega, v_min: c.v, ..*self },
            SearchSpace { omega_min: c.omega, v_max: c.v, ..*self },
            SearchSpace { omega_min: c.omega, v_min: c.v, ..*self },
        ]
    }

    /// Bisects the wider dimension (ω on ties).
    pub fn bisect_longest(&self) -> [SearchSpace; 2] {
        let c = self.center();
        if self.omega_width() >= self.v_width() {
            [
                SearchSpace { omega_max: c.omega, ..*self },
                SearchSpace { omega_min: c.omega, ..*self },
            ]
        } else {
            [
                SearchSpace { v_max: c.v, ..*self },
                SearchSpace { v_min: c.v, ..*self },
            ]
        }
    }
}

/// Closed pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PixelBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl PixelBox {
    pub fn point(x: f64, y: f64) -> Self {
        Self {
            x_min: x,
            x_max: x,
            y_min: y,
            y_max: y,
        }
    }

    pub fn hull(&self, other: &PixelBox) -> PixelBox {
        PixelBox {
            x_min: self.x_min.min(other.x_min),
            x_max: self.x_max.max(other.x_max),
            y_min: self.y_min.min(other.y_min),
            y_max: self.y_max.max(other.y_max),
        }
    }

    pub fn contains(&self, x: f64, y: f64, slack: f64) -> bool {
        x >= self.x_min - slack
            && x <= self.x_max + slack
            && y >= self.y_min - slack
            && y <= self.y_max + slack
    }

    pub fn contains_box(&self, other: &PixelBox, slack: f64) -> bool {
        other.x_min >= self.x_min - slack
            && other.x_max <= self.x_max + slack
            && other.y_min >= self.y_min - slack
            && other.y_max <= self.y_max + slack
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn midpoint(&self) -> (f64, f64) {
        (
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

/// Vehicle pose in the world frame; heading in `(-π, π]`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PlanarPose {
    pub heading: f64,
    pub x: f64,
    pub y: f64,
}

pub fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

/// `(1 - cos(ωt)) / ω`, written as `2 sin²(ωt/2) / ω` to avoid cancellation; 0 in the limit.
#[inline]
fn versine_over_omega(omega: f64, t: f64) -> f64 {
    if omega.abs() < OMEGA_EPS {
        0.0
    } else {
        let h = (0.5 * omega * t).sin();
        2.0 * h * h / omega
    }
}

/// `sin(ωt) / ω`, tending to `t`.
#[inline]
fn sine_over_omega(omega: f64, t: f64) -> f64 {
    if omega.abs() < OMEGA_EPS {
        t
    } else {
        (omega * t).sin() / omega
    }
}

/// Vehicle rotation angle `ωt` and planar translation `(v/ω)·[1 - cos ωt, sin ωt]`.
pub fn vehicle_motion(theta: MotionParams, t: f64) -> (f64, Vector2<f64>) {
    let angle = theta.omega * t;
    let tx = theta.v * versine_over_omega(theta.omega, t);
    let ty = theta.v * sine_over_omega(theta.omega, t);
    (angle, Vector2::new(tx, ty))
}

/// Relative camera pose `(R_c, t_c)` taking points from the camera at time `t` into the
/// reference camera, with identity mounting rotation and mounting offset `[0, s, 0]`.
pub fn camera_motion(theta: MotionParams, t: f64, rig: &RigGeometry) -> (Matrix3<f64>, Vector3<f64>) {
    let (angle, tv) = vehicle_motion(theta, t);
    let (sn, cs) = angle.sin_cos();
    let r_v = Matrix3::new(cs, -sn, 0.0, sn, cs, 0.0, 0.0, 0.0, 1.0);
    let t_v = Vector3::new(tv.x, tv.y, 0.0);
    let r_vc = Matrix3::<f64>::identity();
    let t_vc = Vector3::new(0.0, rig.s, 0.0);
    let r_vc_t = r_vc.transpose();
    let r_c = r_vc_t * r_v * r_vc;
    let t_c = -(r_vc_t * t_vc) + r_vc_t * t_v + r_vc_t * r_v * t_vc;
    (r_c, t_c)
}

/// Ground-plane homography `K (R_c - t_c nᵀ / d) K⁻¹`.
pub fn homography(
    theta: MotionParams,
    t: f64,
    rig: &RigGeometry,
    k: &CameraIntrinsics,
) -> Matrix3<f64> {
    let (r_c, t_c) = camera_motion(theta, t, rig);
    let n = RigGeometry::plane_normal();
    k.matrix() * (r_c - t_c * n.transpose() / rig.d) * k.inverse_matrix()
}

/// Applies a homography to a pixel and dehomogenises.
pub fn apply_homography(h: &Matrix3<f64>, x: f64, y: f64) -> (f64, f64) {
    let p = h * Vector3::new(x, y, 1.0);
    (p.x / p.z, p.y / p.z)
}

/// Camera model shared by warping, bounding and simulation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AckermannWarp {
    pub intrinsics: CameraIntrinsics,
    pub rig: RigGeometry,
}

/// Per-event warp terms at fixed `ω` and `t`: `x' = px + v·qx`, `y' = py + v·qy`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinearInV {
    pub px: f64,
    pub qx: f64,
    pub py: f64,
    pub qy: f64,
}

impl LinearInV {
    #[inline]
    pub fn at(&self, v: f64) -> (f64, f64) {
        (self.px + v * self.qx, self.py + v * self.qy)
    }
}

#[derive(Debug, Clone, Copy)]
struct EventTerms {
    /// `y - v0 + s·f/d`
    a: f64,
    /// `x - u0`
    b: f64,
}

impl AckermannWarp {
    pub fn new(intrinsics: CameraIntrinsics, rig: RigGeometry) -> Self {
        Self { intrinsics, rig }
    }

    #[inline]
    fn scale(&self) -> f64 {
        self.intrinsics.f / self.rig.d
    }

    #[inline]
    fn terms(&self, x: f64, y: f64) -> EventTerms {
        EventTerms {
            a: y - self.intrinsics.v0 + self.rig.s * self.scale(),
            b: x - self.intrinsics.u0,
        }
    }

    /// Pixel fixed by pure rotation (`v = 0`).
    pub fn rotation_center(&self) -> (f64, f64) {
        (
            self.intrinsics.u0,
            self.intrinsics.v0 - self.rig.s * self.scale(),
        )
    }

    #[inline]
    pub fn linear_in_v(&self, x: f64, y: f64, t: f64, omega: f64) -> LinearInV {
        let EventTerms { a, b } = self.terms(x, y);
        let u = omega * t;
        let sn = u.sin();
        let h = (0.5 * u).sin();
        let one_minus_cos = 2.0 * h * h;
        let k = self.scale();
        LinearInV {
            px: x + (-a * sn - b * one_minus_cos),
            qx: k * versine_over_omega(omega, t),
            py: y + (b * sn - a * one_minus_cos),
            qy: k * sine_over_omega(omega, t),
        }
    }

    /// Closed-form warp of pixel `(x, y)` observed `t` seconds after the reference time.
    #[inline]
    pub fn warp(&self, x: f64, y: f64, t: f64, theta: MotionParams) -> (f64, f64) {
        self.linear_in_v(x, y, t, theta.omega).at(theta.v)
    }

    /// Warp through the explicit homography (independent algebraic route).
    pub fn warp_via_homography(&self, x: f64, y: f64, t: f64, theta: MotionParams) -> (f64, f64) {
        apply_homography(&homography(theta, t, &self.rig, &self.intrinsics), x, y)
    }

    pub fn homography(&self, theta: MotionParams, t: f64) -> Matrix3<f64> {
        homography(theta, t, &self.rig, &self.intrinsics)
    }

    /// Rectangle containing the warp of `(x, y)` for every `θ ∈ space`.
    ///
    /// Each additive term of the closed form is monotone in ω on a one-signed ω interval
    /// (for |ωt| < π/2) and linear in v, so its extremes sit at the corners of the box.
    /// Intervals straddling zero are split and the two boxes merged.
    pub fn bounding_box(
        &self,
        x: f64,
        y: f64,
        t: f64,
        space: &SearchSpace,
    ) -> Result<PixelBox, WarpError> {
        check_interval(space, t)?;
        if space.omega_min < 0.0 && space.omega_max > 0.0 {
            let lo = self.box_one_signed(x, y, t, space.omega_min, 0.0, space.v_min, space.v_max);
            let hi = self.box_one_signed(x, y, t, 0.0, space.omega_max, space.v_min, space.v_max);
            Ok(lo.hull(&hi))
        } else {
            Ok(self.box_one_signed(
                x,
                y,
                t,
                space.omega_min,
                space.omega_max,
                space.v_min,
                space.v_max,
            ))
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn box_one_signed(
        &self,
        x: f64,
        y: f64,
        t: f64,
        w_lo: f64,
        w_hi: f64,
        v_lo: f64,
        v_hi: f64,
    ) -> PixelBox {
        let EventTerms { a, b } = self.terms(x, y);
        let k = self.scale();
        let s_lo = (w_lo * t).sin();
        let s_hi = (w_hi * t).sin();
        let omc = |w: f64| {
            let h = (0.5 * w * t).sin();
            2.0 * h * h
        };
        let (m_lo, m_hi) = (omc(w_lo), omc(w_hi));
        let g = [k * versine_over_omega(w_lo, t), k * versine_over_omega(w_hi, t)];
        let h = [k * sine_over_omega(w_lo, t), k * sine_over_omega(w_hi, t)];

        // x' = x + (-a·sin ωt - b·(1 - cos ωt)) + v·g(ω),  y' = y + (b·sin ωt - a·(1 - cos ωt)) + v·h(ω)
        let a_x = minmax2(-a * s_lo, -a * s_hi);
        let b_x = minmax2(-b * m_lo, -b * m_hi);
        let c_x = minmax4(v_lo * g[0], v_lo * g[1], v_hi * g[0], v_hi * g[1]);
        let a_y = minmax2(b * s_lo, b * s_hi);
        let b_y = minmax2(-a * m_lo, -a * m_hi);
        let c_y = minmax4(v_lo * h[0], v_lo * h[1], v_hi * h[0], v_hi * h[1]);

        PixelBox {
            x_min: (x + (a_x.0 + b_x.0)) + c_x.0,
            x_max: (x + (a_x.1 + b_x.1)) + c_x.1,
            y_min: (y + (a_y.0 + b_y.0)) + c_y.0,
            y_max: (y + (a_y.1 + b_y.1)) + c_y.1,
        }
    }

    /// Image of warped events at `theta`, accumulated on `spec`.
    pub fn build_iwe(
        &self,
        window: &EventWindow,
        theta: MotionParams,
        spec: &GridSpec,
    ) -> AccumulatorGrid {
        build_iwe(window, spec, |e, t| self.warp(e.x, e.y, t, theta))
    }

    /// Pads `sensor` so that every warp over `space` for `t ∈ [0, duration]` stays on the grid.
    ///
    /// The warp is a rigid motion of the image plane, so the sensor corners bound it; the
    /// corner boxes are sampled densely in `t` and a two-pixel margin is added.
    pub fn padded_grid(
        &self,
        sensor: &GridSpec,
        space: &SearchSpace,
        duration: f64,
    ) -> Result<GridSpec, WarpError> {
        check_interval(space, duration)?;
        let (w, h) = (sensor.width as f64, sensor.height as f64);
        let corners = [(-0.5, -0.5), (w - 0.5, -0.5), (-0.5, h - 0.5), (w - 0.5, h - 0.5)];
        let mut hull = PixelBox {
            x_min: -0.5,
            x_max: w - 0.5,
            y_min: -0.5,
            y_max: h - 0.5,
        };
        const SAMPLES: usize = 32;
        for i in 0..=SAMPLES {
            let t = duration * i as f64 / SAMPLES as f64;
            for &(cx, cy) in &corners {
                hull = hull.hull(&self.bounding_box(cx, cy, t, space)?);
            }
        }
        let margin = |v: f64| v.max(0.0).ceil() as usize + 2;
        Ok(GridSpec::sensor(sensor.width, sensor.height).with_padding(
            margin(-0.5 - hull.x_min),
            margin(hull.x_max - (w - 0.5)),
            margin(-0.5 - hull.y_min),
            margin(hull.y_max - (h - 0.5)),
        ))
    }
}

/// Enforces `max|ω|·t < π/2`.
pub fn check_interval(space: &SearchSpace, t: f64) -> Result<(), WarpError> {
    let product = space.max_abs_omega() * t.abs();
    if !(product < FRAC_PI_2) {
        return Err(WarpError::IntervalTooWide { product });
    }
    Ok(())
}

#[inline]
fn minmax2(a: f64, b: f64) -> (f64, f64) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

#[inline]
fn minmax4(a: f64, b: f64, c: f64, d: f64) -> (f64, f64) {
    (a.min(b).min(c).min(d), a.max(b).max(c).max(d))
}

/// Chains per-window vehicle displacements; the first pose is the origin with heading 0.
pub fn integrate_trajectory(estimates: &[(MotionParams, f64)]) -> Vec<PlanarPose> {
    let mut poses = Vec::with_capacity(estimates.len() + 1);
    let mut pose = PlanarPose::default();
    poses.push(pose);
    for &(theta, dt) in estimates {
        let (angle, tv) = vehicle_motion(theta, dt);
        let (sn, cs) = pose.heading.sin_cos();
        pose = PlanarPose {
            heading: wrap_angle(pose.heading + angle),
            x: pose.x + cs * tv.x - sn * tv.y,
            y: pose.y + sn * tv.x + cs * tv.y,
        };
        poses.push(pose);
    }
    poses
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn rig52() -> AckermannWarp {
        AckermannWarp::new(
            CameraIntrinsics::new(200.0, 173.0, 130.0).unwrap(),
            RigGeometry::new(-0.45, 0.23).unwrap(),
        )
    }

    fn space(wl: f64, wh: f64, vl: f64, vh: f64) -> SearchSpace {
        SearchSpace::new(wl, wh, vl, vh).unwrap()
    }

    // Matrix products written out by hand, independent of nalgebra.
    fn matmul(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
        let mut out = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
            }
        }
        out
    }

    fn oracle_pose(theta: MotionParams, t: f64, s: f64) -> ([[f64; 3]; 3], [f64; 3]) {
        let u = theta.omega * t;
        let r = [[u.cos(), -u.sin(), 0.0], [u.sin(), u.cos(), 0.0], [0.0, 0.0, 1.0]];
        let tv = [
            theta.v / theta.omega * (1.0 - u.cos()),
            theta.v / theta.omega * u.sin(),
            0.0,
        ];
        let tvc = [0.0, s, 0.0];
        let r_tvc: Vec<f64> = (0..3).map(|i| (0..3).map(|k| r[i][k] * tvc[k]).sum()).collect();
        let tc = [
            -tvc[0] + tv[0] + r_tvc[0],
            -tvc[1] + tv[1] + r_tvc[1],
            -tvc[2] + tv[2] + r_tvc[2],
        ];
        (r, tc)
    }

    #[test]
    fn vehicle_motion_examples() {
        let (a, tr) = vehicle_motion(MotionParams::new(0.5, 0.5), 0.0);
        assert_eq!(a, 0.0);
        assert_eq!((tr.x, tr.y), (0.0, 0.0));

        let (a, tr) = vehicle_motion(MotionParams::new(0.0, 0.5), 0.1);
        assert_eq!(a, 0.0);
        assert_eq!(tr.x, 0.0);
        assert_relative_eq!(tr.y, 0.05, epsilon = 1e-15);

        let (a, tr) = vehicle_motion(MotionParams::new(0.5, 0.5), 0.1);
        assert_relative_eq!(a, 0.05, epsilon = 1e-15);
        assert_relative_eq!(tr.x, 1.0 - 0.05f64.cos(), epsilon = 1e-15);
        assert_relative_eq!(tr.y, 0.05f64.sin(), epsilon = 1e-15);
        assert_relative_eq!(tr.x, 0.001_249_739_7, epsilon = 1e-10);
        assert_relative_eq!(tr.y, 0.049_979_169_3, epsilon = 1e-10);
    }

    #[test]
    fn camera_motion_examples() {
        let rig = RigGeometry::new(-0.45, 0.23).unwrap();
        let (r, t) = camera_motion(MotionParams::new(0.5, 0.5), 0.0, &rig);
        assert_eq!(r, Matrix3::identity());
        assert!(t.norm() < 1e-15);

        let theta = MotionParams::new(0.3, 0.7);
        let (r, t) = camera_motion(theta, 0.1, &RigGeometry::new(0.0, 0.23).unwrap());
        let (angle, tv) = vehicle_motion(theta, 0.1);
        assert_relative_eq!(r[(1, 0)], angle.sin(), epsilon = 1e-15);
        assert_relative_eq!(t.x, tv.x, epsilon = 1e-15);
        assert_relative_eq!(t.y, tv.y, epsilon = 1e-15);

        let theta = MotionParams::new(0.5, 0.5);
        let (r, t) = camera_motion(theta, 0.1, &rig);
        let (ro, to) = oracle_pose(theta, 0.1, -0.45);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(r[(i, j)], ro[i][j], epsilon = 1e-14);
            }
            assert_relative_eq!(t[i], to[i], epsilon = 1e-14);
        }
    }

    #[test]
    fn homography_examples() {
        let w = rig52();
        let h = w.homography(MotionParams::new(0.5, 0.5), 0.0);
        assert!((h - Matrix3::identity()).abs().max() < 1e-14);

        // straight-line motion: a pure y translation by (f/d)·v·t
        let v = 0.8;
        let t = 0.07;
        let h0 = w.homography(MotionParams::new(0.0, v), t);
        let h_small = w.homography(MotionParams::new(1e-9, v), t);
        assert!((h0 - h_small).abs().max() < 1e-6);
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, 1.0, 200.0 / 0.23 * v * t, 0.0, 0.0, 1.0);
        assert!((h0 - expected).abs().max() < 1e-12);

        // K (R - t nᵀ/d) K⁻¹ by explicit products
        let theta = MotionParams::new(0.5, 0.5);
        let (r, tc) = oracle_pose(theta, 0.1, -0.45);
        let mut m = r;
        for (i, row) in m.iter_mut().enumerate() {
            row[2] += tc[i] / 0.23; // n = [0, 0, -1]
        }
        let k = [[200.0, 0.0, 173.0], [0.0, 200.0, 130.0], [0.0, 0.0, 1.0]];
        let kinv = [[1.0 / 200.0, 0.0, -173.0 / 200.0], [0.0, 1.0 / 200.0, -130.0 / 200.0], [0.0, 0.0, 1.0]];
        let ho = matmul(matmul(k, m), kinv);
        let h = w.homography(theta, 0.1);
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(h[(i, j)], ho[i][j], epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn warp_examples() {
        let w = rig52();
        let theta = MotionParams::new(0.5, 0.5);
        assert_eq!(w.warp(12.3, 45.6, 0.0, theta), (12.3, 45.6));

        let (cx, cy) = w.rotation_center();
        for omega in [-1.0, -0.2, 0.0, 0.4, 1.3] {
            let (x, y) = w.warp(cx, cy, 0.08, MotionParams::new(omega, 0.0));
            assert!((x - cx).abs() < 1e-9 && (y - cy).abs() < 1e-9);
        }

        let (x, y) = w.warp(173.0, 130.0, 0.05, theta);
        let (xh, yh) = w.warp_via_homography(173.0, 130.0, 0.05, theta);
        assert!((x - xh).abs() < 1e-10 && (y - yh).abs() < 1e-10);
        // at the principal point only the rotation about the offset centre and the arc move it
        let k = 200.0 / 0.23;
        let u = 0.025f64;
        let ex = -(-0.45 * k) * u.sin() + k * (0.5 / 0.5) * (1.0 - u.cos()) + 173.0;
        let ey = (-0.45 * k) * u.cos() + k * (0.5 / 0.5) * u.sin() + 0.45 * k + 130.0;
        assert_relative_eq!(x, ex, epsilon = 1e-9);
        assert_relative_eq!(y, ey, epsilon = 1e-9);
    }

    #[test]
    fn straight_line_limit() {
        let w = rig52();
        let (x, y) = w.warp(50.0, 60.0, 0.1, MotionParams::new(0.0, 0.5));
        assert_eq!(x, 50.0);
        assert_relative_eq!(y, 60.0 + 200.0 / 0.23 * 0.05, epsilon = 1e-12);
    }

    #[test]
    fn degenerate_box_is_the_warped_point() {
        let w = rig52();
        for theta in [MotionParams::new(0.5, 0.5), MotionParams::new(0.0, 0.3), MotionParams::new(-0.7, -0.2)] {
            let b = w.bounding_box(200.0, 100.0, 0.1, &SearchSpace::point(theta)).unwrap();
            let (x, y) = w.warp(200.0, 100.0, 0.1, theta);
            assert_eq!(b, PixelBox::point(x, y));
            assert_eq!(b.width(), 0.0);
        }
    }

    #[test]
    fn zero_spanning_box_is_hull_of_halves() {
        let w = rig52();
        let full = space(-0.1, 0.1, 0.4, 0.6);
        let b = w.bounding_box(200.0, 100.0, 0.1, &full).unwrap();
        let lo = w.bounding_box(200.0, 100.0, 0.1, &space(-0.1, 0.0, 0.4, 0.6)).unwrap();
        let hi = w.bounding_box(200.0, 100.0, 0.1, &space(0.0, 0.1, 0.4, 0.6)).unwrap();
        assert_eq!(b, lo.hull(&hi));
    }

    #[test]
    fn box_rejects_wide_intervals() {
        let w = rig52();
        let err = w.bounding_box(0.0, 0.0, 1.0, &space(-2.0, 1.0, 0.0, 1.0)).unwrap_err();
        assert!(matches!(err, WarpError::IntervalTooWide { .. }));
        assert!(w.bounding_box(0.0, 0.0, 1.0, &space(-1.5, 1.5, 0.0, 1.0)).is_ok());
    }

    #[test]
    fn search_space_validation_and_splits() {
        assert!(SearchSpace::new(0.6, 0.4, 0.0, 1.0).is_err());
        assert!(SearchSpace::new(0.0, f64::NAN, 0.0, 1.0).is_err());
        let s = space(0.4, 0.6, 0.4, 0.6);
        let kids = s.quadrisect();
        for k in &kids {
            assert!(s.contains_space(k));
            assert_relative_eq!(k.omega_width(), 0.1, epsilon = 1e-15);
        }
        let halves = space(0.0, 1.0, 0.0, 0.5).bisect_longest();
        assert_eq!(halves[0].omega_max, 0.5);
        assert_eq!(halves[1].v_max, 0.5);
    }

    #[test]
    fn trajectory_examples() {
        assert_eq!(integrate_trajectory(&[]), vec![PlanarPose::default()]);

        let p = integrate_trajectory(&[(MotionParams::new(0.0, 1.0), 1.0)]);
        assert_eq!(p.len(), 2);
        assert_eq!(p[1].heading, 0.0);
        assert_relative_eq!(p[1].x, 0.0);
        assert_relative_eq!(p[1].y, 1.0);

        let seg = (MotionParams::new(PI / 2.0, 1.0), 1.0);
        let p = integrate_trajectory(&[seg, seg]);
        assert_relative_eq!(p[1].heading, PI / 2.0, epsilon = 1e-12);
        assert_relative_eq!(p[2].heading, PI, epsilon = 1e-12);
        // each segment moves (r, r) in its own frame, r = v/ω; the second is turned by π/2
        let r = 1.0 / (PI / 2.0);
        assert_relative_eq!(p[1].x, r, epsilon = 1e-12);
        assert_relative_eq!(p[1].y, r, epsilon = 1e-12);
        assert_relative_eq!(p[2].x, 0.0, epsilon = 1e-12);
        assert_relative_eq!(p[2].y, 2.0 * r, epsilon = 1e-12);
    }

    #[test]
    fn padding_covers_sensor_warps() {
        let w = rig52();
        let sensor = GridSpec::sensor(346, 260);
        let sp = space(0.4, 0.6, 0.4, 0.6);
        let g = w.padded_grid(&sensor, &sp, 0.1).unwrap();
        assert!(g.pad_left + g.pad_right + g.pad_top + g.pad_bottom > 8);
        for &(x, y) in &[(0.0, 0.0), (345.0, 0.0), (0.0, 259.0), (345.0, 259.0), (100.0, 200.0)] {
            for i in 0..=10 {
                let t = 0.01 * i as f64;
                let (xw, yw) = w.warp(x, y, t, MotionParams::new(0.6, 0.6));
                assert!(crate::event::round_to_accumulator(xw, yw, &g).is_some());
            }
        }
    }

    proptest! {
        #[test]
        fn omega_to_zero_is_continuous(x in 0.0..346.0f64, y in 0.0..260.0f64, v in -1.0..1.0f64, t in 0.0..0.1f64) {
            let w = rig52();
            let (x0, y0) = w.warp(x, y, t, MotionParams::new(0.0, v));
            let (x1, y1) = w.warp(x, y, t, MotionParams::new(1e-9, v));
            prop_assert!((x0 - x1).abs() < 1e-6 && (y0 - y1).abs() < 1e-6);
        }

        #[test]
        fn growing_the_space_never_shrinks_the_box(
            x in 0.0..346.0f64, y in 0.0..260.0f64, t in 0.0..0.1f64,
            w0 in -1.0..1.0f64, dw in 0.0..0.5f64, v0 in -1.0..1.0f64, dv in 0.0..0.5f64,
            ew in 0.0..0.3f64, ev in 0.0..0.3f64,
        ) {
            let w = rig52();
            let inner = space(w0, w0 + dw, v0, v0 + dv);
            let outer = space(w0 - ew, w0 + dw + ew, v0 - ev, v0 + dv + ev);
            let bi = w.bounding_box(x, y, t, &inner).unwrap();
            let bo = w.bounding_box(x, y, t, &outer).unwrap();
            prop_assert!(bo.contains_box(&bi, 1e-9));
        }

        #[test]
        fn box_contains_sampled_warps(
            x in 0.0..346.0f64, y in 0.0..260.0f64, t in 0.0..0.1f64,
            w0 in -1.5..1.5f64, dw in 0.0..0.6f64, v0 in -1.0..1.0f64, dv in 0.0..0.6f64,
            fw in proptest::collection::vec(0.0..=1.0f64, 16), fv in proptest::collection::vec(0.0..=1.0f64, 16),
        ) {
            let w = rig52();
            let sp = space(w0, w0 + dw, v0, v0 + dv);
            let b = w.bounding_box(x, y, t, &sp).unwrap();
            for (a, c) in fw.iter().zip(&fv) {
                let theta = MotionParams::new(w0 + a * dw, v0 + c * dv);
                let (xw, yw) = w.warp(x, y, t, theta);
                prop_assert!(b.contains(xw, yw, 1e-9));
            }
        }
    }
}
