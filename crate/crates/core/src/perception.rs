//! Synthetic monocular gate detection.
//!
//! The gate circle is projected through a pinhole camera looking along body
//! x, boxed, optionally perturbed with pixel noise, delayed by a fixed
//! latency and low-pass filtered. Only the box center is turned back into a
//! world-frame LOS; the box size is never used.

use std::collections::VecDeque;

use nalgebra::{UnitQuaternion, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadrotorState;
use crate::error::{Error, Result};

/// Points sampled on the gate rim.
const RIM_POINTS: usize = 64;
/// Minimum depth for a point to count as in front of the camera, m.
const MIN_DEPTH: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CameraModel {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
    /// Angle of view used as the circular FOV bound, rad.
    pub gamma_cam: f64,
}

impl CameraModel {
    /// Square-pixel camera whose narrower half-angle equals `gamma_cam`.
    pub fn from_fov(width: f64, height: f64, gamma_cam: f64) -> Self {
        let (cx, cy) = (width / 2.0, height / 2.0);
        let f = cx.min(cy) / gamma_cam.tan();
        Self {
            fx: f,
            fy: f,
            cx,
            cy,
            width,
            height,
            gamma_cam,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.fx > 0.0 && self.fy > 0.0 && self.width > 0.0 && self.height > 0.0) {
            return Err(Error::Config(
                "camera focal lengths and image size must be positive".into(),
            ));
        }
        let implied = (self.cx / self.fx).min(self.cy / self.fy).atan();
        if (implied - self.gamma_cam).abs() > 0.05 * self.gamma_cam {
            return Err(Error::Config(format!(
                "gamma_cam {:.2}° inconsistent with intrinsics ({:.2}°)",
                self.gamma_cam.to_degrees(),
                implied.to_degrees()
            )));
        }
        Ok(())
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (0.0..=self.width).contains(&u) && (0.0..=self.height).contains(&v)
    }

    /// Body-frame point to pixel coordinates, `None` behind the camera.
    pub fn project_body(&self, b: &Vector3<f64>) -> Option<(f64, f64)> {
        // camera axes: x right = -body y, y down = -body z, z optical = body x
        let z = b.x;
        if z < MIN_DEPTH {
            return None;
        }
        Some((
            self.fx * (-b.y) / z + self.cx,
            self.fy * (-b.z) / z + self.cy,
        ))
    }

    /// Pixel coordinates to a unit direction in the body frame.
    pub fn back_project_body(&self, u: f64, v: f64) -> Vector3<f64> {
        let xc = (u - self.cx) / self.fx;
        let yc = (v - self.cy) / self.fy;
        Vector3::new(1.0, -xc, -yc).normalize()
    }
}

impl Default for CameraModel {
    fn default() -> Self {
        Self::from_fov(640.0, 480.0, 33.5f64.to_radians())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub cx_px: f64,
    pub cy_px: f64,
    pub w_px: f64,
    pub h_px: f64,
    pub t_capture: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PerceptionConfig {
    /// Detection and control rate, Hz.
    pub f_est: f64,
    /// Detection latency, s.
    pub delay: f64,
    /// Standard deviation of the box-center noise, px.
    pub noise_px: f64,
    /// Low-pass coefficient on the box center.
    pub lpf_alpha: f64,
}

impl Default for PerceptionConfig {
    fn default() -> Self {
        Self {
            f_est: 30.0,
            delay: 0.0,
            noise_px: 0.0,
            lpf_alpha: 0.6,
        }
    }
}

impl PerceptionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_est > 0.0) {
            return Err(Error::Config("f_est must be positive".into()));
        }
        if !(0.0..=0.3 + 1e-12).contains(&self.delay) {
            return Err(Error::Config(format!(
                "delay must lie in [0, 0.3] s, got {}",
                self.delay
            )));
        }
        if !(self.noise_px >= 0.0) {
            return Err(Error::Config("noise_px must be non-negative".into()));
        }
        if !(self.lpf_alpha > 0.0 && self.lpf_alpha <= 1.0) {
            return Err(Error::Config("lpf_alpha must lie in (0, 1]".into()));
        }
        Ok(())
    }

    /// Latency in control ticks, rounded up.
    pub fn delay_ticks(&self) -> u64 {
        (self.delay * self.f_est - 1e-9).ceil().max(0.0) as u64
    }
}

/// Box around the projected gate rim, or `None` if the gate cannot be seen.
///
/// The gate center must be in front of the camera and the (noisy) box
/// center inside the image.
#[allow(clippy::too_many_arguments)]
pub fn project_gate<R: Rng + ?Sized>(
    cam: &CameraModel,
    x: &QuadrotorState,
    gate_center: &Vector3<f64>,
    gate_normal: &Vector3<f64>,
    radius: f64,
    t_capture: f64,
    noise_px: f64,
    rng: &mut R,
) -> Option<BoundingBox> {
    let to_body = |p: &Vector3<f64>| x.q.inverse_transform_vector(&(p - x.p));
    if to_body(gate_center).x < MIN_DEPTH {
        return None;
    }
    let n = gate_normal.normalize();
    let helper = if n.z.abs() < 0.9 {
        Vector3::z()
    } else {
        Vector3::x()
    };
    let e1 = n.cross(&helper).normalize();
    let e2 = n.cross(&e1);

    let (mut u_min, mut u_max, mut v_min, mut v_max) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    let mut seen = 0;
    for i in 0..RIM_POINTS {
        let a = 2.0 * std::f64::consts::PI * i as f64 / RIM_POINTS as f64;
        let p = gate_center + radius * (a.cos() * e1 + a.sin() * e2);
        if let Some((u, v)) = cam.project_body(&to_body(&p)) {
            u_min = u_min.min(u);
            u_max = u_max.max(u);
            v_min = v_min.min(v);
            v_max = v_max.max(v);
            seen += 1;
        }
    }
    if seen == 0 {
        return None;
    }
    let (mut cu, mut cv) = (0.5 * (u_min + u_max), 0.5 * (v_min + v_max));
    if noise_px > 0.0 {
        let normal = Normal::new(0.0, noise_px).expect("positive std");
        cu += normal.sample(rng);
        cv += normal.sample(rng);
    }
    if !cam.contains(cu, cv) {
        return None;
    }
    Some(BoundingBox {
        cx_px: cu,
        cy_px: cv,
        w_px: u_max - u_min,
        h_px: v_max - v_min,
        t_capture,
    })
}

/// World-frame unit LOS through the box center.
pub fn bbox_to_los(
    cam: &CameraModel,
    bbox: &BoundingBox,
    q_bw: &UnitQuaternion<f64>,
) -> Vector3<f64> {
    (q_bw * cam.back_project_body(bbox.cx_px, bbox.cy_px)).normalize()
}

/// A detection together with the attitude it was taken at.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Capture {
    pub bbox: BoundingBox,
    pub q_bw: UnitQuaternion<f64>,
}

/// What the pipeline hands to the controller on one tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Release {
    /// The latency queue has not produced its first output yet.
    Pending,
    /// The delayed frame had no detection.
    Lost,
    Detection(Capture),
}

/// Fixed latency followed by a first-order filter on the box center.
#[derive(Debug, Clone)]
pub struct PerceptionPipeline {
    delay_ticks: u64,
    alpha: f64,
    queue: VecDeque<(u64, Option<Capture>)>,
    filtered: Option<(f64, f64)>,
    started: bool,
}

impl PerceptionPipeline {
    pub fn new(cfg: &PerceptionConfig) -> Self {
        Self {
            delay_ticks: cfg.delay_ticks(),
            alpha: cfg.lpf_alpha,
            queue: VecDeque::new(),
            filtered: None,
            started: false,
        }
    }

    pub fn delay_ticks(&self) -> u64 {
        self.delay_ticks
    }

    /// Feed the frame captured at `tick` and take whatever is due.
    pub fn step(&mut self, tick: u64, captured: Option<Capture>) -> Release {
        self.queue.push_back((tick + self.delay_ticks, captured));
        let mut due = None;
        while let Some((release, _)) = self.queue.front() {
            if *release > tick {
                break;
            }
            due = self.queue.pop_front().map(|(_, c)| c);
            if let Some(Some(c)) = due {
                self.filter(c);
            }
        }
        match due {
            None if !self.started => Release::Pending,
            None => Release::Lost,
            Some(frame) => {
                self.started = true;
                match frame {
                    None => Release::Lost,
                    Some(mut c) => {
                        let (u, v) = self.filtered.expect("filter primed by this frame");
                        c.bbox.cx_px = u;
                        c.bbox.cy_px = v;
                        Release::Detection(c)
                    }
                }
            }
        }
    }

    fn filter(&mut self, c: Capture) {
        let x = (c.bbox.cx_px, c.bbox.cy_px);
        self.filtered = Some(match self.filtered {
            None => x,
            Some((u, v)) => (
                self.alpha * x.0 + (1.0 - self.alpha) * u,
                self.alpha * x.1 + (1.0 - self.alpha) * v,
            ),
        });
    }
}

/// Run a whole tick-aligned box stream through latency and filter. Output
/// slot `k` is what the controller would see on tick `k`.
pub fn delay_and_filter(
    stream: &[Option<BoundingBox>],
    cfg: &PerceptionConfig,
) -> Vec<Option<BoundingBox>> {
    let mut pipe = PerceptionPipeline::new(cfg);
    stream
        .iter()
        .enumerate()
        .map(|(k, b)| {
            let cap = b.map(|bbox| Capture {
                bbox,
                q_bw: UnitQuaternion::identity(),
            });
            match pipe.step(k as u64, cap) {
                Release::Detection(c) => Some(c.bbox),
                _ => None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn level_at_origin() -> QuadrotorState {
        QuadrotorState::at_rest(Vector3::zeros())
    }

    fn boxed(u: f64, v: f64, t: f64) -> BoundingBox {
        BoundingBox {
            cx_px: u,
            cy_px: v,
            w_px: 10.0,
            h_px: 10.0,
            t_capture: t,
        }
    }

    #[test]
    fn default_camera_matches_angle_of_view() {
        let cam = CameraModel::default();
        cam.validate().unwrap();
        assert_abs_diff_eq!((cam.cy / cam.fy).atan().to_degrees(), 33.5, epsilon = 1e-9);
        let bad = CameraModel {
            gamma_cam: 0.2,
            ..cam
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn on_axis_gate_is_centered() {
        let cam = CameraModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let d = 20.0;
        let b = project_gate(
            &cam,
            &level_at_origin(),
            &Vector3::new(d, 0.0, 0.0),
            &Vector3::x(),
            1.0,
            0.0,
            0.0,
            &mut rng,
        )
        .unwrap();
        assert_abs_diff_eq!(b.cx_px, cam.cx, epsilon = 1e-9);
        assert_abs_diff_eq!(b.cy_px, cam.cy, epsilon = 1e-9);
        assert_abs_diff_eq!(b.w_px, 2.0 * cam.fx * 1.0 / d, epsilon = 1e-9);
    }

    #[test]
    fn gate_behind_camera_is_invisible() {
        let cam = CameraModel::default();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let b = project_gate(
            &cam,
            &level_at_origin(),
            &Vector3::new(-5.0, 0.0, 0.0),
            &Vector3::x(),
            1.0,
            0.0,
            0.0,
            &mut rng,
        );
        assert!(b.is_none());
        // in front but far outside the image
        let b = project_gate(
            &cam,
            &level_at_origin(),
            &Vector3::new(1.0, 10.0, 0.0),
            &Vector3::x(),
            1.0,
            0.0,
            0.0,
            &mut rng,
        );
        assert!(b.is_none());
    }

    #[test]
    fn noiseless_projection_is_deterministic() {
        let cam = CameraModel::default();
        let mut x = level_at_origin();
        x.q = UnitQuaternion::from_euler_angles(0.1, -0.05, 0.2);
        let g = Vector3::new(15.0, 3.0, -1.0);
        let a = project_gate(
            &cam,
            &x,
            &g,
            &Vector3::x(),
            1.0,
            0.0,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(1),
        );
        let b = project_gate(
            &cam,
            &x,
            &g,
            &Vector3::x(),
            1.0,
            0.0,
            0.0,
            &mut ChaCha8Rng::seed_from_u64(2),
        );
        assert_eq!(a, b);
    }

    #[test]
    fn noise_moves_the_center() {
        let cam = CameraModel::default();
        let g = Vector3::new(15.0, 0.0, 0.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 4000;
        let mut sum = 0.0;
        let mut sum_sq = 0.0;
        for _ in 0..n {
            let b = project_gate(
                &cam,
                &level_at_origin(),
                &g,
                &Vector3::x(),
                1.0,
                0.0,
                2.0,
                &mut rng,
            )
            .unwrap();
            sum += b.cx_px - cam.cx;
            sum_sq += (b.cx_px - cam.cx).powi(2);
        }
        let mean = sum / n as f64;
        let std = (sum_sq / n as f64 - mean * mean).sqrt();
        assert!(mean.abs() < 0.15);
        assert!((std - 2.0).abs() < 0.15);
    }

    #[test]
    fn principal_point_maps_to_optical_axis() {
        let cam = CameraModel::default();
        let b = boxed(cam.cx, cam.cy, 0.0);
        assert_abs_diff_eq!(
            bbox_to_los(&cam, &b, &UnitQuaternion::identity()),
            Vector3::x(),
            epsilon = 1e-15
        );
        let yawed = UnitQuaternion::from_axis_angle(&Vector3::z_axis(), 0.4);
        assert_abs_diff_eq!(
            bbox_to_los(&cam, &b, &yawed),
            yawed * Vector3::x(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn horizontal_offset_gives_azimuth() {
        let cam = CameraModel::default();
        let ten = 10f64.to_radians();
        let b = boxed(cam.cx + cam.fx * ten.tan(), cam.cy, 0.0);
        let l = bbox_to_los(&cam, &b, &UnitQuaternion::identity());
        assert_abs_diff_eq!(l.dot(&Vector3::x()).acos(), ten, epsilon = 1e-12);
        // image right is body -y
        assert!(l.y < 0.0);
        assert_abs_diff_eq!(l.norm(), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn delay_zero_alpha_one_is_identity() {
        let cfg = PerceptionConfig {
            delay: 0.0,
            lpf_alpha: 1.0,
            ..Default::default()
        };
        let stream: Vec<_> = (0..20)
            .map(|k| {
                if k % 7 == 3 {
                    None
                } else {
                    Some(boxed(k as f64, 2.0 * k as f64, k as f64))
                }
            })
            .collect();
        assert_eq!(delay_and_filter(&stream, &cfg), stream);
    }

    #[test]
    fn delay_shifts_by_whole_ticks() {
        let cfg = PerceptionConfig {
            delay: 0.1,
            lpf_alpha: 1.0,
            ..Default::default()
        };
        assert_eq!(cfg.delay_ticks(), 3);
        assert_eq!(PerceptionConfig { delay: 0.11, ..cfg }.delay_ticks(), 4);
        let stream: Vec<_> = (0..20)
            .map(|k| Some(boxed(k as f64, 0.0, k as f64)))
            .collect();
        let out = delay_and_filter(&stream, &cfg);
        assert!(out[..3].iter().all(Option::is_none));
        for k in 3..20 {
            assert_eq!(out[k], stream[k - 3]);
        }
    }

    #[test]
    fn filter_converges_geometrically() {
        let alpha = 0.6;
        let cfg = PerceptionConfig {
            lpf_alpha: alpha,
            ..Default::default()
        };
        let mut stream = vec![Some(boxed(0.0, 0.0, 0.0))];
        stream.extend((1..30).map(|k| Some(boxed(100.0, 50.0, k as f64))));
        let out = delay_and_filter(&stream, &cfg);
        for k in 1..30 {
            let err = 100.0 - out[k].unwrap().cx_px;
            assert_abs_diff_eq!(err, 100.0 * (1.0 - alpha).powi(k as i32), epsilon = 1e-9);
        }
    }

    #[test]
    fn pipeline_preserves_order_and_count() {
        let cfg = PerceptionConfig {
            delay: 0.2,
            lpf_alpha: 1.0,
            ..Default::default()
        };
        let mut pipe = PerceptionPipeline::new(&cfg);
        let mut released = Vec::new();
        let mut pending = 0;
        for k in 0..100u64 {
            let cap = Capture {
                bbox: boxed(k as f64, 0.0, k as f64),
                q_bw: UnitQuaternion::identity(),
            };
            match pipe.step(k, Some(cap)) {
                Release::Detection(c) => released.push(c.bbox.t_capture),
                Release::Pending => pending += 1,
                Release::Lost => panic!("no frame was lost"),
            }
        }
        assert_eq!(pending, 6);
        assert_eq!(released.len() + pipe.delay_ticks() as usize, 100);
        assert!(released.windows(2).all(|w| w[1] == w[0] + 1.0));
    }

    #[test]
    fn lost_frames_are_delayed_too() {
        let cfg = PerceptionConfig {
            delay: 0.1,
            lpf_alpha: 1.0,
            ..Default::default()
        };
        let mut pipe = PerceptionPipeline::new(&cfg);
        let cap = Capture {
            bbox: boxed(1.0, 1.0, 0.0),
            q_bw: UnitQuaternion::identity(),
        };
        let frames = [Some(cap), None, Some(cap), Some(cap), Some(cap), Some(cap)];
        let out: Vec<_> = frames
            .iter()
            .enumerate()
            .map(|(k, f)| pipe.step(k as u64, *f))
            .collect();
        assert_eq!(out[2], Release::Pending);
        assert!(matches!(out[3], Release::Detection(_)));
        assert_eq!(out[4], Release::Lost);
        assert!(matches!(out[5], Release::Detection(_)));
    }
}
