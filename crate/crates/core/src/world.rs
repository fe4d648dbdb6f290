//! Gate motion models, gate-pass detection and scenario sampling.

use std::f64::consts::PI;

use nalgebra::{Rotation3, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::QuadrotorState;
use crate::error::{Error, Result};

/// Gate center path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GateMotion {
    Stationary,
    Linear {
        velocity: Vector3<f64>,
    },
    /// `d·(cos ωt, ½ cos 2ωt, 0)`
    Planar {
        d: f64,
        omega: f64,
    },
    /// `d·(sin 3ωt (1 + ½ cos 2ωt), sin 3ωt sin 2ωt, sin 4ωt)`
    Knot {
        d: f64,
        omega: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GateTrajectory {
    pub motion: GateMotion,
    pub p0: Vector3<f64>,
    /// m
    pub radius: f64,
    /// Time offset along the path, s.
    pub phase: f64,
    /// Unit normal of the gate plane, pointing away from the approaching vehicle.
    pub normal: Vector3<f64>,
    /// Orientation of the path's own axes in the world.
    pub path_frame: Rotation3<f64>,
}

impl GateTrajectory {
    pub fn stationary(p0: Vector3<f64>, radius: f64, normal: Vector3<f64>) -> Self {
        Self {
            motion: GateMotion::Stationary,
            p0,
            radius,
            phase: 0.0,
            normal: normal.normalize(),
            path_frame: Rotation3::identity(),
        }
    }

    /// Offset from `p0` at path time `tau` (phase already applied).
    fn offset(&self, tau: f64) -> Vector3<f64> {
        self.path_frame * self.path_offset(tau)
    }

    fn path_offset(&self, tau: f64) -> Vector3<f64> {
        match self.motion {
            GateMotion::Stationary => Vector3::zeros(),
            GateMotion::Linear { velocity } => self.path_frame.inverse() * velocity * tau,
            GateMotion::Planar { d, omega } => {
                let a = omega * tau;
                d * Vector3::new(a.cos(), 0.5 * (2.0 * a).cos(), 0.0)
            }
            GateMotion::Knot { d, omega } => {
                let a = omega * tau;
                let s3 = (3.0 * a).sin();
                d * Vector3::new(
                    s3 * (1.0 + 0.5 * (2.0 * a).cos()),
                    s3 * (2.0 * a).sin(),
                    (4.0 * a).sin(),
                )
            }
        }
    }

    pub fn position(&self, t: f64) -> Vector3<f64> {
        self.p0 + self.offset(t + self.phase)
    }

    pub fn velocity(&self, t: f64) -> Vector3<f64> {
        self.path_frame * self.path_velocity(t + self.phase)
    }

    fn path_velocity(&self, tau: f64) -> Vector3<f64> {
        match self.motion {
            GateMotion::Stationary => Vector3::zeros(),
            // linear velocities are given in world axes
            GateMotion::Linear { velocity } => self.path_frame.inverse() * velocity,
            GateMotion::Planar { d, omega } => {
                let a = omega * tau;
                d * omega * Vector3::new(-a.sin(), -(2.0 * a).sin(), 0.0)
            }
            GateMotion::Knot { d, omega } => {
                let a = omega * tau;
                let (s2, c2) = (2.0 * a).sin_cos();
                let (s3, c3) = (3.0 * a).sin_cos();
                d * omega
                    * Vector3::new(
                        3.0 * c3 * (1.0 + 0.5 * c2) - s3 * s2,
                        3.0 * c3 * s2 + 2.0 * s3 * c2,
                        4.0 * (4.0 * a).cos(),
                    )
            }
        }
    }

    /// Period of the path, if it repeats.
    pub fn period(&self) -> Option<f64> {
        match self.motion {
            GateMotion::Planar { omega, .. } | GateMotion::Knot { omega, .. } => {
                Some(2.0 * PI / omega)
            }
            _ => None,
        }
    }
}

pub fn gate_position(traj: &GateTrajectory, t: f64) -> Vector3<f64> {
    traj.position(t)
}

pub fn gate_velocity(traj: &GateTrajectory, t: f64) -> Vector3<f64> {
    traj.velocity(t)
}

/// Crossing of the gate plane between two consecutive states.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GatePass {
    /// Distance from the crossing point to the gate center, m.
    pub d_center: f64,
    /// Interpolated crossing time, s.
    pub t_gate: f64,
}

impl GatePass {
    pub fn success(&self, radius: f64) -> bool {
        self.d_center < radius
    }
}

/// Detect a crossing of the (moving) gate plane between `prev` at `t_prev`
/// and `curr` at `t_curr`, in the direction of the plane normal.
pub fn check_gate_pass(
    prev: &QuadrotorState,
    t_prev: f64,
    curr: &QuadrotorState,
    t_curr: f64,
    traj: &GateTrajectory,
) -> Option<GatePass> {
    let s_prev = traj.normal.dot(&(prev.p - traj.position(t_prev)));
    let s_curr = traj.normal.dot(&(curr.p - traj.position(t_curr)));
    if !(s_prev < 0.0 && s_curr >= 0.0) {
        return None;
    }
    let alpha = s_prev / (s_prev - s_curr);
    let t_gate = t_prev + alpha * (t_curr - t_prev);
    let p = prev.p + alpha * (curr.p - prev.p);
    Some(GatePass {
        d_center: (p - traj.position(t_gate)).norm(),
        t_gate,
    })
}

/// Gate motion families used in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MotionKind {
    Stationary,
    LinearSlow,
    LinearFast,
    Planar,
    Knot,
}

impl MotionKind {
    pub const ALL: [MotionKind; 5] = [
        MotionKind::Stationary,
        MotionKind::LinearSlow,
        MotionKind::LinearFast,
        MotionKind::Planar,
        MotionKind::Knot,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            MotionKind::Stationary => "stationary",
            MotionKind::LinearSlow => "linear-slow",
            MotionKind::LinearFast => "linear-fast",
            MotionKind::Planar => "planar",
            MotionKind::Knot => "knot",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|m| m.name() == s)
    }
}

impl std::fmt::Display for MotionKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Direction of linear gate motion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LinearDirection {
    /// Horizontal, perpendicular to the initial LOS, side drawn per run.
    Perpendicular,
    /// Fixed world-frame direction.
    Fixed([f64; 3]),
}

const PATH_YAW_DEG: f64 = 0.0;

/// Motion parameters shared by all scenarios of an experiment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MotionParams {
    pub linear_slow_speed: f64,
    pub linear_fast_speed: f64,
    pub linear_direction: LinearDirection,
    pub d_plan: f64,
    pub omega_plan: f64,
    pub d_knot: f64,
    pub omega_knot: f64,
    /// Yaw of the planar and knot path axes from the initial LOS, degrees.
    pub path_yaw_deg: f64,
}

impl Default for MotionParams {
    fn default() -> Self {
        Self {
            linear_slow_speed: 2.5,
            linear_fast_speed: 5.0,
            linear_direction: LinearDirection::Perpendicular,
            d_plan: 2.0,
            // planar top speed 3.1 m/s at d = 2
            omega_plan: 1.24,
            d_knot: 1.0,
            // knot top speed 1.2 m/s and acceleration 0.9 m/s² at d = 1
            omega_knot: 0.1993,
            path_yaw_deg: PATH_YAW_DEG,
        }
    }
}

/// Ranges the initial conditions are drawn from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InitialConditions {
    pub distance_min: f64,
    pub distance_max: f64,
    pub speed: f64,
    /// Bound on the angle between initial velocity and LOS, degrees.
    pub offset_angle_deg: f64,
}

impl Default for InitialConditions {
    fn default() -> Self {
        Self {
            distance_min: 20.0,
            distance_max: 30.0,
            speed: 10.0,
            offset_angle_deg: 10.0,
        }
    }
}

impl InitialConditions {
    pub fn validate(&self) -> Result<()> {
        if !(self.distance_min > 0.0 && self.distance_max >= self.distance_min) {
            return Err(Error::Config(
                "initial distance range must be positive and ordered".into(),
            ));
        }
        if !(self.speed >= 0.0 && self.offset_angle_deg >= 0.0 && self.offset_angle_deg < 90.0) {
            return Err(Error::Config(
                "initial speed and offset angle out of range".into(),
            ));
        }
        Ok(())
    }
}

/// One sampled engagement.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub kind: MotionKind,
    pub gate: GateTrajectory,
    pub initial_distance: f64,
    pub initial_speed: f64,
    /// Angle between initial velocity and LOS, rad (about world z).
    pub velocity_offset_angle: f64,
    pub seed: u64,
}

/// Vehicle starting altitude; there is no ground, it only keeps logs readable.
const START_ALTITUDE: f64 = 10.0;

impl Scenario {
    /// Draw a scenario deterministically from `seed`.
    ///
    /// The vehicle starts level above the origin, the gate starts at the
    /// sampled distance along +x at the same altitude, and periodic motions
    /// start at a random point of their path.
    pub fn sample(
        kind: MotionKind,
        radius: f64,
        motion: &MotionParams,
        init: &InitialConditions,
        seed: u64,
    ) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let distance = if init.distance_max > init.distance_min {
            rng.random_range(init.distance_min..init.distance_max)
        } else {
            init.distance_min
        };
        let max_off = init.offset_angle_deg.to_radians();
        let offset = if max_off > 0.0 {
            rng.random_range(-max_off..max_off)
        } else {
            0.0
        };
        let side = if rng.random_bool(0.5) { 1.0 } else { -1.0 };
        let u_phase: f64 = rng.random();

        let start = Vector3::new(distance, 0.0, START_ALTITUDE);
        let los0 = Vector3::x();
        let (gate_motion, phase) = match kind {
            MotionKind::Stationary => (GateMotion::Stationary, 0.0),
            MotionKind::LinearSlow | MotionKind::LinearFast => {
                let speed = if kind == MotionKind::LinearSlow {
                    motion.linear_slow_speed
                } else {
                    motion.linear_fast_speed
                };
                let dir = match motion.linear_direction {
                    LinearDirection::Perpendicular => Vector3::z().cross(&los0) * side,
                    LinearDirection::Fixed(d) => Vector3::from(d).normalize(),
                };
                (
                    GateMotion::Linear {
                        velocity: dir * speed,
                    },
                    0.0,
                )
            }
            MotionKind::Planar => {
                let m = GateMotion::Planar {
                    d: motion.d_plan,
                    omega: motion.omega_plan,
                };
                (m, u_phase * 2.0 * PI / motion.omega_plan)
            }
            MotionKind::Knot => {
                let m = GateMotion::Knot {
                    d: motion.d_knot,
                    omega: motion.omega_knot,
                };
                (m, u_phase * 2.0 * PI / motion.omega_knot)
            }
        };
        let path_frame =
            Rotation3::from_axis_angle(&Vector3::z_axis(), motion.path_yaw_deg.to_radians());
        let mut gate = GateTrajectory {
            motion: gate_motion,
            p0: start,
            radius,
            phase,
            normal: los0,
            path_frame,
        };
        // shift the path so the gate sits at `start` at t = 0
        gate.p0 = start - (gate.position(0.0) - gate.p0);
        Self {
            kind,
            gate,
            initial_distance: distance,
            initial_speed: init.speed,
            velocity_offset_angle: offset,
            seed,
        }
    }

    /// Level vehicle with the camera on the gate and the sampled velocity.
    pub fn initial_state(&self) -> QuadrotorState {
        let p = Vector3::new(0.0, 0.0, START_ALTITUDE);
        let to_gate = self.gate.position(0.0) - p;
        let yaw = to_gate.y.atan2(to_gate.x);
        let heading =
            UnitQuaternion::from_axis_angle(&Vector3::z_axis(), self.velocity_offset_angle);
        QuadrotorState {
            p,
            q: UnitQuaternion::from_axis_angle(&Vector3::z_axis(), yaw),
            v: heading * to_gate.normalize() * self.initial_speed,
            omega: Vector3::zeros(),
        }
    }
}

/// How a run ended.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    /// Crossed the plane on the gate rim.
    Collision,
    /// Crossed the plane outside the rim.
    Missed,
    /// The gate left the field of view for too long.
    GateLost,
    Timeout,
    Diverged,
}

impl Outcome {
    pub fn code(&self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Collision => "collision",
            Outcome::Missed => "missed",
            Outcome::GateLost => "gate_lost",
            Outcome::Timeout => "timeout",
            Outcome::Diverged => "diverged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Outcome::Success,
            Outcome::Collision,
            Outcome::Missed,
            Outcome::GateLost,
            Outcome::Timeout,
            Outcome::Diverged,
        ]
        .into_iter()
        .find(|o| o.code() == s)
    }

    /// Classify a plane crossing against the gate radius and rim width.
    pub fn of_pass(pass: &GatePass, radius: f64, rim_width: f64) -> Self {
        if pass.d_center < radius {
            Outcome::Success
        } else if pass.d_center < radius + rim_width {
            Outcome::Collision
        } else {
            Outcome::Missed
        }
    }
}

/// One control tick of a run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRow {
    pub t: f64,
    pub state: QuadrotorState,
    pub gate: Vector3<f64>,
    pub f_th: f64,
    pub q_c: UnitQuaternion<f64>,
    /// Angle between the commanded optical axis and the LOS it was computed from, rad.
    pub gamma: f64,
    pub lambda_dot: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub success: bool,
    pub outcome: Outcome,
    /// Crossing time, or the time the run stopped if it never crossed.
    pub t_gate: f64,
    /// Miss distance at the crossing, or the range to the gate when the run stopped.
    pub d_center: f64,
    pub top_speed: f64,
    pub log: Vec<LogRow>,
}

pub const TRAJECTORY_HEADER: [&str; 17] = [
    "t",
    "px",
    "py",
    "pz",
    "qw",
    "qx",
    "qy",
    "qz",
    "vx",
    "vy",
    "vz",
    "gate_x",
    "gate_y",
    "gate_z",
    "f_th",
    "gamma",
    "lambda_dot",
];

/// Write a run log as CSV, one row per control tick.
pub fn write_trajectory_csv<W: std::io::Write>(log: &[LogRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRAJECTORY_HEADER)?;
    for r in log {
        let q = r.state.q.quaternion();
        let fields = [
            r.t,
            r.state.p.x,
            r.state.p.y,
            r.state.p.z,
            q.w,
            q.i,
            q.j,
            q.k,
            r.state.v.x,
            r.state.v.y,
            r.state.v.z,
            r.gate.x,
            r.gate.y,
            r.gate.z,
            r.f_th,
            r.gamma,
            r.lambda_dot,
        ];
        w.write_record(fields.iter().map(|x| x.to_string()))?;
    }
    w.flush()?;
    Ok(())
}
