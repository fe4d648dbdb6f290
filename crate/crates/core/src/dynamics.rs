//! Quadrotor rigid-body model driven by thrust and attitude commands.
//!
//! The attitude loop maps the quaternion error to a body-rate command, the
//! rate loop is a first-order lag with time constant `tau_omega`, and the
//! airframe sees isotropic quadratic drag against the air-relative velocity.

use nalgebra::{Quaternion, UnitQuaternion, Vector3};

use crate::control::{ControlCommand, GRAVITY};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadrotorState {
    /// Position in the world frame, m.
    pub p: Vector3<f64>,
    /// Body-to-world attitude.
    pub q: UnitQuaternion<f64>,
    /// Velocity in the world frame, m/s.
    pub v: Vector3<f64>,
    /// Body rates, rad/s.
    pub omega: Vector3<f64>,
}

impl QuadrotorState {
    pub fn at_rest(p: Vector3<f64>) -> Self {
        Self {
            p,
            q: UnitQuaternion::identity(),
            v: Vector3::zeros(),
            omega: Vector3::zeros(),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.p
            .iter()
            .chain(self.v.iter())
            .chain(self.omega.iter())
            .all(|x| x.is_finite())
            && self.q.coords.iter().all(|x| x.is_finite())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleParams {
    /// kg
    pub mass: f64,
    /// Rate-loop time constant, s.
    pub tau_omega: f64,
    /// Attitude-loop time constant, s.
    pub tau_att: f64,
    /// Thrust limit, N.
    pub f_th_max_newtons: f64,
    /// Quadratic drag coefficient, kg/m.
    pub drag_coeff: f64,
    pub gravity: Vector3<f64>,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            mass: 2.0,
            tau_omega: 0.05,
            tau_att: 0.15,
            f_th_max_newtons: 60.0,
            drag_coeff: 0.02,
            gravity: Vector3::new(0.0, 0.0, -GRAVITY),
        }
    }
}

impl VehicleParams {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("mass", self.mass),
            ("tau_omega", self.tau_omega),
            ("tau_att", self.tau_att),
        ];
        for (name, x) in named {
            if !(x > 0.0 && x.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "{name} must be > 0, got {x}"
                )));
            }
        }
        if !(self.f_th_max_newtons >= 0.0) || !(self.drag_coeff >= 0.0) {
            return Err(Error::InvalidArgument(
                "thrust limit and drag must be non-negative".into(),
            ));
        }
        Ok(())
    }

    /// Thrust ceiling divided by mass, m/s².
    pub fn max_specific_thrust(&self) -> f64 {
        self.f_th_max_newtons / self.mass
    }
}

/// Constant ambient wind.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct WindField {
    pub v_wind: Vector3<f64>,
}

/// Time derivative of [`QuadrotorState`]; the quaternion part is not unit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDerivative {
    pub p_dot: Vector3<f64>,
    pub q_dot: Quaternion<f64>,
    pub v_dot: Vector3<f64>,
    pub omega_dot: Vector3<f64>,
}

/// Body-rate command from the quaternion error `q⁻¹ · q_c`.
pub fn attitude_rate_command(
    q: &UnitQuaternion<f64>,
    q_c: &UnitQuaternion<f64>,
    tau_att: f64,
) -> Vector3<f64> {
    let q_e = q.inverse() * q_c;
    let sign = if q_e.w < 0.0 { -1.0 } else { 1.0 };
    q_e.imag() * (2.0 / tau_att * sign)
}

/// Aerodynamic force in the body frame, N.
pub fn aero_force_body(
    q: &UnitQuaternion<f64>,
    v: &Vector3<f64>,
    params: &VehicleParams,
    wind: &WindField,
) -> Vector3<f64> {
    let v_air = q.inverse_transform_vector(&(v - wind.v_wind));
    v_air * (params.drag_coeff * v_air.norm())
}

pub fn dynamics_derivative(
    x: &QuadrotorState,
    u: &ControlCommand,
    params: &VehicleParams,
    wind: &WindField,
) -> StateDerivative {
    raw_derivative(&RawState::from(x), u, params, wind)
}

/// One RK4 step with thrust clamped to the vehicle limit, followed by
/// quaternion renormalization.
pub fn integrate_step(
    x: &QuadrotorState,
    u: &ControlCommand,
    params: &VehicleParams,
    wind: &WindField,
    dt: f64,
) -> Result<QuadrotorState> {
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    let mut u = *u;
    u.f_th = u.f_th.clamp(0.0, params.max_specific_thrust());

    let s0 = RawState::from(x);
    let k1 = raw_derivative(&s0, &u, params, wind);
    let k2 = raw_derivative(&s0.advance(&k1, 0.5 * dt), &u, params, wind);
    let k3 = raw_derivative(&s0.advance(&k2, 0.5 * dt), &u, params, wind);
    let k4 = raw_derivative(&s0.advance(&k3, dt), &u, params, wind);
    let weighted = StateDerivative {
        p_dot: (k1.p_dot + 2.0 * k2.p_dot + 2.0 * k3.p_dot + k4.p_dot) / 6.0,
        q_dot: (k1.q_dot + k2.q_dot * 2.0 + k3.q_dot * 2.0 + k4.q_dot) / 6.0,
        v_dot: (k1.v_dot + 2.0 * k2.v_dot + 2.0 * k3.v_dot + k4.v_dot) / 6.0,
        omega_dot: (k1.omega_dot + 2.0 * k2.omega_dot + 2.0 * k3.omega_dot + k4.omega_dot) / 6.0,
    };
    let next = s0.advance(&weighted, dt);
    let norm = next.q.norm();
    if !norm.is_finite() || norm == 0.0 {
        return Err(Error::Diverged);
    }
    let out = QuadrotorState {
        p: next.p,
        q: UnitQuaternion::new_unchecked(next.q / norm),
        v: next.v,
        omega: next.omega,
    };
    if !out.is_finite() {
        return Err(Error::Diverged);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy)]
struct RawState {
    p: Vector3<f64>,
    q: Quaternion<f64>,
    v: Vector3<f64>,
    omega: Vector3<f64>,
}

impl From<&QuadrotorState> for RawState {
    fn from(x: &QuadrotorState) -> Self {
        Self {
            p: x.p,
            q: *x.q.quaternion(),
            v: x.v,
            omega: x.omega,
        }
    }
}

impl RawState {
    fn advance(&self, d: &StateDerivative, h: f64) -> Self {
        Self {
            p: self.p + d.p_dot * h,
            q: self.q + d.q_dot * h,
            v: self.v + d.v_dot * h,
            omega: self.omega + d.omega_dot * h,
        }
    }
}

fn raw_derivative(
    s: &RawState,
    u: &ControlCommand,
    params: &VehicleParams,
    wind: &WindField,
) -> StateDerivative {
    // RK4 stages drift off the unit sphere; rotate with the normalized attitude
    let q = UnitQuaternion::new_normalize(s.q);
    let omega_c = attitude_rate_command(&q, &u.q_c, params.tau_att);
    let q_dot = s.q * Quaternion::from_imag(s.omega) * 0.5;
    let f_aero = aero_force_body(&q, &s.v, params, wind);
    let v_dot = q * (Vector3::z() * u.f_th - f_aero / params.mass) + params.gravity;
    StateDerivative {
        p_dot: s.v,
        q_dot,
        v_dot,
        omega_dot: (omega_c - s.omega) / params.tau_omega,
    }
}
