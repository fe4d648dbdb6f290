//! Closed-form PN-informed thrust and attitude command.
//!
//! In the PN frame the thrust must reproduce the PN normal acceleration on
//! the y and z axes; whatever thrust is left over pushes along the LOS. The
//! attitude relative to the PN frame is a pitch `phi` about y followed by a
//! roll `theta` about x, and the camera constraint caps `cos(phi) cos(theta)`
//! from below. Under those constraints the optimum has a closed form.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

use crate::error::{Error, Result};
use crate::pn::{pn_acceleration, pn_frame, Los, PnConfig};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;

/// Slack allowed when testing the demand against the feasible set.
const FEAS_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControllerConfig {
    /// Upper bound on the LOS-to-optical-axis angle, rad.
    pub gamma_bar: f64,
    /// Camera angle of view, rad.
    pub gamma_cam: f64,
    /// Mass-normalized thrust ceiling, m/s².
    pub f_th_bar: f64,
    pub pn: PnConfig,
}

impl ControllerConfig {
    pub fn validate(&self) -> Result<()> {
        self.pn.validate()?;
        if !(self.gamma_cam > 0.0 && self.gamma_cam < std::f64::consts::FRAC_PI_2) {
            return Err(Error::InvalidArgument(format!(
                "gamma_cam must lie in (0, pi/2), got {}",
                self.gamma_cam
            )));
        }
        if !(self.gamma_bar > 0.0 && self.gamma_bar <= self.gamma_cam) {
            return Err(Error::InvalidArgument(format!(
                "gamma_bar must lie in (0, gamma_cam], got {}",
                self.gamma_bar
            )));
        }
        if !(self.f_th_bar > 0.0 && self.f_th_bar.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "f_th_bar must be > 0, got {}",
                self.f_th_bar
            )));
        }
        Ok(())
    }
}

impl Default for ControllerConfig {
    fn default() -> Self {
        Self {
            gamma_bar: 21.05f64.to_radians(),
            gamma_cam: 33.5f64.to_radians(),
            f_th_bar: 30.0,
            pn: PnConfig::default(),
        }
    }
}

/// Mass-normalized thrust plus commanded body-to-world attitude.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ControlCommand {
    /// Mass-normalized collective thrust, m/s².
    pub f_th: f64,
    pub q_c: UnitQuaternion<f64>,
    /// Pitch in the PN frame, rad.
    pub phi: f64,
    /// Roll in the PN frame, rad.
    pub theta: f64,
}

impl ControlCommand {
    /// Hold an attitude with the given thrust (used before the first valid LOS).
    pub fn hold(q_c: UnitQuaternion<f64>, f_th: f64) -> Self {
        Self {
            f_th,
            q_c,
            phi: 0.0,
            theta: 0.0,
        }
    }
}

/// Gravity expressed in the PN frame. Its y component vanishes because the
/// frame's y axis is horizontal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnFrameGravity {
    pub g_pn: Vector3<f64>,
}

impl PnFrameGravity {
    pub fn from_frame(r_pn_w: &Matrix3<f64>, g_world: &Vector3<f64>) -> Self {
        let mut g_pn = r_pn_w.transpose() * g_world;
        // exactly zero by construction for vertical gravity
        if g_world.x == 0.0 && g_world.y == 0.0 {
            g_pn.y = 0.0;
        }
        Self { g_pn }
    }

    pub fn z(&self) -> f64 {
        self.g_pn.z
    }
}

/// Optimal `(f_th, phi, theta)` in the PN frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptimalControl {
    pub f_th: f64,
    pub phi: f64,
    pub theta: f64,
}

impl OptimalControl {
    /// Acceleration along the LOS produced by the thrust, `f sin(phi) cos(theta)`.
    pub fn objective(&self) -> f64 {
        self.f_th * self.phi.sin() * self.theta.cos()
    }
}

/// Solve for the thrust and PN-frame attitude that realize the normal
/// acceleration `(a_y, a_z)` while maximizing acceleration towards the gate.
pub fn solve_optimal_control(
    a_y: f64,
    a_z: f64,
    g_z: f64,
    cfg: &ControllerConfig,
) -> Result<OptimalControl> {
    // vertical force the thrust has to provide in the PN frame
    let h = a_z - g_z;
    if !(h > 0.0) {
        return Err(Error::Infeasible(format!(
            "required upward force {h} is not positive"
        )));
    }
    let f = cfg.f_th_bar.min(h / cfg.gamma_bar.cos());
    let lateral_sq = f * f - a_y * a_y;
    if a_y.abs() > f * (1.0 + FEAS_TOL) || lateral_sq < h * h * (1.0 - FEAS_TOL) - FEAS_TOL {
        return Err(Error::Infeasible(format!(
            "normal demand ({a_y}, {a_z}) exceeds available thrust {f}"
        )));
    }
    let theta = (-a_y / f).clamp(-1.0, 1.0).asin();
    let phi = if lateral_sq <= 0.0 {
        0.0
    } else {
        (h / lateral_sq.sqrt()).clamp(-1.0, 1.0).acos()
    };
    Ok(OptimalControl {
        f_th: f,
        phi,
        theta,
    })
}

/// Largest `s ∈ [0, 1]` such that the scaled demand `s·(a_y, a_z)` is
/// feasible, or `None` if even zero normal acceleration is not.
///
/// The feasible set in `(a_y, h)` is the intersection of the cone
/// `|a_y| ≤ h tan(gamma_bar)` with the disc `a_y² + h² ≤ f_th_bar²`, so it is
/// convex and a ray from the origin leaves it once.
pub fn feasible_scale(a_y: f64, a_z: f64, g_z: f64, cfg: &ControllerConfig) -> Option<f64> {
    let f_bar = cfg.f_th_bar;
    let h0 = -g_z;
    if !(h0 > 0.0) || h0 > f_bar {
        return None;
    }
    let t = cfg.gamma_bar.tan();
    let mut s: f64 = 1.0;
    let cone = a_y.abs() - a_z * t;
    if cone > 0.0 {
        s = s.min(h0 * t / cone);
    }
    let a_sq = a_y * a_y + a_z * a_z;
    if a_sq > 0.0 {
        let b = a_z * g_z;
        let disc = b * b - a_sq * (g_z * g_z - f_bar * f_bar);
        s = s.min((b + disc.max(0.0).sqrt()) / a_sq);
    }
    if a_z < 0.0 {
        s = s.min(g_z / a_z);
    }
    Some((s * (1.0 - 1e-9)).max(0.0))
}

/// Angle between the LOS and the optical axis for PN-frame pitch and roll.
pub fn fov_angle(phi: f64, theta: f64) -> f64 {
    (phi.cos() * theta.cos()).clamp(-1.0, 1.0).acos()
}

/// Compose `R_B^W = R_PN^W · R_y(phi) · R_x(theta)` into a command.
pub fn assemble_command(sol: &OptimalControl, r_pn_w: &Matrix3<f64>) -> ControlCommand {
    let r_b_pn = Rotation3::from_axis_angle(&Vector3::y_axis(), sol.phi)
        * Rotation3::from_axis_angle(&Vector3::x_axis(), sol.theta);
    let r_b_w = Rotation3::from_matrix_unchecked(*r_pn_w) * r_b_pn;
    let q = UnitQuaternion::from_rotation_matrix(&r_b_w);
    ControlCommand {
        f_th: sol.f_th,
        q_c: UnitQuaternion::new_normalize(q.into_inner()),
        phi: sol.phi,
        theta: sol.theta,
    }
}

/// Angle between the body x axis of `q` (the camera's optical axis) and `l`.
pub fn optical_axis_angle(q: &UnitQuaternion<f64>, l: &Vector3<f64>) -> f64 {
    let axis = q * Vector3::x();
    (axis.dot(l) / l.norm()).clamp(-1.0, 1.0).acos()
}

/// Full controller tick: PN frame, PN acceleration, closed-form optimum.
///
/// A demand outside the feasible set is shrunk radially onto its boundary
/// and solved again.
pub fn control_step(
    los: &Los,
    g_world: &Vector3<f64>,
    cfg: &ControllerConfig,
) -> Result<ControlCommand> {
    let r_pn_w = pn_frame(&los.l)?;
    let g = PnFrameGravity::from_frame(&r_pn_w, g_world);
    let a_n = r_pn_w.transpose() * pn_acceleration(&cfg.pn, los);
    let sol = match solve_optimal_control(a_n.y, a_n.z, g.z(), cfg) {
        Ok(sol) => sol,
        Err(Error::Infeasible(_)) => {
            let s = feasible_scale(a_n.y, a_n.z, g.z(), cfg).ok_or_else(|| {
                Error::Infeasible("gravity alone exceeds the thrust and FOV bounds".into())
            })?;
            solve_optimal_control(s * a_n.y, s * a_n.z, g.z(), cfg)?
        }
        Err(e) => return Err(e),
    };
    Ok(assemble_command(&sol, &r_pn_w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn cfg(gamma_deg: f64, f_bar: f64) -> ControllerConfig {
        ControllerConfig {
            gamma_bar: gamma_deg.to_radians(),
            gamma_cam: 33.5f64.to_radians().max(gamma_deg.to_radians()),
            f_th_bar: f_bar,
            pn: PnConfig::default(),
        }
    }

    fn residual(sol: &OptimalControl, a_y: f64, a_z: f64, g_z: f64) -> f64 {
        let ry = -sol.f_th * sol.theta.sin() - a_y;
        let rz = sol.f_th * sol.phi.cos() * sol.theta.cos() + g_z - a_z;
        ry.abs().max(rz.abs())
    }

    #[test]
    fn zero_demand_tilts_to_the_fov_bound() {
        let c = cfg(21.05, 30.0);
        let sol = solve_optimal_control(0.0, 0.0, -GRAVITY, &c).unwrap();
        assert_abs_diff_eq!(
            sol.f_th,
            9.81 / 21.05f64.to_radians().cos(),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(sol.f_th, 10.512, epsilon = 1e-3);
        assert_abs_diff_eq!(sol.phi, 21.05f64.to_radians(), epsilon = 1e-9);
        assert_eq!(sol.theta, 0.0);
    }

    #[test]
    fn thrust_ceiling_becomes_active() {
        let c = cfg(21.05, 30.0);
        // 34.81 / cos(21.05°) ≈ 37.3 > 30, but 34.81 > 30 also exceeds the
        // ceiling outright, so no pitch can deliver it
        assert!(matches!(
            solve_optimal_control(0.0, 25.0, -GRAVITY, &c),
            Err(Error::Infeasible(_))
        ));
        let s = feasible_scale(0.0, 25.0, -GRAVITY, &c).unwrap();
        let sol = solve_optimal_control(0.0, s * 25.0, -GRAVITY, &c).unwrap();
        assert_abs_diff_eq!(sol.f_th, 30.0, epsilon = 1e-12);

        // 29.81 / cos(21.05°) ≈ 31.9 > 30 with a real pitch left over
        let sol = solve_optimal_control(0.0, 20.0, -GRAVITY, &c).unwrap();
        assert_eq!(sol.f_th, 30.0);
        assert_abs_diff_eq!(sol.phi, (29.81f64 / 30.0).acos(), epsilon = 1e-12);
        assert!(residual(&sol, 0.0, 20.0, -GRAVITY) < 1e-9);
        assert!(fov_angle(sol.phi, sol.theta) <= c.gamma_bar);
    }

    #[test]
    fn lateral_demand_rolls() {
        // |a_y| must stay below h tan(gamma_bar) ≈ 3.77 for this demand to be feasible
        let c = cfg(21.05, 30.0);
        let err = solve_optimal_control(5.0, 0.0, -GRAVITY, &c).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));

        let sol = solve_optimal_control(3.0, 0.0, -GRAVITY, &c).unwrap();
        assert_abs_diff_eq!(sol.f_th, 10.512, epsilon = 1e-3);
        assert_abs_diff_eq!(sol.theta, (-3.0 / sol.f_th).asin(), epsilon = 1e-12);
        assert!(residual(&sol, 3.0, 0.0, -GRAVITY) < 1e-9);
    }

    #[test]
    fn roll_formula_at_wide_bound() {
        // at gamma_bar = 30° the (5, 0) demand is inside the cone
        let c = cfg(30.0, 30.0);
        let sol = solve_optimal_control(5.0, 0.0, -GRAVITY, &c).unwrap();
        assert_abs_diff_eq!(sol.f_th, 9.81 / 30f64.to_radians().cos(), epsilon = 1e-12);
        assert_abs_diff_eq!(
            sol.theta.to_degrees(),
            (-5.0 / sol.f_th).asin().to_degrees(),
            epsilon = 1e-9
        );
        assert!(residual(&sol, 5.0, 0.0, -GRAVITY) < 1e-9);
    }

    #[test]
    fn non_positive_upward_force_is_infeasible() {
        let c = cfg(21.05, 30.0);
        assert!(matches!(
            solve_optimal_control(0.0, -10.0, -GRAVITY, &c),
            Err(Error::Infeasible(_))
        ));
    }

    #[test]
    fn fov_angle_examples() {
        assert_eq!(fov_angle(0.0, 0.0), 0.0);
        let g = 21.05f64.to_radians();
        assert_abs_diff_eq!(fov_angle(g, 0.0), g, epsilon = 1e-12);
        let a = fov_angle(30f64.to_radians(), 30f64.to_radians());
        assert_abs_diff_eq!(a, 0.75f64.acos(), epsilon = 1e-12);
        assert_abs_diff_eq!(a.to_degrees(), 41.41, epsilon = 1e-2);
    }

    #[test]
    fn assemble_identity() {
        let sol = OptimalControl {
            f_th: 9.81,
            phi: 0.0,
            theta: 0.0,
        };
        let cmd = assemble_command(&sol, &Matrix3::identity());
        assert_abs_diff_eq!(cmd.q_c.angle(), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn assemble_pitch_moves_optical_axis() {
        let g = 21.05f64.to_radians();
        let sol = OptimalControl {
            f_th: 10.0,
            phi: g,
            theta: 0.0,
        };
        let cmd = assemble_command(&sol, &Matrix3::identity());
        assert_abs_diff_eq!(
            optical_axis_angle(&cmd.q_c, &Vector3::x()),
            g,
            epsilon = 1e-9
        );
        // pitching towards the LOS tilts the thrust forward
        let thrust = cmd.q_c * Vector3::z();
        assert!(thrust.x > 0.0);
    }

    #[test]
    fn roll_leaves_optical_axis_on_the_los() {
        // rotation about the optical axis: the true camera angle is phi alone
        let sol = OptimalControl {
            f_th: 10.0,
            phi: 0.2,
            theta: 0.3,
        };
        let cmd = assemble_command(&sol, &Matrix3::identity());
        assert_abs_diff_eq!(
            optical_axis_angle(&cmd.q_c, &Vector3::x()),
            0.2,
            epsilon = 1e-12
        );
        assert!(optical_axis_angle(&cmd.q_c, &Vector3::x()) <= fov_angle(0.2, 0.3));
    }

    #[test]
    fn control_step_with_still_los_matches_zero_demand() {
        let c = ControllerConfig::default();
        let los = Los::initial(Vector3::x(), 0.0).unwrap();
        let cmd = control_step(&los, &Vector3::new(0.0, 0.0, -GRAVITY), &c).unwrap();
        let sol = solve_optimal_control(0.0, 0.0, -GRAVITY, &c).unwrap();
        assert_abs_diff_eq!(cmd.f_th, sol.f_th, epsilon = 1e-12);
        assert_abs_diff_eq!(cmd.phi, sol.phi, epsilon = 1e-12);
        assert_eq!(cmd.theta, 0.0);
    }

    #[test]
    fn control_step_saturates_for_fast_los() {
        let c = ControllerConfig::default();
        let g = Vector3::new(0.0, 0.0, -GRAVITY);
        // LOS turning upward: demand along +z grows with the rate
        let mut hit_ceiling = false;
        for i in 1..200 {
            let ang = 1e-3 * i as f64;
            let l_prev = Vector3::x();
            let l = Vector3::new(ang.cos(), 0.0, ang.sin());
            let los = Los::new(l, l_prev, 30.0, 0.0).unwrap();
            let cmd = control_step(&los, &g, &c).unwrap();
            assert!(cmd.f_th <= c.f_th_bar);
            if cmd.f_th == c.f_th_bar {
                hit_ceiling = true;
                break;
            }
        }
        assert!(hit_ceiling);
    }

    #[test]
    fn control_step_rejects_vertical_los() {
        let los = Los::initial(Vector3::z(), 0.0).unwrap();
        let r = control_step(
            &los,
            &Vector3::new(0.0, 0.0, -GRAVITY),
            &ControllerConfig::default(),
        );
        assert!(matches!(r, Err(Error::DegenerateFrame(_))));
    }

    #[test]
    fn gravity_has_no_pn_y_component() {
        let l = Vector3::new(0.3, -0.5, 0.4).normalize();
        let r = pn_frame(&l).unwrap();
        let g = PnFrameGravity::from_frame(&r, &Vector3::new(0.0, 0.0, -GRAVITY));
        assert_eq!(g.g_pn.y, 0.0);
        assert_abs_diff_eq!(g.g_pn.norm(), GRAVITY, epsilon = 1e-9);
    }

    fn unit_vec() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -0.6f64..0.6)
            .prop_filter("non-zero", |(x, y, _)| x * x + y * y > 1e-2)
            .prop_map(|(x, y, z)| Vector3::new(x, y, z).normalize())
    }

    proptest! {
        #[test]
        fn scaled_demand_is_feasible(
            a_y in -40.0f64..40.0,
            a_z in -40.0f64..40.0,
            g_z in -9.81f64..-5.0,
            gamma in 5.0f64..30.0,
            f_bar in 15.0f64..40.0,
        ) {
            let c = cfg(gamma, f_bar);
            let s = feasible_scale(a_y, a_z, g_z, &c).unwrap();
            prop_assert!((0.0..=1.0).contains(&s));
            let sol = solve_optimal_control(s * a_y, s * a_z, g_z, &c);
            prop_assert!(sol.is_ok(), "{sol:?}");
            let sol = sol.unwrap();
            prop_assert!(residual(&sol, s * a_y, s * a_z, g_z) < 1e-6);
            if solve_optimal_control(a_y, a_z, g_z, &c).is_ok() {
                prop_assert!(s > 1.0 - 1e-6);
            }
        }

        #[test]
        fn command_stays_inside_fov(
            l in unit_vec(),
            l_prev in unit_vec(),
            gamma in 5.0f64..30.0,
            k in 0.3f64..3.0,
        ) {
            let mut c = cfg(gamma, 30.0);
            c.pn.k_pn = k;
            let los = Los::new(l, l_prev, 30.0, 0.0).unwrap();
            let cmd = control_step(&los, &Vector3::new(0.0, 0.0, -GRAVITY), &c).unwrap();
            prop_assert!((cmd.q_c.quaternion().norm() - 1.0).abs() < 1e-9);
            prop_assert!(fov_angle(cmd.phi, cmd.theta) <= c.gamma_bar + 1e-9);
            prop_assert!(optical_axis_angle(&cmd.q_c, &l) <= c.gamma_bar + 1e-6);
            prop_assert!(cmd.f_th >= 0.0 && cmd.f_th <= c.f_th_bar);
        }

        #[test]
        fn wider_bound_never_slows_the_approach(
            a_y in -3.0f64..3.0,
            a_z in -3.0f64..10.0,
            g1 in 5.0f64..30.0,
            g2 in 5.0f64..30.0,
        ) {
            let (lo, hi) = if g1 < g2 { (g1, g2) } else { (g2, g1) };
            let narrow = solve_optimal_control(a_y, a_z, -GRAVITY, &cfg(lo, 30.0));
            let wide = solve_optimal_control(a_y, a_z, -GRAVITY, &cfg(hi, 30.0));
            if let Ok(n) = narrow {
                let w = wide.unwrap();
                prop_assert!(w.objective() >= n.objective() - 1e-9);
            }
        }
    }
}
