//! Line-of-sight geometry and the velocity-free proportional navigation law.
//!
//! The LOS rate is taken from two consecutive unit LOS estimates rather than
//! from an angular-velocity measurement, so nothing here needs the relative
//! velocity between vehicle and gate. [`PnConfig::v_rel_bar`] is a fixed
//! overestimate of the relative speed that stands in for it.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Tolerance on unit-norm inputs.
pub const UNIT_TOL: f64 = 1e-6;
/// Below this norm of `l × l_prev` the LOS is treated as non-rotating.
pub const EPS_AXIS: f64 = 1e-8;
/// Below this norm of `e_z × l` the PN frame is undefined.
pub const EPS_VERT: f64 = 1e-3;

fn check_unit(v: &Vector3<f64>, name: &str) -> Result<()> {
    let n = v.norm();
    if !n.is_finite() || (n - 1.0).abs() > UNIT_TOL {
        return Err(Error::InvalidArgument(format!(
            "{name} must be unit norm, got {n}"
        )));
    }
    Ok(())
}

/// One LOS sample together with the rotation since the previous tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Los {
    pub l: Vector3<f64>,
    pub l_prev: Vector3<f64>,
    /// LOS rate in rad/s.
    pub rate: f64,
    /// `l × l_prev`, not normalized.
    pub axis: Vector3<f64>,
    pub t: f64,
}

impl Los {
    pub fn new(l: Vector3<f64>, l_prev: Vector3<f64>, f_est: f64, t: f64) -> Result<Self> {
        let rate = los_rate(&l, &l_prev, f_est)?;
        Ok(Self {
            l,
            l_prev,
            rate,
            axis: los_rotation_axis(&l, &l_prev),
            t,
        })
    }

    /// First sample of a stream: no previous direction, zero rate.
    pub fn initial(l: Vector3<f64>, t: f64) -> Result<Self> {
        check_unit(&l, "l")?;
        Ok(Self {
            l,
            l_prev: l,
            rate: 0.0,
            axis: Vector3::zeros(),
            t,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PnConfig {
    /// Navigation constant.
    pub k_pn: f64,
    /// Fixed overestimate of the relative speed, m/s.
    pub v_rel_bar: f64,
}

impl PnConfig {
    pub fn new(k_pn: f64, v_rel_bar: f64) -> Result<Self> {
        let cfg = Self { k_pn, v_rel_bar };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.k_pn > 0.0 && self.k_pn.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "k_pn must be > 0, got {}",
                self.k_pn
            )));
        }
        if !(self.v_rel_bar > 0.0 && self.v_rel_bar.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "v_rel_bar must be > 0, got {}",
                self.v_rel_bar
            )));
        }
        Ok(())
    }

    /// Lumped gain `k_v = k_pn * v_rel_bar`.
    pub fn k_v(&self) -> f64 {
        self.k_pn * self.v_rel_bar
    }
}

impl Default for PnConfig {
    fn default() -> Self {
        Self {
            k_pn: 2.10,
            v_rel_bar: 15.0,
        }
    }
}

/// LOS rate from two consecutive unit LOS samples taken `1 / f_est` apart.
pub fn los_rate(l: &Vector3<f64>, l_prev: &Vector3<f64>, f_est: f64) -> Result<f64> {
    check_unit(l, "l")?;
    check_unit(l_prev, "l_prev")?;
    if !(f_est > 0.0 && f_est.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "f_est must be > 0, got {f_est}"
        )));
    }
    Ok(f_est * l.dot(l_prev).clamp(-1.0, 1.0).acos())
}

/// Rotation axis `l × l_prev`; its norm is the sine of the angle swept.
pub fn los_rotation_axis(l: &Vector3<f64>, l_prev: &Vector3<f64>) -> Vector3<f64> {
    l.cross(l_prev)
}

/// Commanded acceleration normal to the LOS, m/s².
///
/// Direction is `l × k̂_l`, which points the way the LOS is turning. Returns
/// zero when the LOS is not rotating (`‖k_l‖ < EPS_AXIS`).
pub fn pn_acceleration(cfg: &PnConfig, los: &Los) -> Vector3<f64> {
    let axis_norm = los.axis.norm();
    if axis_norm < EPS_AXIS || los.rate == 0.0 {
        return Vector3::zeros();
    }
    let n = los.l.cross(&(los.axis / axis_norm));
    n * (cfg.k_v() * los.rate)
}

/// PN frame `R_PN^W` with columns `[l, ŷ, l × ŷ]`, `ŷ = normalize(e_z × l)`.
pub fn pn_frame(l: &Vector3<f64>) -> Result<Matrix3<f64>> {
    check_unit(l, "l")?;
    let y = Vector3::z().cross(l);
    let yn = y.norm();
    if yn < EPS_VERT {
        return Err(Error::DegenerateFrame(yn));
    }
    let y = y / yn;
    let z = l.cross(&y);
    Ok(Matrix3::from_columns(&[*l, y, z]))
}

/// State of the planar small-angle engagement model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanarEngagementState {
    /// LOS angle, rad.
    pub lambda: f64,
    /// LOS rate, rad/s.
    pub lambda_dot: f64,
    /// Range, m.
    pub r: f64,
    /// Closing speed, m/s (range shrinks at this rate).
    pub v_rel: f64,
}

impl PlanarEngagementState {
    fn derivative(&self, u: f64, w: f64) -> (f64, f64, f64) {
        // r_dot = -v_rel, so the Coriolis-like term -2 λ̇ ṙ becomes +2 λ̇ v_rel.
        let lambda_ddot = (w - u + 2.0 * self.lambda_dot * self.v_rel) / self.r;
        (self.lambda_dot, lambda_ddot, -self.v_rel)
    }

    fn offset(&self, d: (f64, f64, f64), h: f64) -> Self {
        Self {
            lambda: self.lambda + h * d.0,
            lambda_dot: self.lambda_dot + h * d.1,
            r: self.r + h * d.2,
            v_rel: self.v_rel,
        }
    }

    /// Lyapunov candidate `½ λ̇²`.
    pub fn lyapunov(&self) -> f64 {
        0.5 * self.lambda_dot * self.lambda_dot
    }
}

/// One RK4 step of the planar LOS-angle dynamics with `u` (pursuer lateral
/// acceleration) and `w` (target lateral acceleration) held over the step.
pub fn planar_engagement_step(
    s: &PlanarEngagementState,
    u: f64,
    w: f64,
    dt: f64,
) -> Result<PlanarEngagementState> {
    if !(s.r > 0.0) {
        return Err(Error::EngagementTerminated(s.r));
    }
    if !(dt > 0.0) {
        return Err(Error::InvalidArgument(format!("dt must be > 0, got {dt}")));
    }
    // Range is linear in time, so the step ends the engagement exactly when
    // the closing distance would be consumed.
    if s.r - s.v_rel * dt <= 0.0 {
        return Err(Error::EngagementTerminated(s.r - s.v_rel * dt));
    }
    let k1 = s.derivative(u, w);
    let k2 = s.offset(k1, 0.5 * dt).derivative(u, w);
    let k3 = s.offset(k2, 0.5 * dt).derivative(u, w);
    let k4 = s.offset(k3, dt).derivative(u, w);
    let next = PlanarEngagementState {
        lambda: s.lambda + dt / 6.0 * (k1.0 + 2.0 * k2.0 + 2.0 * k3.0 + k4.0),
        lambda_dot: s.lambda_dot + dt / 6.0 * (k1.1 + 2.0 * k2.1 + 2.0 * k3.1 + k4.1),
        r: s.r + dt / 6.0 * (k1.2 + 2.0 * k2.2 + 2.0 * k3.2 + k4.2),
        v_rel: s.v_rel,
    };
    if next.r <= 0.0 {
        return Err(Error::EngagementTerminated(next.r));
    }
    Ok(next)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::FRAC_1_SQRT_2;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn los_rate_examples() {
        let ex = Vector3::x();
        assert_eq!(los_rate(&ex, &ex, 30.0).unwrap(), 0.0);
        let l = v(0.01f64.cos(), 0.01f64.sin(), 0.0);
        assert_abs_diff_eq!(los_rate(&l, &ex, 30.0).unwrap(), 0.3, epsilon = 1e-9);
        let r = los_rate(&Vector3::y(), &ex, 30.0).unwrap();
        assert_abs_diff_eq!(r, 30.0 * std::f64::consts::FRAC_PI_2, epsilon = 1e-12);
    }

    #[test]
    fn los_rate_rejects_non_unit() {
        let bad = v(1.1, 0.0, 0.0);
        assert!(matches!(
            los_rate(&bad, &Vector3::x(), 30.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(los_rate(&Vector3::x(), &Vector3::x(), 0.0).is_err());
    }

    #[test]
    fn los_rate_tolerates_rounding_past_one() {
        // dot product slightly above 1 must not produce NaN
        let l = v(1.0 + 5e-7, 0.0, 0.0);
        assert_eq!(los_rate(&l, &l, 30.0).unwrap(), 0.0);
    }

    #[test]
    fn rotation_axis_examples() {
        assert_eq!(
            los_rotation_axis(&Vector3::x(), &Vector3::y()),
            Vector3::z()
        );
        assert_eq!(
            los_rotation_axis(&Vector3::x(), &Vector3::x()),
            Vector3::zeros()
        );
        let l = v(0.01f64.cos(), 0.01f64.sin(), 0.0);
        let k = los_rotation_axis(&l, &Vector3::x());
        assert_abs_diff_eq!(k, v(0.0, 0.0, -(0.01f64.sin())), epsilon = 1e-15);
    }

    #[test]
    fn pn_acceleration_examples() {
        let cfg = PnConfig::new(2.10, 15.0).unwrap();
        let still = Los::initial(Vector3::x(), 0.0).unwrap();
        assert_eq!(pn_acceleration(&cfg, &still), Vector3::zeros());

        let los = Los {
            l: Vector3::x(),
            l_prev: Vector3::x(),
            rate: 0.2,
            axis: v(0.0, 0.0, 0.5),
            t: 0.0,
        };
        let a = pn_acceleration(&cfg, &los);
        assert_abs_diff_eq!(a.norm(), 6.3, epsilon = 1e-12);
        assert_abs_diff_eq!(a.normalize(), v(0.0, -1.0, 0.0), epsilon = 1e-15);
    }

    #[test]
    fn pn_acceleration_points_where_los_turns() {
        // gate drifting towards +y: LOS rotates from e_x towards e_y
        let l = v(0.02f64.cos(), 0.02f64.sin(), 0.0);
        let los = Los::new(l, Vector3::x(), 30.0, 0.0).unwrap();
        let a = pn_acceleration(&PnConfig::default(), &los);
        assert!(a.y > 0.0);
    }

    #[test]
    fn pn_frame_examples() {
        assert_abs_diff_eq!(
            pn_frame(&Vector3::x()).unwrap(),
            Matrix3::identity(),
            epsilon = 1e-15
        );
        let l = v(FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0);
        let r = pn_frame(&l).unwrap();
        let expected =
            Matrix3::from_columns(&[l, v(-FRAC_1_SQRT_2, FRAC_1_SQRT_2, 0.0), v(0.0, 0.0, 1.0)]);
        assert_abs_diff_eq!(r, expected, epsilon = 1e-15);
        assert!(matches!(
            pn_frame(&Vector3::z()),
            Err(Error::DegenerateFrame(_))
        ));
        assert!(matches!(
            pn_frame(&-Vector3::z()),
            Err(Error::DegenerateFrame(_))
        ));
    }

    #[test]
    fn planar_equilibrium() {
        let mut s = PlanarEngagementState {
            lambda: 0.1,
            lambda_dot: 0.0,
            r: 50.0,
            v_rel: 10.0,
        };
        for _ in 0..1000 {
            s = planar_engagement_step(&s, 0.0, 0.0, 1e-3).unwrap();
        }
        assert_eq!(s.lambda_dot, 0.0);
        assert_eq!(s.lambda, 0.1);
        assert_abs_diff_eq!(s.r, 40.0, epsilon = 1e-9);
    }

    #[test]
    fn planar_target_acceleration_enters_over_range() {
        let s = PlanarEngagementState {
            lambda: 0.0,
            lambda_dot: 0.0,
            r: 20.0,
            v_rel: 5.0,
        };
        let (_, lambda_ddot, _) = s.derivative(0.0, 2.0);
        assert_eq!(lambda_ddot, 0.1);
    }

    #[test]
    fn planar_pn_decreases_lyapunov() {
        let v_rel = 8.0;
        let mut s = PlanarEngagementState {
            lambda: 0.05,
            lambda_dot: 0.2,
            r: 60.0,
            v_rel,
        };
        let mut last = s.lyapunov();
        for _ in 0..2000 {
            let u = 3.0 * v_rel * s.lambda_dot;
            s = planar_engagement_step(&s, u, 0.0, 1e-3).unwrap();
            assert!(s.lyapunov() < last);
            last = s.lyapunov();
        }
    }

    #[test]
    fn planar_gain_below_two_diverges() {
        let v_rel = 10.0;
        let mut s = PlanarEngagementState {
            lambda: 0.0,
            lambda_dot: 0.1,
            r: 50.0,
            v_rel,
        };
        let start = s.lyapunov();
        while let Ok(n) = planar_engagement_step(&s, 1.5 * v_rel * s.lambda_dot, 0.0, 1e-3) {
            s = n;
        }
        assert!(s.lyapunov() > start);
    }

    #[test]
    fn planar_terminates_at_zero_range() {
        let s = PlanarEngagementState {
            lambda: 0.0,
            lambda_dot: 0.0,
            r: 0.005,
            v_rel: 10.0,
        };
        assert!(matches!(
            planar_engagement_step(&s, 0.0, 0.0, 1e-3),
            Err(Error::EngagementTerminated(_))
        ));
    }

    fn unit_vec() -> impl Strategy<Value = Vector3<f64>> {
        (-1.0f64..1.0, -1.0f64..1.0, -1.0f64..1.0)
            .prop_filter("non-zero", |(x, y, z)| x * x + y * y + z * z > 1e-4)
            .prop_map(|(x, y, z)| v(x, y, z).normalize())
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(10_000))]

        #[test]
        fn pn_frame_is_proper_rotation(l in unit_vec()) {
            prop_assume!(Vector3::z().cross(&l).norm() >= EPS_VERT);
            let r = pn_frame(&l).unwrap();
            prop_assert!((r.transpose() * r - Matrix3::identity()).amax() < 1e-9);
            prop_assert!((r.determinant() - 1.0).abs() < 1e-9);
            prop_assert_eq!(r.column(0).into_owned(), l);
        }
    }

    proptest! {
        #[test]
        fn pn_acceleration_normal_to_los(
            l in unit_vec(),
            l_prev in unit_vec(),
            k in 0.1f64..5.0,
            vr in 1.0f64..40.0,
        ) {
            let los = Los::new(l, l_prev, 30.0, 0.0).unwrap();
            let a = pn_acceleration(&PnConfig::new(k, vr).unwrap(), &los);
            prop_assert!(a.dot(&l).abs() < 1e-9 * (1.0 + a.norm()));
            prop_assert!(a.dot(&los.axis).abs() < 1e-9 * (1.0 + a.norm()));
        }

        #[test]
        fn pn_acceleration_is_linear_in_gains(
            l in unit_vec(),
            l_prev in unit_vec(),
            k in 0.1f64..5.0,
            vr in 1.0f64..40.0,
        ) {
            let los = Los::new(l, l_prev, 30.0, 0.0).unwrap();
            let base = pn_acceleration(&PnConfig::new(k, vr).unwrap(), &los);
            let k2 = pn_acceleration(&PnConfig::new(2.0 * k, vr).unwrap(), &los);
            let v2 = pn_acceleration(&PnConfig::new(k, 2.0 * vr).unwrap(), &los);
            let mut fast = los;
            fast.rate *= 2.0;
            let r2 = pn_acceleration(&PnConfig::new(k, vr).unwrap(), &fast);
            for doubled in [k2, v2, r2] {
                prop_assert!((doubled - 2.0 * base).norm() <= 1e-12 * (1.0 + base.norm()));
            }
        }
    }
}
