//! Attitude generation: geometric tracking (thrust vector → attitude) and
//! decoupled motion control (velocity error → attitude directly), plus the
//! independent yaw loop.

use crate::kinematics::{thrust_axis, wrap_angle, yaw_rotate_world_to_body};
use crate::types::{Attitude, CommandLimits, Vec3};

use super::pid::Pid;
use super::ControlError;

/// Below this norm a thrust vector has no usable direction.
pub const MIN_THRUST_NORM: f64 = 1e-6;

/// Below this vertical component of the body z-axis the tilt compensation
/// would demand unbounded thrust.
pub const MIN_VERTICAL_COMPONENT: f64 = 0.05;

/// Output of geometric-tracking attitude construction.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GtOutput {
    /// Thrust intensity, in the units of the input force.
    pub thrust: f64,
    pub roll: f64,
    pub pitch: f64,
}

/// Roll and pitch of the attitude with heading `yaw` whose body z-axis is
/// parallel to `force`. No saturation is applied.
pub fn gt_desired_angles(force: &Vec3, yaw: f64) -> Result<(f64, f64), ControlError> {
    let norm = force.norm();
    if !(norm > MIN_THRUST_NORM) {
        return Err(ControlError::DegenerateThrust(norm));
    }
    let b = yaw_rotate_world_to_body(&(force / norm), yaw);
    let roll = (-b.y).clamp(-1.0, 1.0).asin();
    let pitch = b.x.atan2(b.z);
    Ok((roll, pitch))
}

/// Geometric tracking: aligns body z with `force`, takes the intensity as the
/// projection of `force` on the current body z-axis, and clamps the angles to
/// the tilt limit.
pub fn gt_attitude(force: &Vec3, yaw_sp: f64, current: &Attitude, limits: &CommandLimits) -> Result<GtOutput, ControlError> {
    let (roll, pitch) = gt_desired_angles(force, yaw_sp)?;
    Ok(GtOutput {
        thrust: force.dot(&thrust_axis(current)),
        roll: limits.clamp_tilt(roll),
        pitch: limits.clamp_tilt(pitch),
    })
}

/// Tilt-compensated collective thrust: `u = f_z / (z_B · k̂)`, saturated.
pub fn dmc_thrust(vertical: f64, att: &Attitude, limits: &CommandLimits) -> Result<f64, ControlError> {
    let zk = thrust_axis(att).z;
    if zk <= MIN_VERTICAL_COMPONENT {
        return Err(ControlError::FreeFall { vertical: zk });
    }
    Ok(limits.clamp_thrust(vertical / zk))
}

/// Lateral half of decoupled motion control.
///
/// Velocity set-point and measurement are rotated into the heading frame and
/// each horizontal axis drives one tilt angle through its own PID. Under the
/// FLU Z-Y-X convention a positive pitch accelerates toward +x and a positive
/// roll toward −y, hence `pitch = +PID_x`, `roll = −PID_y`.
#[derive(Debug, Clone)]
pub struct DmcLateral {
    x: Pid,
    y: Pid,
}

impl DmcLateral {
    pub fn new(x: Pid, y: Pid) -> Self {
        Self { x, y }
    }

    pub fn reset(&mut self) {
        self.x.reset();
        self.y.reset();
    }

    /// Returns `(roll, pitch)` set-points.
    pub fn step(&mut self, vel_sp: &Vec3, yaw: f64, vel_meas: &Vec3, dt: f64, limits: &CommandLimits) -> (f64, f64) {
        let err = yaw_rotate_world_to_body(vel_sp, yaw) - yaw_rotate_world_to_body(vel_meas, yaw);
        let pitch = self.x.step(err.x, dt);
        let roll = -self.y.step(err.y, dt);
        (limits.clamp_tilt(roll), limits.clamp_tilt(pitch))
    }
}

/// Heading PID producing a yaw-rate set-point from the wrapped heading error.
#[derive(Debug, Clone)]
pub struct YawController {
    pid: Pid,
}

impl YawController {
    pub fn new(pid: Pid) -> Self {
        Self { pid }
    }

    pub fn step(&mut self, yaw_sp: f64, yaw: f64, dt: f64) -> f64 {
        self.pid.step(wrap_angle(yaw_sp - yaw), dt)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::pid::PidGains;
    use crate::filters::CwmaFilter;
    use crate::kinematics::euler_to_rotation;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};

    fn pid(kp: f64) -> Pid {
        Pid::new(PidGains::new(kp, 0.0, 0.0, 1.0, 10.0), CwmaFilter::default())
    }

    #[test]
    fn gt_hover_is_level() {
        let f = Vec3::new(0.0, 0.0, 2.5 * 9.81);
        let out = gt_attitude(&f, 0.0, &Attitude::level(), &CommandLimits::default()).unwrap();
        assert_eq!((out.roll, out.pitch), (0.0, 0.0));
        assert_abs_diff_eq!(out.thrust, 2.5 * 9.81, epsilon = 1e-12);
    }

    #[test]
    fn gt_forward_force_pitches_forty_five() {
        let f = Vec3::new(1.0, 0.0, 1.0) / 2f64.sqrt();
        let (roll, pitch) = gt_desired_angles(&f, 0.0).unwrap();
        assert_abs_diff_eq!(roll, 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(pitch, FRAC_PI_4, epsilon = 1e-15);
        let clamped = gt_attitude(&f, 0.0, &Attitude::level(), &CommandLimits::default()).unwrap();
        assert_abs_diff_eq!(clamped.pitch, 30f64.to_radians(), epsilon = 1e-15);
    }

    #[test]
    fn gt_rejects_zero_force() {
        assert!(matches!(
            gt_attitude(&Vec3::zeros(), 0.0, &Attitude::level(), &CommandLimits::default()),
            Err(ControlError::DegenerateThrust(_))
        ));
    }

    proptest! {
        /// Independent oracle: rebuild R from the returned angles and check
        /// that its third column is the requested direction.
        #[test]
        fn gt_angles_reconstruct_direction(
            x in -1.0..1.0f64, y in -1.0..1.0f64, z in 0.2..2.0f64, yaw in -PI..PI,
        ) {
            let f = Vec3::new(x, y, z);
            let (roll, pitch) = gt_desired_angles(&f, yaw).unwrap();
            let r = euler_to_rotation(&Attitude { roll, pitch, yaw });
            prop_assert!((r.column(2) - f.normalize()).norm() < 1e-12);
        }
    }

    #[test]
    fn dmc_thrust_examples() {
        let l = CommandLimits::default();
        assert_abs_diff_eq!(dmc_thrust(0.5, &Attitude::level(), &l).unwrap(), 0.5, epsilon = 1e-15);
        let steep = Attitude::from_degrees(60.0, 0.0, 0.0);
        assert_abs_diff_eq!(dmc_thrust(0.10, &steep, &l).unwrap(), 0.20, epsilon = 1e-12);
        let sideways = Attitude { roll: FRAC_PI_2, pitch: 0.0, yaw: 0.0 };
        assert!(matches!(dmc_thrust(0.3, &sideways, &l), Err(ControlError::FreeFall { .. })));
    }

    proptest! {
        #[test]
        fn dmc_thrust_inverts_exactly(
            f in 0.1..0.5f64,
            r in -30f64.to_radians()..30f64.to_radians(),
            p in -30f64.to_radians()..30f64.to_radians(),
        ) {
            let att = Attitude::new(r, p, 0.3);
            let u = dmc_thrust(f, &att, &CommandLimits::default()).unwrap();
            if u < 0.95 {
                prop_assert!((u * thrust_axis(&att).z - f).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn dmc_zero_error_is_level() {
        let mut dmc = DmcLateral::new(pid(0.1), pid(0.1));
        let v = Vec3::new(0.3, -0.2, 0.0);
        assert_eq!(dmc.step(&v, 0.7, &v, 1.0 / 60.0, &CommandLimits::default()), (0.0, 0.0));
    }

    #[test]
    fn dmc_forward_demand_pitches_forward() {
        let mut dmc = DmcLateral::new(pid(0.1), pid(0.1));
        let (roll, pitch) = dmc.step(&Vec3::x(), 0.0, &Vec3::zeros(), 1.0 / 60.0, &CommandLimits::default());
        assert_abs_diff_eq!(pitch, 0.1, epsilon = 1e-15);
        assert_eq!(roll, 0.0);
        // the plant accelerates along +x under this pitch
        assert!(thrust_axis(&Attitude::new(roll, pitch, 0.0)).x > 0.0);
    }

    #[test]
    fn dmc_heading_rotates_demand_into_roll() {
        let mut dmc = DmcLateral::new(pid(0.1), pid(0.1));
        let (roll, pitch) = dmc.step(&Vec3::x(), FRAC_PI_2, &Vec3::zeros(), 1.0 / 60.0, &CommandLimits::default());
        assert_abs_diff_eq!(pitch, 0.0, epsilon = 1e-15);
        assert!(roll > 0.0);
        // with heading +90°, world +x is body −y; positive roll pushes body −y
        let axis = thrust_axis(&Attitude::new(roll, pitch, FRAC_PI_2));
        assert!(axis.x > 0.0);
    }

    #[test]
    fn yaw_examples() {
        let mut yaw = YawController::new(pid(1.0));
        assert_abs_diff_eq!(yaw.step(0.2, 0.0, 0.01), 0.2, epsilon = 1e-15);
        let mut yaw = YawController::new(pid(1.0));
        let rate = yaw.step(179f64.to_radians(), -179f64.to_radians(), 0.01);
        assert_abs_diff_eq!(rate, -2f64.to_radians(), epsilon = 1e-12);
        let mut yaw = YawController::new(pid(1.0));
        assert_eq!(yaw.step(0.4, 0.4, 0.01), 0.0);
    }
}
