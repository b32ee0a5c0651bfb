use serde::{Deserialize, Serialize};
use std::f64::consts::FRAC_PI_2;

use crate::kinematics::wrap_angle;

/// World-frame (FLU) or body-frame 3-vector. Units depend on use.
pub type Vec3 = nalgebra::Vector3<f64>;

/// Margin kept between roll/pitch and ±90°.
pub const ATTITUDE_MARGIN: f64 = 0.01;

/// Largest admissible |roll| or |pitch|.
pub const MAX_TILT_ANGLE: f64 = FRAC_PI_2 - ATTITUDE_MARGIN;

/// Returns true when every component is finite.
pub fn is_finite_vec(v: &Vec3) -> bool {
    v.iter().all(|c| c.is_finite())
}

/// Z-Y-X Euler attitude. Roll and pitch are body angles, yaw is the world heading.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Attitude {
    pub roll: f64,
    pub pitch: f64,
    pub yaw: f64,
}

impl Attitude {
    /// Builds an attitude, saturating roll/pitch away from ±90° and wrapping yaw.
    pub fn new(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self {
            roll: roll.clamp(-MAX_TILT_ANGLE, MAX_TILT_ANGLE),
            pitch: pitch.clamp(-MAX_TILT_ANGLE, MAX_TILT_ANGLE),
            yaw: wrap_angle(yaw),
        }
    }

    pub fn level() -> Self {
        Self::default()
    }

    pub fn from_degrees(roll: f64, pitch: f64, yaw: f64) -> Self {
        Self::new(roll.to_radians(), pitch.to_radians(), yaw.to_radians())
    }
}

/// Full rigid-body state.
///
/// `acceleration` is the kinematic world acceleration (specific force plus
/// gravity), i.e. exactly what the plant integrator applied on its last step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude: Attitude,
    /// Body angular rates (p, q, r).
    pub body_rates: Vec3,
}

impl Default for VehicleState {
    fn default() -> Self {
        Self {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            attitude: Attitude::level(),
            body_rates: Vec3::zeros(),
        }
    }
}

impl VehicleState {
    pub fn at_position(position: Vec3) -> Self {
        Self {
            position,
            ..Self::default()
        }
    }
}

/// Saturation envelope shared by every thrust and attitude path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommandLimits {
    /// Lowest commanded thrust fraction.
    pub thrust_min: f64,
    /// Highest commanded thrust fraction.
    pub thrust_max: f64,
    /// Roll/pitch setpoint limit, rad.
    pub tilt: f64,
}

impl Default for CommandLimits {
    fn default() -> Self {
        Self {
            thrust_min: 0.05,
            thrust_max: 0.95,
            tilt: 30f64.to_radians(),
        }
    }
}

impl CommandLimits {
    pub fn clamp_thrust(&self, u: f64) -> f64 {
        u.clamp(self.thrust_min, self.thrust_max)
    }

    pub fn clamp_tilt(&self, angle: f64) -> f64 {
        angle.clamp(-self.tilt, self.tilt)
    }
}

/// What the inner attitude loop receives: collective thrust plus roll/pitch
/// angle setpoints and a yaw-rate setpoint.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ControlCommand {
    /// Collective thrust as a fraction of the thrust ceiling.
    pub thrust: f64,
    pub roll: f64,
    pub pitch: f64,
    pub yaw_rate: f64,
}

impl ControlCommand {
    /// Idle command used before the first controller tick.
    pub fn idle(limits: &CommandLimits) -> Self {
        Self {
            thrust: limits.thrust_min,
            roll: 0.0,
            pitch: 0.0,
            yaw_rate: 0.0,
        }
    }

    pub fn saturated(self, limits: &CommandLimits) -> Self {
        Self {
            thrust: limits.clamp_thrust(self.thrust),
            roll: limits.clamp_tilt(self.roll),
            pitch: limits.clamp_tilt(self.pitch),
            yaw_rate: self.yaw_rate,
        }
    }

    pub fn within(&self, limits: &CommandLimits) -> bool {
        self.thrust >= limits.thrust_min
            && self.thrust <= limits.thrust_max
            && self.roll.abs() <= limits.tilt
            && self.pitch.abs() <= limits.tilt
            && self.yaw_rate.is_finite()
    }
}

/// Per-axis control mode.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AxisMode {
    Position,
    Velocity,
}

/// Reference for the position feedback loop. `values` holds metres on
/// position-mode axes and m/s on velocity-mode axes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Setpoint {
    pub modes: [AxisMode; 3],
    pub values: Vec3,
    pub yaw: f64,
}

impl Setpoint {
    pub fn hold_position(position: Vec3, yaw: f64) -> Self {
        Self {
            modes: [AxisMode::Position; 3],
            values: position,
            yaw,
        }
    }

    /// Position set-point on an axis, if that axis is position controlled.
    pub fn position_target(&self, axis: usize) -> Option<f64> {
        (self.modes[axis] == AxisMode::Position).then(|| self.values[axis])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn attitude_new_enforces_limits() {
        let a = Attitude::new(3.0, -3.0, 4.0);
        assert_eq!(a.roll, MAX_TILT_ANGLE);
        assert_eq!(a.pitch, -MAX_TILT_ANGLE);
        assert!(a.yaw > -std::f64::consts::PI && a.yaw <= std::f64::consts::PI);
    }

    #[test]
    fn saturated_command_is_within_limits() {
        let l = CommandLimits::default();
        let c = ControlCommand {
            thrust: 1.4,
            roll: 1.0,
            pitch: -1.0,
            yaw_rate: 0.2,
        }
        .saturated(&l);
        assert!(c.within(&l));
        assert_eq!(c.thrust, 0.95);
    }
}
