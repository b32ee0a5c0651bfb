//! Rigid-body quadrotor dynamics with an abstracted attitude loop.
//!
//! Roll and pitch follow their set-points as second-order systems disturbed by
//! the gravity torque of off-center payloads; yaw rate follows its set-point
//! through a first-order lag. Collective thrust acts along the body z-axis and
//! is scaled by battery efficiency and ground effect.

use serde::{Deserialize, Serialize};

use crate::kinematics::{body_rates_to_euler_rates, euler_rates_to_body_rates, euler_to_rotation, thrust_axis};
use crate::types::{is_finite_vec, Attitude, ControlCommand, Vec3, VehicleState, MAX_TILT_ANGLE};

/// Longest admissible integration step, s.
pub const MAX_STEP: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Payload {
    /// kg
    pub mass: f64,
    /// Offset of the payload from the vehicle center, body frame, m.
    #[serde(default)]
    pub offset: [f64; 3],
}

impl Payload {
    pub fn centered(mass: f64) -> Self {
        Self { mass, offset: [0.0; 3] }
    }

    pub fn offset(&self) -> Vec3 {
        Vec3::from(self.offset)
    }
}

/// Constant world-frame force applied over a time window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Disturbance {
    /// N, world frame.
    pub force: [f64; 3],
    pub start: f64,
    pub duration: f64,
}

impl Disturbance {
    pub fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.start + self.duration
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VehicleParams {
    /// kg
    pub base_mass: f64,
    /// Diagonal inertia, kg·m².
    pub inertia: [f64; 3],
    /// Collective thrust ceiling, N.
    pub max_thrust: f64,
    /// m
    pub rotor_radius: f64,
    /// Height of the rotor plane above the landing gear, m.
    pub rotor_height: f64,
    pub ground_effect: bool,
    /// Attitude loop natural frequency, rad/s.
    pub attitude_frequency: f64,
    /// Attitude loop damping ratio.
    pub attitude_damping: f64,
    /// Yaw-rate lag time constant, s.
    pub yaw_time_constant: f64,
    /// Battery efficiency in (0, 1].
    pub efficiency: f64,
    /// Efficiency lost per unit of ∫u dt.
    pub discharge_rate: f64,
    /// Floor for the discharge model.
    pub min_efficiency: f64,
    pub payloads: Vec<Payload>,
}

impl Default for VehicleParams {
    fn default() -> Self {
        Self {
            base_mass: 2.5,
            inertia: [0.12, 0.12, 0.2],
            max_thrust: 60.0,
            rotor_radius: 0.23,
            rotor_height: 0.2,
            ground_effect: true,
            attitude_frequency: 15.0,
            attitude_damping: 0.8,
            yaw_time_constant: 0.1,
            efficiency: 1.0,
            discharge_rate: 0.0,
            min_efficiency: 0.5,
            payloads: Vec::new(),
        }
    }
}

impl VehicleParams {
    pub fn total_mass(&self) -> f64 {
        self.base_mass + self.payloads.iter().map(|p| p.mass).sum::<f64>()
    }

    /// Gravity torque of all payloads in the body frame, N·m.
    pub fn payload_torque(&self, att: &Attitude, gravity: f64) -> Vec3 {
        let g_body = euler_to_rotation(att).transpose() * Vec3::new(0.0, 0.0, -gravity);
        self.payloads
            .iter()
            .map(|p| p.offset().cross(&(p.mass * g_body)))
            .sum()
    }

    /// Thrust multiplier at landing-gear height `z`.
    pub fn ground_effect_at(&self, z: f64) -> f64 {
        if self.ground_effect {
            ground_effect_multiplier(z.max(0.0) + self.rotor_height, self.rotor_radius)
        } else {
            1.0
        }
    }

    /// Thrust fraction that balances weight at height `z`.
    pub fn hover_thrust(&self, z: f64, gravity: f64) -> f64 {
        self.total_mass() * gravity / (self.max_thrust * self.efficiency * self.ground_effect_at(z))
    }

    pub fn attach(&mut self, payload: Payload) {
        self.payloads.push(payload);
    }

    pub fn detach(&mut self, index: usize) -> Option<Payload> {
        (index < self.payloads.len()).then(|| self.payloads.remove(index))
    }

    pub fn validate(&self, gravity: f64) -> Result<(), String> {
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !positive(self.base_mass) {
            return Err("vehicle base_mass must be positive".into());
        }
        if !self.inertia.iter().all(|&i| positive(i)) {
            return Err("vehicle inertia must be positive".into());
        }
        if !positive(self.max_thrust) || !positive(self.rotor_radius) || !(self.rotor_height >= 0.0) {
            return Err("vehicle max_thrust and rotor_radius must be positive, rotor_height non-negative".into());
        }
        if !positive(self.attitude_frequency) || !(self.attitude_damping >= 0.0) || !positive(self.yaw_time_constant) {
            return Err("attitude loop needs positive frequency and time constant, non-negative damping".into());
        }
        if !(self.efficiency > 0.0 && self.efficiency <= 1.0) {
            return Err("vehicle efficiency must lie in (0, 1]".into());
        }
        if !(self.min_efficiency > 0.0 && self.min_efficiency <= 1.0) || !(self.discharge_rate >= 0.0) {
            return Err("discharge_rate must be non-negative and min_efficiency in (0, 1]".into());
        }
        if let Some(i) = self.payloads.iter().position(|p| !positive(p.mass) || p.offset.iter().any(|c| !c.is_finite())) {
            return Err(format!("payload {i} must have positive mass and a finite offset"));
        }
        if self.max_thrust * self.efficiency <= self.total_mass() * gravity {
            return Err(format!(
                "vehicle cannot hover: {:.2} kg needs more than {:.1} N of thrust",
                self.total_mass(),
                self.max_thrust * self.efficiency
            ));
        }
        Ok(())
    }
}

/// Cheeseman–Bennett ground-effect thrust multiplier for rotor height `z`.
/// The height is floored at `0.3 R` to keep the ratio finite.
pub fn ground_effect_multiplier(z: f64, rotor_radius: f64) -> f64 {
    let z = z.max(0.3 * rotor_radius);
    let ratio = rotor_radius / (4.0 * z);
    1.0 / (1.0 - ratio * ratio)
}

/// Linear discharge with the commanded thrust, floored at `min_efficiency`.
pub fn battery_update(params: &mut VehicleParams, thrust: f64, dt: f64) {
    if params.discharge_rate > 0.0 {
        params.efficiency = (params.efficiency - params.discharge_rate * thrust * dt).max(params.min_efficiency);
    }
}

/// Advance the vehicle by `dt` under command `cmd` and external world force
/// `external` (N). Semi-implicit Euler: rates and velocity first, then angles
/// and position. Resting on the ground (z ≤ 0 with no net lift) pins the
/// vehicle level and still.
pub fn step_dynamics(state: &VehicleState, cmd: &ControlCommand, params: &VehicleParams, dt: f64, external: &Vec3, gravity: f64) -> VehicleState {
    debug_assert!(dt > 0.0 && dt <= MAX_STEP + 1e-12);
    let att = state.attitude;
    let mass = params.total_mass();
    let force = cmd.thrust * params.max_thrust * params.efficiency * params.ground_effect_at(state.position.z);
    let mut accel = force / mass * thrust_axis(&att) - Vec3::new(0.0, 0.0, gravity) + external / mass;

    if state.position.z <= 0.0 && accel.z <= 0.0 {
        return VehicleState {
            position: Vec3::new(state.position.x, state.position.y, 0.0),
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            attitude: Attitude::new(0.0, 0.0, att.yaw),
            body_rates: Vec3::zeros(),
        };
    }

    // attitude loop
    let rates = body_rates_to_euler_rates(&att, &state.body_rates);
    let torque = params.payload_torque(&att, gravity);
    let wn = params.attitude_frequency;
    let zeta = params.attitude_damping;
    let track = |angle: f64, sp: f64, rate: f64, bias: f64| wn * wn * (sp - angle) - 2.0 * zeta * wn * rate + bias;
    let roll_acc = track(att.roll, cmd.roll, rates.x, torque.x / params.inertia[0]);
    let pitch_acc = track(att.pitch, cmd.pitch, rates.y, torque.y / params.inertia[1]);
    let yaw_acc = (cmd.yaw_rate - rates.z) / params.yaw_time_constant;

    let mut new_rates = rates + dt * Vec3::new(roll_acc, pitch_acc, yaw_acc);
    let mut roll = att.roll + dt * new_rates.x;
    let mut pitch = att.pitch + dt * new_rates.y;
    if roll.abs() > MAX_TILT_ANGLE {
        roll = roll.clamp(-MAX_TILT_ANGLE, MAX_TILT_ANGLE);
        new_rates.x = 0.0;
    }
    if pitch.abs() > MAX_TILT_ANGLE {
        pitch = pitch.clamp(-MAX_TILT_ANGLE, MAX_TILT_ANGLE);
        new_rates.y = 0.0;
    }
    let attitude = Attitude::new(roll, pitch, att.yaw + dt * new_rates.z);

    // translation
    let mut velocity = state.velocity + dt * accel;
    let mut position = state.position + dt * velocity;
    if position.z < 0.0 {
        // touchdown
        position.z = 0.0;
        velocity = Vec3::zeros();
        accel = Vec3::zeros();
    }
    debug_assert!(is_finite_vec(&position) && is_finite_vec(&velocity));
    VehicleState {
        position,
        velocity,
        acceleration: accel,
        attitude,
        body_rates: euler_rates_to_body_rates(&attitude, new_rates.x, new_rates.y, new_rates.z),
    }
}

/// A vehicle in flight: parameters, state, clock and scheduled disturbances.
#[derive(Debug, Clone)]
pub struct Plant {
    params: VehicleParams,
    state: VehicleState,
    gravity: f64,
    disturbances: Vec<Disturbance>,
    t: f64,
}

impl Plant {
    pub fn new(params: VehicleParams, state: VehicleState, gravity: f64) -> Self {
        Self {
            params,
            state,
            gravity,
            disturbances: Vec::new(),
            t: 0.0,
        }
    }

    pub fn state(&self) -> &VehicleState {
        &self.state
    }

    pub fn params(&self) -> &VehicleParams {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut VehicleParams {
        &mut self.params
    }

    pub fn time(&self) -> f64 {
        self.t
    }

    pub fn add_disturbance(&mut self, d: Disturbance) {
        self.disturbances.push(d);
    }

    pub fn external_force(&self, t: f64) -> Vec3 {
        self.disturbances
            .iter()
            .filter(|d| d.active(t))
            .map(|d| Vec3::from(d.force))
            .sum()
    }

    /// Integrate from the current time to `t_end` in steps no longer than `max_dt`.
    pub fn advance(&mut self, cmd: &ControlCommand, t_end: f64, max_dt: f64) {
        while self.t < t_end - 1e-12 {
            let dt = (t_end - self.t).min(max_dt);
            self.step(cmd, dt);
        }
    }

    pub fn step(&mut self, cmd: &ControlCommand, dt: f64) {
        let external = self.external_force(self.t);
        self.state = step_dynamics(&self.state, cmd, &self.params, dt, &external, self.gravity);
        battery_update(&mut self.params, cmd.thrust, dt);
        self.t += dt;
    }
}
