//! The multi-rate control cascade.
//!
//! Three stages run at their own rates: position (→ velocity set-point),
//! velocity (→ acceleration set-point or tilt, plus yaw rate) and thrust.
//! Each stage holds its latest output until it fires again.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::filters::CwmaFilter;
use crate::sensors::EstimatedState;
use crate::types::{AxisMode, CommandLimits, ControlCommand, Setpoint, Vec3};
use crate::GRAVITY;

use super::attitude::{dmc_thrust, gt_attitude, DmcLateral, YawController};
use super::gains::ControllerGains;
use super::pid::Pid;
use super::thrust::{DaController, MiParams, Tmaf};
use super::ControlError;

/// Thrust law and attitude path combination.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    MiGt,
    DaGt,
    TmafGt,
    TmafDmc,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::TmafDmc, Variant::TmafGt, Variant::DaGt, Variant::MiGt];

    pub fn name(&self) -> &'static str {
        match self {
            Variant::MiGt => "mi+gt",
            Variant::DaGt => "da+gt",
            Variant::TmafGt => "tmaf+gt",
            Variant::TmafDmc => "tmaf+dmc",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().replace(['-', '_', ' '], "+").as_str() {
            "mi+gt" | "mi" => Ok(Variant::MiGt),
            "da+gt" | "da" => Ok(Variant::DaGt),
            "tmaf+gt" | "gt" => Ok(Variant::TmafGt),
            "tmaf+dmc" | "tmdc" => Ok(Variant::TmafDmc),
            other => Err(format!(
                "unknown variant '{other}' (expected one of tmaf+dmc, tmaf+gt, da+gt, mi+gt)"
            )),
        }
    }
}

impl TryFrom<String> for Variant {
    type Error = String;

    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> String {
        v.name().to_string()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stage {
    Position,
    Velocity,
    Thrust,
}

impl Stage {
    pub const ALL: [Stage; 3] = [Stage::Position, Stage::Velocity, Stage::Thrust];

    pub fn name(&self) -> &'static str {
        match self {
            Stage::Position => "position",
            Stage::Velocity => "velocity",
            Stage::Thrust => "thrust",
        }
    }

    pub fn default_rate(&self) -> f64 {
        match self {
            Stage::Position => 30.0,
            Stage::Velocity => 60.0,
            Stage::Thrust => 80.0,
        }
    }
}

/// Timing of one stage firing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTick {
    /// Firing time, s.
    pub t: f64,
    /// Nominal period of the stage, s.
    pub period: f64,
    /// Time since the previous firing of the same stage, s.
    pub elapsed: f64,
}

impl StageTick {
    pub fn nominal(t: f64, period: f64) -> Self {
        Self { t, period, elapsed: period }
    }
}

/// Stages due on one base tick.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTicks {
    pub position: Option<StageTick>,
    pub velocity: Option<StageTick>,
    pub thrust: Option<StageTick>,
}

/// Divides a base tick stream among the three stages for callers that step
/// the cascade directly rather than through the scheduler.
#[derive(Debug, Clone)]
pub struct PipelineClock {
    rates: [f64; 3],
    base_rate: f64,
    fired: [u64; 3],
    last: [Option<f64>; 3],
    base_ticks: u64,
}

impl PipelineClock {
    pub fn new(position_hz: f64, velocity_hz: f64, thrust_hz: f64) -> Self {
        let rates = [position_hz, velocity_hz, thrust_hz];
        Self {
            base_rate: rates.iter().cloned().fold(0.0, f64::max),
            rates,
            fired: [0; 3],
            last: [None; 3],
            base_ticks: 0,
        }
    }

    pub fn base_period(&self) -> f64 {
        1.0 / self.base_rate
    }

    /// Advance one base tick and report which stages fire.
    pub fn tick(&mut self) -> StageTicks {
        let k = self.base_ticks;
        let t = k as f64 / self.base_rate;
        let mut due = [None; 3];
        for (i, slot) in due.iter_mut().enumerate() {
            // fires the n-th time on the first base tick at or after n / rate
            if self.fired[i] as f64 * self.base_rate <= k as f64 * self.rates[i] + 1e-9 {
                let period = 1.0 / self.rates[i];
                let elapsed = self.last[i].map_or(period, |p| t - p);
                *slot = Some(StageTick { t, period, elapsed });
                self.fired[i] += 1;
                self.last[i] = Some(t);
            }
        }
        self.base_ticks += 1;
        StageTicks {
            position: due[0],
            velocity: due[1],
            thrust: due[2],
        }
    }
}

impl Default for PipelineClock {
    fn default() -> Self {
        Self::new(30.0, 60.0, 80.0)
    }
}

#[derive(Debug, Clone)]
enum ThrustLaw {
    Mi(MiParams),
    Da {
        law: DaController,
        accel_filter: Option<[CwmaFilter; 3]>,
    },
    Tmaf(Tmaf),
}

/// Outputs held between stage firings.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Held {
    /// Velocity set-point produced by the position stage.
    velocity_from_position: Vec3,
    /// Acceleration set-point; only z is used by decoupled motion control.
    accel_sp: Vec3,
    roll: f64,
    pitch: f64,
    yaw_rate: f64,
    thrust: f64,
}

/// One controller instance of any variant.
#[derive(Debug, Clone)]
pub struct Cascade {
    variant: Variant,
    limits: CommandLimits,
    measured_dt: bool,
    position: [Pid; 3],
    velocity: [Pid; 3],
    dmc: DmcLateral,
    yaw: YawController,
    thrust: ThrustLaw,
    held: Held,
    modes: Option<[AxisMode; 3]>,
}

impl Cascade {
    /// `max_thrust` is the collective thrust ceiling in N; only the Newton
    /// based baselines (MI and DA) read it. `thrust_period` is the nominal
    /// period of the thrust stage.
    pub fn new(variant: Variant, gains: &ControllerGains, max_thrust: f64, thrust_period: f64) -> Result<Self, ControlError> {
        gains.validate()?;
        if !(max_thrust > 0.0) {
            return Err(ControlError::InvalidGains("thrust ceiling must be positive".into()));
        }
        let limits = gains.limits;
        let pid_axes = |g: &super::gains::AxisPidGains| -> Result<[Pid; 3], ControlError> {
            Ok([gains.pid(g.axis(0))?, gains.pid(g.axis(1))?, gains.pid(g.axis(2))?])
        };
        let thrust = match variant {
            Variant::MiGt => ThrustLaw::Mi(MiParams {
                mass: gains.mi.mass,
                gravity: GRAVITY,
                external_force: Vec3::from(gains.mi.external_force),
                max_thrust,
                efficiency: gains.mi.efficiency,
            }),
            Variant::DaGt => {
                let accel_filter = if gains.da.accel_filter {
                    let f = gains.filter.build()?;
                    Some([f.clone(), f.clone(), f])
                } else {
                    None
                };
                ThrustLaw::Da {
                    law: DaController::new(
                        Vec3::from(gains.da.mu),
                        Vec3::from(gains.da.lambda),
                        Vec3::repeat(gains.da.integral_limit),
                        GRAVITY,
                        max_thrust,
                        limits,
                    ),
                    accel_filter,
                }
            }
            Variant::TmafGt | Variant::TmafDmc => {
                let mut tmaf = Tmaf::new(gains.tmaf_alpha(), gains.tmaf_beta(), thrust_period, limits)?
                    .with_measured_dt(gains.measured_dt);
                if gains.tmaf.jerk_filter {
                    tmaf = tmaf.with_jerk_filter(gains.filter.build()?);
                }
                ThrustLaw::Tmaf(tmaf)
            }
        };
        Ok(Self {
            variant,
            limits,
            measured_dt: gains.measured_dt,
            position: pid_axes(&gains.pid_p)?,
            velocity: pid_axes(&gains.pid_v)?,
            dmc: DmcLateral::new(gains.pid(gains.dmc.axis(0, limits.tilt))?, gains.pid(gains.dmc.axis(1, limits.tilt))?),
            yaw: YawController::new(gains.pid(gains.yaw)?),
            thrust,
            held: Held::default(),
            modes: None,
        })
    }

    /// The decoupled cascade: thrust microstepping with decoupled motion control.
    pub fn tmdc(gains: &ControllerGains, thrust_period: f64) -> Result<Self, ControlError> {
        // the ceiling is never read on this path
        Self::new(Variant::TmafDmc, gains, 1.0, thrust_period)
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn limits(&self) -> &CommandLimits {
        &self.limits
    }

    /// Thrust accumulator of the microstepping law, if this variant has one.
    pub fn accumulator(&self) -> Option<Vec3> {
        match &self.thrust {
            ThrustLaw::Tmaf(t) => Some(*t.accumulator()),
            _ => None,
        }
    }

    /// Start from a known thrust, as when taking over a vehicle already in
    /// the air. Only meaningful for the microstepping variants.
    pub fn prime_thrust(&mut self, u: f64) {
        if let ThrustLaw::Tmaf(t) = &mut self.thrust {
            t.prime(Vec3::new(0.0, 0.0, u));
        }
        self.held.thrust = self.limits.clamp_thrust(u);
    }

    pub fn command(&self) -> ControlCommand {
        ControlCommand {
            thrust: self.held.thrust,
            roll: self.held.roll,
            pitch: self.held.pitch,
            yaw_rate: self.held.yaw_rate,
        }
        .saturated(&self.limits)
    }

    fn dt(&self, tick: &StageTick) -> f64 {
        if self.measured_dt && tick.elapsed > 0.0 {
            tick.elapsed
        } else {
            tick.period
        }
    }

    pub fn run_stage(&mut self, stage: Stage, sp: &Setpoint, est: &EstimatedState, tick: &StageTick) -> Result<(), ControlError> {
        match stage {
            Stage::Position => {
                self.position_stage(sp, est, tick);
                Ok(())
            }
            Stage::Velocity => {
                self.velocity_stage(sp, est, tick);
                Ok(())
            }
            Stage::Thrust => self.thrust_stage(sp, est, tick),
        }
    }

    /// Run whichever stages are due, slowest first, and return the command.
    pub fn step(&mut self, sp: &Setpoint, est: &EstimatedState, ticks: &StageTicks) -> Result<ControlCommand, ControlError> {
        if let Some(t) = &ticks.position {
            self.position_stage(sp, est, t);
        }
        if let Some(t) = &ticks.velocity {
            self.velocity_stage(sp, est, t);
        }
        if let Some(t) = &ticks.thrust {
            self.thrust_stage(sp, est, t)?;
        }
        Ok(self.command())
    }

    fn position_stage(&mut self, sp: &Setpoint, est: &EstimatedState, tick: &StageTick) {
        let dt = self.dt(tick);
        let previous = self.modes.replace(sp.modes);
        for i in 0..3 {
            if previous.is_some_and(|m| m[i] != sp.modes[i]) {
                self.position[i].reset();
            }
            if sp.modes[i] == AxisMode::Position {
                let e = sp.values[i] - est.position[i];
                self.held.velocity_from_position[i] = self.position[i].step(e, dt);
            }
        }
    }

    fn velocity_setpoint(&self, sp: &Setpoint) -> Vec3 {
        Vec3::from_fn(|i, _| match sp.modes[i] {
            AxisMode::Position => self.held.velocity_from_position[i],
            AxisMode::Velocity => sp.values[i],
        })
    }

    fn velocity_stage(&mut self, sp: &Setpoint, est: &EstimatedState, tick: &StageTick) {
        let dt = self.dt(tick);
        let v_sp = self.velocity_setpoint(sp);
        let v = est.velocity;
        self.held.accel_sp.z = self.velocity[2].step(v_sp.z - v.z, dt);
        if self.variant == Variant::TmafDmc {
            let (roll, pitch) = self.dmc.step(&v_sp, est.attitude.yaw, &v, dt, &self.limits);
            self.held.roll = roll;
            self.held.pitch = pitch;
        } else {
            self.held.accel_sp.x = self.velocity[0].step(v_sp.x - v.x, dt);
            self.held.accel_sp.y = self.velocity[1].step(v_sp.y - v.y, dt);
        }
        self.held.yaw_rate = self.yaw.step(sp.yaw, est.attitude.yaw, dt);
    }

    fn thrust_stage(&mut self, sp: &Setpoint, est: &EstimatedState, tick: &StageTick) -> Result<(), ControlError> {
        let a_sp = self.held.accel_sp;
        let a = est.acceleration;
        let att = est.attitude;
        let force = match &mut self.thrust {
            ThrustLaw::Tmaf(tmaf) => {
                if tmaf.period() != tick.period {
                    tmaf.set_period(tick.period)?;
                }
                if self.variant == Variant::TmafDmc {
                    let gamma = tmaf.step_at(&Vec3::new(0.0, 0.0, a_sp.z), &Vec3::new(0.0, 0.0, a.z), tick.t)?;
                    self.held.thrust = dmc_thrust(gamma.z, &att, &self.limits)?;
                    return Ok(());
                }
                tmaf.step_at(&a_sp, &a, tick.t)?
            }
            ThrustLaw::Mi(mi) => mi.thrust(&a_sp),
            ThrustLaw::Da { law, accel_filter } => {
                let a = match accel_filter {
                    Some(f) => Vec3::new(f[0].push(a.x), f[1].push(a.y), f[2].push(a.z)),
                    None => a,
                };
                // integrates over the measured interval
                let dt = if tick.elapsed > 0.0 { tick.elapsed } else { tick.period };
                law.step(&a_sp, &a, dt)
            }
        };
        let out = gt_attitude(&force, sp.yaw, &att, &self.limits)?;
        self.held.thrust = self.limits.clamp_thrust(out.thrust);
        self.held.roll = out.roll;
        self.held.pitch = out.pitch;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::Attitude;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const F_MAX: f64 = 60.0;
    const T: f64 = 1.0 / 80.0;

    fn hover_estimate(z: f64) -> EstimatedState {
        EstimatedState {
            position: Vec3::new(0.0, 0.0, z),
            ..EstimatedState::default()
        }
    }

    #[test]
    fn variant_names_round_trip() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        assert_eq!("TMDC".parse::<Variant>().unwrap(), Variant::TmafDmc);
        assert_eq!("gt".parse::<Variant>().unwrap(), Variant::TmafGt);
        assert!("pid".parse::<Variant>().is_err());
    }

    #[test]
    fn clock_divides_base_rate() {
        let mut clock = PipelineClock::default();
        let mut counts = [0; 3];
        for _ in 0..80 {
            let t = clock.tick();
            counts[0] += t.position.is_some() as usize;
            counts[1] += t.velocity.is_some() as usize;
            counts[2] += t.thrust.is_some() as usize;
        }
        assert_eq!(counts, [30, 60, 80]);
    }

    #[test]
    fn hover_equilibrium_is_a_fixed_point() {
        let gains = ControllerGains::default();
        let trim = 2.5 * 9.81 / F_MAX;
        let mut c = Cascade::tmdc(&gains, T).unwrap();
        c.prime_thrust(trim);
        let sp = Setpoint::hold_position(Vec3::new(0.0, 0.0, 0.5), 0.0);
        let est = hover_estimate(0.5);
        let mut clock = PipelineClock::default();
        for _ in 0..400 {
            let cmd = c.step(&sp, &est, &clock.tick()).unwrap();
            assert_eq!(cmd, ControlCommand { thrust: trim, roll: 0.0, pitch: 0.0, yaw_rate: 0.0 });
        }
    }

    #[test]
    fn tmdc_constructor_matches_variant() {
        let gains = ControllerGains::default();
        let mut a = Cascade::tmdc(&gains, T).unwrap();
        let mut b = Cascade::new(Variant::TmafDmc, &gains, F_MAX, T).unwrap();
        let mut clock = PipelineClock::default();
        let sp = Setpoint {
            modes: [AxisMode::Velocity, AxisMode::Position, AxisMode::Position],
            values: Vec3::new(0.3, 0.2, 0.5),
            yaw: 0.4,
        };
        for k in 0..300 {
            let mut est = hover_estimate(0.1 + 0.001 * k as f64);
            est.velocity = Vec3::new(0.01 * (k % 7) as f64, -0.02, 0.05);
            est.acceleration = Vec3::new(0.0, 0.1, (k as f64 * 0.3).sin());
            est.attitude = Attitude::new(0.05, -0.02, 0.1);
            let ticks = clock.tick();
            let ca = a.step(&sp, &est, &ticks).unwrap();
            let cb = b.step(&sp, &est, &ticks).unwrap();
            assert_eq!(ca.thrust.to_bits(), cb.thrust.to_bits());
            assert_eq!(ca.roll.to_bits(), cb.roll.to_bits());
            assert_eq!(ca.pitch.to_bits(), cb.pitch.to_bits());
            assert_eq!(ca.yaw_rate.to_bits(), cb.yaw_rate.to_bits());
        }
    }

    #[test]
    fn model_inversion_hover_thrust() {
        let mut gains = ControllerGains::default();
        gains.mi.mass = 3.4;
        gains.mi.efficiency = 0.9;
        let mut c = Cascade::new(Variant::MiGt, &gains, F_MAX, T).unwrap();
        let sp = Setpoint::hold_position(Vec3::new(0.0, 0.0, 0.5), 0.0);
        let cmd = c.step(&sp, &hover_estimate(0.5), &PipelineClock::default().tick()).unwrap();
        assert_abs_diff_eq!(cmd.thrust, 3.4 * 9.81 / (F_MAX * 0.9), epsilon = 1e-12);
        assert_eq!((cmd.roll, cmd.pitch), (0.0, 0.0));
    }

    #[test]
    fn direct_acceleration_without_integral() {
        let mut gains = ControllerGains::default();
        gains.da.mu = [1.0, 1.0, 3.0];
        gains.da.lambda = [0.0; 3];
        let mut c = Cascade::new(Variant::DaGt, &gains, F_MAX, T).unwrap();
        let sp = Setpoint::hold_position(Vec3::new(0.0, 0.0, 0.5), 0.0);
        let cmd = c.step(&sp, &hover_estimate(0.5), &PipelineClock::default().tick()).unwrap();
        assert_abs_diff_eq!(cmd.thrust, 3.0 * 9.81 / F_MAX, epsilon = 1e-12);
    }

    #[test]
    fn velocity_mode_takeoff_raises_thrust() {
        let gains = ControllerGains::default();
        let mut c = Cascade::tmdc(&gains, T).unwrap();
        let sp = Setpoint {
            modes: [AxisMode::Position, AxisMode::Position, AxisMode::Velocity],
            values: Vec3::new(0.0, 0.0, 0.20),
            yaw: 0.0,
        };
        let mut clock = PipelineClock::default();
        let mut last = 0.0;
        for _ in 0..10 {
            let cmd = c.step(&sp, &hover_estimate(0.0), &clock.tick()).unwrap();
            assert!(cmd.thrust >= last);
            last = cmd.thrust;
        }
        assert!(last > gains.limits.thrust_min);
    }

    #[test]
    fn free_fall_guard_propagates() {
        let gains = ControllerGains::default();
        let mut c = Cascade::tmdc(&gains, T).unwrap();
        let mut est = hover_estimate(1.0);
        est.attitude = Attitude::new(1.55, 0.0, 0.0);
        let sp = Setpoint::hold_position(Vec3::new(0.0, 0.0, 1.0), 0.0);
        let err = c.step(&sp, &est, &PipelineClock::default().tick()).unwrap_err();
        assert!(matches!(err, ControlError::FreeFall { .. }));
    }

    proptest! {
        #[test]
        fn commands_respect_limits(
            variant in prop::sample::select(Variant::ALL.to_vec()),
            states in prop::collection::vec(
                (-3.0..3.0f64, -3.0..3.0f64, 0.0..3.0f64, -2.0..2.0f64, -2.0..2.0f64, -20.0..20.0f64, -0.5..0.5f64, -0.5..0.5f64),
                1..60),
        ) {
            let gains = ControllerGains::default();
            let mut c = Cascade::new(variant, &gains, F_MAX, T).unwrap();
            let sp = Setpoint::hold_position(Vec3::new(0.5, -0.5, 1.0), 0.3);
            let mut clock = PipelineClock::default();
            for (x, y, z, vx, vz, az, r, p) in states {
                let est = EstimatedState {
                    position: Vec3::new(x, y, z),
                    velocity: Vec3::new(vx, 0.0, vz),
                    acceleration: Vec3::new(0.0, 0.0, az),
                    attitude: Attitude::new(r, p, 0.0),
                    ..EstimatedState::default()
                };
                let cmd = c.step(&sp, &est, &clock.tick()).unwrap();
                prop_assert!(cmd.within(&gains.limits));
            }
        }
    }
}
