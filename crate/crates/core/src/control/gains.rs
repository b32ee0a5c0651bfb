//! Controller gain sets as they appear in scenario files.
//!
//! Every control law reads its constants from here; the defaults are starting
//! points that the staged sweep can refine.

use serde::{Deserialize, Serialize};

use crate::filters::{default_spread, CwmaFilter, FilterError};
use crate::types::{CommandLimits, Vec3};
use crate::GRAVITY;

use super::pid::{Pid, PidGains};
use super::ControlError;

/// Diagonal PID gains for a three-axis loop.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AxisPidGains {
    pub kp: [f64; 3],
    pub ki: [f64; 3],
    pub kd: [f64; 3],
    pub integral_limit: f64,
    pub output_limit: f64,
}

impl AxisPidGains {
    pub fn axis(&self, i: usize) -> PidGains {
        PidGains::new(self.kp[i], self.ki[i], self.kd[i], self.integral_limit, self.output_limit)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kp: self.kp.map(|g| g * factor),
            ki: self.ki.map(|g| g * factor),
            kd: self.kd.map(|g| g * factor),
            ..*self
        }
    }

    fn validate(&self, name: &str) -> Result<(), ControlError> {
        (0..3).try_for_each(|i| self.axis(i).validate(name))
    }
}

/// Lateral (x, y) gains of decoupled motion control; outputs are tilt angles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LateralPidGains {
    pub kp: [f64; 2],
    pub ki: [f64; 2],
    pub kd: [f64; 2],
    pub integral_limit: f64,
}

impl LateralPidGains {
    pub fn axis(&self, i: usize, tilt: f64) -> PidGains {
        PidGains::new(self.kp[i], self.ki[i], self.kd[i], self.integral_limit, tilt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TmafGains {
    /// Microstep gain on acceleration error, thrust fraction per m/s².
    pub alpha: [f64; 3],
    /// Microstep gain on acceleration-error rate, thrust fraction per m/s³.
    pub beta: [f64; 3],
    /// Smooth the jerk term with the cosine-weighted moving average.
    pub jerk_filter: bool,
}

impl TmafGains {
    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            alpha: self.alpha.map(|g| g * factor),
            beta: self.beta.map(|g| g * factor),
            ..*self
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DaGains {
    /// Feed-forward gain on a* + g, kg.
    pub mu: [f64; 3],
    /// Integral gain on acceleration error, kg/s.
    pub lambda: [f64; 3],
    /// Bound on the integral contribution, thrust fraction.
    pub integral_limit: f64,
    /// Smooth the measured acceleration before use.
    pub accel_filter: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MiGains {
    /// Assumed vehicle mass, kg.
    pub mass: f64,
    /// Assumed battery efficiency.
    pub efficiency: f64,
    /// Assumed external force, N.
    pub external_force: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FilterSettings {
    pub window: usize,
    /// Total cosine spread across the window, degrees.
    pub spread_deg: f64,
}

impl FilterSettings {
    pub fn build(&self) -> Result<CwmaFilter, FilterError> {
        CwmaFilter::new(self.window, self.spread_deg.to_radians())
    }
}

impl Default for FilterSettings {
    fn default() -> Self {
        Self {
            window: 4,
            spread_deg: default_spread().to_degrees(),
        }
    }
}

/// Every tunable of every control path.
///
/// When read from a document, any table or key that is left out keeps its
/// default, so `[gains.pid_v]` with only `ki` changes just that gain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(remote = "Self", deny_unknown_fields, default)]
pub struct ControllerGains {
    pub limits: CommandLimits,
    /// Position loop: position error → velocity set-point.
    pub pid_p: AxisPidGains,
    /// Velocity loop: velocity error → acceleration set-point.
    pub pid_v: AxisPidGains,
    /// Decoupled lateral loop: heading-frame velocity error → tilt.
    pub dmc: LateralPidGains,
    /// Heading loop: yaw error → yaw rate.
    pub yaw: PidGains,
    pub tmaf: TmafGains,
    pub da: DaGains,
    pub mi: MiGains,
    pub filter: FilterSettings,
    /// Differentiate and integrate with measured rather than nominal loop periods.
    pub measured_dt: bool,
    /// Tuning stages whose gains are settled, in tuning order.
    pub tuned: Vec<String>,
}

impl Serialize for ControllerGains {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        ControllerGains::serialize(self, s)
    }
}

fn merge(base: &mut toml::Table, patch: toml::Table) {
    for (key, value) in patch {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(p)) => merge(b, p),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}

impl<'de> Deserialize<'de> for ControllerGains {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let patch = toml::Table::deserialize(d)?;
        let mut base = toml::Table::try_from(ControllerGains::default()).map_err(D::Error::custom)?;
        merge(&mut base, patch);
        ControllerGains::deserialize(toml::Value::Table(base)).map_err(D::Error::custom)
    }
}

/// Mass the baseline controllers assume when nothing else is configured, kg.
pub const NOMINAL_MASS: f64 = 2.5;

impl Default for ControllerGains {
    fn default() -> Self {
        let pid_v = AxisPidGains {
            kp: [3.5, 3.5, 2.0],
            ki: [2.0, 2.0, 0.1],
            kd: [0.05, 0.05, 0.05],
            integral_limit: 2.0,
            output_limit: 4.0,
        };
        Self {
            limits: CommandLimits::default(),
            pid_p: AxisPidGains {
                kp: [1.2, 1.2, 1.2],
                ki: [0.02, 0.02, 0.02],
                kd: [0.0, 0.0, 0.0],
                integral_limit: 1.0,
                output_limit: 1.0,
            },
            dmc: LateralPidGains {
                kp: [pid_v.kp[0] / GRAVITY, pid_v.kp[1] / GRAVITY],
                ki: [pid_v.ki[0] / GRAVITY, pid_v.ki[1] / GRAVITY],
                kd: [pid_v.kd[0] / GRAVITY, pid_v.kd[1] / GRAVITY],
                integral_limit: 2.0,
            },
            pid_v,
            yaw: PidGains::new(1.5, 0.0, 0.0, 1.0, 1.0),
            tmaf: TmafGains {
                alpha: [0.04, 0.04, 0.04],
                beta: [1e-4, 1e-4, 1e-4],
                jerk_filter: true,
            },
            da: DaGains {
                mu: [NOMINAL_MASS; 3],
                lambda: [2.0; 3],
                integral_limit: 0.3,
                accel_filter: false,
            },
            mi: MiGains {
                mass: NOMINAL_MASS,
                efficiency: 1.0,
                external_force: [0.0; 3],
            },
            filter: FilterSettings::default(),
            measured_dt: false,
            tuned: Vec::new(),
        }
    }
}

impl ControllerGains {
    pub fn validate(&self) -> Result<(), ControlError> {
        let l = &self.limits;
        if !(0.0 <= l.thrust_min && l.thrust_min < l.thrust_max && l.thrust_max <= 1.0) {
            return Err(ControlError::InvalidGains("thrust limits must satisfy 0 <= min < max <= 1".into()));
        }
        if !(l.tilt > 0.0 && l.tilt < std::f64::consts::FRAC_PI_2) {
            return Err(ControlError::InvalidGains("tilt limit must lie in (0, 90°)".into()));
        }
        self.pid_p.validate("pid_p")?;
        self.pid_v.validate("pid_v")?;
        for i in 0..2 {
            self.dmc.axis(i, l.tilt).validate("dmc")?;
        }
        self.yaw.validate("yaw")?;
        let nonneg = |v: &[f64]| v.iter().all(|g| g.is_finite() && *g >= 0.0);
        if !nonneg(&self.tmaf.alpha) || !nonneg(&self.tmaf.beta) {
            return Err(ControlError::InvalidGains("tmaf: alpha and beta must be non-negative".into()));
        }
        if !nonneg(&self.da.mu) || !nonneg(&self.da.lambda) || !(self.da.integral_limit > 0.0) {
            return Err(ControlError::InvalidGains(
                "da: mu and lambda must be non-negative and the integral limit positive".into(),
            ));
        }
        if !(self.mi.mass > 0.0 && self.mi.efficiency > 0.0 && self.mi.efficiency <= 1.0) {
            return Err(ControlError::InvalidGains("mi: mass must be positive and efficiency in (0, 1]".into()));
        }
        self.filter.build()?;
        Ok(())
    }

    pub(crate) fn pid(&self, gains: PidGains) -> Result<Pid, ControlError> {
        Ok(Pid::new(gains, self.filter.build()?))
    }

    pub fn tmaf_alpha(&self) -> Vec3 {
        Vec3::from(self.tmaf.alpha)
    }

    pub fn tmaf_beta(&self) -> Vec3 {
        Vec3::from(self.tmaf.beta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        ControllerGains::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_limits() {
        let mut g = ControllerGains::default();
        g.limits.thrust_min = 0.9;
        g.limits.thrust_max = 0.5;
        assert!(g.validate().is_err());
        let mut g = ControllerGains::default();
        g.tmaf.alpha[2] = -0.1;
        assert!(g.validate().is_err());
    }

    #[test]
    fn partial_toml_keeps_defaults() {
        let g: ControllerGains = toml::from_str("[tmaf]\nalpha = [0.0, 0.0, 0.03]\nbeta = [0.0, 0.0, 0.0]\njerk_filter = false\n").unwrap();
        assert_eq!(g.tmaf.alpha[2], 0.03);
        assert_eq!(g.pid_p, ControllerGains::default().pid_p);
    }

    #[test]
    fn single_key_patches_nested_table() {
        let g: ControllerGains = toml::from_str("[pid_v]\nki = [0.0, 0.0, 0.3]\n").unwrap();
        let d = ControllerGains::default();
        assert_eq!(g.pid_v.ki, [0.0, 0.0, 0.3]);
        assert_eq!(g.pid_v.kp, d.pid_v.kp);
        assert_eq!(g.tmaf, d.tmaf);
        assert!(toml::from_str::<ControllerGains>("[pid_v]\nkq = 1.0\n").is_err());
        let round: ControllerGains = toml::from_str(&toml::to_string(&d).unwrap()).unwrap();
        assert_eq!(round, d);
    }
}
