//! Scenario file format (TOML, `version = 1`) and load-time validation.

use serde::{Deserialize, Serialize};

use crate::control::{ControllerGains, Stage, Variant};
use crate::plant::{Disturbance, VehicleParams, MAX_STEP};
use crate::scheduler::LoopSpec;
use crate::sensors::SensorConfig;
use crate::types::{AxisMode, Setpoint, Vec3};
use crate::GRAVITY;

use super::ScenarioError;

pub const SCHEMA_VERSION: u32 = 1;

/// Timing of one control stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopConfig {
    /// Nominal rate, Hz.
    pub rate: f64,
    pub rate_scale: f64,
    /// Jitter amplitude, s.
    pub jitter: f64,
}

impl LoopConfig {
    fn with_rate(rate: f64) -> Self {
        Self {
            rate,
            rate_scale: 1.0,
            jitter: 0.0,
        }
    }
}

impl Default for LoopConfig {
    fn default() -> Self {
        Self::with_rate(80.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LoopsConfig {
    pub position: LoopConfig,
    pub velocity: LoopConfig,
    pub thrust: LoopConfig,
    /// Plant integration step, s.
    pub integration_step: f64,
    /// Trace sampling interval, s.
    pub log_interval: f64,
}

impl Default for LoopsConfig {
    fn default() -> Self {
        Self {
            position: LoopConfig::with_rate(Stage::Position.default_rate()),
            velocity: LoopConfig::with_rate(Stage::Velocity.default_rate()),
            thrust: LoopConfig::with_rate(Stage::Thrust.default_rate()),
            integration_step: MAX_STEP,
            log_interval: 0.02,
        }
    }
}

impl LoopsConfig {
    pub fn stage(&self, stage: Stage) -> &LoopConfig {
        match stage {
            Stage::Position => &self.position,
            Stage::Velocity => &self.velocity,
            Stage::Thrust => &self.thrust,
        }
    }

    pub fn stage_mut(&mut self, stage: Stage) -> &mut LoopConfig {
        match stage {
            Stage::Position => &mut self.position,
            Stage::Velocity => &mut self.velocity,
            Stage::Thrust => &mut self.thrust,
        }
    }

    /// Multiply every control-stage rate scale by `factor`.
    pub fn scale_all(&mut self, factor: f64) {
        for s in Stage::ALL {
            self.stage_mut(s).rate_scale *= factor;
        }
    }

    pub fn set_jitter(&mut self, jitter: f64) {
        for s in Stage::ALL {
            self.stage_mut(s).jitter = jitter;
        }
    }

    pub fn spec(&self, stage: Stage) -> LoopSpec {
        let c = self.stage(stage);
        LoopSpec::new(stage.name(), c.rate).with_scale(c.rate_scale).with_jitter(c.jitter)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialState {
    pub position: [f64; 3],
    pub yaw: f64,
    /// Thrust the microstepping accumulator starts from; omitted means zero.
    pub thrust: Option<f64>,
}

impl Default for InitialState {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            yaw: 0.0,
            thrust: None,
        }
    }
}

/// Circular reference in the horizontal plane, started at the segment time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Circle {
    pub center: [f64; 3],
    pub radius: f64,
    /// Time per revolution, s.
    pub period: f64,
}

/// One segment of the set-point program, active from `time` until the next.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SetpointSegment {
    pub time: f64,
    /// Flight phase label used for metric windows: takeoff, hover, land or track.
    #[serde(default = "default_phase")]
    pub phase: String,
    #[serde(default = "default_modes")]
    pub modes: [AxisMode; 3],
    #[serde(default)]
    pub values: [f64; 3],
    #[serde(default)]
    pub yaw: f64,
    #[serde(default)]
    pub circle: Option<Circle>,
}

fn default_phase() -> String {
    "hover".into()
}

fn default_modes() -> [AxisMode; 3] {
    [AxisMode::Position; 3]
}

impl SetpointSegment {
    pub fn setpoint_at(&self, t: f64) -> Setpoint {
        match &self.circle {
            Some(c) => {
                let angle = std::f64::consts::TAU * (t - self.time) / c.period;
                Setpoint {
                    modes: [AxisMode::Position; 3],
                    values: Vec3::new(
                        c.center[0] + c.radius * angle.cos(),
                        c.center[1] + c.radius * angle.sin(),
                        c.center[2],
                    ),
                    yaw: self.yaw,
                }
            }
            None => Setpoint {
                modes: self.modes,
                values: Vec3::from(self.values),
                yaw: self.yaw,
            },
        }
    }
}

/// Timed event as written in the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Event {
    AttachPayload {
        time: f64,
        mass: f64,
        #[serde(default)]
        offset: [f64; 3],
    },
    /// Remove the payload at `index` in attachment order (initial payloads first).
    DetachPayload { time: f64, index: usize },
    BatteryStep { time: f64, efficiency: f64 },
    Gust { time: f64, force: [f64; 3], duration: f64 },
    /// Scale a control loop's rate; `loop = "all"` targets every stage.
    RateScale {
        time: f64,
        #[serde(rename = "loop")]
        target: String,
        factor: f64,
    },
    JitterSet {
        time: f64,
        #[serde(rename = "loop")]
        target: String,
        amplitude: f64,
    },
}

impl Event {
    pub fn time(&self) -> f64 {
        match self {
            Event::AttachPayload { time, .. }
            | Event::DetachPayload { time, .. }
            | Event::BatteryStep { time, .. }
            | Event::Gust { time, .. }
            | Event::RateScale { time, .. }
            | Event::JitterSet { time, .. } => *time,
        }
    }

    pub fn label(&self) -> String {
        match self {
            Event::AttachPayload { mass, .. } => format!("attach {mass} kg"),
            Event::DetachPayload { index, .. } => format!("detach #{index}"),
            Event::BatteryStep { efficiency, .. } => format!("battery {efficiency}"),
            Event::Gust { force, .. } => format!("gust [{} {} {}] N", force[0], force[1], force[2]),
            Event::RateScale { target, factor, .. } => format!("rate {target} x{factor}"),
            Event::JitterSet { target, amplitude, .. } => format!("jitter {target} {amplitude} s"),
        }
    }

    pub fn as_disturbance(&self) -> Option<Disturbance> {
        match self {
            Event::Gust { time, force, duration } => Some(Disturbance {
                force: *force,
                start: *time,
                duration: *duration,
            }),
            _ => None,
        }
    }

    /// Control stages an adjustment event applies to.
    pub fn targets(&self) -> Result<Vec<Stage>, String> {
        let target = match self {
            Event::RateScale { target, .. } | Event::JitterSet { target, .. } => target,
            _ => return Ok(Vec::new()),
        };
        if target == "all" {
            return Ok(Stage::ALL.to_vec());
        }
        Stage::ALL
            .iter()
            .find(|s| s.name() == target)
            .map(|s| vec![*s])
            .ok_or_else(|| format!("unknown loop '{target}' (expected position, velocity, thrust or all)"))
    }
}

/// A complete, validated scenario.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub version: u32,
    pub name: String,
    #[serde(default)]
    pub description: String,
    /// s
    pub duration: f64,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_variant")]
    pub variant: Variant,
    #[serde(default)]
    pub vehicle: VehicleParams,
    #[serde(default)]
    pub sensors: SensorConfig,
    #[serde(default)]
    pub loops: LoopsConfig,
    #[serde(default)]
    pub gains: ControllerGains,
    #[serde(default)]
    pub initial: InitialState,
    pub setpoints: Vec<SetpointSegment>,
    #[serde(default)]
    pub events: Vec<Event>,
}

fn default_variant() -> Variant {
    Variant::TmafDmc
}

fn line_column(text: &str, offset: usize) -> (usize, usize) {
    let before = &text[..offset.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

impl Scenario {
    /// Parse and validate a scenario document.
    pub fn from_toml(text: &str) -> Result<Self, ScenarioError> {
        let scenario: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = e.span().map_or((0, 0), |s| line_column(text, s.start));
            ScenarioError::Parse {
                line,
                column,
                message: e.message().to_string(),
            }
        })?;
        scenario.validate()?;
        Ok(scenario)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes")
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let fail = |field: &str, msg: String| Err(ScenarioError::Validation {
            field: field.to_string(),
            message: msg,
        });
        if self.version != SCHEMA_VERSION {
            return fail("version", format!("unsupported schema version {} (expected {SCHEMA_VERSION})", self.version));
        }
        if self.name.trim().is_empty() {
            return fail("name", "must not be empty".into());
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return fail("duration", "must be positive".into());
        }
        if let Err(e) = self.vehicle.validate(GRAVITY) {
            return fail("vehicle", e);
        }
        if let Err(e) = self.sensors.validate() {
            return fail("sensors", e);
        }
        if let Err(e) = self.gains.validate() {
            return fail("gains", e.to_string());
        }
        if !(self.loops.integration_step > 0.0 && self.loops.integration_step <= MAX_STEP) {
            return fail("loops.integration_step", format!("must lie in (0, {MAX_STEP}] s"));
        }
        if !(self.loops.log_interval > 0.0) {
            return fail("loops.log_interval", "must be positive".into());
        }
        for stage in Stage::ALL {
            if let Err(e) = self.loops.spec(stage).validate() {
                return fail(&format!("loops.{}", stage.name()), e.to_string());
            }
        }
        if self.initial.position.iter().any(|c| !c.is_finite()) || self.initial.position[2] < 0.0 {
            return fail("initial.position", "must be finite with z >= 0".into());
        }
        if let Some(u) = self.initial.thrust {
            if !(u >= 0.0 && u <= 1.0) {
                return fail("initial.thrust", "must lie in [0, 1]".into());
            }
        }

        if self.setpoints.is_empty() {
            return fail("setpoints", "program must contain at least one segment".into());
        }
        if self.setpoints[0].time != 0.0 {
            return fail("setpoints[0].time", "program must start at t = 0".into());
        }
        for (i, seg) in self.setpoints.iter().enumerate() {
            let field = format!("setpoints[{i}]");
            if !(seg.time >= 0.0 && seg.time <= self.duration) {
                return fail(&field, format!("time {} outside [0, {}]", seg.time, self.duration));
            }
            if i > 0 && seg.time <= self.setpoints[i - 1].time {
                return fail(&field, "segment times must be strictly increasing".into());
            }
            if !matches!(seg.phase.as_str(), "takeoff" | "hover" | "land" | "track") {
                return fail(&field, format!("unknown phase '{}' (takeoff, hover, land or track)", seg.phase));
            }
            if seg.values.iter().any(|v| !v.is_finite()) || !seg.yaw.is_finite() {
                return fail(&field, "values must be finite".into());
            }
            if let Some(c) = &seg.circle {
                if !(c.radius > 0.0 && c.period > 0.0) {
                    return fail(&field, "circle radius and period must be positive".into());
                }
            }
        }

        let mut payloads = self.vehicle.payloads.len();
        let mut events: Vec<&Event> = self.events.iter().collect();
        events.sort_by(|a, b| a.time().total_cmp(&b.time()));
        for (i, e) in self.events.iter().enumerate() {
            let field = format!("events[{i}]");
            let t = e.time();
            if !(t >= 0.0 && t <= self.duration) {
                return fail(&field, format!("time {t} outside [0, {}]", self.duration));
            }
            let bad = match e {
                Event::AttachPayload { mass, offset, .. } => {
                    (!(*mass > 0.0) || offset.iter().any(|c| !c.is_finite())).then(|| "payload mass must be positive".to_string())
                }
                Event::BatteryStep { efficiency, .. } => {
                    (!(*efficiency > 0.0 && *efficiency <= 1.0)).then(|| "efficiency must lie in (0, 1]".to_string())
                }
                Event::Gust { force, duration, .. } => (!(*duration > 0.0) || force.iter().any(|c| !c.is_finite()))
                    .then(|| "gust duration must be positive and force finite".to_string()),
                Event::RateScale { factor, .. } => (!(*factor > 0.0 && factor.is_finite())).then(|| "factor must be positive".to_string()),
                Event::JitterSet { amplitude, .. } => (!(*amplitude >= 0.0)).then(|| "amplitude must be non-negative".to_string()),
                Event::DetachPayload { .. } => None,
            };
            if let Some(msg) = bad {
                return fail(&field, msg);
            }
            if let Err(msg) = e.targets() {
                return fail(&field, msg);
            }
        }
        // replay attach/detach in time order so indices can be checked
        for e in events {
            match e {
                Event::AttachPayload { .. } => payloads += 1,
                Event::DetachPayload { index, time } => {
                    if *index >= payloads {
                        return fail("events", format!("detach at t={time} refers to payload #{index}, only {payloads} attached"));
                    }
                    payloads -= 1;
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Index of the program segment active at `t`.
    pub fn segment_index(&self, t: f64) -> usize {
        self.setpoints.partition_point(|s| s.time <= t).saturating_sub(1)
    }

    pub fn setpoint_at(&self, t: f64) -> Setpoint {
        self.setpoints[self.segment_index(t)].setpoint_at(t)
    }

    pub fn phase_at(&self, t: f64) -> &str {
        &self.setpoints[self.segment_index(t)].phase
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
version = 1
name = "t"
duration = 10.0

[[setpoints]]
time = 0.0
values = [0.0, 0.0, 0.5]
"#;

    #[test]
    fn minimal_document_loads_with_defaults() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.variant, Variant::TmafDmc);
        assert_eq!(s.loops.thrust.rate, 80.0);
        assert_eq!(s.setpoint_at(3.0).values, Vec3::new(0.0, 0.0, 0.5));
        assert_eq!(s.phase_at(3.0), "hover");
    }

    #[test]
    fn parse_errors_carry_position() {
        let text = MINIMAL.replace("duration = 10.0", "duration = \"ten\"");
        match Scenario::from_toml(&text) {
            Err(ScenarioError::Parse { line, .. }) => assert_eq!(line, 4),
            other => panic!("unexpected {other:?}"),
        }
        let text = format!("{MINIMAL}\nbogus = 1\n");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Parse { .. })));
    }

    #[test]
    fn event_beyond_duration_rejected() {
        let text = format!("{MINIMAL}\n[[events]]\nkind = \"battery_step\"\ntime = 12.0\nefficiency = 0.9\n");
        match Scenario::from_toml(&text) {
            Err(ScenarioError::Validation { field, .. }) => assert_eq!(field, "events[0]"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_is_mandatory() {
        let text = MINIMAL.replace("version = 1\n", "");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Parse { .. })));
        let text = MINIMAL.replace("version = 1", "version = 2");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Validation { .. })));
    }

    #[test]
    fn detach_index_checked_in_time_order() {
        let text = format!(
            "{MINIMAL}\n[[events]]\nkind = \"detach_payload\"\ntime = 5.0\nindex = 0\n\n[[events]]\nkind = \"attach_payload\"\ntime = 2.0\nmass = 0.5\n"
        );
        Scenario::from_toml(&text).unwrap();
        let text = text.replace("time = 2.0", "time = 6.0");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Validation { .. })));
    }

    #[test]
    fn unknown_loop_target_rejected() {
        let text = format!("{MINIMAL}\n[[events]]\nkind = \"rate_scale\"\ntime = 1.0\nloop = \"attitude\"\nfactor = 0.5\n");
        assert!(matches!(Scenario::from_toml(&text), Err(ScenarioError::Validation { .. })));
    }

    #[test]
    fn circle_segment_moves_on_radius() {
        let seg = SetpointSegment {
            time: 2.0,
            phase: "track".into(),
            modes: default_modes(),
            values: [0.0; 3],
            yaw: 0.0,
            circle: Some(Circle { center: [0.0, 0.0, 1.0], radius: 0.7, period: 8.0 }),
        };
        for t in [2.0, 3.3, 7.9] {
            let p = seg.setpoint_at(t).values;
            assert!(((p.x.powi(2) + p.y.powi(2)).sqrt() - 0.7).abs() < 1e-12);
            assert_eq!(p.z, 1.0);
        }
    }

    #[test]
    fn round_trips_through_toml() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(Scenario::from_toml(&s.to_toml()).unwrap(), s);
    }
}
