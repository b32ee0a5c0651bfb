//! Rate-limited noisy measurements and a sample-and-hold state estimator.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::filters::{CwmaFilter, Differentiator, FilterError};
use crate::types::{Attitude, Vec3, VehicleState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SensorConfig {
    /// Position fix rate, Hz.
    pub position_rate: f64,
    /// Accelerometer rate, Hz.
    pub accel_rate: f64,
    /// Position noise standard deviation, m.
    pub position_noise: f64,
    /// Accelerometer noise standard deviation, m/s².
    pub accel_noise: f64,
    /// Constant accelerometer bias, m/s².
    pub accel_bias: [f64; 3],
    /// Window of the velocity smoothing filter.
    pub velocity_window: usize,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self {
            position_rate: 30.0,
            accel_rate: 80.0,
            position_noise: 0.01,
            accel_noise: 0.05,
            accel_bias: [0.0; 3],
            velocity_window: 4,
        }
    }
}

impl SensorConfig {
    /// Noise-free configuration at the default rates.
    pub fn ideal() -> Self {
        Self {
            position_noise: 0.0,
            accel_noise: 0.0,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        if !(self.position_rate > 0.0 && self.accel_rate > 0.0) {
            return Err("sensor rates must be positive".into());
        }
        if !(self.position_noise >= 0.0 && self.accel_noise >= 0.0) {
            return Err("sensor noise must be non-negative".into());
        }
        if self.accel_bias.iter().any(|b| !b.is_finite()) {
            return Err("accelerometer bias must be finite".into());
        }
        if self.velocity_window == 0 {
            return Err("velocity window must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PositionSample {
    pub t: f64,
    pub position: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccelSample {
    pub t: f64,
    pub accel: Vec3,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Measurements {
    pub position: Option<PositionSample>,
    pub accel: Option<AccelSample>,
}

/// Measurement source. Each channel owns an independent seeded stream so the
/// noise sequence does not depend on how the channels interleave.
#[derive(Debug, Clone)]
pub struct Sensors {
    config: SensorConfig,
    position_rng: ChaCha8Rng,
    accel_rng: ChaCha8Rng,
    position_ticks: u64,
    accel_ticks: u64,
}

impl Sensors {
    pub fn new(config: SensorConfig, seed: u64) -> Self {
        let mut position_rng = ChaCha8Rng::seed_from_u64(seed);
        position_rng.set_stream(1);
        let mut accel_rng = ChaCha8Rng::seed_from_u64(seed);
        accel_rng.set_stream(2);
        Self {
            config,
            position_rng,
            accel_rng,
            position_ticks: 0,
            accel_ticks: 0,
        }
    }

    pub fn config(&self) -> &SensorConfig {
        &self.config
    }

    fn noise(rng: &mut ChaCha8Rng, sigma: f64) -> Vec3 {
        if sigma == 0.0 {
            return Vec3::zeros();
        }
        let n = Normal::new(0.0, sigma).expect("sigma validated non-negative");
        Vec3::new(n.sample(rng), n.sample(rng), n.sample(rng))
    }

    pub fn sample_position(&mut self, t: f64, truth: &VehicleState) -> PositionSample {
        let noise = Self::noise(&mut self.position_rng, self.config.position_noise);
        PositionSample {
            t,
            position: truth.position + noise,
        }
    }

    pub fn sample_accel(&mut self, t: f64, truth: &VehicleState) -> AccelSample {
        let noise = Self::noise(&mut self.accel_rng, self.config.accel_noise);
        AccelSample {
            t,
            accel: truth.acceleration + Vec3::from(self.config.accel_bias) + noise,
        }
    }

    /// Polls both channels at time `t`; each emits once its next rate
    /// boundary has been reached. Times must be non-decreasing.
    pub fn sample(&mut self, t: f64, truth: &VehicleState) -> Measurements {
        const SLACK: f64 = 1e-9;
        let mut out = Measurements::default();
        if t + SLACK >= self.position_ticks as f64 / self.config.position_rate {
            self.position_ticks += 1;
            out.position = Some(self.sample_position(t, truth));
        }
        if t + SLACK >= self.accel_ticks as f64 / self.config.accel_rate {
            self.accel_ticks += 1;
            out.accel = Some(self.sample_accel(t, truth));
        }
        out
    }
}

/// State estimate handed to the controllers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatedState {
    pub position: Vec3,
    pub velocity: Vec3,
    pub acceleration: Vec3,
    pub attitude: Attitude,
    pub position_time: f64,
    pub accel_time: f64,
    pub attitude_time: f64,
}

impl Default for EstimatedState {
    fn default() -> Self {
        Self {
            position: Vec3::zeros(),
            velocity: Vec3::zeros(),
            acceleration: Vec3::zeros(),
            attitude: Attitude::level(),
            position_time: 0.0,
            accel_time: 0.0,
            attitude_time: 0.0,
        }
    }
}

/// Sample-and-hold estimator: position is the latest fix, velocity the
/// smoothed backward difference of fixes, acceleration the raw latest
/// accelerometer sample (optionally smoothed), attitude passed through.
#[derive(Debug, Clone)]
pub struct Estimator {
    estimate: EstimatedState,
    velocity_diff: [Differentiator; 3],
    velocity_filter: [CwmaFilter; 3],
    accel_filter: Option<[CwmaFilter; 3]>,
    fixes: u64,
}

impl Estimator {
    pub fn new(config: &SensorConfig, spread: f64) -> Result<Self, FilterError> {
        let diff = Differentiator::new(1.0 / config.position_rate)?;
        let filter = CwmaFilter::new(config.velocity_window, spread)?;
        Ok(Self {
            estimate: EstimatedState::default(),
            velocity_diff: [diff.clone(), diff.clone(), diff],
            velocity_filter: [filter.clone(), filter.clone(), filter],
            accel_filter: None,
            fixes: 0,
        })
    }

    /// Enables smoothing of the acceleration channel.
    pub fn with_accel_filter(mut self, filter: CwmaFilter) -> Self {
        self.accel_filter = Some([filter.clone(), filter.clone(), filter]);
        self
    }

    /// Seeds the estimate with a known initial state (e.g. resting on the pad).
    pub fn initialize(&mut self, truth: &VehicleState, t: f64) {
        self.estimate = EstimatedState {
            position: truth.position,
            velocity: truth.velocity,
            acceleration: truth.acceleration,
            attitude: truth.attitude,
            position_time: t,
            accel_time: t,
            attitude_time: t,
        };
    }

    pub fn estimate(&self) -> &EstimatedState {
        &self.estimate
    }

    pub fn ingest_position(&mut self, s: &PositionSample) -> Result<(), FilterError> {
        for i in 0..3 {
            let d = self.velocity_diff[i].update(s.position[i], s.t)?;
            // the first fix has no history; keep it out of the average
            if self.fixes > 0 {
                self.estimate.velocity[i] = self.velocity_filter[i].push(d);
            }
        }
        self.fixes += 1;
        self.estimate.position = s.position;
        self.estimate.position_time = s.t;
        Ok(())
    }

    pub fn ingest_accel(&mut self, s: &AccelSample) {
        let mut a = s.accel;
        if let Some(filters) = self.accel_filter.as_mut() {
            for i in 0..3 {
                a[i] = filters[i].push(a[i]);
            }
        }
        self.estimate.acceleration = a;
        self.estimate.accel_time = s.t;
    }

    pub fn observe_attitude(&mut self, att: Attitude, t: f64) {
        self.estimate.attitude = att;
        self.estimate.attitude_time = t;
    }

    /// Applies whatever [`Sensors::sample`] produced.
    pub fn update(&mut self, m: &Measurements) -> Result<&EstimatedState, FilterError> {
        if let Some(p) = &m.position {
            self.ingest_position(p)?;
        }
        if let Some(a) = &m.accel {
            self.ingest_accel(a);
        }
        Ok(&self.estimate)
    }
}
