//! Deterministic multi-rate executor on a virtual microsecond clock.
//!
//! Loops fire at their nominal ticks plus a fresh uniform jitter draw. Between
//! firings the integrator callback advances the plant in sub-steps no longer
//! than the timeline step. Simultaneous firings run one-shot events first,
//! then loops, each group in registration order.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

const US_PER_S: f64 = 1e6;

pub fn to_micros(t: f64) -> i64 {
    (t * US_PER_S).round() as i64
}

pub fn to_seconds(us: i64) -> f64 {
    us as f64 / US_PER_S
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SchedulerError {
    #[error("loop '{0}' is already registered")]
    DuplicateName(String),
    #[error("loop '{name}' has non-positive scaled rate {rate}")]
    InvalidRate { name: String, rate: f64 },
    #[error("loop '{name}': jitter {jitter} s must be non-negative and below half the period {period} s")]
    JitterTooLarge { name: String, jitter: f64, period: f64 },
    #[error("no loop named '{0}'")]
    UnknownLoop(String),
    #[error("invalid timeline: {0}")]
    Timeline(String),
    #[error("nothing to run: no loops registered")]
    NoLoops,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec {
    pub name: String,
    /// Nominal rate, Hz.
    pub rate: f64,
    pub rate_scale: f64,
    /// Jitter amplitude, s; each firing is displaced by a draw from [−J, +J].
    pub jitter: f64,
    /// Time of the first nominal tick, s.
    pub phase: f64,
}

impl LoopSpec {
    pub fn new(name: impl Into<String>, rate: f64) -> Self {
        Self {
            name: name.into(),
            rate,
            rate_scale: 1.0,
            jitter: 0.0,
            phase: 0.0,
        }
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.rate_scale = scale;
        self
    }

    pub fn with_jitter(mut self, jitter: f64) -> Self {
        self.jitter = jitter;
        self
    }

    pub fn with_phase(mut self, phase: f64) -> Self {
        self.phase = phase;
        self
    }

    pub fn scaled_rate(&self) -> f64 {
        self.rate * self.rate_scale
    }

    pub fn period(&self) -> f64 {
        1.0 / self.scaled_rate()
    }

    pub fn validate(&self) -> Result<(), SchedulerError> {
        let rate = self.scaled_rate();
        if !(rate.is_finite() && rate > 0.0) {
            return Err(SchedulerError::InvalidRate {
                name: self.name.clone(),
                rate,
            });
        }
        let period = self.period();
        if !(self.jitter >= 0.0 && self.jitter < 0.5 * period) {
            return Err(SchedulerError::JitterTooLarge {
                name: self.name.clone(),
                jitter: self.jitter,
                period,
            });
        }
        if !(self.phase >= 0.0 && self.phase.is_finite()) {
            return Err(SchedulerError::Timeline(format!("loop '{}' has a negative phase", self.name)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LoopHandle(pub usize);

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Timeline {
    /// Longest plant integration step, s.
    pub dt: f64,
    /// End time, s (exclusive for firings).
    pub end: f64,
    pub seed: u64,
}

impl Timeline {
    fn validate(&self) -> Result<(), SchedulerError> {
        if !(self.dt > 0.0 && to_micros(self.dt) >= 1) {
            return Err(SchedulerError::Timeline("integration step must be at least 1 µs".into()));
        }
        if !(self.end > 0.0 && self.end.is_finite()) {
            return Err(SchedulerError::Timeline("end time must be positive".into()));
        }
        Ok(())
    }
}

/// What a callback learns about its firing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Firing {
    pub handle: LoopHandle,
    /// Actual firing time, s.
    pub t: f64,
    /// Nominal (unjittered) tick time, s.
    pub nominal: f64,
    /// Nominal period at this firing, s.
    pub period: f64,
    /// Time since this loop last fired, or the nominal period on the first firing, s.
    pub elapsed: f64,
    /// Zero-based firing count of this loop.
    pub index: u64,
}

/// Loop adjustments requested from inside a callback; applied once it returns.
#[derive(Debug, Default)]
pub struct Adjustments {
    requests: Vec<(String, Adjustment)>,
}

#[derive(Debug, Clone, Copy)]
enum Adjustment {
    RateScale(f64),
    Jitter(f64),
}

impl Adjustments {
    pub fn set_rate_scale(&mut self, name: &str, scale: f64) {
        self.requests.push((name.to_string(), Adjustment::RateScale(scale)));
    }

    pub fn set_jitter(&mut self, name: &str, jitter: f64) {
        self.requests.push((name.to_string(), Adjustment::Jitter(jitter)));
    }
}

pub type LoopCallback<C, E> = Box<dyn FnMut(&mut C, &Firing, &mut Adjustments) -> Result<(), E>>;
pub type EventCallback<C, E> = Box<dyn FnMut(&mut C, f64, &mut Adjustments) -> Result<(), E>>;

struct LoopState<C, E> {
    spec: LoopSpec,
    callback: LoopCallback<C, E>,
    rng: ChaCha8Rng,
    /// Nominal time of tick `anchor_tick`, µs.
    anchor_us: i64,
    anchor_tick: u64,
    tick: u64,
    next_nominal_us: i64,
    next_fire_us: i64,
    last_fire_us: Option<i64>,
}

impl<C, E> LoopState<C, E> {
    fn period_us(&self) -> f64 {
        self.spec.period() * US_PER_S
    }

    fn schedule(&mut self, now_us: i64) {
        let k = self.tick - self.anchor_tick;
        self.next_nominal_us = self.anchor_us + (k as f64 * self.period_us()).round() as i64;
        let jitter_us = to_micros(self.spec.jitter);
        let offset = if jitter_us > 0 {
            self.rng.random_range(-jitter_us..=jitter_us)
        } else {
            0
        };
        let floor = self.last_fire_us.map_or(now_us, |last| now_us.max(last + 1));
        self.next_fire_us = (self.next_nominal_us + offset).max(floor);
    }

    /// Re-anchor the nominal grid at the last tick before changing the period.
    fn reanchor(&mut self) {
        let last_nominal = if self.tick == 0 {
            self.anchor_us
        } else {
            let k = self.tick - 1 - self.anchor_tick;
            self.anchor_us + (k as f64 * self.period_us()).round() as i64
        };
        if self.tick > 0 {
            self.anchor_tick = self.tick - 1;
            self.anchor_us = last_nominal;
        }
    }
}

struct OneShot<C, E> {
    at_us: i64,
    callback: Option<EventCallback<C, E>>,
}

/// Counters from a completed run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunStats {
    pub firings: Vec<u64>,
    pub end: f64,
    /// `(loop, firing time µs)` for every firing, when recording is enabled.
    pub log: Vec<(LoopHandle, i64)>,
}

pub struct Scheduler<C, E> {
    loops: Vec<LoopState<C, E>>,
    events: Vec<OneShot<C, E>>,
    record: bool,
}

impl<C, E: From<SchedulerError>> Default for Scheduler<C, E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<C, E: From<SchedulerError>> Scheduler<C, E> {
    pub fn new() -> Self {
        Self {
            loops: Vec::new(),
            events: Vec::new(),
            record: false,
        }
    }

    /// Keep every firing time in [`RunStats::log`].
    pub fn record_firings(mut self, on: bool) -> Self {
        self.record = on;
        self
    }

    pub fn register(
        &mut self,
        spec: LoopSpec,
        callback: impl FnMut(&mut C, &Firing, &mut Adjustments) -> Result<(), E> + 'static,
    ) -> Result<LoopHandle, SchedulerError> {
        spec.validate()?;
        if self.loops.iter().any(|l| l.spec.name == spec.name) {
            return Err(SchedulerError::DuplicateName(spec.name));
        }
        let anchor_us = to_micros(spec.phase);
        self.loops.push(LoopState {
            spec,
            callback: Box::new(callback),
            rng: ChaCha8Rng::seed_from_u64(0),
            anchor_us,
            anchor_tick: 0,
            tick: 0,
            next_nominal_us: anchor_us,
            next_fire_us: anchor_us,
            last_fire_us: None,
        });
        Ok(LoopHandle(self.loops.len() - 1))
    }

    /// Run `callback` once at time `t`.
    pub fn at(&mut self, t: f64, callback: impl FnMut(&mut C, f64, &mut Adjustments) -> Result<(), E> + 'static) {
        self.events.push(OneShot {
            at_us: to_micros(t),
            callback: Some(Box::new(callback)),
        });
    }

    pub fn spec(&self, handle: LoopHandle) -> &LoopSpec {
        &self.loops[handle.0].spec
    }

    pub fn handle(&self, name: &str) -> Option<LoopHandle> {
        self.loops.iter().position(|l| l.spec.name == name).map(LoopHandle)
    }

    fn apply(&mut self, adj: Adjustments, now_us: i64) -> Result<(), SchedulerError> {
        for (name, a) in adj.requests {
            let idx = self.handle(&name).ok_or_else(|| SchedulerError::UnknownLoop(name.clone()))?.0;
            let l = &mut self.loops[idx];
            let mut spec = l.spec.clone();
            match a {
                Adjustment::RateScale(s) => spec.rate_scale = s,
                Adjustment::Jitter(j) => spec.jitter = j,
            }
            spec.validate()?;
            l.reanchor();
            l.spec = spec;
            l.schedule(now_us);
        }
        Ok(())
    }

    /// Execute until `timeline.end`. `integrate(ctx, from, to)` advances the
    /// plant; it is always called with `to − from ≤ timeline.dt`.
    pub fn run(
        &mut self,
        ctx: &mut C,
        timeline: &Timeline,
        mut integrate: impl FnMut(&mut C, f64, f64) -> Result<(), E>,
    ) -> Result<RunStats, E> {
        timeline.validate()?;
        if self.loops.is_empty() {
            return Err(SchedulerError::NoLoops.into());
        }
        for (i, l) in self.loops.iter_mut().enumerate() {
            let mut rng = ChaCha8Rng::seed_from_u64(timeline.seed);
            rng.set_stream(100 + i as u64);
            l.rng = rng;
            l.tick = 0;
            l.anchor_tick = 0;
            l.anchor_us = to_micros(l.spec.phase);
            l.last_fire_us = None;
            l.schedule(0);
        }
        let end_us = to_micros(timeline.end);
        let dt_us = to_micros(timeline.dt);
        let mut now_us = 0i64;
        let mut stats = RunStats {
            firings: vec![0; self.loops.len()],
            ..RunStats::default()
        };

        loop {
            // earliest pending one-shot, then earliest loop; ties go to the lower index
            let event = self
                .events
                .iter()
                .enumerate()
                .filter(|(_, e)| e.callback.is_some())
                .min_by_key(|(i, e)| (e.at_us, *i))
                .map(|(i, e)| (e.at_us, i));
            let next_loop = self
                .loops
                .iter()
                .enumerate()
                .min_by_key(|(i, l)| (l.next_fire_us, *i))
                .map(|(i, l)| (l.next_fire_us, i))
                .expect("at least one loop");
            let (due_us, is_event, idx) = match event {
                Some((t, i)) if t <= next_loop.0 => (t, true, i),
                _ => (next_loop.0, false, next_loop.1),
            };
            if due_us >= end_us {
                break;
            }
            let target = due_us.max(now_us);
            while now_us < target {
                let step = (target - now_us).min(dt_us);
                integrate(ctx, to_seconds(now_us), to_seconds(now_us + step))?;
                now_us += step;
            }

            let mut adj = Adjustments::default();
            if is_event {
                let mut cb = self.events[idx].callback.take().expect("pending event");
                cb(ctx, to_seconds(now_us), &mut adj)?;
            } else {
                let l = &mut self.loops[idx];
                let firing = Firing {
                    handle: LoopHandle(idx),
                    t: to_seconds(now_us),
                    nominal: to_seconds(l.next_nominal_us),
                    period: l.spec.period(),
                    elapsed: l.last_fire_us.map_or(l.spec.period(), |p| to_seconds(now_us - p)),
                    index: l.tick,
                };
                (l.callback)(ctx, &firing, &mut adj)?;
                l.last_fire_us = Some(now_us);
                l.tick += 1;
                l.schedule(now_us);
                stats.firings[idx] += 1;
                if self.record {
                    stats.log.push((LoopHandle(idx), now_us));
                }
            }
            self.apply(adj, now_us)?;
        }
        while now_us < end_us {
            let step = (end_us - now_us).min(dt_us);
            integrate(ctx, to_seconds(now_us), to_seconds(now_us + step))?;
            now_us += step;
        }
        stats.end = to_seconds(end_us);
        Ok(stats)
    }
}
