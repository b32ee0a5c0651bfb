//! Wires plant, sensors, controller and scheduler together for one scenario.

use std::cell::RefCell;
use std::rc::Rc;

use crate::control::{Cascade, ControlError, Stage, StageTick};
use crate::filters::FilterError;
use crate::plant::{Payload, Plant};
use crate::scheduler::{Adjustments, Firing, LoopSpec, Scheduler, SchedulerError, Timeline};
use crate::sensors::{Estimator, Sensors};
use crate::types::{AxisMode, ControlCommand, Vec3, VehicleState};
use crate::GRAVITY;

use super::metrics::Metrics;
use super::record::{RunMeta, RunRecord, Sample};
use super::schema::{Event, Scenario};
use super::ScenarioError;

/// Why a run stopped early.
#[derive(Debug, Clone)]
enum Halt {
    Control(ControlError),
    Filter(FilterError),
    Scheduler(SchedulerError),
    Diverged(String),
}

impl From<SchedulerError> for Halt {
    fn from(e: SchedulerError) -> Self {
        Halt::Scheduler(e)
    }
}

impl From<ControlError> for Halt {
    fn from(e: ControlError) -> Self {
        Halt::Control(e)
    }
}

impl From<FilterError> for Halt {
    fn from(e: FilterError) -> Self {
        Halt::Filter(e)
    }
}

struct Sim {
    plant: Plant,
    sensors: Sensors,
    estimator: Estimator,
    cascade: Cascade,
    command: ControlCommand,
    samples: Vec<Sample>,
    scenario: Rc<Scenario>,
}

impl Sim {
    fn sample(&self, t: f64) -> Sample {
        let segment = self.scenario.segment_index(t);
        let sp = self.scenario.setpoints[segment].setpoint_at(t);
        let params = self.plant.params();
        Sample {
            t,
            state: *self.plant.state(),
            command: self.command,
            position_sp: [0, 1, 2].map(|i| (sp.modes[i] == AxisMode::Position).then_some(sp.values[i])),
            yaw_sp: sp.yaw,
            mass: params.total_mass(),
            efficiency: params.efficiency,
            segment,
        }
    }

    fn control(&mut self, stage: Stage, firing: &Firing) -> Result<(), Halt> {
        let t = firing.t;
        // the inner loop owns attitude; it is always current
        self.estimator.observe_attitude(self.plant.state().attitude, t);
        let sp = self.scenario.setpoint_at(t);
        let tick = StageTick {
            t,
            period: firing.period,
            elapsed: firing.elapsed,
        };
        self.cascade.run_stage(stage, &sp, self.estimator.estimate(), &tick)?;
        self.command = self.cascade.command();
        Ok(())
    }

    fn apply(&mut self, event: &Event, adj: &mut Adjustments) {
        let params = self.plant.params_mut();
        match event {
            Event::AttachPayload { mass, offset, .. } => params.attach(Payload { mass: *mass, offset: *offset }),
            Event::DetachPayload { index, .. } => {
                params.detach(*index);
            }
            Event::BatteryStep { efficiency, .. } => params.efficiency = *efficiency,
            // registered with the plant up front
            Event::Gust { .. } => {}
            Event::RateScale { factor, .. } => {
                for stage in event.targets().unwrap_or_default() {
                    let base = self.scenario.loops.stage(stage).rate_scale;
                    adj.set_rate_scale(stage.name(), base * factor);
                }
            }
            Event::JitterSet { amplitude, .. } => {
                for stage in event.targets().unwrap_or_default() {
                    adj.set_jitter(stage.name(), *amplitude);
                }
            }
        }
    }
}

type Shared = Rc<RefCell<Sim>>;

/// Output of a completed run.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub record: RunRecord,
    pub metrics: Metrics,
}

fn meta(s: &Scenario) -> RunMeta {
    RunMeta {
        scenario: s.name.clone(),
        variant: s.variant.name().to_string(),
        seed: s.seed,
        duration: s.duration,
        jitter_distribution: "uniform",
    }
}

/// Simulate `scenario` and compute its metrics.
///
/// A controller fault (such as the free-fall guard) ends the run with
/// [`ScenarioError::Aborted`], which carries the trace up to the fault.
pub fn run_scenario(scenario: &Scenario) -> Result<RunOutput, ScenarioError> {
    scenario.validate()?;
    let s = Rc::new(scenario.clone());
    let start = VehicleState {
        attitude: crate::types::Attitude::new(0.0, 0.0, s.initial.yaw),
        ..VehicleState::at_position(Vec3::from(s.initial.position))
    };
    let mut plant = Plant::new(s.vehicle.clone(), start, GRAVITY);
    for d in s.events.iter().filter_map(Event::as_disturbance) {
        plant.add_disturbance(d);
    }
    let mut estimator = Estimator::new(&s.sensors, s.gains.filter.spread_deg.to_radians())?;
    if s.gains.da.accel_filter && s.variant == crate::control::Variant::DaGt {
        estimator = estimator.with_accel_filter(s.gains.filter.build()?);
    }
    estimator.initialize(&start, 0.0);
    let mut cascade = Cascade::new(s.variant, &s.gains, s.vehicle.max_thrust, s.loops.spec(Stage::Thrust).period())?;
    if let Some(u) = s.initial.thrust {
        cascade.prime_thrust(u);
    }
    let command = cascade.command();
    let sim: Shared = Rc::new(RefCell::new(Sim {
        plant,
        sensors: Sensors::new(s.sensors.clone(), s.seed),
        estimator,
        cascade,
        command,
        samples: Vec::with_capacity((s.duration / s.loops.log_interval) as usize + 2),
        scenario: s.clone(),
    }));

    let mut sched: Scheduler<Shared, Halt> = Scheduler::new();
    // sensors first so that control firing at the same instant sees fresh data
    sched.register(LoopSpec::new("position_sensor", s.sensors.position_rate), |sim, f, _| {
        let mut sim = sim.borrow_mut();
        let truth = *sim.plant.state();
        let m = sim.sensors.sample_position(f.t, &truth);
        sim.estimator.ingest_position(&m)?;
        Ok(())
    })?;
    sched.register(LoopSpec::new("accel_sensor", s.sensors.accel_rate), |sim, f, _| {
        let mut sim = sim.borrow_mut();
        let truth = *sim.plant.state();
        let m = sim.sensors.sample_accel(f.t, &truth);
        sim.estimator.ingest_accel(&m);
        Ok(())
    })?;
    for stage in Stage::ALL {
        sched.register(s.loops.spec(stage), move |sim, f, _| sim.borrow_mut().control(stage, f))?;
    }
    sched.register(LoopSpec::new("log", 1.0 / s.loops.log_interval).with_phase(s.loops.log_interval), |sim, f, _| {
        let mut sim = sim.borrow_mut();
        let sample = sim.sample(f.t);
        sim.samples.push(sample);
        let st = sample.state;
        if !(crate::types::is_finite_vec(&st.position) && crate::types::is_finite_vec(&st.velocity)) {
            return Err(Halt::Diverged(format!("non-finite state at t = {:.3} s", f.t)));
        }
        Ok(())
    })?;
    for event in s.events.iter().filter(|e| !matches!(e, Event::Gust { .. })) {
        let event = event.clone();
        sched.at(event.time(), move |sim, _, adj| {
            sim.borrow_mut().apply(&event, adj);
            Ok(())
        });
    }

    // the end instant itself is exclusive, so the last log sample falls one
    // interval before `duration`
    let timeline = Timeline {
        dt: s.loops.integration_step,
        end: s.duration,
        seed: s.seed,
    };
    let mut ctx = sim.clone();
    let result = sched.run(&mut ctx, &timeline, |sim, _, to| {
        let mut sim = sim.borrow_mut();
        let cmd = sim.command;
        let step = s.loops.integration_step;
        sim.plant.advance(&cmd, to, step);
        Ok(())
    });
    drop(sched);
    let samples = std::mem::take(&mut sim.borrow_mut().samples);
    let record = RunRecord { meta: meta(&s), samples };
    match result {
        Ok(_) => {
            let metrics = Metrics::compute(&s, &record)?;
            Ok(RunOutput { record, metrics })
        }
        Err(halt) => {
            let time = sim.borrow().plant.time();
            let reason = match halt {
                Halt::Control(e) => e.to_string(),
                Halt::Filter(e) => e.to_string(),
                Halt::Scheduler(e) => return Err(e.into()),
                Halt::Diverged(msg) => msg,
            };
            Err(ScenarioError::Aborted {
                time,
                reason,
                record: Box::new(record),
            })
        }
    }
}
