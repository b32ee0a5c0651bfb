//! Tracking metrics over flight-phase windows.

use std::io::{self, Write};

use thiserror::Error;

use crate::kinematics::wrap_angle;

use super::record::{format_float, RunRecord, Sample};
use super::schema::Scenario;

/// Position band used for settling, m.
pub const SETTLE_BAND: f64 = 0.05;
/// How long the error must stay inside the band, s.
pub const SETTLE_HOLD: f64 = 1.0;
/// Length of the steady-state averaging window at the end of the hover window, s.
pub const STEADY_WINDOW: f64 = 5.0;

pub const AXES: [&str; 3] = ["x", "y", "z"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("metric window contains no samples")]
    EmptyWindow,
}

fn per_axis(samples: &[Sample], reduce: impl Fn(&[f64]) -> f64) -> Result<[f64; 3], MetricsError> {
    if samples.is_empty() {
        return Err(MetricsError::EmptyWindow);
    }
    Ok([0, 1, 2].map(|i| {
        let errors: Vec<f64> = samples.iter().filter_map(|s| s.error()[i]).collect();
        if errors.is_empty() {
            f64::NAN
        } else {
            reduce(&errors)
        }
    }))
}

pub fn rmse(errors: &[f64]) -> f64 {
    (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt()
}

pub fn peak(errors: &[f64]) -> f64 {
    errors.iter().fold(0.0, |m, e| m.max(e.abs()))
}

/// Per-axis RMSE of position error; NaN for axes never position-controlled in the window.
pub fn compute_rmse(samples: &[Sample]) -> Result<[f64; 3], MetricsError> {
    per_axis(samples, rmse)
}

/// Per-axis largest |position error|.
pub fn compute_peak_offset(samples: &[Sample]) -> Result<[f64; 3], MetricsError> {
    per_axis(samples, peak)
}

/// Start of the first stretch at or after `from` where every position-controlled
/// axis stays within `band` for `hold` seconds (or until the trace ends).
pub fn settle_time(samples: &[Sample], from: f64, band: f64, hold: f64) -> Option<f64> {
    let mut start: Option<f64> = None;
    for s in samples.iter().filter(|s| s.t >= from) {
        let inside = s.error().iter().all(|e| e.is_none_or(|e| e.abs() < band));
        match (inside, start) {
            (true, None) => start = Some(s.t),
            (true, Some(t0)) if s.t - t0 >= hold => return Some(t0),
            (false, _) => start = None,
            _ => {}
        }
    }
    // a stretch that lasts to the end of the trace counts as settled
    start
}

/// Start of the first `hold`-long stretch at or after `from` with |z error| < `band`.
fn altitude_settle(samples: &[Sample], from: f64, band: f64, hold: f64) -> Option<f64> {
    let mut start: Option<f64> = None;
    for s in samples.iter().filter(|s| s.t >= from) {
        match (s.error()[2].is_some_and(|e| e.abs() < band), start) {
            (true, None) => start = Some(s.t),
            (true, Some(t0)) if s.t - t0 >= hold => return Some(t0),
            (false, _) => start = None,
            _ => {}
        }
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowMetrics {
    pub name: String,
    pub start: f64,
    pub end: f64,
    pub rmse: [f64; 3],
    pub peak: [f64; 3],
    pub thrust_mean: f64,
    pub thrust_max: f64,
    pub yaw_rmse: f64,
}

impl WindowMetrics {
    pub fn compute(name: &str, record: &RunRecord, start: f64, end: f64) -> Result<Self, MetricsError> {
        let w = record.window(start, end);
        let rmse = compute_rmse(w)?;
        let peak = compute_peak_offset(w)?;
        let n = w.len() as f64;
        let thrust_mean = w.iter().map(|s| s.command.thrust).sum::<f64>() / n;
        let thrust_max = w.iter().fold(f64::NEG_INFINITY, |m, s| m.max(s.command.thrust));
        let yaw_errors: Vec<f64> = w.iter().map(|s| wrap_angle(s.state.attitude.yaw - s.yaw_sp)).collect();
        Ok(Self {
            name: name.to_string(),
            start,
            end,
            rmse,
            peak,
            thrust_mean,
            thrust_max,
            yaw_rmse: self::rmse(&yaw_errors),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EventSettling {
    pub time: f64,
    pub label: String,
    /// Seconds from the event until the position error settles; `None` if it never does.
    pub settle: Option<f64>,
    /// Largest error per axis from the event until the next one (or the end).
    pub peak: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub windows: Vec<WindowMetrics>,
    pub settling: Vec<EventSettling>,
    /// Mean position error over the last seconds of the hover window.
    pub steady_state: [f64; 3],
    /// False when the altitude never settled and the hover window fell back
    /// to the end of takeoff.
    pub hover_settled: bool,
}

impl Metrics {
    pub fn compute(scenario: &Scenario, record: &RunRecord) -> Result<Self, MetricsError> {
        let end = record.end_time() + 1e-9;
        let samples = &record.samples;
        let phase_start = |name: &str| scenario.setpoints.iter().find(|s| s.phase == name).map(|s| s.time);
        let airborne_from = scenario
            .setpoints
            .iter()
            .find(|s| s.phase != "takeoff")
            .map_or(end, |s| s.time);
        let land_from = phase_start("land").unwrap_or(end).min(end);

        let mut windows = Vec::new();
        if let Some(t0) = phase_start("takeoff") {
            windows.push(WindowMetrics::compute("takeoff", record, t0, airborne_from.min(land_from))?);
        }
        let settled = altitude_settle(samples, airborne_from, SETTLE_BAND, SETTLE_HOLD).filter(|t| *t < land_from);
        let hover_start = settled.unwrap_or(airborne_from);
        let hover = WindowMetrics::compute("hover", record, hover_start, land_from)?;
        let steady = record.window((land_from - STEADY_WINDOW).max(hover_start), land_from);
        let steady_state = per_axis(steady, |e| e.iter().sum::<f64>() / e.len() as f64)?;
        windows.push(hover);
        if land_from < end {
            windows.push(WindowMetrics::compute("land", record, land_from, end)?);
        }

        let mut times: Vec<f64> = scenario.events.iter().map(|e| e.time()).collect();
        times.sort_by(f64::total_cmp);
        let settling = scenario
            .events
            .iter()
            .map(|e| {
                let t = e.time();
                let next = times.iter().copied().find(|&u| u > t).unwrap_or(end).min(land_from.max(t));
                let after = record.window(t, next);
                EventSettling {
                    time: t,
                    label: e.label(),
                    settle: settle_time(samples, t, SETTLE_BAND, SETTLE_HOLD).map(|s| s - t),
                    peak: if after.is_empty() { [f64::NAN; 3] } else { per_axis(after, peak).unwrap_or([f64::NAN; 3]) },
                }
            })
            .collect();
        Ok(Self {
            windows,
            settling,
            steady_state,
            hover_settled: settled.is_some(),
        })
    }

    pub fn window(&self, name: &str) -> Option<&WindowMetrics> {
        self.windows.iter().find(|w| w.name == name)
    }

    /// The hover window, present in every metrics set.
    pub fn hover(&self) -> &WindowMetrics {
        self.window("hover").expect("hover window is always computed")
    }

    /// Longest settling time over all events; infinite if any never settles.
    pub fn worst_settle(&self) -> Option<f64> {
        self.settling
            .iter()
            .map(|s| s.settle.unwrap_or(f64::INFINITY))
            .reduce(f64::max)
    }

    /// Long-format CSV: `metric,scope,axis,value`.
    pub fn write_csv<W: Write>(&self, record: &RunRecord, out: W, precision: usize) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let f = |x: f64| format_float(x, precision);
        w.write_record(["metric", "scope", "axis", "value"])?;
        w.write_record(["meta", "scenario", "", record.meta.scenario.as_str()])?;
        w.write_record(["meta", "variant", "", record.meta.variant.as_str()])?;
        w.write_record(["meta", "seed", "", &record.meta.seed.to_string()])?;
        w.write_record(["meta", "jitter_distribution", "", record.meta.jitter_distribution])?;
        for win in &self.windows {
            w.write_record(["window_start", &win.name, "", &f(win.start)])?;
            w.write_record(["window_end", &win.name, "", &f(win.end)])?;
            for (i, axis) in AXES.iter().enumerate() {
                w.write_record(["rmse", &win.name, axis, &f(win.rmse[i])])?;
            }
            for (i, axis) in AXES.iter().enumerate() {
                w.write_record(["peak", &win.name, axis, &f(win.peak[i])])?;
            }
            w.write_record(["thrust_mean", &win.name, "", &f(win.thrust_mean)])?;
            w.write_record(["thrust_max", &win.name, "", &f(win.thrust_max)])?;
            w.write_record(["yaw_rmse", &win.name, "", &f(win.yaw_rmse)])?;
        }
        for (i, axis) in AXES.iter().enumerate() {
            w.write_record(["steady_state", "hover", axis, &f(self.steady_state[i])])?;
        }
        for s in &self.settling {
            let scope = format!("{} @ {}", s.label, f(s.time));
            w.write_record(["settle", &scope, "", &f(s.settle.unwrap_or(f64::NAN))])?;
            for (i, axis) in AXES.iter().enumerate() {
                w.write_record(["event_peak", &scope, axis, &f(s.peak[i])])?;
            }
        }
        w.flush()
    }

    pub fn summary(&self) -> String {
        let mut out = String::new();
        for w in &self.windows {
            out.push_str(&format!(
                "{:<8} [{:7.2}, {:7.2}) s  rmse x/y/z {:.4} {:.4} {:.4} m  peak {:.4} {:.4} {:.4} m  u mean {:.3} max {:.3}\n",
                w.name, w.start, w.end, w.rmse[0], w.rmse[1], w.rmse[2], w.peak[0], w.peak[1], w.peak[2], w.thrust_mean, w.thrust_max
            ));
        }
        out.push_str(&format!(
            "steady-state error x/y/z {:.4} {:.4} {:.4} m\n",
            self.steady_state[0], self.steady_state[1], self.steady_state[2]
        ));
        for s in &self.settling {
            match s.settle {
                Some(d) => out.push_str(&format!("{} at {:.2} s: settled after {:.2} s", s.label, s.time, d)),
                None => out.push_str(&format!("{} at {:.2} s: did not settle", s.label, s.time)),
            }
            out.push_str(&format!(", peak x/y/z {:.4} {:.4} {:.4} m\n", s.peak[0], s.peak[1], s.peak[2]));
        }
        out
    }
}
