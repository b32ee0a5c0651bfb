//! Runs one scenario under several controller variants and tabulates the results.

use std::io::{self, Write};

use rayon::prelude::*;

use crate::control::Variant;

use super::metrics::{Metrics, AXES};
use super::record::format_float;
use super::run::run_scenario;
use super::schema::Scenario;
use super::ScenarioError;

/// How a variant's run ended.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    Completed,
    Aborted { time: f64, reason: String },
}

impl RunStatus {
    pub fn label(&self) -> &'static str {
        match self {
            RunStatus::Completed => "ok",
            RunStatus::Aborted { .. } => "aborted",
        }
    }
}

/// Summary numbers for one variant, taken from the hover window and the events.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonRow {
    pub variant: Variant,
    pub status: RunStatus,
    pub rmse: [f64; 3],
    pub peak: [f64; 3],
    /// Largest post-event error per axis over all events; NaN without events.
    pub event_peak: [f64; 3],
    pub thrust_mean: f64,
    pub thrust_max: f64,
    pub steady_z: f64,
    /// Longest event settling time; NaN without events, infinite if one never settles.
    pub worst_settle: f64,
}

impl ComparisonRow {
    fn from_metrics(variant: Variant, m: &Metrics) -> Self {
        let hover = m.hover();
        let mut event_peak = [f64::NAN; 3];
        for s in &m.settling {
            for i in 0..3 {
                if !s.peak[i].is_nan() {
                    event_peak[i] = if event_peak[i].is_nan() { s.peak[i] } else { event_peak[i].max(s.peak[i]) };
                }
            }
        }
        Self {
            variant,
            status: RunStatus::Completed,
            rmse: hover.rmse,
            peak: hover.peak,
            event_peak,
            thrust_mean: hover.thrust_mean,
            thrust_max: hover.thrust_max,
            steady_z: m.steady_state[2],
            worst_settle: m.worst_settle().unwrap_or(f64::NAN),
        }
    }

    fn aborted(variant: Variant, time: f64, reason: String) -> Self {
        Self {
            variant,
            status: RunStatus::Aborted { time, reason },
            rmse: [f64::NAN; 3],
            peak: [f64::NAN; 3],
            event_peak: [f64::NAN; 3],
            thrust_mean: f64::NAN,
            thrust_max: f64::NAN,
            steady_z: f64::NAN,
            worst_settle: f64::NAN,
        }
    }

    /// Value of a named column, as used by [`ORDERING_METRICS`].
    pub fn value(&self, metric: &str) -> Option<f64> {
        let axis = |name: &str| AXES.iter().position(|a| *a == name);
        let (base, ax) = metric.rsplit_once('_')?;
        let i = axis(ax)?;
        match base {
            "rmse" => Some(self.rmse[i]),
            "peak" => Some(self.peak[i]),
            "event_peak" => Some(self.event_peak[i]),
            _ => None,
        }
    }
}

/// Metrics compared pairwise; smaller is better for each.
pub const ORDERING_METRICS: [&str; 9] = [
    "rmse_x", "rmse_y", "rmse_z", "peak_x", "peak_y", "peak_z", "event_peak_x", "event_peak_y", "event_peak_z",
];

pub const COMPARISON_HEADER: [&str; 18] = [
    "scenario",
    "variant",
    "status",
    "rmse_x",
    "rmse_y",
    "rmse_z",
    "peak_x",
    "peak_y",
    "peak_z",
    "event_peak_x",
    "event_peak_y",
    "event_peak_z",
    "u_mean",
    "u_max",
    "steady_z",
    "worst_settle",
    "abort_time",
    "abort_reason",
];

pub const ORDERING_HEADER: [&str; 7] = ["scenario", "metric", "a", "b", "value_a", "value_b", "better"];

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    pub scenario: String,
    pub rows: Vec<ComparisonRow>,
}

/// Run `scenario` once per variant, in parallel, with identical seed and events.
///
/// Rows come back in the order of `variants`. A run that aborts in flight is
/// reported as an aborted row; anything else (such as an invalid scenario)
/// is an error.
pub fn compare_variants(scenario: &Scenario, variants: &[Variant]) -> Result<Comparison, ScenarioError> {
    if variants.is_empty() {
        return Err(ScenarioError::Validation {
            field: "variants".into(),
            message: "at least one variant is required".into(),
        });
    }
    scenario.validate()?;
    let rows = variants
        .par_iter()
        .map(|&v| {
            let mut s = scenario.clone();
            s.variant = v;
            match run_scenario(&s) {
                Ok(out) => Ok(ComparisonRow::from_metrics(v, &out.metrics)),
                Err(ScenarioError::Aborted { time, reason, .. }) => Ok(ComparisonRow::aborted(v, time, reason)),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Comparison {
        scenario: scenario.name.clone(),
        rows,
    })
}

/// Which of two values is better (smaller); NaN never wins.
fn better(a: f64, b: f64) -> &'static str {
    match (a.is_nan(), b.is_nan()) {
        (true, true) => "none",
        (false, true) => "a",
        (true, false) => "b",
        _ if a < b => "a",
        _ if b < a => "b",
        _ => "tie",
    }
}

fn csv_writer<W: Write>(out: W) -> csv::Writer<W> {
    csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out)
}

/// Wide per-variant table for any number of scenarios.
pub fn write_comparison_csv<W: Write>(comparisons: &[Comparison], out: W, precision: usize) -> io::Result<()> {
    let mut w = csv_writer(out);
    let f = |x: f64| format_float(x, precision);
    w.write_record(COMPARISON_HEADER)?;
    for c in comparisons {
        for r in &c.rows {
            let (abort_time, reason) = match &r.status {
                RunStatus::Completed => (String::new(), String::new()),
                RunStatus::Aborted { time, reason } => (f(*time), reason.clone()),
            };
            let mut row = vec![c.scenario.clone(), r.variant.name().to_string(), r.status.label().to_string()];
            row.extend(r.rmse.map(f));
            row.extend(r.peak.map(f));
            row.extend(r.event_peak.map(f));
            row.extend([f(r.thrust_mean), f(r.thrust_max), f(r.steady_z), f(r.worst_settle), abort_time, reason]);
            w.write_record(&row)?;
        }
    }
    w.flush()
}

/// One row per (metric, variant pair).
pub fn write_orderings_csv<W: Write>(comparisons: &[Comparison], out: W, precision: usize) -> io::Result<()> {
    let mut w = csv_writer(out);
    let f = |x: f64| format_float(x, precision);
    w.write_record(ORDERING_HEADER)?;
    for c in comparisons {
        for metric in ORDERING_METRICS {
            for (i, a) in c.rows.iter().enumerate() {
                for b in &c.rows[i + 1..] {
                    let (va, vb) = (a.value(metric).unwrap_or(f64::NAN), b.value(metric).unwrap_or(f64::NAN));
                    w.write_record([
                        c.scenario.as_str(),
                        metric,
                        a.variant.name(),
                        b.variant.name(),
                        &f(va),
                        &f(vb),
                        better(va, vb),
                    ])?;
                }
            }
        }
    }
    w.flush()
}

impl Comparison {
    /// Aligned plain-text rendering.
    pub fn to_text(&self) -> String {
        let cell = |x: f64| if x.is_nan() { "-".to_string() } else { format!("{x:.4}") };
        let mut rows = vec![[
            "variant", "status", "rmse x", "rmse y", "rmse z", "peak x", "peak y", "peak z", "event z", "u mean", "settle",
        ]
        .map(String::from)
        .to_vec()];
        for r in &self.rows {
            rows.push(vec![
                r.variant.name().to_string(),
                r.status.label().to_string(),
                cell(r.rmse[0]),
                cell(r.rmse[1]),
                cell(r.rmse[2]),
                cell(r.peak[0]),
                cell(r.peak[1]),
                cell(r.peak[2]),
                cell(r.event_peak[2]),
                cell(r.thrust_mean),
                if r.worst_settle.is_infinite() { "never".into() } else { cell(r.worst_settle) },
            ]);
        }
        let widths: Vec<usize> = (0..rows[0].len())
            .map(|c| rows.iter().map(|r| r[c].chars().count()).max().unwrap_or(0))
            .collect();
        let mut out = format!("scenario: {}\n", self.scenario);
        for r in &rows {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| if c < 2 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                .collect();
            out.push_str(line.join("  ").trim_end());
            out.push('\n');
        }
        for r in &self.rows {
            if let RunStatus::Aborted { time, reason } = &r.status {
                out.push_str(&format!("{} aborted at {:.3} s: {}\n", r.variant.name(), time, reason));
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHORT: &str = r#"
version = 1
name = "short"
duration = 4.0

[sensors]
position_noise = 0.0
accel_noise = 0.0

[[setpoints]]
time = 0.0
values = [0.0, 0.0, 0.3]
"#;

    #[test]
    fn duplicated_variant_gives_identical_rows() {
        let s = Scenario::from_toml(SHORT).unwrap();
        let c = compare_variants(&s, &[Variant::DaGt, Variant::DaGt]).unwrap();
        // NaN columns rule out ==
        assert_eq!(format!("{:?}", c.rows[0]), format!("{:?}", c.rows[1]));
    }

    #[test]
    fn rows_do_not_depend_on_variant_order() {
        let s = Scenario::from_toml(SHORT).unwrap();
        let a = compare_variants(&s, &[Variant::TmafDmc, Variant::MiGt]).unwrap();
        let b = compare_variants(&s, &[Variant::MiGt, Variant::TmafDmc]).unwrap();
        assert_eq!(format!("{:?}", a.rows[0]), format!("{:?}", b.rows[1]));
        assert_eq!(format!("{:?}", a.rows[1]), format!("{:?}", b.rows[0]));
    }

    #[test]
    fn csv_schemas() {
        let s = Scenario::from_toml(SHORT).unwrap();
        let c = compare_variants(&s, &[Variant::TmafDmc, Variant::DaGt]).unwrap();
        let mut buf = Vec::new();
        write_comparison_csv(std::slice::from_ref(&c), &mut buf, 6).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], COMPARISON_HEADER.join(","));
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("short,tmaf+dmc,ok,"));

        let mut buf = Vec::new();
        write_orderings_csv(&[c], &mut buf, 6).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 1 + ORDERING_METRICS.len());
    }

    #[test]
    fn no_variants_rejected() {
        let s = Scenario::from_toml(SHORT).unwrap();
        assert!(compare_variants(&s, &[]).is_err());
    }

    #[test]
    fn better_handles_nan() {
        assert_eq!(better(1.0, 2.0), "a");
        assert_eq!(better(f64::NAN, 2.0), "b");
        assert_eq!(better(1.0, 1.0), "tie");
    }
}
