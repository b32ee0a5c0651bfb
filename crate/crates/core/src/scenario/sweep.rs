//! Staged grid search over controller gains.
//!
//! Gains are tuned inner loop first: TMAF, then the velocity PID, then the
//! position PID, with the heading PID last. A stage can only be swept once
//! every earlier stage is listed in `gains.tuned`.

use std::fmt;
use std::io::{self, Write};
use std::str::FromStr;

use rayon::prelude::*;

use crate::control::ControllerGains;
use crate::GRAVITY;

use super::record::format_float;
use super::run::run_scenario;
use super::schema::Scenario;
use super::ScenarioError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SweepStage {
    Tmaf,
    PidV,
    PidP,
    Yaw,
}

impl SweepStage {
    /// Tuning order.
    pub const ORDER: [SweepStage; 4] = [SweepStage::Tmaf, SweepStage::PidV, SweepStage::PidP, SweepStage::Yaw];

    pub fn name(self) -> &'static str {
        match self {
            SweepStage::Tmaf => "tmaf",
            SweepStage::PidV => "pid_v",
            SweepStage::PidP => "pid_p",
            SweepStage::Yaw => "yaw",
        }
    }

    pub fn params(self) -> &'static [&'static str] {
        match self {
            SweepStage::Tmaf => &["alpha", "beta", "scale"],
            SweepStage::PidV | SweepStage::PidP => &["kp", "ki", "kd", "scale"],
            SweepStage::Yaw => &["kp", "ki", "kd"],
        }
    }

    fn index(self) -> usize {
        Self::ORDER.iter().position(|s| *s == self).expect("stage listed in ORDER")
    }
}

impl fmt::Display for SweepStage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepStage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ORDER
            .into_iter()
            .find(|st| st.name() == s.trim().to_ascii_lowercase().replace('-', "_"))
            .ok_or_else(|| format!("unknown stage '{s}' (expected tmaf, pid_v, pid_p or yaw)"))
    }
}

/// Which axes a stage's gains are applied to and scored on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    Z,
    Xy,
}

impl FromStr for SweepAxis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "z" => Ok(SweepAxis::Z),
            "xy" | "x" | "y" => Ok(SweepAxis::Xy),
            other => Err(format!("unknown axis '{other}' (expected z or xy)")),
        }
    }
}

impl SweepAxis {
    fn indices(self) -> &'static [usize] {
        match self {
            SweepAxis::Z => &[2],
            SweepAxis::Xy => &[0, 1],
        }
    }
}

/// Values of one parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamRange {
    pub name: String,
    pub values: Vec<f64>,
}

impl FromStr for ParamRange {
    type Err = String;

    /// `name=start:end:count` (inclusive, evenly spaced), `name=a,b,c` or `name=value`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (name, spec) = s.split_once('=').ok_or_else(|| format!("range '{s}' must look like name=start:end:count"))?;
        let num = |t: &str| t.trim().parse::<f64>().map_err(|_| format!("'{t}' in range '{s}' is not a number"));
        let values = if spec.contains(':') {
            let parts: Vec<&str> = spec.split(':').collect();
            let [a, b, n] = parts.as_slice() else {
                return Err(format!("range '{s}' must look like name=start:end:count"));
            };
            let (a, b) = (num(a)?, num(b)?);
            let n: usize = n.trim().parse().map_err(|_| format!("count in range '{s}' must be a whole number"))?;
            if n == 0 || b < a || (n == 1 && a != b) {
                return Err(format!("range '{s}' is empty"));
            }
            if n == 1 {
                vec![a]
            } else {
                (0..n).map(|k| a + (b - a) * k as f64 / (n - 1) as f64).collect()
            }
        } else {
            spec.split(',').map(num).collect::<Result<Vec<_>, _>>()?
        };
        if values.is_empty() || values.iter().any(|v| !v.is_finite()) {
            return Err(format!("range '{s}' is empty"));
        }
        Ok(Self {
            name: name.trim().to_string(),
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRequest {
    pub stage: SweepStage,
    pub axis: SweepAxis,
    pub ranges: Vec<ParamRange>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub params: Vec<(String, f64)>,
    /// Hover-window RMSE per axis.
    pub rmse: [f64; 3],
    pub yaw_rmse: f64,
    /// Ranking score, smaller is better; infinite for aborted runs.
    pub score: f64,
    pub aborted: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub request: SweepRequest,
    /// Sorted best first.
    pub rows: Vec<SweepRow>,
    pub base: ControllerGains,
}

/// Rejects a stage whose predecessors are not yet pinned.
pub fn check_order(stage: SweepStage, gains: &ControllerGains) -> Result<(), ScenarioError> {
    let missing: Vec<&str> = SweepStage::ORDER[..stage.index()]
        .iter()
        .filter(|s| !gains.tuned.iter().any(|t| t == s.name()))
        .map(|s| s.name())
        .collect();
    if missing.is_empty() {
        Ok(())
    } else {
        Err(ScenarioError::Sweep(format!(
            "cannot sweep {stage} before {} is tuned: gains are tuned in the order tmaf, pid_v, pid_p, yaw \
             (thrust first, then velocity, then position); pin the earlier stages and list them in gains.tuned",
            missing.join(", ")
        )))
    }
}

/// Copy of `base` with one grid point applied.
pub fn apply(base: &ControllerGains, stage: SweepStage, axis: SweepAxis, params: &[(String, f64)]) -> Result<ControllerGains, ScenarioError> {
    let mut g = base.clone();
    let bad = |p: &str| ScenarioError::Sweep(format!("stage {stage} has no parameter '{p}' (expected {})", stage.params().join(", ")));
    for (name, v) in params {
        let v = *v;
        match stage {
            SweepStage::Tmaf => {
                for &i in axis.indices() {
                    match name.as_str() {
                        "alpha" => g.tmaf.alpha[i] = v,
                        "beta" => g.tmaf.beta[i] = v,
                        "scale" => {
                            g.tmaf.alpha[i] = base.tmaf.alpha[i] * v;
                            g.tmaf.beta[i] = base.tmaf.beta[i] * v;
                        }
                        p => return Err(bad(p)),
                    }
                }
            }
            SweepStage::PidV | SweepStage::PidP => {
                let (pid, base_pid) = if stage == SweepStage::PidV { (&mut g.pid_v, &base.pid_v) } else { (&mut g.pid_p, &base.pid_p) };
                for &i in axis.indices() {
                    match name.as_str() {
                        "kp" => pid.kp[i] = v,
                        "ki" => pid.ki[i] = v,
                        "kd" => pid.kd[i] = v,
                        "scale" => {
                            pid.kp[i] = base_pid.kp[i] * v;
                            pid.ki[i] = base_pid.ki[i] * v;
                            pid.kd[i] = base_pid.kd[i] * v;
                        }
                        p => return Err(bad(p)),
                    }
                }
            }
            SweepStage::Yaw => match name.as_str() {
                "kp" => g.yaw.kp = v,
                "ki" => g.yaw.ki = v,
                "kd" => g.yaw.kd = v,
                p => return Err(bad(p)),
            },
        }
    }
    if stage == SweepStage::PidV && axis == SweepAxis::Xy {
        // decoupled lateral control shares the velocity gains, in tilt units
        for i in 0..2 {
            g.dmc.kp[i] = g.pid_v.kp[i] / GRAVITY;
            g.dmc.ki[i] = g.pid_v.ki[i] / GRAVITY;
            g.dmc.kd[i] = g.pid_v.kd[i] / GRAVITY;
        }
    }
    g.validate()?;
    Ok(g)
}

fn grid(ranges: &[ParamRange]) -> Vec<Vec<(String, f64)>> {
    ranges.iter().fold(vec![Vec::new()], |acc, r| {
        acc.iter()
            .flat_map(|point| {
                r.values.iter().map(move |&v| {
                    let mut p = point.clone();
                    p.push((r.name.clone(), v));
                    p
                })
            })
            .collect()
    })
}

/// Evaluate every grid point on `scenario` and rank by hover RMSE.
pub fn sweep(scenario: &Scenario, request: &SweepRequest) -> Result<SweepResult, ScenarioError> {
    scenario.validate()?;
    check_order(request.stage, &scenario.gains)?;
    if request.ranges.is_empty() {
        return Err(ScenarioError::Sweep("no parameter ranges given".into()));
    }
    for (i, r) in request.ranges.iter().enumerate() {
        if request.ranges[..i].iter().any(|o| o.name == r.name) {
            return Err(ScenarioError::Sweep(format!("parameter '{}' given twice", r.name)));
        }
    }
    let points = grid(&request.ranges);
    let gains = points
        .iter()
        .map(|p| apply(&scenario.gains, request.stage, request.axis, p))
        .collect::<Result<Vec<_>, _>>()?;
    let mut rows = points
        .into_par_iter()
        .zip(gains)
        .map(|(params, g)| {
            let mut s = scenario.clone();
            s.gains = g;
            match run_scenario(&s) {
                Ok(out) => {
                    let h = out.metrics.hover();
                    let score = match (request.stage, request.axis) {
                        (SweepStage::Yaw, _) => h.yaw_rmse,
                        (_, SweepAxis::Z) => h.rmse[2],
                        (_, SweepAxis::Xy) => ((h.rmse[0].powi(2) + h.rmse[1].powi(2)) / 2.0).sqrt(),
                    };
                    Ok(SweepRow {
                        params,
                        rmse: h.rmse,
                        yaw_rmse: h.yaw_rmse,
                        score: if score.is_nan() { f64::INFINITY } else { score },
                        aborted: None,
                    })
                }
                Err(ScenarioError::Aborted { reason, .. }) => Ok(SweepRow {
                    params,
                    rmse: [f64::NAN; 3],
                    yaw_rmse: f64::NAN,
                    score: f64::INFINITY,
                    aborted: Some(reason),
                }),
                Err(e) => Err(e),
            }
        })
        .collect::<Result<Vec<_>, ScenarioError>>()?;
    // stable sort keeps grid order among ties
    rows.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(SweepResult {
        request: request.clone(),
        rows,
        base: scenario.gains.clone(),
    })
}

impl SweepResult {
    pub fn best(&self) -> &SweepRow {
        &self.rows[0]
    }

    /// Base gains with the best point applied and the stage marked tuned.
    pub fn best_gains(&self) -> ControllerGains {
        let mut g = apply(&self.base, self.request.stage, self.request.axis, &self.best().params).expect("grid point validated during the sweep");
        let name = self.request.stage.name().to_string();
        if !g.tuned.contains(&name) {
            g.tuned.push(name);
        }
        g
    }

    /// TOML that can be pasted into a scenario file.
    pub fn fragment(&self) -> String {
        let g = self.best_gains();
        let mut gains = toml::Table::new();
        gains.insert("tuned".into(), toml::Value::try_from(&g.tuned).expect("strings serialize"));
        let mut put = |key: &str, value: toml::Value| {
            gains.insert(key.into(), value);
        };
        match self.request.stage {
            SweepStage::Tmaf => put("tmaf", toml::Value::try_from(g.tmaf).expect("gains serialize")),
            SweepStage::PidV => {
                put("pid_v", toml::Value::try_from(g.pid_v).expect("gains serialize"));
                if self.request.axis == SweepAxis::Xy {
                    put("dmc", toml::Value::try_from(g.dmc).expect("gains serialize"));
                }
            }
            SweepStage::PidP => put("pid_p", toml::Value::try_from(g.pid_p).expect("gains serialize")),
            SweepStage::Yaw => put("yaw", toml::Value::try_from(g.yaw).expect("gains serialize")),
        }
        let mut doc = toml::Table::new();
        doc.insert("gains".into(), toml::Value::Table(gains));
        toml::to_string(&doc).expect("table serializes")
    }

    /// Best rows and, per parameter, the best score reached at each value.
    pub fn summary(&self, top: usize) -> String {
        let mut out = format!("stage {} ({} points)\n", self.request.stage, self.rows.len());
        for (rank, r) in self.rows.iter().take(top).enumerate() {
            let params: Vec<String> = r.params.iter().map(|(n, v)| format!("{n}={v:.5}")).collect();
            let status = r.aborted.as_deref().map_or(String::new(), |m| format!("  aborted: {m}"));
            out.push_str(&format!("{:>3}. {}  score {:.5}{}\n", rank + 1, params.join(" "), r.score, status));
        }
        for range in &self.request.ranges {
            out.push_str(&format!("best score by {}:", range.name));
            for &v in &range.values {
                let best = self
                    .rows
                    .iter()
                    .filter(|r| r.params.iter().any(|(n, x)| *n == range.name && *x == v))
                    .map(|r| r.score)
                    .fold(f64::INFINITY, f64::min);
                out.push_str(&format!(" {v:.4}->{best:.4}"));
            }
            out.push('\n');
        }
        out
    }

    pub fn write_csv<W: Write>(&self, out: W, precision: usize) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        let f = |x: f64| format_float(x, precision);
        let mut header: Vec<String> = vec!["rank".into()];
        header.extend(self.request.ranges.iter().map(|r| r.name.clone()));
        header.extend(["score", "rmse_x", "rmse_y", "rmse_z", "yaw_rmse", "aborted"].map(String::from));
        w.write_record(&header)?;
        for (rank, r) in self.rows.iter().enumerate() {
            let mut row = vec![(rank + 1).to_string()];
            row.extend(r.params.iter().map(|(_, v)| f(*v)));
            row.extend([f(r.score), f(r.rmse[0]), f(r.rmse[1]), f(r.rmse[2]), f(r.yaw_rmse)]);
            row.push(r.aborted.clone().unwrap_or_default());
            w.write_record(&row)?;
        }
        w.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SHORT: &str = r#"
version = 1
name = "short"
duration = 5.0

[sensors]
position_noise = 0.0
accel_noise = 0.0

[[setpoints]]
time = 0.0
values = [0.0, 0.0, 0.3]
"#;

    #[test]
    fn ranges_parse() {
        let r: ParamRange = "alpha=0.01:0.05:5".parse().unwrap();
        assert_eq!(r.name, "alpha");
        assert_eq!(r.values.len(), 5);
        assert!((r.values[2] - 0.03).abs() < 1e-15);
        assert_eq!("kp=1,2".parse::<ParamRange>().unwrap().values, vec![1.0, 2.0]);
        assert_eq!("kp=1.5".parse::<ParamRange>().unwrap().values, vec![1.5]);
    }

    #[test]
    fn empty_ranges_rejected() {
        for bad in ["alpha=0.05:0.01:3", "alpha=0.01:0.05:0", "alpha=", "alpha", "alpha=0.1:0.2"] {
            assert!(bad.parse::<ParamRange>().is_err(), "{bad}");
        }
    }

    #[test]
    fn stage_order_enforced() {
        let mut g = ControllerGains::default();
        assert!(check_order(SweepStage::Tmaf, &g).is_ok());
        let err = check_order(SweepStage::PidP, &g).unwrap_err().to_string();
        assert!(err.contains("tmaf") && err.contains("pid_v"), "{err}");
        g.tuned = vec!["tmaf".into(), "pid_v".into()];
        assert!(check_order(SweepStage::PidP, &g).is_ok());
        assert!(check_order(SweepStage::Yaw, &g).is_err());
    }

    #[test]
    fn lateral_velocity_gains_carry_over_to_dmc() {
        let g = apply(&ControllerGains::default(), SweepStage::PidV, SweepAxis::Xy, &[("kp".into(), 4.905)]).unwrap();
        assert_eq!(g.pid_v.kp[0], 4.905);
        assert!((g.dmc.kp[1] - 0.5).abs() < 1e-12);
        assert_eq!(g.pid_v.kp[2], ControllerGains::default().pid_v.kp[2]);
    }

    #[test]
    fn unknown_parameter_rejected() {
        assert!(apply(&ControllerGains::default(), SweepStage::Tmaf, SweepAxis::Z, &[("kp".into(), 1.0)]).is_err());
    }

    #[test]
    fn small_tmaf_sweep_ranks_and_emits_fragment() {
        let s = Scenario::from_toml(SHORT).unwrap();
        let req = SweepRequest {
            stage: SweepStage::Tmaf,
            axis: SweepAxis::Z,
            ranges: vec!["alpha=0.02,0.04".parse().unwrap(), "beta=0,0.0001".parse().unwrap()],
        };
        let res = sweep(&s, &req).unwrap();
        assert_eq!(res.rows.len(), 4);
        assert!(res.rows.windows(2).all(|w| w[0].score <= w[1].score));
        let frag = res.fragment();
        assert!(frag.contains("[gains.tmaf]"), "{frag}");
        // the fragment merges back into a scenario
        let merged = format!("{SHORT}\n{frag}");
        let back = Scenario::from_toml(&merged).unwrap();
        assert_eq!(back.gains.tuned, vec!["tmaf".to_string()]);
        assert_eq!(back.gains.tmaf, res.best_gains().tmaf);
    }
}
