//! Run traces and their CSV form.

use std::io::{self, Write};

use crate::types::{ControlCommand, Vec3, VehicleState};

pub const TRACE_HEADER: &str = "t,x,y,z,vx,vy,vz,ax,ay,az,phi,theta,psi,u,phi_sp,theta_sp,x_sp,y_sp,z_sp,mass,eta";

/// Significant digits of floats in CSV output.
pub const DEFAULT_PRECISION: usize = 9;

/// One logged instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sample {
    pub t: f64,
    pub state: VehicleState,
    pub command: ControlCommand,
    /// Position set-point per axis; `None` while the axis is velocity controlled.
    pub position_sp: [Option<f64>; 3],
    pub yaw_sp: f64,
    pub mass: f64,
    pub efficiency: f64,
    /// Index of the active set-point segment.
    pub segment: usize,
}

impl Sample {
    /// Position error per axis, where a position set-point exists.
    pub fn error(&self) -> [Option<f64>; 3] {
        let p = self.state.position;
        [0, 1, 2].map(|i| self.position_sp[i].map(|sp| p[i] - sp))
    }
}

/// Facts about how a trace was produced.
#[derive(Debug, Clone, PartialEq)]
pub struct RunMeta {
    pub scenario: String,
    pub variant: String,
    pub seed: u64,
    pub duration: f64,
    /// Distribution of loop jitter draws.
    pub jitter_distribution: &'static str,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub meta: RunMeta,
    pub samples: Vec<Sample>,
}

/// `%g`-style formatting with `precision` significant digits.
pub fn format_float(x: f64, precision: usize) -> String {
    if x.is_nan() {
        return "nan".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    if x == 0.0 {
        return "0".into();
    }
    let p = precision.max(1);
    let sci = format!("{:.*e}", p - 1, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent present");
    let exp: i32 = exp.parse().expect("integer exponent");
    if exp < -4 || exp >= p as i32 {
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{}e{}{:02}", trim_zeros(mantissa), sign, exp.abs())
    } else {
        let decimals = (p as i32 - 1 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}")).to_string()
    }
}

fn trim_zeros(s: &str) -> &str {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.')
    } else {
        s
    }
}

impl RunRecord {
    pub fn write_csv<W: Write>(&self, out: W, precision: usize) -> io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(TRACE_HEADER.split(','))?;
        let f = |x: f64| format_float(x, precision);
        let v = |x: &Vec3| [f(x.x), f(x.y), f(x.z)];
        for s in &self.samples {
            let st = &s.state;
            let mut row = Vec::with_capacity(21);
            row.push(f(s.t));
            row.extend(v(&st.position));
            row.extend(v(&st.velocity));
            row.extend(v(&st.acceleration));
            row.extend([f(st.attitude.roll), f(st.attitude.pitch), f(st.attitude.yaw)]);
            row.extend([f(s.command.thrust), f(s.command.roll), f(s.command.pitch)]);
            row.extend(s.position_sp.map(|sp| f(sp.unwrap_or(f64::NAN))));
            row.extend([f(s.mass), f(s.efficiency)]);
            w.write_record(&row)?;
        }
        w.flush()
    }

    pub fn to_csv(&self, precision: usize) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf, precision).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is ASCII")
    }

    /// Samples with `start <= t < end`.
    pub fn window(&self, start: f64, end: f64) -> &[Sample] {
        let a = self.samples.partition_point(|s| s.t < start);
        let b = self.samples.partition_point(|s| s.t < end);
        &self.samples[a..b.max(a)]
    }

    pub fn end_time(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn percent_g_formatting() {
        assert_eq!(format_float(0.0, 9), "0");
        assert_eq!(format_float(1.0, 9), "1");
        assert_eq!(format_float(0.5, 9), "0.5");
        assert_eq!(format_float(-9.81, 9), "-9.81");
        assert_eq!(format_float(1.0 / 3.0, 9), "0.333333333");
        assert_eq!(format_float(123456789.0, 9), "123456789");
        assert_eq!(format_float(1234567890.0, 9), "1.23456789e+09");
        assert_eq!(format_float(1.5e-7, 9), "1.5e-07");
        assert_eq!(format_float(0.0001, 9), "0.0001");
        assert_eq!(format_float(f64::NAN, 9), "nan");
        assert_eq!(format_float(2.0 / 3.0, 3), "0.667");
        assert_eq!(format_float(9.9999999999, 9), "10");
    }

    #[test]
    fn csv_has_documented_header_and_lf() {
        let rec = RunRecord {
            meta: RunMeta {
                scenario: "x".into(),
                variant: "tmaf+dmc".into(),
                seed: 0,
                duration: 1.0,
                jitter_distribution: "uniform",
            },
            samples: vec![Sample {
                t: 0.02,
                state: VehicleState::default(),
                command: ControlCommand::default(),
                position_sp: [Some(0.0), Some(0.0), None],
                yaw_sp: 0.0,
                mass: 2.5,
                efficiency: 1.0,
                segment: 0,
            }],
        };
        let csv = rec.to_csv(DEFAULT_PRECISION);
        let mut lines = csv.split('\n');
        assert_eq!(lines.next().unwrap(), TRACE_HEADER);
        assert_eq!(lines.next().unwrap(), "0.02,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,0,nan,2.5,1");
        assert!(!csv.contains('\r'));
        assert!(csv.ends_with('\n'));
    }
}
