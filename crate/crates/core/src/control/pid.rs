use serde::{Deserialize, Serialize};

use crate::filters::CwmaFilter;

use super::ControlError;

/// Gains and limits of a single-axis PID.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PidGains {
    pub kp: f64,
    pub ki: f64,
    pub kd: f64,
    /// Bound on |∫e dt|.
    pub integral_limit: f64,
    /// Bound on |output|.
    pub output_limit: f64,
}

impl PidGains {
    pub fn new(kp: f64, ki: f64, kd: f64, integral_limit: f64, output_limit: f64) -> Self {
        Self {
            kp,
            ki,
            kd,
            integral_limit,
            output_limit,
        }
    }

    pub fn proportional(kp: f64) -> Self {
        Self::new(kp, 0.0, 0.0, 1.0, f64::MAX)
    }

    pub fn validate(&self, name: &str) -> Result<(), ControlError> {
        let gains_ok = [self.kp, self.ki, self.kd]
            .iter()
            .all(|g| g.is_finite() && *g >= 0.0);
        let limits_ok = self.integral_limit > 0.0 && self.output_limit > 0.0;
        if gains_ok && limits_ok {
            Ok(())
        } else {
            Err(ControlError::InvalidGains(format!(
                "{name}: gains must be finite and non-negative and limits positive"
            )))
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            kp: self.kp * factor,
            ki: self.ki * factor,
            kd: self.kd * factor,
            ..*self
        }
    }
}

/// Single-axis PID with a clamped integral, conditional anti-windup and a
/// cosine-weighted moving average on the derivative.
#[derive(Debug, Clone)]
pub struct Pid {
    gains: PidGains,
    integral: f64,
    previous_error: Option<f64>,
    derivative_filter: CwmaFilter,
}

impl Pid {
    pub fn new(gains: PidGains, derivative_filter: CwmaFilter) -> Self {
        Self {
            gains,
            integral: 0.0,
            previous_error: None,
            derivative_filter,
        }
    }

    pub fn gains(&self) -> &PidGains {
        &self.gains
    }

    pub fn integral(&self) -> f64 {
        self.integral
    }

    pub fn reset(&mut self) {
        self.integral = 0.0;
        self.previous_error = None;
        self.derivative_filter.reset();
    }

    /// One update with error `error` over `dt` seconds.
    ///
    /// The integral is frozen whenever the unsaturated output exceeds the
    /// output limit in the direction the error would push it.
    pub fn step(&mut self, error: f64, dt: f64) -> f64 {
        let g = self.gains;
        let raw_derivative = match self.previous_error {
            Some(prev) if dt > 0.0 => (error - prev) / dt,
            _ => 0.0,
        };
        self.previous_error = Some(error);
        let derivative = self.derivative_filter.push(raw_derivative);

        let candidate = (self.integral + error * dt).clamp(-g.integral_limit, g.integral_limit);
        let unsaturated = g.kp * error + g.ki * candidate + g.kd * derivative;
        let winding_up = unsaturated.abs() > g.output_limit && unsaturated.signum() == error.signum();
        if !winding_up {
            self.integral = candidate;
        }
        let out = g.kp * error + g.ki * self.integral + g.kd * derivative;
        out.clamp(-g.output_limit, g.output_limit)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn pid(g: PidGains) -> Pid {
        Pid::new(g, CwmaFilter::default())
    }

    #[test]
    fn pure_proportional() {
        let mut p = pid(PidGains::new(2.0, 0.0, 0.0, 1.0, 10.0));
        assert_abs_diff_eq!(p.step(0.5, 0.01), 1.0, epsilon = 1e-15);
    }

    #[test]
    fn integral_rectangle_sum() {
        let mut p = pid(PidGains::new(0.0, 1.0, 0.0, 10.0, 10.0));
        let mut out = 0.0;
        for _ in 0..10 {
            out = p.step(1.0, 0.1);
        }
        assert_abs_diff_eq!(out, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn integral_is_clamped() {
        let mut p = pid(PidGains::new(0.0, 1.0, 0.0, 0.3, 10.0));
        for _ in 0..100 {
            p.step(1.0, 0.1);
        }
        assert_abs_diff_eq!(p.integral(), 0.3, epsilon = 1e-15);
    }

    #[test]
    fn integral_freezes_while_saturated() {
        let mut p = pid(PidGains::new(10.0, 1.0, 0.0, 100.0, 1.0));
        for _ in 0..50 {
            assert_eq!(p.step(1.0, 0.1), 1.0);
        }
        assert_eq!(p.integral(), 0.0);
        // Unwinding is always allowed.
        p.step(-0.01, 0.1);
        assert!(p.integral() < 0.0);
    }

    #[test]
    fn derivative_uses_filtered_difference() {
        let mut p = pid(PidGains::new(0.0, 0.0, 1.0, 1.0, 100.0));
        assert_eq!(p.step(0.0, 0.1), 0.0);
        // raw derivative samples [0, 10]: (10·1 + 0·cos20°)/(1 + cos20°)
        let out = p.step(1.0, 0.1);
        assert_abs_diff_eq!(out, 10.0 / (1.0 + 20f64.to_radians().cos()), epsilon = 1e-12);
    }

    #[test]
    fn validate_rejects_negative_gains() {
        assert!(PidGains::new(-1.0, 0.0, 0.0, 1.0, 1.0).validate("x").is_err());
        assert!(PidGains::new(1.0, 0.0, 0.0, 0.0, 1.0).validate("x").is_err());
        assert!(PidGains::new(1.0, 0.0, 0.0, 1.0, 1.0).validate("x").is_ok());
    }

    proptest! {
        #[test]
        fn zero_gains_output_zero(errors in prop::collection::vec(-1e3..1e3f64, 1..50)) {
            let mut p = pid(PidGains::new(0.0, 0.0, 0.0, 1.0, 1.0));
            for e in errors {
                prop_assert_eq!(p.step(e, 0.01), 0.0);
            }
        }

        #[test]
        fn integral_never_exceeds_limit(errors in prop::collection::vec(-10.0..10.0f64, 1..100)) {
            let mut p = pid(PidGains::new(0.5, 2.0, 0.1, 0.4, 1.0));
            for e in errors {
                let out = p.step(e, 0.05);
                prop_assert!(p.integral().abs() <= 0.4);
                prop_assert!(out.abs() <= 1.0);
            }
        }
    }
}
