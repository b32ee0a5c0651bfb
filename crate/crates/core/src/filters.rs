//! Derivative conditioning: a cosine-weighted moving average and an Euler
//! backward-difference differentiator.

use std::collections::VecDeque;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FilterError {
    #[error("filter window must hold at least one sample")]
    EmptyWindow,
    #[error("cosine spread {0:.3} rad must lie in [0, 90°) to keep every weight positive")]
    SpreadOutOfRange(f64),
    #[error("sample period must be positive, got {0}")]
    BadPeriod(f64),
    #[error("timestamp {t} does not advance past previous sample at {previous}")]
    NonMonotonic { previous: f64, t: f64 },
}

/// Default window length.
pub const DEFAULT_WINDOW: usize = 4;

/// Default total cosine spread across the window (80°).
pub fn default_spread() -> f64 {
    80f64.to_radians()
}

/// Un-normalized window weights `w_i = cos(i · spread / window)`, index 0 being
/// the newest sample.
pub fn cosine_weights(window: usize, spread: f64) -> Result<Vec<f64>, FilterError> {
    if window == 0 {
        return Err(FilterError::EmptyWindow);
    }
    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&spread) {
        return Err(FilterError::SpreadOutOfRange(spread));
    }
    let step = spread / window as f64;
    Ok((0..window).map(|i| (i as f64 * step).cos()).collect())
}

/// Cosine-weighted moving average over the last `window` samples.
///
/// Partial windows average only the samples seen so far, normalizing by the
/// weights actually used.
#[derive(Debug, Clone)]
pub struct CwmaFilter {
    weights: Vec<f64>,
    samples: VecDeque<f64>,
}

impl CwmaFilter {
    pub fn new(window: usize, spread: f64) -> Result<Self, FilterError> {
        let weights = cosine_weights(window, spread)?;
        Ok(Self {
            samples: VecDeque::with_capacity(weights.len()),
            weights,
        })
    }

    pub fn window(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Number of samples currently held.
    pub fn filled(&self) -> usize {
        self.samples.len()
    }

    pub fn push(&mut self, sample: f64) -> f64 {
        if self.samples.len() == self.weights.len() {
            self.samples.pop_back();
        }
        self.samples.push_front(sample);
        self.value()
    }

    /// Current filter output, 0 when empty.
    pub fn value(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let (num, den) = self
            .samples
            .iter()
            .zip(&self.weights)
            .fold((0.0, 0.0), |(n, d), (s, w)| (n + w * s, d + w));
        num / den
    }

    pub fn reset(&mut self) {
        self.samples.clear();
    }
}

impl Default for CwmaFilter {
    fn default() -> Self {
        Self::new(DEFAULT_WINDOW, default_spread()).expect("default filter parameters are valid")
    }
}

/// Backward-difference differentiator.
///
/// By default the difference is divided by the nominal period, so execution
/// jitter does not leak into the derivative. With `measured_dt` the actual
/// inter-sample time is used instead.
#[derive(Debug, Clone)]
pub struct Differentiator {
    period: f64,
    measured_dt: bool,
    previous: Option<(f64, f64)>,
}

impl Differentiator {
    pub fn new(period: f64) -> Result<Self, FilterError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(FilterError::BadPeriod(period));
        }
        Ok(Self {
            period,
            measured_dt: false,
            previous: None,
        })
    }

    pub fn with_measured_dt(mut self, measured_dt: bool) -> Self {
        self.measured_dt = measured_dt;
        self
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn set_period(&mut self, period: f64) -> Result<(), FilterError> {
        if !(period > 0.0 && period.is_finite()) {
            return Err(FilterError::BadPeriod(period));
        }
        self.period = period;
        Ok(())
    }

    /// Derivative estimate for `sample` taken at time `t`. The first call
    /// returns 0.
    pub fn update(&mut self, sample: f64, t: f64) -> Result<f64, FilterError> {
        let out = match self.previous {
            None => 0.0,
            Some((prev, prev_t)) => {
                if t <= prev_t {
                    return Err(FilterError::NonMonotonic { previous: prev_t, t });
                }
                let dt = if self.measured_dt { t - prev_t } else { self.period };
                (sample - prev) / dt
            }
        };
        self.previous = Some((sample, t));
        Ok(out)
    }

    pub fn reset(&mut self) {
        self.previous = None;
    }
}
