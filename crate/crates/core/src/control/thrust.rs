//! Thrust laws: model inversion (MI), direct acceleration feedback (DA) and
//! thrust microstepping via acceleration feedback (TMAF).
//!
//! All three return a thrust vector in normalized units (fraction of the
//! thrust ceiling) along world axes.

use crate::filters::{CwmaFilter, Differentiator, FilterError};
use crate::types::{CommandLimits, Vec3};

/// Model-inversion parameters. Everything here is an *assumed* value; a stale
/// mass or efficiency is never corrected because no measurement is consumed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MiParams {
    pub mass: f64,
    pub gravity: f64,
    /// Estimated external force, N.
    pub external_force: Vec3,
    /// Thrust ceiling, N.
    pub max_thrust: f64,
    /// Assumed battery efficiency.
    pub efficiency: f64,
}

impl MiParams {
    /// Required force in Newtons: `m (a* + g k̂) − f_e`.
    pub fn force(&self, accel_sp: &Vec3) -> Vec3 {
        self.mass * (accel_sp + Vec3::new(0.0, 0.0, self.gravity)) - self.external_force
    }

    /// Required force normalized by the effective ceiling.
    pub fn thrust(&self, accel_sp: &Vec3) -> Vec3 {
        self.force(accel_sp) / (self.max_thrust * self.efficiency)
    }
}

/// Direct acceleration feedback: `μ∘(a* + g k̂) + λ∘∫e_a dt`, a PI law with
/// gravity compensation. Gains are in force units (μ in kg, λ in kg/s).
#[derive(Debug, Clone)]
pub struct DaController {
    mu: Vec3,
    lambda: Vec3,
    gravity: f64,
    max_thrust: f64,
    /// Bound on |λ∘∫e_a| expressed as a thrust fraction.
    integral_limit: Vec3,
    integral: Vec3,
    limits: CommandLimits,
}

impl DaController {
    pub fn new(mu: Vec3, lambda: Vec3, integral_limit: Vec3, gravity: f64, max_thrust: f64, limits: CommandLimits) -> Self {
        Self {
            mu,
            lambda,
            gravity,
            max_thrust,
            integral_limit,
            integral: Vec3::zeros(),
            limits,
        }
    }

    pub fn integral(&self) -> &Vec3 {
        &self.integral
    }

    fn integrate(&mut self, error: &Vec3, dt: f64) {
        for i in 0..3 {
            let next = self.integral[i] + error[i] * dt;
            self.integral[i] = if self.lambda[i] > 0.0 {
                let bound = self.integral_limit[i] * self.max_thrust / self.lambda[i];
                next.clamp(-bound, bound)
            } else {
                next
            };
        }
    }

    /// Force in Newtons after integrating the acceleration error over `dt`.
    pub fn force(&mut self, accel_sp: &Vec3, accel_meas: &Vec3, dt: f64) -> Vec3 {
        let g = Vec3::new(0.0, 0.0, self.gravity);
        let desired = accel_sp + g;
        let error = desired - (accel_meas + g);
        self.integrate(&error, dt);
        self.mu.component_mul(&desired) + self.lambda.component_mul(&self.integral)
    }

    /// Normalized thrust vector; the vertical component is saturated.
    pub fn step(&mut self, accel_sp: &Vec3, accel_meas: &Vec3, dt: f64) -> Vec3 {
        let mut u = self.force(accel_sp, accel_meas, dt) / self.max_thrust;
        u.z = self.limits.clamp_thrust(u.z);
        u
    }
}

/// Thrust microstepping.
///
/// Each tick adds a microstep `ΔΓ = α∘e_a + β∘ė_a` to the accumulator Γ, which
/// is itself the commanded thrust. The accumulation carries no time step, and
/// nothing about the vehicle (mass, gravity, ceiling) enters the law.
#[derive(Debug, Clone)]
pub struct Tmaf {
    alpha: Vec3,
    beta: Vec3,
    gamma: Vec3,
    jerk: [Differentiator; 3],
    jerk_filter: Option<[CwmaFilter; 3]>,
    limits: CommandLimits,
    ticks: u64,
}

impl Tmaf {
    /// `period` is the nominal loop period used by the jerk differentiator.
    pub fn new(alpha: Vec3, beta: Vec3, period: f64, limits: CommandLimits) -> Result<Self, FilterError> {
        let d = Differentiator::new(period)?;
        Ok(Self {
            alpha,
            beta,
            gamma: Vec3::zeros(),
            jerk: [d.clone(), d.clone(), d],
            jerk_filter: None,
            limits,
            ticks: 0,
        })
    }

    /// Smooths the jerk term with a cosine-weighted moving average.
    pub fn with_jerk_filter(mut self, filter: CwmaFilter) -> Self {
        self.jerk_filter = Some([filter.clone(), filter.clone(), filter]);
        self
    }

    /// Divide acceleration differences by measured rather than nominal time.
    pub fn with_measured_dt(mut self, measured: bool) -> Self {
        self.jerk = self.jerk.clone().map(|d| d.with_measured_dt(measured));
        self
    }

    pub fn accumulator(&self) -> &Vec3 {
        &self.gamma
    }

    /// Overwrite the accumulator, e.g. to take over a vehicle already in flight.
    pub fn prime(&mut self, gamma: Vec3) {
        self.gamma = gamma;
        self.accumulate(&Vec3::zeros());
    }

    pub fn period(&self) -> f64 {
        self.jerk[0].period()
    }

    pub fn set_limits(&mut self, limits: CommandLimits) {
        self.limits = limits;
    }

    pub fn set_period(&mut self, period: f64) -> Result<(), FilterError> {
        for d in &mut self.jerk {
            d.set_period(period)?;
        }
        Ok(())
    }

    /// One microstep on the nominal schedule.
    pub fn step(&mut self, accel_sp: &Vec3, accel_meas: &Vec3) -> Vec3 {
        let t = self.ticks as f64 * self.jerk[0].period();
        self.step_at(accel_sp, accel_meas, t)
            .expect("nominal tick times are strictly increasing")
    }

    /// One microstep stamped with time `t`. The stamp only matters for the
    /// monotonicity check and when measured-dt differentiation is enabled.
    pub fn step_at(&mut self, accel_sp: &Vec3, accel_meas: &Vec3, t: f64) -> Result<Vec3, FilterError> {
        let error = accel_sp - accel_meas;
        let delta = self.microstep(&error, t)?;
        self.accumulate(&delta);
        self.ticks += 1;
        Ok(self.gamma)
    }

    fn microstep(&mut self, error: &Vec3, t: f64) -> Result<Vec3, FilterError> {
        let mut delta = Vec3::zeros();
        for i in 0..3 {
            let mut jerk = self.jerk[i].update(error[i], t)?;
            if let Some(filters) = self.jerk_filter.as_mut() {
                jerk = filters[i].push(jerk);
            }
            delta[i] = self.alpha[i] * error[i] + self.beta[i] * jerk;
        }
        Ok(delta)
    }

    fn accumulate(&mut self, delta: &Vec3) {
        self.gamma += delta;
        self.gamma.z = self.limits.clamp_thrust(self.gamma.z);
        // Keep the lateral components inside what the tilt limit can realize.
        let lateral = self.limits.thrust_max * self.limits.tilt.tan();
        self.gamma.x = self.gamma.x.clamp(-lateral, lateral);
        self.gamma.y = self.gamma.y.clamp(-lateral, lateral);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    const G: f64 = 9.81;

    fn mi(mass: f64, fe: Vec3) -> MiParams {
        MiParams {
            mass,
            gravity: G,
            external_force: fe,
            max_thrust: 60.0,
            efficiency: 1.0,
        }
    }

    #[test]
    fn model_inversion_examples() {
        assert_abs_diff_eq!(
            mi(3.4, Vec3::zeros()).force(&Vec3::zeros()),
            Vec3::new(0.0, 0.0, 33.354),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mi(1.0, Vec3::zeros()).force(&Vec3::new(0.0, 0.0, 1.0)),
            Vec3::new(0.0, 0.0, 10.81),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            mi(3.4, Vec3::new(0.0, 0.0, 5.0)).force(&Vec3::zeros()),
            Vec3::new(0.0, 0.0, 28.354),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(mi(3.4, Vec3::zeros()).thrust(&Vec3::zeros()).z, 33.354 / 60.0, epsilon = 1e-12);
    }

    fn da(mu: Vec3, lambda: Vec3) -> DaController {
        DaController::new(mu, lambda, Vec3::repeat(0.3), G, 60.0, CommandLimits::default())
    }

    #[test]
    fn da_gravity_feed_through() {
        let mut c = da(Vec3::repeat(1.0), Vec3::zeros());
        let f = c.force(&Vec3::zeros(), &Vec3::zeros(), 0.0125);
        assert_abs_diff_eq!(f, Vec3::new(0.0, 0.0, 9.81), epsilon = 1e-12);
    }

    #[test]
    fn da_integral_rectangle() {
        let mut c = da(Vec3::zeros(), Vec3::new(0.0, 0.0, 1.0));
        let a_sp = Vec3::new(0.0, 0.0, 1.0);
        let mut f = Vec3::zeros();
        for _ in 0..40 {
            f = c.force(&a_sp, &Vec3::zeros(), 0.0125);
        }
        assert_abs_diff_eq!(*c.integral(), Vec3::new(0.0, 0.0, 0.5), epsilon = 1e-12);
        assert_abs_diff_eq!(f, Vec3::new(0.0, 0.0, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn da_zero_gains_output_zero() {
        let mut c = da(Vec3::zeros(), Vec3::zeros());
        let f = c.force(&Vec3::new(1.0, 2.0, 3.0), &Vec3::new(-1.0, 0.5, 0.0), 0.01);
        assert_eq!(f, Vec3::zeros());
    }

    #[test]
    fn da_integral_contribution_is_bounded() {
        let mut c = da(Vec3::zeros(), Vec3::new(0.0, 0.0, 10.0));
        for _ in 0..10_000 {
            c.force(&Vec3::new(0.0, 0.0, 5.0), &Vec3::zeros(), 0.0125);
        }
        assert_abs_diff_eq!(c.integral().z * 10.0 / 60.0, 0.3, epsilon = 1e-12);
    }

    fn wide_limits() -> CommandLimits {
        CommandLimits {
            thrust_min: -1e9,
            thrust_max: 1e9,
            tilt: 1.5,
        }
    }

    fn tmaf(alpha: f64, beta: f64) -> Tmaf {
        Tmaf::new(Vec3::repeat(alpha), Vec3::repeat(beta), 0.0125, CommandLimits::default()).unwrap()
    }

    #[test]
    fn zero_error_leaves_accumulator_unchanged() {
        let mut t = Tmaf::new(Vec3::repeat(0.3), Vec3::repeat(0.01), 0.0125, wide_limits()).unwrap();
        t.step(&Vec3::new(0.1, -0.2, 0.4), &Vec3::new(0.1, -0.2, 0.4));
        assert_eq!(*t.accumulator(), Vec3::zeros());
        t.step(&Vec3::new(0.0, 0.0, 0.4), &Vec3::zeros());
        let before = *t.accumulator();
        // hold the same error once so ė returns to zero, then zero everything
        t.step(&Vec3::zeros(), &Vec3::zeros());
        let settled = *t.accumulator();
        t.step(&Vec3::zeros(), &Vec3::zeros());
        assert_eq!(*t.accumulator(), settled);
        assert!(before.z > 0.0);
    }

    #[test]
    fn single_microstep_from_rest() {
        let mut t = tmaf(1.0, 0.0);
        let out = t.step(&Vec3::new(0.0, 0.0, 0.5), &Vec3::zeros());
        assert_abs_diff_eq!(out, Vec3::new(0.0, 0.0, 0.5), epsilon = 1e-15);
    }

    #[test]
    fn microsteps_accumulate() {
        let mut t = tmaf(1.0, 0.0);
        for e in [0.5, 0.3, -0.1] {
            t.step(&Vec3::new(0.0, 0.0, e), &Vec3::zeros());
        }
        assert_abs_diff_eq!(t.accumulator().z, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn vertical_accumulator_is_saturated() {
        let mut t = tmaf(1.0, 0.0);
        t.step(&Vec3::new(0.0, 0.0, 5.0), &Vec3::zeros());
        assert_eq!(t.accumulator().z, 0.95);
        t.step(&Vec3::new(0.0, 0.0, -50.0), &Vec3::zeros());
        assert_eq!(t.accumulator().z, 0.05);
    }

    #[test]
    fn jerk_term_uses_nominal_period() {
        let mut t = Tmaf::new(Vec3::zeros(), Vec3::repeat(1.0), 0.0125, wide_limits()).unwrap();
        t.step(&Vec3::new(0.0, 0.0, 0.0), &Vec3::zeros());
        let out = t.step(&Vec3::new(0.0, 0.0, 0.0125 * 0.2), &Vec3::zeros());
        // ė = 0.0025 / 0.0125 = 0.2
        assert_abs_diff_eq!(out.z, 0.2, epsilon = 1e-12);
    }

    proptest! {
        #[test]
        fn accumulation_identity(errors in prop::collection::vec((-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64), 1..200),
                                 alpha in 0.0..0.1f64, beta in 0.0..0.01f64) {
            let mut t = Tmaf::new(Vec3::repeat(alpha), Vec3::repeat(beta), 0.0125, wide_limits()).unwrap();
            // Independent recomputation of the microsteps.
            let mut sum = Vec3::zeros();
            let mut prev: Option<Vec3> = None;
            for (x, y, z) in errors {
                let e = Vec3::new(x, y, z);
                let jerk = prev.map(|p| (e - p) / 0.0125).unwrap_or_else(Vec3::zeros);
                sum += alpha * e + beta * jerk;
                prev = Some(e);
                t.step(&e, &Vec3::zeros());
            }
            prop_assert!((t.accumulator() - sum).abs().max() < 1e-9);
        }
    }
}
