//! Quadrotor flight control built around thrust microstepping via acceleration
//! feedback (TMAF) and decoupled motion control (DMC).
//!
//! The crate is split along the control stack:
//!
//! - [`types`] and [`kinematics`]: frames, attitude conversions and the value
//!   types shared by every layer.
//! - [`filters`]: the cosine-weighted moving average and backward-difference
//!   differentiator used by the PIDs and the TMAF jerk term.
//! - [`control`]: PID, the MI / DA / TMAF thrust laws, geometric-tracking and
//!   decoupled attitude generation, and the assembled cascades.
//! - [`plant`], [`sensors`], [`scheduler`]: a deterministic desk-scale
//!   simulator with payloads, battery sag, gusts, ground effect, noisy
//!   rate-limited sensing and jittered multi-rate loops.
//! - [`scenario`]: scenario files, the run harness, metrics, variant
//!   comparison and the staged gain sweep.

pub mod control;
pub mod filters;
pub mod kinematics;
pub mod plant;
pub mod scenario;
pub mod scheduler;
pub mod sensors;
pub mod types;

pub use types::{Attitude, AxisMode, ControlCommand, Setpoint, Vec3, VehicleState};

/// Standard gravity, m/s².
pub const GRAVITY: f64 = 9.81;
