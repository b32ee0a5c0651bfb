//! Control laws and the assembled cascades.

pub mod attitude;
pub mod cascade;
pub mod gains;
pub mod pid;
pub mod thrust;

use thiserror::Error;

use crate::filters::FilterError;

pub use attitude::{dmc_thrust, gt_attitude, DmcLateral, GtOutput, YawController};
pub use cascade::{Cascade, PipelineClock, Stage, StageTick, StageTicks, Variant};
pub use gains::ControllerGains;
pub use pid::{Pid, PidGains};
pub use thrust::{DaController, MiParams, Tmaf};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("invalid gains: {0}")]
    InvalidGains(String),
    #[error("thrust vector norm {0:.3e} is too small to define an attitude")]
    DegenerateThrust(f64),
    #[error("free-fall guard: body z-axis vertical component {vertical:.4} leaves no usable lift")]
    FreeFall { vertical: f64 },
    #[error(transparent)]
    Filter(#[from] FilterError),
}
