//! Scenario files, the run harness and metrics.

pub mod bundled;
pub mod compare;
pub mod metrics;
pub mod record;
pub mod run;
pub mod schema;
pub mod sweep;

use thiserror::Error;

use crate::control::ControlError;
use crate::scheduler::SchedulerError;

pub use compare::{compare_variants, write_comparison_csv, write_orderings_csv, Comparison, ComparisonRow, RunStatus};
pub use metrics::{EventSettling, Metrics, MetricsError, WindowMetrics};
pub use record::{RunMeta, RunRecord, Sample, DEFAULT_PRECISION, TRACE_HEADER};
pub use run::{run_scenario, RunOutput};
pub use schema::{Event, LoopConfig, LoopsConfig, Scenario, SetpointSegment, SCHEMA_VERSION};
pub use sweep::{sweep, ParamRange, SweepAxis, SweepRequest, SweepResult, SweepStage};

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario field '{field}': {message}")]
    Validation { field: String, message: String },
    #[error("run aborted at t = {time:.3} s: {reason}")]
    Aborted {
        time: f64,
        reason: String,
        /// Trace up to the fault.
        record: Box<RunRecord>,
    },
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Scheduler(#[from] SchedulerError),
    #[error("filter setup failed: {0}")]
    Filter(#[from] crate::filters::FilterError),
    #[error("{0}")]
    Sweep(String),
    #[error("unknown scenario '{0}'")]
    Unknown(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ScenarioError {
    /// True when the run started but a controller or plant fault stopped it.
    pub fn is_abort(&self) -> bool {
        matches!(self, ScenarioError::Aborted { .. })
    }
}
