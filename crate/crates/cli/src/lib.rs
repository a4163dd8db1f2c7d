//! Experiment harness: plans of algorithm runs over seeded topologies,
//! measured rounds next to analytic upper and lower bounds, and CSV/JSON
//! reports.

pub mod gen;
pub mod measure;
pub mod plan;
pub mod report;

use cwc_apps::FedError;
use cwc_core::{OpError, TopologyError};
use cwc_fat::FatError;
use cwc_flow::FlowError;
use cwc_wheel::WheelError;
use thiserror::Error;

pub use gen::{RandomTopology, TopologySource};
pub use measure::{measure, Outcome};
pub use plan::{Algo, BoundConstants, CoverKind, ExperimentPlan, QuickestMode, RunSpec};
pub use report::{run_plan, sig6, Report, Row, COLUMNS};

/// Environment variable replacing every seed.
pub const SEED_ENV: &str = "CWC_SEED";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid plan: {0}")]
    PlanInvalid(String),
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Topology(#[from] TopologyError),
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Wheel(#[from] WheelError),
    #[error(transparent)]
    Fat(#[from] FatError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Fed(#[from] FedError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
}

impl CliError {
    /// The run cannot reach the cloud at all.
    pub fn is_unreachable(&self) -> bool {
        matches!(
            self,
            CliError::Wheel(WheelError::ZeroCloudBandwidthEverywhere)
                | CliError::Fat(FatError::NoCloudBandwidth)
                | CliError::Flow(FlowError::Unreachable { .. })
                | CliError::Fed(FedError::Wheel(WheelError::ZeroCloudBandwidthEverywhere))
        )
    }

    /// Text of the report's `error` column.
    pub fn label(&self) -> String {
        if self.is_unreachable() {
            format!("Unreachable: {self}")
        } else {
            self.to_string()
        }
    }
}
