//! Optimal cloud transfer schedules on arbitrary topologies, found as
//! quickest flows over time-expanded graphs.

pub mod maxflow;
pub mod quickest;
pub mod teg;

use cwc_core::{BuildError, EngineError, NodeId};
use thiserror::Error;

pub use quickest::{
    quickest_multi_schedule, quickest_plan, quickest_read_schedule, quickest_write_schedule,
    Endpoint, FlowPath, FlowPlan, FlowSchedule, Step,
};
pub use teg::{ArcRole, FlowMode, TimeExpandedGraph};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FlowError {
    #[error("node {node} has no positive-bandwidth route to or from the cloud")]
    Unreachable { node: NodeId },
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("expected {expected} sizes, got {got}")]
    BadSizes { expected: usize, got: usize },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
