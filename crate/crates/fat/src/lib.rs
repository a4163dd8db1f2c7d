//! Cloud operations on graphs whose links all carry a full message per
//! round: cloud clusters, sparse cluster covers, cluster-based combining
//! and CloudCast, plus a halving combiner for arbitrary graphs.

pub mod cluster;
pub mod combine;
pub mod cover;
pub mod generic;

use cwc_core::{BuildError, EngineError, NodeId};
use cwc_flow::FlowError;
use thiserror::Error;

pub use cluster::{cloud_read_cluster, cloud_write_cluster, compute_cloud_cluster, z_max, ClusterRun, ClusterStats};
pub use combine::{
    build_cover, cloudcast_fat, cloudcast_lower_bound, combined_write_fat, convergecast_cluster, default_kappa, gather_runs, Run,
    CoverMode, FatCastRun, FatOptions, FatRun,
};
pub use cover::{sparse_cover, Cluster, GraphCover, Multiplex};
pub use generic::{combined_write_generic, GenericRun};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FatError {
    #[error("operation needs a fat-links topology")]
    NotFatLinks,
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("kappa must be at least 1, got {0}")]
    InvalidKappa(u32),
    #[error("a cluster has no cloud bandwidth")]
    NoCloudBandwidth,
    #[error("expected {expected} inputs of {size} bits")]
    BadInputs { expected: usize, size: usize },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Flow(#[from] FlowError),
}
