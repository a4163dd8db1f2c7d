//! Cloud operations on wheel topologies: per-node cloud intervals,
//! interval-based CloudWrite/CloudRead, ring covers, combining (holistic and
//! grain-pipelined) and CloudCast.

pub mod cast;
pub mod combine;
pub mod cover;
pub mod interval;
pub mod ops;

use cwc_core::{BuildError, EngineError, LinkId, NodeId};
use thiserror::Error;

pub use cast::{cloudcast_wheel, CastRun};
pub use combine::{
    combine_within_interval, combined_write_modular, combined_write_wheel, CombineOptions,
    CombineRun,
};
pub use cwc_core::HighTree;
pub use cover::{minimal_circle_cover, three_color, Piece, RingCover, WorstCase};
pub use interval::{
    best_interval, compute_cloud_interval, wheel_lower_bound, Arc, Direction, IntervalStats,
};
pub use ops::{cloud_read_interval, cloud_write_interval, WheelRun};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WheelError {
    #[error("operation needs a wheel topology")]
    NotAWheel,
    #[error("node {0} does not exist")]
    NoSuchNode(NodeId),
    #[error("no node on the ring has cloud bandwidth")]
    ZeroCloudBandwidthEverywhere,
    #[error("an interval meets {degree} others, so three colours may not suffice")]
    ColoringImpossible { degree: usize },
    #[error("grain of {grain} bits is wider than link {link:?} ({w} bits per round)")]
    GrainTooWide { grain: u64, link: LinkId, w: u64 },
    #[error("expected {expected} inputs of {size} bits")]
    BadInputs { expected: usize, size: usize },
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}
