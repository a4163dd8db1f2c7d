//! Topologies, combining operators, schedules and a bit-exact synchronous
//! round engine for networks of processing nodes sharing one passive cloud.

pub mod bits;
pub mod builder;
pub mod engine;
pub mod op;
pub mod ranges;
pub mod region;
pub mod schedule;
pub mod topology;
pub mod tree;

pub use bits::Bits;
pub use builder::{BuildError, Profile, ScheduleBuilder, Slot};
pub use engine::{run_schedule, EngineError, RunTrace};
pub use op::{lane_bits_for, CombineOp, OpError, OpKind};
pub use ranges::RangeSet;
pub use region::Region;
pub use schedule::{sequence, Action, Compute, FileId, InitialState, ItemId, ItemKind, Operand, Schedule};
pub use topology::{
    build_topology, Hop, LinkId, Mode, NodeId, Round, Topology, TopologyError, TopologySpec,
};
pub use tree::{HighTree, TreeNode};

/// `ceil(log2 n)`, with `log 1 = 0`.
pub fn ceil_log2(n: usize) -> u32 {
    if n <= 1 {
        0
    } else {
        usize::BITS - (n - 1).leading_zeros()
    }
}

