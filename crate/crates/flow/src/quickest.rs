//! Minimum-horizon transfer schedules between nodes and the cloud.

use cwc_core::{
    run_schedule, Bits, BuildError, FileId, Hop, InitialState, ItemId, NodeId, Round, RunTrace,
    Schedule, ScheduleBuilder, Topology,
};

use crate::teg::{ArcRole, FlowMode, TimeExpandedGraph};
use crate::FlowError;

/// One leg of a flow path.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Step {
    Send { round: Round, hop: Hop },
    Write { round: Round, node: NodeId },
    Read { round: Round, node: NodeId },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowPath {
    /// Index of the demand the path serves.
    pub demand: usize,
    pub amount: u64,
    pub steps: Vec<Step>,
}

/// An optimal flow over time: `horizon` is the least number of rounds in
/// which the demands can be met.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FlowPlan {
    pub mode: FlowMode,
    pub horizon: Round,
    pub demands: Vec<(NodeId, u64)>,
    pub paths: Vec<FlowPath>,
}

/// The payload behind one demand.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Endpoint {
    pub item: ItemId,
    pub file: FileId,
}

impl FlowPlan {
    /// Adds the plan's transfers to `b`, shifted by `offset` rounds. Demand
    /// `k = (v, s)` moves bits `0..s` of `ends[k].item` between `v` and
    /// `ends[k].file`, each path taking the next unassigned range.
    pub fn emit(&self, b: &mut ScheduleBuilder, offset: Round, ends: &[Endpoint]) -> Result<(), BuildError> {
        assert_eq!(ends.len(), self.demands.len());
        let mut next = vec![0u64; self.demands.len()];
        for p in &self.paths {
            let e = ends[p.demand];
            let lo = next[p.demand];
            let range = lo..lo + p.amount;
            next[p.demand] += p.amount;
            for s in &p.steps {
                match *s {
                    Step::Send { round, hop } => b.send_at(round + offset, hop, e.item, range.clone())?,
                    Step::Write { round, node } => b.write_at(round + offset, node, e.item, e.file, range.clone())?,
                    Step::Read { round, node } => b.read_at(round + offset, node, e.file, range.clone())?,
                }
            }
        }
        Ok(())
    }
}

/// A node with a demand that no positive-bandwidth route connects to a
/// node with cloud bandwidth.
fn unreachable(t: &Topology, demands: &[(NodeId, u64)], mode: FlowMode) -> Option<NodeId> {
    let g = match mode {
        FlowMode::Write => t.clone(),
        FlowMode::Read => t.transposed(),
    };
    demands.iter().filter(|d| d.1 > 0).map(|d| d.0).find(|&i| {
        g.hop_distances(i)
            .iter()
            .enumerate()
            .all(|(v, d)| d.is_none() || t.cloud_bw(v) == 0)
    })
}

fn feasible(t: &Topology, demands: &[(NodeId, u64)], mode: FlowMode, horizon: Round) -> Option<TimeExpandedGraph> {
    let mut g = TimeExpandedGraph::build(t, demands, mode, horizon);
    (g.solve() >= g.demand).then_some(g)
}

/// The least horizon at which every demand `(v, s)` can move `s` bits
/// between `v` and the cloud in direction `mode`, with a decomposition into
/// paths. Doubling brackets the horizon, then binary search pins it.
pub fn quickest_plan(t: &Topology, demands: &[(NodeId, u64)], mode: FlowMode) -> Result<FlowPlan, FlowError> {
    if let Some(&(v, _)) = demands.iter().find(|d| d.0 >= t.n()) {
        return Err(FlowError::NoSuchNode(v));
    }
    if let Some(node) = unreachable(t, demands, mode) {
        return Err(FlowError::Unreachable { node });
    }
    let total: u64 = demands.iter().map(|d| d.1).sum();
    let mut plan = FlowPlan {
        mode,
        horizon: 0,
        demands: demands.to_vec(),
        paths: Vec::new(),
    };
    if total == 0 {
        return Ok(plan);
    }
    let mut hi: Round = 1;
    let mut best = loop {
        if let Some(g) = feasible(t, demands, mode, hi) {
            break g;
        }
        hi *= 2;
    };
    let mut lo = hi / 2 + 1;
    while lo < hi {
        let mid = lo + (hi - lo) / 2;
        match feasible(t, demands, mode, mid) {
            Some(g) => {
                best = g;
                hi = mid;
            }
            None => lo = mid + 1,
        }
    }
    plan.horizon = hi;
    for (roles, amount) in best.paths() {
        let mut demand = None;
        let mut steps = Vec::new();
        for r in roles {
            match r {
                ArcRole::Supply(i) | ArcRole::Deliver(i) => demand = Some(i),
                ArcRole::Storage => {}
                ArcRole::Send { round, hop } => steps.push(Step::Send { round, hop }),
                ArcRole::Write { round, node } => steps.push(Step::Write { round, node }),
                ArcRole::Read { round, node } => steps.push(Step::Read { round, node }),
            }
        }
        plan.paths.push(FlowPath {
            demand: demand.expect("every path has a demand arc"),
            amount,
            steps,
        });
    }
    Ok(plan)
}

/// A standalone optimal schedule with its starting state.
#[derive(Clone, Debug)]
pub struct FlowSchedule {
    pub horizon: Round,
    pub plan: FlowPlan,
    pub schedule: Schedule,
    pub init: InitialState,
}

impl FlowSchedule {
    pub fn run(&self, t: &Topology) -> Result<RunTrace, FlowError> {
        Ok(run_schedule(t, &self.schedule, &self.init)?)
    }
}

/// Every node `i` with `sizes[i] > 0` writes its item `S{i}` to file `S{i}`
/// (write mode) or reads file `R{i}` holding item `R{i}` (read mode).
/// `contents` optionally supplies literal payloads.
pub fn quickest_multi_schedule(
    t: &Topology,
    sizes: &[u64],
    mode: FlowMode,
    contents: Option<&[Bits]>,
) -> Result<FlowSchedule, FlowError> {
    if sizes.len() != t.n() {
        return Err(FlowError::BadSizes {
            expected: t.n(),
            got: sizes.len(),
        });
    }
    let demands: Vec<(NodeId, u64)> = sizes.iter().copied().enumerate().filter(|d| d.1 > 0).collect();
    let plan = quickest_plan(t, &demands, mode)?;
    let mut b = ScheduleBuilder::new(t, None);
    let mut ends = Vec::with_capacity(demands.len());
    for &(i, s) in &demands {
        let name = match mode {
            FlowMode::Write => format!("S{i}"),
            FlowMode::Read => format!("R{i}"),
        };
        let item = b.data(name.clone(), s);
        let file = b.file(&name);
        match mode {
            FlowMode::Write => b.hold(i, item),
            FlowMode::Read => b.preload(file, item),
        }
        if let Some(c) = contents {
            b.set_value(item, c[i].clone());
        }
        ends.push(Endpoint { item, file });
    }
    plan.emit(&mut b, 0, &ends)?;
    let (schedule, init) = b.finish();
    Ok(FlowSchedule {
        horizon: plan.horizon,
        plan,
        schedule,
        init,
    })
}

fn single(t: &Topology, i: NodeId, s: u64) -> Result<Vec<u64>, FlowError> {
    if i >= t.n() {
        return Err(FlowError::NoSuchNode(i));
    }
    let mut sizes = vec![0; t.n()];
    sizes[i] = s;
    Ok(sizes)
}

/// Optimal CloudWrite of `s` bits held by node `i`.
pub fn quickest_write_schedule(t: &Topology, i: NodeId, s: u64) -> Result<FlowSchedule, FlowError> {
    quickest_multi_schedule(t, &single(t, i, s)?, FlowMode::Write, None)
}

/// Optimal CloudRead of an `s`-bit file into node `i`.
pub fn quickest_read_schedule(t: &Topology, i: NodeId, s: u64) -> Result<FlowSchedule, FlowError> {
    quickest_multi_schedule(t, &single(t, i, s)?, FlowMode::Read, None)
}
