//! Combining on arbitrary graphs by repeated halving through the cloud: every
//! iteration pairs neighbouring partial products, reading both halves into
//! one node with an optimal collective read and writing the products back
//! with an optimal collective write.

use cwc_core::{
    ceil_log2, run_schedule, Bits, CombineOp, Compute, ItemId, NodeId, Operand, Round, RunTrace,
    Schedule, ScheduleBuilder, Topology,
};
use cwc_flow::{quickest_plan, Endpoint, FlowMode};

use crate::FatError;

pub const OUT: &str = "out";

#[derive(Clone, Debug)]
pub struct GenericRun {
    pub rounds: Round,
    pub value: Option<Bits>,
    /// Longest single read or write phase.
    pub phase_horizon: Round,
    /// Horizons of every phase in execution order.
    pub phases: Vec<Round>,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

impl GenericRun {
    /// `3 T ceil(log n) + T` with `T` the longest phase.
    pub fn analytic_bound(&self, n: usize) -> Round {
        self.phase_horizon * (3 * ceil_log2(n) as Round + 1)
    }
}

struct Phases<'a, 't> {
    b: &'a mut ScheduleBuilder<'t>,
    clock: Round,
    horizons: Vec<Round>,
}

impl Phases<'_, '_> {
    fn run(&mut self, mode: FlowMode, moves: &[(NodeId, ItemId, &str)]) -> Result<(), FatError> {
        if moves.is_empty() {
            return Ok(());
        }
        let t = self.b.topo();
        let demands: Vec<(NodeId, u64)> = moves.iter().map(|m| (m.0, self.b.item_len(m.1))).collect();
        let ends: Vec<Endpoint> = moves
            .iter()
            .map(|&(_, item, f)| Endpoint { item, file: self.b.file(f) })
            .collect();
        let plan = quickest_plan(t, &demands, mode)?;
        plan.emit(self.b, self.clock, &ends)?;
        self.clock += plan.horizon;
        self.horizons.push(plan.horizon);
        Ok(())
    }
}

fn file(j: usize, k: usize, last: bool) -> String {
    if last {
        OUT.to_string()
    } else {
        format!("x{j}.{k}")
    }
}

/// Combines the inputs of all `n` nodes in index order and writes the
/// product to [`OUT`]. Works for any operator and any topology in which
/// every node can reach the cloud.
pub fn combined_write_generic(t: &Topology, op: &CombineOp, inputs: Option<&[Bits]>) -> Result<GenericRun, FatError> {
    let n = t.n();
    let s = op.size() as u64;
    if let Some(xs) = inputs {
        if xs.len() != n || xs.iter().any(|x| x.len() != op.size()) {
            return Err(FatError::BadInputs {
                expected: n,
                size: op.size(),
            });
        }
    }
    let mut b = ScheduleBuilder::new(t, Some(op.clone()));
    let mut current: Vec<ItemId> = (0..n)
        .map(|i| {
            let x = b.data(format!("S{i}"), s);
            b.hold(i, x);
            if let Some(xs) = inputs {
                b.set_value(x, xs[i].clone());
            }
            x
        })
        .collect();
    let mut ph = Phases {
        b: &mut b,
        clock: 0,
        horizons: Vec::new(),
    };
    let names: Vec<String> = (0..n).map(|k| file(0, k, n == 1)).collect();
    let moves: Vec<_> = (0..n).map(|i| (i, current[i], names[i].as_str())).collect();
    ph.run(FlowMode::Write, &moves)?;

    let mut j = 0;
    while current.len() > 1 {
        let pairs = current.len().div_ceil(2);
        let last = pairs == 1;
        let names: Vec<String> = (0..current.len()).map(|k| file(j, k, false)).collect();
        // Node i already holds x_j.i, so it never reads it back.
        for side in 0..2 {
            let reads: Vec<_> = (0..pairs)
                .map(|i| (i, 2 * i + side))
                .filter(|&(i, k)| k < current.len() && k != i)
                .map(|(i, k)| (i, current[k], names[k].as_str()))
                .collect();
            ph.run(FlowMode::Read, &reads)?;
        }
        let at = ph.clock + 1;
        let next: Vec<ItemId> = (0..pairs)
            .map(|i| match current.get(2 * i + 1) {
                Some(&right) => {
                    let out = ph.b.data(format!("x{}.{i}", j + 1), s);
                    ph.b.compute(
                        at,
                        Compute::Combine {
                            node: i,
                            out,
                            left: Operand::Item(current[2 * i]),
                            right: Operand::Item(right),
                            range: 0..s,
                        },
                    );
                    out
                }
                None => current[2 * i],
            })
            .collect();
        let names: Vec<String> = (0..pairs).map(|i| file(j + 1, i, last)).collect();
        let writes: Vec<_> = (0..pairs).map(|i| (i, next[i], names[i].as_str())).collect();
        ph.run(FlowMode::Write, &writes)?;
        current = next;
        j += 1;
    }
    let horizons = ph.horizons;
    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    Ok(GenericRun {
        rounds: trace.rounds_elapsed,
        value: trace.file_value(OUT).cloned(),
        phase_horizon: horizons.iter().copied().max().unwrap_or(0),
        phases: horizons,
        schedule,
        trace,
    })
}
