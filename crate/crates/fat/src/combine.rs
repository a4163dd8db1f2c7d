//! Combining and CloudCast on fat-links graphs: every cluster gathers the
//! product of its home inputs at its leader, then a computation tree over
//! the clusters combines the products through the cloud.

use cwc_core::region::{broadcast, cloud_read, cloud_write};
use cwc_core::{
    ceil_log2, run_schedule, Bits, CombineOp, Compute, FileId, HighTree, ItemId, NodeId, Operand,
    Profile, Round, RunTrace, Schedule, ScheduleBuilder, Topology,
};
use cwc_flow::{quickest_plan, Endpoint, FlowMode};

use crate::cluster::require_fat;
use crate::cover::{GraphCover, Multiplex};
use crate::FatError;

/// Cloud file receiving the combined value.
pub const OUT: &str = "out";
/// Cloud file read by [`cloudcast_fat`].
pub const IN: &str = "in";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CoverMode {
    /// One cluster per distinct cloud cluster.
    All,
    /// The coarsened cover; `None` picks `ceil(log2 n)`.
    Sparse { kappa: Option<u32> },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct FatOptions {
    pub cover: CoverMode,
    /// Replace each tree level's individual reads and writes by one optimal
    /// collective read and one collective write.
    pub collective: bool,
}

impl Default for FatOptions {
    fn default() -> Self {
        FatOptions {
            cover: CoverMode::Sparse { kappa: None },
            collective: false,
        }
    }
}

pub fn default_kappa(n: usize) -> u32 {
    ceil_log2(n).max(1)
}

pub fn build_cover(t: &Topology, s: u64, mode: CoverMode) -> Result<GraphCover, FatError> {
    match mode {
        CoverMode::All => GraphCover::all_clusters(t, s),
        CoverMode::Sparse { kappa } => GraphCover::sparse(t, s, kappa.unwrap_or_else(|| default_kappa(t.n()))),
    }
}

#[derive(Clone, Debug)]
pub struct FatRun {
    pub rounds: Round,
    pub value: Option<Bits>,
    pub cover: GraphCover,
    pub tree: HighTree,
    /// Leaves of the high-level tree: one per cluster product or run.
    pub leaves: usize,
    /// Round by whose end every leaf value is at its leader.
    pub low_rounds: Round,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

/// Gathers the product of the home inputs of cluster `c` at its leader over
/// a BFS tree: every member combines its children's partials with its own
/// input (the unit if its home is elsewhere) and sends one partial up.
/// Returns the product and the round by whose end the leader has it, or
/// `None` when no member has its home here.
#[allow(clippy::too_many_arguments)]
pub fn convergecast_cluster(
    b: &mut ScheduleBuilder,
    cover: &GraphCover,
    mux: &Multiplex,
    c: usize,
    inputs: &[ItemId],
    literal: bool,
    start: Round,
) -> Result<Option<(ItemId, Round)>, FatError> {
    let t = b.topo();
    if !cover.home.contains(&c) {
        return Ok(None);
    }
    let op = b.op().expect("combining needs an operator").clone();
    let s = op.size() as u64;
    let region = cover.clusters[c].region(t);
    let slot = |v: NodeId, r: Round| mux.allows(c, v, r);
    let mut partial: Vec<Option<(ItemId, Round)>> = vec![None; region.len()];
    let mut arrived: Vec<Vec<(ItemId, Round)>> = vec![Vec::new(); region.len()];
    for k in region.farthest_first() {
        let v = region.nodes()[k];
        let own = if cover.home[v] == c {
            Operand::Item(inputs[v])
        } else {
            Operand::Unit
        };
        let kids = std::mem::take(&mut arrived[k]);
        let (item, ready) = if kids.is_empty() {
            match own {
                Operand::Item(x) => (x, start),
                Operand::Unit => {
                    let u = b.data(format!("unit{c}.{v}"), s);
                    b.hold(v, u);
                    if literal {
                        b.set_value(u, op.unit());
                    }
                    (u, start)
                }
            }
        } else {
            let at = kids.iter().map(|x| x.1).max().unwrap_or(0).max(start) + 1;
            let mut acc = own;
            for (j, &(child, _)) in kids.iter().enumerate() {
                let out = b.data(format!("part{c}.{v}.{j}"), s);
                b.compute(
                    at,
                    Compute::Combine {
                        node: v,
                        out,
                        left: acc,
                        right: Operand::Item(child),
                        range: 0..s,
                    },
                );
                acc = Operand::Item(out);
            }
            let Operand::Item(x) = acc else { unreachable!("at least one child") };
            (x, at - 1)
        };
        match region.up_hop(k) {
            Some(hop) => {
                let p = region.parent(k).expect("non-root has a parent");
                let got = b.forward_hop(item, 0, s, hop, &Profile::ready(ready, s), &slot)?;
                arrived[p].push((item, got.done()));
            }
            None => partial[k] = Some((item, ready)),
        }
    }
    Ok(partial[0])
}

/// A product of the inputs of nodes `lo..=hi`, all homed in one cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Run {
    pub lo: NodeId,
    pub hi: NodeId,
    pub item: ItemId,
    /// Held by the current node from the end of this round.
    pub ready: Round,
}

/// Order-preserving gathering for operators that do not commute: members
/// pass maximal runs of consecutive home indices towards the leader,
/// merging runs that meet. Returns the leader's runs by index.
pub fn gather_runs(
    b: &mut ScheduleBuilder,
    cover: &GraphCover,
    mux: &Multiplex,
    c: usize,
    inputs: &[ItemId],
    start: Round,
) -> Result<Vec<Run>, FatError> {
    let t = b.topo();
    let s = b.item_len(inputs[0]);
    let region = cover.clusters[c].region(t);
    let slot = |v: NodeId, r: Round| mux.allows(c, v, r);
    let mut arrived: Vec<Vec<Run>> = vec![Vec::new(); region.len()];
    for k in region.farthest_first() {
        let v = region.nodes()[k];
        let mut runs = std::mem::take(&mut arrived[k]);
        if cover.home[v] == c {
            runs.push(Run { lo: v, hi: v, item: inputs[v], ready: start });
        }
        runs.sort_by_key(|r| r.lo);
        let mut merged: Vec<Run> = Vec::with_capacity(runs.len());
        for r in runs {
            match merged.last_mut() {
                Some(last) if last.hi + 1 == r.lo => {
                    let ready = last.ready.max(r.ready);
                    let out = b.data(format!("run{c}.{}.{}", last.lo, r.hi), s);
                    b.compute(
                        ready + 1,
                        Compute::Combine {
                            node: v,
                            out,
                            left: Operand::Item(last.item),
                            right: Operand::Item(r.item),
                            range: 0..s,
                        },
                    );
                    *last = Run { lo: last.lo, hi: r.hi, item: out, ready };
                }
                _ => merged.push(r),
            }
        }
        match region.up_hop(k) {
            Some(hop) => {
                let p = region.parent(k).expect("non-root has a parent");
                for r in merged {
                    let got = b.forward_hop(r.item, 0, s, hop, &Profile::ready(r.ready, s), &slot)?;
                    arrived[p].push(Run { ready: got.done(), ..r });
                }
            }
            None => return Ok(merged),
        }
    }
    Ok(Vec::new())
}

/// A leaf of the high-level tree: a product held by a cluster leader.
#[derive(Clone, Copy, Debug)]
struct Leaf {
    cluster: usize,
    item: ItemId,
    ready: Round,
}

#[derive(Clone, Debug)]
enum Val {
    Unit,
    Stored { item: ItemId, file: FileId, written: Round },
}

fn file_name(tree: &HighTree, y: usize) -> String {
    if y == tree.root {
        OUT.to_string()
    } else {
        format!("y{y}")
    }
}

/// Combines the `n` inputs with `op` and writes the product to the cloud
/// file [`OUT`]. Commutative operators send one partial per cluster up the
/// tree; others keep index order through [`gather_runs`] at the cost of one
/// tree leaf per run.
pub fn combined_write_fat(
    t: &Topology,
    op: &CombineOp,
    inputs: Option<&[Bits]>,
    opts: FatOptions,
) -> Result<FatRun, FatError> {
    require_fat(t)?;
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
    let cover = build_cover(t, s, opts.cover)?;
    let mux = cover.slots();
    let m = cover.clusters.len();
    let mut b = ScheduleBuilder::new(t, Some(op.clone()));
    let items: Vec<ItemId> = (0..n)
        .map(|i| {
            let x = b.data(format!("S{i}"), s);
            b.hold(i, x);
            if let Some(xs) = inputs {
                b.set_value(x, xs[i].clone());
            }
            x
        })
        .collect();

    let mut leaves: Vec<(NodeId, Leaf)> = Vec::new();
    for c in 0..m {
        if op.is_commutative() {
            if let Some((item, ready)) = convergecast_cluster(&mut b, &cover, &mux, c, &items, inputs.is_some(), 0)? {
                leaves.push((c, Leaf { cluster: c, item, ready }));
            }
        } else {
            for r in gather_runs(&mut b, &cover, &mux, c, &items, 0)? {
                leaves.push((r.lo, Leaf { cluster: c, item: r.item, ready: r.ready }));
            }
        }
    }
    leaves.sort_by_key(|l| l.0);
    let low: Vec<Leaf> = leaves.into_iter().map(|l| l.1).collect();
    let mut clock: Round = low.iter().map(|l| l.ready).max().unwrap_or(0);
    let low_rounds = clock;
    let leaves = low.len();
    let tree = HighTree::build(low.len());
    let owner: Vec<usize> = tree
        .nodes
        .iter()
        .map(|node| match node.leaf {
            Some(k) => low[k].cluster,
            None => node.piece % m,
        })
        .collect();

    let mut val = vec![Val::Unit; tree.nodes.len()];
    let ctx = Level { cover: &cover, tree: &tree, owner: &owner, low: &low };
    for height in 0..=tree.height() {
        let level: Vec<usize> = (0..tree.nodes.len()).filter(|&y| tree.nodes[y].height == height).collect();
        clock = if opts.collective {
            collective_level(&mut b, &ctx, &level, &mut val, clock)?
        } else {
            tree_level(&mut b, &ctx, &mux, &level, &mut val, clock)?
        };
    }

    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    Ok(FatRun {
        rounds: trace.rounds_elapsed,
        value: trace.file_value(OUT).cloned(),
        cover,
        tree,
        leaves,
        low_rounds,
        schedule,
        trace,
    })
}

/// What a tree node must do at its level.
enum Task {
    Done(Val),
    /// Write a local value.
    Write { item: ItemId, ready: Round },
    /// Read the stored children, combine them if there are two, write.
    Merge { stored: Vec<(ItemId, FileId, Round)> },
}

/// Shared view of the high-level tree.
struct Level<'a> {
    cover: &'a GraphCover,
    tree: &'a HighTree,
    /// Cluster running each tree node.
    owner: &'a [usize],
    low: &'a [Leaf],
}

impl Level<'_> {
    fn task(&self, y: usize, val: &[Val]) -> Task {
        let node = &self.tree.nodes[y];
        match (node.children, node.leaf) {
            (None, Some(k)) => Task::Write {
                item: self.low[k].item,
                ready: self.low[k].ready,
            },
            (Some((l, r)), _) => {
                let stored: Vec<(ItemId, FileId, Round)> = [&val[l], &val[r]]
                    .into_iter()
                    .filter_map(|v| match *v {
                        Val::Stored { item, file, written } => Some((item, file, written)),
                        Val::Unit => None,
                    })
                    .collect();
                match stored.len() {
                    0 => Task::Done(Val::Unit),
                    1 if y != self.tree.root => {
                        let (item, file, written) = stored[0];
                        Task::Done(Val::Stored { item, file, written })
                    }
                    _ => Task::Merge { stored },
                }
            }
            (None, None) => Task::Done(Val::Unit),
        }
    }

    fn leader(&self, y: usize) -> NodeId {
        self.cover.clusters[self.owner[y]].leader
    }
}

fn merge_compute(b: &mut ScheduleBuilder, y: usize, leader: NodeId, stored: &[(ItemId, FileId, Round)], at: Round) -> ItemId {
    if let [(l, _, _), (r, _, _)] = *stored {
        let s = b.item_len(l);
        let out = b.data(format!("v{y}"), s);
        b.compute(
            at + 1,
            Compute::Combine {
                node: leader,
                out,
                left: Operand::Item(l),
                right: Operand::Item(r),
                range: 0..s,
            },
        );
        out
    } else {
        stored[0].0
    }
}

/// One tree level with every leader running its own reads and writes
/// inside its cluster; returns the level's end.
fn tree_level(
    b: &mut ScheduleBuilder,
    ctx: &Level,
    mux: &Multiplex,
    level: &[usize],
    val: &mut [Val],
    clock: Round,
) -> Result<Round, FatError> {
    let t = b.topo();
    let s = ctx.cover.s;
    let mut end = clock;
    for &y in level {
        let c = ctx.owner[y];
        let region = ctx.cover.clusters[c].cloud_region(t);
        let slot = |v: NodeId, r: Round| mux.allows(c, v, r);
        val[y] = match ctx.task(y, val) {
            Task::Done(v) => v,
            Task::Write { item, ready } => {
                let f = b.file(&file_name(ctx.tree, y));
                let w = cloud_write(b, &region, item, s, f, &Profile::ready(ready.max(clock), s), true, &slot)?;
                end = end.max(w.acked);
                Val::Stored { item, file: f, written: w.written }
            }
            Task::Merge { stored } => {
                let mut at = clock;
                for &(item, file, written) in &stored {
                    at = cloud_read(b, &region, file, item, s, &Profile::ready(written, s), at, &slot)?;
                }
                let item = merge_compute(b, y, ctx.leader(y), &stored, at);
                let f = b.file(&file_name(ctx.tree, y));
                let w = cloud_write(b, &region, item, s, f, &Profile::ready(at, s), true, &slot)?;
                end = end.max(w.acked);
                Val::Stored { item, file: f, written: w.written }
            }
        };
    }
    Ok(end)
}

/// One tree level as an optimal collective read of every needed child
/// value followed by an optimal collective write; returns the level's end.
fn collective_level(
    b: &mut ScheduleBuilder,
    ctx: &Level,
    level: &[usize],
    val: &mut [Val],
    clock: Round,
) -> Result<Round, FatError> {
    let t = b.topo();
    let s = ctx.cover.s;
    let mut reads: Vec<(NodeId, u64)> = Vec::new();
    let mut read_ends = Vec::new();
    let mut writes: Vec<(usize, NodeId, ItemId)> = Vec::new();
    let mut merges: Vec<(usize, Vec<(ItemId, FileId, Round)>)> = Vec::new();
    let mut start = clock;
    for &y in level {
        let leader = ctx.leader(y);
        match ctx.task(y, val) {
            Task::Done(v) => val[y] = v,
            Task::Write { item, ready } => {
                start = start.max(ready);
                writes.push((y, leader, item));
            }
            Task::Merge { stored } => {
                for &(item, file, _) in &stored {
                    reads.push((leader, s));
                    read_ends.push(Endpoint { item, file });
                }
                merges.push((y, stored));
            }
        }
    }
    if !reads.is_empty() {
        let plan = quickest_plan(t, &reads, FlowMode::Read)?;
        plan.emit(b, start, &read_ends)?;
        start += plan.horizon;
    }
    for (y, stored) in merges {
        let item = merge_compute(b, y, ctx.leader(y), &stored, start);
        writes.push((y, ctx.leader(y), item));
    }
    if writes.is_empty() {
        return Ok(start);
    }
    let demands: Vec<(NodeId, u64)> = writes.iter().map(|w| (w.1, s)).collect();
    let ends: Vec<Endpoint> = writes
        .iter()
        .map(|&(y, _, item)| Endpoint { item, file: b.file(&file_name(ctx.tree, y)) })
        .collect();
    let plan = quickest_plan(t, &demands, FlowMode::Write)?;
    plan.emit(b, start, &ends)?;
    let end = start + plan.horizon;
    for (&(y, _, item), e) in writes.iter().zip(&ends) {
        val[y] = Val::Stored { item, file: e.file, written: end };
    }
    Ok(end)
}

#[derive(Clone, Debug)]
pub struct FatCastRun {
    pub rounds: Round,
    pub cover: GraphCover,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

/// Every cluster of the sparse cover has its leader read the `s`-bit file
/// [`IN`] and spread it over the cluster; clusters share nodes round-robin.
pub fn cloudcast_fat(t: &Topology, s: u64, content: Option<&Bits>, kappa: Option<u32>) -> Result<FatCastRun, FatError> {
    require_fat(t)?;
    let cover = build_cover(t, s, CoverMode::Sparse { kappa })?;
    let mux = cover.slots();
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("F", s);
    if let Some(v) = content {
        b.set_value(x, v.clone());
    }
    let f = b.file(IN);
    b.preload(f, x);
    if s > 0 {
        for (c, cluster) in cover.clusters.iter().enumerate() {
            let slot = |v: NodeId, r: Round| mux.allows(c, v, r);
            let done = cloud_read(&mut b, &cluster.cloud_region(t), f, x, s, &Profile::ready(0, s), 0, &slot)?;
            broadcast(&mut b, &cluster.region(t), x, s, &Profile::ready(done, s), &slot)?;
        }
    }
    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    Ok(FatCastRun {
        rounds: trace.rounds_elapsed,
        cover,
        schedule,
        trace,
    })
}

/// Lower bound on CloudCast: the slowest node's own read bound.
pub fn cloudcast_lower_bound(t: &Topology, s: u64) -> Option<Round> {
    (0..t.n()).map(|i| t.reach_lower_bound(i, s)).try_fold(0, |m, b| b.map(|b| m.max(b)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cluster::z_max;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// A random connected fat-links graph: a random spanning tree plus extras.
    fn random_fat(rng: &mut ChaCha8Rng, n: usize, s: u64) -> Topology {
        let mut edges = Vec::new();
        for v in 1..n {
            edges.push((rng.gen_range(0..v), v, s + rng.gen_range(0..s)));
        }
        for _ in 0..n / 2 {
            let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
            if u != v && !edges.iter().any(|e| (e.0, e.1) == (u, v) || (e.0, e.1) == (v, u)) {
                edges.push((u, v, s));
            }
        }
        let cloud: Vec<u64> = (0..n).map(|_| rng.gen_range(0..4)).collect();
        let mut cloud = cloud;
        cloud[rng.gen_range(0..n)] = 1 + rng.gen_range(0..4);
        Topology::fat_links(s, &cloud, &edges).unwrap()
    }

    fn ops() -> Vec<CombineOp> {
        vec![CombineOp::xor(16).unwrap(), CombineOp::add_pow2(16, 32).unwrap()]
    }

    #[test]
    fn products_match_the_fold() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..24 {
            let n = rng.gen_range(1..14);
            for op in ops() {
                let t = random_fat(&mut rng, n, op.size() as u64);
                let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut rng)).collect();
                for cover in [CoverMode::All, CoverMode::Sparse { kappa: None }] {
                    for collective in [false, true] {
                        let run = combined_write_fat(&t, &op, Some(&xs), FatOptions { cover, collective }).unwrap();
                        assert_eq!(run.value.as_ref(), Some(&op.fold(&xs)), "trial {trial} {cover:?} {collective}");
                        assert!(run.trace.leaks.is_empty());
                        let z = z_max(&t, op.size() as u64).unwrap();
                        assert!(run.rounds as f64 >= z / 2.0);
                        let log = ceil_log2(n).max(1) as f64;
                        assert!(run.rounds as f64 <= 32.0 * z * log * log);
                    }
                }
            }
        }
    }

    #[test]
    fn unit_inputs_give_the_unit() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let op = CombineOp::add_pow2(16, 32).unwrap();
        let t = random_fat(&mut rng, 9, 32);
        let xs = vec![op.unit(); 9];
        let run = combined_write_fat(&t, &op, Some(&xs), FatOptions::default()).unwrap();
        assert_eq!(run.value, Some(op.unit()));
    }

    #[test]
    fn order_sensitive_operators_keep_index_order() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for trial in 0..16 {
            let n = rng.gen_range(1..14);
            for op in [CombineOp::matmul2(), CombineOp::compose8()] {
                let t = random_fat(&mut rng, n, 24);
                let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut rng)).collect();
                for collective in [false, true] {
                    let opts = FatOptions { cover: CoverMode::Sparse { kappa: None }, collective };
                    let run = combined_write_fat(&t, &op, Some(&xs), opts).unwrap();
                    assert_eq!(run.value.as_ref(), Some(&op.fold(&xs)), "trial {trial} {}", op.name());
                }
            }
        }
    }

    #[test]
    fn collective_levels_are_not_slower_on_small_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let op = CombineOp::xor(16).unwrap();
        for _ in 0..6 {
            let t = random_fat(&mut rng, 10, 16);
            let opts = |collective| FatOptions { cover: CoverMode::All, collective };
            let a = combined_write_fat(&t, &op, None, opts(false)).unwrap();
            let b = combined_write_fat(&t, &op, None, opts(true)).unwrap();
            assert!(b.rounds <= a.rounds, "{} > {}", b.rounds, a.rounds);
        }
    }

    #[test]
    fn cloudcast_reaches_every_node() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let n = rng.gen_range(2..16);
            let t = random_fat(&mut rng, n, 24);
            let run = cloudcast_fat(&t, 24, None, None).unwrap();
            let lb = cloudcast_lower_bound(&t, 24).unwrap();
            assert!(run.rounds >= lb);
            let x = ItemId(0);
            for v in 0..n {
                assert!(run.trace.holds(v, x), "node {v}");
            }
        }
    }
}
