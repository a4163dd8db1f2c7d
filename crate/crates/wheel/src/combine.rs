//! Combining all inputs of a wheel into one cloud file. The low level
//! combines within each cover piece over local links; the high level runs a
//! computation tree over the pieces through the cloud.

use cwc_core::builder::any_round;
use cwc_core::region::{cloud_read, cloud_write};
use cwc_core::{
    run_schedule, Bits, InitialState, CombineOp, Compute, FileId, Hop, ItemId, LinkId, NodeId, Operand,
    HighTree, Profile, Region, Round, RunTrace, Schedule, ScheduleBuilder, Topology,
};

use crate::cover::RingCover;
use crate::interval::require_wheel;
use crate::WheelError;

/// Cloud file receiving the combined value.
pub const OUT: &str = "out";

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CombineOptions {
    /// Reject grains wider than any local link used.
    pub strict: bool,
}

#[derive(Clone, Debug)]
pub struct CombineRun {
    pub rounds: Round,
    /// Literal cloud result when inputs were given.
    pub value: Option<Bits>,
    pub cover: RingCover,
    pub tree: HighTree,
    /// Inputs consumed as real (non-unit) leaves across all pieces.
    pub real_leaves: usize,
    pub schedule: Schedule,
    pub init: InitialState,
    pub trace: RunTrace,
}

/// A partial product during planning.
#[derive(Clone, Debug)]
enum Val {
    Unit,
    /// Held by `node` from the end of round `ready`.
    Local { item: ItemId, node: NodeId, ready: Round },
    /// In the cloud from the end of round `written`.
    Stored { item: ItemId, file: FileId, written: Round },
}

fn cw_hops(from: NodeId, to: NodeId) -> Vec<Hop> {
    (from..to)
        .map(|x| Hop {
            link: LinkId(x as u32),
            from: x,
            to: x + 1,
        })
        .collect()
}

fn check_inputs(t: &Topology, op: &CombineOp, inputs: Option<&[Bits]>) -> Result<(), WheelError> {
    if let Some(xs) = inputs {
        if xs.len() != t.n() || xs.iter().any(|x| x.len() != op.size()) {
            return Err(WheelError::BadInputs {
                expected: t.n(),
                size: op.size(),
            });
        }
    }
    Ok(())
}

fn input_items(b: &mut ScheduleBuilder, op: &CombineOp, inputs: Option<&[Bits]>) -> Vec<ItemId> {
    (0..b.topo().n())
        .map(|i| {
            let x = b.data(format!("S{i}"), op.size() as u64);
            b.hold(i, x);
            if let Some(xs) = inputs {
                b.set_value(x, xs[i].clone());
            }
            x
        })
        .collect()
}

fn file_name(tree: &HighTree, y: usize) -> String {
    if y == tree.root {
        OUT.to_string()
    } else {
        format!("y{y}")
    }
}

/// Holistic in-piece tree: inputs padded on the left with unit leaves to a
/// power of two; each product is formed at the node of its rightmost leaf
/// after the left child's value is forwarded clockwise to it.
fn low_holistic(
    b: &mut ScheduleBuilder,
    cover: &RingCover,
    p: usize,
    inputs: &[ItemId],
    start: Round,
) -> Result<(Val, usize), WheelError> {
    let piece = cover.pieces[p];
    let len = piece.hi - piece.lo + 1;
    let pad = len.next_power_of_two() - len;
    let mut real = 0;
    let leaf = |q: usize, real: &mut usize| -> Val {
        if q < pad {
            return Val::Unit;
        }
        let v = piece.lo + q - pad;
        if cover.home[v] == p {
            *real += 1;
            Val::Local {
                item: inputs[v],
                node: v,
                ready: start,
            }
        } else {
            Val::Unit
        }
    };
    fn rec(
        b: &mut ScheduleBuilder,
        lo: usize,
        hi: usize,
        host_of: &dyn Fn(usize) -> NodeId,
        leaf: &mut dyn FnMut(usize) -> Val,
        tag: &str,
    ) -> Result<Val, WheelError> {
        if hi - lo == 1 {
            return Ok(leaf(lo));
        }
        let mid = (lo + hi) / 2;
        let l = rec(b, lo, mid, host_of, leaf, tag)?;
        let r = rec(b, mid, hi, host_of, leaf, tag)?;
        let host = host_of(hi - 1);
        let s = b.op().expect("operator").size() as u64;
        Ok(match (l, r) {
            (Val::Unit, r) => r,
            (Val::Local { item, node, ready }, r) => {
                let arrived = b
                    .forward(item, 0, s, &cw_hops(node, host), &Profile::ready(ready, s), &any_round)?
                    .done();
                match r {
                    Val::Local {
                        item: right,
                        ready: rr,
                        ..
                    } => {
                        let out = b.data(format!("{tag}.{lo}-{hi}"), s);
                        let at = arrived.max(rr);
                        b.compute(
                            at + 1,
                            Compute::Combine {
                                node: host,
                                out,
                                left: Operand::Item(item),
                                right: Operand::Item(right),
                                range: 0..s,
                            },
                        );
                        Val::Local {
                            item: out,
                            node: host,
                            ready: at,
                        }
                    }
                    _ => Val::Local {
                        item,
                        node: host,
                        ready: arrived,
                    },
                }
            }
            (Val::Stored { .. }, _) => unreachable!("low level works on local values"),
        })
    }
    let host_of = |q: usize| piece.lo + q.max(pad) - pad;
    let mut leaf_fn = |q: usize| leaf(q, &mut real);
    let v = rec(b, 0, len + pad, &host_of, &mut leaf_fn, &format!("p{p}"))?;
    Ok((v, real))
}

/// One-pass grain pipeline along the piece: every home node folds its input
/// into the running product grain by grain and passes each finished grain on.
fn low_modular(
    b: &mut ScheduleBuilder,
    cover: &RingCover,
    p: usize,
    inputs: &[ItemId],
) -> Result<(Option<(ItemId, Profile)>, usize), WheelError> {
    let piece = cover.pieces[p];
    let homes = cover.homes_of(p);
    let Some(&first) = homes.first() else {
        return Ok((None, 0));
    };
    let s = b.op().expect("operator").size() as u64;
    let mut acc = inputs[first];
    let mut prof = Profile::ready(0, s);
    for v in first + 1..=piece.hi {
        let hop = cw_hops(v - 1, v)[0];
        prof = b.forward_hop(acc, 0, s, hop, &prof, &any_round)?;
        if cover.home[v] == p {
            let out = b.data(format!("p{p}.{first}-{v}"), s);
            prof = b.combine_stream(
                v,
                out,
                (Operand::Item(acc), &prof),
                (Operand::Item(inputs[v]), &Profile::ready(0, s)),
            );
            acc = out;
        }
    }
    Ok((Some((acc, prof)), homes.len()))
}

fn finish(
    t: &Topology,
    b: ScheduleBuilder,
    cover: RingCover,
    tree: HighTree,
    real_leaves: usize,
) -> Result<CombineRun, WheelError> {
    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    let value = trace.file_value(OUT).cloned();
    Ok(CombineRun {
        rounds: trace.rounds_elapsed,
        value,
        cover,
        tree,
        real_leaves,
        schedule,
        init,
        trace,
    })
}

/// Combines the `n` inputs (node order) with `op` and writes the product
/// to the cloud file [`OUT`]. Both levels proceed in colour phases, and the
/// high level additionally level by level.
pub fn combined_write_wheel(
    t: &Topology,
    op: &CombineOp,
    inputs: Option<&[Bits]>,
) -> Result<CombineRun, WheelError> {
    require_wheel(t)?;
    check_inputs(t, op, inputs)?;
    let s = op.size() as u64;
    let cover = RingCover::build(t, s)?;
    let tree = HighTree::build(cover.pieces.len());
    let regions: Vec<Region> = (0..cover.pieces.len()).map(|p| cover.region(t, p)).collect();
    let mut b = ScheduleBuilder::new(t, Some(op.clone()));
    let items = input_items(&mut b, op, inputs);

    let mut low = vec![Val::Unit; cover.pieces.len()];
    let mut real_leaves = 0;
    let mut clock: Round = 0;
    for color in 0..3 {
        let mut end = clock;
        for p in (0..cover.pieces.len()).filter(|&p| cover.piece_color(p) == color) {
            let (v, real) = low_holistic(&mut b, &cover, p, &items, clock)?;
            if let Val::Local { ready, .. } = v {
                end = end.max(ready);
            }
            real_leaves += real;
            low[p] = v;
        }
        clock = end;
    }

    let mut val: Vec<Val> = vec![Val::Unit; tree.nodes.len()];
    for height in 0..=tree.height() {
        for color in 0..3 {
            let mut end = clock;
            for y in 0..tree.nodes.len() {
                let node = &tree.nodes[y];
                if node.height != height || cover.piece_color(node.piece) != color {
                    continue;
                }
                let region = &regions[node.piece];
                let v = match (node.children, node.leaf) {
                    (None, Some(p)) => match low[p].clone() {
                        Val::Local { item, ready, .. } => {
                            let f = b.file(&file_name(&tree, y));
                            let ready = Profile::ready(ready.max(clock), s);
                            let w = cloud_write(&mut b, region, item, s, f, &ready, true, &any_round)?;
                            end = end.max(w.acked);
                            Val::Stored {
                                item,
                                file: f,
                                written: w.written,
                            }
                        }
                        other => other,
                    },
                    (Some((l, r)), _) => {
                        let stored: Vec<(ItemId, FileId, Round)> = [&val[l], &val[r]]
                            .into_iter()
                            .filter_map(|v| match *v {
                                Val::Stored { item, file, written } => Some((item, file, written)),
                                _ => None,
                            })
                            .collect();
                        if stored.is_empty() || (stored.len() == 1 && y != tree.root) {
                            match stored.first() {
                                Some(&(item, file, written)) => Val::Stored { item, file, written },
                                None => Val::Unit,
                            }
                        } else {
                            let mut at = clock;
                            for &(item, file, written) in &stored {
                                at = cloud_read(
                                    &mut b,
                                    region,
                                    file,
                                    item,
                                    s,
                                    &Profile::ready(written, s),
                                    at,
                                    &any_round,
                                )?;
                            }
                            let item = if let [(li, _, _), (ri, _, _)] = stored[..] {
                                let out = b.data(format!("v{y}"), s);
                                b.compute(
                                    at + 1,
                                    Compute::Combine {
                                        node: region.root(),
                                        out,
                                        left: Operand::Item(li),
                                        right: Operand::Item(ri),
                                        range: 0..s,
                                    },
                                );
                                out
                            } else {
                                stored[0].0
                            };
                            let f = b.file(&file_name(&tree, y));
                            let w = cloud_write(&mut b, region, item, s, f, &Profile::ready(at, s), true, &any_round)?;
                            end = end.max(w.acked);
                            Val::Stored {
                                item,
                                file: f,
                                written: w.written,
                            }
                        }
                    }
                    (None, None) => Val::Unit,
                };
                val[y] = v;
            }
            clock = end;
        }
    }
    finish(t, b, cover, tree, real_leaves)
}

/// Smooth weighted round-robin over region members, weighted by cloud
/// bandwidth.
struct RoundRobin {
    members: Vec<(usize, i64)>,
    current: Vec<i64>,
    total: i64,
}

impl RoundRobin {
    fn new(t: &Topology, region: &Region) -> Self {
        let members: Vec<(usize, i64)> = (0..region.len())
            .map(|k| (k, t.cloud_bw(region.nodes()[k]) as i64))
            .filter(|&(_, w)| w > 0)
            .collect();
        let total = members.iter().map(|m| m.1).sum();
        RoundRobin {
            current: vec![0; members.len()],
            members,
            total,
        }
    }

    fn next(&mut self) -> usize {
        let mut best = 0;
        for (j, m) in self.members.iter().enumerate() {
            self.current[j] += m.1;
            if self.current[j] > self.current[best] {
                best = j;
            }
        }
        self.current[best] -= self.total;
        self.members[best].0
    }
}

/// Per-grain cloud contents of a tree node.
#[derive(Clone, Debug)]
enum Stream {
    Unit,
    Stored {
        item: ItemId,
        files: Vec<FileId>,
        ready: Vec<Round>,
    },
}

fn slot_of(duty: u32) -> impl Fn(NodeId, Round) -> bool {
    move |_, t| t % 3 == duty
}

const READ_LEFT: u32 = 0;
const READ_RIGHT: u32 = 1;
const WRITE: u32 = 2;

/// Writes every grain of `item` (grain `j` held by the leader from the end of
/// `local[j]`) through a member picked round-robin, then collects one
/// acknowledgement per writer. `slotted` confines writes to the write
/// third of the rounds, for nodes that also read. Returns per-grain cloud readiness and the
/// round by which the leader holds all acknowledgements.
#[allow(clippy::too_many_arguments)]
fn write_stream(
    b: &mut ScheduleBuilder,
    t: &Topology,
    region: &Region,
    item: ItemId,
    grains: &[std::ops::Range<usize>],
    local: &[Round],
    files: &[FileId],
    slotted: bool,
) -> Result<(Vec<Round>, Round), WheelError> {
    let write_slot = slot_of(WRITE);
    let slot: cwc_core::Slot = if slotted { &write_slot } else { &any_round };
    let mut rr = RoundRobin::new(t, region);
    if rr.members.is_empty() {
        return Err(WheelError::ZeroCloudBandwidthEverywhere);
    }
    let mut ready = Vec::with_capacity(grains.len());
    let mut last = vec![None; region.len()];
    for (j, g) in grains.iter().enumerate() {
        let k = rr.next();
        let (a, n) = (g.start as u64, (g.end - g.start) as u64);
        let at = b.forward(item, a, n, &region.path_from_root(k), &Profile::ready(local[j], n), &any_round)?;
        let w = b.write(region.nodes()[k], item, a, n, files[j], &at, slot)?;
        ready.push(w.done());
        last[k] = Some(last[k].unwrap_or(0).max(w.done()));
    }
    let mut acked = ready.iter().copied().max().unwrap_or(0);
    for (k, done) in last.iter().enumerate() {
        if let (Some(done), true) = (done, k != 0) {
            acked = acked.max(b.signal(&region.path_to_root(k), *done, &any_round)?);
        }
    }
    Ok((ready, acked))
}

/// Reads grain `g` of `file` through a round-robin member and relays it to
/// the leader; returns the round by whose end the leader has it.
#[allow(clippy::too_many_arguments)]
fn read_grain(
    b: &mut ScheduleBuilder,
    region: &Region,
    rr: &mut RoundRobin,
    item: ItemId,
    file: FileId,
    g: &std::ops::Range<usize>,
    ready: Round,
    duty: u32,
) -> Result<Round, WheelError> {
    let k = rr.next();
    let (a, n) = (g.start as u64, (g.end - g.start) as u64);
    let slot = slot_of(duty);
    let got = b.read(region.nodes()[k], file, a, n, &Profile::ready(ready, n), &slot)?;
    Ok(b.forward(item, a, n, &region.path_to_root(k), &got, &any_round)?.done())
}

fn check_grain(
    t: &Topology,
    cover: &RingCover,
    regions: &[Region],
    grain: u64,
) -> Result<(), WheelError> {
    let mut links: Vec<LinkId> = Vec::new();
    for p in &cover.pieces {
        links.extend(cw_hops(p.lo, p.hi).iter().map(|h| h.link));
    }
    for r in regions {
        links.extend((1..r.len()).filter_map(|k| r.down_hop(k)).map(|h| h.link));
    }
    links.sort();
    links.dedup();
    match links.into_iter().find(|&l| t.link(l).w < grain) {
        Some(link) => Err(WheelError::GrainTooWide {
            grain,
            link,
            w: t.link(link).w,
        }),
        None => Ok(()),
    }
}

/// Grain-pipelined combining for modular operators: a one-pass chain in
/// each piece, and a tree whose nodes read both children and write their own
/// value concurrently, grain by grain, under 3-way round multiplexing.
pub fn combined_write_modular(
    t: &Topology,
    op: &CombineOp,
    inputs: Option<&[Bits]>,
    opts: CombineOptions,
) -> Result<CombineRun, WheelError> {
    require_wheel(t)?;
    check_inputs(t, op, inputs)?;
    let s = op.size() as u64;
    let grains = op.grains().to_vec();
    let cover = RingCover::build(t, s)?;
    let tree = HighTree::build(cover.pieces.len());
    let regions: Vec<Region> = (0..cover.pieces.len()).map(|p| cover.region(t, p)).collect();
    if opts.strict {
        check_grain(t, &cover, &regions, op.grain_size() as u64)?;
    }
    let mut b = ScheduleBuilder::new(t, Some(op.clone()));
    let items = input_items(&mut b, op, inputs);

    let mut low = Vec::with_capacity(cover.pieces.len());
    let mut real_leaves = 0;
    for p in 0..cover.pieces.len() {
        let (v, real) = low_modular(&mut b, &cover, p, &items)?;
        real_leaves += real;
        low.push(v);
    }

    let files_for = |b: &mut ScheduleBuilder, y: usize| -> Vec<FileId> {
        if y == tree.root {
            vec![b.file(OUT); grains.len()]
        } else {
            (0..grains.len()).map(|j| b.file(&format!("y{y}.{j}"))).collect()
        }
    };

    let mut val: Vec<Stream> = vec![Stream::Unit; tree.nodes.len()];
    for y in tree.post_order() {
        let node = &tree.nodes[y];
        let region = &regions[node.piece];
        val[y] = match (node.children, node.leaf) {
            (None, Some(p)) => match &low[p] {
                Some((item, prof)) => {
                    let local: Vec<Round> = grains.iter().map(|g| prof.reaches(g.end as u64)).collect();
                    let files = files_for(&mut b, y);
                    let (ready, _) = write_stream(&mut b, t, region, *item, &grains, &local, &files, false)?;
                    Stream::Stored {
                        item: *item,
                        files,
                        ready,
                    }
                }
                None => Stream::Unit,
            },
            (Some((l, r)), _) => {
                let (lv, rv) = (val[l].clone(), val[r].clone());
                let stored = [&lv, &rv].iter().filter(|v| matches!(v, Stream::Stored { .. })).count();
                if stored == 0 {
                    Stream::Unit
                } else if stored == 1 && y != tree.root {
                    if matches!(lv, Stream::Stored { .. }) {
                        lv
                    } else {
                        rv
                    }
                } else {
                    let mut rr_left = RoundRobin::new(t, region);
                    let mut rr_right = RoundRobin::new(t, region);
                    let out = if stored == 2 {
                        b.data(format!("v{y}"), s)
                    } else {
                        match (&lv, &rv) {
                            (Stream::Stored { item, .. }, _) | (_, Stream::Stored { item, .. }) => *item,
                            _ => unreachable!(),
                        }
                    };
                    let mut local = Vec::with_capacity(grains.len());
                    for (j, g) in grains.iter().enumerate() {
                        let mut at = 0;
                        let mut operands = [Operand::Unit; 2];
                        for (side, v) in [&lv, &rv].into_iter().enumerate() {
                            if let Stream::Stored { item, files, ready } = v {
                                let (rr, duty) = if side == 0 {
                                    (&mut rr_left, READ_LEFT)
                                } else {
                                    (&mut rr_right, READ_RIGHT)
                                };
                                at = at.max(read_grain(&mut b, region, rr, *item, files[j], g, ready[j], duty)?);
                                operands[side] = Operand::Item(*item);
                            }
                        }
                        if stored == 2 {
                            b.compute(
                                at + 1,
                                Compute::Combine {
                                    node: region.root(),
                                    out,
                                    left: operands[0],
                                    right: operands[1],
                                    range: g.start as u64..g.end as u64,
                                },
                            );
                        }
                        local.push(at);
                    }
                    let files = files_for(&mut b, y);
                    let (ready, _) = write_stream(&mut b, t, region, out, &grains, &local, &files, true)?;
                    Stream::Stored {
                        item: out,
                        files,
                        ready,
                    }
                }
            }
            (None, None) => Stream::Unit,
        };
    }
    finish(t, b, cover, tree, real_leaves)
}

/// In-interval holistic tree over the clockwise nodes `lo..=hi` (no wrap),
/// every node contributing its own input. Returns the product held by `hi`
/// and the rounds taken.
pub fn combine_within_interval(
    t: &Topology,
    lo: NodeId,
    hi: NodeId,
    op: &CombineOp,
    inputs: Option<&[Bits]>,
) -> Result<(Option<Bits>, Round), WheelError> {
    require_wheel(t)?;
    check_inputs(t, op, inputs)?;
    let n = t.n();
    assert!(lo <= hi && hi < n);
    let mut cover = RingCover::build(t, op.size() as u64)?;
    cover.pieces = vec![crate::cover::Piece { lo, hi, interval: 0 }];
    cover.home = (0..n).map(|v| if (lo..=hi).contains(&v) { 0 } else { usize::MAX }).collect();
    let mut b = ScheduleBuilder::new(t, Some(op.clone()));
    let items = input_items(&mut b, op, inputs);
    let (v, _) = low_holistic(&mut b, &cover, 0, &items, 0)?;
    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    let value = match v {
        Val::Local { item, node, .. } => {
            debug_assert!(trace.holds(node, item));
            trace.value(item).cloned()
        }
        _ => None,
    };
    Ok((value, trace.rounds_elapsed))
}
