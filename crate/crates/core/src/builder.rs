//! Greedy schedule construction with per-channel, per-round bandwidth
//! bookkeeping. Transfers are planned against cumulative availability
//! profiles so that pipelined stages compose.

use std::collections::{HashMap, HashSet};
use std::ops::Range;

use thiserror::Error;

use crate::bits::Bits;
use crate::op::CombineOp;
use crate::schedule::{Action, Compute, FileId, InitialState, ItemId, ItemKind, Operand, Schedule};
use crate::topology::{Hop, NodeId, Round, Topology};

/// Rounds a transfer may sit idle after its input is complete before the
/// builder gives up.
const STALL_LIMIT: Round = 1_000_000;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum BuildError {
    #[error("{what} has no bandwidth")]
    NoCapacity { what: String },
    #[error("transfer of `{item}` made no progress by round {round}")]
    Stalled { item: String, round: Round },
}

/// Restricts the rounds in which a node may start a transfer.
pub type Slot<'a> = &'a dyn Fn(NodeId, Round) -> bool;

pub fn any_round(_: NodeId, _: Round) -> bool {
    true
}

/// Cumulative number of bits (a prefix of some range) available at a node by
/// the end of each round, as a step function. Bits available by the end of
/// round `r` may be sent in round `r + 1`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Profile {
    steps: Vec<(Round, u64)>,
}

impl Profile {
    /// All `len` bits available by the end of round `at`.
    pub fn ready(at: Round, len: u64) -> Self {
        Profile {
            steps: vec![(at, len)],
        }
    }

    fn push(&mut self, r: Round, v: u64) {
        match self.steps.last_mut() {
            Some(last) if last.0 == r => last.1 = v,
            Some(last) if last.1 >= v => {}
            _ => self.steps.push((r, v)),
        }
    }

    pub fn at(&self, r: Round) -> u64 {
        let k = self.steps.partition_point(|&(t, _)| t <= r);
        if k == 0 {
            0
        } else {
            self.steps[k - 1].1
        }
    }

    pub fn total(&self) -> u64 {
        self.steps.last().map_or(0, |s| s.1)
    }

    /// Round by whose end every bit is available.
    pub fn done(&self) -> Round {
        self.steps.last().map_or(0, |s| s.0)
    }

    /// First round whose end sees at least `v` bits.
    pub fn reaches(&self, v: u64) -> Round {
        self.steps
            .iter()
            .find(|s| s.1 >= v)
            .map_or(self.done(), |s| s.0)
    }

    pub fn steps(&self) -> &[(Round, u64)] {
        &self.steps
    }

    /// The sub-profile of bits `off..off + len` of the prefix.
    pub fn window(&self, off: u64, len: u64) -> Profile {
        let mut p = Profile::default();
        for &(r, v) in &self.steps {
            let w = v.saturating_sub(off).min(len);
            if w > 0 || (len == 0 && v >= off) {
                p.push(r, w);
            }
        }
        p
    }

    /// Pointwise minimum: bits available in both prefixes.
    pub fn min(&self, other: &Profile) -> Profile {
        let mut rounds: Vec<Round> = self
            .steps
            .iter()
            .chain(&other.steps)
            .map(|s| s.0)
            .collect();
        rounds.sort_unstable();
        rounds.dedup();
        let mut p = Profile::default();
        for r in rounds {
            let v = self.at(r).min(other.at(r));
            if v > 0 {
                p.push(r, v);
            }
        }
        p
    }

    /// Availability delayed to no earlier than the end of round `r`.
    pub fn not_before(&self, r: Round) -> Profile {
        let mut p = Profile::default();
        for &(t, v) in &self.steps {
            p.push(t.max(r), v);
        }
        p
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Chan {
    Local(usize),
    Up(NodeId),
    Down(NodeId),
}

pub struct ScheduleBuilder<'t> {
    topo: &'t Topology,
    sched: Schedule,
    init: InitialState,
    usage: Vec<Vec<u64>>,
    writes: HashMap<FileId, HashSet<Round>>,
    reads: HashMap<FileId, HashSet<Round>>,
    files: HashMap<String, FileId>,
}

impl<'t> ScheduleBuilder<'t> {
    pub fn new(topo: &'t Topology, op: Option<CombineOp>) -> Self {
        let channels = 2 * topo.links().len() + 2 * topo.n();
        ScheduleBuilder {
            topo,
            sched: Schedule::new(op),
            init: InitialState::default(),
            usage: vec![Vec::new(); channels],
            writes: HashMap::new(),
            reads: HashMap::new(),
            files: HashMap::new(),
        }
    }

    pub fn topo(&self) -> &'t Topology {
        self.topo
    }

    pub fn op(&self) -> Option<&CombineOp> {
        self.sched.op.as_ref()
    }

    pub fn item(&mut self, name: impl Into<String>, len: u64, kind: ItemKind) -> ItemId {
        self.sched.item(name, len, kind)
    }

    pub fn data(&mut self, name: impl Into<String>, len: u64) -> ItemId {
        self.item(name, len, ItemKind::Data)
    }

    pub fn item_len(&self, item: ItemId) -> u64 {
        self.sched.decl(item).len
    }

    pub fn file(&mut self, name: &str) -> FileId {
        if let Some(&f) = self.files.get(name) {
            return f;
        }
        self.sched.files.push(name.to_string());
        let f = FileId(self.sched.files.len() as u32 - 1);
        self.files.insert(name.to_string(), f);
        f
    }

    pub fn hold(&mut self, node: NodeId, item: ItemId) {
        self.init.holdings.push((node, item));
    }

    pub fn set_value(&mut self, item: ItemId, v: Bits) {
        self.init.values.push((item, v));
    }

    pub fn mark_private(&mut self, item: ItemId) {
        self.init.private.push(item);
    }

    pub fn preload(&mut self, file: FileId, item: ItemId) {
        self.init.files.push((file, item));
    }

    pub fn compute(&mut self, t: Round, c: Compute) {
        self.sched.push_compute(t, c);
    }

    /// Last round with a transfer so far.
    pub fn horizon(&self) -> Round {
        self.sched.horizon()
    }

    pub fn finish(self) -> (Schedule, InitialState) {
        (self.sched, self.init)
    }

    fn chan_index(&self, c: Chan) -> usize {
        let nl = self.topo.links().len();
        match c {
            Chan::Local(k) => k,
            Chan::Up(v) => 2 * nl + v,
            Chan::Down(v) => 2 * nl + self.topo.n() + v,
        }
    }

    fn hop_chan(&self, hop: &Hop) -> Chan {
        let l = self.topo.link(hop.link);
        Chan::Local(2 * hop.link.index() + usize::from(l.u != hop.from))
    }

    fn cap(&self, c: Chan) -> u64 {
        match c {
            Chan::Local(k) => self.topo.links()[k / 2].w,
            Chan::Up(v) | Chan::Down(v) => self.topo.cloud_bw(v),
        }
    }

    fn free(&self, c: Chan, t: Round) -> u64 {
        let used = self.usage[self.chan_index(c)]
            .get(t as usize)
            .copied()
            .unwrap_or(0);
        self.cap(c) - used
    }

    fn consume(&mut self, c: Chan, t: Round, bits: u64) {
        let k = self.chan_index(c);
        let u = &mut self.usage[k];
        if u.len() <= t as usize {
            u.resize(t as usize + 1, 0);
        }
        u[t as usize] += bits;
    }

    fn describe(&self, c: Chan) -> String {
        match c {
            Chan::Local(k) => {
                let l = &self.topo.links()[k / 2];
                format!("link {}-{}", l.u, l.v)
            }
            Chan::Up(v) => format!("cloud write of node {v}"),
            Chan::Down(v) => format!("cloud read of node {v}"),
        }
    }

    /// Greedy prefix-order transfer of `len` bits over one channel. `emit`
    /// records the action for bits `lo..hi` (relative) in round `t`.
    #[allow(clippy::too_many_arguments)]
    fn transfer(
        &mut self,
        chan: Chan,
        sender: NodeId,
        item_name: impl Fn(&Self) -> String,
        len: u64,
        input: &Profile,
        slot: Slot,
        blocked: impl Fn(&Self, Round) -> bool,
        mut emit: impl FnMut(&mut Self, Round, Range<u64>),
    ) -> Result<Profile, BuildError> {
        if len == 0 {
            return Ok(Profile::ready(input.reaches(0), 0));
        }
        assert!(
            input.total() >= len,
            "input profile provides {} of {len} bits",
            input.total()
        );
        if self.cap(chan) == 0 {
            return Err(BuildError::NoCapacity {
                what: self.describe(chan),
            });
        }
        let mut out = Profile::default();
        let mut sent = 0;
        let mut t = input.reaches(1) + 1;
        let limit = input.done() + STALL_LIMIT;
        while sent < len {
            if t > limit {
                return Err(BuildError::Stalled {
                    item: item_name(self),
                    round: t,
                });
            }
            let avail = input.at(t - 1).min(len);
            if avail > sent && slot(sender, t) && !blocked(self, t) {
                let x = (avail - sent).min(self.free(chan, t));
                if x > 0 {
                    self.consume(chan, t, x);
                    emit(self, t, sent..sent + x);
                    sent += x;
                    out.push(t, sent);
                }
            }
            t += 1;
        }
        Ok(out)
    }

    /// Sends bits `base..base + len` of `item` over one hop, in prefix order.
    /// `input` is the sender's availability of that window.
    pub fn forward_hop(
        &mut self,
        item: ItemId,
        base: u64,
        len: u64,
        hop: Hop,
        input: &Profile,
        slot: Slot,
    ) -> Result<Profile, BuildError> {
        let chan = self.hop_chan(&hop);
        self.transfer(
            chan,
            hop.from,
            |b| b.sched.decl(item).name.clone(),
            len,
            input,
            slot,
            |_, _| false,
            |b, t, r| {
                b.sched.push_action(
                    t,
                    Action::Send {
                        link: hop.link,
                        from: hop.from,
                        to: hop.to,
                        item,
                        range: base + r.start..base + r.end,
                    },
                )
            },
        )
    }

    /// Pipelines a window along a path of hops; returns the availability at
    /// the last node.
    pub fn forward(
        &mut self,
        item: ItemId,
        base: u64,
        len: u64,
        hops: &[Hop],
        input: &Profile,
        slot: Slot,
    ) -> Result<Profile, BuildError> {
        let mut p = input.clone();
        for &h in hops {
            p = self.forward_hop(item, base, len, h, &p, slot)?;
        }
        Ok(p)
    }

    /// Writes bits `base..base + len` of `item` from `node` to the same
    /// offsets of `file`. Returns the cloud-side availability of the window.
    #[allow(clippy::too_many_arguments)]
    pub fn write(
        &mut self,
        node: NodeId,
        item: ItemId,
        base: u64,
        len: u64,
        file: FileId,
        input: &Profile,
        slot: Slot,
    ) -> Result<Profile, BuildError> {
        let p = self.transfer(
            Chan::Up(node),
            node,
            |b| b.sched.decl(item).name.clone(),
            len,
            input,
            slot,
            |b, t| b.reads.get(&file).is_some_and(|s| s.contains(&t)),
            |b, t, r| {
                b.writes.entry(file).or_default().insert(t);
                b.sched.push_action(
                    t,
                    Action::Write {
                        node,
                        file,
                        item,
                        range: base + r.start..base + r.end,
                    },
                )
            },
        )?;
        Ok(p)
    }

    /// Reads bits `base..base + len` of `file` into `node`; `avail` is the
    /// cloud-side availability of that window.
    pub fn read(
        &mut self,
        node: NodeId,
        file: FileId,
        base: u64,
        len: u64,
        avail: &Profile,
        slot: Slot,
    ) -> Result<Profile, BuildError> {
        self.transfer(
            Chan::Down(node),
            node,
            |b| b.sched.files[file.0 as usize].clone(),
            len,
            avail,
            slot,
            |b, t| b.writes.get(&file).is_some_and(|s| s.contains(&t)),
            |b, t, r| {
                b.reads.entry(file).or_default().insert(t);
                b.sched.push_action(
                    t,
                    Action::Read {
                        node,
                        file,
                        range: base + r.start..base + r.end,
                    },
                )
            },
        )
    }

    /// A one-bit control message along `hops`, leaving no earlier than round
    /// `ready + 1`. Returns the round by whose end it has arrived.
    pub fn signal(&mut self, hops: &[Hop], ready: Round, slot: Slot) -> Result<Round, BuildError> {
        let Some(first) = hops.first() else {
            return Ok(ready);
        };
        let name = format!("sig{}", self.sched.items.len());
        let item = self.item(name, 1, ItemKind::Control);
        self.hold(first.from, item);
        let p = self.forward(item, 0, 1, hops, &Profile::ready(ready, 1), slot)?;
        Ok(p.done())
    }

    /// Combines two prefix-streamed operands grain by grain at `node`. Each
    /// grain is computed at the start of the round after both operands have
    /// it, so the output streams with the same granularity.
    pub fn combine_stream(
        &mut self,
        node: NodeId,
        out: ItemId,
        left: (Operand, &Profile),
        right: (Operand, &Profile),
    ) -> Profile {
        let op = self.sched.op.clone().expect("combining needs an operator");
        let size = op.size() as u64;
        let full = Profile::ready(0, size);
        let lp = if left.0 == Operand::Unit { &full } else { left.1 };
        let rp = if right.0 == Operand::Unit { &full } else { right.1 };
        let both = lp.min(rp);
        let mut out_p = Profile::default();
        let mut done = 0u64;
        let grains = op.grains().to_vec();
        let mut g = 0;
        for &(r, v) in both.steps() {
            let start = done;
            while g < grains.len() && grains[g].end as u64 <= v {
                done = grains[g].end as u64;
                g += 1;
            }
            if done > start {
                self.compute(
                    r + 1,
                    Compute::Combine {
                        node,
                        out,
                        left: left.0,
                        right: right.0,
                        range: start..done,
                    },
                );
                out_p.push(r, done);
            }
        }
        out_p
    }

    /// Schedules a single send in round `t`, failing if the link is full.
    pub fn send_at(
        &mut self,
        t: Round,
        hop: Hop,
        item: ItemId,
        range: Range<u64>,
    ) -> Result<(), BuildError> {
        let chan = self.hop_chan(&hop);
        self.reserve(chan, t, range.end - range.start)?;
        self.sched.push_action(
            t,
            Action::Send {
                link: hop.link,
                from: hop.from,
                to: hop.to,
                item,
                range,
            },
        );
        Ok(())
    }

    pub fn write_at(
        &mut self,
        t: Round,
        node: NodeId,
        item: ItemId,
        file: FileId,
        range: Range<u64>,
    ) -> Result<(), BuildError> {
        self.reserve(Chan::Up(node), t, range.end - range.start)?;
        self.writes.entry(file).or_default().insert(t);
        self.sched.push_action(
            t,
            Action::Write {
                node,
                file,
                item,
                range,
            },
        );
        Ok(())
    }

    pub fn read_at(
        &mut self,
        t: Round,
        node: NodeId,
        file: FileId,
        range: Range<u64>,
    ) -> Result<(), BuildError> {
        self.reserve(Chan::Down(node), t, range.end - range.start)?;
        self.reads.entry(file).or_default().insert(t);
        self.sched.push_action(t, Action::Read { node, file, range });
        Ok(())
    }

    fn reserve(&mut self, chan: Chan, t: Round, bits: u64) -> Result<(), BuildError> {
        if self.free(chan, t) < bits {
            return Err(BuildError::NoCapacity {
                what: format!("{} in round {t}", self.describe(chan)),
            });
        }
        self.consume(chan, t, bits);
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::run_schedule;

    fn path(n: usize, w: u64, bc: &[u64]) -> Topology {
        let edges: Vec<_> = (0..n - 1).map(|i| (i, i + 1, w)).collect();
        Topology::general(bc, &edges, false).unwrap()
    }

    fn hop(t: &Topology, from: NodeId, to: NodeId) -> Hop {
        *t.out_hops(from).iter().find(|h| h.to == to).unwrap()
    }

    #[test]
    fn profile_queries() {
        let mut p = Profile::default();
        p.push(2, 3);
        p.push(4, 7);
        assert_eq!((p.at(1), p.at(2), p.at(3), p.at(9)), (0, 3, 3, 7));
        assert_eq!(p.reaches(4), 4);
        assert_eq!(p.window(2, 3).steps(), &[(2, 1), (4, 3)]);
        assert_eq!(p.min(&Profile::ready(3, 5)).steps(), &[(3, 3), (4, 5)]);
    }

    #[test]
    fn pipelined_forward_costs_hops_plus_chunks() {
        let t = path(4, 2, &[0, 0, 0, 0]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 8);
        b.hold(0, x);
        let hops = [hop(&t, 0, 1), hop(&t, 1, 2), hop(&t, 2, 3)];
        let p = b.forward(x, 0, 8, &hops, &Profile::ready(0, 8), &any_round).unwrap();
        // 3 hops, 4 chunks of 2 bits.
        assert_eq!(p.done(), 3 + 4 - 1);
        let (s, init) = b.finish();
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert!(tr.holds(3, x));
        assert_eq!(tr.rounds_elapsed, 6);
    }

    #[test]
    fn write_then_read_round_trips() {
        let t = path(2, 4, &[3, 2]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 7);
        b.hold(0, x);
        let f = b.file("f");
        let w = b.write(0, x, 0, 7, f, &Profile::ready(0, 7), &any_round).unwrap();
        assert_eq!(w.done(), 3);
        let r = b.read(1, f, 0, 7, &w, &any_round).unwrap();
        // Reads never share a round with writes of the same file.
        assert_eq!(r.done(), 7);
        let (s, init) = b.finish();
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert!(tr.holds(1, x));
    }

    #[test]
    fn zero_bandwidth_is_reported() {
        let t = path(2, 4, &[0, 2]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 3);
        let f = b.file("f");
        assert!(matches!(
            b.write(0, x, 0, 3, f, &Profile::ready(0, 3), &any_round),
            Err(BuildError::NoCapacity { .. })
        ));
    }

    #[test]
    fn slots_restrict_sending_rounds() {
        let t = path(2, 1, &[0, 0]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 2);
        b.hold(0, x);
        let even = |_: NodeId, r: Round| r % 2 == 0;
        let p = b
            .forward_hop(x, 0, 2, hop(&t, 0, 1), &Profile::ready(0, 2), &even)
            .unwrap();
        assert_eq!(p.steps(), &[(2, 1), (4, 2)]);
    }

    #[test]
    fn combine_stream_follows_grains() {
        let t = path(2, 4, &[0, 0]);
        let op = CombineOp::xor(8).unwrap().with_grain(4).unwrap();
        let mut b = ScheduleBuilder::new(&t, Some(op));
        let (a, c, out) = (b.data("a", 8), b.data("c", 8), b.data("o", 8));
        b.hold(0, a);
        b.hold(0, c);
        b.set_value(a, Bits::from_fields(8, &[0b1010_0101]));
        b.set_value(c, Bits::from_fields(8, &[0b1111_0000]));
        let pa = b
            .forward_hop(a, 0, 8, hop(&t, 0, 1), &Profile::ready(0, 8), &any_round)
            .unwrap();
        b.hold(1, c);
        let o = b.combine_stream(1, out, (Operand::Item(a), &pa), (Operand::Item(c), &Profile::ready(0, 8)));
        assert_eq!(o.steps(), &[(1, 4), (2, 8)]);
        let (s, init) = b.finish();
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert_eq!(tr.value(out), Some(&Bits::from_fields(8, &[0b0101_0101])));
    }

    #[test]
    fn raw_sends_respect_capacity() {
        let t = path(2, 2, &[1, 1]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 4);
        b.send_at(1, hop(&t, 0, 1), x, 0..2).unwrap();
        assert!(b.send_at(1, hop(&t, 0, 1), x, 2..3).is_err());
        b.send_at(1, hop(&t, 1, 0), x, 2..4).unwrap();
    }
}
