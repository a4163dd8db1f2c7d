//! Synchronous round engine: replays a schedule, checking bandwidth,
//! causality and cloud-file rules, and evaluates literal payloads.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::ops::Range;

use thiserror::Error;

use crate::bits::Bits;
use crate::ranges::RangeSet;
use crate::schedule::{Action, Compute, FileId, InitialState, ItemId, Operand, Schedule};
use crate::topology::{LinkId, NodeId, Round, Topology};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EngineError {
    #[error("round {round}: node {node} does not hold bits {range:?} of `{item}`")]
    CausalityViolation {
        round: Round,
        node: NodeId,
        item: String,
        range: Range<u64>,
    },
    #[error("round {round}: overlapping writes to file `{file}`")]
    OverlappingCloudWrite { round: Round, file: String },
    #[error("round {round}: file `{file}` is read and written in the same round")]
    ReadWriteConflict { round: Round, file: String },
    #[error("round {round}: {channel} carries {used} bits but has bandwidth {cap}")]
    BandwidthExceeded {
        round: Round,
        channel: String,
        used: u64,
        cap: u64,
    },
    #[error("round {round}: bits {range:?} of file `{file}` are not in the cloud")]
    FileMissing {
        round: Round,
        file: String,
        range: Range<u64>,
    },
    #[error("round {round}: file `{file}` already holds a different item")]
    FileItemMismatch { round: Round, file: String },
    #[error("round {round}: link {link:?} does not carry {from} -> {to}")]
    BadLink {
        round: Round,
        link: LinkId,
        from: NodeId,
        to: NodeId,
    },
    #[error("round {round}: range {range:?} exceeds `{item}`")]
    RangeOutOfBounds {
        round: Round,
        item: String,
        range: Range<u64>,
    },
    #[error("round {round}: combine needs an operator or a grain-aligned range")]
    BadCompute { round: Round },
    #[error("round {round}: `{item}` recomputed with a different value")]
    ComputeConflict { round: Round, item: String },
}

/// A transfer of a private (unmasked) item over a local link.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Leak {
    pub round: Round,
    pub link: LinkId,
    pub item: ItemId,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct RoundStats {
    pub local_bits: u64,
    pub write_bits: u64,
    pub read_bits: u64,
    pub busy_channels: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CloudFile {
    pub item: ItemId,
    pub present: RangeSet,
}

#[derive(Clone, Debug)]
pub struct RunTrace {
    pub rounds_elapsed: Round,
    pub memory: Vec<BTreeMap<ItemId, RangeSet>>,
    pub cloud: BTreeMap<FileId, CloudFile>,
    pub utilization: Vec<RoundStats>,
    pub leaks: Vec<Leak>,
    values: Vec<Option<Cell>>,
    lens: Vec<u64>,
    files: Vec<String>,
}

#[derive(Clone, Debug)]
struct Cell {
    bits: Bits,
    known: RangeSet,
}

impl RunTrace {
    pub fn holds(&self, node: NodeId, item: ItemId) -> bool {
        let len = self.lens[item.0 as usize];
        self.memory[node]
            .get(&item)
            .is_some_and(|r| r.covers(len))
    }

    /// Literal value of a fully evaluated item.
    pub fn value(&self, item: ItemId) -> Option<&Bits> {
        let len = self.lens[item.0 as usize];
        self.values[item.0 as usize]
            .as_ref()
            .filter(|c| c.known.covers(len))
            .map(|c| &c.bits)
    }

    pub fn file(&self, name: &str) -> Option<&CloudFile> {
        let k = self.files.iter().position(|f| f == name)?;
        self.cloud.get(&FileId(k as u32))
    }

    pub fn file_complete(&self, name: &str) -> bool {
        self.file(name)
            .is_some_and(|f| f.present.covers(self.lens[f.item.0 as usize]))
    }

    /// Literal contents of a complete file.
    pub fn file_value(&self, name: &str) -> Option<&Bits> {
        let f = self.file(name)?;
        if !f.present.covers(self.lens[f.item.0 as usize]) {
            return None;
        }
        self.value(f.item)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, Hash)]
enum Channel {
    Local(LinkId, bool),
    Up(NodeId),
    Down(NodeId),
}

impl Channel {
    fn describe(self, topo: &Topology) -> (String, u64) {
        match self {
            Channel::Local(l, fwd) => {
                let link = topo.link(l);
                let (a, b) = if fwd { (link.u, link.v) } else { (link.v, link.u) };
                (format!("link {a}->{b}"), link.w)
            }
            Channel::Up(i) => (format!("cloud write of node {i}"), topo.cloud_bw(i)),
            Channel::Down(i) => (format!("cloud read of node {i}"), topo.cloud_bw(i)),
        }
    }
}

struct State<'a> {
    sched: &'a Schedule,
    memory: Vec<HashMap<ItemId, RangeSet>>,
    cloud: BTreeMap<FileId, CloudFile>,
    values: Vec<Option<Cell>>,
    tainted: Vec<bool>,
}

impl State<'_> {
    fn name(&self, item: ItemId) -> String {
        self.sched.decl(item).name.clone()
    }

    fn len(&self, item: ItemId) -> u64 {
        self.sched.decl(item).len
    }

    fn check_range(&self, round: Round, item: ItemId, r: &Range<u64>) -> Result<(), EngineError> {
        if r.start > r.end || r.end > self.len(item) {
            return Err(EngineError::RangeOutOfBounds {
                round,
                item: self.name(item),
                range: r.clone(),
            });
        }
        Ok(())
    }

    fn require(
        &self,
        round: Round,
        node: NodeId,
        item: ItemId,
        r: &Range<u64>,
    ) -> Result<(), EngineError> {
        self.check_range(round, item, r)?;
        let held = self.memory[node].get(&item).is_some_and(|s| s.contains(r));
        if held {
            Ok(())
        } else {
            Err(EngineError::CausalityViolation {
                round,
                node,
                item: self.name(item),
                range: r.clone(),
            })
        }
    }

    fn grant(&mut self, node: NodeId, item: ItemId, r: Range<u64>) {
        self.memory[node].entry(item).or_default().insert(r);
    }

    fn literal(&self, item: ItemId, r: &Range<u64>) -> Option<Bits> {
        let c = self.values[item.0 as usize].as_ref()?;
        c.known
            .contains(r)
            .then(|| c.bits.slice(r.start as usize..r.end as usize))
    }

    fn store(&mut self, round: Round, item: ItemId, r: Range<u64>, v: Bits) -> Result<(), EngineError> {
        let len = self.len(item) as usize;
        let cell = self.values[item.0 as usize].get_or_insert_with(|| Cell {
            bits: Bits::zeros(len),
            known: RangeSet::new(),
        });
        if cell.known.overlaps(&r) {
            let old = cell.bits.slice(r.start as usize..r.end as usize);
            if !cell.known.contains(&r) || old != v {
                return Err(EngineError::ComputeConflict {
                    round,
                    item: self.sched.decl(item).name.clone(),
                });
            }
            return Ok(());
        }
        cell.bits.splice(r.start as usize, &v);
        cell.known.insert(r);
        Ok(())
    }

    fn compute(&mut self, round: Round, c: &Compute) -> Result<(), EngineError> {
        match c {
            Compute::Combine {
                node,
                out,
                left,
                right,
                range,
            } => {
                let op = self
                    .sched
                    .op
                    .as_ref()
                    .ok_or(EngineError::BadCompute { round })?;
                let ur = range.start as usize..range.end as usize;
                if !op.is_aligned(&ur) || self.len(*out) != op.size() as u64 {
                    return Err(EngineError::BadCompute { round });
                }
                self.check_range(round, *out, range)?;
                let mut operands = Vec::with_capacity(2);
                let mut taint = false;
                for o in [left, right] {
                    match o {
                        Operand::Unit => operands.push(Some(op.unit())),
                        Operand::Item(it) => {
                            self.require(round, *node, *it, range)?;
                            taint |= self.tainted[it.0 as usize];
                            // Widen the literal to full size so the operator sees
                            // aligned operands; only `range` is meaningful.
                            operands.push(self.literal(*it, range).map(|part| {
                                let mut full = op.unit();
                                full.splice(ur.start, &part);
                                full
                            }));
                        }
                    }
                }
                if let (Some(a), Some(b)) = (&operands[0], &operands[1]) {
                    let v = op.apply_range(a, b, ur);
                    self.store(round, *out, range.clone(), v)?;
                }
                self.tainted[out.0 as usize] |= taint;
                self.grant(*node, *out, range.clone());
            }
            Compute::Mask {
                node,
                out,
                input,
                own,
                prev,
                lane_bits,
                modulus,
            } => {
                let full = 0..self.len(*input);
                for it in [input, own, prev] {
                    self.require(round, *node, *it, &full)?;
                }
                self.check_range(round, *out, &full)?;
                let vals: Option<Vec<Bits>> = [input, own, prev]
                    .iter()
                    .map(|it| self.literal(**it, &full))
                    .collect();
                if let Some(v) = vals {
                    let w = *lane_bits as usize;
                    let lanes: Vec<u64> = (0..v[0].len() / w)
                        .map(|k| {
                            let (x, z, p) = (v[0].field(k * w, w), v[1].field(k * w, w), v[2].field(k * w, w));
                            (x + (modulus - z % modulus) + p) % modulus
                        })
                        .collect();
                    self.store(round, *out, full.clone(), Bits::from_fields(w, &lanes))?;
                }
                self.grant(*node, *out, full);
            }
        }
        Ok(())
    }
}

/// Executes `sched` on `topo` from `init`.
pub fn run_schedule(
    topo: &Topology,
    sched: &Schedule,
    init: &InitialState,
) -> Result<RunTrace, EngineError> {
    let mut st = State {
        sched,
        memory: vec![HashMap::new(); topo.n()],
        cloud: BTreeMap::new(),
        values: vec![None; sched.items.len()],
        tainted: vec![false; sched.items.len()],
    };
    for &(node, item) in &init.holdings {
        let len = st.len(item);
        st.grant(node, item, 0..len);
    }
    for &(file, item) in &init.files {
        let len = st.len(item);
        st.cloud.insert(
            file,
            CloudFile {
                item,
                present: RangeSet::full(len),
            },
        );
    }
    for (item, v) in &init.values {
        st.values[item.0 as usize] = Some(Cell {
            bits: v.clone(),
            known: RangeSet::full(v.len() as u64),
        });
    }
    for item in &init.private {
        st.tainted[item.0 as usize] = true;
    }

    let mut utilization = Vec::with_capacity(sched.rounds.len());
    let mut leaks = Vec::new();
    let file_name = |f: FileId| sched.files[f.0 as usize].clone();

    for (k, plan) in sched.rounds.iter().enumerate() {
        let round = k as Round + 1;
        for c in &plan.computes {
            st.compute(round, c)?;
        }

        let mut usage: HashMap<Channel, u64> = HashMap::new();
        let mut written: HashMap<FileId, RangeSet> = HashMap::new();
        let mut read_files: HashSet<FileId> = HashSet::new();
        let mut stats = RoundStats::default();
        let mut deliveries: Vec<(NodeId, ItemId, Range<u64>)> = Vec::new();
        let mut file_updates: Vec<(FileId, ItemId, Range<u64>)> = Vec::new();

        for a in &plan.actions {
            match a {
                Action::Send {
                    link,
                    from,
                    to,
                    item,
                    range,
                } => {
                    if !topo.allows(*link, *from, *to) {
                        return Err(EngineError::BadLink {
                            round,
                            link: *link,
                            from: *from,
                            to: *to,
                        });
                    }
                    st.require(round, *from, *item, range)?;
                    let fwd = topo.link(*link).u == *from;
                    *usage.entry(Channel::Local(*link, fwd)).or_default() += range.end - range.start;
                    stats.local_bits += range.end - range.start;
                    if st.tainted[item.0 as usize] {
                        leaks.push(Leak {
                            round,
                            link: *link,
                            item: *item,
                        });
                    }
                    deliveries.push((*to, *item, range.clone()));
                }
                Action::Write {
                    node,
                    file,
                    item,
                    range,
                } => {
                    st.require(round, *node, *item, range)?;
                    if st.cloud.get(file).is_some_and(|f| f.item != *item)
                        || file_updates.iter().any(|(f, it, _)| f == file && it != item)
                    {
                        return Err(EngineError::FileItemMismatch {
                            round,
                            file: file_name(*file),
                        });
                    }
                    let w = written.entry(*file).or_default();
                    if w.overlaps(range) {
                        return Err(EngineError::OverlappingCloudWrite {
                            round,
                            file: file_name(*file),
                        });
                    }
                    w.insert(range.clone());
                    *usage.entry(Channel::Up(*node)).or_default() += range.end - range.start;
                    stats.write_bits += range.end - range.start;
                    file_updates.push((*file, *item, range.clone()));
                }
                Action::Read { node, file, range } => {
                    let f = st.cloud.get(file).filter(|f| f.present.contains(range));
                    let Some(f) = f else {
                        return Err(EngineError::FileMissing {
                            round,
                            file: file_name(*file),
                            range: range.clone(),
                        });
                    };
                    read_files.insert(*file);
                    *usage.entry(Channel::Down(*node)).or_default() += range.end - range.start;
                    stats.read_bits += range.end - range.start;
                    deliveries.push((*node, f.item, range.clone()));
                }
            }
        }

        if let Some(f) = read_files.iter().find(|f| written.contains_key(f)) {
            return Err(EngineError::ReadWriteConflict {
                round,
                file: file_name(*f),
            });
        }
        let mut channels: Vec<_> = usage.iter().collect();
        channels.sort_by_key(|(c, _)| match **c {
            Channel::Local(l, d) => (0, l.0 as usize, d as usize),
            Channel::Up(i) => (1, i, 0),
            Channel::Down(i) => (2, i, 0),
        });
        for (ch, &used) in channels {
            let (name, cap) = ch.describe(topo);
            if used > cap {
                return Err(EngineError::BandwidthExceeded {
                    round,
                    channel: name,
                    used,
                    cap,
                });
            }
        }
        stats.busy_channels = usage.len() as u32;
        utilization.push(stats);

        for (node, item, r) in deliveries {
            st.grant(node, item, r);
        }
        for (file, item, r) in file_updates {
            st.cloud
                .entry(file)
                .or_insert_with(|| CloudFile {
                    item,
                    present: RangeSet::new(),
                })
                .present
                .insert(r);
        }
    }

    let rounds_elapsed = sched.horizon();
    utilization.truncate(rounds_elapsed as usize);
    Ok(RunTrace {
        rounds_elapsed,
        memory: st
            .memory
            .into_iter()
            .map(|m| m.into_iter().collect())
            .collect(),
        cloud: st.cloud,
        utilization,
        leaks,
        values: st.values,
        lens: sched.items.iter().map(|d| d.len).collect(),
        files: sched.files.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::ItemKind;

    fn two_nodes() -> Topology {
        Topology::wheel(&[3, 3], &[2, 2])
    }

    #[test]
    fn empty_schedule_changes_nothing() {
        let t = two_nodes();
        let mut s = Schedule::new(None);
        let x = s.item("x", 4, ItemKind::Data);
        let init = InitialState {
            holdings: vec![(0, x)],
            ..Default::default()
        };
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert_eq!(tr.rounds_elapsed, 0);
        assert!(tr.holds(0, x));
        assert!(!tr.holds(1, x));
        assert!(tr.cloud.is_empty());
    }

    #[test]
    fn one_round_write_fills_the_file() {
        let t = two_nodes();
        let mut s = Schedule::new(None);
        let x = s.item("x", 3, ItemKind::Data);
        let f = s.file("f");
        s.push_action(1, Action::Write { node: 0, file: f, item: x, range: 0..3 });
        let v = Bits::from_fields(1, &[1, 0, 1]);
        let init = InitialState {
            holdings: vec![(0, x)],
            values: vec![(x, v.clone())],
            ..Default::default()
        };
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert_eq!(tr.rounds_elapsed, 1);
        assert_eq!(tr.file_value("f"), Some(&v));
    }

    #[test]
    fn overlapping_writes_are_rejected() {
        let t = Topology::wheel(&[8, 8], &[2, 2]);
        let mut s = Schedule::new(None);
        let x = s.item("x", 4, ItemKind::Data);
        let f = s.file("f");
        for node in 0..2 {
            s.push_action(1, Action::Write { node, file: f, item: x, range: 0..4 });
        }
        let init = InitialState {
            holdings: vec![(0, x), (1, x)],
            ..Default::default()
        };
        assert!(matches!(
            run_schedule(&t, &s, &init),
            Err(EngineError::OverlappingCloudWrite { round: 1, .. })
        ));
    }

    #[test]
    fn sending_unheld_bits_is_rejected() {
        let t = two_nodes();
        let mut s = Schedule::new(None);
        let x = s.item("x", 4, ItemKind::Data);
        s.push_action(1, Action::Send { link: LinkId(0), from: 0, to: 1, item: x, range: 0..2 });
        s.push_action(1, Action::Send { link: LinkId(0), from: 1, to: 0, item: x, range: 0..2 });
        let init = InitialState {
            holdings: vec![(0, x)],
            ..Default::default()
        };
        assert!(matches!(
            run_schedule(&t, &s, &init),
            Err(EngineError::CausalityViolation { node: 1, .. })
        ));
    }

    #[test]
    fn bandwidth_is_enforced_per_direction() {
        let t = two_nodes();
        let mut s = Schedule::new(None);
        let x = s.item("x", 4, ItemKind::Data);
        s.push_action(1, Action::Send { link: LinkId(0), from: 0, to: 1, item: x, range: 0..2 });
        s.push_action(1, Action::Send { link: LinkId(0), from: 1, to: 0, item: x, range: 2..4 });
        let init = InitialState {
            holdings: vec![(0, x), (1, x)],
            ..Default::default()
        };
        assert!(run_schedule(&t, &s, &init).is_ok());
        s.push_action(1, Action::Send { link: LinkId(0), from: 0, to: 1, item: x, range: 2..3 });
        assert!(matches!(
            run_schedule(&t, &s, &init),
            Err(EngineError::BandwidthExceeded { used: 3, cap: 2, .. })
        ));
    }

    #[test]
    fn read_and_write_of_one_file_in_a_round_conflict() {
        let t = two_nodes();
        let mut s = Schedule::new(None);
        let x = s.item("x", 4, ItemKind::Data);
        let f = s.file("f");
        s.push_action(1, Action::Write { node: 0, file: f, item: x, range: 0..2 });
        s.push_action(2, Action::Write { node: 0, file: f, item: x, range: 2..4 });
        s.push_action(2, Action::Read { node: 1, file: f, range: 0..2 });
        let init = InitialState {
            holdings: vec![(0, x)],
            ..Default::default()
        };
        assert!(matches!(
            run_schedule(&t, &s, &init),
            Err(EngineError::ReadWriteConflict { round: 2, .. })
        ));
    }

    #[test]
    fn reads_need_the_bits_in_the_cloud() {
        let t = two_nodes();
        let mut s = Schedule::new(None);
        let x = s.item("x", 4, ItemKind::Data);
        let f = s.file("f");
        s.push_action(1, Action::Write { node: 0, file: f, item: x, range: 0..2 });
        s.push_action(2, Action::Read { node: 1, file: f, range: 0..3 });
        let init = InitialState {
            holdings: vec![(0, x)],
            ..Default::default()
        };
        assert!(matches!(
            run_schedule(&t, &s, &init),
            Err(EngineError::FileMissing { round: 2, .. })
        ));
    }
}
