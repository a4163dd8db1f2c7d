//! Rooted trees of nodes and the cloud primitives that run inside them:
//! proportional-slice writes with acknowledgements, started reads, and
//! pipelined tree broadcast.

use std::collections::HashMap;
use std::ops::Range;

use crate::builder::{BuildError, Profile, ScheduleBuilder, Slot};
use crate::schedule::{FileId, ItemId};
use crate::topology::{Hop, NodeId, Round, Topology};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Region {
    nodes: Vec<NodeId>,
    /// Per member: parent index and the hop parent -> member.
    parent: Vec<Option<(usize, Hop)>>,
    depth: Vec<u32>,
    index: HashMap<NodeId, usize>,
}

impl Region {
    pub fn single(root: NodeId) -> Self {
        Region {
            nodes: vec![root],
            parent: vec![None],
            depth: vec![0],
            index: HashMap::from([(root, 0)]),
        }
    }

    /// Attaches `child` below the member `from` of `hop`.
    pub fn attach(&mut self, hop: Hop) {
        let p = self.index[&hop.from];
        assert!(!self.index.contains_key(&hop.to), "node {} already in region", hop.to);
        self.index.insert(hop.to, self.nodes.len());
        self.nodes.push(hop.to);
        self.parent.push(Some((p, hop)));
        self.depth.push(self.depth[p] + 1);
    }

    /// A chain `root -> ...` following `hops`.
    pub fn path(root: NodeId, hops: &[Hop]) -> Self {
        let mut r = Region::single(root);
        for &h in hops {
            r.attach(h);
        }
        r
    }

    /// Breadth-first tree of `members` (which must contain `root`) over links
    /// with positive bandwidth, levels ordered by node id. Members that cannot
    /// be reached inside the set are left out.
    pub fn bfs(topo: &Topology, root: NodeId, members: &[NodeId]) -> Self {
        let mut inside = vec![false; topo.n()];
        for &v in members {
            inside[v] = true;
        }
        let mut r = Region::single(root);
        let mut level = vec![root];
        while !level.is_empty() {
            let mut next: Vec<Hop> = Vec::new();
            for &u in &level {
                for h in topo.out_hops(u) {
                    if inside[h.to]
                        && topo.link(h.link).w > 0
                        && !r.index.contains_key(&h.to)
                        && !next.iter().any(|x| x.to == h.to)
                    {
                        next.push(*h);
                    }
                }
            }
            next.sort_by_key(|h| h.to);
            level = next.iter().map(|h| h.to).collect();
            for h in next {
                r.attach(h);
            }
        }
        r
    }

    pub fn root(&self) -> NodeId {
        self.nodes[0]
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Members in attachment (breadth-first) order, root first.
    pub fn nodes(&self) -> &[NodeId] {
        &self.nodes
    }

    pub fn contains(&self, v: NodeId) -> bool {
        self.index.contains_key(&v)
    }

    pub fn position(&self, v: NodeId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    pub fn depth(&self, k: usize) -> u32 {
        self.depth[k]
    }

    pub fn height(&self) -> u32 {
        self.depth.iter().copied().max().unwrap_or(0)
    }

    pub fn parent(&self, k: usize) -> Option<usize> {
        self.parent[k].map(|p| p.0)
    }

    /// Hop from the parent of member `k` to `k`.
    pub fn down_hop(&self, k: usize) -> Option<Hop> {
        self.parent[k].map(|p| p.1)
    }

    pub fn up_hop(&self, k: usize) -> Option<Hop> {
        self.down_hop(k).map(reverse)
    }

    pub fn children(&self, k: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(move |&c| self.parent(c) == Some(k))
    }

    /// Hops from the root down to member `k`.
    pub fn path_from_root(&self, k: usize) -> Vec<Hop> {
        let mut hops = self.path_to_root(k);
        hops.reverse();
        hops.into_iter().map(reverse).collect()
    }

    /// Hops from member `k` up to the root.
    pub fn path_to_root(&self, k: usize) -> Vec<Hop> {
        let mut hops = Vec::new();
        let mut c = k;
        while let Some((p, h)) = self.parent[c] {
            hops.push(reverse(h));
            c = p;
        }
        hops
    }

    pub fn cloud_bw(&self, topo: &Topology) -> u64 {
        self.nodes.iter().map(|&v| topo.cloud_bw(v)).sum()
    }

    /// Members ordered farthest first (depth descending, then node id), the
    /// root last.
    pub fn farthest_first(&self) -> Vec<usize> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&k| (std::cmp::Reverse(self.depth[k]), self.nodes[k]));
        order
    }

    /// Splits `len` bits into per-member slices proportional to cloud
    /// bandwidth. The rounding remainder goes to the root, or to the
    /// lowest-id member of largest cloud bandwidth when the root has none.
    /// Offsets are assigned farthest member first. Indexed by member.
    pub fn slices(&self, topo: &Topology, len: u64) -> Result<Vec<Range<u64>>, BuildError> {
        let total = self.cloud_bw(topo);
        if total == 0 {
            return Err(BuildError::NoCapacity {
                what: format!("cloud links of the region rooted at {}", self.root()),
            });
        }
        let mut sizes: Vec<u64> = self
            .nodes
            .iter()
            .map(|&v| (len as u128 * topo.cloud_bw(v) as u128 / total as u128) as u64)
            .collect();
        let rest = len - sizes.iter().sum::<u64>();
        let absorber = if topo.cloud_bw(self.root()) > 0 {
            0
        } else {
            (0..self.len())
                .max_by_key(|&k| (topo.cloud_bw(self.nodes[k]), std::cmp::Reverse(self.nodes[k])))
                .unwrap_or(0)
        };
        sizes[absorber] += rest;
        let mut out = vec![0..0; self.len()];
        let mut off = 0;
        for k in self.farthest_first() {
            out[k] = off..off + sizes[k];
            off += sizes[k];
        }
        Ok(out)
    }
}

fn reverse(h: Hop) -> Hop {
    Hop {
        link: h.link,
        from: h.to,
        to: h.from,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteOutcome {
    /// Round by whose end the whole window is in the cloud.
    pub written: Round,
    /// Round by whose end the root knows it (equal to `written` without acks).
    pub acked: Round,
}

/// Writes bits `0..len` of `item`, streamed at the root per `ready`, to
/// `file`: every member writes its proportional slice after receiving it
/// from the root, and with `acks` an acknowledgement convergecast reports
/// completion back to the root.
#[allow(clippy::too_many_arguments)]
pub fn cloud_write(
    b: &mut ScheduleBuilder,
    region: &Region,
    item: ItemId,
    len: u64,
    file: FileId,
    ready: &Profile,
    acks: bool,
    slot: Slot,
) -> Result<WriteOutcome, BuildError> {
    let topo = b.topo();
    let slices = region.slices(topo, len)?;
    let mut done = vec![0 as Round; region.len()];
    let mut written = ready.reaches(0);
    for k in region.farthest_first() {
        let r = &slices[k];
        if r.is_empty() {
            continue;
        }
        let input = ready.window(r.start, r.end - r.start);
        let at = b.forward(item, r.start, r.end - r.start, &region.path_from_root(k), &input, slot)?;
        let w = b.write(region.nodes()[k], item, r.start, r.end - r.start, file, &at, slot)?;
        done[k] = w.done();
        written = written.max(w.done());
    }
    if !acks {
        return Ok(WriteOutcome {
            written,
            acked: written,
        });
    }
    // Acknowledgements climb from the deepest members; a member reports once
    // its own slice and all of its children are done.
    for k in region.farthest_first() {
        if let Some(up) = region.up_hop(k) {
            let arrive = b.signal(&[up], done[k], slot)?;
            let p = region.parent(k).expect("non-root has a parent");
            done[p] = done[p].max(arrive);
        }
    }
    Ok(WriteOutcome {
        written,
        acked: done[0],
    })
}

/// Reads bits `0..len` of `file` (holding `item`) into the root. The root
/// sends a start message down the tree no earlier than the end of round
/// `start`; each member then reads its slice once the cloud has it
/// (`avail`) and relays it to the root. Returns the round by whose end the
/// root holds every bit.
#[allow(clippy::too_many_arguments)]
pub fn cloud_read(
    b: &mut ScheduleBuilder,
    region: &Region,
    file: FileId,
    item: ItemId,
    len: u64,
    avail: &Profile,
    start: Round,
    slot: Slot,
) -> Result<Round, BuildError> {
    let topo = b.topo();
    let slices = region.slices(topo, len)?;
    let mut started = vec![start; region.len()];
    for k in 1..region.len() {
        let p = region.parent(k).expect("non-root has a parent");
        let hop = region.down_hop(k).expect("non-root has a hop");
        started[k] = b.signal(&[hop], started[p], slot)?;
    }
    let mut done = start.max(avail.reaches(len));
    for k in region.farthest_first() {
        let r = &slices[k];
        if r.is_empty() {
            continue;
        }
        let n = r.end - r.start;
        let cloud = avail.window(r.start, n).not_before(started[k]);
        let got = b.read(region.nodes()[k], file, r.start, n, &cloud, slot)?;
        let at_root = b.forward(item, r.start, n, &region.path_to_root(k), &got, slot)?;
        done = done.max(at_root.done());
    }
    Ok(done)
}

/// Pipelines bits `0..len` of `item` from the root to every member. Returns
/// per-member availability.
pub fn broadcast(
    b: &mut ScheduleBuilder,
    region: &Region,
    item: ItemId,
    len: u64,
    ready: &Profile,
    slot: Slot,
) -> Result<Vec<Profile>, BuildError> {
    let mut got = vec![ready.clone(); region.len()];
    for k in 1..region.len() {
        let p = region.parent(k).expect("non-root has a parent");
        let hop = region.down_hop(k).expect("non-root has a hop");
        let input = got[p].clone();
        got[k] = b.forward_hop(item, 0, len, hop, &input, slot)?;
    }
    Ok(got)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bits::Bits;
    use crate::builder::any_round;
    use crate::engine::run_schedule;
    use rand::SeedableRng;

    #[test]
    fn bfs_orders_levels_by_id() {
        let t = Topology::uniform_wheel(6, 1, 1);
        let r = Region::bfs(&t, 0, &[0, 1, 2, 4, 5]);
        assert_eq!(r.nodes(), &[0, 1, 5, 2, 4]);
        assert_eq!(r.height(), 2);
        assert_eq!(r.path_to_root(3).len(), 2);
        assert_eq!(r.farthest_first(), vec![3, 4, 1, 2, 0]);
    }

    #[test]
    fn slices_are_proportional_with_remainder_at_root() {
        let t = Topology::wheel(&[1, 2, 2], &[5, 5, 5]);
        let r = Region::bfs(&t, 0, &[0, 1, 2]);
        let s = r.slices(&t, 11).unwrap();
        let sizes: Vec<u64> = s.iter().map(|x| x.end - x.start).collect();
        assert_eq!(sizes, vec![3, 4, 4]);
        assert_eq!(s[1], 0..4);
        assert_eq!(s[0], 8..11);
    }

    #[test]
    fn remainder_moves_off_a_root_without_cloud_bandwidth() {
        let t = Topology::wheel(&[0, 3, 3], &[5, 5, 5]);
        let r = Region::bfs(&t, 0, &[0, 1, 2]);
        let sizes: Vec<u64> = r.slices(&t, 7).unwrap().iter().map(|x| x.end - x.start).collect();
        assert_eq!(sizes, vec![0, 4, 3]);
    }

    #[test]
    fn write_then_read_moves_the_content() {
        let t = Topology::wheel(&[1, 2, 1, 3, 1], &[3, 2, 4, 2, 3]);
        let region = Region::bfs(&t, 2, &[0, 1, 2, 3, 4]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 23);
        b.hold(2, x);
        let mut rng = rand::rngs::StdRng::seed_from_u64(5);
        let v = Bits::random(23, &mut rng);
        b.set_value(x, v.clone());
        let f = b.file("f");
        let w = cloud_write(&mut b, &region, x, 23, f, &Profile::ready(0, 23), true, &any_round).unwrap();
        assert!(w.acked >= w.written);
        let reader = Region::bfs(&t, 4, &[3, 4, 0]);
        let done = cloud_read(&mut b, &reader, f, x, 23, &Profile::ready(w.written, 23), w.acked, &any_round)
            .unwrap();
        let (s, init) = b.finish();
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert_eq!(tr.file_value("f"), Some(&v));
        assert!(tr.holds(4, x));
        assert_eq!(tr.rounds_elapsed, done);
    }

    #[test]
    fn broadcast_reaches_everyone() {
        let t = Topology::uniform_wheel(5, 0, 2);
        let region = Region::bfs(&t, 0, &[0, 1, 2, 3, 4]);
        let mut b = ScheduleBuilder::new(&t, None);
        let x = b.data("x", 6);
        b.hold(0, x);
        let got = broadcast(&mut b, &region, x, 6, &Profile::ready(0, 6), &any_round).unwrap();
        assert_eq!(got.iter().map(Profile::done).max(), Some(2 + 3 - 1));
        let (s, init) = b.finish();
        let tr = run_schedule(&t, &s, &init).unwrap();
        assert!((0..5).all(|v| tr.holds(v, x)));
    }
}
