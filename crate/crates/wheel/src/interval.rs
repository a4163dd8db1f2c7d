//! Cloud intervals: the shortest run of ring neighbours whose pooled cloud
//! bandwidth can absorb `s` bits before local links become the bottleneck.

use cwc_core::{Hop, LinkId, Mode, NodeId, Round, Topology};

use crate::WheelError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Clockwise,
    Counterclockwise,
}

impl Direction {
    pub fn mirrored(self) -> Self {
        match self {
            Direction::Clockwise => Direction::Counterclockwise,
            Direction::Counterclockwise => Direction::Clockwise,
        }
    }
}

/// Node at `offset` steps from `origin`.
pub fn node_at(n: usize, origin: NodeId, dir: Direction, offset: usize) -> NodeId {
    match dir {
        Direction::Clockwise => (origin + offset) % n,
        Direction::Counterclockwise => (origin + n - offset % n) % n,
    }
}

/// Ring link between offsets `offset` and `offset + 1`.
pub fn link_at(n: usize, origin: NodeId, dir: Direction, offset: usize) -> LinkId {
    let k = match dir {
        Direction::Clockwise => (origin + offset) % n,
        Direction::Counterclockwise => (origin + n - (offset + 1) % n) % n,
    };
    LinkId(k as u32)
}

#[derive(Clone, Debug, PartialEq)]
pub struct IntervalStats {
    pub origin: NodeId,
    pub direction: Direction,
    pub s: u64,
    /// First offset where the pooled cloud bandwidth suffices, or `n`.
    pub k_cloud: usize,
    /// First offset whose outgoing link is thinner than the pooled cloud
    /// bandwidth, or `n`.
    pub k_link: usize,
    pub k: usize,
    /// Members by offset from the origin.
    pub nodes: Vec<NodeId>,
    /// Links between consecutive members.
    pub links: Vec<LinkId>,
    /// Narrowest internal link; `None` for a single node.
    pub bottleneck: Option<u64>,
    pub cloud_bw: u64,
    /// `|I| + s/bottleneck + s/cloud_bw`.
    pub timespan: f64,
}

impl IntervalStats {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Hops from the origin outward.
    pub fn hops(&self) -> Vec<Hop> {
        self.links
            .iter()
            .zip(self.nodes.windows(2))
            .map(|(&link, w)| Hop {
                link,
                from: w[0],
                to: w[1],
            })
            .collect()
    }

    /// Clockwise start and length of the member arc.
    pub fn arc(&self, n: usize) -> Arc {
        let len = self.len();
        let start = match self.direction {
            Direction::Clockwise => self.origin,
            Direction::Counterclockwise => (self.origin + n - (len - 1)) % n,
        };
        Arc { start, len }
    }

    /// `max(k, ceil(s / 2 bottleneck), ceil(s / 2 cloud_bw))`, with `k`
    /// capped at the ring diameter along this direction.
    pub fn lower_bound(&self) -> Round {
        let reach = self.k.min(self.len() - 1) as u64;
        let link = self.bottleneck.map_or(0, |phi| self.s.div_ceil(2 * phi));
        let cloud = if self.cloud_bw == 0 {
            0
        } else {
            self.s.div_ceil(2 * self.cloud_bw)
        };
        reach.max(link).max(cloud) as Round
    }
}

/// A clockwise run of `len` ring nodes starting at `start`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Arc {
    pub start: NodeId,
    pub len: usize,
}

impl Arc {
    pub fn contains(&self, n: usize, v: NodeId) -> bool {
        (v + n - self.start) % n < self.len
    }

    pub fn nodes(&self, n: usize) -> impl Iterator<Item = NodeId> {
        let start = self.start;
        (0..self.len).map(move |d| (start + d) % n)
    }

    /// Clockwise last member.
    pub fn end(&self, n: usize) -> NodeId {
        (self.start + self.len - 1) % n
    }
}

pub(crate) fn require_wheel(t: &Topology) -> Result<(), WheelError> {
    if t.mode() == Mode::Wheel {
        Ok(())
    } else {
        Err(WheelError::NotAWheel)
    }
}

/// Cloud interval of node `i` for an `s`-bit file in direction `dir`.
pub fn compute_cloud_interval(
    t: &Topology,
    i: NodeId,
    s: u64,
    dir: Direction,
) -> Result<IntervalStats, WheelError> {
    require_wheel(t)?;
    let n = t.n();
    if i >= n {
        return Err(WheelError::NoSuchNode(i));
    }
    let mut k_cloud = n;
    let mut k_link = n;
    let mut pooled = 0u64;
    for k in 0..n {
        pooled += t.cloud_bw(node_at(n, i, dir, k));
        if k_cloud == n && (k as u64 + 1).saturating_mul(pooled) >= s {
            k_cloud = k;
        }
        if k_link == n && n >= 2 && t.link(link_at(n, i, dir, k)).w < pooled {
            k_link = k;
        }
    }
    let k = k_cloud.min(k_link);
    let size = k.min(n - 1) + 1;
    let nodes: Vec<NodeId> = (0..size).map(|d| node_at(n, i, dir, d)).collect();
    let links: Vec<LinkId> = (0..size - 1).map(|d| link_at(n, i, dir, d)).collect();
    let cloud_bw: u64 = nodes.iter().map(|&v| t.cloud_bw(v)).sum();
    if cloud_bw == 0 && s > 0 {
        return Err(WheelError::ZeroCloudBandwidthEverywhere);
    }
    let bottleneck = links.iter().map(|&l| t.link(l).w).min();
    let sf = s as f64;
    let timespan = size as f64
        + bottleneck.map_or(0.0, |phi| sf / phi as f64)
        + if s == 0 { 0.0 } else { sf / cloud_bw as f64 };
    Ok(IntervalStats {
        origin: i,
        direction: dir,
        s,
        k_cloud,
        k_link,
        k,
        nodes,
        links,
        bottleneck,
        cloud_bw,
        timespan,
    })
}

/// The cheaper of the two directions; clockwise wins ties.
pub fn best_interval(t: &Topology, i: NodeId, s: u64) -> Result<IntervalStats, WheelError> {
    let cw = compute_cloud_interval(t, i, s, Direction::Clockwise)?;
    let ccw = compute_cloud_interval(t, i, s, Direction::Counterclockwise)?;
    Ok(if ccw.timespan < cw.timespan { ccw } else { cw })
}

/// Lower bound on a cloud write or read of `s` bits at `i`, for the
/// direction the algorithm runs in.
pub fn wheel_lower_bound(t: &Topology, i: NodeId, s: u64, dir: Direction) -> Result<Round, WheelError> {
    Ok(compute_cloud_interval(t, i, s, dir)?.lower_bound())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_example() {
        let t = Topology::uniform_wheel(8, 1, 4);
        let st = compute_cloud_interval(&t, 0, 9, Direction::Clockwise).unwrap();
        assert_eq!((st.k_cloud, st.k_link, st.k), (2, 4, 2));
        assert_eq!(st.nodes, vec![0, 1, 2]);
        assert_eq!(st.bottleneck, Some(4));
        assert_eq!(st.cloud_bw, 3);
        assert!((st.timespan - (3.0 + 9.0 / 4.0 + 3.0)).abs() < 1e-12);
    }

    #[test]
    fn single_node_interval_has_no_bottleneck() {
        let t = Topology::uniform_wheel(5, 2, 1);
        let st = compute_cloud_interval(&t, 3, 1, Direction::Counterclockwise).unwrap();
        assert_eq!(st.nodes, vec![3]);
        assert_eq!(st.bottleneck, None);
        assert!((st.timespan - 1.5).abs() < 1e-12);
    }

    #[test]
    fn counterclockwise_walks_down() {
        let t = Topology::uniform_wheel(6, 1, 9);
        let st = compute_cloud_interval(&t, 1, 9, Direction::Counterclockwise).unwrap();
        assert_eq!(st.nodes, vec![1, 0, 5]);
        assert_eq!(st.links, vec![LinkId(0), LinkId(5)]);
        assert_eq!(st.arc(6), Arc { start: 5, len: 3 });
    }

    #[test]
    fn all_zero_cloud_is_infeasible() {
        let t = Topology::uniform_wheel(4, 0, 3);
        assert_eq!(
            compute_cloud_interval(&t, 0, 5, Direction::Clockwise),
            Err(WheelError::ZeroCloudBandwidthEverywhere)
        );
    }

    #[test]
    fn thin_link_cuts_the_interval() {
        // Link 1 -> 2 is thinner than the cloud bandwidth pooled at {0, 1}.
        let t = Topology::wheel(&[1, 1, 1, 1, 1], &[8, 1, 8, 8, 8]);
        let st = compute_cloud_interval(&t, 0, 100, Direction::Clockwise).unwrap();
        assert_eq!(st.k_link, 1);
        assert_eq!(st.nodes, vec![0, 1]);
    }

    #[test]
    fn ties_go_clockwise() {
        let t = Topology::uniform_wheel(7, 1, 2);
        assert_eq!(best_interval(&t, 3, 10).unwrap().direction, Direction::Clockwise);
        let t = Topology::wheel(&[1, 1, 1, 4, 1], &[5, 5, 5, 5, 5]);
        assert_eq!(best_interval(&t, 4, 12).unwrap().direction, Direction::Counterclockwise);
    }

    #[test]
    fn lower_bound_of_a_self_sufficient_node() {
        let t = Topology::uniform_wheel(4, 7, 1);
        assert_eq!(wheel_lower_bound(&t, 0, 7, Direction::Clockwise).unwrap(), 1);
    }
}
