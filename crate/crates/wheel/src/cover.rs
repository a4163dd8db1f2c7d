//! Minimal covers of the ring by cloud intervals, their 3-colouring, and the
//! split into non-wrapping pieces that fixes the combining order.

use cwc_core::{NodeId, Region, Topology};

use crate::interval::{best_interval, Arc, IntervalStats};
use crate::WheelError;

/// Indices of a minimum-cardinality subset of `arcs` covering all `n` ring
/// nodes, ordered by start. Every node must lie in some arc.
pub fn minimal_circle_cover(n: usize, arcs: &[Arc]) -> Vec<usize> {
    assert!(n >= 1 && !arcs.is_empty());
    if let Some(k) = arcs.iter().position(|a| a.len >= n) {
        return vec![k];
    }
    // Longest arc starting at each position (lowest index on ties).
    let mut best: Vec<Option<usize>> = vec![None; n];
    for (k, a) in arcs.iter().enumerate() {
        let slot = &mut best[a.start];
        if slot.is_none_or(|b| arcs[b].len < a.len) {
            *slot = Some(k);
        }
    }
    let mut tried = std::collections::HashSet::new();
    let mut answer: Option<Vec<usize>> = None;
    for (first, a) in arcs.iter().enumerate() {
        if !tried.insert(*a) {
            continue;
        }
        let mut chosen = vec![first];
        let mut end = a.start + n + a.len;
        let target = a.start + 2 * n;
        while end < target {
            // Arcs starting at unrolled positions end-n+1..=end, each residue once.
            let mut reach = end;
            let mut pick = None;
            for q in end + 1 - n..=end {
                if let Some(k) = best[q % n] {
                    if q + arcs[k].len > reach {
                        reach = q + arcs[k].len;
                        pick = Some(k);
                    }
                }
            }
            let k = pick.expect("every node lies in some arc");
            chosen.push(k);
            end = reach;
            if answer.as_ref().is_some_and(|b| chosen.len() >= b.len()) {
                break;
            }
        }
        if end >= target && answer.as_ref().is_none_or(|b| chosen.len() < b.len()) {
            answer = Some(chosen);
        }
    }
    let mut out = answer.expect("arcs cover the ring");
    out.sort_by_key(|&k| (arcs[k].start, arcs[k].len));
    out.dedup();
    out
}

/// Number of arcs containing each node.
pub fn load(n: usize, arcs: &[Arc]) -> Vec<usize> {
    let mut l = vec![0; n];
    for a in arcs {
        for v in a.nodes(n) {
            l[v] += 1;
        }
    }
    l
}

pub fn arcs_intersect(n: usize, a: &Arc, b: &Arc) -> bool {
    a.contains(n, b.start) || b.contains(n, a.start)
}

/// Colours arcs with at most three colours so that intersecting arcs differ.
/// Requires every arc to meet at most two others.
pub fn three_color(n: usize, arcs: &[Arc]) -> Result<Vec<u8>, WheelError> {
    let m = arcs.len();
    let adj: Vec<Vec<usize>> = (0..m)
        .map(|a| {
            (0..m)
                .filter(|&b| b != a && arcs_intersect(n, &arcs[a], &arcs[b]))
                .collect()
        })
        .collect();
    if let Some(d) = adj.iter().map(Vec::len).find(|&d| d > 2) {
        return Err(WheelError::ColoringImpossible { degree: d });
    }
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by_key(|&k| arcs[k].start);
    let mut color = vec![u8::MAX; m];
    for k in order {
        let used: Vec<u8> = adj[k].iter().map(|&j| color[j]).collect();
        color[k] = (0..3).find(|c| !used.contains(c)).expect("degree at most two");
    }
    Ok(color)
}

/// A non-wrapping part `lo..=hi` of a cover interval. Pieces of one
/// interval share its nodes for all transfers.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Piece {
    pub lo: NodeId,
    pub hi: NodeId,
    /// Index into [`RingCover::intervals`].
    pub interval: usize,
}

impl Piece {
    pub fn contains(&self, v: NodeId) -> bool {
        self.lo <= v && v <= self.hi
    }

    /// The rightmost node, which ends up holding the piece's product.
    pub fn leader(&self) -> NodeId {
        self.hi
    }
}

/// The three interval indices behind the largest timespan, and its value.
#[derive(Clone, Debug, PartialEq)]
pub struct WorstCase {
    /// Origin of the longest interval.
    pub longest: NodeId,
    /// Origin of the interval with the least cloud bandwidth.
    pub poorest: NodeId,
    /// Origin of the interval with the narrowest link (`None` if every
    /// interval is a single node).
    pub narrowest: Option<NodeId>,
    pub max_len: usize,
    pub min_cloud_bw: u64,
    pub min_bottleneck: Option<u64>,
    /// `max_len + s / min_bottleneck + s / min_cloud_bw`.
    pub timespan: f64,
}

impl WorstCase {
    pub fn of(intervals: &[IntervalStats], s: u64) -> Self {
        let longest = intervals.iter().max_by_key(|st| (st.len(), std::cmp::Reverse(st.origin))).expect("n >= 1");
        let poorest = intervals.iter().min_by_key(|st| (st.cloud_bw, st.origin)).expect("n >= 1");
        let narrowest = intervals
            .iter()
            .filter_map(|st| st.bottleneck.map(|b| (b, st.origin)))
            .min();
        let sf = s as f64;
        let timespan = longest.len() as f64
            + narrowest.map_or(0.0, |(b, _)| sf / b as f64)
            + if s == 0 { 0.0 } else { sf / poorest.cloud_bw as f64 };
        WorstCase {
            longest: longest.origin,
            poorest: poorest.origin,
            narrowest: narrowest.map(|x| x.1),
            max_len: longest.len(),
            min_cloud_bw: poorest.cloud_bw,
            min_bottleneck: narrowest.map(|x| x.0),
            timespan,
        }
    }
}

#[derive(Clone, Debug)]
pub struct RingCover {
    pub n: usize,
    pub s: u64,
    /// The chosen interval of every node.
    pub all: Vec<IntervalStats>,
    /// Indices (into `all`) of the cover intervals, ordered by arc start.
    pub intervals: Vec<usize>,
    pub arcs: Vec<Arc>,
    /// Colour per cover interval.
    pub colors: Vec<u8>,
    /// Non-wrapping pieces ordered by `(hi, lo)`.
    pub pieces: Vec<Piece>,
    /// Piece owning each node's input.
    pub home: Vec<usize>,
    pub worst: WorstCase,
}

impl RingCover {
    pub fn build(t: &Topology, s: u64) -> Result<Self, WheelError> {
        let n = t.n();
        let all = (0..n)
            .map(|i| best_interval(t, i, s))
            .collect::<Result<Vec<_>, _>>()?;
        let candidates: Vec<Arc> = all.iter().map(|st| st.arc(n)).collect();
        let intervals = minimal_circle_cover(n, &candidates);
        let arcs: Vec<Arc> = intervals.iter().map(|&k| candidates[k]).collect();
        let colors = three_color(n, &arcs)?;
        let mut pieces = Vec::new();
        for (k, a) in arcs.iter().enumerate() {
            if a.start + a.len > n {
                pieces.push(Piece { lo: a.start, hi: n - 1, interval: k });
                pieces.push(Piece { lo: 0, hi: a.start + a.len - 1 - n, interval: k });
            } else {
                pieces.push(Piece { lo: a.start, hi: a.start + a.len - 1, interval: k });
            }
        }
        pieces.sort_by_key(|p| (p.hi, p.lo));
        let home = (0..n)
            .map(|v| pieces.iter().position(|p| p.contains(v)).expect("cover"))
            .collect();
        let worst = WorstCase::of(&all, s);
        Ok(RingCover {
            n,
            s,
            all,
            intervals,
            arcs,
            colors,
            pieces,
            home,
            worst,
        })
    }

    /// Tree over the whole interval of piece `p`, rooted at its leader.
    pub fn region(&self, t: &Topology, p: usize) -> Region {
        let piece = self.pieces[p];
        let members: Vec<NodeId> = self.arcs[piece.interval].nodes(self.n).collect();
        Region::bfs(t, piece.leader(), &members)
    }

    pub fn piece_color(&self, p: usize) -> u8 {
        self.colors[self.pieces[p].interval]
    }

    pub fn loads(&self) -> Vec<usize> {
        load(self.n, &self.arcs)
    }

    /// Home nodes of piece `p`, ascending.
    pub fn homes_of(&self, p: usize) -> Vec<NodeId> {
        (0..self.n).filter(|&v| self.home[v] == p).collect()
    }
}
