//! Time-expanded graphs: one copy of every node per round boundary, so that a
//! flow of value `s` within horizon `T` is a `T`-round transfer schedule.

use cwc_core::{Hop, NodeId, Round, Topology};

use crate::maxflow::{FlowNetwork, INF};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum FlowMode {
    /// Sources hold data that must reach the cloud.
    Write,
    /// Cloud data must reach the sinks.
    Read,
}

/// What an arc of the expanded graph stands for.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArcRole {
    /// Supply of demand `k` (write mode).
    Supply(usize),
    /// Delivery of demand `k` (read mode).
    Deliver(usize),
    /// Keeping bits in memory for one more round.
    Storage,
    Send { round: Round, hop: Hop },
    Write { round: Round, node: NodeId },
    Read { round: Round, node: NodeId },
}

/// Layer `t` holds node copies `(v, t)`: what `v` has by the end of round
/// `t` (layer 0 is the initial state). A link arc `(u, t) -> (v, t + 1)`
/// carries up to `w` bits sent in round `t + 1`; cloud arcs carry up to
/// `b_c` bits written from `(u, t)` or read into `(u, t + 1)` in round `t + 1`.
#[derive(Clone, Debug)]
pub struct TimeExpandedGraph {
    pub horizon: Round,
    pub mode: FlowMode,
    pub n: usize,
    pub net: FlowNetwork,
    pub roles: Vec<ArcRole>,
    pub demand: u64,
}

pub const SOURCE: usize = 0;
pub const SINK: usize = 1;

impl TimeExpandedGraph {
    /// Demand `k = (v, s)` moves `s` bits between node `v` and the cloud.
    pub fn build(t: &Topology, demands: &[(NodeId, u64)], mode: FlowMode, horizon: Round) -> Self {
        let n = t.n();
        let layers = horizon as usize + 1;
        let mut g = TimeExpandedGraph {
            horizon,
            mode,
            n,
            net: FlowNetwork::new(2 + n * layers),
            roles: Vec::new(),
            demand: demands.iter().map(|d| d.1).sum(),
        };
        if mode == FlowMode::Write {
            for (k, &(v, s)) in demands.iter().enumerate().filter(|x| x.1 .1 > 0) {
                g.arc(SOURCE, g.at(v, 0), s, ArcRole::Supply(k));
            }
        }
        for r in 0..horizon {
            let round = r + 1;
            for v in 0..n {
                let here = g.at(v, r);
                if mode == FlowMode::Read && t.cloud_bw(v) > 0 {
                    g.arc(SOURCE, g.at(v, r + 1), t.cloud_bw(v), ArcRole::Read { round, node: v });
                }
                g.arc(here, g.at(v, r + 1), INF, ArcRole::Storage);
                for &hop in t.out_hops(v) {
                    let w = t.link(hop.link).w;
                    if w > 0 {
                        g.arc(here, g.at(hop.to, r + 1), w, ArcRole::Send { round, hop });
                    }
                }
                if mode == FlowMode::Write && t.cloud_bw(v) > 0 {
                    g.arc(here, SINK, t.cloud_bw(v), ArcRole::Write { round, node: v });
                }
            }
        }
        if mode == FlowMode::Read {
            for (k, &(v, s)) in demands.iter().enumerate().filter(|x| x.1 .1 > 0) {
                g.arc(g.at(v, horizon), SINK, s, ArcRole::Deliver(k));
            }
        }
        g
    }

    pub fn at(&self, v: NodeId, layer: Round) -> usize {
        2 + layer as usize * self.n + v
    }

    fn arc(&mut self, u: usize, v: usize, cap: u64, role: ArcRole) {
        self.net.add_arc(u, v, cap);
        self.roles.push(role);
    }

    /// Maximum flow value, capped at the demand.
    pub fn solve(&mut self) -> u64 {
        self.net.max_flow(SOURCE, SINK, self.demand)
    }

    /// Splits the current flow into source-to-sink paths, each given as its
    /// arc roles and carried amount.
    pub fn paths(&self) -> Vec<(Vec<ArcRole>, u64)> {
        let nodes = self.net.node_count();
        let mut out_arcs: Vec<Vec<usize>> = vec![Vec::new(); nodes];
        let mut left: Vec<u64> = Vec::with_capacity(self.net.arc_count());
        for k in 0..self.net.arc_count() {
            let f = self.net.flow(k);
            left.push(f);
            if f > 0 {
                out_arcs[self.net.endpoints(k).0].push(k);
            }
        }
        let mut next = vec![0usize; nodes];
        let mut paths = Vec::new();
        loop {
            let mut u = SOURCE;
            let mut arcs = Vec::new();
            while u != SINK {
                while next[u] < out_arcs[u].len() && left[out_arcs[u][next[u]]] == 0 {
                    next[u] += 1;
                }
                let Some(&k) = out_arcs[u].get(next[u]) else {
                    break;
                };
                arcs.push(k);
                u = self.net.endpoints(k).1;
            }
            if u != SINK {
                debug_assert!(arcs.is_empty(), "flow is conserved");
                break;
            }
            let amount = arcs.iter().map(|&k| left[k]).min().unwrap_or(0);
            for &k in &arcs {
                left[k] -= amount;
            }
            paths.push((arcs.iter().map(|&k| self.roles[k]).collect(), amount));
        }
        paths
    }
}
