//! Dinic's max-flow on integer capacities. Arcs are scanned in insertion
//! order, so results are deterministic for a fixed construction order.

use std::collections::VecDeque;

pub const INF: u64 = u64::MAX / 4;

#[derive(Clone, Debug)]
struct Arc {
    to: usize,
    cap: u64,
    /// Index of the paired residual arc.
    rev: usize,
}

#[derive(Clone, Debug, Default)]
pub struct FlowNetwork {
    adj: Vec<Vec<Arc>>,
    /// `(tail, position in adj[tail], original capacity)` per forward arc.
    arcs: Vec<(usize, usize, u64)>,
}

impl FlowNetwork {
    pub fn new(nodes: usize) -> Self {
        FlowNetwork {
            adj: vec![Vec::new(); nodes],
            arcs: Vec::new(),
        }
    }

    pub fn node_count(&self) -> usize {
        self.adj.len()
    }

    /// Adds `u -> v` and returns its arc index.
    pub fn add_arc(&mut self, u: usize, v: usize, cap: u64) -> usize {
        let (pu, pv) = (self.adj[u].len(), self.adj[v].len() + usize::from(u == v));
        self.adj[u].push(Arc { to: v, cap, rev: pv });
        self.adj[v].push(Arc { to: u, cap: 0, rev: pu });
        self.arcs.push((u, pu, cap));
        self.arcs.len() - 1
    }

    pub fn arc_count(&self) -> usize {
        self.arcs.len()
    }

    /// Endpoints of arc `k`.
    pub fn endpoints(&self, k: usize) -> (usize, usize) {
        let (u, p, _) = self.arcs[k];
        (u, self.adj[u][p].to)
    }

    /// Flow currently on arc `k`.
    pub fn flow(&self, k: usize) -> u64 {
        let (u, p, cap) = self.arcs[k];
        cap - self.adj[u][p].cap
    }

    /// Pushes as much flow as possible from `s` to `t`, stopping early once
    /// `limit` is reached.
    pub fn max_flow(&mut self, s: usize, t: usize, limit: u64) -> u64 {
        let mut total = 0;
        let n = self.adj.len();
        let mut level = vec![u32::MAX; n];
        let mut iter = vec![0usize; n];
        while total < limit && self.bfs(s, t, &mut level) {
            iter.iter_mut().for_each(|x| *x = 0);
            loop {
                let f = self.dfs(s, t, limit - total, &level, &mut iter);
                if f == 0 {
                    break;
                }
                total += f;
                if total >= limit {
                    break;
                }
            }
        }
        total
    }

    fn bfs(&self, s: usize, t: usize, level: &mut [u32]) -> bool {
        level.iter_mut().for_each(|x| *x = u32::MAX);
        level[s] = 0;
        let mut q = VecDeque::from([s]);
        while let Some(u) = q.pop_front() {
            for a in &self.adj[u] {
                if a.cap > 0 && level[a.to] == u32::MAX {
                    level[a.to] = level[u] + 1;
                    q.push_back(a.to);
                }
            }
        }
        level[t] != u32::MAX
    }

    /// Iterative blocking-flow search for one augmenting path.
    fn dfs(&mut self, s: usize, t: usize, limit: u64, level: &[u32], iter: &mut [usize]) -> u64 {
        let mut path: Vec<(usize, usize)> = Vec::new();
        let mut u = s;
        loop {
            if u == t {
                let f = path
                    .iter()
                    .map(|&(x, k)| self.adj[x][k].cap)
                    .fold(limit, u64::min);
                for &(x, k) in &path {
                    let (to, rev) = (self.adj[x][k].to, self.adj[x][k].rev);
                    self.adj[x][k].cap -= f;
                    self.adj[to][rev].cap += f;
                }
                return f;
            }
            let mut advanced = false;
            while iter[u] < self.adj[u].len() {
                let a = &self.adj[u][iter[u]];
                if a.cap > 0 && level[a.to] == level[u] + 1 {
                    path.push((u, iter[u]));
                    u = a.to;
                    advanced = true;
                    break;
                }
                iter[u] += 1;
            }
            if !advanced {
                // Dead end: retreat and skip the arc that led here.
                match path.pop() {
                    Some((x, _)) => {
                        iter[x] += 1;
                        u = x;
                    }
                    None => return 0,
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn classic_network() {
        let mut g = FlowNetwork::new(6);
        for (u, v, c) in [(0, 1, 16), (0, 2, 13), (1, 2, 10), (2, 1, 4), (1, 3, 12), (3, 2, 9), (2, 4, 14), (4, 3, 7), (3, 5, 20), (4, 5, 4)] {
            g.add_arc(u, v, c);
        }
        assert_eq!(g.max_flow(0, 5, INF), 23);
    }

    #[test]
    fn limit_stops_early() {
        let mut g = FlowNetwork::new(2);
        let k = g.add_arc(0, 1, 10);
        assert_eq!(g.max_flow(0, 1, 4), 4);
        assert_eq!(g.flow(k), 4);
    }

    #[test]
    fn conservation_holds() {
        let mut g = FlowNetwork::new(5);
        for (u, v, c) in [(0, 1, 3), (0, 2, 2), (1, 3, 2), (2, 3, 3), (1, 2, 1), (3, 4, 4)] {
            g.add_arc(u, v, c);
        }
        let f = g.max_flow(0, 4, INF);
        assert_eq!(f, 4);
        let mut net = [0i64; 5];
        for k in 0..g.arc_count() {
            let (u, v) = g.endpoints(k);
            net[u] -= g.flow(k) as i64;
            net[v] += g.flow(k) as i64;
        }
        assert_eq!(net, [-4, 0, 0, 0, 4]);
    }
}
