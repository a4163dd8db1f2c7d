//! Covers of the graph by clusters: the cover of all cloud clusters, its
//! coarsening into a sparse cover, and per-cluster leaders.

use cwc_core::builder::any_round;
use cwc_core::region::cloud_write;
use cwc_core::{NodeId, Profile, Region, Round, ScheduleBuilder, Topology};

use crate::cluster::{ball_within, compute_cloud_cluster, distances_within, require_fat, ClusterStats};
use crate::FatError;

/// Hop diameter of the subgraph induced by `nodes` (`usize::MAX` if it is
/// disconnected).
pub fn cluster_diameter(t: &Topology, nodes: &[NodeId]) -> usize {
    let inside = membership(t.n(), nodes);
    nodes
        .iter()
        .map(|&v| {
            let d = distances_within(t, v, &inside);
            nodes.iter().map(|&u| d[u].unwrap_or(usize::MAX)).max().unwrap_or(0)
        })
        .max()
        .unwrap_or(0)
}

pub(crate) fn membership(n: usize, nodes: &[NodeId]) -> Vec<bool> {
    let mut inside = vec![false; n];
    for &v in nodes {
        inside[v] = true;
    }
    inside
}

/// Clusters containing each node.
pub fn node_loads(n: usize, clusters: &[Vec<NodeId>]) -> Vec<usize> {
    let mut load = vec![0; n];
    for c in clusters {
        for &v in c {
            load[v] += 1;
        }
    }
    load
}

fn intersects(a: &[bool], b: &[NodeId]) -> bool {
    b.iter().any(|&v| a[v])
}

/// Coarsens `clusters` (over nodes `0..n`) into a cover where every input
/// cluster lies inside an output cluster, output diameters stay within
/// `4 kappa` times the largest input diameter, and no node is in more than
/// `2 kappa |clusters|^(1/kappa)` output clusters.
///
/// Each phase repeatedly grows a kernel from the first remaining cluster,
/// absorbing every cluster that meets it, until a growth step would enlarge
/// the absorbed set by at most a factor `|R|^(1/kappa)`; the kernel's union
/// is output and the absorbed clusters leave the phase. Outputs of one
/// phase are disjoint, and clusters inside some kernel leave for good.
pub fn sparse_cover(n: usize, clusters: &[Vec<NodeId>], kappa: u32) -> Result<Vec<Vec<NodeId>>, FatError> {
    if kappa < 1 {
        return Err(FatError::InvalidKappa(kappa));
    }
    let mut remaining: Vec<usize> = (0..clusters.len()).collect();
    let mut out = Vec::new();
    while !remaining.is_empty() {
        let factor = (remaining.len() as f64).powf(1.0 / kappa as f64);
        let mut unassigned = remaining.clone();
        let mut covered = Vec::new();
        while let Some(&seed) = unassigned.first() {
            let mut kernel = vec![seed];
            let absorbed = loop {
                let union = membership(n, &kernel.iter().flat_map(|&c| clusters[c].iter().copied()).collect::<Vec<_>>());
                let grown: Vec<usize> = unassigned.iter().copied().filter(|&c| intersects(&union, &clusters[c])).collect();
                if grown.len() as f64 <= factor * kernel.len() as f64 {
                    break grown;
                }
                kernel = grown;
            };
            unassigned.retain(|c| !absorbed.contains(c));
            let mut union: Vec<NodeId> = kernel.iter().flat_map(|&c| clusters[c].iter().copied()).collect();
            union.sort_unstable();
            union.dedup();
            out.push(union);
            covered.extend(kernel);
        }
        remaining.retain(|c| !covered.contains(c));
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Cluster {
    /// Members, ascending.
    pub nodes: Vec<NodeId>,
    pub leader: NodeId,
    /// Estimated CloudWrite time of the leader inside the cluster.
    pub timespan: Round,
    /// The leader's ball inside the cluster, which carries its cloud traffic.
    pub ball: Vec<NodeId>,
    pub diameter: usize,
}

impl Cluster {
    pub fn region(&self, t: &Topology) -> Region {
        Region::bfs(t, self.leader, &self.nodes)
    }

    pub fn cloud_region(&self, t: &Topology) -> Region {
        Region::bfs(t, self.leader, &self.ball)
    }
}

/// Rounds a CloudWrite of `s` bits from `i` takes when confined to the
/// member set, acknowledgements included.
pub fn write_time_within(t: &Topology, i: NodeId, s: u64, nodes: &[NodeId]) -> Result<(Round, Vec<NodeId>), FatError> {
    let inside = membership(t.n(), nodes);
    let (_, ball) = ball_within(t, i, s, &inside, nodes.len());
    if s == 0 {
        return Ok((0, ball));
    }
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("S", s);
    b.hold(i, x);
    let f = b.file("f");
    let w = cloud_write(&mut b, &Region::bfs(t, i, &ball), x, s, f, &Profile::ready(0, s), true, &any_round)?;
    Ok((w.acked, ball))
}

#[derive(Clone, Debug, PartialEq)]
pub struct GraphCover {
    pub s: u64,
    pub clusters: Vec<Cluster>,
    /// Clusters containing each node.
    pub load: Vec<usize>,
    pub diam_max: usize,
    /// Cluster whose product includes each node's input.
    pub home: Vec<usize>,
    /// Cloud cluster of every node.
    pub node_clusters: Vec<ClusterStats>,
}

impl GraphCover {
    fn assemble(t: &Topology, s: u64, sets: Vec<Vec<NodeId>>, node_clusters: Vec<ClusterStats>) -> Result<Self, FatError> {
        let mut clusters = Vec::with_capacity(sets.len());
        for nodes in sets {
            // Leader: least estimated write time, then least id.
            if s > 0 && nodes.iter().all(|&u| t.cloud_bw(u) == 0) {
                return Err(FatError::NoCloudBandwidth);
            }
            let mut best: Option<(Round, NodeId, Vec<NodeId>)> = None;
            for &v in &nodes {
                let (z, ball) = write_time_within(t, v, s, &nodes)?;
                if best.as_ref().is_none_or(|b| z < b.0) {
                    best = Some((z, v, ball));
                }
            }
            let (timespan, leader, ball) = best.expect("clusters are non-empty");
            let diameter = cluster_diameter(t, &nodes);
            clusters.push(Cluster {
                nodes,
                leader,
                timespan,
                ball,
                diameter,
            });
        }
        let sets: Vec<Vec<NodeId>> = clusters.iter().map(|c| c.nodes.clone()).collect();
        let home = node_clusters
            .iter()
            .map(|c| {
                sets.iter()
                    .position(|set| c.ball.iter().all(|v| set.binary_search(v).is_ok()))
                    .expect("every cloud cluster lies in some cover cluster")
            })
            .collect();
        Ok(GraphCover {
            s,
            load: node_loads(t.n(), &sets),
            diam_max: clusters.iter().map(|c| c.diameter).max().unwrap_or(0),
            clusters,
            home,
            node_clusters,
        })
    }

    fn cloud_clusters(t: &Topology, s: u64) -> Result<(Vec<ClusterStats>, Vec<Vec<NodeId>>), FatError> {
        require_fat(t)?;
        let stats: Vec<ClusterStats> = (0..t.n()).map(|i| compute_cloud_cluster(t, i, s)).collect::<Result<_, _>>()?;
        let mut sets: Vec<Vec<NodeId>> = Vec::new();
        for c in &stats {
            let mut set = c.ball.clone();
            set.sort_unstable();
            if !sets.contains(&set) {
                sets.push(set);
            }
        }
        Ok((stats, sets))
    }

    /// One cluster per distinct cloud cluster.
    pub fn all_clusters(t: &Topology, s: u64) -> Result<Self, FatError> {
        let (stats, sets) = Self::cloud_clusters(t, s)?;
        Self::assemble(t, s, sets, stats)
    }

    /// The cloud clusters coarsened with parameter `kappa`.
    pub fn sparse(t: &Topology, s: u64, kappa: u32) -> Result<Self, FatError> {
        let (stats, sets) = Self::cloud_clusters(t, s)?;
        let coarse = sparse_cover(t.n(), &sets, kappa)?;
        Self::assemble(t, s, coarse, stats)
    }

    pub fn max_load(&self) -> usize {
        self.load.iter().copied().max().unwrap_or(0)
    }

    /// Clusters containing `v`, ascending.
    pub fn clusters_of(&self, v: NodeId) -> Vec<usize> {
        (0..self.clusters.len())
            .filter(|&c| self.clusters[c].nodes.binary_search(&v).is_ok())
            .collect()
    }

    /// Round-robin multiplexing: `v` acts for its `k`-th cluster in rounds
    /// `t` with `t mod load(v) = k`.
    pub fn slots(&self) -> Multiplex {
        let n = self.load.len();
        let mut position = vec![Vec::new(); self.clusters.len()];
        for v in 0..n {
            for (k, c) in self.clusters_of(v).into_iter().enumerate() {
                position[c].push((v, k));
            }
        }
        Multiplex {
            load: self.load.clone(),
            position: position
                .into_iter()
                .map(|list| {
                    let mut p = vec![usize::MAX; n];
                    for (v, k) in list {
                        p[v] = k;
                    }
                    p
                })
                .collect(),
        }
    }
}

/// Per-cluster round filters for nodes shared by several clusters.
#[derive(Clone, Debug)]
pub struct Multiplex {
    load: Vec<usize>,
    /// `position[c][v]`: index of cluster `c` among `v`'s clusters.
    position: Vec<Vec<usize>>,
}

impl Multiplex {
    pub fn allows(&self, cluster: usize, v: NodeId, t: Round) -> bool {
        let k = self.position[cluster][v];
        // Nodes outside the cluster (never used by it) are not throttled.
        k == usize::MAX || t as usize % self.load[v].max(1) == k
    }
}
