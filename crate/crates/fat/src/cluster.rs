//! Cloud clusters: the smallest hop ball around a node whose pooled cloud
//! bandwidth absorbs `s` bits within its own radius.

use cwc_core::builder::any_round;
use cwc_core::region::{cloud_read, cloud_write};
use cwc_core::{
    run_schedule, Bits, Mode, NodeId, Profile, Region, Round, RunTrace, Schedule, ScheduleBuilder,
    Topology,
};

use crate::FatError;

/// File moved by the single-node cluster operations.
pub const FILE: &str = "f";

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterStats {
    pub origin: NodeId,
    pub s: u64,
    /// Least `k` with `(k + 1) * b_c(ball_k) >= s`, or the graph diameter.
    pub radius: usize,
    /// Members in BFS order: by distance from the origin, then id.
    pub ball: Vec<NodeId>,
    pub cloud_bw: u64,
    /// `radius + s / cloud_bw`; infinite when the ball has no cloud access.
    pub timespan: f64,
}

pub(crate) fn require_fat(t: &Topology) -> Result<(), FatError> {
    match t.mode() {
        Mode::FatLinks { .. } => Ok(()),
        _ => Err(FatError::NotFatLinks),
    }
}

/// Hop distances from `i` inside the member set (positive-bandwidth links).
pub(crate) fn distances_within(t: &Topology, i: NodeId, inside: &[bool]) -> Vec<Option<usize>> {
    let mut dist = vec![None; t.n()];
    dist[i] = Some(0);
    let mut queue = std::collections::VecDeque::from([i]);
    while let Some(u) = queue.pop_front() {
        let d = dist[u].unwrap_or(0);
        for h in t.out_hops(u) {
            if inside[h.to] && t.link(h.link).w > 0 && dist[h.to].is_none() {
                dist[h.to] = Some(d + 1);
                queue.push_back(h.to);
            }
        }
    }
    dist
}

/// The minimal ball around `i` inside `inside` satisfying the cluster
/// inequality, with radius capped at `cap`. Returns the radius and members in
/// BFS order.
pub(crate) fn ball_within(t: &Topology, i: NodeId, s: u64, inside: &[bool], cap: usize) -> (usize, Vec<NodeId>) {
    let dist = distances_within(t, i, inside);
    let mut order: Vec<(usize, NodeId)> = dist.iter().enumerate().filter_map(|(v, d)| d.map(|d| (d, v))).collect();
    order.sort_unstable();
    let mut at_distance = vec![0u64; cap + 1];
    for &(d, v) in order.iter().filter(|x| x.0 <= cap) {
        at_distance[d] += t.cloud_bw(v);
    }
    let mut pooled = 0u64;
    let radius = (0..=cap)
        .find(|&k| {
            pooled += at_distance[k];
            (k as u64 + 1).saturating_mul(pooled) >= s
        })
        .unwrap_or(cap);
    let ball = order.iter().filter(|x| x.0 <= radius).map(|x| x.1).collect();
    (radius, ball)
}

/// The `s`-cloud cluster of node `i`.
pub fn compute_cloud_cluster(t: &Topology, i: NodeId, s: u64) -> Result<ClusterStats, FatError> {
    require_fat(t)?;
    if i >= t.n() {
        return Err(FatError::NoSuchNode(i));
    }
    let (radius, ball) = ball_within(t, i, s, &vec![true; t.n()], t.diameter());
    Ok(stats(t, i, s, radius, ball))
}

pub(crate) fn stats(t: &Topology, i: NodeId, s: u64, radius: usize, ball: Vec<NodeId>) -> ClusterStats {
    let cloud_bw: u64 = ball.iter().map(|&v| t.cloud_bw(v)).sum();
    let timespan = if s == 0 {
        radius as f64
    } else if cloud_bw == 0 {
        f64::INFINITY
    } else {
        radius as f64 + s as f64 / cloud_bw as f64
    };
    ClusterStats {
        origin: i,
        s,
        radius,
        ball,
        cloud_bw,
        timespan,
    }
}

/// `max_i Z_i` over all nodes.
pub fn z_max(t: &Topology, s: u64) -> Result<f64, FatError> {
    (0..t.n())
        .map(|i| compute_cloud_cluster(t, i, s).map(|c| c.timespan))
        .try_fold(0.0f64, |m, z| z.map(|z| m.max(z)))
}

#[derive(Clone, Debug)]
pub struct ClusterRun {
    pub rounds: Round,
    pub cluster: ClusterStats,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

fn execute(t: &Topology, cluster: ClusterStats, b: ScheduleBuilder) -> Result<ClusterRun, FatError> {
    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    Ok(ClusterRun {
        rounds: trace.rounds_elapsed,
        cluster,
        schedule,
        trace,
    })
}

/// CloudWrite of `s` bits held by `i`, spread over a BFS tree of its
/// cluster with an acknowledgement convergecast.
pub fn cloud_write_cluster(t: &Topology, i: NodeId, s: u64, content: Option<&Bits>) -> Result<ClusterRun, FatError> {
    let c = compute_cloud_cluster(t, i, s)?;
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("S", s);
    b.hold(i, x);
    if let Some(v) = content {
        b.set_value(x, v.clone());
    }
    let f = b.file(FILE);
    if s > 0 {
        let region = Region::bfs(t, i, &c.ball);
        cloud_write(&mut b, &region, x, s, f, &Profile::ready(0, s), true, &any_round)?;
    }
    execute(t, c, b)
}

/// CloudRead of the `s`-bit file [`FILE`] into `i` through its cluster.
pub fn cloud_read_cluster(t: &Topology, i: NodeId, s: u64, content: Option<&Bits>) -> Result<ClusterRun, FatError> {
    let c = compute_cloud_cluster(t, i, s)?;
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("S", s);
    if let Some(v) = content {
        b.set_value(x, v.clone());
    }
    let f = b.file(FILE);
    b.preload(f, x);
    if s > 0 {
        let region = Region::bfs(t, i, &c.ball);
        cloud_read(&mut b, &region, f, x, s, &Profile::ready(0, s), 0, &any_round)?;
    }
    execute(t, c, b)
}
