//! Processing nodes, local links and the cloud links that attach every node to
//! the single passive storage node.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub type NodeId = usize;
pub type Round = u32;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LinkId(pub u32);

impl LinkId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Mode {
    /// Ring links `(i, i+1 mod n)` plus a cloud link per node.
    Wheel,
    /// Every local link is symmetric with bandwidth at least `s`.
    FatLinks { s: u64 },
    General,
}

/// A local link. Undirected links are full duplex: each direction has its own
/// budget of `w` bits per round.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Link {
    pub u: NodeId,
    pub v: NodeId,
    pub w: u64,
    pub directed: bool,
}

/// One hop of a route: `link` traversed from `from` to `to`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Hop {
    pub link: LinkId,
    pub from: NodeId,
    pub to: NodeId,
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TopologyError {
    #[error("bandwidth `{field}` is not a non-negative integer: {value}")]
    NonIntegerBandwidth { field: String, value: String },
    #[error("link ({u},{v}) has bandwidth {w} < s = {s} in fat-links mode")]
    FatLinkTooThin { u: NodeId, v: NodeId, w: u64, s: u64 },
    #[error("wheel is missing ring edges: {0}")]
    BrokenRing(String),
    #[error("invalid topology: {0}")]
    Invalid(String),
}

/// JSON description of a topology:
/// `{"mode": "wheel" | "fat-links" | "general", "n": .., "s": .., "cloud_bw": [..] | b,
///   "local_bw": [..] | b, "edges": [[u, v], ..], "directed": false}`.
///
/// Wheels take their edges from the ring; `local_bw[i]` is the bandwidth of `(i, i+1)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologySpec {
    pub mode: String,
    pub n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub s: Option<u64>,
    pub cloud_bw: Value,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub local_bw: Option<Value>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub edges: Option<Vec<(NodeId, NodeId)>>,
    #[serde(default)]
    pub directed: bool,
}

impl TopologySpec {
    pub fn uniform_wheel(n: usize, bc: u64, bl: u64) -> Self {
        TopologySpec {
            mode: "wheel".into(),
            n,
            s: None,
            cloud_bw: Value::from(bc),
            local_bw: Some(Value::from(bl)),
            edges: None,
            directed: false,
        }
    }

    pub fn wheel(cloud: &[u64], local: &[u64]) -> Self {
        TopologySpec {
            mode: "wheel".into(),
            n: cloud.len(),
            s: None,
            cloud_bw: Value::from(cloud.to_vec()),
            local_bw: Some(Value::from(local.to_vec())),
            edges: None,
            directed: false,
        }
    }

    pub fn fat_links(s: u64, cloud: &[u64], edges: &[(NodeId, NodeId, u64)]) -> Self {
        TopologySpec {
            mode: "fat-links".into(),
            n: cloud.len(),
            s: Some(s),
            cloud_bw: Value::from(cloud.to_vec()),
            local_bw: Some(Value::from(edges.iter().map(|e| e.2).collect::<Vec<_>>())),
            edges: Some(edges.iter().map(|e| (e.0, e.1)).collect()),
            directed: false,
        }
    }

    pub fn general(cloud: &[u64], edges: &[(NodeId, NodeId, u64)], directed: bool) -> Self {
        TopologySpec {
            mode: "general".into(),
            n: cloud.len(),
            s: None,
            cloud_bw: Value::from(cloud.to_vec()),
            local_bw: Some(Value::from(edges.iter().map(|e| e.2).collect::<Vec<_>>())),
            edges: Some(edges.iter().map(|e| (e.0, e.1)).collect()),
            directed,
        }
    }
}

fn bandwidth(field: &str, v: &Value) -> Result<u64, TopologyError> {
    v.as_u64().ok_or_else(|| TopologyError::NonIntegerBandwidth {
        field: field.to_string(),
        value: v.to_string(),
    })
}

/// Expands a scalar or an array into exactly `len` bandwidths.
fn bandwidth_table(field: &str, v: &Value, len: usize) -> Result<Vec<u64>, TopologyError> {
    match v {
        Value::Array(items) => {
            if items.len() != len {
                return Err(TopologyError::Invalid(format!(
                    "`{field}` has {} entries, expected {len}",
                    items.len()
                )));
            }
            items
                .iter()
                .enumerate()
                .map(|(k, x)| bandwidth(&format!("{field}[{k}]"), x))
                .collect()
        }
        other => Ok(vec![bandwidth(field, other)?; len]),
    }
}

pub fn build_topology(spec: &TopologySpec) -> Result<Topology, TopologyError> {
    if spec.n == 0 {
        return Err(TopologyError::Invalid("n must be at least 1".into()));
    }
    let cloud = bandwidth_table("cloud_bw", &spec.cloud_bw, spec.n)?;
    match spec.mode.as_str() {
        "wheel" => {
            let ring = if spec.n >= 2 { spec.n } else { 0 };
            if let Some(edges) = &spec.edges {
                let expected: Vec<_> = (0..ring).map(|i| (i, (i + 1) % spec.n)).collect();
                if *edges != expected {
                    return Err(TopologyError::BrokenRing(format!(
                        "edges must be exactly (i, i+1 mod n) for i in 0..{}",
                        spec.n
                    )));
                }
            }
            let local = match &spec.local_bw {
                Some(Value::Array(items)) if items.len() != ring => {
                    return Err(TopologyError::BrokenRing(format!(
                        "{} ring bandwidths given for {} ring edges",
                        items.len(),
                        ring
                    )))
                }
                Some(v) => bandwidth_table("local_bw", v, ring)?,
                None if ring == 0 => Vec::new(),
                None => return Err(TopologyError::BrokenRing("no ring bandwidths".into())),
            };
            Ok(Topology::wheel(&cloud, &local))
        }
        "fat-links" | "general" => {
            let edges = spec.edges.clone().unwrap_or_default();
            let local = match &spec.local_bw {
                Some(v) => bandwidth_table("local_bw", v, edges.len())?,
                None if edges.is_empty() => Vec::new(),
                None => return Err(TopologyError::Invalid("missing `local_bw`".into())),
            };
            let links: Vec<_> = edges
                .iter()
                .zip(&local)
                .map(|(&(u, v), &w)| (u, v, w))
                .collect();
            if spec.mode == "fat-links" {
                if spec.directed {
                    return Err(TopologyError::Invalid(
                        "fat links are symmetric and cannot be directed".into(),
                    ));
                }
                let s = spec
                    .s
                    .ok_or_else(|| TopologyError::Invalid("fat-links mode needs `s`".into()))?;
                Topology::fat_links(s, &cloud, &links)
            } else {
                Topology::general(&cloud, &links, spec.directed)
            }
        }
        other => Err(TopologyError::Invalid(format!("unknown mode `{other}`"))),
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Topology {
    mode: Mode,
    links: Vec<Link>,
    cloud: Vec<u64>,
    /// Per node, the hops that leave it.
    out: Vec<Vec<Hop>>,
}

impl Topology {
    /// Builds a wheel; `local[i]` is the bandwidth of ring link `(i, i+1 mod n)`.
    /// A single node has no ring links.
    pub fn wheel(cloud: &[u64], local: &[u64]) -> Self {
        let n = cloud.len();
        let ring = if n >= 2 { n } else { 0 };
        assert_eq!(local.len(), ring, "wheel needs one bandwidth per ring link");
        let links = (0..ring)
            .map(|i| Link {
                u: i,
                v: (i + 1) % n,
                w: local[i],
                directed: false,
            })
            .collect();
        Topology::assemble(Mode::Wheel, cloud.to_vec(), links)
    }

    pub fn uniform_wheel(n: usize, bc: u64, bl: u64) -> Self {
        let ring = if n >= 2 { n } else { 0 };
        Topology::wheel(&vec![bc; n], &vec![bl; ring])
    }

    pub fn fat_links(
        s: u64,
        cloud: &[u64],
        edges: &[(NodeId, NodeId, u64)],
    ) -> Result<Self, TopologyError> {
        let t = Topology::general(cloud, edges, false)?;
        for l in &t.links {
            if l.w < s {
                return Err(TopologyError::FatLinkTooThin {
                    u: l.u,
                    v: l.v,
                    w: l.w,
                    s,
                });
            }
        }
        Ok(Topology::assemble(Mode::FatLinks { s }, t.cloud, t.links))
    }

    pub fn general(
        cloud: &[u64],
        edges: &[(NodeId, NodeId, u64)],
        directed: bool,
    ) -> Result<Self, TopologyError> {
        let n = cloud.len();
        let mut links = Vec::with_capacity(edges.len());
        for &(u, v, w) in edges {
            if u >= n || v >= n {
                return Err(TopologyError::Invalid(format!(
                    "edge ({u},{v}) names a node outside 0..{n}"
                )));
            }
            if u == v {
                return Err(TopologyError::Invalid(format!("self-loop at node {u}")));
            }
            links.push(Link { u, v, w, directed });
        }
        Ok(Topology::assemble(Mode::General, cloud.to_vec(), links))
    }

    fn assemble(mode: Mode, cloud: Vec<u64>, links: Vec<Link>) -> Self {
        let mut out = vec![Vec::new(); cloud.len()];
        for (k, l) in links.iter().enumerate() {
            let link = LinkId(k as u32);
            out[l.u].push(Hop {
                link,
                from: l.u,
                to: l.v,
            });
            if !l.directed {
                out[l.v].push(Hop {
                    link,
                    from: l.v,
                    to: l.u,
                });
            }
        }
        Topology {
            mode,
            links,
            cloud,
            out,
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn n(&self) -> usize {
        self.cloud.len()
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn link(&self, id: LinkId) -> &Link {
        &self.links[id.index()]
    }

    pub fn cloud_bw(&self, i: NodeId) -> u64 {
        self.cloud[i]
    }

    pub fn cloud_bws(&self) -> &[u64] {
        &self.cloud
    }

    pub fn total_cloud_bw(&self) -> u64 {
        self.cloud.iter().sum()
    }

    /// Hops leaving `i`, in link order.
    pub fn out_hops(&self, i: NodeId) -> &[Hop] {
        &self.out[i]
    }

    /// Whether `from -> to` over `link` is a legal direction.
    pub fn allows(&self, link: LinkId, from: NodeId, to: NodeId) -> bool {
        self.links.get(link.index()).is_some_and(|l| {
            (l.u == from && l.v == to) || (!l.directed && l.v == from && l.u == to)
        })
    }

    /// Ring link `(i, i+1 mod n)` of a wheel.
    pub fn ring_link(&self, i: NodeId) -> LinkId {
        debug_assert_eq!(self.mode, Mode::Wheel);
        LinkId((i % self.n()) as u32)
    }

    /// The same graph with every directed link reversed.
    pub fn transposed(&self) -> Topology {
        let links = self
            .links
            .iter()
            .map(|l| {
                if l.directed {
                    Link {
                        u: l.v,
                        v: l.u,
                        ..*l
                    }
                } else {
                    *l
                }
            })
            .collect();
        Topology::assemble(self.mode, self.cloud.clone(), links)
    }

    /// The subgraph induced by `nodes`, relabelled `0..nodes.len()` in the given
    /// order. Returns the subgraph and, per new link, the original link id.
    pub fn induced(&self, nodes: &[NodeId]) -> (Topology, Vec<LinkId>) {
        let mut index = vec![usize::MAX; self.n()];
        for (k, &v) in nodes.iter().enumerate() {
            index[v] = k;
        }
        let mut links = Vec::new();
        let mut origin = Vec::new();
        for (k, l) in self.links.iter().enumerate() {
            if index[l.u] != usize::MAX && index[l.v] != usize::MAX {
                links.push(Link {
                    u: index[l.u],
                    v: index[l.v],
                    ..*l
                });
                origin.push(LinkId(k as u32));
            }
        }
        let cloud = nodes.iter().map(|&v| self.cloud[v]).collect();
        let mode = match self.mode {
            Mode::Wheel => Mode::General,
            m => m,
        };
        (Topology::assemble(mode, cloud, links), origin)
    }

    /// Hop distances from `src` over links with positive bandwidth
    /// (`None` = unreachable).
    pub fn hop_distances(&self, src: NodeId) -> Vec<Option<usize>> {
        let mut dist = vec![None; self.n()];
        dist[src] = Some(0);
        let mut queue = VecDeque::from([src]);
        while let Some(u) = queue.pop_front() {
            let d = dist[u].unwrap_or(0);
            for h in &self.out[u] {
                if self.links[h.link.index()].w > 0 && dist[h.to].is_none() {
                    dist[h.to] = Some(d + 1);
                    queue.push_back(h.to);
                }
            }
        }
        dist
    }

    /// Largest finite hop distance between any two nodes.
    pub fn diameter(&self) -> usize {
        (0..self.n())
            .flat_map(|i| self.hop_distances(i))
            .flatten()
            .max()
            .unwrap_or(0)
    }

    /// Capacity of the cut around `set`: bits per round that can leave it over
    /// local links, and bits per round its members can write to the cloud.
    pub fn cut_capacity(&self, set: &[NodeId]) -> CutCapacity {
        let mut inside = vec![false; self.n()];
        for &v in set {
            inside[v] = true;
        }
        let local = set
            .iter()
            .flat_map(|&u| &self.out[u])
            .filter(|h| !inside[h.to])
            .map(|h| self.links[h.link.index()].w)
            .sum();
        let cloud = set.iter().map(|&u| self.cloud[u]).sum();
        CutCapacity { local, cloud }
    }

    /// A lower bound on moving `s` bits between node `i` and the cloud (either
    /// direction): the least `R` such that the nodes reachable from `i` can move
    /// `s` bits through their cloud links within `R` rounds, where a node `d`
    /// hops away has only `R - d` rounds left.
    pub fn reach_lower_bound(&self, i: NodeId, s: u64) -> Option<Round> {
        if s == 0 {
            return Some(0);
        }
        let dist = self.hop_distances(i);
        let reach: Vec<(usize, u64)> = dist
            .iter()
            .zip(&self.cloud)
            .filter_map(|(d, &b)| d.map(|d| (d, b)))
            .filter(|&(_, b)| b > 0)
            .collect();
        if reach.is_empty() {
            return None;
        }
        let capacity = |r: u64| -> u64 {
            reach
                .iter()
                .map(|&(d, b)| b.saturating_mul(r.saturating_sub(d as u64)))
                .fold(0u64, |a, x| a.saturating_add(x))
        };
        let (mut lo, mut hi) = (1u64, 1u64);
        while capacity(hi) < s {
            hi *= 2;
        }
        while lo < hi {
            let mid = (lo + hi) / 2;
            if capacity(mid) >= s {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        Some(lo as Round)
    }

    /// Compact summary of a bandwidth table: `"b"` when uniform, `"lo-hi"` otherwise.
    pub fn describe_range(values: impl IntoIterator<Item = u64>) -> String {
        let v: Vec<u64> = values.into_iter().collect();
        match (v.iter().min(), v.iter().max()) {
            (Some(lo), Some(hi)) if lo == hi => lo.to_string(),
            (Some(lo), Some(hi)) => format!("{lo}-{hi}"),
            _ => String::new(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CutCapacity {
    pub local: u64,
    pub cloud: u64,
}

impl CutCapacity {
    pub fn total(self) -> u64 {
        self.local + self.cloud
    }
}
