//! Seeded random topologies for sweeps and tests.

use cwc_core::{build_topology, NodeId, Topology, TopologySpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Inclusive bandwidth range `[lo, hi]`.
pub type Range2 = [u64; 2];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum RandomTopology {
    Wheel {
        n: usize,
        cloud: Range2,
        local: Range2,
    },
    /// Random spanning tree plus `extra_edges` chords; every link carries
    /// between `s` and `s + slack` bits.
    FatLinks {
        n: usize,
        cloud: Range2,
        #[serde(default)]
        extra_edges: usize,
        #[serde(default)]
        slack: u64,
    },
    General {
        n: usize,
        cloud: Range2,
        local: Range2,
        #[serde(default)]
        extra_edges: usize,
        #[serde(default)]
        directed: bool,
    },
}

/// Where a run's topology comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TopologySource {
    Random { random: RandomTopology },
    Spec(TopologySpec),
}

impl TopologySource {
    /// `s` sizes the links of random fat-links graphs.
    pub fn build(&self, seed: u64, s: u64) -> Result<Topology, CliError> {
        match self {
            TopologySource::Spec(spec) => Ok(build_topology(spec)?),
            TopologySource::Random { random } => random.build(seed, s),
        }
    }

    /// Node count, if known without building.
    pub fn n(&self) -> usize {
        match self {
            TopologySource::Spec(spec) => spec.n,
            TopologySource::Random { random } => match random {
                RandomTopology::Wheel { n, .. }
                | RandomTopology::FatLinks { n, .. }
                | RandomTopology::General { n, .. } => *n,
            },
        }
    }
}

impl RandomTopology {
    pub fn build(&self, seed: u64, s: u64) -> Result<Topology, CliError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let check = |n: usize, r: &Range2| {
            if n == 0 || r[0] > r[1] {
                Err(CliError::Invalid(format!("bad random topology: n={n}, range {r:?}")))
            } else {
                Ok(())
            }
        };
        match *self {
            RandomTopology::Wheel { n, cloud, local } => {
                check(n, &cloud)?;
                check(n, &local)?;
                Ok(random_wheel(&mut rng, n, cloud, local))
            }
            RandomTopology::FatLinks { n, cloud, extra_edges, slack } => {
                check(n, &cloud)?;
                Ok(random_fat(&mut rng, n, s, cloud, extra_edges, slack))
            }
            RandomTopology::General { n, cloud, local, extra_edges, directed } => {
                check(n, &cloud)?;
                check(n, &local)?;
                let edges = random_edges(&mut rng, n, extra_edges)
                    .into_iter()
                    .map(|(u, v)| (u, v, rng.gen_range(local[0]..=local[1])))
                    .collect::<Vec<_>>();
                let cloud: Vec<u64> = (0..n).map(|_| rng.gen_range(cloud[0]..=cloud[1])).collect();
                Ok(Topology::general(&cloud, &edges, directed)?)
            }
        }
    }
}

pub fn random_wheel(rng: &mut impl Rng, n: usize, cloud: Range2, local: Range2) -> Topology {
    let c: Vec<u64> = (0..n).map(|_| rng.gen_range(cloud[0]..=cloud[1])).collect();
    let ring = if n >= 2 { n } else { 0 };
    let l: Vec<u64> = (0..ring).map(|_| rng.gen_range(local[0]..=local[1])).collect();
    Topology::wheel(&c, &l)
}

/// A random spanning tree (each node hangs off an earlier one) plus up to
/// `extra` distinct chords.
pub fn random_edges(rng: &mut impl Rng, n: usize, extra: usize) -> Vec<(NodeId, NodeId)> {
    let mut edges: Vec<(NodeId, NodeId)> = (1..n).map(|v| (rng.gen_range(0..v), v)).collect();
    if n >= 3 {
        for _ in 0..extra {
            let u = rng.gen_range(0..n);
            let v = rng.gen_range(0..n);
            let (a, b) = (u.min(v), u.max(v));
            if a != b && !edges.iter().any(|&(x, y)| (x.min(y), x.max(y)) == (a, b)) {
                edges.push((a, b));
            }
        }
    }
    edges
}

/// Connected fat-links graph. When the cloud range allows it, one random
/// node is guaranteed positive cloud bandwidth.
pub fn random_fat(rng: &mut impl Rng, n: usize, s: u64, cloud: Range2, extra: usize, slack: u64) -> Topology {
    let edges: Vec<(NodeId, NodeId, u64)> = random_edges(rng, n, extra)
        .into_iter()
        .map(|(u, v)| (u, v, s + rng.gen_range(0..=slack)))
        .collect();
    let mut c: Vec<u64> = (0..n).map(|_| rng.gen_range(cloud[0]..=cloud[1])).collect();
    if cloud[1] > 0 {
        let k = rng.gen_range(0..n);
        c[k] = c[k].max(1);
    }
    Topology::fat_links(s, &c, &edges).expect("links are at least s wide")
}
