//! Reference computations that share no code with the crates under test.

use std::collections::HashSet;

use cwc_core::Bits;

/// Operands decoded bit by bit, least significant bit of each field first.
fn bits(x: &Bits) -> Vec<bool> {
    (0..x.len()).map(|i| x.get(i)).collect()
}

fn field(b: &[bool], off: usize, width: usize) -> u64 {
    (0..width).filter(|&k| b[off + k]).map(|k| 1u64 << k).sum()
}

fn put(b: &mut [bool], off: usize, width: usize, v: u64) {
    for k in 0..width {
        b[off + k] = (v >> k) & 1 == 1;
    }
}

fn step(op: &str, a: &[bool], b: &[bool]) -> Vec<bool> {
    let mut out = vec![false; a.len()];
    match op {
        "xor" => {
            for i in 0..a.len() {
                out[i] = a[i] != b[i];
            }
        }
        "add" => {
            for off in (0..a.len()).step_by(16) {
                put(&mut out, off, 16, (field(a, off, 16) + field(b, off, 16)) & 0xffff);
            }
        }
        "matmul2" => {
            let at = |m: &[bool], r: usize, c: usize| m[2 * r + c];
            for r in 0..2 {
                for c in 0..2 {
                    out[2 * r + c] = (at(a, r, 0) && at(b, 0, c)) != (at(a, r, 1) && at(b, 1, c));
                }
            }
        }
        "compose8" => {
            // Apply `a` first, then `b`.
            for x in 0..8 {
                let mid = field(a, 3 * x, 3) as usize;
                put(&mut out, 3 * x, 3, field(b, 3 * mid, 3));
            }
        }
        other => panic!("no oracle for {other}"),
    }
    out
}

fn unit(op: &str, size: usize) -> Vec<bool> {
    let mut u = vec![false; size];
    match op {
        "xor" | "add" => {}
        "matmul2" => {
            u[0] = true;
            u[3] = true;
        }
        "compose8" => {
            for x in 0..8 {
                put(&mut u, 3 * x, 3, x as u64);
            }
        }
        other => panic!("no oracle for {other}"),
    }
    u
}

/// Sequential left fold of `xs` under the named operator.
pub fn fold(op: &str, size: usize, xs: &[Bits]) -> Vec<bool> {
    xs.iter().fold(unit(op, size), |acc, x| step(op, &acc, &bits(x)))
}

pub fn same(value: &Bits, expected: &[bool]) -> bool {
    bits(value) == expected
}

/// A small topology for the exhaustive search: cloud bandwidth per node and
/// undirected links `(u, v, w)` usable at `w` bits per round each way.
pub struct Tiny {
    pub cloud: Vec<u64>,
    pub edges: Vec<(usize, usize, u64)>,
}

/// Fewest rounds in which `s` bits held by `source` can all be written to
/// the cloud, searched over every per-round choice of how many bits each
/// node sends on each link, writes, and keeps. Bits are interchangeable and
/// moved rather than copied: a copy never helps, since each written bit
/// needs only one route. A bit sent in a round can be forwarded or written
/// from the next round on. `None` if it takes more than `max_rounds`.
pub fn brute_force_write(g: &Tiny, source: usize, s: u64, max_rounds: u32) -> Option<u32> {
    let n = g.cloud.len();
    assert!(n < MAX_NODES && s <= u8::MAX as u64);
    let mut hops: Vec<Vec<(usize, u64)>> = vec![Vec::new(); n];
    for &(u, v, w) in &g.edges {
        hops[u].push((v, w));
        hops[v].push((u, w));
    }
    if s == 0 {
        return Some(0);
    }
    // State: bits at each node, and bits written in the last slot.
    let mut start = [0u8; MAX_NODES];
    start[source] = s as u8;
    let mut frontier: HashSet<State> = HashSet::from([start]);
    for round in 1..=max_rounds {
        let mut next = HashSet::new();
        for state in &frontier {
            next.extend(successors(state, &hops, &g.cloud));
        }
        if next.iter().any(|st| st[WRITTEN] as u64 == s) {
            return Some(round);
        }
        frontier = next;
    }
    None
}

const MAX_NODES: usize = 8;
const WRITTEN: usize = MAX_NODES - 1;
type State = [u8; MAX_NODES];

/// Every state one round after `state`. Nodes act independently on the
/// bits they hold at the start of the round, so their distinct moves are
/// added one node at a time, merging equal partial results.
fn successors(state: &State, hops: &[Vec<(usize, u64)>], cloud: &[u64]) -> HashSet<State> {
    let mut partial: HashSet<State> = HashSet::from([*state]);
    for (v, out) in hops.iter().enumerate() {
        let have = state[v] as u64;
        if have == 0 {
            continue;
        }
        let mut deltas: HashSet<(Vec<u64>, u64)> = HashSet::new();
        let mut sends = Vec::new();
        moves(have, out, 0, Vec::new(), &mut sends);
        for y in sends {
            let sent: u64 = y.iter().sum();
            for write in 0..=cloud[v].min(have - sent) {
                deltas.insert((y.clone(), write));
            }
        }
        let mut grown = HashSet::with_capacity(partial.len() * deltas.len());
        for p in &partial {
            for (y, write) in &deltas {
                let mut st = *p;
                st[v] -= (y.iter().sum::<u64>() + write) as u8;
                st[WRITTEN] += *write as u8;
                for (k, &(to, _)) in out.iter().enumerate() {
                    st[to] += y[k] as u8;
                }
                grown.insert(st);
            }
        }
        partial = grown;
    }
    partial
}

fn moves(left: u64, hops: &[(usize, u64)], k: usize, acc: Vec<u64>, out: &mut Vec<Vec<u64>>) {
    if k == hops.len() {
        out.push(acc);
        return;
    }
    for y in 0..=hops[k].1.min(left) {
        let mut a = acc.clone();
        a.push(y);
        moves(left - y, hops, k + 1, a, out);
    }
}

/// Cloud bandwidths and sorted links of a relabelled topology.
pub type Class = (Vec<u64>, Vec<(usize, usize, u64)>);

impl Tiny {
    /// The least relabelling of this topology over permutations that fix
    /// node 0, so instances with the same key have the same optimum.
    pub fn canonical(&self) -> Class {
        let n = self.cloud.len();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut best = None;
        permute(&mut perm, 1, &mut |p| {
            let mut cloud = vec![0; n];
            for v in 0..n {
                cloud[p[v]] = self.cloud[v];
            }
            let mut edges: Vec<(usize, usize, u64)> =
                self.edges.iter().map(|&(u, v, w)| (p[u].min(p[v]), p[u].max(p[v]), w)).collect();
            edges.sort_unstable();
            let key = (cloud, edges);
            if best.as_ref().is_none_or(|b| &key < b) {
                best = Some(key);
            }
        });
        best.expect("at least one permutation")
    }
}

fn permute(p: &mut Vec<usize>, k: usize, f: &mut impl FnMut(&[usize])) {
    if k >= p.len() {
        f(p);
        return;
    }
    for j in k..p.len() {
        p.swap(k, j);
        permute(p, k + 1, f);
        p.swap(k, j);
    }
}

/// Every topology on `n` nodes with link bandwidths and cloud bandwidths
/// drawn from `0..=max_bw` (a zero link is absent).
pub fn all_tiny(n: usize, max_bw: u64) -> Vec<Tiny> {
    let pairs: Vec<(usize, usize)> = (0..n).flat_map(|u| (u + 1..n).map(move |v| (u, v))).collect();
    let base = max_bw + 1;
    let link_combos = base.pow(pairs.len() as u32);
    let cloud_combos = base.pow(n as u32);
    let digits = |mut x: u64, len: usize| {
        (0..len)
            .map(|_| {
                let d = x % base;
                x /= base;
                d
            })
            .collect::<Vec<u64>>()
    };
    let mut out = Vec::new();
    for l in 0..link_combos {
        let ws = digits(l, pairs.len());
        let edges: Vec<(usize, usize, u64)> =
            pairs.iter().zip(&ws).filter(|(_, &w)| w > 0).map(|(&(u, v), &w)| (u, v, w)).collect();
        for c in 0..cloud_combos {
            out.push(Tiny { cloud: digits(c, n), edges: edges.clone() });
        }
    }
    out
}
