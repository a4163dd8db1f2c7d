//! The acceptance criteria, one test each. Every test prints a single
//! `PASS`/`FAIL` line; run with `--nocapture` to see them.

mod support;

use std::collections::HashMap;
use std::path::PathBuf;

use cwc_apps::{federated_sum, masked_histogram, modular_sum, uniformity_p_value};
use cwc_cli::gen::{random_edges, random_fat, random_wheel};
use cwc_cli::{run_plan, ExperimentPlan};
use cwc_core::{ceil_log2, Bits, CombineOp, ItemId, NodeId, Topology};
use cwc_fat::cover::{cluster_diameter, node_loads};
use cwc_fat::{combined_write_fat, combined_write_generic, compute_cloud_cluster, sparse_cover, z_max, FatOptions};
use cwc_flow::{quickest_write_schedule, FlowError};
use cwc_wheel::cover::{arcs_intersect, load};
use cwc_wheel::{
    best_interval, cloud_write_interval, cloudcast_wheel, combined_write_modular, combined_write_wheel,
    wheel_lower_bound, CombineOptions, Direction, RingCover,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use support::oracle;

/// Prints the criterion's line and fails the test on any failure.
fn verdict(k: u32, title: &str, failures: &[String], summary: String) {
    if failures.is_empty() {
        println!("PASS criterion {k}: {title} ({summary})");
    } else {
        println!("FAIL criterion {k}: {title} ({} failures; first: {})", failures.len(), failures[0]);
        panic!("criterion {k} failed: {failures:#?}");
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn log_n(n: usize) -> f64 {
    ceil_log2(n).max(1) as f64
}

/// A wheel of the first criterion's sweep, with its payload size.
struct Case {
    label: String,
    t: Topology,
    s: u64,
}

fn grid_wheels() -> Vec<Case> {
    let mut cases = Vec::new();
    for n in [4, 8, 16, 64] {
        for s in [8, 64, 1024] {
            for (bc, bl) in [(1, 4), (2, 16), (4, 4)] {
                cases.push(Case {
                    label: format!("uniform n={n} s={s} b_c={bc} b_l={bl}"),
                    t: Topology::uniform_wheel(n, bc, bl),
                    s,
                });
            }
        }
    }
    for k in 0..20u64 {
        let mut r = rng(1000 + k);
        let n = [4, 8, 16, 64][k as usize % 4];
        let s = [8, 64, 1024][k as usize % 3];
        let mut t = random_wheel(&mut r, n, [0, 4], [1, 32]);
        if t.total_cloud_bw() == 0 {
            let mut cloud = t.cloud_bws().to_vec();
            cloud[r.gen_range(0..n)] = 1;
            let local: Vec<u64> = t.links().iter().map(|l| l.w).collect();
            t = Topology::wheel(&cloud, &local);
        }
        cases.push(Case { label: format!("seeded wheel {k} n={n} s={s}"), t, s });
    }
    cases
}

/// Largest per-node lower bound, each node taking its cheaper direction.
fn max_node_lower_bound(t: &Topology, s: u64) -> u32 {
    (0..t.n())
        .map(|i| {
            let cw = wheel_lower_bound(t, i, s, Direction::Clockwise).unwrap();
            let ccw = wheel_lower_bound(t, i, s, Direction::Counterclockwise).unwrap();
            cw.min(ccw)
        })
        .max()
        .unwrap()
}

#[test]
fn criterion_01_wheel_cloud_write_sandwich() {
    let cases = grid_wheels();
    let results: Vec<(Vec<String>, f64)> = cases
        .par_iter()
        .map(|c| {
            let mut fails = Vec::new();
            let mut worst = 0.0f64;
            for i in 0..c.t.n() {
                let run = cloud_write_interval(&c.t, i, c.s, None, None).unwrap();
                let z = best_interval(&c.t, i, c.s).unwrap().timespan;
                let lb = wheel_lower_bound(&c.t, i, c.s, run.interval.direction).unwrap();
                worst = worst.max(run.rounds as f64 / z);
                if run.rounds < lb || run.rounds as f64 > 8.0 * z {
                    fails.push(format!("{} node {i}: rounds {} not in [{lb}, 8*{z:.3}]", c.label, run.rounds));
                }
            }
            (fails, worst)
        })
        .collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let fails: Vec<String> = results.into_iter().flat_map(|r| r.0).collect();
    verdict(
        1,
        "wheel CloudWrite between its lower bound and 8 Z_i",
        &fails,
        format!("{} wheels, every node; max rounds/Z_i = {worst:.3}", cases.len()),
    );
}

#[test]
fn criterion_02_cloudcast_datapoint() {
    let t = Topology::uniform_wheel(256, 16, 64);
    let content = Bits::random(256, &mut rng(2));
    let run = cloudcast_wheel(&t, 256, Some(&content)).unwrap();
    let mut fails = Vec::new();
    if run.rounds > 32 {
        fails.push(format!("{} rounds", run.rounds));
    }
    if !(0..256).all(|v| run.trace.holds(v, ItemId(0))) || run.trace.value(ItemId(0)) != Some(&content) {
        fails.push("some node lacks the file".into());
    }
    verdict(2, "CloudCast n=256 s=256 b_c=16 b_l=64 within 32 rounds", &fails, format!("{} rounds", run.rounds));
}

const OPS: [&str; 4] = ["xor", "add", "matmul2", "compose8"];

fn operand_size(op: &str, r: &mut ChaCha8Rng) -> usize {
    match op {
        "xor" => r.gen_range(1..=64),
        "add" => 16 * r.gen_range(1..=4),
        "matmul2" => 4,
        _ => 24,
    }
}

/// One combining run on a fresh seeded instance; `Ok(true)` on a match.
fn combine_instance(path: &str, op_name: &str, seed: u64) -> Result<bool, String> {
    let mut r = rng(seed);
    let size = operand_size(op_name, &mut r);
    let n = r.gen_range(1..=16);
    let op = CombineOp::by_name(op_name, size).map_err(|e| e.to_string())?;
    let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut r)).collect();
    let expected = oracle::fold(op_name, size, &xs);
    let value = match path {
        "wheel" => {
            let t = random_wheel(&mut r, n, [1, 4], [1, 32]);
            combined_write_wheel(&t, &op, Some(&xs)).map_err(|e| e.to_string())?.value
        }
        "modular" => {
            let t = random_wheel(&mut r, n, [1, 4], [1, 32]);
            let natural = op.natural_grain();
            let grain = natural * r.gen_range(1..=size / natural);
            let op = op.with_grain(grain).map_err(|e| e.to_string())?;
            combined_write_modular(&t, &op, Some(&xs), CombineOptions::default()).map_err(|e| e.to_string())?.value
        }
        "fat" => {
            let t = random_fat(&mut r, n, size as u64, [0, 3], n / 2, 4);
            combined_write_fat(&t, &op, Some(&xs), FatOptions::default()).map_err(|e| e.to_string())?.value
        }
        _ => {
            let edges: Vec<(NodeId, NodeId, u64)> =
                random_edges(&mut r, n, n).into_iter().map(|(u, v)| (u, v, r.gen_range(1..=8))).collect();
            let mut cloud: Vec<u64> = (0..n).map(|_| r.gen_range(0..=3)).collect();
            let k = r.gen_range(0..n);
            cloud[k] = cloud[k].max(1);
            let t = Topology::general(&cloud, &edges, false).map_err(|e| e.to_string())?;
            combined_write_generic(&t, &op, Some(&xs)).map_err(|e| e.to_string())?.value
        }
    };
    Ok(value.is_some_and(|v| oracle::same(&v, &expected)))
}

#[test]
fn criterion_03_combining_matches_fold() {
    let jobs: Vec<(&str, &str, u64)> = ["wheel", "modular", "fat", "generic"]
        .into_iter()
        .flat_map(|p| OPS.into_iter().flat_map(move |o| (0..50).map(move |k| (p, o, 3_000 + k))))
        .collect();
    let fails: Vec<String> = jobs
        .par_iter()
        .filter_map(|&(p, o, seed)| match combine_instance(p, o, seed) {
            Ok(true) => None,
            Ok(false) => Some(format!("{p}/{o} seed {seed}: mismatch")),
            Err(e) => Some(format!("{p}/{o} seed {seed}: {e}")),
        })
        .collect();
    verdict(3, "every combining path equals the sequential fold", &fails, format!("{} instances", jobs.len()));
}

#[test]
fn criterion_04_wheel_combining_bound() {
    let cases = grid_wheels();
    let results: Vec<(Option<String>, f64)> = cases
        .par_iter()
        .map(|c| {
            let op = CombineOp::xor(c.s as usize).unwrap();
            let xs: Vec<Bits> = (0..c.t.n()).map(|_| op.random_operand(&mut rng(c.s))).collect();
            let run = combined_write_wheel(&c.t, &op, Some(&xs)).unwrap();
            let z = RingCover::build(&c.t, c.s).unwrap().worst.timespan;
            let ub = 16.0 * z * log_n(c.t.n());
            let lb = max_node_lower_bound(&c.t, c.s);
            let right = run.value.as_ref().is_some_and(|v| oracle::same(v, &oracle::fold("xor", c.s as usize, &xs)));
            let fail = (!right || run.rounds as f64 > ub || run.rounds < lb)
                .then(|| format!("{}: rounds {} not in [{lb}, {ub:.3}] or wrong value", c.label, run.rounds));
            (fail, run.rounds as f64 / ub)
        })
        .collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let fails: Vec<String> = results.into_iter().filter_map(|r| r.0).collect();
    verdict(
        4,
        "holistic combining within 16 Z_max ceil(log n) and above the max-node lower bound",
        &fails,
        format!("{} wheels; max rounds/bound = {worst:.3}", cases.len()),
    );
}

#[test]
fn criterion_05_modular_speedup() {
    let s = 4096;
    let rows: Vec<(usize, u32, u32)> = [16, 64, 256]
        .par_iter()
        .map(|&n| {
            let t = Topology::uniform_wheel(n, 2, 64);
            let op = CombineOp::xor(s).unwrap();
            let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut rng(n as u64))).collect();
            let holistic = combined_write_wheel(&t, &op, Some(&xs)).unwrap();
            let grained = op.with_grain(8).unwrap();
            let modular = combined_write_modular(&t, &grained, Some(&xs), CombineOptions::default()).unwrap();
            assert_eq!(holistic.value, modular.value);
            (n, holistic.rounds, modular.rounds)
        })
        .collect();
    let mut fails = Vec::new();
    for &(n, h, m) in &rows {
        if m >= h {
            fails.push(format!("n={n}: modular {m} >= holistic {h}"));
        }
    }
    for w in rows.windows(2) {
        let (g0, g1) = (w[0].1 as i64 - w[0].2 as i64, w[1].1 as i64 - w[1].2 as i64);
        if g1 <= g0 {
            fails.push(format!("gap {g0} at n={} does not grow to n={} ({g1})", w[0].0, w[1].0));
        }
    }
    let summary = rows.iter().map(|(n, h, m)| format!("n={n}: {h} vs {m}")).collect::<Vec<_>>().join(", ");
    verdict(5, "modular beats holistic with a gap growing in log n", &fails, summary);
}

#[test]
fn criterion_06_cover_invariants() {
    let circle: Vec<String> = (0..1000u64)
        .into_par_iter()
        .filter_map(|k| {
            let mut r = rng(6_000 + k);
            let n = r.gen_range(3..=64);
            let s = r.gen_range(1..=2048);
            let mut t = random_wheel(&mut r, n, [0, 4], [1, 64]);
            if t.total_cloud_bw() == 0 {
                let mut cloud = t.cloud_bws().to_vec();
                cloud[0] = 1;
                t = Topology::wheel(&cloud, &t.links().iter().map(|l| l.w).collect::<Vec<_>>());
            }
            let cover = match RingCover::build(&t, s) {
                Ok(c) => c,
                Err(e) => return Some(format!("circle {k}: {e}")),
            };
            let loads = load(n, &cover.arcs);
            if loads.iter().any(|&l| !(1..=2).contains(&l)) {
                return Some(format!("circle {k}: loads {loads:?}"));
            }
            for a in 0..cover.arcs.len() {
                for b in a + 1..cover.arcs.len() {
                    let clash = arcs_intersect(n, &cover.arcs[a], &cover.arcs[b]) && cover.colors[a] == cover.colors[b];
                    if clash || cover.colors[a] > 2 {
                        return Some(format!("circle {k}: arcs {a} and {b} share colour {}", cover.colors[a]));
                    }
                }
            }
            None
        })
        .collect();
    let sparse: Vec<String> = (0..200u64)
        .into_par_iter()
        .flat_map_iter(|k| {
            let mut r = rng(7_000 + k);
            let n = r.gen_range(2..=32);
            let s = [8, 32, 128][r.gen_range(0..3)];
            let extra = r.gen_range(0..=n);
            let t = random_fat(&mut r, n, s, [0, 3], extra, 4);
            let kappas = [1, 2, ceil_log2(n).max(1)];
            kappas.into_iter().filter_map(move |kappa| sparse_cover_failure(&t, s, kappa).map(|f| format!("graph {k}, kappa {kappa}: {f}")))
        })
        .collect();
    let fails: Vec<String> = circle.into_iter().chain(sparse).collect();
    verdict(
        6,
        "circle covers have load 1-2 and a proper 3-colouring; sparse covers keep containment, diameter and load",
        &fails,
        "1000 circle covers, 200 graphs x 3 kappas".into(),
    );
}

fn sparse_cover_failure(t: &Topology, s: u64, kappa: u32) -> Option<String> {
    let mut inputs: Vec<Vec<NodeId>> = Vec::new();
    for i in 0..t.n() {
        let mut set = match compute_cloud_cluster(t, i, s) {
            Ok(c) => c.ball,
            Err(e) => return Some(e.to_string()),
        };
        set.sort_unstable();
        if !inputs.contains(&set) {
            inputs.push(set);
        }
    }
    let cover = match sparse_cover(t.n(), &inputs, kappa) {
        Ok(c) => c,
        Err(e) => return Some(e.to_string()),
    };
    let diam_in = inputs.iter().map(|c| cluster_diameter(t, c)).max().unwrap_or(0);
    for set in &inputs {
        if !cover.iter().any(|c| set.iter().all(|v| c.contains(v))) {
            return Some(format!("cluster {set:?} not contained"));
        }
    }
    for c in &cover {
        let d = cluster_diameter(t, c);
        if d > 4 * kappa as usize * diam_in {
            return Some(format!("diameter {d} > 4*{kappa}*{diam_in}"));
        }
    }
    let cap = 2.0 * kappa as f64 * (inputs.len() as f64).powf(1.0 / kappa as f64);
    let max_load = node_loads(t.n(), &cover).into_iter().max().unwrap_or(0);
    (max_load as f64 > cap + 1e-9).then(|| format!("load {max_load} > {cap:.3}"))
}

#[test]
fn criterion_07_fat_combining_bound() {
    let results: Vec<(Option<String>, f64)> = (0..20u64)
        .into_par_iter()
        .map(|k| {
            let mut r = rng(8_000 + k);
            let n = r.gen_range(2..=32);
            let s = [16, 64, 256][k as usize % 3];
            let extra = r.gen_range(0..=n);
            let t = random_fat(&mut r, n, s, [0, 3], extra, 8);
            let op = CombineOp::xor(s as usize).unwrap();
            let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut r)).collect();
            let run = combined_write_fat(&t, &op, Some(&xs), FatOptions::default()).unwrap();
            let z = z_max(&t, s).unwrap();
            let ub = 32.0 * z * log_n(n) * log_n(n);
            let right = run.value.as_ref().is_some_and(|v| oracle::same(v, &oracle::fold("xor", s as usize, &xs)));
            let r_f = run.rounds as f64;
            let fail = (!right || r_f > ub || r_f < z / 2.0)
                .then(|| format!("graph {k} n={n} s={s}: rounds {} not in [{:.3}, {ub:.3}] or wrong value", run.rounds, z / 2.0));
            (fail, r_f / ub)
        })
        .collect();
    let worst = results.iter().map(|r| r.1).fold(0.0, f64::max);
    let fails: Vec<String> = results.into_iter().filter_map(|r| r.0).collect();
    verdict(
        7,
        "sparse-cover fat combining within 32 Z_max ceil(log n)^2 and at least Z_max/2",
        &fails,
        format!("20 graphs; max rounds/bound = {worst:.3}"),
    );
}

#[test]
fn criterion_08_quickest_is_optimal() {
    const MAX_T: u32 = 6;
    let mut tiny = Vec::new();
    for n in 1..=4 {
        tiny.extend(oracle::all_tiny(n, 2));
    }
    // Search once per relabelling class; check quickest on every instance.
    let mut classes: Vec<oracle::Class> = tiny.iter().map(oracle::Tiny::canonical).collect();
    classes.sort_unstable();
    classes.dedup();
    let optimum: HashMap<(oracle::Class, u64), Option<u32>> = classes
        .par_iter()
        .flat_map_iter(|(cloud, edges)| {
            let g = oracle::Tiny { cloud: cloud.clone(), edges: edges.clone() };
            (1..=4u64).map(move |s| (((cloud.clone(), edges.clone()), s), oracle::brute_force_write(&g, 0, s, MAX_T))).collect::<Vec<_>>()
        })
        .collect();
    let instances = tiny.len() * 4;
    let mut fails: Vec<String> = tiny
        .par_iter()
        .flat_map_iter(|g| {
            let (cloud, edges) = g.canonical();
            let optimum = &optimum;
            (1..=4u64).filter_map(move |s| {
                let best = optimum[&((cloud.clone(), edges.clone()), s)];
                let t = Topology::general(&g.cloud, &g.edges, false).unwrap();
                let got = match quickest_write_schedule(&t, 0, s) {
                    Ok(fs) => Some(fs.horizon),
                    Err(FlowError::Unreachable { .. }) => None,
                    Err(e) => return Some(format!("{:?} {:?} s={s}: {e}", g.cloud, g.edges)),
                };
                let agree = match (best, got) {
                    (Some(b), Some(q)) => b == q,
                    (None, Some(q)) => q > MAX_T,
                    (None, None) => true,
                    (Some(_), None) => false,
                };
                (!agree).then(|| format!("{:?} {:?} s={s}: search {best:?}, quickest {got:?}", g.cloud, g.edges))
            })
        })
        .collect();
    let wheels = grid_wheels();
    let wheel_fails: Vec<String> = wheels
        .par_iter()
        .flat_map_iter(|c| {
            (0..c.t.n()).filter_map(move |i| {
                let q = quickest_write_schedule(&c.t, i, c.s).unwrap().horizon;
                let run = cloud_write_interval(&c.t, i, c.s, None, None).unwrap();
                (q > run.rounds).then(|| format!("{} node {i}: quickest {q} > interval {}", c.label, run.rounds))
            })
        })
        .collect();
    fails.extend(wheel_fails);
    verdict(
        8,
        "quickest CloudWrite matches exhaustive search and never loses to the interval algorithm",
        &fails,
        format!("{instances} tiny instances in {} classes, {} wheels at every node", classes.len(), wheels.len()),
    );
}

#[test]
fn criterion_09_federated_cancellation() {
    let mut grid = Vec::new();
    for n in 1..=16usize {
        for modulus in [2u64, 10, 1 << 16] {
            for m in [1usize, 8, 64] {
                grid.push((n, modulus, m));
            }
        }
    }
    let mut fails: Vec<String> = grid
        .par_iter()
        .filter_map(|&(n, modulus, m)| {
            let seed = (n * 1_000 + m) as u64 ^ modulus;
            let mut r = rng(seed);
            let xs: Vec<Vec<u64>> = (0..n).map(|_| (0..m).map(|_| r.gen_range(0..modulus)).collect()).collect();
            let t = Topology::uniform_wheel(n, 2, 64);
            let run = match federated_sum(&t, &xs, modulus, seed) {
                Ok(run) => run,
                Err(e) => return Some(format!("n={n} M={modulus} m={m}: {e}")),
            };
            // Sum taken here rather than through the crate.
            let expected: Vec<u64> =
                (0..m).map(|j| xs.iter().map(|x| x[j] as u128).sum::<u128>() as u64 % modulus).collect();
            let masked_sum: Vec<u64> = (0..m)
                .map(|j| run.masked.masked.iter().map(|y| y[j] as u128).sum::<u128>() as u64 % modulus)
                .collect();
            let ok = run.aggregate == expected && masked_sum == expected && modular_sum(&xs, modulus) == expected;
            (!ok || !run.trace.leaks.is_empty()).then(|| format!("n={n} M={modulus} m={m}: sums disagree or inputs leaked"))
        })
        .collect();
    let xs = vec![vec![3], vec![1], vec![2], vec![0]];
    let counts = masked_histogram(&xs, 4, 1, 10_000, 9).unwrap();
    let p = uniformity_p_value(&counts);
    if p <= 0.01 {
        fails.push(format!("masked value histogram {counts:?} has p = {p}"));
    }
    verdict(
        9,
        "masked sums cancel exactly and a single mask looks uniform",
        &fails,
        format!("{} grid points; chi-squared p = {p:.4} over {counts:?}", grid.len()),
    );
}

#[test]
fn criterion_10_standard_plan_is_deterministic() {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"));
    let plan = ExperimentPlan::from_json(&std::fs::read_to_string(dir.join("plans/standard.json")).unwrap()).unwrap();
    let golden = std::fs::read_to_string(dir.join("tests/golden/standard.csv")).unwrap();
    let first = run_plan(&plan);
    let second = run_plan(&plan);
    let mut fails = Vec::new();
    if first.to_csv() != second.to_csv() {
        fails.push("two runs differ".to_string());
    }
    if first.to_csv() != golden {
        fails.push("output differs from the golden file".to_string());
    }
    if first.rows.iter().any(|r| !r.pass) {
        fails.push("a standard row fails its bounds".to_string());
    }
    verdict(10, "standard sweep reproduces its golden CSV byte for byte", &fails, format!("{} rows", first.rows.len()));
}
