//! Honest-but-curious federated aggregation on a wheel. Every node hides its
//! vector behind a random mask, passes the mask to its clockwise neighbour
//! and subtracts the one it receives, so the masks cancel in the sum that
//! pipelined combining writes to the cloud.

use cwc_core::builder::any_round;
use cwc_core::{
    lane_bits_for, run_schedule, sequence, Bits, CombineOp, Compute, EngineError, Hop, ItemId, LinkId, OpError,
    Profile, Round, RunTrace, Schedule, ScheduleBuilder, Topology, BuildError,
};
use cwc_wheel::{combined_write_modular, CombineOptions, WheelError};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum FedError {
    #[error("modulus must be at least 2, got {0}")]
    BadModulus(u64),
    #[error("node {node} coordinate {coord} holds {value}, outside 0..{modulus}")]
    OutOfRange { node: usize, coord: usize, value: u64, modulus: u64 },
    #[error("every node needs a vector of the same positive length")]
    Ragged,
    #[error("{got} input vectors for {n} nodes")]
    WrongNodeCount { n: usize, got: usize },
    #[error("the cloud holds no aggregate after the run")]
    NoResult,
    #[error(transparent)]
    Op(#[from] OpError),
    #[error(transparent)]
    Wheel(#[from] WheelError),
    #[error(transparent)]
    Build(#[from] BuildError),
    #[error(transparent)]
    Engine(#[from] EngineError),
}

/// Masks and masked vectors of one aggregation round.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Masked {
    pub modulus: u64,
    pub masks: Vec<Vec<u64>>,
    /// `y_i = x_i - z_i + z_{i-1} (mod M)`, indices mod `n`.
    pub masked: Vec<Vec<u64>>,
}

/// Node `i` draws its mask from a ChaCha stream seeded with `seed ^ i`.
pub fn node_mask(seed: u64, i: usize, m: usize, modulus: u64) -> Vec<u64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ i as u64);
    (0..m).map(|_| rng.gen_range(0..modulus)).collect()
}

fn check(xs: &[Vec<u64>], modulus: u64) -> Result<usize, FedError> {
    if modulus < 2 {
        return Err(FedError::BadModulus(modulus));
    }
    let m = xs.first().map_or(0, Vec::len);
    if m == 0 || xs.iter().any(|x| x.len() != m) {
        return Err(FedError::Ragged);
    }
    for (node, x) in xs.iter().enumerate() {
        if let Some((coord, &value)) = x.iter().enumerate().find(|(_, &v)| v >= modulus) {
            return Err(FedError::OutOfRange { node, coord, value, modulus });
        }
    }
    Ok(m)
}

pub fn mask_inputs(xs: &[Vec<u64>], modulus: u64, seed: u64) -> Result<Masked, FedError> {
    let m = check(xs, modulus)?;
    let n = xs.len();
    let masks: Vec<Vec<u64>> = (0..n).map(|i| node_mask(seed, i, m, modulus)).collect();
    let masked = (0..n)
        .map(|i| {
            let prev = &masks[(i + n - 1) % n];
            (0..m)
                .map(|k| (xs[i][k] + (modulus - masks[i][k]) + prev[k]) % modulus)
                .collect()
        })
        .collect();
    Ok(Masked { modulus, masks, masked })
}

/// Coordinate-wise sum modulo `modulus`.
pub fn modular_sum(xs: &[Vec<u64>], modulus: u64) -> Vec<u64> {
    let m = xs.first().map_or(0, Vec::len);
    (0..m)
        .map(|k| xs.iter().fold(0u64, |acc, x| (acc + x[k] % modulus) % modulus))
        .collect()
}

#[derive(Clone, Debug)]
pub struct FedRun {
    /// Coordinates of the cloud file.
    pub aggregate: Vec<u64>,
    pub rounds: Round,
    /// Rounds spent passing masks around the ring.
    pub mask_rounds: Round,
    /// Rounds of the combining run on its own.
    pub combine_rounds: Round,
    pub masked: Masked,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

/// Aggregates one vector per wheel node into the cloud file `out`. The mask
/// exchange finishes before combining starts; raw vectors are marked private
/// so the engine reports any link that carries one.
pub fn federated_sum(t: &Topology, xs: &[Vec<u64>], modulus: u64, seed: u64) -> Result<FedRun, FedError> {
    let n = t.n();
    if xs.len() != n {
        return Err(FedError::WrongNodeCount { n, got: xs.len() });
    }
    let masked = mask_inputs(xs, modulus, seed)?;
    let m = xs[0].len();
    let lane = lane_bits_for(modulus);
    let op = CombineOp::add_mod(modulus, m)?.with_grain(lane as usize)?;
    let s = op.size() as u64;
    let bits = |v: &[u64]| Bits::from_fields(lane as usize, v);

    let mut b = ScheduleBuilder::new(t, Some(op.clone()));
    let mut raw = Vec::with_capacity(n);
    let mut mask = Vec::with_capacity(n);
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let x = b.data(format!("X{i}"), s);
        let z = b.data(format!("Z{i}"), s);
        b.hold(i, x);
        b.hold(i, z);
        b.set_value(x, bits(&xs[i]));
        b.set_value(z, bits(&masked.masks[i]));
        b.mark_private(x);
        raw.push(x);
        mask.push(z);
        out.push(b.data(format!("Y{i}"), s));
    }
    let mut mask_rounds = 0;
    if n > 1 {
        for i in 0..n {
            let hop = Hop { link: LinkId(i as u32), from: i, to: (i + 1) % n };
            let got = b.forward_hop(mask[i], 0, s, hop, &Profile::ready(0, s), &any_round)?;
            mask_rounds = mask_rounds.max(got.done());
        }
    }
    for i in 0..n {
        b.compute(
            mask_rounds + 1,
            Compute::Mask {
                node: i,
                out: out[i],
                input: raw[i],
                own: mask[i],
                prev: mask[(i + n - 1) % n],
                lane_bits: lane,
                modulus,
            },
        );
    }

    let ys: Vec<Bits> = masked.masked.iter().map(|y| bits(y)).collect();
    let combine = combined_write_modular(t, &op, Some(&ys), CombineOptions::default())?;
    let bind: Vec<(ItemId, ItemId)> = (0..n)
        .map(|i| {
            let name = format!("S{i}");
            let k = combine.schedule.items.iter().position(|d| d.name == name).expect("combining declares its inputs");
            (ItemId(k as u32), out[i])
        })
        .collect();
    let (schedule, init) = sequence(b.finish(), (combine.schedule, combine.init), &bind);
    let trace = run_schedule(t, &schedule, &init)?;
    let aggregate = trace.file_value(cwc_wheel::combine::OUT).ok_or(FedError::NoResult)?.fields(lane as usize);
    Ok(FedRun {
        aggregate,
        rounds: trace.rounds_elapsed,
        mask_rounds,
        combine_rounds: combine.rounds,
        masked,
        schedule,
        trace,
    })
}

/// Chi-squared goodness of fit of `counts` against the uniform
/// distribution; returns the p-value.
pub fn uniformity_p_value(counts: &[u64]) -> f64 {
    let k = counts.len();
    let total: u64 = counts.iter().sum();
    if k < 2 || total == 0 {
        return 1.0;
    }
    let expected = total as f64 / k as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    ChiSquared::new((k - 1) as f64).expect("positive degrees of freedom").sf(stat)
}

/// Histogram of node `node`'s masked first coordinate over `draws`
/// consecutive seeds with fixed inputs.
pub fn masked_histogram(xs: &[Vec<u64>], modulus: u64, node: usize, draws: u64, first_seed: u64) -> Result<Vec<u64>, FedError> {
    let mut counts = vec![0u64; modulus as usize];
    for d in 0..draws {
        let y = mask_inputs(xs, modulus, first_seed.wrapping_add(d.wrapping_mul(0x9E37_79B9_7F4A_7C15)))?;
        counts[y.masked[node][0] as usize] += 1;
    }
    Ok(counts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn three_node_example() {
        let xs = vec![vec![1, 2], vec![3, 4], vec![5, 6]];
        let y = mask_inputs(&xs, 10, 7).unwrap();
        assert_eq!(modular_sum(&y.masked, 10), vec![9, 2]);
        let t = Topology::uniform_wheel(3, 2, 8);
        let run = federated_sum(&t, &xs, 10, 7).unwrap();
        assert_eq!(run.aggregate, vec![9, 2]);
        assert!(run.trace.leaks.is_empty());
        assert_eq!(run.rounds, run.mask_rounds + run.combine_rounds);
    }

    #[test]
    fn single_node_keeps_its_vector() {
        let t = Topology::uniform_wheel(1, 4, 0);
        let run = federated_sum(&t, &[vec![3, 9, 0]], 10, 1).unwrap();
        assert_eq!(run.aggregate, vec![3, 9, 0]);
        assert_eq!(run.mask_rounds, 0);
    }

    #[test]
    fn errors() {
        assert_eq!(mask_inputs(&[vec![10]], 10, 0), Err(FedError::OutOfRange { node: 0, coord: 0, value: 10, modulus: 10 }));
        assert_eq!(mask_inputs(&[vec![1], vec![]], 10, 0), Err(FedError::Ragged));
        assert_eq!(mask_inputs(&[vec![0]], 1, 0), Err(FedError::BadModulus(1)));
    }

    #[test]
    fn masked_values_look_uniform() {
        let xs = vec![vec![1], vec![2], vec![3]];
        let counts = masked_histogram(&xs, 4, 1, 10_000, 17).unwrap();
        assert!(uniformity_p_value(&counts) > 0.01, "{counts:?}");
        assert!(uniformity_p_value(&[5000, 0, 0, 5000]) < 1e-6);
    }

    proptest! {
        #[test]
        fn masks_cancel(n in 1usize..12, m in 1usize..6, modulus in 2u64..1000, seed: u64, raw in proptest::collection::vec(any::<u64>(), 72)) {
            let xs: Vec<Vec<u64>> = (0..n).map(|i| (0..m).map(|k| raw[i * 6 + k] % modulus).collect()).collect();
            let y = mask_inputs(&xs, modulus, seed).unwrap();
            prop_assert_eq!(modular_sum(&y.masked, modulus), modular_sum(&xs, modulus));
        }
    }
}
