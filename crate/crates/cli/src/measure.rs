//! Runs one repetition of a plan line and checks it against its bounds.

use cwc_apps::{federated_sum, modular_sum};
use cwc_core::{ceil_log2, Bits, CombineOp, ItemId, Mode, NodeId, Round, Topology};
use cwc_fat::{cloudcast_fat, cloudcast_lower_bound, combined_write_fat, combined_write_generic, default_kappa, z_max, CoverMode, FatOptions};
use cwc_flow::{quickest_multi_schedule, quickest_read_schedule, quickest_write_schedule, FlowMode};
use cwc_wheel::{
    cloud_read_interval, cloud_write_interval, cloudcast_wheel, combined_write_modular, combined_write_wheel,
    wheel_lower_bound, CombineOptions, Direction, RingCover,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::plan::{Algo, BoundConstants, CoverKind, QuickestMode, RunSpec};
use crate::CliError;

/// What one repetition measured.
#[derive(Clone, Debug, PartialEq)]
pub struct Outcome {
    pub n: usize,
    pub s: u64,
    pub b_c: String,
    pub b_l: String,
    pub kappa: Option<u32>,
    pub g: Option<usize>,
    pub rounds: Round,
    pub analytic_bound: Option<f64>,
    pub lower_bound: Option<f64>,
    /// The cloud (or every reader) ended with the right value.
    pub correct: bool,
    /// Per-node checks of multi-node runs; otherwise `rounds` against the bounds.
    pub upper_ok: bool,
    pub lower_ok: bool,
}

impl Outcome {
    fn new(t: &Topology, s: u64) -> Self {
        Outcome {
            n: t.n(),
            s,
            b_c: Topology::describe_range(t.cloud_bws().iter().copied()),
            b_l: Topology::describe_range(t.links().iter().map(|l| l.w)),
            kappa: None,
            g: None,
            rounds: 0,
            analytic_bound: None,
            lower_bound: None,
            correct: true,
            upper_ok: true,
            lower_ok: true,
        }
    }

    /// Folds in one measurement with its own bounds.
    fn record(&mut self, rounds: Round, upper: Option<f64>, lower: Option<f64>) {
        let r = rounds as f64;
        self.upper_ok &= upper.is_none_or(|u| r <= u + 1e-9);
        self.lower_ok &= lower.is_none_or(|l| r + 1e-9 >= l);
        self.rounds = self.rounds.max(rounds);
        self.analytic_bound = max_opt(self.analytic_bound, upper);
        self.lower_bound = max_opt(self.lower_bound, lower);
    }

    pub fn pass(&self, k: &BoundConstants) -> bool {
        self.correct && (!k.check_upper || self.upper_ok) && (!k.check_lower || self.lower_ok)
    }
}

fn max_opt(a: Option<f64>, b: Option<f64>) -> Option<f64> {
    match (a, b) {
        (Some(x), Some(y)) => Some(x.max(y)),
        (x, None) => x,
        (None, y) => y,
    }
}

/// `ceil(log2 n)`, at least 1.
pub fn log_factor(n: usize) -> f64 {
    ceil_log2(n).max(1) as f64
}

/// `Z_max` of the ring cover: longest interval plus `s` over the narrowest
/// bottleneck plus `s` over the least pooled cloud bandwidth.
pub fn wheel_z_max(t: &Topology, s: u64) -> Result<f64, CliError> {
    Ok(RingCover::build(t, s)?.worst.timespan)
}

/// Largest per-node lower bound, each node taking its cheaper direction.
pub fn wheel_max_lower_bound(t: &Topology, s: u64) -> Result<Round, CliError> {
    (0..t.n()).try_fold(0, |m, i| {
        let cw = wheel_lower_bound(t, i, s, Direction::Clockwise)?;
        let ccw = wheel_lower_bound(t, i, s, Direction::Counterclockwise)?;
        Ok(m.max(cw.min(ccw)))
    })
}

/// `Z_max + |I_longest|·ceil(g/φ_min) + ceil(g/b_c,min)·ceil(log n)` over the
/// ring cover of `s`-bit inputs, to be scaled by the modular constant.
pub fn modular_expression(t: &Topology, s: u64, g: usize) -> Result<f64, CliError> {
    let w = RingCover::build(t, s)?.worst;
    let g = g as u64;
    let per_hop = w.min_bottleneck.map_or(0, |phi| g.div_ceil(phi));
    let per_level = g.div_ceil(w.min_cloud_bw.max(1));
    Ok(w.timespan + (w.max_len as u64 * per_hop) as f64 + per_level as f64 * log_factor(t.n()))
}

/// At least `ceil(s / total cloud bandwidth)` rounds for `s` bits to cross.
fn cloud_cut(t: &Topology, s: u64) -> Option<f64> {
    let bw = t.total_cloud_bw();
    (bw > 0).then(|| s.div_ceil(bw) as f64)
}

fn operator(spec: &RunSpec) -> Result<CombineOp, CliError> {
    let op = CombineOp::by_name(&spec.op, spec.s as usize)?;
    Ok(match spec.grain {
        Some(g) => op.with_grain(g)?,
        None => op,
    })
}

fn nodes(spec: &RunSpec, t: &Topology) -> Result<Vec<NodeId>, CliError> {
    match spec.node {
        Some(i) if i >= t.n() => Err(CliError::Invalid(format!("node {i} does not exist"))),
        Some(i) => Ok(vec![i]),
        None => Ok((0..t.n()).collect()),
    }
}

/// Bits each node moves: the operator's size for combining, else `s`.
pub fn payload_bits(spec: &RunSpec) -> Result<u64, CliError> {
    Ok(match spec.algo {
        Algo::CombineWheel | Algo::CombineModular | Algo::CombineFat | Algo::CombineGeneric => operator(spec)?.size() as u64,
        _ => spec.s,
    })
}

/// Runs repetition `rep` of `spec`.
pub fn measure(spec: &RunSpec, rep: u32, k: &BoundConstants) -> Result<Outcome, CliError> {
    let seed = spec.seed.wrapping_add(rep as u64);
    let t = spec.topology.build(seed, payload_bits(spec)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let s = spec.s;
    let n = t.n();
    let mut o = Outcome::new(&t, s);
    match spec.algo {
        Algo::WheelWrite | Algo::WheelRead => {
            for i in nodes(spec, &t)? {
                let content = Bits::random(s as usize, &mut rng);
                let run = if spec.algo == Algo::WheelWrite {
                    let run = cloud_write_interval(&t, i, s, Some(&content), None)?;
                    o.correct &= s == 0 || run.trace.file_value(cwc_wheel::ops::FILE) == Some(&content);
                    run
                } else {
                    let run = cloud_read_interval(&t, i, s, Some(&content), None)?;
                    o.correct &= s == 0 || run.trace.holds(i, ItemId(0));
                    run
                };
                let lb = wheel_lower_bound(&t, i, s, run.interval.direction)?;
                o.record(run.rounds, Some(k.wheel_op * run.interval.timespan), Some(lb as f64));
            }
        }
        Algo::CombineWheel | Algo::CombineModular => {
            let op = operator(spec)?;
            o.s = op.size() as u64;
            let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut rng)).collect();
            let z = wheel_z_max(&t, o.s)?;
            let lb = wheel_max_lower_bound(&t, o.s)? as f64;
            let (run, ub) = if spec.algo == Algo::CombineWheel {
                (combined_write_wheel(&t, &op, Some(&xs))?, k.wheel_combine * z * log_factor(n))
            } else {
                o.g = Some(op.grain_size());
                let opts = CombineOptions::default();
                let ub = k.modular * modular_expression(&t, o.s, op.grain_size())?;
                (combined_write_modular(&t, &op, Some(&xs), opts)?, ub)
            };
            o.correct &= run.value.as_ref() == Some(&op.fold(&xs));
            o.record(run.rounds, Some(ub), Some(lb));
        }
        Algo::CombineFat => {
            let op = operator(spec)?;
            o.s = op.size() as u64;
            let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut rng)).collect();
            let cover = match spec.cover {
                CoverKind::All => CoverMode::All,
                CoverKind::Sparse => {
                    o.kappa = Some(spec.kappa.unwrap_or_else(|| default_kappa(n)));
                    CoverMode::Sparse { kappa: o.kappa }
                }
            };
            let run = combined_write_fat(&t, &op, Some(&xs), FatOptions { cover, collective: spec.collective })?;
            o.correct &= run.value.as_ref() == Some(&op.fold(&xs));
            let z = z_max(&t, o.s)?;
            let log = log_factor(n);
            o.record(run.rounds, Some(k.fat_combine * z * log * log), Some(z / 2.0));
        }
        Algo::CombineGeneric => {
            let op = operator(spec)?;
            o.s = op.size() as u64;
            let xs: Vec<Bits> = (0..n).map(|_| op.random_operand(&mut rng)).collect();
            let run = combined_write_generic(&t, &op, Some(&xs))?;
            o.correct &= run.value.as_ref() == Some(&op.fold(&xs));
            o.record(run.rounds, Some(run.analytic_bound(n) as f64), cloud_cut(&t, o.s));
        }
        Algo::Cloudcast => {
            let content = Bits::random(s as usize, &mut rng);
            let (rounds, trace, ub, lb) = match t.mode() {
                Mode::Wheel => {
                    let run = cloudcast_wheel(&t, s, Some(&content))?;
                    let ub = k.cloudcast_wheel * wheel_z_max(&t, s)?;
                    (run.rounds, run.trace, ub, wheel_max_lower_bound(&t, s)? as f64)
                }
                Mode::FatLinks { .. } => {
                    o.kappa = Some(spec.kappa.unwrap_or_else(|| default_kappa(n)));
                    let run = cloudcast_fat(&t, s, Some(&content), o.kappa)?;
                    let log = log_factor(n);
                    let lb = cloudcast_lower_bound(&t, s).unwrap_or(0) as f64;
                    (run.rounds, run.trace, k.cloudcast_fat * z_max(&t, s)? * log * log, lb)
                }
                Mode::General => return Err(CliError::Invalid("cloudcast needs a wheel or fat-links topology".into())),
            };
            o.correct &= s == 0 || (0..n).all(|v| trace.holds(v, ItemId(0)) && trace.value(ItemId(0)) == Some(&content));
            o.record(rounds, Some(ub), Some(lb));
        }
        Algo::Quickest => match spec.mode {
            QuickestMode::Write | QuickestMode::Read => {
                for i in nodes(spec, &t)? {
                    let write = spec.mode == QuickestMode::Write;
                    let fs = if write {
                        quickest_write_schedule(&t, i, s)?
                    } else {
                        quickest_read_schedule(&t, i, s)?
                    };
                    let trace = fs.run(&t)?;
                    o.correct &= trace.rounds_elapsed == fs.horizon;
                    o.correct &= if write {
                        trace.file_complete(&format!("S{i}")) || s == 0
                    } else {
                        s == 0 || trace.holds(i, ItemId(0))
                    };
                    // On wheels the interval algorithm is one feasible schedule.
                    let ub = if t.mode() == Mode::Wheel {
                        let run = if write {
                            cloud_write_interval(&t, i, s, None, None)?
                        } else {
                            cloud_read_interval(&t, i, s, None, None)?
                        };
                        Some(run.rounds as f64)
                    } else {
                        None
                    };
                    let lb = t.reach_lower_bound(i, s).map(|r| r as f64);
                    o.record(fs.horizon, ub, lb);
                }
            }
            QuickestMode::Caw | QuickestMode::Car => {
                let mode = if spec.mode == QuickestMode::Caw { FlowMode::Write } else { FlowMode::Read };
                let fs = quickest_multi_schedule(&t, &vec![s; n], mode, None)?;
                let trace = fs.run(&t)?;
                o.correct &= trace.rounds_elapsed == fs.horizon;
                let reach = (0..n).filter_map(|i| t.reach_lower_bound(i, s)).max().map(|r| r as f64);
                o.record(fs.horizon, None, max_opt(reach, cloud_cut(&t, s * n as u64)));
            }
        },
        Algo::Fedsum => {
            let modulus = spec.modulus.unwrap_or(1 << 16);
            let m = spec.m.unwrap_or(8);
            if modulus < 2 {
                return Err(CliError::Invalid(format!("modulus must be at least 2, got {modulus}")));
            }
            let xs: Vec<Vec<u64>> = (0..n).map(|_| (0..m).map(|_| rng.gen_range(0..modulus)).collect()).collect();
            let run = federated_sum(&t, &xs, modulus, seed)?;
            let lane = cwc_core::lane_bits_for(modulus) as usize;
            o.s = (m * lane) as u64;
            o.g = Some(lane);
            o.correct &= run.aggregate == modular_sum(&xs, modulus) && run.trace.leaks.is_empty();
            let ub = run.mask_rounds as f64 + k.modular * modular_expression(&t, o.s, lane)?;
            o.record(run.rounds, Some(ub), cloud_cut(&t, o.s));
        }
    }
    Ok(o)
}
