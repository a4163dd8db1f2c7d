//! CloudWrite and CloudRead of a single node, run inside its cloud interval.

use cwc_core::builder::any_round;
use cwc_core::region::{cloud_read, cloud_write};
use cwc_core::{
    run_schedule, Bits, InitialState, NodeId, Profile, Region, Round, RunTrace, Schedule,
    ScheduleBuilder, Topology,
};

use crate::interval::{best_interval, compute_cloud_interval, Direction, IntervalStats};
use crate::WheelError;

/// Name of the file moved by single-node operations.
pub const FILE: &str = "f";

#[derive(Clone, Debug)]
pub struct WheelRun {
    pub rounds: Round,
    pub interval: IntervalStats,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

fn interval_for(
    t: &Topology,
    i: NodeId,
    s: u64,
    dir: Option<Direction>,
) -> Result<IntervalStats, WheelError> {
    match dir {
        Some(d) => compute_cloud_interval(t, i, s, d),
        None => best_interval(t, i, s),
    }
}

fn region_of(st: &IntervalStats) -> Region {
    Region::path(st.origin, &st.hops())
}

fn execute(
    t: &Topology,
    interval: IntervalStats,
    (schedule, init): (Schedule, InitialState),
) -> Result<WheelRun, WheelError> {
    let trace = run_schedule(t, &schedule, &init)?;
    Ok(WheelRun {
        rounds: trace.rounds_elapsed,
        interval,
        schedule,
        trace,
    })
}

/// Writes `s` bits held by node `i` to the cloud file [`FILE`]. `content`
/// switches on literal payload tracking; `dir` forces a direction,
/// otherwise the one with the smaller timespan is used.
pub fn cloud_write_interval(
    t: &Topology,
    i: NodeId,
    s: u64,
    content: Option<&Bits>,
    dir: Option<Direction>,
) -> Result<WheelRun, WheelError> {
    let st = interval_for(t, i, s, dir)?;
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("S", s);
    b.hold(i, x);
    if let Some(v) = content {
        b.set_value(x, v.clone());
    }
    let f = b.file(FILE);
    if s > 0 {
        cloud_write(&mut b, &region_of(&st), x, s, f, &Profile::ready(0, s), true, &any_round)?;
    }
    execute(t, st, b.finish())
}

/// Reads the `s`-bit cloud file [`FILE`] into node `i`.
pub fn cloud_read_interval(
    t: &Topology,
    i: NodeId,
    s: u64,
    content: Option<&Bits>,
    dir: Option<Direction>,
) -> Result<WheelRun, WheelError> {
    let st = interval_for(t, i, s, dir)?;
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("S", s);
    if let Some(v) = content {
        b.set_value(x, v.clone());
    }
    let f = b.file(FILE);
    b.preload(f, x);
    if s > 0 {
        cloud_read(&mut b, &region_of(&st), f, x, s, &Profile::ready(0, s), 0, &any_round)?;
    }
    execute(t, st, b.finish())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn self_sufficient_node_writes_alone() {
        let t = Topology::uniform_wheel(6, 5, 1);
        let run = cloud_write_interval(&t, 2, 5, None, None).unwrap();
        assert_eq!(run.rounds, 1);
        let t = Topology::uniform_wheel(6, 5, 10);
        let run = cloud_write_interval(&t, 2, 13, None, None).unwrap();
        assert_eq!(run.interval.len(), 2);
    }

    #[test]
    fn content_survives_write_and_read() {
        let t = Topology::wheel(&[1, 3, 2, 1, 2, 1], &[4, 2, 5, 3, 3, 6]);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for i in 0..6 {
            let v = Bits::random(40, &mut rng);
            let w = cloud_write_interval(&t, i, 40, Some(&v), None).unwrap();
            assert_eq!(w.trace.file_value(FILE), Some(&v));
            let r = cloud_read_interval(&t, i, 40, Some(&v), None).unwrap();
            let x = r.schedule.items.iter().position(|d| d.name == "S").unwrap();
            assert!(r.trace.holds(i, cwc_core::ItemId(x as u32)));
        }
    }

    #[test]
    fn empty_file_takes_no_rounds() {
        let t = Topology::uniform_wheel(4, 1, 1);
        assert_eq!(cloud_read_interval(&t, 0, 0, None, None).unwrap().rounds, 0);
        assert_eq!(cloud_write_interval(&t, 0, 0, None, None).unwrap().rounds, 0);
    }

    #[test]
    fn sixteen_node_example_stays_within_stage_counts() {
        // |I| = 4: pipelined spread, parallel write, acknowledgements.
        let t = Topology::uniform_wheel(16, 1, 16);
        let run = cloud_write_interval(&t, 0, 16, None, None).unwrap();
        assert_eq!(run.interval.len(), 4);
        let stages = (4 + 1) + 4 + 4;
        assert!(run.rounds <= stages, "{} rounds", run.rounds);
        let read = cloud_read_interval(&t, 0, 16, None, None).unwrap();
        assert!(read.rounds <= 2 * run.rounds && run.rounds <= 2 * read.rounds);
    }
}
