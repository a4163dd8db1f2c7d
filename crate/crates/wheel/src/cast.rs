//! CloudCast on a wheel: every node obtains a file stored in the cloud.

use cwc_core::builder::any_round;
use cwc_core::region::{broadcast, cloud_read};
use cwc_core::{run_schedule, Bits, Profile, Region, Round, RunTrace, Schedule, ScheduleBuilder, Topology};

use crate::cover::RingCover;
use crate::interval::require_wheel;
use crate::WheelError;

/// Cloud file broadcast by [`cloudcast_wheel`].
pub const IN: &str = "in";

#[derive(Clone, Debug)]
pub struct CastRun {
    pub rounds: Round,
    pub cover: RingCover,
    pub schedule: Schedule,
    pub trace: RunTrace,
}

/// Every cover interval reads the `s`-bit file [`IN`] into its clockwise
/// last node and then spreads it over the interval; all intervals run at
/// once.
pub fn cloudcast_wheel(t: &Topology, s: u64, content: Option<&Bits>) -> Result<CastRun, WheelError> {
    require_wheel(t)?;
    let n = t.n();
    let cover = RingCover::build(t, s)?;
    let mut b = ScheduleBuilder::new(t, None);
    let x = b.data("F", s);
    if let Some(v) = content {
        b.set_value(x, v.clone());
    }
    let f = b.file(IN);
    b.preload(f, x);
    if s > 0 {
        for a in &cover.arcs {
            let members: Vec<_> = a.nodes(n).collect();
            let region = Region::bfs(t, a.end(n), &members);
            let done = cloud_read(&mut b, &region, f, x, s, &Profile::ready(0, s), 0, &any_round)?;
            broadcast(&mut b, &region, x, s, &Profile::ready(done, s), &any_round)?;
        }
    }
    let (schedule, init) = b.finish();
    let trace = run_schedule(t, &schedule, &init)?;
    Ok(CastRun {
        rounds: trace.rounds_elapsed,
        cover,
        schedule,
        trace,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use cwc_core::ItemId;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn every_node_receives_the_file() {
        let t = Topology::wheel(&[1, 2, 1, 3, 1, 1, 2], &[4, 2, 3, 5, 1, 2, 6]);
        let v = Bits::random(30, &mut ChaCha8Rng::seed_from_u64(5));
        let run = cloudcast_wheel(&t, 30, Some(&v)).unwrap();
        for i in 0..7 {
            assert!(run.trace.holds(i, ItemId(0)), "node {i}");
        }
    }

    #[test]
    fn large_uniform_wheel_is_fast() {
        let t = Topology::uniform_wheel(256, 16, 64);
        let run = cloudcast_wheel(&t, 256, None).unwrap();
        assert!(run.rounds <= 32, "{} rounds", run.rounds);
    }
}
