//! Sets of half-open bit ranges.

use std::ops::Range;

/// A normalized union of disjoint, non-adjacent half-open ranges.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct RangeSet {
    spans: Vec<(u64, u64)>,
}

impl RangeSet {
    pub fn new() -> Self {
        RangeSet::default()
    }

    pub fn full(len: u64) -> Self {
        let mut r = RangeSet::new();
        r.insert(0..len);
        r
    }

    pub fn insert(&mut self, r: Range<u64>) {
        if r.is_empty() {
            return;
        }
        let (mut lo, mut hi) = (r.start, r.end);
        let first = self.spans.partition_point(|&(_, e)| e < lo);
        let mut last = first;
        while last < self.spans.len() && self.spans[last].0 <= hi {
            lo = lo.min(self.spans[last].0);
            hi = hi.max(self.spans[last].1);
            last += 1;
        }
        self.spans.splice(first..last, [(lo, hi)]);
    }

    pub fn contains(&self, r: &Range<u64>) -> bool {
        if r.is_empty() {
            return true;
        }
        let k = self.spans.partition_point(|&(_, e)| e <= r.start);
        self.spans
            .get(k)
            .is_some_and(|&(a, b)| a <= r.start && r.end <= b)
    }

    pub fn overlaps(&self, r: &Range<u64>) -> bool {
        if r.is_empty() {
            return false;
        }
        let k = self.spans.partition_point(|&(_, e)| e <= r.start);
        self.spans.get(k).is_some_and(|&(a, _)| a < r.end)
    }

    pub fn covers(&self, len: u64) -> bool {
        self.contains(&(0..len))
    }

    pub fn total(&self) -> u64 {
        self.spans.iter().map(|&(a, b)| b - a).sum()
    }

    pub fn spans(&self) -> impl Iterator<Item = Range<u64>> + '_ {
        self.spans.iter().map(|&(a, b)| a..b)
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }
}
