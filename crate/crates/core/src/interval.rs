//! Half-open millisecond intervals and sets of them.

use std::fmt;

/// `[start, end)` in epoch milliseconds. Empty when `start >= end`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Interval {
    pub start: i64,
    pub end: i64,
}

impl Interval {
    pub const fn new(start: i64, end: i64) -> Self {
        Interval { start, end }
    }

    pub fn len(&self) -> i64 {
        (self.end - self.start).max(0)
    }

    pub fn is_empty(&self) -> bool {
        self.start >= self.end
    }

    pub fn contains(&self, t: i64) -> bool {
        self.start <= t && t < self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        other.is_empty() || (self.start <= other.start && other.end <= self.end)
    }

    pub fn clamp_time(&self, t: i64) -> i64 {
        t.clamp(self.start, self.end.max(self.start))
    }

    /// Intersection; may be empty.
    pub fn clip(&self, other: &Interval) -> Interval {
        let start = self.start.max(other.start);
        let end = self.end.min(other.end);
        if start < end {
            Interval { start, end }
        } else {
            Interval { start, end: start }
        }
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {})", self.start, self.end)
    }
}

/// Sorted, pairwise disjoint, non-adjacent, non-empty intervals.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct IntervalSet {
    spans: Vec<Interval>,
}

impl IntervalSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_interval(iv: Interval) -> Self {
        let mut s = Self::new();
        s.insert(iv);
        s
    }

    pub fn as_slice(&self) -> &[Interval] {
        &self.spans
    }

    pub fn iter(&self) -> impl Iterator<Item = &Interval> {
        self.spans.iter()
    }

    pub fn is_empty(&self) -> bool {
        self.spans.is_empty()
    }

    /// Total covered milliseconds.
    pub fn measure(&self) -> i64 {
        self.spans.iter().map(Interval::len).sum()
    }

    pub fn contains(&self, t: i64) -> bool {
        let i = self.spans.partition_point(|iv| iv.end <= t);
        self.spans.get(i).is_some_and(|iv| iv.contains(t))
    }

    /// Adds an interval, merging with overlapping or touching spans.
    pub fn insert(&mut self, iv: Interval) {
        if iv.is_empty() {
            return;
        }
        let lo = self.spans.partition_point(|s| s.end < iv.start);
        let hi = self.spans.partition_point(|s| s.start <= iv.end);
        if lo == hi {
            self.spans.insert(lo, iv);
            return;
        }
        let merged = Interval { start: iv.start.min(self.spans[lo].start), end: iv.end.max(self.spans[hi - 1].end) };
        self.spans.splice(lo..hi, std::iter::once(merged));
    }

    pub fn union(&self, other: &IntervalSet) -> IntervalSet {
        let mut all: Vec<Interval> = self.spans.iter().chain(other.spans.iter()).copied().collect();
        all.sort_unstable();
        let mut out: Vec<Interval> = Vec::with_capacity(all.len());
        for iv in all {
            match out.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => out.push(iv),
            }
        }
        IntervalSet { spans: out }
    }

    pub fn intersection(&self, other: &IntervalSet) -> IntervalSet {
        let (a, b) = (&self.spans, &other.spans);
        let (mut i, mut j) = (0, 0);
        let mut out = Vec::new();
        while i < a.len() && j < b.len() {
            let c = a[i].clip(&b[j]);
            if !c.is_empty() {
                out.push(c);
            }
            if a[i].end < b[j].end {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalSet { spans: out }
    }

    pub fn difference(&self, other: &IntervalSet) -> IntervalSet {
        let mut out = Vec::new();
        let mut j = 0;
        for &iv in &self.spans {
            let mut cur = iv.start;
            while j < other.spans.len() && other.spans[j].end <= cur {
                j += 1;
            }
            let mut k = j;
            while k < other.spans.len() && other.spans[k].start < iv.end {
                let cut = other.spans[k];
                if cut.start > cur {
                    out.push(Interval::new(cur, cut.start));
                }
                cur = cur.max(cut.end);
                k += 1;
            }
            if cur < iv.end {
                out.push(Interval::new(cur, iv.end));
            }
        }
        IntervalSet { spans: out }
    }

    /// Restricts the set to `bounds`.
    pub fn clip(&self, bounds: Interval) -> IntervalSet {
        self.intersection(&IntervalSet::from_interval(bounds))
    }

    pub fn is_subset_of(&self, other: &IntervalSet) -> bool {
        self.difference(other).is_empty()
    }

    pub fn within(&self, bounds: Interval) -> bool {
        self.spans.iter().all(|s| bounds.contains_interval(s))
    }
}

impl FromIterator<Interval> for IntervalSet {
    fn from_iter<I: IntoIterator<Item = Interval>>(iter: I) -> Self {
        let mut all: Vec<Interval> = iter.into_iter().filter(|iv| !iv.is_empty()).collect();
        all.sort_unstable();
        let mut out: Vec<Interval> = Vec::with_capacity(all.len());
        for iv in all {
            match out.last_mut() {
                Some(last) if iv.start <= last.end => last.end = last.end.max(iv.end),
                _ => out.push(iv),
            }
        }
        IntervalSet { spans: out }
    }
}

impl fmt::Display for IntervalSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.spans.is_empty() {
            return f.write_str("{}");
        }
        for (i, s) in self.spans.iter().enumerate() {
            if i > 0 {
                f.write_str(" u ")?;
            }
            write!(f, "{s}")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn set(v: &[(i64, i64)]) -> IntervalSet {
        v.iter().map(|&(a, b)| Interval::new(a, b)).collect()
    }

    #[test]
    fn insert_merges_touching() {
        let mut s = IntervalSet::new();
        s.insert(Interval::new(0, 5));
        s.insert(Interval::new(10, 20));
        s.insert(Interval::new(5, 10));
        assert_eq!(s.as_slice(), &[Interval::new(0, 20)]);
        s.insert(Interval::new(30, 30));
        assert_eq!(s.measure(), 20);
    }

    #[test]
    fn difference_of_single_pair() {
        let whole = set(&[(0, 1000)]);
        let gap = set(&[(200, 500)]);
        assert_eq!(whole.difference(&gap), set(&[(0, 200), (500, 1000)]));
        assert_eq!(whole.intersection(&gap), gap);
    }

    fn brute(v: &[(i64, i64)]) -> Vec<bool> {
        let mut cells = vec![false; 64];
        for &(a, b) in v {
            for c in cells.iter_mut().take(b.max(0) as usize).skip(a as usize) {
                *c = true;
            }
        }
        cells
    }

    fn spans() -> impl Strategy<Value = Vec<(i64, i64)>> {
        prop::collection::vec((0i64..64, 0i64..16).prop_map(|(a, l)| (a, (a + l).min(64))), 0..8)
    }

    proptest! {
        #[test]
        fn algebra_matches_cells(a in spans(), b in spans()) {
            let (sa, sb) = (set(&a), set(&b));
            let (ca, cb) = (brute(&a), brute(&b));
            let check = |s: &IntervalSet, f: &dyn Fn(bool, bool) -> bool| {
                for t in 0..64 {
                    prop_assert_eq!(s.contains(t), f(ca[t as usize], cb[t as usize]));
                }
                let w = s.as_slice();
                for pair in w.windows(2) {
                    prop_assert!(pair[0].end < pair[1].start);
                }
                prop_assert!(w.iter().all(|iv| !iv.is_empty()));
                Ok(())
            };
            check(&sa.union(&sb), &|x, y| x || y)?;
            check(&sa.intersection(&sb), &|x, y| x && y)?;
            check(&sa.difference(&sb), &|x, y| x && !y)?;
            let mut inc = sa.clone();
            for iv in sb.iter() { inc.insert(*iv); }
            prop_assert_eq!(inc, sa.union(&sb));
        }
    }
}
