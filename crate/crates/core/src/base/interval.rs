//! Finite unions of closed real intervals.

use std::fmt;

/// A sorted union of disjoint closed intervals.
///
/// Intervals that overlap or touch are merged on construction, so the stored
/// list always satisfies `b_i < a_{i+1}`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct IntervalUnion {
    intervals: Vec<(f64, f64)>,
}

impl IntervalUnion {
    pub fn empty() -> Self {
        IntervalUnion::default()
    }

    /// Builds a normalised union. Endpoints given in the wrong order are
    /// swapped.
    pub fn new(intervals: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let mut v: Vec<(f64, f64)> = intervals
            .into_iter()
            .map(|(a, b)| if a <= b { (a, b) } else { (b, a) })
            .collect();
        v.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)));
        let mut out: Vec<(f64, f64)> = Vec::with_capacity(v.len());
        for (a, b) in v {
            match out.last_mut() {
                Some(last) if a <= last.1 => last.1 = last.1.max(b),
                _ => out.push((a, b)),
            }
        }
        IntervalUnion { intervals: out }
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    /// Total Lebesgue measure `Σ (b_i − a_i)`.
    pub fn measure(&self) -> f64 {
        self.intervals.iter().map(|(a, b)| b - a).sum()
    }

    pub fn min(&self) -> Option<f64> {
        self.intervals.first().map(|x| x.0)
    }

    pub fn max(&self) -> Option<f64> {
        self.intervals.last().map(|x| x.1)
    }

    pub fn contains(&self, x: f64, slack: f64) -> bool {
        self.intervals
            .iter()
            .any(|&(a, b)| x >= a - slack && x <= b + slack)
    }

    /// Distance from a real point to the union (zero inside).
    pub fn distance(&self, x: f64) -> f64 {
        self.intervals
            .iter()
            .map(|&(a, b)| {
                if x < a {
                    a - x
                } else if x > b {
                    x - b
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Whether every interval of `self` lies inside one interval of `other`
    /// widened by `slack` on each side.
    pub fn is_subset_of(&self, other: &IntervalUnion, slack: f64) -> bool {
        self.intervals.iter().all(|&(a, b)| {
            other
                .intervals
                .iter()
                .any(|&(c, d)| a >= c - slack && b <= d + slack)
        })
    }

    pub fn intersection(&self, other: &IntervalUnion) -> IntervalUnion {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let (a, b) = self.intervals[i];
            let (c, d) = other.intervals[j];
            let lo = a.max(c);
            let hi = b.min(d);
            if lo <= hi {
                out.push((lo, hi));
            }
            if b < d {
                i += 1;
            } else {
                j += 1;
            }
        }
        IntervalUnion::new(out)
    }

    /// Measure of the part of the union inside `[lo, hi]`.
    pub fn measure_within(&self, lo: f64, hi: f64) -> f64 {
        self.intersection(&IntervalUnion::new([(lo, hi)])).measure()
    }

    pub fn scaled(&self, factor: f64) -> IntervalUnion {
        IntervalUnion::new(self.intervals.iter().map(|&(a, b)| (a * factor, b * factor)))
    }

    /// Largest distance between corresponding endpoints, or infinity when the
    /// interval counts differ.
    pub fn endpoint_distance(&self, other: &IntervalUnion) -> f64 {
        if self.len() != other.len() {
            return f64::INFINITY;
        }
        self.intervals
            .iter()
            .zip(&other.intervals)
            .map(|(x, y)| (x.0 - y.0).abs().max((x.1 - y.1).abs()))
            .fold(0.0, f64::max)
    }
}

impl fmt::Display for IntervalUnion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.intervals.is_empty() {
            return f.write_str("∅");
        }
        let parts: Vec<String> = self
            .intervals
            .iter()
            .map(|(a, b)| format!("[{a}, {b}]"))
            .collect();
        f.write_str(&parts.join(" ∪ "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn measures() {
        assert_eq!(IntervalUnion::empty().measure(), 0.0);
        assert_eq!(IntervalUnion::new([(-2.0, 2.0)]).measure(), 4.0);
        assert_eq!(IntervalUnion::new([(1.0, 2.0), (-2.0, -1.0)]).measure(), 2.0);
    }

    #[test]
    fn merges_touching_and_overlapping() {
        let u = IntervalUnion::new([(0.0, 1.0), (1.0, 2.0), (1.5, 3.0), (5.0, 6.0)]);
        assert_eq!(u.intervals(), &[(0.0, 3.0), (5.0, 6.0)]);
    }

    #[test]
    fn intersection_and_window() {
        let u = IntervalUnion::new([(-2.0, -1.0), (1.0, 2.0)]);
        assert_eq!(u.measure_within(-3.0, 0.0), 1.0);
        assert_eq!(u.measure_within(-1.5, 1.5), 1.0);
        assert_eq!(u.measure_within(-10.0, -5.0), 0.0);
    }

    #[test]
    fn subset_and_distance() {
        let small = IntervalUnion::new([(-1.0, -0.5), (0.5, 1.0)]);
        let big = IntervalUnion::new([(-2.0, 2.0)]);
        assert!(small.is_subset_of(&big, 0.0));
        assert!(!big.is_subset_of(&small, 1e-9));
        assert_eq!(small.distance(0.0), 0.5);
        assert_eq!(small.distance(0.7), 0.0);
    }
}
