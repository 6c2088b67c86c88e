//! Latency accounting for the open-loop load generator.

use std::time::Duration;

use serde::{Deserialize, Serialize};

/// Nearest-rank percentile: the smallest sample with at least `p`% of
/// samples at or below it. `sorted` must be ascending; `p` in (0, 100].
pub fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() || !(p > 0.0 && p <= 100.0) {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Percentiles {
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub max: f64,
}

impl Percentiles {
    /// From unsorted millisecond samples; all zero when empty.
    pub fn from_samples(samples: &[f64]) -> Self {
        let mut s = samples.to_vec();
        s.sort_by(f64::total_cmp);
        let at = |p| percentile(&s, p).unwrap_or(0.0);
        Self { p50: at(50.0), p90: at(90.0), p99: at(99.0), max: s.last().copied().unwrap_or(0.0) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoadReport {
    pub offered_rps: f64,
    pub achieved_rps: f64,
    pub duration_s: f64,
    /// Requests scheduled by the arrival process.
    pub scheduled: u64,
    /// Responses received, successful or not.
    pub completed: u64,
    pub errors: u64,
    /// Arrivals dropped because the in-flight cap was reached.
    pub shed: u64,
    pub max_in_flight: u64,
    pub latency_ms: Percentiles,
}

impl LoadReport {
    pub fn empty(duration: Duration) -> Self {
        Self {
            offered_rps: 0.0,
            achieved_rps: 0.0,
            duration_s: duration.as_secs_f64(),
            scheduled: 0,
            completed: 0,
            errors: 0,
            shed: 0,
            max_in_flight: 0,
            latency_ms: Percentiles::default(),
        }
    }

    /// Build a report from per-request latencies of completed requests.
    pub fn from_run(
        offered_rps: f64,
        duration: Duration,
        scheduled: u64,
        latencies_ms: &[f64],
        errors: u64,
        shed: u64,
        max_in_flight: u64,
    ) -> Self {
        let secs = duration.as_secs_f64();
        let completed = latencies_ms.len() as u64;
        let achieved = if secs > 0.0 { (completed as f64 / secs).min(offered_rps) } else { 0.0 };
        Self {
            offered_rps,
            achieved_rps: achieved,
            duration_s: secs,
            scheduled,
            completed,
            errors,
            shed,
            max_in_flight,
            latency_ms: Percentiles::from_samples(latencies_ms),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    /// Independent definition: smallest sample `x` with
    /// `100 * #{v <= x} >= p * n`.
    fn oracle(samples: &[f64], p: f64) -> f64 {
        let n = samples.len() as f64;
        let mut best = f64::INFINITY;
        for &x in samples {
            let at_or_below = samples.iter().filter(|&&v| v <= x).count() as f64;
            if 100.0 * at_or_below >= p * n && x < best {
                best = x;
            }
        }
        best
    }

    proptest! {
        #[test]
        fn percentiles_match_brute_force(samples in proptest::collection::vec(0.0f64..500.0, 1..300), p in prop_oneof![Just(50.0), Just(90.0), Just(99.0), 1.0f64..100.0]) {
            let mut sorted = samples.clone();
            sorted.sort_by(f64::total_cmp);
            prop_assert_eq!(percentile(&sorted, p).unwrap(), oracle(&samples, p));
        }

        #[test]
        fn percentiles_are_ordered(samples in proptest::collection::vec(0.0f64..500.0, 0..300)) {
            let q = Percentiles::from_samples(&samples);
            prop_assert!(q.p50 <= q.p90 && q.p90 <= q.p99 && q.p99 <= q.max);
        }
    }

    #[test]
    fn small_cases() {
        assert_eq!(percentile(&[], 50.0), None);
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 50.0), Some(2.0));
        assert_eq!(percentile(&[1.0, 2.0, 3.0, 4.0], 99.0), Some(4.0));
        let r = LoadReport::from_run(10.0, Duration::from_secs(1), 10, &[1.0; 10], 0, 0, 1);
        assert_eq!(r.achieved_rps, 10.0);
        assert_eq!(LoadReport::empty(Duration::ZERO).completed, 0);
    }
}
