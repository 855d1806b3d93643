//! Deterministic per-site Poisson event streams.
//!
//! Every site owns an addressable rate-`rate` Poisson process realized as
//! cumulative Exp gaps drawn from a counter-based stream keyed by
//! (global_seed, site coordinates). Queries are pure: any process can read
//! any site's events in any order and see the same realization, which is
//! what the monotone and supremum couplings require. The time line extends
//! to negative reals through a second, independently keyed substream, so a
//! field can be translated (theta_s) past the origin.

use crate::lattice::Site;
use crate::rng;

const POS_SALT: u64 = 0x9e6c_63d0_876a_7309;
const NEG_SALT: u64 = 0x38f2_13a1_b062_11c7;

/// Immutable handle to the whole family of site clocks.
#[derive(Clone, Debug, PartialEq)]
pub struct ClockField {
    pub global_seed: u64,
    pub rate: f64,
    /// Time translation theta_s: events of the underlying realization at
    /// raw time r are reported at user time r - origin_shift.
    pub origin_shift: f64,
}

impl ClockField {
    pub fn new(global_seed: u64) -> Self {
        ClockField {
            global_seed,
            rate: 1.0,
            origin_shift: 0.0,
        }
    }

    pub fn with_rate(global_seed: u64, rate: f64) -> Self {
        assert!(rate > 0.0, "rate must be positive");
        ClockField {
            global_seed,
            rate,
            origin_shift: 0.0,
        }
    }

    fn site_key(&self, u: &Site) -> u64 {
        let base = rng::derive(self.global_seed, "clocks", &[]);
        let words: Vec<u64> = u.coords.iter().map(|&c| c as u64).collect();
        rng::mix_words(base, &words)
    }

    /// k-th epoch gap of the forward substream.
    fn pos_gap(&self, key: u64, k: u64) -> f64 {
        rng::stream_exp(rng::mix(key ^ POS_SALT), k, self.rate)
    }

    fn neg_gap(&self, key: u64, k: u64) -> f64 {
        rng::stream_exp(rng::mix(key ^ NEG_SALT), k, self.rate)
    }

    /// Exactly the epochs of site `u`'s process in user-time window
    /// (t0, t1]. Repeat calls return identical lists.
    pub fn clock_events(&self, u: &Site, t0: f64, t1: f64) -> Vec<f64> {
        assert!(t0 < t1, "window must satisfy t0 < t1");
        assert!(t0.is_finite() && t1.is_finite());
        let key = self.site_key(u);
        let (a, b) = (t0 + self.origin_shift, t1 + self.origin_shift);
        let mut out = Vec::new();
        if a < 0.0 {
            // negative raw epochs -G0, -(G0+G1), ... collected descending
            let mut acc = 0.0;
            let mut k = 0u64;
            let mut neg = Vec::new();
            loop {
                acc += self.neg_gap(key, k);
                let epoch = -acc;
                if epoch <= a {
                    break;
                }
                if epoch <= b {
                    neg.push(epoch);
                }
                k += 1;
            }
            neg.reverse();
            out.extend(neg);
        }
        if b > 0.0 {
            let mut acc = 0.0;
            let mut k = 0u64;
            loop {
                acc += self.pos_gap(key, k);
                if acc > b {
                    break;
                }
                if acc > a {
                    out.push(acc);
                }
                k += 1;
            }
        }
        for e in &mut out {
            *e -= self.origin_shift;
        }
        out
    }

    /// Walker over a site's epochs in increasing user time, for event loops
    /// that consume one epoch at a time.
    pub fn cursor(&self, u: &Site, start: f64) -> ClockCursor {
        let key = self.site_key(u);
        let raw_start = start + self.origin_shift;
        let mut buffered = Vec::new();
        if raw_start < 0.0 {
            let mut acc = 0.0;
            let mut k = 0u64;
            loop {
                acc += self.neg_gap(key, k);
                let epoch = -acc;
                if epoch <= raw_start {
                    break;
                }
                buffered.push(epoch);
                k += 1;
            }
            buffered.reverse();
        }
        let mut cur = ClockCursor {
            key,
            rate_owner: self.clone(),
            buffered,
            buf_pos: 0,
            pos_acc: 0.0,
            pos_k: 0,
        };
        // skip forward epochs at or before the start
        if raw_start >= 0.0 {
            loop {
                let next = cur.pos_acc + cur.rate_owner.pos_gap(cur.key, cur.pos_k);
                if next > raw_start {
                    break;
                }
                cur.pos_acc = next;
                cur.pos_k += 1;
            }
        }
        cur
    }
}

/// Applies the time translation theta_s: the shifted field read from user
/// time 0 looks like the original read from time s.
pub fn shift_clocks(field: &ClockField, s: f64) -> ClockField {
    ClockField {
        global_seed: field.global_seed,
        rate: field.rate,
        origin_shift: field.origin_shift + s,
    }
}

/// Incremental epoch walker for one site. Yields raw epochs in increasing
/// order; user time = raw - origin_shift.
pub struct ClockCursor {
    key: u64,
    rate_owner: ClockField,
    buffered: Vec<f64>,
    buf_pos: usize,
    pos_acc: f64,
    pos_k: u64,
}

impl ClockCursor {
    /// Next epoch in user time.
    pub fn next_event(&mut self) -> f64 {
        if self.buf_pos < self.buffered.len() {
            let e = self.buffered[self.buf_pos];
            self.buf_pos += 1;
            return e - self.rate_owner.origin_shift;
        }
        self.pos_acc += self.rate_owner.pos_gap(self.key, self.pos_k);
        self.pos_k += 1;
        self.pos_acc - self.rate_owner.origin_shift
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats;

    #[test]
    fn repeat_queries_identical() {
        let f = ClockField::new(42);
        let u = Site::new(vec![3, -1]);
        let a = f.clock_events(&u, 0.0, 10.0);
        let b = f.clock_events(&u, 0.0, 10.0);
        assert_eq!(a, b);
        assert!(a.windows(2).all(|w| w[0] < w[1]), "strictly increasing");
    }

    #[test]
    fn subwindow_queries_agree_with_full_window() {
        let f = ClockField::new(9);
        let u = Site::new(vec![0]);
        let full = f.clock_events(&u, 0.0, 8.0);
        let mut parts = f.clock_events(&u, 0.0, 3.0);
        parts.extend(f.clock_events(&u, 3.0, 8.0));
        assert_eq!(full, parts);
    }

    #[test]
    fn zero_shift_is_identity() {
        let f = ClockField::new(5);
        let g = shift_clocks(&f, 0.0);
        let u = Site::new(vec![2]);
        assert_eq!(f.clock_events(&u, 0.0, 20.0), g.clock_events(&u, 0.0, 20.0));
    }

    #[test]
    fn shift_round_trip_recovers_original() {
        let f = ClockField::new(5);
        let g = shift_clocks(&shift_clocks(&f, 2.75), -2.75);
        let u = Site::new(vec![-4]);
        assert_eq!(f.clock_events(&u, 0.0, 15.0), g.clock_events(&u, 0.0, 15.0));
    }

    #[test]
    fn shift_translates_events() {
        // an event at user time 5 under shift s=2 appears at user time 3
        let f = ClockField::new(77);
        let u = Site::new(vec![1]);
        let s = 2.0;
        let orig = f.clock_events(&u, s, 6.0 + s);
        let shifted = shift_clocks(&f, s).clock_events(&u, 0.0, 6.0);
        assert_eq!(orig.len(), shifted.len());
        for (a, b) in orig.iter().zip(&shifted) {
            assert!((a - s - b).abs() < 1e-12, "{a} vs {b}+{s}");
        }
    }

    #[test]
    fn negative_windows_are_supported_and_consistent() {
        let f = ClockField::new(13);
        let u = Site::new(vec![0]);
        let full = f.clock_events(&u, -6.0, 4.0);
        assert!(full.windows(2).all(|w| w[0] < w[1]));
        let mut parts = f.clock_events(&u, -6.0, -1.5);
        parts.extend(f.clock_events(&u, -1.5, 4.0));
        assert_eq!(full, parts);
        // translated negative window equals shifted query
        let g = shift_clocks(&f, -8.0);
        let a = f.clock_events(&u, -6.0, 4.0);
        let b = g.clock_events(&u, 2.0, 12.0);
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(&b) {
            assert!((x - (y - 8.0)).abs() < 1e-12);
        }
    }

    #[test]
    fn cursor_agrees_with_window_query() {
        let f = ClockField::new(21);
        let u = Site::new(vec![5]);
        let events = f.clock_events(&u, 1.0, 9.0);
        let mut cur = f.cursor(&u, 1.0);
        for &e in &events {
            assert_eq!(cur.next_event(), e);
        }
        assert!(cur.next_event() > 9.0);
    }

    #[test]
    fn cursor_handles_negative_start() {
        let f = shift_clocks(&ClockField::new(33), -10.0);
        let u = Site::new(vec![2]);
        let events = f.clock_events(&u, 0.0, 14.0);
        assert!(!events.is_empty());
        let mut cur = f.cursor(&u, 0.0);
        for &e in &events {
            assert_eq!(cur.next_event(), e);
        }
    }

    #[test]
    fn unit_window_mean_count_near_one() {
        // 10^4 seeds, rate 1, unit window: mean count within 3 sigma = 0.03
        let u = Site::new(vec![0]);
        let n = 10_000;
        let total: usize = (0..n)
            .map(|s| ClockField::new(s as u64).clock_events(&u, 0.0, 1.0).len())
            .sum();
        let mean = total as f64 / n as f64;
        assert!((mean - 1.0).abs() < 0.03, "mean count = {mean}");
    }

    #[test]
    fn gaps_pass_ks_against_exponential() {
        // stationarity: 10^4 inter-event gaps vs Exp(rate), level 0.01
        let f = ClockField::with_rate(2024, 1.0);
        let u = Site::new(vec![7]);
        let events = f.clock_events(&u, 0.0, 10_500.0);
        assert!(events.len() > 10_000);
        let mut gaps = Vec::with_capacity(10_000);
        let mut prev = 0.0;
        for &e in events.iter().take(10_001) {
            gaps.push(e - prev);
            prev = e;
        }
        let (_, p) = stats::ks_one_sample_exp(&gaps, 1.0);
        assert!(p >= 0.01, "KS p-value = {p}");
    }

    #[test]
    fn counts_at_distinct_sites_uncorrelated() {
        let u = Site::new(vec![0]);
        let v = Site::new(vec![1]);
        let n = 10_000;
        let mut xs = Vec::with_capacity(n);
        let mut ys = Vec::with_capacity(n);
        for s in 0..n {
            let f = ClockField::new(s as u64);
            xs.push(f.clock_events(&u, 0.0, 1.0).len() as f64);
            ys.push(f.clock_events(&v, 0.0, 1.0).len() as f64);
        }
        let rho = stats::correlation(&xs, &ys);
        assert!(rho.abs() < 0.05, "correlation = {rho}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]

            #[test]
            fn window_splits_are_consistent(
                seed in any::<u64>(),
                coord in -50i64..50,
                a in -20.0f64..20.0,
                len1 in 0.1f64..10.0,
                len2 in 0.1f64..10.0,
            ) {
                let f = ClockField::new(seed);
                let u = Site::new(vec![coord]);
                let m = a + len1;
                let b = m + len2;
                let full = f.clock_events(&u, a, b);
                let mut parts = f.clock_events(&u, a, m);
                parts.extend(f.clock_events(&u, m, b));
                prop_assert_eq!(full, parts);
            }

            #[test]
            fn events_lie_in_window_and_increase(
                seed in any::<u64>(),
                shift in -8.0f64..8.0,
                t0 in -10.0f64..10.0,
                len in 0.5f64..15.0,
            ) {
                let f = shift_clocks(&ClockField::new(seed), shift);
                let u = Site::new(vec![1, -2]);
                let events = f.clock_events(&u, t0, t0 + len);
                for w in events.windows(2) {
                    prop_assert!(w[0] < w[1]);
                }
                for e in &events {
                    prop_assert!(*e > t0 && *e <= t0 + len);
                }
            }
        }
    }

    #[test]
    fn disjoint_window_counts_have_poisson_moments() {
        // counts over disjoint unit windows across seeds: mean ~ var ~ rate
        let u = Site::new(vec![0]);
        let n = 10_000;
        let counts: Vec<f64> = (0..n)
            .map(|s| {
                ClockField::with_rate(s as u64, 2.0)
                    .clock_events(&u, 3.0, 4.0)
                    .len() as f64
            })
            .collect();
        let (mean, _) = stats::mean_stderr(&counts);
        let var = stats::variance(&counts);
        assert!((mean - 2.0).abs() < 0.06, "mean = {mean}");
        assert!((var - 2.0).abs() < 0.15, "var = {var}");
    }
}
