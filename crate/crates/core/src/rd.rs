//! Rate-distortion bucket design.
//!
//! Sorted delta values are cut into at most `k_max` contiguous intervals so
//! that `E + lambda * H` is minimal, where `E` is the squared error against
//! each interval's mean and `H` the entropy (bits) of the interval occupancy.
//! Both terms are additive over intervals, so an exact dynamic program over
//! (suffix start, intervals left) finds the optimum in `O(k n^2)`. Large
//! inputs are first reduced to a seeded sample.

use alloc::vec;
use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::quantize::{Bucket, BucketKey, QuantizedDelta, Scheme};
use crate::state::DeltaVector;
use crate::{Error, Result};

/// Upper bound on `k_max`; bucket indices are `u16`.
pub const MAX_INTERVALS: usize = 1 << 15;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RdConfig {
    pub k_max: usize,
    pub lambda: f64,
    /// Inputs longer than this are partitioned on a sample.
    pub sample_cap: usize,
    /// Largest-magnitude points always kept in the sample.
    pub top_m: usize,
    pub seed: u64,
}

impl Default for RdConfig {
    fn default() -> Self {
        Self { k_max: 8, lambda: 0.1, sample_cap: 2048, top_m: 64, seed: 0 }
    }
}

impl RdConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k_max == 0 || self.k_max > MAX_INTERVALS {
            return Err(Error::Config("k_max must be in 1..=32768"));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config("lambda must be finite and non-negative"));
        }
        if self.sample_cap < self.k_max {
            return Err(Error::Config("sample_cap must be at least k_max"));
        }
        if self.top_m > self.sample_cap {
            return Err(Error::Config("top_m must not exceed sample_cap"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdInterval {
    /// First position in the sorted array.
    pub start: usize,
    pub count: usize,
    pub mean: f64,
    /// Sum of squared deviations from `mean`.
    pub sse: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RdPartition {
    /// Start positions of intervals 1.., strictly increasing.
    pub boundaries: Vec<usize>,
    pub intervals: Vec<RdInterval>,
    pub distortion: f64,
    /// Occupancy entropy in bits per element.
    pub entropy: f64,
    pub cost: f64,
}

impl RdPartition {
    /// Recomputes every statistic of the partition of `values` cut at
    /// `boundaries` directly from the data.
    pub fn evaluate(values: &[f32], boundaries: &[usize], lambda: f64) -> Result<Self> {
        let n = values.len();
        if n == 0 {
            return Err(Error::Empty);
        }
        let mut starts = Vec::with_capacity(boundaries.len() + 1);
        starts.push(0);
        starts.extend_from_slice(boundaries);
        if starts.windows(2).any(|w| w[0] >= w[1]) || boundaries.last().is_some_and(|&b| b >= n) {
            return Err(Error::Domain("boundaries must be increasing and inside the input"));
        }
        let mut intervals = Vec::with_capacity(starts.len());
        let (mut distortion, mut entropy) = (0.0, 0.0);
        for (i, &start) in starts.iter().enumerate() {
            let end = starts.get(i + 1).copied().unwrap_or(n);
            let members = &values[start..end];
            let count = members.len();
            let mean = members.iter().map(|&v| f64::from(v)).sum::<f64>() / count as f64;
            let sse = members.iter().map(|&v| sq(f64::from(v) - mean)).sum::<f64>();
            distortion += sse;
            entropy += entropy_term(count, n);
            intervals.push(RdInterval { start, count, mean, sse });
        }
        Ok(Self {
            boundaries: boundaries.to_vec(),
            intervals,
            distortion,
            entropy,
            cost: distortion + lambda * entropy,
        })
    }

    pub fn len(&self) -> usize {
        self.intervals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }
}

fn sq(x: f64) -> f64 {
    x * x
}

/// `(c/n) log2(n/c)`: one interval's share of the occupancy entropy.
fn entropy_term(count: usize, n: usize) -> f64 {
    let p = count as f64 / n as f64;
    -p * libm::log2(p)
}

fn check_sorted(values: &[f32]) -> Result<()> {
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    if values.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Domain("values must be sorted ascending"));
    }
    Ok(())
}

/// Exact optimum over all partitions of the sorted `values` into at most
/// `k_max` contiguous intervals. Ties go to fewer intervals, then to the
/// lexicographically smallest boundary vector.
pub fn rd_partition_dp(values: &[f32], cfg: &RdConfig) -> Result<RdPartition> {
    cfg.validate()?;
    check_sorted(values)?;
    let boundaries = dp_boundaries(values, None, cfg.k_max, cfg.lambda);
    RdPartition::evaluate(values, &boundaries, cfg.lambda)
}

/// Optimal cut positions. `weights` gives each point a multiplicity; `None`
/// means every point counts once.
fn dp_boundaries(values: &[f32], weights: Option<&[f64]>, k_max: usize, lambda: f64) -> Vec<usize> {
    let n = values.len();
    let k_max = k_max.min(n);
    // Shift by the midpoint so the prefix sums of squares stay small.
    let shift = (f64::from(values[0]) + f64::from(values[n - 1])) / 2.0;
    let mut s0 = vec![0.0f64; n + 1];
    let mut s1 = vec![0.0f64; n + 1];
    let mut s2 = vec![0.0f64; n + 1];
    for (i, &v) in values.iter().enumerate() {
        let w = weights.map_or(1.0, |w| w[i]);
        let x = f64::from(v) - shift;
        s0[i + 1] = s0[i] + w;
        s1[i + 1] = s1[i] + w * x;
        s2[i + 1] = s2[i] + w * x * x;
    }
    let total = s0[n];
    let interval_cost = |a: usize, b: usize| {
        let c = s0[b] - s0[a];
        let sum = s1[b] - s1[a];
        let sse = (s2[b] - s2[a] - sum * sum / c).max(0.0);
        sse + lambda * (c / total) * libm::log2(total / c)
    };

    // best[j][i]: cheapest split of values[i..] into exactly j + 1 intervals;
    // cut[j][i]: where the first of them ends (smallest such on ties).
    // Suffixes are filled from the right so every interval cost is computed
    // once and offered to all layers.
    let mut best = vec![vec![f64::INFINITY; n + 1]; k_max];
    let mut cut = vec![vec![0u32; n + 1]; k_max];
    for i in (0..n).rev() {
        best[0][i] = interval_cost(i, n);
        cut[0][i] = n as u32;
        for c in i + 1..n {
            let head = interval_cost(i, c);
            for j in 1..k_max.min(n - i) {
                let v = head + best[j - 1][c];
                if v < best[j][i] {
                    best[j][i] = v;
                    cut[j][i] = c as u32;
                }
            }
        }
    }
    let mut used = 0;
    for j in 1..k_max {
        if best[j][0] < best[used][0] {
            used = j;
        }
    }
    let mut boundaries = Vec::with_capacity(used);
    let mut i = 0;
    for j in (1..=used).rev() {
        i = cut[j][i] as usize;
        boundaries.push(i);
    }
    boundaries
}

/// Partitions a seeded sample of `values` and applies the resulting
/// thresholds to the full input. Inputs within `sample_cap` go straight to
/// [`rd_partition_dp`].
pub fn sample_then_partition(values: &[f32], cfg: &RdConfig) -> Result<RdPartition> {
    cfg.validate()?;
    check_sorted(values)?;
    let n = values.len();
    if n <= cfg.sample_cap {
        return rd_partition_dp(values, cfg);
    }
    let (sample, weights) = sample_positions(values, cfg);
    let sampled: Vec<f32> = sample.iter().map(|&p| values[p]).collect();
    let cuts = dp_boundaries(&sampled, Some(&weights), cfg.k_max, cfg.lambda);
    // An interval of the sample starting at value t claims every full-set
    // value >= t. Equal thresholds collapse, so empty intervals vanish.
    let mut boundaries: Vec<usize> = cuts
        .iter()
        .map(|&c| values.partition_point(|&v| v < sampled[c]))
        .filter(|&b| b > 0 && b < n)
        .collect();
    boundaries.dedup();
    RdPartition::evaluate(values, &boundaries, cfg.lambda)
}

/// Sorted positions of the sample with their weights: the `top_m` largest
/// magnitudes (ties to the lower position) stand for themselves, each of the
/// uniform draws from the rest stands for its share of the remainder.
fn sample_positions(values: &[f32], cfg: &RdConfig) -> (Vec<usize>, Vec<f64>) {
    let n = values.len();
    let mut by_magnitude: Vec<usize> = (0..n).collect();
    by_magnitude.sort_by(|&a, &b| values[b].abs().total_cmp(&values[a].abs()).then(a.cmp(&b)));
    let (top, rest) = by_magnitude.split_at(cfg.top_m);
    let mut rest = rest.to_vec();
    rest.sort_unstable();
    let draws = cfg.sample_cap - cfg.top_m;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let picked = rand::seq::index::sample(&mut rng, rest.len(), draws);
    let share = rest.len() as f64 / draws as f64;
    let mut out: Vec<(usize, f64)> = top.iter().map(|&p| (p, 1.0)).collect();
    out.extend(picked.iter().map(|i| (rest[i], share)));
    out.sort_unstable_by_key(|&(p, _)| p);
    out.into_iter().unzip()
}

/// Quantizes a delta with interval-mean representatives. Bucket `i` is the
/// `i`-th interval in ascending value order.
pub fn rd_quantize(delta: &DeltaVector, cfg: &RdConfig) -> Result<QuantizedDelta> {
    cfg.validate()?;
    let values = delta.values();
    if values.is_empty() {
        return Err(Error::Empty);
    }
    if let Some(index) = values.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    let mut order: Vec<u32> = (0..values.len() as u32).collect();
    order.sort_by(|&a, &b| values[a as usize].total_cmp(&values[b as usize]).then(a.cmp(&b)));
    // total_cmp puts -0.0 before 0.0; plain comparison treats them equal, as
    // the partition code expects.
    let sorted: Vec<f32> = order.iter().map(|&i| values[i as usize]).collect();
    let partition = sample_then_partition(&sorted, cfg)?;
    let mut indices = vec![0u16; values.len()];
    let mut buckets = Vec::with_capacity(partition.len());
    for (b, iv) in partition.intervals.iter().enumerate() {
        for &pos in &order[iv.start..iv.start + iv.count] {
            indices[pos as usize] = b as u16;
        }
        buckets.push(Bucket {
            key: BucketKey::Interval(b as u16),
            representative: iv.mean as f32,
            count: iv.count as u64,
        });
    }
    Ok(QuantizedDelta::from_table(Scheme::RateDistortion, buckets, None, indices))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantize::{dequantize, mse, quantize};
    use proptest::prelude::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    fn cfg(k_max: usize, lambda: f64) -> RdConfig {
        RdConfig { k_max, lambda, sample_cap: 4096, top_m: 0, seed: 7 }
    }

    /// Cost of the best partition found by enumerating every boundary set.
    fn brute_force(values: &[f32], k_max: usize, lambda: f64) -> f64 {
        let n = values.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..1 << (n - 1) {
            if mask.count_ones() as usize + 1 > k_max {
                continue;
            }
            let cuts: Vec<usize> = (1..n).filter(|&p| mask & (1 << (p - 1)) != 0).collect();
            let p = RdPartition::evaluate(values, &cuts, lambda).unwrap();
            best = best.min(p.cost);
        }
        best
    }

    fn sorted(mut v: Vec<f32>) -> Vec<f32> {
        v.sort_by(f32::total_cmp);
        v
    }

    #[test]
    fn exact_clusters() {
        let p = rd_partition_dp(&[1.0, 1.0, 1.0, 10.0, 10.0], &cfg(2, 0.0)).unwrap();
        assert_eq!(p.boundaries, [3]);
        assert_eq!(p.distortion, 0.0);
        assert_eq!(p.cost, 0.0);
    }

    #[test]
    fn single_interval_budget() {
        let v = [1.0, 2.0, 4.0, 8.0];
        let p = rd_partition_dp(&v, &cfg(1, 3.0)).unwrap();
        assert!(p.boundaries.is_empty());
        assert_eq!(p.entropy, 0.0);
        // n * variance: mean 3.75.
        let expect = [1.0f64, 2.0, 4.0, 8.0].iter().map(|x| (x - 3.75) * (x - 3.75)).sum::<f64>();
        assert!((p.distortion - expect).abs() < 1e-12);
    }

    #[test]
    fn prefers_fewer_intervals_on_ties() {
        // Constant input: every partition has E = 0, so only H decides and
        // with lambda = 0 all costs tie.
        let p = rd_partition_dp(&[2.0; 6], &cfg(4, 0.0)).unwrap();
        assert!(p.boundaries.is_empty());
    }

    #[test]
    fn rejects_bad_input() {
        assert_eq!(rd_partition_dp(&[], &cfg(2, 0.0)).unwrap_err(), Error::Empty);
        assert!(rd_partition_dp(&[2.0, 1.0], &cfg(2, 0.0)).is_err());
        assert!(rd_partition_dp(&[1.0], &cfg(0, 0.0)).is_err());
        assert!(rd_partition_dp(&[1.0], &cfg(1, -1.0)).is_err());
        let bad = RdConfig { sample_cap: 2, k_max: 3, ..cfg(3, 0.0) };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn matches_brute_force_on_fixed_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..60 {
            let n = rng.random_range(1..=12);
            let v = sorted((0..n).map(|_| rng.random_range(-4i32..=4) as f32 * 0.5).collect());
            for k in 1..=4 {
                for lambda in [0.0, 0.5, 2.0] {
                    let p = rd_partition_dp(&v, &cfg(k, lambda)).unwrap();
                    let b = brute_force(&v, k, lambda);
                    assert!((p.cost - b).abs() <= 1e-9 * (1.0 + b.abs()), "{v:?} k={k} l={lambda}");
                }
            }
        }
    }

    #[test]
    fn constant_vector_is_one_lossless_bucket() {
        let q = rd_quantize(&DeltaVector::new(vec![0.3; 50]), &cfg(4, 0.1)).unwrap();
        assert_eq!(q.table().len(), 1);
        assert_eq!(dequantize(&q).values(), &[0.3f32; 50][..]);
    }

    #[test]
    fn bimodal_beats_midrange() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let values: Vec<f32> = (0..2000)
            .map(|i| {
                let centre = if i % 2 == 0 { 1.5 } else { -1.5 };
                centre + rng.random_range(-0.2f32..0.2)
            })
            .collect();
        let d = DeltaVector::new(values);
        let rd = rd_quantize(&d, &RdConfig { k_max: 2, lambda: 0.0, ..RdConfig::default() }).unwrap();
        let exp = quantize(&d).unwrap();
        assert_eq!(rd.table().len(), 2);
        assert!(mse(&d, &rd).unwrap() <= mse(&d, &exp).unwrap());
    }

    #[test]
    fn large_lambda_collapses_to_one_interval() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let v = sorted((0..200).map(|_| rng.random_range(-1.0f32..1.0)).collect());
        let p = rd_partition_dp(&v, &cfg(8, 1e9)).unwrap();
        assert_eq!(p.len(), 1);
    }

    #[test]
    fn sampling_is_deterministic_and_close_to_full_dp() {
        let normal = Normal::new(0.0f32, 1.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let v = sorted((0..10_000).map(|_| normal.sample(&mut rng)).collect());
        let full = rd_partition_dp(&v, &RdConfig { k_max: 8, lambda: 0.1, sample_cap: 10_000, top_m: 0, seed: 0 }).unwrap();
        for seed in 0..5 {
            let c = RdConfig { seed, ..RdConfig::default() };
            let a = sample_then_partition(&v, &c).unwrap();
            assert_eq!(a, sample_then_partition(&v, &c).unwrap());
            assert!(a.cost <= full.cost * 1.05, "sampled {} full {}", a.cost, full.cost);
            assert_eq!(a.intervals.iter().map(|i| i.count).sum::<usize>(), v.len());
        }
    }

    #[test]
    fn sampling_bypassed_when_small() {
        let v = [0.0f32, 1.0, 5.0, 6.0];
        let c = RdConfig { k_max: 2, lambda: 0.0, sample_cap: 4, top_m: 1, seed: 1 };
        assert_eq!(sample_then_partition(&v, &c).unwrap(), rd_partition_dp(&v, &c).unwrap());
    }

    proptest! {
        #[test]
        fn dp_matches_brute_force(
            raw in prop::collection::vec(-20i32..20, 1..=10),
            k in 1usize..=4,
            lambda in prop::sample::select(vec![0.0, 0.5, 2.0]),
        ) {
            let v = sorted(raw.iter().map(|&x| x as f32 * 0.25).collect());
            let p = rd_partition_dp(&v, &cfg(k, lambda)).unwrap();
            let b = brute_force(&v, k, lambda);
            prop_assert!((p.cost - b).abs() <= 1e-9 * (1.0 + b.abs()));
            prop_assert!(p.len() <= k);
        }

        #[test]
        fn cost_monotone_in_budget_and_lambda(raw in prop::collection::vec(-1000i32..1000, 2..60)) {
            let v = sorted(raw.iter().map(|&x| x as f32 / 100.0).collect());
            let mut last = f64::INFINITY;
            for k in 1..=6 {
                let c = rd_partition_dp(&v, &cfg(k, 0.3)).unwrap().cost;
                prop_assert!(c <= last + 1e-9);
                last = c;
            }
            let mut prev_e = f64::INFINITY;
            let mut prev_h = 0.0;
            for lambda in [4.0, 1.0, 0.25, 0.0] {
                let p = rd_partition_dp(&v, &cfg(5, lambda)).unwrap();
                // Walking lambda down the frontier: E falls, H rises.
                prop_assert!(p.distortion <= prev_e + 1e-9);
                prop_assert!(p.entropy + 1e-9 >= prev_h);
                prev_e = p.distortion;
                prev_h = p.entropy;
            }
            let hi = rd_partition_dp(&v, &cfg(5, 3.0)).unwrap().cost;
            let lo = rd_partition_dp(&v, &cfg(5, 1.0)).unwrap().cost;
            prop_assert!(lo <= hi + 1e-9);
        }

        #[test]
        fn means_are_stationary(raw in prop::collection::vec(-1000i32..1000, 2..40)) {
            let v = sorted(raw.iter().map(|&x| x as f32 / 10.0).collect());
            let p = rd_partition_dp(&v, &cfg(3, 0.0)).unwrap();
            for iv in &p.intervals {
                let members = &v[iv.start..iv.start + iv.count];
                for eps in [1e-3, -1e-3] {
                    let shifted: f64 = members.iter().map(|&x| sq(f64::from(x) - iv.mean - eps)).sum();
                    prop_assert!(shifted > iv.sse);
                }
            }
        }

        #[test]
        fn sampled_partition_tiles(seed in any::<u64>(), n in 50usize..400) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let v = sorted((0..n).map(|_| rng.random_range(-3.0f32..3.0)).collect());
            let c = RdConfig { k_max: 5, lambda: 0.1, sample_cap: 40, top_m: 5, seed };
            let p = sample_then_partition(&v, &c).unwrap();
            let mut next = 0;
            for iv in &p.intervals {
                prop_assert_eq!(iv.start, next);
                prop_assert!(iv.count > 0);
                next += iv.count;
            }
            prop_assert_eq!(next, n);
        }

        #[test]
        fn quantize_assigns_interval_members(values in prop::collection::vec(-100i32..100, 1..80)) {
            let d = DeltaVector::new(values.iter().map(|&x| x as f32 / 8.0).collect());
            let q = rd_quantize(&d, &cfg(4, 0.05)).unwrap();
            prop_assert_eq!(q.len(), d.len());
            // Intervals are ordered: a larger value never gets a smaller bucket.
            for (i, &a) in d.values().iter().enumerate() {
                for (j, &b) in d.values().iter().enumerate() {
                    if a < b {
                        prop_assert!(q.indices()[i] <= q.indices()[j]);
                    }
                }
            }
        }
    }
}
