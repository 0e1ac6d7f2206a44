//! Comparison checkpointers: top-n sparse deltas in CSR form and rotating
//! full-precision partitions.

use std::ops::Range;

use crate::{LccError, Result};

/// Indices (ascending) of the `m` largest-magnitude entries, ties broken by
/// lower index.
pub fn topn_keep<T: Copy + Into<f64>>(delta: &[T], m: usize) -> Vec<usize> {
    let m = m.min(delta.len());
    if m == 0 {
        return Vec::new();
    }
    let mut idx: Vec<usize> = (0..delta.len()).collect();
    let cmp = |&a: &usize, &b: &usize| {
        let (x, y): (f64, f64) = (delta[a].into(), delta[b].into());
        y.abs().total_cmp(&x.abs()).then(a.cmp(&b))
    };
    if m < idx.len() {
        idx.select_nth_unstable_by(m - 1, cmp);
        idx.truncate(m);
    }
    idx.sort_unstable();
    idx
}

/// CSR bytes for one row holding `m` entries: f32 values, u32 column
/// indices and a two-entry u32 row pointer.
pub fn csr_bytes(m: usize) -> usize {
    8 * m + 8
}

/// Largest entry count whose CSR form fits in `ratio` of the dense f32 size.
pub fn topn_entries(n: usize, ratio: f64) -> usize {
    let budget = ratio * 4.0 * n as f64;
    if budget < 8.0 {
        return 0;
    }
    (((budget - 8.0) / 8.0).floor() as usize).min(n)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SparseUpdate {
    pub indices: Vec<u32>,
    pub values: Vec<f32>,
}

impl SparseUpdate {
    pub fn bytes(&self) -> usize {
        csr_bytes(self.indices.len())
    }

    pub fn apply(&self, target: &mut [f32]) {
        for (&i, &v) in self.indices.iter().zip(&self.values) {
            target[i as usize] += v;
        }
    }

    pub fn to_dense(&self, n: usize) -> Vec<f32> {
        let mut out = vec![0.0; n];
        self.apply(&mut out);
        out
    }
}

/// Sparse update holding the largest entries of `delta` that fit in
/// `ratio` of the dense size.
pub fn topn_baseline(delta: &[f32], ratio: f64) -> Result<SparseUpdate> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(LccError::Config(format!("budget ratio must lie in (0, 1], got {ratio}")));
    }
    Ok(topn_update(delta, topn_entries(delta.len(), ratio)))
}

pub fn topn_update(delta: &[f32], m: usize) -> SparseUpdate {
    let keep = topn_keep(delta, m);
    SparseUpdate { values: keep.iter().map(|&i| delta[i]).collect(), indices: keep.into_iter().map(|i| i as u32).collect() }
}

/// Rotating partition checkpoint: step `t` persists partition `t mod P` at
/// full precision; recovery reads the latest copy of every partition.
#[derive(Debug, Clone, PartialEq)]
pub struct ScarCheckpoint {
    partitions: usize,
    image: Vec<f32>,
    written_at: Vec<Option<u64>>,
}

impl ScarCheckpoint {
    /// Starts from a full copy of `base`.
    pub fn new(base: &[f32], partitions: usize) -> Result<Self> {
        if partitions == 0 || partitions > base.len() {
            return Err(LccError::Config(format!("partition count must lie in 1..={}, got {partitions}", base.len())));
        }
        Ok(Self { partitions, image: base.to_vec(), written_at: vec![None; partitions] })
    }

    /// Partition count for a per-step budget of `ratio` of the dense size.
    pub fn partitions_for(ratio: f64) -> Result<usize> {
        if !(ratio > 0.0 && ratio <= 1.0) {
            return Err(LccError::Config(format!("budget ratio must lie in (0, 1], got {ratio}")));
        }
        Ok(((1.0 / ratio).round() as usize).max(1))
    }

    pub fn partitions(&self) -> usize {
        self.partitions
    }

    pub fn range(&self, p: usize) -> Range<usize> {
        let n = self.image.len();
        p * n / self.partitions..(p + 1) * n / self.partitions
    }

    /// Persists partition `step mod P` of `state` and returns its size in bytes.
    pub fn write(&mut self, step: u64, state: &[f32]) -> usize {
        let p = (step % self.partitions as u64) as usize;
        let r = self.range(p);
        self.image[r.clone()].copy_from_slice(&state[r.clone()]);
        self.written_at[p] = Some(step);
        4 * r.len()
    }

    pub fn last_written(&self, p: usize) -> Option<u64> {
        self.written_at[p]
    }

    /// Recovered state: the newest copy of each partition.
    pub fn image(&self) -> &[f32] {
        &self.image
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn csr_accounting() {
        assert_eq!(csr_bytes(50), 4 * 50 + 4 * 50 + 8);
        // 5% of 1000 f32 is 200 bytes: 24 entries take 200.
        assert_eq!(topn_entries(1000, 0.05), 24);
        assert_eq!(csr_bytes(topn_entries(1000, 0.05)), 200);
        assert_eq!(topn_entries(10, 0.05), 0);
        let u = topn_baseline(&[1.0; 1000], 0.05).unwrap();
        assert!(u.bytes() <= 200);
        assert!(topn_baseline(&[1.0], 0.0).is_err());
    }

    #[test]
    fn full_keep_is_dense() {
        let d = [0.5f32, -2.0, 0.0, 1e-20, 3.0];
        assert_eq!(topn_update(&d, d.len()).to_dense(d.len()), d);
    }

    #[test]
    fn ties_go_to_lower_index() {
        assert_eq!(topn_keep(&[1.0f32, -1.0, 1.0, 0.5], 2), [0, 1]);
        assert_eq!(topn_keep(&[0.5f32, 1.0, 1.0, -1.0], 2), [1, 2]);
    }

    fn residual(d: &[f64], keep: &[usize]) -> f64 {
        d.iter().enumerate().filter(|(i, _)| !keep.contains(i)).map(|(_, v)| v * v).sum()
    }

    proptest! {
        #[test]
        fn top_support_minimizes_error(d in prop::collection::vec(-10.0f64..10.0, 1..=10), m_seed in any::<usize>()) {
            // Exhaustive over every support of the same size.
            let n = d.len();
            let m = m_seed % (n + 1);
            let best = residual(&d, &topn_keep(&d, m));
            for mask in 0u32..(1 << n) {
                if mask.count_ones() as usize == m {
                    let s: Vec<usize> = (0..n).filter(|i| mask >> i & 1 == 1).collect();
                    prop_assert!(best <= residual(&d, &s) + 1e-12);
                }
            }
        }
    }

    #[test]
    fn scar_sizes_and_rotation() {
        let base = vec![0.0f32; 100];
        let mut full = ScarCheckpoint::new(&base, 1).unwrap();
        assert_eq!(full.write(3, &[1.0; 100]), 400);
        assert_eq!(full.image(), &[1.0; 100][..]);
        assert_eq!(ScarCheckpoint::partitions_for(0.05).unwrap(), 20);
        assert_eq!(ScarCheckpoint::partitions_for(0.10).unwrap(), 10);
        let mut s = ScarCheckpoint::new(&base, 20).unwrap();
        assert_eq!(s.write(0, &base), 20);
        assert_eq!(s.range(19), 95..100);
        assert!(ScarCheckpoint::new(&base, 0).is_err());
    }

    #[test]
    fn scar_recovers_a_stale_mix() {
        // A drifting state: value at step t is t everywhere.
        let n = 12;
        let mut s = ScarCheckpoint::new(&vec![0.0; n], 4).unwrap();
        for t in 1..=6u64 {
            s.write(t, &vec![t as f32; n]);
        }
        // Partitions 1, 2 last written at 5, 6; 3 at 3; 0 at 4.
        let want: Vec<f32> = [4.0, 5.0, 6.0, 3.0].iter().flat_map(|&v| [v; 3]).collect();
        assert_eq!(s.image(), &want[..]);
        assert_eq!(s.last_written(3), Some(3));
    }
}
