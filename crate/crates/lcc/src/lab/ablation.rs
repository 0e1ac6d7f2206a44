//! Bucket ablation: zero one exponent bucket of an m-step delta and measure
//! how far the loss moves from the loss of the full delta.

use std::collections::BTreeMap;

use lcc_core::float::{Sign, ZERO_EXPONENT};
use lcc_core::quantize::{quantize, BucketKey};
use lcc_core::state::{compute_delta, ModelState};

use super::rework::ReworkConfig;
use super::stats::spearman;
use super::task::{step_rng, Quadratic, Task};
use crate::{LccError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct BucketError {
    /// `None` for the zero bucket.
    pub sign: Option<Sign>,
    pub exponent: i16,
    pub count: u64,
    pub relative_error: f64,
}

/// `|L(theta + delta) - L(theta + delta with zeroed entries)| / L(theta + delta)`
/// where `zeroed(j)` selects the entries to drop. Evaluated as a sum over
/// the dropped entries only, so tiny buckets do not vanish in cancellation.
pub fn relative_error_zeroing(task: &Quadratic, theta: &[f32], delta: &[f32], zeroed: impl Fn(usize) -> bool) -> Result<f64> {
    let w: Vec<f64> = theta
        .iter()
        .zip(delta)
        .zip(&task.u_star)
        .map(|((&t, &d), s)| f64::from(t) + f64::from(d) - s)
        .collect();
    let v_gt: f64 = w.iter().map(|x| x * x).sum();
    if v_gt == 0.0 {
        return Err(LccError::Codec(lcc_core::Error::Domain("ground-truth loss is zero")));
    }
    // (w - d)^2 - w^2 = d (d - 2w)
    let change: f64 = (0..delta.len())
        .filter(|&j| zeroed(j))
        .map(|j| {
            let d = f64::from(delta[j]);
            d * (d - 2.0 * w[j])
        })
        .sum();
    Ok(change.abs() / v_gt)
}

/// Relative error per exponent bucket of `delta`, largest exponent first.
pub fn bucket_errors(task: &Quadratic, theta: &[f32], delta: &[f32]) -> Result<Vec<BucketError>> {
    let q = quantize(&lcc_core::state::DeltaVector::new(delta.to_vec()))?;
    let idx = q.indices();
    q.table()
        .buckets()
        .iter()
        .enumerate()
        .map(|(b, bucket)| {
            let e = relative_error_zeroing(task, theta, delta, |j| usize::from(idx[j]) == b)?;
            let (sign, exponent) = match bucket.key {
                BucketKey::Exponent { sign, exponent } => (Some(sign), exponent),
                _ => (None, ZERO_EXPONENT),
            };
            Ok(BucketError { sign, exponent, count: bucket.count, relative_error: e })
        })
        .collect()
}

/// Runs `m` steps from `theta` (taken at step `theta_step`) and ablates the
/// buckets of the resulting delta.
pub fn priority_ablation(task: &Quadratic, theta: &[f32], theta_step: u64, m: u64, seed: u64) -> Result<Vec<BucketError>> {
    if m == 0 {
        return Err(LccError::Config("iteration gap must be at least 1".into()));
    }
    let mut u = theta.to_vec();
    for t in 1..=m {
        task.step(&mut u, &mut step_rng(seed, theta_step + t));
    }
    let delta = compute_delta(&ModelState::new(u)?, &ModelState::new(theta.to_vec())?)?;
    bucket_errors(task, theta, delta.values())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AblationRow {
    pub seed: u64,
    pub m: u64,
    pub bucket: BucketError,
}

/// Ablation of the quadratic task at step `theta_step` over `seeds` trials.
pub fn ablation_experiment(cfg: &ReworkConfig, theta_step: u64, m: u64, seeds: usize) -> Result<Vec<AblationRow>> {
    let mut rows = Vec::new();
    for trial in 0..seeds {
        let (task, mut u) = cfg.quadratic(trial)?;
        let seed = cfg.trial_seed(trial);
        for t in 1..=theta_step {
            task.step(&mut u, &mut step_rng(seed, t));
        }
        for bucket in priority_ablation(&task, &u, theta_step, m, seed)? {
            rows.push(AblationRow { seed, m, bucket });
        }
    }
    Ok(rows)
}

/// Mean relative error per exponent over every nonzero bucket in `rows`,
/// ascending by exponent.
pub fn mean_by_exponent(rows: &[AblationRow]) -> Vec<(i16, f64)> {
    let mut acc: BTreeMap<i16, (f64, usize)> = BTreeMap::new();
    for r in rows.iter().filter(|r| r.bucket.sign.is_some()) {
        let e = acc.entry(r.bucket.exponent).or_default();
        e.0 += r.bucket.relative_error;
        e.1 += 1;
    }
    acc.into_iter().map(|(k, (s, c))| (k, s / c as f64)).collect()
}

/// Rank correlation between bucket exponent and mean relative error.
pub fn exponent_rank_correlation(rows: &[AblationRow]) -> f64 {
    let means = mean_by_exponent(rows);
    let e: Vec<f64> = means.iter().map(|&(k, _)| f64::from(k)).collect();
    let v: Vec<f64> = means.iter().map(|&(_, m)| m).collect();
    spearman(&e, &v)
}
