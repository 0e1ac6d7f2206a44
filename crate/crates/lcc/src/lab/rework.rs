//! Rework cost: train to a failure step while each method checkpoints, then
//! resume from the method's recovered state and count the steps needed to
//! get back to the pre-failure loss.

use std::fmt;
use std::thread;

use lcc_core::codec::{QuantizerConfig, ShadowTracker};
use lcc_core::huffman::CacheKeyMode;
use lcc_core::state::ModelState;

use super::baselines::{topn_entries, topn_update, ScarCheckpoint};
use super::stats::{confidence_interval, Interval};
use super::task::{step_rng, InitShape, NoiseFamily, NoiseModel, Quadratic, Task};
use crate::format::{encode_chunk, Chunk};
use crate::{LccError, Result};

/// Relative slack on the pre-failure loss that counts as caught up.
pub const LOSS_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Method {
    Full,
    /// Exponent quantizer with `bits` of promotion on delta-tracked states.
    Lc { bits: u8 },
    /// Top-n deltas against the last reconstructible state, sized to `ratio`.
    Topn { ratio: f64 },
    Scar { partitions: usize },
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Full => "full",
            Method::Lc { .. } => "lc",
            Method::Topn { .. } => "topn",
            Method::Scar { .. } => "scar",
        }
    }

    /// Promotion bits matching a budget: the nearest whole number of bits
    /// per element, so 5% gets 2 bits and 10% gets 3.
    pub fn lc_bits_for(budget: f64) -> u8 {
        (budget * 32.0).round().clamp(1.0, 15.0) as u8
    }

    /// LC, TOPN and SCAR configured for the same per-step budget.
    pub fn for_budget(budget: f64) -> Result<[Method; 3]> {
        Ok([
            Method::Lc { bits: Self::lc_bits_for(budget) },
            Method::Topn { ratio: budget },
            Method::Scar { partitions: ScarCheckpoint::partitions_for(budget)? },
        ])
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

enum Checkpointer {
    Full(Vec<f32>),
    Lc(Box<ShadowTracker>),
    Topn { shadow: Vec<f32>, keep: usize },
    Scar(ScarCheckpoint),
}

impl Checkpointer {
    fn new(method: Method, base: &[f32]) -> Result<Self> {
        Ok(match method {
            Method::Full => Checkpointer::Full(base.to_vec()),
            Method::Lc { bits } => Checkpointer::Lc(Box::new(ShadowTracker::new(
                ModelState::new(base.to_vec())?,
                QuantizerConfig::Exponent { bits },
                CacheKeyMode::default(),
            )?)),
            Method::Topn { ratio } => {
                if !(ratio > 0.0 && ratio <= 1.0) {
                    return Err(LccError::Config(format!("budget ratio must lie in (0, 1], got {ratio}")));
                }
                Checkpointer::Topn { shadow: base.to_vec(), keep: topn_entries(base.len(), ratio) }
            }
            Method::Scar { partitions } => Checkpointer::Scar(ScarCheckpoint::new(base, partitions)?),
        })
    }

    /// Checkpoints `state` as step `step`; returns the bytes it would occupy.
    fn record(&mut self, step: u64, state: &[f32]) -> Result<usize> {
        Ok(match self {
            Checkpointer::Full(copy) => {
                copy.copy_from_slice(state);
                4 * state.len()
            }
            Checkpointer::Lc(tracker) => {
                let (step, encoded) = tracker.encode_step(&ModelState::new(state.to_vec())?)?;
                encode_chunk(&Chunk::coded(step, encoded))?.len()
            }
            Checkpointer::Topn { shadow, keep } => {
                let delta: Vec<f32> = state.iter().zip(shadow.iter()).map(|(u, s)| u - s).collect();
                let update = topn_update(&delta, *keep);
                update.apply(shadow);
                update.bytes()
            }
            Checkpointer::Scar(s) => s.write(step, state),
        })
    }

    fn recovered(&self) -> Vec<f32> {
        match self {
            Checkpointer::Full(copy) => copy.clone(),
            Checkpointer::Lc(tracker) => tracker.shadow().values().to_vec(),
            Checkpointer::Topn { shadow, .. } => shadow.clone(),
            Checkpointer::Scar(s) => s.image().to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReworkConfig {
    pub n: usize,
    pub eta: f64,
    pub noise: NoiseModel,
    pub init: InitShape,
    /// Initial distance to the optimum.
    pub l: f64,
    pub steps: usize,
    /// Failure point as a fraction of `steps`.
    pub failure_fraction: f64,
    pub trials: usize,
    pub seed: u64,
    /// Resumed runs stop here; the count is reported as the cap.
    pub rework_cap: u64,
}

impl Default for ReworkConfig {
    fn default() -> Self {
        Self {
            n: 4096,
            eta: 0.99,
            noise: NoiseModel { family: NoiseFamily::Gaussian, c: 0.1 },
            init: InitShape::LogNormal { sigma: 1.0 },
            l: 1.0,
            steps: 100,
            failure_fraction: 0.7,
            trials: 50,
            seed: 0,
            rework_cap: 10_000,
        }
    }
}

impl ReworkConfig {
    pub fn failure_step(&self) -> u64 {
        (self.failure_fraction * self.steps as f64).round() as u64
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.failure_fraction > 0.0 && self.failure_fraction <= 1.0) {
            return Err(LccError::Config(format!("failure fraction must lie in (0, 1], got {}", self.failure_fraction)));
        }
        if self.failure_step() == 0 {
            return Err(LccError::Config("failure step must be after step 0".into()));
        }
        if self.trials == 0 {
            return Err(LccError::Config("need at least one trial".into()));
        }
        Ok(())
    }

    /// The quadratic task and its initial state for one trial.
    pub fn quadratic(&self, trial: usize) -> Result<(Quadratic, Vec<f32>)> {
        let task = Quadratic::new(vec![0.0; self.n], self.eta, self.noise)?;
        let mut rng = step_rng(self.trial_seed(trial), u64::MAX);
        let x = self.init.sample(self.n, self.l, &mut rng)?;
        Ok((task, x.into_iter().map(|v| v as f32).collect()))
    }

    pub fn trial_seed(&self, trial: usize) -> u64 {
        self.seed.wrapping_add(trial as u64)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReworkRow {
    pub method: Method,
    pub budget: f64,
    pub trial: usize,
    pub rework_iters: u64,
    /// Mean checkpoint bytes per step.
    pub bytes: f64,
    /// Square root of the loss when the resumed run caught up.
    pub final_distance: f64,
}

/// Steps from `state` (resuming after `from_step`) until the loss is within
/// tolerance of `target`.
pub fn steps_to_reach(task: &dyn Task, state: &mut [f32], from_step: u64, target: f64, seed: u64, cap: u64) -> u64 {
    let threshold = target * (1.0 + LOSS_TOLERANCE);
    let mut r = 0;
    while task.loss(state) > threshold && r < cap {
        r += 1;
        task.step(state, &mut step_rng(seed, from_step + r));
    }
    r
}

/// One trial: every method checkpoints the same trajectory from step 1 to
/// the failure step, then each resumes from its recovered state.
pub fn run_trial(
    task: &dyn Task,
    init: &[f32],
    methods: &[Method],
    failure_step: u64,
    seed: u64,
    cap: u64,
) -> Result<Vec<(Method, u64, f64, f64)>> {
    let mut cps = methods.iter().map(|&m| Checkpointer::new(m, init)).collect::<Result<Vec<_>>>()?;
    let mut bytes = vec![0usize; methods.len()];
    let mut state = init.to_vec();
    for t in 1..=failure_step {
        task.step(&mut state, &mut step_rng(seed, t));
        for (cp, b) in cps.iter_mut().zip(&mut bytes) {
            *b += cp.record(t, &state)?;
        }
    }
    let target = task.loss(&state);
    Ok(methods
        .iter()
        .zip(&cps)
        .zip(&bytes)
        .map(|((&m, cp), &b)| {
            let mut s = cp.recovered();
            let r = steps_to_reach(task, &mut s, failure_step, target, seed, cap);
            (m, r, b as f64 / failure_step as f64, task.loss(&s).sqrt())
        })
        .collect())
}

/// All trials of the quadratic rework experiment, spread over the
/// available cores. Rows are ordered by trial, then method.
pub fn rework_experiment(cfg: &ReworkConfig, budget: f64, methods: &[Method]) -> Result<Vec<ReworkRow>> {
    cfg.validate()?;
    let workers = thread::available_parallelism().map_or(1, |n| n.get()).min(cfg.trials);
    let results: Vec<Result<Vec<ReworkRow>>> = thread::scope(|s| {
        let handles: Vec<_> = (0..workers)
            .map(|w| {
                s.spawn(move || -> Result<Vec<ReworkRow>> {
                    let mut rows = Vec::new();
                    for trial in (w..cfg.trials).step_by(workers) {
                        let (task, init) = cfg.quadratic(trial)?;
                        let out = run_trial(&task, &init, methods, cfg.failure_step(), cfg.trial_seed(trial), cfg.rework_cap)?;
                        rows.extend(out.into_iter().map(|(method, rework_iters, bytes, final_distance)| ReworkRow {
                            method,
                            budget,
                            trial,
                            rework_iters,
                            bytes,
                            final_distance,
                        }));
                    }
                    Ok(rows)
                })
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("rework worker panicked")).collect()
    });
    let mut rows = Vec::new();
    for r in results {
        rows.extend(r?);
    }
    let order = |m: &Method| methods.iter().position(|x| x == m).unwrap_or(usize::MAX);
    rows.sort_by_key(|r| (r.trial, order(&r.method)));
    Ok(rows)
}

/// Per-method summary of a rework run.
#[derive(Debug, Clone, PartialEq)]
pub struct ReworkSummary {
    pub method: Method,
    pub reworks: Vec<f64>,
    pub ci: Interval,
    /// Mean bytes per step over the dense f32 size.
    pub size_ratio: f64,
}

pub fn summarize(rows: &[ReworkRow], n: usize) -> Vec<ReworkSummary> {
    let mut methods: Vec<Method> = Vec::new();
    for r in rows {
        if !methods.contains(&r.method) {
            methods.push(r.method);
        }
    }
    methods
        .into_iter()
        .map(|m| {
            let mine: Vec<&ReworkRow> = rows.iter().filter(|r| r.method == m).collect();
            let reworks: Vec<f64> = mine.iter().map(|r| r.rework_iters as f64).collect();
            let size_ratio = mine.iter().map(|r| r.bytes).sum::<f64>() / mine.len() as f64 / (4 * n) as f64;
            ReworkSummary { method: m, ci: confidence_interval(&reworks, 0.95), reworks, size_ratio }
        })
        .collect()
}
