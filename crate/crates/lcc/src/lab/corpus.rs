//! Synthetic state sequences for codec experiments.

use lcc_core::state::ModelState;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::task::{step_rng, Task};
use crate::{LccError, Result};

/// States `u_0 ~ N(0, 1)`, `u_{t+1} = u_t + N(0, scale^2)` per coordinate.
pub fn gaussian_walk(n: usize, states: usize, scale: f32, seed: u64) -> Result<Vec<ModelState>> {
    if n == 0 {
        return Err(LccError::Config("dimension must be positive".into()));
    }
    let step = Normal::new(0.0f32, scale).map_err(|e| LccError::Config(format!("walk scale: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut u: Vec<f32> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    let mut out = Vec::with_capacity(states);
    for _ in 0..states {
        out.push(ModelState::new(u.clone())?);
        for v in &mut u {
            *v += step.sample(&mut rng);
        }
    }
    Ok(out)
}

/// States of a task trained from `init` for `states - 1` steps.
pub fn task_run(task: &dyn Task, init: &[f32], states: usize, seed: u64) -> Result<Vec<ModelState>> {
    let mut u = init.to_vec();
    let mut out = Vec::with_capacity(states);
    for t in 0..states as u64 {
        if t > 0 {
            task.step(&mut u, &mut step_rng(seed, t));
        }
        out.push(ModelState::new(u.clone())?);
    }
    Ok(out)
}

/// Dense least squares `||X w - y||^2 / 2N` trained by minibatch SGD; a
/// step costs `O(batch * n)`, like a real gradient evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct LeastSquares {
    rows: Vec<Vec<f32>>,
    targets: Vec<f32>,
    batch: usize,
    lr: f64,
}

impl LeastSquares {
    pub fn new(n: usize, samples: usize, batch: usize, seed: u64) -> Result<Self> {
        if n == 0 || samples == 0 || batch == 0 {
            return Err(LccError::Config("dimension, samples and batch must be positive".into()));
        }
        let mut rng = step_rng(seed, u64::MAX);
        let truth: Vec<f32> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let scale = 1.0 / (n as f32).sqrt();
        let mut rows = Vec::with_capacity(samples);
        let mut targets = Vec::with_capacity(samples);
        for _ in 0..samples {
            let row: Vec<f32> = (0..n).map(|_| scale * rng.sample::<f32, _>(StandardNormal)).collect();
            let y: f32 = row.iter().zip(&truth).map(|(a, b)| a * b).sum::<f32>() + 0.01 * rng.sample::<f32, _>(StandardNormal);
            rows.push(row);
            targets.push(y);
        }
        Ok(Self { rows, targets, batch, lr: 0.5 })
    }

    fn residual(&self, i: usize, w: &[f32]) -> f64 {
        self.rows[i].iter().zip(w).map(|(a, b)| f64::from(a * b)).sum::<f64>() - f64::from(self.targets[i])
    }
}

impl Task for LeastSquares {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn step(&self, state: &mut [f32], rng: &mut ChaCha8Rng) {
        let mut grad = vec![0.0f64; state.len()];
        for _ in 0..self.batch {
            let i = rng.random_range(0..self.rows.len());
            let r = self.residual(i, state) / self.batch as f64;
            for (g, a) in grad.iter_mut().zip(&self.rows[i]) {
                *g += r * f64::from(*a);
            }
        }
        for (w, g) in state.iter_mut().zip(&grad) {
            *w = (f64::from(*w) - self.lr * g) as f32;
        }
    }

    fn loss(&self, state: &[f32]) -> f64 {
        (0..self.rows.len()).map(|i| self.residual(i, state).powi(2)).sum::<f64>() / (2 * self.rows.len()) as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn walk_is_deterministic() {
        let a = gaussian_walk(16, 5, 0.01, 3).unwrap();
        assert_eq!(a, gaussian_walk(16, 5, 0.01, 3).unwrap());
        assert_eq!(a.len(), 5);
        assert!(gaussian_walk(0, 1, 0.1, 0).is_err());
    }

    #[test]
    fn least_squares_descends() {
        let task = LeastSquares::new(64, 256, 32, 1).unwrap();
        let states = task_run(&task, &vec![0.0; 64], 200, 1).unwrap();
        let first = task.loss(states[0].values());
        let last = task.loss(states[199].values());
        assert!(last < 0.5 * first, "{first} -> {last}");
    }
}
