//! Two-class logistic regression on 2-D Gaussian blobs, lifted with random
//! cosine features. Trained by minibatch SGD.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::task::{step_rng, Task};
use crate::{LccError, Result};

pub const MAX_PARAMS: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogRegConfig {
    pub samples: usize,
    /// Random cosine features on top of the two raw coordinates and a bias.
    pub features: usize,
    /// Distance of each blob center from the origin along the diagonal.
    pub separation: f64,
    pub lr: f64,
    pub batch: usize,
    pub l2: f64,
    pub seed: u64,
}

impl Default for LogRegConfig {
    fn default() -> Self {
        Self { samples: 512, features: 29, separation: 1.0, lr: 0.5, batch: 16, l2: 1e-3, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogReg {
    rows: Vec<Vec<f64>>,
    labels: Vec<f64>,
    lr: f64,
    batch: usize,
    l2: f64,
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    if z > 0.0 {
        z + (-z).exp().ln_1p()
    } else {
        z.exp().ln_1p()
    }
}

impl LogReg {
    pub fn new(cfg: &LogRegConfig) -> Result<Self> {
        let dim = cfg.features + 3;
        if dim > MAX_PARAMS {
            return Err(LccError::Config(format!("{dim} parameters exceed the limit of {MAX_PARAMS}")));
        }
        if cfg.samples == 0 || cfg.batch == 0 {
            return Err(LccError::Config("samples and batch size must be positive".into()));
        }
        let mut rng = step_rng(cfg.seed, u64::MAX);
        let freq = Normal::new(0.0, 1.0).map_err(|e| LccError::Config(e.to_string()))?;
        let w: Vec<[f64; 2]> = (0..cfg.features).map(|_| [freq.sample(&mut rng), freq.sample(&mut rng)]).collect();
        let b: Vec<f64> = (0..cfg.features).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
        let mut rows = Vec::with_capacity(cfg.samples);
        let mut labels = Vec::with_capacity(cfg.samples);
        for i in 0..cfg.samples {
            let y = (i % 2) as f64;
            let center = if y > 0.5 { cfg.separation } else { -cfg.separation };
            let p = [center + rng.sample::<f64, _>(StandardNormal), center + rng.sample::<f64, _>(StandardNormal)];
            let mut row = vec![1.0, p[0], p[1]];
            let scale = (2.0 / cfg.features.max(1) as f64).sqrt();
            row.extend(w.iter().zip(&b).map(|(wk, bk)| scale * (wk[0] * p[0] + wk[1] * p[1] + bk).cos()));
            rows.push(row);
            labels.push(y);
        }
        Ok(Self { rows, labels, lr: cfg.lr, batch: cfg.batch, l2: cfg.l2 })
    }

    fn margin(&self, i: usize, params: &[f32]) -> f64 {
        self.rows[i].iter().zip(params).map(|(x, &p)| x * f64::from(p)).sum()
    }

    /// Fraction of samples on the right side of the decision boundary.
    pub fn accuracy(&self, params: &[f32]) -> f64 {
        let right = (0..self.rows.len()).filter(|&i| (self.margin(i, params) > 0.0) == (self.labels[i] > 0.5)).count();
        right as f64 / self.rows.len() as f64
    }

    pub fn init(&self, seed: u64) -> Vec<f32> {
        let mut rng = step_rng(seed, u64::MAX - 1);
        (0..self.dim()).map(|_| (0.1 * rng.sample::<f64, _>(StandardNormal)) as f32).collect()
    }
}

impl Task for LogReg {
    fn dim(&self) -> usize {
        self.rows[0].len()
    }

    fn step(&self, state: &mut [f32], rng: &mut ChaCha8Rng) {
        let mut grad: Vec<f64> = state.iter().map(|&p| self.l2 * f64::from(p)).collect();
        for _ in 0..self.batch {
            let i = rng.random_range(0..self.rows.len());
            let r = sigmoid(self.margin(i, state)) - self.labels[i];
            for (g, x) in grad.iter_mut().zip(&self.rows[i]) {
                *g += r * x / self.batch as f64;
            }
        }
        for (p, g) in state.iter_mut().zip(&grad) {
            *p = (f64::from(*p) - self.lr * g) as f32;
        }
    }

    fn loss(&self, state: &[f32]) -> f64 {
        let data: f64 = (0..self.rows.len())
            .map(|i| {
                let z = self.margin(i, state);
                softplus(z) - self.labels[i] * z
            })
            .sum::<f64>()
            / self.rows.len() as f64;
        let reg: f64 = state.iter().map(|&p| f64::from(p) * f64::from(p)).sum();
        data + 0.5 * self.l2 * reg
    }
}
