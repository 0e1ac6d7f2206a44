//! Training tasks the experiments drive, and the noise model they share.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, LogNormal, StandardNormal};

use crate::{LccError, Result};

/// RNG for step `t` of run `seed`. Every step has its own stream, so a run
/// resumed from any step sees the same draws as the original.
pub fn step_rng(seed: u64, t: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(t);
    rng
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseFamily {
    #[default]
    Gaussian,
    /// Uniform in a ball, scaled to the same per-coordinate variance.
    UniformBall,
}

/// Step noise with per-coordinate standard deviation `c * ||x|| / sqrt(n)`,
/// clipped so that `||noise|| <= ||x||`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub family: NoiseFamily,
    pub c: f64,
}

impl NoiseModel {
    pub fn none() -> Self {
        Self { family: NoiseFamily::Gaussian, c: 0.0 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c >= 0.0 && self.c.is_finite()) {
            return Err(LccError::Config(format!("noise scale must be a finite value >= 0, got {}", self.c)));
        }
        Ok(())
    }

    /// Per-coordinate standard deviation for distance `dist` in dimension `n`.
    pub fn coordinate_std(&self, dist: f64, n: usize) -> f64 {
        self.c * dist / (n as f64).sqrt()
    }

    /// Draws the noise for offset `x` from the optimum. Always consumes the
    /// same number of draws for a given dimension.
    pub fn sample<R: Rng + ?Sized>(&self, x: &[f64], rng: &mut R) -> Vec<f64> {
        let n = x.len();
        let dist = norm(x);
        let std = self.coordinate_std(dist, n);
        let g: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mut z = match self.family {
            NoiseFamily::Gaussian => g.into_iter().map(|v| v * std).collect(),
            NoiseFamily::UniformBall => {
                let u: f64 = rng.random();
                let radius = std * ((n + 2) as f64).sqrt() * u.powf(1.0 / n as f64);
                let gn = norm(&g);
                if gn == 0.0 {
                    vec![0.0; n]
                } else {
                    g.into_iter().map(|v| v * radius / gn).collect::<Vec<_>>()
                }
            }
        };
        let zn = norm(&z);
        if zn > dist {
            let s = dist / zn;
            z.iter_mut().for_each(|v| *v *= s);
        }
        z
    }
}

/// Shape of the initial offset `u_0 - u*` before scaling to norm `L`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitShape {
    /// Every coordinate equal and positive.
    Constant,
    Gaussian,
    /// Log-normal magnitudes with random signs; spreads the offsets over
    /// many binades.
    LogNormal { sigma: f64 },
}

impl InitShape {
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, l: f64, rng: &mut R) -> Result<Vec<f64>> {
        let raw: Vec<f64> = match *self {
            InitShape::Constant => vec![1.0; n],
            InitShape::Gaussian => (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)).collect(),
            InitShape::LogNormal { sigma } => {
                let d = LogNormal::new(0.0, sigma).map_err(|e| LccError::Config(format!("log-normal init: {e}")))?;
                (0..n)
                    .map(|_| {
                        let m = d.sample(rng);
                        if rng.random::<bool>() {
                            m
                        } else {
                            -m
                        }
                    })
                    .collect()
            }
        };
        let s = l / norm(&raw);
        Ok(raw.into_iter().map(|v| v * s).collect())
    }
}

/// A deterministic training loop over an `f32` parameter vector.
pub trait Task {
    fn dim(&self) -> usize;
    /// Advances `state` by one step using the step's own RNG stream.
    fn step(&self, state: &mut [f32], rng: &mut ChaCha8Rng);
    fn loss(&self, state: &[f32]) -> f64;
}

/// The contraction-plus-noise model `u' = u* + eta (u - u*) + eps` with loss
/// `||u - u*||^2`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub u_star: Vec<f64>,
    pub eta: f64,
    pub noise: NoiseModel,
}

impl Quadratic {
    pub fn new(u_star: Vec<f64>, eta: f64, noise: NoiseModel) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(LccError::Config(format!("eta must lie in (0, 1), got {eta}")));
        }
        noise.validate()?;
        if u_star.is_empty() {
            return Err(LccError::Config("dimension must be positive".into()));
        }
        Ok(Self { u_star, eta, noise })
    }

    pub fn offset(&self, state: &[f32]) -> Vec<f64> {
        state.iter().zip(&self.u_star).map(|(&u, s)| f64::from(u) - s).collect()
    }

    pub fn distance(&self, state: &[f32]) -> f64 {
        norm(&self.offset(state))
    }
}

impl Task for Quadratic {
    fn dim(&self) -> usize {
        self.u_star.len()
    }

    fn step(&self, state: &mut [f32], rng: &mut ChaCha8Rng) {
        let x = self.offset(state);
        let z = self.noise.sample(&x, rng);
        for (((u, s), xi), zi) in state.iter_mut().zip(&self.u_star).zip(&x).zip(&z) {
            *u = (s + self.eta * xi + zi) as f32;
        }
    }

    fn loss(&self, state: &[f32]) -> f64 {
        self.offset(state).iter().map(|x| x * x).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_respects_the_clip() {
        let mut rng = step_rng(1, 0);
        let x = vec![1.0, -2.0, 0.5];
        for family in [NoiseFamily::Gaussian, NoiseFamily::UniformBall] {
            let m = NoiseModel { family, c: 5.0 };
            for _ in 0..200 {
                assert!(norm(&m.sample(&x, &mut rng)) <= norm(&x) * (1.0 + 1e-12));
            }
        }
    }

    #[test]
    fn noise_variance_matches_scale() {
        // Per-coordinate variance (c ||x||)^2 / n for both families.
        let n = 64;
        let x = vec![0.5; n];
        let dist = norm(&x);
        for family in [NoiseFamily::Gaussian, NoiseFamily::UniformBall] {
            let m = NoiseModel { family, c: 0.1 };
            let mut rng = step_rng(2, 0);
            let draws = 4000;
            let mut sq = 0.0;
            for _ in 0..draws {
                sq += m.sample(&x, &mut rng).iter().map(|v| v * v).sum::<f64>();
            }
            let per_coord = sq / (draws * n) as f64;
            let expect = (0.1 * dist).powi(2) / n as f64;
            assert!((per_coord / expect - 1.0).abs() < 0.05, "{family:?}: {per_coord} vs {expect}");
        }
    }

    #[test]
    fn step_streams_are_independent_of_history() {
        let a: u64 = step_rng(9, 5).random();
        let mut r = step_rng(9, 4);
        let _: u64 = r.random();
        assert_eq!(a, step_rng(9, 5).random::<u64>());
        assert_ne!(a, r.random::<u64>());
    }

    #[test]
    fn init_has_requested_norm() {
        let mut rng = step_rng(3, 0);
        for shape in [InitShape::Constant, InitShape::Gaussian, InitShape::LogNormal { sigma: 2.0 }] {
            let v = shape.sample(100, 7.0, &mut rng).unwrap();
            assert!((norm(&v) - 7.0).abs() < 1e-9);
        }
    }

    #[test]
    fn quadratic_rejects_bad_eta() {
        assert!(Quadratic::new(vec![0.0], 1.0, NoiseModel::none()).is_err());
        assert!(Quadratic::new(vec![0.0], 0.5, NoiseModel { family: NoiseFamily::Gaussian, c: -1.0 }).is_err());
    }
}
