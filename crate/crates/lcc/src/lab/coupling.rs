//! Coupling probe: run two chains of the noisy contraction from starts with
//! `||x0|| <= ||x0'||` on shared noise and measure how often the ordering
//! of their norms survives.

use rand::Rng;
use rand_distr::StandardNormal;

use super::task::{norm, step_rng};
use crate::{LccError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CouplingScheme {
    /// Both chains use the same Gaussian draw.
    Synchronous,
    /// The second chain uses the draw reflected across the bisector of the
    /// two current directions, so both see the same noise relative to their
    /// own position.
    Reflection,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CouplingConfig {
    pub eta: f64,
    pub c: f64,
    pub steps: usize,
    pub scheme: CouplingScheme,
    pub seed: u64,
}

impl Default for CouplingConfig {
    fn default() -> Self {
        Self { eta: 0.9, c: 0.5, steps: 200, scheme: CouplingScheme::Reflection, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DominanceReport {
    /// Fraction of steps 1..=T with `||x_t|| <= ||x'_t||`.
    pub fraction: f64,
    pub steps: usize,
}

/// Relative slack when comparing norms, absorbing rounding in chains that
/// are exact multiples of each other.
const NORM_SLACK: f64 = 1e-9;

/// Reflects `g` by the Householder map sending unit vector `a` to `b`.
fn reflect(g: &[f64], a: &[f64], b: &[f64]) -> Vec<f64> {
    let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let vv: f64 = v.iter().map(|x| x * x).sum();
    if vv < 1e-30 {
        return g.to_vec();
    }
    let s = 2.0 * v.iter().zip(g).map(|(x, y)| x * y).sum::<f64>() / vv;
    g.iter().zip(&v).map(|(gi, vi)| gi - s * vi).collect()
}

fn unit(x: &[f64]) -> Vec<f64> {
    let n = norm(x);
    if n == 0.0 {
        return x.to_vec();
    }
    x.iter().map(|v| v / n).collect()
}

/// One step `x' = eta x + z` with `z = c ||x|| g / sqrt(d)`, clipped to `||x||`.
fn advance(x: &mut [f64], g: &[f64], eta: f64, c: f64) {
    let d = x.len() as f64;
    let nx = norm(x);
    let mut scale = c * nx / d.sqrt();
    let gn = norm(g);
    if scale * gn > nx {
        scale = nx / gn;
    }
    for (xi, gi) in x.iter_mut().zip(g) {
        *xi = eta * *xi + scale * gi;
    }
}

pub fn coupling_probe(x0: &[f64], x0_prime: &[f64], cfg: &CouplingConfig) -> Result<DominanceReport> {
    if x0.len() != x0_prime.len() || x0.is_empty() {
        return Err(LccError::Config("starts must have the same positive dimension".into()));
    }
    if norm(x0) > norm(x0_prime) {
        return Err(LccError::Config("first start must not be farther from the optimum".into()));
    }
    let (mut x, mut y) = (x0.to_vec(), x0_prime.to_vec());
    let mut held = 0usize;
    for t in 0..cfg.steps as u64 {
        let mut rng = step_rng(cfg.seed, t);
        let g: Vec<f64> = (0..x.len()).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let gy = match cfg.scheme {
            CouplingScheme::Synchronous => g.clone(),
            CouplingScheme::Reflection => reflect(&g, &unit(&x), &unit(&y)),
        };
        advance(&mut x, &g, cfg.eta, cfg.c);
        advance(&mut y, &gy, cfg.eta, cfg.c);
        if norm(&x) <= norm(&y) * (1.0 + NORM_SLACK) {
            held += 1;
        }
    }
    Ok(DominanceReport { fraction: held as f64 / cfg.steps.max(1) as f64, steps: cfg.steps })
}

/// Mean dominance fraction over `seeds` random start pairs in dimension `d`.
pub fn dominance_over_seeds(d: usize, cfg: &CouplingConfig, seeds: u64) -> Result<f64> {
    let mut total = 0.0;
    for s in 0..seeds {
        let mut rng = step_rng(cfg.seed.wrapping_add(s), u64::MAX);
        let a: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let b: Vec<f64> = (0..d).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let (x0, y0) = if norm(&a) <= norm(&b) { (a, b) } else { (b, a) };
        total += coupling_probe(&x0, &y0, &CouplingConfig { seed: cfg.seed.wrapping_add(s), ..*cfg })?.fraction;
    }
    Ok(total / seeds as f64)
}
