//! The contraction-plus-noise simulator with a pluggable loss term applied
//! to each step's delta.

use lcc_core::codec::{quantize_delta, QuantizerConfig};
use lcc_core::quantize::dequantize;
use lcc_core::rd::RdConfig;
use lcc_core::state::DeltaVector;
use rand::Rng;
use rand_distr::StandardNormal;

use super::baselines::topn_keep;
use super::task::{norm, step_rng, InitShape, NoiseModel};
use crate::{LccError, Result};

/// Distances past this multiple of the initial distance count as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub eta: f64,
    /// Optimum; `None` is the zero vector.
    pub u_star: Option<Vec<f64>>,
    /// Initial distance to the optimum.
    pub l: f64,
    pub init: InitShape,
    pub noise: NoiseModel,
    pub steps: usize,
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 16,
            eta: 0.9,
            u_star: None,
            l: 1.0,
            init: InitShape::Gaussian,
            noise: NoiseModel { family: Default::default(), c: 0.05 },
            steps: 100,
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 {
            return Err(LccError::Config("dimension must be positive".into()));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(LccError::Config(format!("eta must lie in (0, 1), got {}", self.eta)));
        }
        if !(self.l > 0.0 && self.l.is_finite()) {
            return Err(LccError::Config(format!("initial distance must be positive, got {}", self.l)));
        }
        if let Some(u) = &self.u_star {
            if u.len() != self.n {
                return Err(LccError::Config(format!("optimum has {} coordinates, expected {}", u.len(), self.n)));
            }
        }
        self.noise.validate()
    }
}

/// What the checkpoint keeps of each step's delta.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Perturbation {
    None,
    /// Keep the `keep` largest-magnitude entries.
    TopK { keep: usize },
    /// Unbiased stochastic rounding of `|d_i| / ||d||` onto `levels` levels.
    RandomizedRounding { levels: u32 },
    /// Adds zero-mean Gaussian noise with `rho` times the step noise variance.
    ZeroMeanNoise { rho: f64 },
    /// Exponent quantizer with `bits` of promotion (0 = none).
    LcCodec { bits: u8 },
    RdCodec { lambda: f64, k_max: usize },
}

impl Perturbation {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Perturbation::RandomizedRounding { levels: 0 } => Err(LccError::Config("rounding needs at least one level".into())),
            Perturbation::ZeroMeanNoise { rho } if !(0.0..1.0).contains(&rho) => {
                Err(LccError::Config(format!("variance ratio must lie in [0, 1), got {rho}")))
            }
            Perturbation::LcCodec { bits } => Ok(QuantizerConfig::Exponent { bits }.validate()?),
            Perturbation::RdCodec { lambda, k_max } => Ok(RdConfig { lambda, k_max, ..RdConfig::default() }.validate()?),
            _ => Ok(()),
        }
    }

    /// Returns the delta actually applied in place of `delta`. `noise_std` is
    /// the per-coordinate standard deviation of this step's noise.
    pub fn apply<R: Rng + ?Sized>(&self, delta: &[f64], noise_std: f64, rng: &mut R) -> Result<Vec<f64>> {
        Ok(match *self {
            Perturbation::None => delta.to_vec(),
            Perturbation::TopK { keep } => {
                let mut out = vec![0.0; delta.len()];
                for i in topn_keep(delta, keep) {
                    out[i] = delta[i];
                }
                out
            }
            Perturbation::RandomizedRounding { levels } => randomized_rounding(delta, levels, rng),
            Perturbation::ZeroMeanNoise { rho } => {
                let s = rho.sqrt() * noise_std;
                delta.iter().map(|d| d + s * rng.sample::<f64, _>(StandardNormal)).collect()
            }
            Perturbation::LcCodec { bits } => codec_round_trip(delta, &QuantizerConfig::Exponent { bits })?,
            Perturbation::RdCodec { lambda, k_max } => {
                let cfg = RdConfig { lambda, k_max, ..RdConfig::default() };
                codec_round_trip(delta, &QuantizerConfig::RateDistortion(cfg))?
            }
        })
    }
}

fn codec_round_trip(delta: &[f64], cfg: &QuantizerConfig) -> Result<Vec<f64>> {
    let d = DeltaVector::new(delta.iter().map(|&v| v as f32).collect());
    let q = quantize_delta(&d, cfg)?;
    Ok(dequantize(&q).values().iter().map(|&v| f64::from(v)).collect())
}

/// Rounds `v` in `[a, b]` up to `b` with probability `(v - a) / (b - a)`.
pub fn stochastic_round<R: Rng + ?Sized>(v: f64, a: f64, b: f64, rng: &mut R) -> f64 {
    if b <= a {
        return a;
    }
    if rng.random::<f64>() < (v - a) / (b - a) {
        b
    } else {
        a
    }
}

/// Unbiased `levels`-level stochastic rounding of each `|d_i| / ||d||`, sign
/// and norm kept exactly.
pub fn randomized_rounding<R: Rng + ?Sized>(delta: &[f64], levels: u32, rng: &mut R) -> Vec<f64> {
    let scale = norm(delta);
    if scale == 0.0 {
        return vec![0.0; delta.len()];
    }
    let s = f64::from(levels);
    delta
        .iter()
        .map(|&d| {
            let r = d.abs() / scale * s;
            let lo = r.floor().min(s);
            let q = stochastic_round(r, lo, (lo + 1.0).min(s), rng);
            d.signum() * scale * q / s
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// `||u_t - u*||` for t = 0, 1, ...; stops early on divergence.
    pub distances: Vec<f64>,
    pub diverged: bool,
}

impl Trajectory {
    /// Least-squares slope of `ln ||u_t - u*||` over the steps with a
    /// positive distance. Equals `ln eta` for the noise-free model.
    pub fn rate_exponent(&self) -> f64 {
        let logs: Vec<f64> = self.distances.iter().take_while(|&&d| d > 0.0).map(|d| d.ln()).collect();
        super::stats::slope(&logs)
    }
}

/// Runs `u' = u* + eta (u - u*) + eps` where the step actually applied is
/// the perturbed version of `u' - u`.
pub fn simulate(cfg: &SimConfig, p: &Perturbation) -> Result<Trajectory> {
    cfg.validate()?;
    p.validate()?;
    let mut init_rng = step_rng(cfg.seed, u64::MAX);
    let mut x = cfg.init.sample(cfg.n, cfg.l, &mut init_rng)?;
    let u_star = cfg.u_star.clone().unwrap_or_else(|| vec![0.0; cfg.n]);
    let mut u: Vec<f64> = x.iter().zip(&u_star).map(|(a, b)| a + b).collect();
    let mut distances = vec![norm(&x)];
    let mut diverged = false;
    for t in 0..cfg.steps as u64 {
        let mut rng = step_rng(cfg.seed, t);
        let z = cfg.noise.sample(&x, &mut rng);
        let delta: Vec<f64> = x.iter().zip(&z).map(|(xi, zi)| (cfg.eta - 1.0) * xi + zi).collect();
        let std = cfg.noise.coordinate_std(norm(&x), cfg.n);
        let applied = p.apply(&delta, std, &mut rng)?;
        for (ui, d) in u.iter_mut().zip(&applied) {
            *ui += d;
        }
        x = u.iter().zip(&u_star).map(|(a, b)| a - b).collect();
        let d = norm(&x);
        distances.push(d);
        if d.is_nan() || d > DIVERGENCE_FACTOR * cfg.l {
            diverged = true;
            break;
        }
    }
    Ok(Trajectory { distances, diverged })
}
