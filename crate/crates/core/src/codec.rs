//! The delta-tracking encoder loop.
//!
//! [`ShadowTracker`] owns the decoder-visible state. Each step it takes the
//! true state, quantizes the distance to the shadow, advances the shadow by
//! the dequantized delta and entropy codes the bucket indices. A decoder that
//! starts from the same base and applies the same quantized deltas in order
//! ends up with a bit-identical shadow.

use alloc::vec::Vec;

use crate::huffman::{self, BitStream, CacheKeyMode, CodeTable, CodeTableCache};
use crate::quantize::{dequantize, promote, quantize, QuantizedDelta, MAX_PROMOTION_BITS};
use crate::rd::{rd_quantize, RdConfig};
use crate::state::{apply_delta, compute_delta, DeltaVector, ModelState};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum QuantizerConfig {
    /// Exponent buckets; `bits == 0` disables promotion.
    Exponent { bits: u8 },
    RateDistortion(RdConfig),
}

impl QuantizerConfig {
    pub fn validate(&self) -> Result<()> {
        match self {
            QuantizerConfig::Exponent { bits } if *bits > MAX_PROMOTION_BITS => {
                Err(Error::Config("promotion bits must be at most 15"))
            }
            QuantizerConfig::Exponent { .. } => Ok(()),
            QuantizerConfig::RateDistortion(cfg) => cfg.validate(),
        }
    }
}

pub fn quantize_delta(delta: &DeltaVector, cfg: &QuantizerConfig) -> Result<QuantizedDelta> {
    match cfg {
        QuantizerConfig::Exponent { bits: 0 } => quantize(delta),
        QuantizerConfig::Exponent { bits } => promote(&quantize(delta)?, *bits),
        QuantizerConfig::RateDistortion(rd) => rd_quantize(delta, rd),
    }
}

/// Huffman table over the occupied buckets of `q`.
pub fn code_table_for(q: &QuantizedDelta, cache: Option<&mut CodeTableCache>) -> Result<(CodeTable, bool)> {
    let freqs = q.frequencies();
    match cache {
        Some(cache) => cache.lookup_or_build(&freqs),
        None => Ok((huffman::build_code_table(&freqs)?, false)),
    }
}

/// Huffman-coded form of one quantized delta.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedDelta {
    pub quantized: QuantizedDelta,
    pub table: CodeTable,
    pub payload: BitStream,
    pub cache_hit: bool,
}

pub fn entropy_encode(q: QuantizedDelta, cache: Option<&mut CodeTableCache>) -> Result<EncodedDelta> {
    let (table, cache_hit) = code_table_for(&q, cache)?;
    let payload = huffman::encode(q.indices(), &table)?;
    Ok(EncodedDelta { quantized: q, table, payload, cache_hit })
}

/// Encoder state for one chain.
#[derive(Debug, Clone)]
pub struct ShadowTracker {
    shadow: ModelState,
    step: u64,
    quantizer: QuantizerConfig,
    cache: CodeTableCache,
}

impl ShadowTracker {
    /// Starts a chain whose base (step 0) is `base`.
    pub fn new(base: ModelState, quantizer: QuantizerConfig, cache_mode: CacheKeyMode) -> Result<Self> {
        quantizer.validate()?;
        Ok(Self { shadow: base, step: 0, quantizer, cache: CodeTableCache::new(cache_mode) })
    }

    /// Resumes a chain from a recovered shadow at `step`.
    pub fn resume(shadow: ModelState, step: u64, quantizer: QuantizerConfig, cache_mode: CacheKeyMode) -> Result<Self> {
        let mut t = Self::new(shadow, quantizer, cache_mode)?;
        t.step = step;
        Ok(t)
    }

    pub fn shadow(&self) -> &ModelState {
        &self.shadow
    }

    /// Step of the last delta folded into the shadow.
    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn quantizer(&self) -> &QuantizerConfig {
        &self.quantizer
    }

    pub fn cache(&self) -> &CodeTableCache {
        &self.cache
    }

    /// Quantizes `current - shadow` as the next step, folds the result into
    /// the shadow and returns it with its step number. On error nothing
    /// changes.
    pub fn quantize_step(&mut self, current: &ModelState) -> Result<(u64, QuantizedDelta)> {
        self.quantize_step_at(self.step + 1, current)
    }

    /// Like [`Self::quantize_step`] with an explicit step number, which must
    /// be past the current one. Steps in between are simply not recorded.
    pub fn quantize_step_at(&mut self, step: u64, current: &ModelState) -> Result<(u64, QuantizedDelta)> {
        if step <= self.step {
            return Err(Error::Domain("step numbers must increase"));
        }
        let delta = compute_delta(current, &self.shadow)?;
        let q = quantize_delta(&delta, &self.quantizer)?;
        self.shadow = apply_delta(&self.shadow, &dequantize(&q))?;
        self.step = step;
        Ok((step, q))
    }

    /// Huffman-codes a delta from [`Self::quantize_step`] with the tracker's
    /// table cache.
    pub fn entropy_encode(&mut self, q: QuantizedDelta) -> Result<EncodedDelta> {
        entropy_encode(q, Some(&mut self.cache))
    }

    pub fn encode_step(&mut self, current: &ModelState) -> Result<(u64, EncodedDelta)> {
        let (step, q) = self.quantize_step(current)?;
        Ok((step, self.entropy_encode(q)?))
    }
}

/// Decoder-side mirror of [`ShadowTracker`].
pub fn replay<'a, I>(base: &ModelState, deltas: I) -> Result<Vec<ModelState>>
where
    I: IntoIterator<Item = &'a QuantizedDelta>,
{
    let mut states = Vec::new();
    let mut cur = base.clone();
    for q in deltas {
        cur = apply_delta(&cur, &dequantize(q))?;
        states.push(cur.clone());
    }
    Ok(states)
}
