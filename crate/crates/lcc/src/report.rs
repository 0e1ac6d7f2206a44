//! Per-chunk size breakdown of a chain.
//!
//! For a coded chunk with `n` elements, `k` buckets after promotion and
//! `k0` before, sizes are counted in bits as
//!
//! * exponent buckets only: `n ceil(log2 k0) + 32 k0`
//! * with promotion: `n ceil(log2 k) + 32 k`
//! * with Huffman coding: payload bits plus `32 k` for representatives and
//!   `8 k` for the code lengths.

use std::fmt::Write as _;

use lcc_core::huffman::shannon_entropy;
use lcc_core::quantize::index_width;

use crate::format::{Chunk, ChunkBody};
use crate::store::{ChainReader, EntryKind};
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct ChunkStats {
    pub kind: &'static str,
    pub step: u64,
    pub n: u64,
    /// Buckets before and after promotion; 0 for raw chunks.
    pub k_source: u64,
    pub k: u64,
    /// Entropy of the bucket distribution, bits per element.
    pub entropy: f64,
    pub exponent_bytes: u64,
    pub promoted_bytes: u64,
    pub coded_bytes: u64,
    pub file_bytes: u64,
}

fn bytes(bits: u64) -> u64 {
    bits.div_ceil(8)
}

pub fn chunk_stats(kind: &'static str, chunk: &Chunk, file_bytes: u64) -> ChunkStats {
    let n = chunk.len() as u64;
    match &chunk.body {
        ChunkBody::Raw { .. } => {
            let raw = 4 * n;
            ChunkStats {
                kind,
                step: chunk.step,
                n,
                k_source: 0,
                k: 0,
                entropy: 0.0,
                exponent_bytes: raw,
                promoted_bytes: raw,
                coded_bytes: raw,
                file_bytes,
            }
        }
        ChunkBody::Coded(e) => {
            let q = &e.quantized;
            let k = q.table().len() as u64;
            let k0 = u64::from(q.source_buckets()).max(k);
            ChunkStats {
                kind,
                step: chunk.step,
                n,
                k_source: k0,
                k,
                entropy: shannon_entropy(q.table().counts().filter(|&c| c > 0)),
                exponent_bytes: bytes(n * u64::from(index_width(k0)) + 32 * k0),
                promoted_bytes: bytes(n * u64::from(index_width(k)) + 32 * k),
                coded_bytes: bytes(e.payload.bit_len() + 40 * k),
                file_bytes,
            }
        }
    }
}

pub fn chain_stats(reader: &ChainReader) -> Result<Vec<ChunkStats>> {
    reader
        .manifest()
        .entries
        .iter()
        .map(|entry| {
            let kind = match entry.kind {
                EntryKind::Base => "base",
                EntryKind::Delta => "delta",
                EntryKind::Super { .. } => "super",
            };
            let chunk = reader.load(entry)?;
            Ok(chunk_stats(kind, &chunk, reader.file_len(entry)?))
        })
        .collect()
}

pub fn render_table(rows: &[ChunkStats]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "{:<6} {:>8} {:>10} {:>6} {:>6} {:>8} {:>12} {:>12} {:>12} {:>12}",
        "kind", "step", "n", "k_src", "k", "H", "E", "E+P", "E+P+H", "file"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} {:>8} {:>10} {:>6} {:>6} {:>8.4} {:>12} {:>12} {:>12} {:>12}",
            r.kind, r.step, r.n, r.k_source, r.k, r.entropy, r.exponent_bytes, r.promoted_bytes, r.coded_bytes, r.file_bytes
        );
    }
    let deltas: Vec<&ChunkStats> = rows.iter().filter(|r| r.kind == "delta").collect();
    if !deltas.is_empty() {
        let raw: u64 = deltas.iter().map(|r| 4 * r.n).sum();
        let file: u64 = deltas.iter().map(|r| r.file_bytes).sum();
        let _ = writeln!(out, "delta chunks: {} bytes of {} raw ({:.2}%)", file, raw, 100.0 * file as f64 / raw as f64);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::format::encode_chunk;
    use lcc_core::codec::{QuantizerConfig, ShadowTracker};
    use lcc_core::huffman::CacheKeyMode;
    use lcc_core::state::ModelState;

    #[test]
    fn identical_deltas_have_zero_entropy() {
        let mut t = ShadowTracker::new(ModelState::zeros(64).unwrap(), QuantizerConfig::Exponent { bits: 0 }, CacheKeyMode::default()).unwrap();
        let (step, e) = t.encode_step(&ModelState::new(vec![0.5; 64]).unwrap()).unwrap();
        let chunk = Chunk::coded(step, e);
        let len = encode_chunk(&chunk).unwrap().len() as u64;
        let s = chunk_stats("delta", &chunk, len);
        assert_eq!((s.k, s.k_source), (1, 1));
        assert_eq!(s.entropy, 0.0);
        // A single bucket still costs one bit per element once coded.
        assert_eq!(s.coded_bytes, 8 + 5);
        assert_eq!(s.promoted_bytes, 4);
        assert!(render_table(&[s]).contains("delta chunks"));
    }

    #[test]
    fn promotion_shrinks_the_fixed_width_size() {
        let v: Vec<f32> = (0..256).map(|i| (i as f32 - 128.0) * 0.37).collect();
        let mut t = ShadowTracker::new(ModelState::zeros(256).unwrap(), QuantizerConfig::Exponent { bits: 2 }, CacheKeyMode::default()).unwrap();
        let (step, e) = t.encode_step(&ModelState::new(v).unwrap()).unwrap();
        let s = chunk_stats("delta", &Chunk::coded(step, e), 0);
        assert!(s.k_source > s.k);
        assert!(s.coded_bytes <= s.promoted_bytes && s.promoted_bytes <= s.exponent_bytes);
        assert!(s.entropy <= f64::from(index_width(s.k)));
    }
}
