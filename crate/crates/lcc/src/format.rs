//! The `.lcc` chunk container.
//!
//! All integers are little-endian.
//!
//! ```text
//! offset  size  field
//!      0     4  magic "LCCK"
//!      4     1  version (1)
//!      5     1  flags: bit 0 f64 values (reserved, must be 0), bit 1 full-state snapshot
//!      6     1  quantizer id: 0 raw, 1 exponent, 2 rate-distortion
//!      7     1  promotion bits x
//!      8     8  step
//!     16     8  n, element count
//!     24     2  k, bucket count
//!     26     2  bucket count before promotion
//!     28    4k  bucket representatives, f32
//!      .     2  code table length (k)
//!      .     k  code length per bucket, 0 = unused
//!      .     8  payload bit length
//!      .     .  payload, ceil(bits / 8) bytes
//!      .     4  CRC-32 of every preceding byte
//! ```
//!
//! Raw chunks have `k = 0`, an empty code table and `n` f32 values as their
//! payload. They hold base snapshots and merged super-steps.

use std::io::Write;

use lcc_core::codec::EncodedDelta;
use lcc_core::huffman::{self, BitStream, CodeTable};
use lcc_core::quantize::{QuantizedDelta, Scheme};
use lcc_core::state::ModelState;

use crate::error::{LccError, Result};

pub const MAGIC: [u8; 4] = *b"LCCK";
pub const VERSION: u8 = 1;
pub const FLAG_F64: u8 = 1 << 0;
pub const FLAG_SNAPSHOT: u8 = 1 << 1;
/// Bytes before the representatives.
pub const FIXED_HEADER: usize = 28;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum QuantizerId {
    Raw = 0,
    Exponent = 1,
    RateDistortion = 2,
}

impl QuantizerId {
    fn from_byte(b: u8) -> Option<Self> {
        match b {
            0 => Some(Self::Raw),
            1 => Some(Self::Exponent),
            2 => Some(Self::RateDistortion),
            _ => None,
        }
    }

    fn of(scheme: Scheme) -> Self {
        match scheme {
            Scheme::Exponent => Self::Exponent,
            Scheme::RateDistortion => Self::RateDistortion,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ChunkBody {
    /// Dense f32 values: a full state when `snapshot`, otherwise a delta.
    Raw { values: Vec<f32>, snapshot: bool },
    Coded(EncodedDelta),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chunk {
    pub step: u64,
    pub body: ChunkBody,
}

impl Chunk {
    pub fn snapshot(step: u64, state: &ModelState) -> Self {
        Chunk { step, body: ChunkBody::Raw { values: state.values().to_vec(), snapshot: true } }
    }

    pub fn coded(step: u64, encoded: EncodedDelta) -> Self {
        Chunk { step, body: ChunkBody::Coded(encoded) }
    }

    pub fn len(&self) -> usize {
        match &self.body {
            ChunkBody::Raw { values, .. } => values.len(),
            ChunkBody::Coded(e) => e.quantized.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn is_snapshot(&self) -> bool {
        matches!(self.body, ChunkBody::Raw { snapshot: true, .. })
    }

    /// Applies this chunk to `prev`: a snapshot replaces it, a delta is added.
    pub fn apply(&self, prev: &ModelState) -> Result<ModelState> {
        match &self.body {
            ChunkBody::Raw { values, snapshot: true } => {
                if values.len() != prev.len() {
                    return Err(lcc_core::Error::Shape { expected: prev.len(), found: values.len() }.into());
                }
                Ok(ModelState::with_segments(values.clone(), prev.segments().to_vec())?)
            }
            ChunkBody::Raw { values, snapshot: false } => {
                let delta = lcc_core::state::DeltaVector::new(values.clone());
                Ok(lcc_core::state::apply_delta(prev, &delta)?)
            }
            ChunkBody::Coded(e) => {
                let delta = lcc_core::quantize::dequantize(&e.quantized);
                Ok(lcc_core::state::apply_delta(prev, &delta)?)
            }
        }
    }

    /// The state held by a snapshot chunk.
    pub fn to_state(&self) -> Result<ModelState> {
        match &self.body {
            ChunkBody::Raw { values, snapshot: true } => Ok(ModelState::new(values.clone())?),
            _ => Err(LccError::Chain(format!("chunk at step {} is not a snapshot", self.step))),
        }
    }
}

/// Serializes a chunk. Identical chunks give identical bytes.
pub fn encode_chunk(chunk: &Chunk) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    match &chunk.body {
        ChunkBody::Raw { values, snapshot } => {
            if values.is_empty() {
                return Err(LccError::Config("chunk has no elements".into()));
            }
            out.push(if *snapshot { FLAG_SNAPSHOT } else { 0 });
            out.push(QuantizerId::Raw as u8);
            out.push(0);
            out.extend_from_slice(&chunk.step.to_le_bytes());
            out.extend_from_slice(&(values.len() as u64).to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
            out.extend_from_slice(&0u16.to_le_bytes());
            out.extend_from_slice(&(values.len() as u64 * 32).to_le_bytes());
            for v in values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        ChunkBody::Coded(e) => {
            let q = &e.quantized;
            let k = q.table().len();
            let k16 = u16::try_from(k).map_err(|_| LccError::Config("more than 65535 buckets".into()))?;
            out.push(0);
            out.push(QuantizerId::of(q.scheme()) as u8);
            out.push(q.promotion_bits());
            out.extend_from_slice(&chunk.step.to_le_bytes());
            out.extend_from_slice(&(q.len() as u64).to_le_bytes());
            out.extend_from_slice(&k16.to_le_bytes());
            out.extend_from_slice(&q.source_buckets().to_le_bytes());
            for r in q.table().representatives() {
                out.extend_from_slice(&r.to_le_bytes());
            }
            out.extend_from_slice(&k16.to_le_bytes());
            out.extend_from_slice(&e.table.alphabet_lengths(k));
            out.extend_from_slice(&e.payload.bit_len().to_le_bytes());
            out.extend_from_slice(e.payload.payload());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    Ok(out)
}

/// Writes a chunk and returns the number of bytes written.
pub fn write_chunk<W: Write>(chunk: &Chunk, sink: &mut W) -> Result<usize> {
    let bytes = encode_chunk(chunk)?;
    sink.write_all(&bytes)?;
    Ok(bytes.len())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, len: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(len).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(LccError::corrupt(self.pos, format!("truncated {what}"))),
        }
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f32(&mut self, what: &str) -> Result<f32> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }
}

/// Total length of the chunk starting at `bytes[0]`, read from its header.
/// Needs the header, representatives, code table and payload length; the
/// rest of the chunk may be missing.
pub fn chunk_size(bytes: &[u8]) -> Result<usize> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(LccError::corrupt(0, "bad magic"));
    }
    let mut c = Cursor { bytes, pos: 24 };
    let k = usize::from(c.u16("bucket count")?);
    c.pos = FIXED_HEADER + 4 * k + 2 + k;
    let payload_bits = c.u64("payload length")?;
    usize::try_from(payload_bits.div_ceil(8))
        .ok()
        .and_then(|p| (c.pos + 4).checked_add(p))
        .ok_or_else(|| LccError::corrupt(c.pos - 8, "payload length overflows"))
}

/// Splits back-to-back chunks.
pub fn split_chunks(mut bytes: &[u8]) -> Result<Vec<&[u8]>> {
    let mut out = Vec::new();
    let mut offset = 0usize;
    while !bytes.is_empty() {
        let len = chunk_size(bytes).map_err(|e| shift(e, offset))?;
        if len > bytes.len() {
            return Err(LccError::corrupt(offset + bytes.len(), "truncated chunk"));
        }
        let (head, rest) = bytes.split_at(len);
        out.push(head);
        bytes = rest;
        offset += len;
    }
    Ok(out)
}

fn shift(e: LccError, by: usize) -> LccError {
    match e {
        LccError::Corrupt { offset, reason } => LccError::Corrupt { offset: offset + by as u64, reason },
        other => other,
    }
}

/// Parses one chunk occupying all of `bytes`.
pub fn decode_chunk(bytes: &[u8]) -> Result<Chunk> {
    if bytes.len() < 4 || bytes[..4] != MAGIC {
        return Err(LccError::corrupt(0, "bad magic"));
    }
    if bytes.len() < FIXED_HEADER + 4 {
        return Err(LccError::corrupt(bytes.len(), "truncated header"));
    }
    let body_len = bytes.len() - 4;
    let stored = u32::from_le_bytes(bytes[body_len..].try_into().unwrap());
    let computed = crc32fast::hash(&bytes[..body_len]);
    if stored != computed {
        return Err(LccError::Checksum { stored, computed });
    }
    let mut c = Cursor { bytes: &bytes[..body_len], pos: 4 };
    let version = c.u8("version")?;
    if version != VERSION {
        return Err(LccError::corrupt(4, format!("unsupported version {version}")));
    }
    let flags = c.u8("flags")?;
    if flags & !(FLAG_SNAPSHOT | FLAG_F64) != 0 {
        return Err(LccError::corrupt(5, format!("unknown flags {flags:#04x}")));
    }
    if flags & FLAG_F64 != 0 {
        return Err(LccError::corrupt(5, "f64 chunks are not supported"));
    }
    let qid = c.u8("quantizer id")?;
    let quantizer = QuantizerId::from_byte(qid).ok_or_else(|| LccError::corrupt(6, format!("unknown quantizer id {qid}")))?;
    let bits = c.u8("promotion bits")?;
    let step = c.u64("step")?;
    let n = c.u64("element count")?;
    if n == 0 {
        return Err(LccError::corrupt(16, "chunk has no elements"));
    }
    let k = c.u16("bucket count")?;
    let k_source = c.u16("source bucket count")?;
    let snapshot = flags & FLAG_SNAPSHOT != 0;

    let body = if quantizer == QuantizerId::Raw {
        if k != 0 || k_source != 0 || bits != 0 {
            return Err(LccError::corrupt(24, "raw chunk with a bucket table"));
        }
        let at = c.pos;
        if c.u16("code table length")? != 0 {
            return Err(LccError::corrupt(at, "raw chunk with a code table"));
        }
        let at = c.pos;
        let payload_bits = c.u64("payload length")?;
        if Some(payload_bits) != n.checked_mul(32) {
            return Err(LccError::corrupt(at, "raw payload length does not match n"));
        }
        let at = c.pos;
        let raw = c.take(payload_bits as usize / 8, "payload")?;
        let values: Vec<f32> =
            raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(LccError::corrupt(at + 4 * i, "non-finite value"));
        }
        ChunkBody::Raw { values, snapshot }
    } else {
        if snapshot {
            return Err(LccError::corrupt(5, "quantized chunk flagged as snapshot"));
        }
        if k == 0 {
            return Err(LccError::corrupt(24, "quantized chunk without buckets"));
        }
        let reps_at = c.pos;
        let reps = (0..k).map(|_| c.f32("representatives")).collect::<Result<Vec<f32>>>()?;
        let at = c.pos;
        let table_len = c.u16("code table length")?;
        if table_len != k {
            return Err(LccError::corrupt(at, "code table length differs from bucket count"));
        }
        let lengths_at = c.pos;
        let lengths = c.take(k as usize, "code lengths")?;
        let table = CodeTable::from_alphabet_lengths(lengths).map_err(|e| LccError::corrupt(lengths_at, e.to_string()))?;
        let at = c.pos;
        let payload_bits = c.u64("payload length")?;
        if payload_bits < n {
            return Err(LccError::corrupt(at, "payload shorter than one bit per element"));
        }
        let payload_at = c.pos;
        let payload = c.take(payload_bits.div_ceil(8) as usize, "payload")?.to_vec();
        let stream = BitStream::from_parts(payload, payload_bits).map_err(|e| LccError::corrupt(payload_at, e.to_string()))?;
        let indices = huffman::decode(&stream, &table, n as usize).map_err(|e| LccError::corrupt(payload_at, e.to_string()))?;
        let scheme = if quantizer == QuantizerId::Exponent { Scheme::Exponent } else { Scheme::RateDistortion };
        let quantized = QuantizedDelta::from_parts(scheme, reps, indices, bits, k_source)
            .map_err(|e| LccError::corrupt(reps_at, e.to_string()))?;
        ChunkBody::Coded(EncodedDelta { quantized, table, payload: stream, cache_hit: false })
    };
    if c.pos != body_len {
        return Err(LccError::corrupt(c.pos, "trailing bytes before checksum"));
    }
    Ok(Chunk { step, body })
}
