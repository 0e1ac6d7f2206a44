//! State files and streams.
//!
//! A state file is one or more snapshot chunks back to back, so the output
//! of `lcc recover` is itself a valid input. A stream on stdin carries the
//! same chunks, each preceded by its length as a little-endian u64.

use std::fs;
use std::io::{self, Read, Write};
use std::path::Path;

use lcc_core::state::ModelState;

use crate::format::{decode_chunk, encode_chunk, split_chunks, Chunk};
use crate::{LccError, Result};

/// Frames longer than this are rejected before allocating.
pub const MAX_FRAME: u64 = 1 << 34;

pub fn encode_state(step: u64, state: &ModelState) -> Result<Vec<u8>> {
    encode_chunk(&Chunk::snapshot(step, state))
}

fn snapshot_state(bytes: &[u8], offset: usize) -> Result<(u64, ModelState)> {
    let chunk = decode_chunk(bytes).map_err(|e| match e {
        LccError::Corrupt { offset: o, reason } => LccError::Corrupt { offset: o + offset as u64, reason },
        other => other,
    })?;
    if !chunk.is_snapshot() {
        return Err(LccError::corrupt(offset + 5, "state chunk is not a snapshot"));
    }
    Ok((chunk.step, chunk.to_state()?))
}

/// Parses back-to-back snapshot chunks.
pub fn parse_states(bytes: &[u8]) -> Result<Vec<(u64, ModelState)>> {
    let mut offset = 0;
    let mut out = Vec::new();
    for part in split_chunks(bytes)? {
        out.push(snapshot_state(part, offset)?);
        offset += part.len();
    }
    Ok(out)
}

pub fn read_states(path: &Path) -> Result<Vec<(u64, ModelState)>> {
    let bytes = fs::read(path).map_err(|e| LccError::from(e).in_file(path))?;
    parse_states(&bytes).map_err(|e| e.in_file(path))
}

pub fn write_states(path: &Path, states: &[(u64, ModelState)]) -> Result<()> {
    let mut bytes = Vec::new();
    for (step, s) in states {
        bytes.extend(encode_state(*step, s)?);
    }
    fs::write(path, bytes).map_err(|e| LccError::from(e).in_file(path))
}

pub fn write_frame<W: Write>(w: &mut W, step: u64, state: &ModelState) -> Result<()> {
    let bytes = encode_state(step, state)?;
    w.write_all(&(bytes.len() as u64).to_le_bytes())?;
    w.write_all(&bytes)?;
    Ok(())
}

/// Reads length-prefixed state frames until a clean end of stream.
pub struct FrameReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> FrameReader<R> {
    pub fn new(inner: R) -> Self {
        Self { inner, offset: 0 }
    }

    fn fill(&mut self, buf: &mut [u8]) -> Result<usize> {
        let mut got = 0;
        while got < buf.len() {
            match self.inner.read(&mut buf[got..]) {
                Ok(0) => break,
                Ok(n) => got += n,
                Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
                Err(e) => return Err(e.into()),
            }
        }
        Ok(got)
    }
}

impl<R: Read> Iterator for FrameReader<R> {
    type Item = Result<(u64, ModelState)>;

    fn next(&mut self) -> Option<Self::Item> {
        let mut len = [0u8; 8];
        let start = self.offset;
        match self.fill(&mut len) {
            Ok(0) => return None,
            Ok(8) => {}
            Ok(n) => return Some(Err(LccError::corrupt((start + n as u64) as usize, "truncated frame length"))),
            Err(e) => return Some(Err(e)),
        }
        let len = u64::from_le_bytes(len);
        if len > MAX_FRAME {
            return Some(Err(LccError::corrupt(start as usize, format!("frame of {len} bytes is too large"))));
        }
        let mut buf = vec![0u8; len as usize];
        match self.fill(&mut buf) {
            Ok(n) if n as u64 == len => {}
            Ok(n) => return Some(Err(LccError::corrupt((start + 8 + n as u64) as usize, "truncated frame"))),
            Err(e) => return Some(Err(e)),
        }
        self.offset = start + 8 + len;
        Some(snapshot_state(&buf, (start + 8) as usize))
    }
}
