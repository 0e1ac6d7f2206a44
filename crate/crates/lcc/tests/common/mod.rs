#![allow(dead_code)]

use std::path::Path;

use lcc::format::{encode_chunk, Chunk};
use lcc::lab::corpus::gaussian_walk;
use lcc::store::{ChainSink, ChainWriter, Durability, FaultPlan};
use lcc::Result;
use lcc_core::codec::{QuantizerConfig, ShadowTracker};
use lcc_core::huffman::CacheKeyMode;
use lcc_core::state::ModelState;

/// Encodes `states[1..]` as steps 1, 2, ... onto `states[0]` and returns the
/// encoder shadow after each committed step. Stops at the first error.
pub fn encode_chain(
    dir: &Path,
    states: &[ModelState],
    q: QuantizerConfig,
    merge_every: usize,
    fault: Option<FaultPlan>,
) -> (Vec<(u64, ModelState)>, Result<()>) {
    let mut shadows = vec![(0, states[0].clone())];
    let mut writer = match ChainWriter::create(dir, &states[0], 0, 1, Durability::NoSync) {
        Ok(w) => w,
        Err(e) => return (Vec::new(), Err(e)),
    };
    if let Some(f) = fault {
        writer = writer.with_fault(f);
    }
    let mut sink = ChainSink::new(writer, states[0].clone(), merge_every);
    let mut tracker = ShadowTracker::new(states[0].clone(), q, CacheKeyMode::SortedFrequencies).unwrap();
    for s in &states[1..] {
        let (step, e) = tracker.encode_step(s).unwrap();
        let chunk = Chunk::coded(step, e);
        let bytes = encode_chunk(&chunk).unwrap();
        if let Err(e) = sink.commit(chunk, &bytes) {
            return (shadows, Err(e));
        }
        shadows.push((step, tracker.shadow().clone()));
    }
    (shadows, Ok(()))
}

pub fn walk(n: usize, states: usize, seed: u64) -> Vec<ModelState> {
    gaussian_walk(n, states, 0.01, seed).unwrap()
}
