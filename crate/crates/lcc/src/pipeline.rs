//! Background encoding.
//!
//! The training loop hands over a copy of its state and moves on. A single
//! quantizer thread turns snapshots into quantized, Huffman-coded deltas in
//! submission order (step t+1 needs the shadow left by step t), a pool of
//! workers serializes them, and a committer writes them to the chain in step
//! order through a reorder buffer, merging super-steps as it goes.
//!
//! With `depth == 0` everything runs inline in `submit`.

use std::collections::{BTreeMap, VecDeque};
use std::sync::mpsc;
use std::sync::{Arc, Condvar, Mutex};
use std::thread::{self, JoinHandle};
use std::time::{Duration, Instant};

use lcc_core::codec::ShadowTracker;
use lcc_core::state::ModelState;

use crate::error::{LccError, Result};
use crate::format::{encode_chunk, Chunk};
use crate::store::{ChainSink, ChainWriter, CommitInfo};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum QueuePolicy {
    /// `submit` waits for room.
    #[default]
    Block,
    /// `submit` discards the oldest snapshot that has not been quantized yet.
    DropOldestUnwritten,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PipelineBudget {
    /// Snapshots waiting for the quantizer; 0 runs synchronously.
    pub depth: usize,
    /// Serialization threads.
    pub workers: usize,
    pub policy: QueuePolicy,
}

impl Default for PipelineBudget {
    fn default() -> Self {
        Self { depth: 4, workers: 2, policy: QueuePolicy::Block }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Outcome {
    Committed(CommitInfo),
    Dropped,
}

type SlotValue = Option<Result<Outcome>>;

#[derive(Default)]
struct Slot {
    value: Mutex<SlotValue>,
    ready: Condvar,
}

impl Slot {
    fn resolve(&self, r: Result<Outcome>) {
        *self.value.lock().unwrap() = Some(r);
        self.ready.notify_all();
    }
}

/// Completion handle for one submitted step.
pub struct Ticket {
    step: u64,
    slot: Arc<Slot>,
}

impl Ticket {
    fn resolved(step: u64, r: Result<Outcome>) -> Self {
        let slot = Arc::new(Slot::default());
        slot.resolve(r);
        Self { step, slot }
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.slot.value.lock().unwrap().is_some()
    }

    /// Blocks until the step is committed, dropped or failed.
    pub fn wait(self) -> Result<Outcome> {
        let mut v = self.slot.value.lock().unwrap();
        loop {
            if let Some(r) = v.take() {
                return r;
            }
            v = self.slot.ready.wait(v).unwrap();
        }
    }
}

struct Job {
    step: u64,
    state: ModelState,
    slot: Arc<Slot>,
}

#[derive(Default)]
struct QueueState {
    jobs: VecDeque<Job>,
    closed: bool,
}

struct Shared {
    queue: Mutex<QueueState>,
    not_empty: Condvar,
    not_full: Condvar,
    failure: Mutex<Option<String>>,
    dropped: Mutex<u64>,
}

impl Shared {
    fn fail(&self, msg: String) {
        let mut f = self.failure.lock().unwrap();
        if f.is_none() {
            *f = Some(msg);
        }
    }

    fn failed(&self) -> Option<String> {
        self.failure.lock().unwrap().clone()
    }
}

/// What [`Pipeline::finish`] hands back.
#[derive(Debug)]
pub struct PipelineReport {
    pub tracker: ShadowTracker,
    pub writer: ChainWriter,
    pub committed: Vec<CommitInfo>,
    pub dropped: u64,
}

enum Mode {
    Sync {
        tracker: Box<ShadowTracker>,
        sink: ChainSink,
        committed: Vec<CommitInfo>,
    },
    Async {
        shared: Arc<Shared>,
        depth: usize,
        policy: QueuePolicy,
        quantizer: JoinHandle<ShadowTracker>,
        workers: Vec<JoinHandle<()>>,
        committer: JoinHandle<(ChainSink, Vec<CommitInfo>)>,
    },
}

pub struct Pipeline {
    mode: Mode,
    blocked: Duration,
    last_step: u64,
}

struct Encoded {
    seq: u64,
    chunk: Chunk,
    slot: Arc<Slot>,
}

struct Serialized {
    seq: u64,
    chunk: Chunk,
    bytes: Result<Vec<u8>>,
    slot: Arc<Slot>,
}

fn pipeline_error(msg: &str) -> LccError {
    LccError::Pipeline(format!("pipeline stopped: {msg}"))
}

impl Pipeline {
    /// `tracker` must start from the state `sink` was created with.
    pub fn start(tracker: ShadowTracker, sink: ChainSink, budget: PipelineBudget) -> Result<Self> {
        let last_step = tracker.step();
        if budget.depth == 0 {
            return Ok(Self { mode: Mode::Sync { tracker: Box::new(tracker), sink, committed: Vec::new() }, blocked: Duration::ZERO, last_step });
        }
        if budget.workers == 0 {
            return Err(LccError::Config("the pipeline needs at least one worker".into()));
        }
        let shared = Arc::new(Shared {
            queue: Mutex::new(QueueState::default()),
            not_empty: Condvar::new(),
            not_full: Condvar::new(),
            failure: Mutex::new(None),
            dropped: Mutex::new(0),
        });
        let (enc_tx, enc_rx) = mpsc::channel::<Encoded>();
        let (ser_tx, ser_rx) = mpsc::channel::<Serialized>();

        let quantizer = {
            let shared = Arc::clone(&shared);
            let mut tracker = tracker;
            thread::Builder::new().name("lcc-quantize".into()).spawn(move || {
                let mut seq = 0u64;
                loop {
                    let job = {
                        let mut q = shared.queue.lock().unwrap();
                        loop {
                            if let Some(j) = q.jobs.pop_front() {
                                break Some(j);
                            }
                            if q.closed {
                                break None;
                            }
                            q = shared.not_empty.wait(q).unwrap();
                        }
                    };
                    shared.not_full.notify_all();
                    let Some(job) = job else { break };
                    if let Some(msg) = shared.failed() {
                        job.slot.resolve(Err(pipeline_error(&msg)));
                        continue;
                    }
                    let r = tracker
                        .quantize_step_at(job.step, &job.state)
                        .and_then(|(step, q)| Ok(Chunk::coded(step, tracker.entropy_encode(q)?)));
                    match r {
                        Ok(chunk) => {
                            let _ = enc_tx.send(Encoded { seq, chunk, slot: job.slot });
                            seq += 1;
                        }
                        Err(e) => {
                            let e = LccError::from(e);
                            shared.fail(format!("step {}: {e}", job.step));
                            job.slot.resolve(Err(e));
                        }
                    }
                }
                tracker
            })?
        };

        let enc_rx = Arc::new(Mutex::new(enc_rx));
        let mut workers = Vec::with_capacity(budget.workers);
        for i in 0..budget.workers {
            let rx = Arc::clone(&enc_rx);
            let tx = ser_tx.clone();
            workers.push(thread::Builder::new().name(format!("lcc-serialize-{i}")).spawn(move || loop {
                let next = rx.lock().unwrap().recv();
                let Ok(e) = next else { break };
                let bytes = encode_chunk(&e.chunk);
                if tx.send(Serialized { seq: e.seq, chunk: e.chunk, bytes, slot: e.slot }).is_err() {
                    break;
                }
            })?);
        }
        drop(ser_tx);

        let committer = {
            let shared = Arc::clone(&shared);
            let mut sink = sink;
            thread::Builder::new().name("lcc-commit".into()).spawn(move || {
                let mut pending: BTreeMap<u64, Serialized> = BTreeMap::new();
                let mut next = 0u64;
                let mut committed = Vec::new();
                // Everything quantized before a failure elsewhere is still
                // valid; only a failed commit stops later ones.
                let mut stopped: Option<String> = None;
                for s in ser_rx {
                    pending.insert(s.seq, s);
                    while let Some(s) = pending.remove(&next) {
                        next += 1;
                        if let Some(msg) = &stopped {
                            s.slot.resolve(Err(pipeline_error(msg)));
                            continue;
                        }
                        let step = s.chunk.step;
                        let r = s.bytes.and_then(|b| sink.commit(s.chunk, &b));
                        match r {
                            Ok(info) => {
                                committed.push(info.clone());
                                s.slot.resolve(Ok(Outcome::Committed(info)));
                            }
                            Err(e) => {
                                let msg = format!("step {step}: {e}");
                                shared.fail(msg.clone());
                                stopped = Some(msg);
                                s.slot.resolve(Err(e));
                            }
                        }
                    }
                }
                (sink, committed)
            })?
        };

        Ok(Self {
            mode: Mode::Async { shared, depth: budget.depth, policy: budget.policy, quantizer, workers, committer },
            blocked: Duration::ZERO,
            last_step,
        })
    }

    /// Hands a copy of the state at `step` to the pipeline. Steps must
    /// increase. In synchronous mode the work is done before returning.
    pub fn submit(&mut self, step: u64, state: &ModelState) -> Result<Ticket> {
        if step <= self.last_step {
            return Err(LccError::Pipeline(format!("step {step} submitted after {}", self.last_step)));
        }
        match &mut self.mode {
            Mode::Sync { tracker, sink, committed } => {
                let (step, q) = tracker.quantize_step_at(step, state)?;
                let chunk = Chunk::coded(step, tracker.entropy_encode(q)?);
                let bytes = encode_chunk(&chunk)?;
                let info = sink.commit(chunk, &bytes)?;
                committed.push(info.clone());
                self.last_step = step;
                Ok(Ticket::resolved(step, Ok(Outcome::Committed(info))))
            }
            Mode::Async { shared, depth, policy, .. } => {
                if let Some(msg) = shared.failed() {
                    return Err(pipeline_error(&msg));
                }
                let slot = Arc::new(Slot::default());
                let job = Job { step, state: state.clone(), slot: Arc::clone(&slot) };
                let mut q = shared.queue.lock().unwrap();
                if q.jobs.len() >= *depth {
                    match policy {
                        QueuePolicy::Block => {
                            let start = Instant::now();
                            while q.jobs.len() >= *depth {
                                q = shared.not_full.wait(q).unwrap();
                            }
                            self.blocked += start.elapsed();
                        }
                        QueuePolicy::DropOldestUnwritten => {
                            let old = q.jobs.pop_front().expect("queue is full");
                            *shared.dropped.lock().unwrap() += 1;
                            old.slot.resolve(Ok(Outcome::Dropped));
                        }
                    }
                }
                q.jobs.push_back(job);
                drop(q);
                shared.not_empty.notify_one();
                self.last_step = step;
                Ok(Ticket { step, slot })
            }
        }
    }

    /// Wall time `submit` spent waiting for queue room.
    pub fn blocked_time(&self) -> Duration {
        self.blocked
    }

    /// Drains the queue, stops the threads and reports the first failure.
    pub fn finish(self) -> Result<PipelineReport> {
        match self.mode {
            Mode::Sync { tracker, sink, committed } => {
                Ok(PipelineReport { tracker: *tracker, writer: sink.into_writer(), committed, dropped: 0 })
            }
            Mode::Async { shared, quantizer, workers, committer, .. } => {
                shared.queue.lock().unwrap().closed = true;
                shared.not_empty.notify_all();
                let tracker = quantizer.join().map_err(|_| LccError::Pipeline("quantizer thread panicked".into()))?;
                for w in workers {
                    w.join().map_err(|_| LccError::Pipeline("serializer thread panicked".into()))?;
                }
                let (sink, committed) =
                    committer.join().map_err(|_| LccError::Pipeline("committer thread panicked".into()))?;
                if let Some(msg) = shared.failed() {
                    return Err(pipeline_error(&msg));
                }
                let dropped = *shared.dropped.lock().unwrap();
                Ok(PipelineReport { tracker, writer: sink.into_writer(), committed, dropped })
            }
        }
    }
}

/// CPU time consumed so far by the calling thread.
pub fn thread_cpu_time() -> Duration {
    let mut ts = libc::timespec { tv_sec: 0, tv_nsec: 0 };
    // SAFETY: `ts` is a valid out-pointer and the clock id is a constant.
    let rc = unsafe { libc::clock_gettime(libc::CLOCK_THREAD_CPUTIME_ID, &mut ts) };
    assert_eq!(rc, 0, "CLOCK_THREAD_CPUTIME_ID unavailable");
    Duration::new(ts.tv_sec as u64, ts.tv_nsec as u32)
}
