//! Checkpoint chains on disk.
//!
//! A chain directory holds `base-<step>.lcc`, `delta-<step>.lcc` and
//! `super-<from>-<to>.lcc` files plus a `MANIFEST` that lists, in commit
//! order, the files that are complete. Every file is written to a temporary
//! name, synced and renamed, and only then added to the manifest (which is
//! replaced the same way). Anything not in the manifest is ignored, so a
//! crash at any point leaves a readable prefix.

use std::fmt::Write as _;
use std::fs::{self, File};
use std::io::Write;
use std::path::{Path, PathBuf};

use lcc_core::state::ModelState;

use crate::error::{LccError, Result};
use crate::format::{decode_chunk, encode_chunk, Chunk};

pub const MANIFEST: &str = "MANIFEST";
const MANIFEST_HEADER: &str = "lcc-manifest 1";

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum EntryKind {
    Base,
    Delta,
    /// Full state at `step` standing in for the deltas `from..=step`.
    Super { from: u64 },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ManifestEntry {
    pub kind: EntryKind,
    pub step: u64,
    pub file: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Manifest {
    pub every: u64,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn render(&self) -> String {
        let mut s = format!("{MANIFEST_HEADER} every {}\n", self.every);
        for e in &self.entries {
            match e.kind {
                EntryKind::Base => writeln!(s, "base {} {}", e.step, e.file),
                EntryKind::Delta => writeln!(s, "delta {} {}", e.step, e.file),
                EntryKind::Super { from } => writeln!(s, "super {from} {} {}", e.step, e.file),
            }
            .unwrap();
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let bad = |line: usize, why: &str| LccError::Chain(format!("MANIFEST line {}: {why}", line + 1));
        let mut lines = text.lines().enumerate();
        let every = match lines.next() {
            Some((_, l)) => l
                .strip_prefix(MANIFEST_HEADER)
                .and_then(|r| r.trim().strip_prefix("every "))
                .and_then(|r| r.trim().parse::<u64>().ok())
                .filter(|&e| e > 0)
                .ok_or_else(|| bad(0, "bad header"))?,
            None => return Err(bad(0, "empty manifest")),
        };
        let mut m = Manifest { every, entries: Vec::new() };
        for (i, line) in lines {
            if line.trim().is_empty() {
                continue;
            }
            let f: Vec<&str> = line.split_whitespace().collect();
            let num = |s: &str| s.parse::<u64>().map_err(|_| bad(i, "bad step number"));
            let entry = match f.as_slice() {
                ["base", s, file] => ManifestEntry { kind: EntryKind::Base, step: num(s)?, file: file.to_string() },
                ["delta", s, file] => ManifestEntry { kind: EntryKind::Delta, step: num(s)?, file: file.to_string() },
                ["super", a, b, file] => {
                    ManifestEntry { kind: EntryKind::Super { from: num(a)? }, step: num(b)?, file: file.to_string() }
                }
                _ => return Err(bad(i, "unrecognized entry")),
            };
            m.check_next(&entry).map_err(|e| bad(i, &e))?;
            m.entries.push(entry);
        }
        if m.entries.is_empty() {
            return Err(bad(0, "no base entry"));
        }
        Ok(m)
    }

    /// Whether `e` may follow the current entries.
    fn check_next(&self, e: &ManifestEntry) -> std::result::Result<(), String> {
        if e.file.contains('/') || e.file.contains('\\') || e.file.starts_with('.') {
            return Err(format!("unsafe file name {}", e.file));
        }
        match (&e.kind, self.entries.is_empty()) {
            (EntryKind::Base, true) => Ok(()),
            (_, true) => Err("chain must start with a base".into()),
            (EntryKind::Base, false) => Err("second base entry".into()),
            (EntryKind::Delta, false) => {
                if e.step > self.last_step() {
                    Ok(())
                } else {
                    Err(format!("step {} does not follow {}", e.step, self.last_step()))
                }
            }
            (EntryKind::Super { from }, false) => {
                let steps = self.steps();
                let prev = self.last_super_step().unwrap_or(self.base_step());
                let first_after = steps.iter().copied().find(|&s| s > prev);
                if *from <= e.step && Some(*from) == first_after && steps.contains(&e.step) {
                    Ok(())
                } else {
                    Err(format!("super-step {from}-{} does not cover committed deltas", e.step))
                }
            }
        }
    }

    pub fn base_step(&self) -> u64 {
        self.entries.first().map_or(0, |e| e.step)
    }

    /// Every recoverable step: the base and each delta.
    pub fn steps(&self) -> Vec<u64> {
        self.entries
            .iter()
            .filter(|e| matches!(e.kind, EntryKind::Base | EntryKind::Delta))
            .map(|e| e.step)
            .collect()
    }

    pub fn last_step(&self) -> u64 {
        self.steps().last().copied().unwrap_or(0)
    }

    fn last_super_step(&self) -> Option<u64> {
        self.entries.iter().rev().find(|e| matches!(e.kind, EntryKind::Super { .. })).map(|e| e.step)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Durability {
    /// fsync files and the directory before publishing.
    #[default]
    Sync,
    /// Skip fsync; rename still keeps files whole. For tests and benchmarks.
    NoSync,
}

/// Where a simulated crash stops a commit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FaultPoint {
    /// Nothing of the commit reaches the disk.
    BeforeWrite,
    /// Half the chunk reaches the temporary file.
    TornTempFile,
    /// The whole temporary file is written but not renamed.
    BeforeRename,
    /// The chunk file is in place but the manifest still lacks it.
    BeforeManifest,
    /// Half the new manifest reaches its temporary file.
    TornManifest,
}

impl FaultPoint {
    pub const ALL: [FaultPoint; 5] = [
        FaultPoint::BeforeWrite,
        FaultPoint::TornTempFile,
        FaultPoint::BeforeRename,
        FaultPoint::BeforeManifest,
        FaultPoint::TornManifest,
    ];

    fn name(self) -> &'static str {
        match self {
            FaultPoint::BeforeWrite => "before-write",
            FaultPoint::TornTempFile => "torn-temp-file",
            FaultPoint::BeforeRename => "before-rename",
            FaultPoint::BeforeManifest => "before-manifest",
            FaultPoint::TornManifest => "torn-manifest",
        }
    }
}

/// Crash at `point` during the `commit`-th commit after the base (0-based).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FaultPlan {
    pub point: FaultPoint,
    pub commit: usize,
}

fn sync_dir(dir: &Path, durability: Durability) -> Result<()> {
    if durability == Durability::Sync {
        File::open(dir)?.sync_all()?;
    }
    Ok(())
}

/// Writes `bytes` to `dir/name` through a temporary file and rename.
fn write_atomic(dir: &Path, name: &str, bytes: &[u8], durability: Durability, fault: Option<FaultPoint>) -> Result<()> {
    let tmp = dir.join(format!(".{name}.tmp"));
    let torn = matches!(fault, Some(FaultPoint::TornTempFile | FaultPoint::TornManifest));
    let mut f = File::create(&tmp)?;
    if torn {
        f.write_all(&bytes[..bytes.len() / 2])?;
        return Err(LccError::Injected(fault.unwrap().name()));
    }
    f.write_all(bytes)?;
    if durability == Durability::Sync {
        f.sync_all()?;
    }
    drop(f);
    if fault == Some(FaultPoint::BeforeRename) {
        return Err(LccError::Injected(FaultPoint::BeforeRename.name()));
    }
    fs::rename(&tmp, dir.join(name))?;
    sync_dir(dir, durability)
}

/// Removes a chain previously written to `dir`: the manifest, chunk files
/// and leftover temporaries. Other files are left alone.
pub fn clear_chain(dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    let entries = match fs::read_dir(dir) {
        Ok(e) => e,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(()),
        Err(e) => return Err(e.into()),
    };
    for entry in entries {
        let entry = entry?;
        let name = entry.file_name();
        let Some(name) = name.to_str() else { continue };
        let chunk = name.ends_with(".lcc")
            && (name.starts_with("base-") || name.starts_with("delta-") || name.starts_with("super-"));
        let tmp = name.starts_with('.') && name.ends_with(".tmp");
        if name == MANIFEST || chunk || tmp {
            fs::remove_file(entry.path())?;
        }
    }
    Ok(())
}

/// Single writer of a chain directory.
#[derive(Debug)]
pub struct ChainWriter {
    dir: PathBuf,
    manifest: Manifest,
    durability: Durability,
    fault: Option<FaultPlan>,
    commits: usize,
    crashed: bool,
    bytes_written: u64,
}

impl ChainWriter {
    /// Creates a new chain in `dir` (created if needed) with `base` as its
    /// snapshot at `base_step`. Fails if `dir` already holds a chain.
    pub fn create(dir: impl AsRef<Path>, base: &ModelState, base_step: u64, every: u64, durability: Durability) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        if every == 0 {
            return Err(LccError::Config("--every must be at least 1".into()));
        }
        fs::create_dir_all(&dir)?;
        if dir.join(MANIFEST).exists() {
            return Err(LccError::Chain(format!("{} already holds a chain", dir.display())));
        }
        let mut w = Self {
            dir,
            manifest: Manifest { every, entries: Vec::new() },
            durability,
            fault: None,
            commits: 0,
            crashed: false,
            bytes_written: 0,
        };
        let bytes = encode_chunk(&Chunk::snapshot(base_step, base))?;
        let file = format!("base-{base_step}.lcc");
        w.publish(ManifestEntry { kind: EntryKind::Base, step: base_step, file }, &bytes, None)?;
        Ok(w)
    }

    pub fn with_fault(mut self, plan: FaultPlan) -> Self {
        self.fault = Some(plan);
        self
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Total bytes of chunk files written, manifests excluded.
    pub fn bytes_written(&self) -> u64 {
        self.bytes_written
    }

    pub fn commit_delta(&mut self, step: u64, bytes: &[u8]) -> Result<()> {
        let entry = ManifestEntry { kind: EntryKind::Delta, step, file: format!("delta-{step}.lcc") };
        self.commit(entry, bytes)
    }

    pub fn commit_super(&mut self, from: u64, to: u64, bytes: &[u8]) -> Result<()> {
        let entry = ManifestEntry { kind: EntryKind::Super { from }, step: to, file: format!("super-{from}-{to}.lcc") };
        self.commit(entry, bytes)
    }

    fn commit(&mut self, entry: ManifestEntry, bytes: &[u8]) -> Result<()> {
        if self.crashed {
            return Err(LccError::Chain("writer stopped after a failed commit".into()));
        }
        self.manifest.check_next(&entry).map_err(LccError::Chain)?;
        let fault = self.fault.filter(|f| f.commit == self.commits).map(|f| f.point);
        self.commits += 1;
        let r = self.publish(entry, bytes, fault);
        if r.is_err() {
            self.crashed = true;
        }
        r
    }

    fn publish(&mut self, entry: ManifestEntry, bytes: &[u8], fault: Option<FaultPoint>) -> Result<()> {
        if fault == Some(FaultPoint::BeforeWrite) {
            return Err(LccError::Injected(FaultPoint::BeforeWrite.name()));
        }
        let chunk_fault = fault.filter(|f| matches!(f, FaultPoint::TornTempFile | FaultPoint::BeforeRename));
        write_atomic(&self.dir, &entry.file, bytes, self.durability, chunk_fault)?;
        self.bytes_written += bytes.len() as u64;
        if fault == Some(FaultPoint::BeforeManifest) {
            return Err(LccError::Injected(FaultPoint::BeforeManifest.name()));
        }
        let mut next = self.manifest.clone();
        next.entries.push(entry);
        let manifest_fault = fault.filter(|&f| f == FaultPoint::TornManifest);
        write_atomic(&self.dir, MANIFEST, next.render().as_bytes(), self.durability, manifest_fault)?;
        self.manifest = next;
        Ok(())
    }
}

/// Folds chunks onto `base` (the state at `base_step`) into one full-state
/// snapshot at the last chunk's step. Steps must increase; with `every` set
/// they must also follow each other exactly that many steps apart, starting
/// right after `base_step`.
pub fn merge_chunks(base_step: u64, base: &ModelState, chunks: &[Chunk], every: Option<u64>) -> Result<Chunk> {
    let mut state = base.clone();
    let mut prev = base_step;
    for c in chunks {
        let ok = match every {
            Some(e) => c.step == prev + e,
            None => c.step > prev,
        };
        if !ok {
            return Err(LccError::Chain(format!("gap in merged steps: {} after {prev}", c.step)));
        }
        prev = c.step;
        state = c.apply(&state)?;
    }
    match chunks.last() {
        Some(last) => Ok(Chunk::snapshot(last.step, &state)),
        None => Err(LccError::Chain("nothing to merge".into())),
    }
}

/// Read access to a committed chain.
#[derive(Debug, Clone)]
pub struct ChainReader {
    dir: PathBuf,
    manifest: Manifest,
}

impl ChainReader {
    pub fn open(dir: impl AsRef<Path>) -> Result<Self> {
        let dir = dir.as_ref().to_path_buf();
        let path = dir.join(MANIFEST);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LccError::Chain(format!("no chain in {}", dir.display())));
            }
            Err(e) => return Err(LccError::from(e).in_file(path)),
        };
        let manifest = Manifest::parse(&text).map_err(|e| e.in_file(&path))?;
        Ok(Self { dir, manifest })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    /// Reads and checks the chunk behind a manifest entry.
    pub fn load(&self, entry: &ManifestEntry) -> Result<Chunk> {
        let path = self.dir.join(&entry.file);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(LccError::Chain(format!("chunk for step {} is missing", entry.step)).in_file(path));
            }
            Err(e) => return Err(LccError::from(e).in_file(path)),
        };
        let chunk = decode_chunk(&bytes).map_err(|e| e.in_file(&path))?;
        let kind_ok = match entry.kind {
            EntryKind::Base | EntryKind::Super { .. } => chunk.is_snapshot(),
            EntryKind::Delta => !chunk.is_snapshot(),
        };
        if chunk.step != entry.step || !kind_ok {
            return Err(LccError::Chain(format!("file does not hold step {}", entry.step)).in_file(path));
        }
        Ok(chunk)
    }

    /// Size in bytes of an entry's file.
    pub fn file_len(&self, entry: &ManifestEntry) -> Result<u64> {
        let path = self.dir.join(&entry.file);
        fs::metadata(&path).map(|m| m.len()).map_err(|e| LccError::from(e).in_file(path))
    }

    pub fn base(&self) -> Result<ModelState> {
        self.load(&self.manifest.entries[0])?.to_state()
    }

    /// State at step `t`, starting from the latest super-step at or before it.
    pub fn recover(&self, t: u64) -> Result<ModelState> {
        self.recover_with(t, true).map(|(s, _)| s)
    }

    /// State at step `t` from the base and every delta, ignoring super-steps.
    pub fn recover_sequential(&self, t: u64) -> Result<ModelState> {
        self.recover_with(t, false).map(|(s, _)| s)
    }

    /// Recovers step `t` and reports how many chunk files were read.
    pub fn recover_with(&self, t: u64, use_supers: bool) -> Result<(ModelState, usize)> {
        if !self.manifest.steps().contains(&t) {
            return Err(LccError::MissingStep(t));
        }
        let anchor = self
            .manifest
            .entries
            .iter()
            .filter(|e| match e.kind {
                EntryKind::Base => true,
                EntryKind::Super { .. } => use_supers && e.step <= t,
                EntryKind::Delta => false,
            })
            .max_by_key(|e| e.step)
            .expect("manifest starts with a base");
        let mut state = self.load(anchor)?.to_state()?;
        let mut files = 1;
        for e in &self.manifest.entries {
            if e.kind == EntryKind::Delta && e.step > anchor.step && e.step <= t {
                state = self.load(e)?.apply(&state)?;
                files += 1;
            }
        }
        Ok((state, files))
    }

    /// Every recoverable state in step order, decoding each delta once.
    pub fn recover_all(&self) -> Result<Vec<(u64, ModelState)>> {
        let mut state = self.base()?;
        let mut out = vec![(self.manifest.base_step(), state.clone())];
        for e in &self.manifest.entries {
            if e.kind == EntryKind::Delta {
                state = self.load(e)?.apply(&state)?;
                out.push((e.step, state.clone()));
            }
        }
        Ok(out)
    }
}

/// Result of committing one delta.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CommitInfo {
    pub step: u64,
    pub bytes: usize,
    /// `(from, to)` when this commit also wrote a super-step.
    pub merged: Option<(u64, u64)>,
}

/// Commits deltas in order and writes a super-step after every
/// `merge_every` of them.
#[derive(Debug)]
pub struct ChainSink {
    writer: ChainWriter,
    merge_every: usize,
    anchor_step: u64,
    anchor: ModelState,
    pending: Vec<Chunk>,
}

impl ChainSink {
    /// `merge_every == 0` disables merging. `base` must be the state the
    /// writer's base snapshot holds.
    pub fn new(writer: ChainWriter, base: ModelState, merge_every: usize) -> Self {
        let anchor_step = writer.manifest().base_step();
        Self { writer, merge_every, anchor_step, anchor: base, pending: Vec::new() }
    }

    pub fn writer(&self) -> &ChainWriter {
        &self.writer
    }

    pub fn into_writer(self) -> ChainWriter {
        self.writer
    }

    /// Writes a serialized delta chunk (`bytes` must encode `chunk`).
    pub fn commit(&mut self, chunk: Chunk, bytes: &[u8]) -> Result<CommitInfo> {
        let step = chunk.step;
        self.writer.commit_delta(step, bytes)?;
        let mut info = CommitInfo { step, bytes: bytes.len(), merged: None };
        if self.merge_every == 0 {
            return Ok(info);
        }
        self.pending.push(chunk);
        if self.pending.len() >= self.merge_every {
            // Pending chunks are exactly the deltas committed since the
            // anchor, so they are contiguous in the chain even across drops.
            let merged = merge_chunks(self.anchor_step, &self.anchor, &self.pending, None)?;
            let from = self.pending[0].step;
            let sbytes = encode_chunk(&merged)?;
            self.writer.commit_super(from, step, &sbytes)?;
            self.anchor = merged.apply(&self.anchor)?;
            self.anchor_step = step;
            self.pending.clear();
            info.merged = Some((from, step));
        }
        Ok(info)
    }
}
