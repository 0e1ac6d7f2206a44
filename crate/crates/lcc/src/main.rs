use std::collections::VecDeque;
use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lcc::lab::ablation::{ablation_experiment, exponent_rank_correlation};
use lcc::lab::corpus::{gaussian_walk, task_run, LeastSquares};
use lcc::lab::coupling::{dominance_over_seeds, CouplingConfig, CouplingScheme};
use lcc::lab::logreg::{LogReg, LogRegConfig};
use lcc::lab::rework::{rework_experiment, run_trial, summarize, Method, ReworkConfig, ReworkRow};
use lcc::lab::sim::{simulate, Perturbation, SimConfig};
use lcc::lab::task::{InitShape, NoiseFamily, NoiseModel, Task};
use lcc::pipeline::{Outcome, Pipeline, PipelineBudget, QueuePolicy, Ticket};
use lcc::report::{chain_stats, render_table};
use lcc::statefile::{read_states, write_frame, write_states, FrameReader};
use lcc::store::{clear_chain, ChainReader, ChainSink, ChainWriter, Durability};
use lcc::{LccError, Result};
use lcc_core::codec::{QuantizerConfig, ShadowTracker};
use lcc_core::huffman::CacheKeyMode;
use lcc_core::rd::RdConfig;
use lcc_core::state::ModelState;
use log::{debug, info};

/// Lossy delta checkpoints for iterative training.
#[derive(Parser, Debug)]
#[command(name = "lcc", version, long_about = None)]
struct Cli {
    /// File of `key=value` lines supplying defaults for flags not given on
    /// the command line. Keys are flag names without dashes; `true` and
    /// `false` toggle switches.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Encode a sequence of states into a checkpoint chain.
    Encode(EncodeArgs),
    /// Reconstruct the state at one step of a chain.
    Recover(RecoverArgs),
    /// Print the per-chunk size breakdown of a chain.
    Stats(StatsArgs),
    /// Run a simulation experiment and write its CSV.
    Sim(SimArgs),
    /// Write a synthetic state sequence.
    GenStates(GenArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum QuantizerKind {
    Exp,
    Rd,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum CacheKey {
    Sorted,
    Count,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Policy {
    Block,
    DropOldest,
}

#[derive(Args, Debug)]
struct EncodeArgs {
    /// State file (back-to-back snapshot chunks) or `-` for length-prefixed
    /// frames on stdin.
    #[arg(long, short, value_name = "FILE")]
    input: PathBuf,
    /// Chain directory to create; an existing chain there is replaced.
    #[arg(long, short, value_name = "DIR")]
    out: PathBuf,
    /// Quantizer.
    #[arg(long, value_enum, default_value = "exp")]
    quantizer: QuantizerKind,
    /// Priority promotion bits for the exponent quantizer (0 = none).
    #[arg(long, default_value_t = 2)]
    bits: u8,
    /// Rate weight for the rate-distortion quantizer.
    #[arg(long, default_value_t = RdConfig::default().lambda)]
    lambda: f64,
    /// Interval limit for the rate-distortion quantizer.
    #[arg(long, default_value_t = RdConfig::default().k_max)]
    kmax: usize,
    /// Points sampled by the rate-distortion quantizer on large deltas.
    #[arg(long, default_value_t = RdConfig::default().sample_cap)]
    sample_cap: usize,
    /// Sampling seed for the rate-distortion quantizer.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Checkpoint every N-th state, counted in steps from the first.
    #[arg(long, default_value_t = 1)]
    every: u64,
    /// Write a super-step after every M deltas (0 = never).
    #[arg(long, default_value_t = 0)]
    merge_every: usize,
    /// States queued for the background encoder (0 = synchronous).
    #[arg(long, default_value_t = 0)]
    async_depth: usize,
    /// Serialization threads when asynchronous.
    #[arg(long, default_value_t = 2)]
    workers: usize,
    /// What to do when the queue is full.
    #[arg(long, value_enum, default_value = "block")]
    queue_policy: Policy,
    /// Code table cache key.
    #[arg(long, value_enum, default_value = "sorted")]
    cache_key: CacheKey,
    /// Skip fsync of chunk files, manifest and directory.
    #[arg(long)]
    no_fsync: bool,
}

#[derive(Args, Debug)]
struct RecoverArgs {
    /// Chain directory.
    chain: PathBuf,
    /// Step to reconstruct.
    #[arg(long)]
    step: u64,
    /// Output state file.
    #[arg(long, short, value_name = "FILE")]
    out: PathBuf,
    /// Replay every delta instead of starting from the latest super-step.
    #[arg(long)]
    sequential: bool,
}

#[derive(Args, Debug)]
struct StatsArgs {
    /// Chain directory.
    chain: PathBuf,
}

#[derive(Args, Debug)]
struct SimArgs {
    #[command(subcommand)]
    experiment: Experiment,
}

#[derive(Subcommand, Debug)]
enum Experiment {
    /// Rework after a failure for LC, TOPN and SCAR at one budget.
    Rework(ReworkArgs),
    /// Relative loss error from zeroing each exponent bucket of an m-step delta.
    Ablation(AblationArgs),
    /// Distance trajectories of the contraction model.
    Convergence(ConvergenceArgs),
    /// Norm dominance of coupled chains.
    Coupling(CouplingArgs),
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum TaskKind {
    Quadratic,
    Logreg,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Family {
    Gaussian,
    Ball,
}

impl From<Family> for NoiseFamily {
    fn from(f: Family) -> Self {
        match f {
            Family::Gaussian => NoiseFamily::Gaussian,
            Family::Ball => NoiseFamily::UniformBall,
        }
    }
}

/// Model flags shared by the quadratic experiments.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Dimension.
    #[arg(long)]
    n: Option<usize>,
    /// Contraction factor.
    #[arg(long)]
    eta: Option<f64>,
    /// Noise scale c: per-coordinate std is c ||u - u*|| / sqrt(n).
    #[arg(long)]
    noise: Option<f64>,
    /// Noise family.
    #[arg(long, value_enum, default_value = "gaussian")]
    family: Family,
    /// Steps to simulate.
    #[arg(long)]
    steps: Option<usize>,
    /// Base seed; trial i uses seed + i.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args, Debug)]
struct ReworkArgs {
    /// Checkpoint size per step as a fraction of a full checkpoint.
    #[arg(long, default_value_t = 0.05)]
    budget: f64,
    #[arg(long, default_value_t = 50)]
    trials: usize,
    /// Also run lossless full checkpoints.
    #[arg(long)]
    with_full: bool,
    /// Training task.
    #[arg(long, value_enum, default_value = "quadratic")]
    task: TaskKind,
    /// Failure point as a fraction of the run.
    #[arg(long, default_value_t = 0.7)]
    failure: f64,
    #[command(flatten)]
    model: ModelArgs,
    /// Output CSV.
    #[arg(long, short, value_name = "FILE")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct AblationArgs {
    /// Steps between the two states.
    #[arg(long, default_value_t = 10)]
    m: u64,
    /// Step at which the first state is taken.
    #[arg(long, default_value_t = 20)]
    theta: u64,
    #[arg(long, default_value_t = 30)]
    seeds: usize,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, short, value_name = "FILE")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum PerturbationKind {
    None,
    Topk,
    Rounding,
    ZeroMean,
    Lc,
    Rd,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Init {
    Constant,
    Gaussian,
    Lognormal,
}

#[derive(Args, Debug)]
struct ConvergenceArgs {
    /// Loss term applied to every step's delta.
    #[arg(long, value_enum, default_value = "none")]
    perturbation: PerturbationKind,
    /// Variance ratio for zero-mean noise.
    #[arg(long, default_value_t = 0.5)]
    rho: f64,
    /// Levels for randomized rounding.
    #[arg(long, default_value_t = 1)]
    levels: u32,
    /// Entries kept by top-k.
    #[arg(long, default_value_t = 1)]
    keep: usize,
    /// Promotion bits for the exponent codec.
    #[arg(long, default_value_t = 2)]
    bits: u8,
    #[arg(long, default_value_t = 0.0)]
    lambda: f64,
    #[arg(long, default_value_t = 4)]
    kmax: usize,
    /// Initial distance to the optimum.
    #[arg(long, default_value_t = 1.0)]
    l: f64,
    /// Shape of the initial offset.
    #[arg(long, value_enum, default_value = "constant")]
    init: Init,
    /// Number of seeds to run.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    #[command(flatten)]
    model: ModelArgs,
    #[arg(long, short, value_name = "FILE")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Scheme {
    Synchronous,
    Reflection,
}

#[derive(Args, Debug)]
struct CouplingArgs {
    /// Dimensions to probe.
    #[arg(long, value_delimiter = ',', default_value = "1,2,16")]
    dims: Vec<usize>,
    /// Coupling schemes to run.
    #[arg(long, value_enum, value_delimiter = ',', default_value = "synchronous,reflection")]
    schemes: Vec<Scheme>,
    #[arg(long, default_value_t = 100)]
    seeds: u64,
    #[arg(long, default_value_t = 0.9)]
    eta: f64,
    #[arg(long, default_value_t = 0.5)]
    noise: f64,
    #[arg(long, default_value_t = 200)]
    steps: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, short, value_name = "FILE")]
    out: PathBuf,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
enum Corpus {
    /// Independent Gaussian deltas.
    Walk,
    /// The quadratic contraction task.
    Quadratic,
    /// Minibatch SGD on dense least squares.
    LeastSquares,
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(long, value_enum, default_value = "walk")]
    kind: Corpus,
    #[arg(long, default_value_t = 4096)]
    n: usize,
    /// Number of states, the first being step 0.
    #[arg(long, default_value_t = 20)]
    states: usize,
    /// Per-step standard deviation for the walk.
    #[arg(long, default_value_t = 0.01)]
    scale: f32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write length-prefixed frames instead of a state file.
    #[arg(long)]
    frames: bool,
    /// Output file, or `-` for stdout.
    #[arg(long, short, value_name = "FILE")]
    out: PathBuf,
}

fn config_error(msg: impl Into<String>) -> LccError {
    LccError::Config(msg.into())
}

/// Appends `--key value` for every config-file entry whose flag is absent
/// from `args`.
fn merge_config(args: Vec<OsString>) -> Result<Vec<OsString>> {
    let mut path = None;
    for (i, a) in args.iter().enumerate() {
        let s = a.to_string_lossy();
        if s == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
        } else if let Some(p) = s.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
    }
    let Some(path) = path else { return Ok(args) };
    let text = fs::read_to_string(&path).map_err(|e| LccError::from(e).in_file(&path))?;
    let present: Vec<String> = args
        .iter()
        .filter_map(|a| a.to_str())
        .filter_map(|a| a.strip_prefix("--"))
        .map(|a| a.split('=').next().unwrap_or(a).to_string())
        .collect();
    let mut out = args;
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| config_error(format!("{}:{}: expected key=value", path.display(), lineno + 1)))?;
        let (k, v) = (k.trim().replace('_', "-"), v.trim());
        if k == "config" || present.contains(&k) {
            continue;
        }
        match v {
            "true" => out.push(format!("--{k}").into()),
            "false" => {}
            _ => {
                out.push(format!("--{k}").into());
                out.push(v.into());
            }
        }
    }
    Ok(out)
}

fn quantizer_config(a: &EncodeArgs) -> Result<QuantizerConfig> {
    let q = match a.quantizer {
        QuantizerKind::Exp => QuantizerConfig::Exponent { bits: a.bits },
        QuantizerKind::Rd => QuantizerConfig::RateDistortion(RdConfig {
            k_max: a.kmax,
            lambda: a.lambda,
            sample_cap: a.sample_cap,
            seed: a.seed,
            ..RdConfig::default()
        }),
    };
    q.validate()?;
    Ok(q)
}

type StateStream = Box<dyn Iterator<Item = Result<(u64, ModelState)>>>;

fn open_states(input: &Path) -> Result<StateStream> {
    if input == Path::new("-") {
        Ok(Box::new(FrameReader::new(io::stdin().lock())))
    } else {
        Ok(Box::new(read_states(input)?.into_iter().map(Ok)))
    }
}

struct Progress {
    raw: u64,
    written: u64,
}

impl Progress {
    fn report(&mut self, ticket: Ticket, n: usize) -> Result<()> {
        let step = ticket.step();
        match ticket.wait()? {
            Outcome::Committed(info) => {
                self.raw += 4 * n as u64;
                self.written += info.bytes as u64;
                let merged = info.merged.map(|(f, t)| format!(", merged {f}..{t}")).unwrap_or_default();
                eprintln!(
                    "step {step}: {} bytes, cumulative ratio {:.4}{merged}",
                    info.bytes,
                    self.written as f64 / self.raw as f64
                );
            }
            Outcome::Dropped => eprintln!("step {step}: dropped"),
        }
        Ok(())
    }
}

fn cmd_encode(a: &EncodeArgs) -> Result<()> {
    let quantizer = quantizer_config(a)?;
    if a.every == 0 {
        return Err(config_error("--every must be at least 1"));
    }
    if a.async_depth > 0 && a.workers == 0 {
        return Err(config_error("--workers must be at least 1"));
    }
    let cache = match a.cache_key {
        CacheKey::Sorted => CacheKeyMode::SortedFrequencies,
        CacheKey::Count => CacheKeyMode::BucketCount,
    };
    let budget = PipelineBudget {
        depth: a.async_depth,
        workers: a.workers,
        policy: match a.queue_policy {
            Policy::Block => QueuePolicy::Block,
            Policy::DropOldest => QueuePolicy::DropOldestUnwritten,
        },
    };
    let durability = if a.no_fsync { Durability::NoSync } else { Durability::Sync };

    let mut states = open_states(&a.input)?;
    let (base_step, base) = states.next().ok_or_else(|| LccError::corrupt(0, "input holds no states"))??;
    let n = base.len();
    clear_chain(&a.out)?;
    let writer = ChainWriter::create(&a.out, &base, base_step, a.every, durability)?;
    eprintln!("step {base_step}: base, {} bytes", writer.bytes_written());
    let tracker = ShadowTracker::resume(base.clone(), base_step, quantizer, cache)?;
    let mut pipeline = Pipeline::start(tracker, ChainSink::new(writer, base, a.merge_every), budget)?;
    let mut progress = Progress { raw: 0, written: 0 };
    let mut pending: VecDeque<Ticket> = VecDeque::new();
    let mut last = base_step;
    for item in states {
        let (step, state) = item?;
        if step <= last {
            return Err(LccError::Chain(format!("state steps must increase: {step} after {last}")));
        }
        last = step;
        if state.len() != n {
            return Err(lcc_core::Error::Shape { expected: n, found: state.len() }.into());
        }
        if (step - base_step) % a.every != 0 {
            debug!("skipping step {step}");
            continue;
        }
        pending.push_back(pipeline.submit(step, &state)?);
        while pending.front().is_some_and(Ticket::is_done) {
            progress.report(pending.pop_front().expect("front exists"), n)?;
        }
    }
    for t in pending {
        progress.report(t, n)?;
    }
    let report = pipeline.finish()?;
    info!(
        "{} deltas committed, {} dropped, code table cache {} hits / {} misses",
        report.committed.len(),
        report.dropped,
        report.tracker.cache().hits(),
        report.tracker.cache().misses()
    );
    Ok(())
}

fn cmd_recover(a: &RecoverArgs) -> Result<()> {
    let reader = ChainReader::open(&a.chain)?;
    let state = if a.sequential { reader.recover_sequential(a.step)? } else { reader.recover(a.step)? };
    write_states(&a.out, &[(a.step, state)])
}

fn cmd_stats(a: &StatsArgs) -> Result<()> {
    let reader = ChainReader::open(&a.chain)?;
    let rows = chain_stats(&reader)?;
    io::stdout().write_all(render_table(&rows).as_bytes())?;
    Ok(())
}

fn csv_writer(path: &Path) -> Result<csv::Writer<fs::File>> {
    let f = fs::File::create(path).map_err(|e| LccError::from(e).in_file(path))?;
    Ok(csv::Writer::from_writer(f))
}

fn csv_err(e: csv::Error) -> LccError {
    match e.into_kind() {
        csv::ErrorKind::Io(e) => LccError::Io(e),
        other => LccError::Pipeline(format!("csv: {other:?}")),
    }
}

fn rework_config(a: &ReworkArgs) -> ReworkConfig {
    let d = ReworkConfig::default();
    ReworkConfig {
        n: a.model.n.unwrap_or(d.n),
        eta: a.model.eta.unwrap_or(d.eta),
        noise: NoiseModel { family: a.model.family.into(), c: a.model.noise.unwrap_or(d.noise.c) },
        steps: a.model.steps.unwrap_or(d.steps),
        failure_fraction: a.failure,
        trials: a.trials,
        seed: a.model.seed,
        ..d
    }
}

fn cmd_rework(a: &ReworkArgs) -> Result<()> {
    if !(a.budget > 0.0 && a.budget <= 1.0) {
        return Err(config_error(format!("--budget must lie in (0, 1], got {}", a.budget)));
    }
    let cfg = rework_config(a);
    cfg.validate()?;
    let mut methods = Method::for_budget(a.budget)?.to_vec();
    if a.with_full {
        methods.push(Method::Full);
    }
    let (rows, n) = match a.task {
        TaskKind::Quadratic => (rework_experiment(&cfg, a.budget, &methods)?, cfg.n),
        TaskKind::Logreg => {
            let mut rows = Vec::new();
            let mut n = 0;
            for trial in 0..cfg.trials {
                let seed = cfg.trial_seed(trial);
                let task = LogReg::new(&LogRegConfig { seed, ..LogRegConfig::default() })?;
                n = task.dim();
                let init = task.init(seed);
                for (method, rework_iters, bytes, final_distance) in
                    run_trial(&task, &init, &methods, cfg.failure_step(), seed, cfg.rework_cap)?
                {
                    rows.push(ReworkRow { method, budget: a.budget, trial, rework_iters, bytes, final_distance });
                }
            }
            (rows, n)
        }
    };
    let mut w = csv_writer(&a.out)?;
    w.write_record(["method", "budget", "trial", "rework_iters", "bytes", "final_distance"]).map_err(csv_err)?;
    for r in &rows {
        w.write_record([
            r.method.name().to_string(),
            r.budget.to_string(),
            r.trial.to_string(),
            r.rework_iters.to_string(),
            r.bytes.to_string(),
            r.final_distance.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    for s in summarize(&rows, n) {
        eprintln!(
            "{:<5} rework {:.2} [{:.2}, {:.2}] size {:.2}%",
            s.method.name(),
            s.ci.mean,
            s.ci.lo,
            s.ci.hi,
            100.0 * s.size_ratio
        );
    }
    Ok(())
}

fn cmd_ablation(a: &AblationArgs) -> Result<()> {
    let d = ReworkConfig::default();
    let cfg = ReworkConfig {
        n: a.model.n.unwrap_or(d.n),
        eta: a.model.eta.unwrap_or(d.eta),
        noise: NoiseModel { family: a.model.family.into(), c: a.model.noise.unwrap_or(d.noise.c) },
        seed: a.model.seed,
        ..d
    };
    if a.model.steps.is_some() {
        return Err(config_error("--steps does not apply to the ablation; use --theta and --m"));
    }
    let rows = ablation_experiment(&cfg, a.theta, a.m, a.seeds)?;
    let mut w = csv_writer(&a.out)?;
    w.write_record(["seed", "m", "sign", "exponent", "count", "relative_error"]).map_err(csv_err)?;
    for r in &rows {
        let sign = match r.bucket.sign {
            Some(lcc_core::float::Sign::Positive) => "+",
            Some(lcc_core::float::Sign::Negative) => "-",
            None => "0",
        };
        w.write_record([
            r.seed.to_string(),
            r.m.to_string(),
            sign.to_string(),
            r.bucket.exponent.to_string(),
            r.bucket.count.to_string(),
            r.bucket.relative_error.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    eprintln!("spearman(exponent, mean relative error) = {:.4}", exponent_rank_correlation(&rows));
    Ok(())
}

fn cmd_convergence(a: &ConvergenceArgs) -> Result<()> {
    let d = SimConfig::default();
    let p = match a.perturbation {
        PerturbationKind::None => Perturbation::None,
        PerturbationKind::Topk => Perturbation::TopK { keep: a.keep },
        PerturbationKind::Rounding => Perturbation::RandomizedRounding { levels: a.levels },
        PerturbationKind::ZeroMean => Perturbation::ZeroMeanNoise { rho: a.rho },
        PerturbationKind::Lc => Perturbation::LcCodec { bits: a.bits },
        PerturbationKind::Rd => Perturbation::RdCodec { lambda: a.lambda, k_max: a.kmax },
    };
    let init = match a.init {
        Init::Constant => InitShape::Constant,
        Init::Gaussian => InitShape::Gaussian,
        Init::Lognormal => InitShape::LogNormal { sigma: 1.0 },
    };
    let base = SimConfig {
        n: a.model.n.unwrap_or(1),
        eta: a.model.eta.unwrap_or(d.eta),
        l: a.l,
        init,
        noise: NoiseModel { family: a.model.family.into(), c: a.model.noise.unwrap_or(d.noise.c) },
        steps: a.model.steps.unwrap_or(d.steps),
        ..d
    };
    base.validate()?;
    p.validate()?;
    let mut w = csv_writer(&a.out)?;
    w.write_record(["seed", "step", "distance", "diverged"]).map_err(csv_err)?;
    for s in 0..a.seeds {
        let cfg = SimConfig { seed: a.model.seed.wrapping_add(s), ..base.clone() };
        let tr = simulate(&cfg, &p)?;
        for (t, dist) in tr.distances.iter().enumerate() {
            w.write_record([cfg.seed.to_string(), t.to_string(), dist.to_string(), tr.diverged.to_string()])
                .map_err(csv_err)?;
        }
        eprintln!("seed {}: rate exponent {:.6}{}", cfg.seed, tr.rate_exponent(), if tr.diverged { ", diverged" } else { "" });
    }
    w.flush()?;
    Ok(())
}

fn cmd_coupling(a: &CouplingArgs) -> Result<()> {
    if a.dims.contains(&0) {
        return Err(config_error("dimensions must be positive"));
    }
    let mut w = csv_writer(&a.out)?;
    w.write_record(["scheme", "dim", "seeds", "dominance"]).map_err(csv_err)?;
    for &scheme in &a.schemes {
        let (name, scheme) = match scheme {
            Scheme::Synchronous => ("synchronous", CouplingScheme::Synchronous),
            Scheme::Reflection => ("reflection", CouplingScheme::Reflection),
        };
        let cfg = CouplingConfig { eta: a.eta, c: a.noise, steps: a.steps, scheme, seed: a.seed };
        for &d in &a.dims {
            let f = dominance_over_seeds(d, &cfg, a.seeds)?;
            w.write_record([name.to_string(), d.to_string(), a.seeds.to_string(), f.to_string()]).map_err(csv_err)?;
            eprintln!("{name} d={d}: dominance {f:.4}");
        }
    }
    w.flush()?;
    Ok(())
}

fn cmd_gen(a: &GenArgs) -> Result<()> {
    let states = match a.kind {
        Corpus::Walk => gaussian_walk(a.n, a.states, a.scale, a.seed)?,
        Corpus::Quadratic => {
            let cfg = ReworkConfig { n: a.n, seed: a.seed, ..ReworkConfig::default() };
            let (task, init) = cfg.quadratic(0)?;
            task_run(&task, &init, a.states, a.seed)?
        }
        Corpus::LeastSquares => {
            let task = LeastSquares::new(a.n, 1024, 256, a.seed)?;
            task_run(&task, &vec![0.0; task.dim()], a.states, a.seed)?
        }
    };
    let numbered: Vec<(u64, ModelState)> = states.into_iter().enumerate().map(|(i, s)| (i as u64, s)).collect();
    if a.frames {
        let mut buf = Vec::new();
        for (step, s) in &numbered {
            write_frame(&mut buf, *step, s)?;
        }
        if a.out == Path::new("-") {
            io::stdout().lock().write_all(&buf)?;
        } else {
            fs::write(&a.out, buf).map_err(|e| LccError::from(e).in_file(&a.out))?;
        }
        Ok(())
    } else if a.out == Path::new("-") {
        Err(config_error("state files need a path; use --frames for stdout"))
    } else {
        write_states(&a.out, &numbered)
    }
}

fn run(cli: &Cli) -> Result<()> {
    match &cli.command {
        Command::Encode(a) => cmd_encode(a),
        Command::Recover(a) => cmd_recover(a),
        Command::Stats(a) => cmd_stats(a),
        Command::GenStates(a) => cmd_gen(a),
        Command::Sim(s) => match &s.experiment {
            Experiment::Rework(a) => cmd_rework(a),
            Experiment::Ablation(a) => cmd_ablation(a),
            Experiment::Convergence(a) => cmd_convergence(a),
            Experiment::Coupling(a) => cmd_coupling(a),
        },
    }
}

fn fail(e: &LccError) -> ExitCode {
    eprintln!("lcc: error: {e}");
    ExitCode::from(e.exit_code() as u8)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("LCC_LOG", "warn")).init();
    let args = match merge_config(std::env::args_os().collect()) {
        Ok(a) => a,
        Err(e) => return fail(&e),
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => fail(&e),
    }
}
