//! Grid execution with an append-only results file.
//!
//! Every (setting, seed) pair is one job. Jobs run on a scoped worker pool;
//! finished results go through a channel to the calling thread, which is the
//! only writer and appends them in grid order, so the file layout does not
//! depend on scheduling. On restart, pairs already present in the results
//! file are skipped.

use log::{info, warn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use std::collections::{BTreeMap, HashSet};
use std::fs::{File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;
use std::time::{Duration, Instant};

use super::config::{ExperimentConfig, Reseed};
use crate::error::{Error, Result};
use crate::problems::{AnyProblem, Budget, Inventory, Portfolio, ProblemKind, SplitDataset};
use crate::train::{evaluate, train_method, Method};

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
/// Subdirectory of the output directory holding one trained predictor per run.
pub const CHECKPOINT_DIR: &str = "checkpoints";
pub const RESULTS_HEADER: [&str; 10] = [
    "config_hash",
    "problem",
    "method",
    "samples",
    "fakes",
    "seed",
    "status",
    "normalized_regret",
    "raw_regret",
    "prediction_loss",
];
const TIMINGS_HEADER: [&str; 6] = ["config_hash", "seed", "wall_s", "sample_s", "fit_s", "train_s"];

/// One cell of the grid before it is run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunSpec {
    pub config_hash: String,
    pub problem: ProblemKind,
    pub method: Method,
    /// Samples per instance; 0 for methods that do not sample.
    pub samples: usize,
    pub fakes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub normalized_regret: f64,
    /// Mean test regret.
    pub raw_regret: f64,
    pub prediction_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RunTimings {
    pub wall: Duration,
    pub sample: Duration,
    pub fit: Duration,
    pub train: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub spec: RunSpec,
    /// Metrics, or the error message of a failed run.
    pub outcome: std::result::Result<Metrics, String>,
    /// Absent for results read back from a results file.
    pub timings: Option<RunTimings>,
}

impl RunResult {
    pub fn is_ok(&self) -> bool {
        self.outcome.is_ok()
    }
}

/// Expands the grid in a fixed order: fakes, method, samples, seed.
/// Non-sampling methods get a single cell with `samples = 0`.
pub fn grid(config: &ExperimentConfig) -> Result<Vec<RunSpec>> {
    config.validate()?;
    let problem = config.problem_kind()?;
    let mut specs = Vec::new();
    for &fakes in &config.fakes {
        for method in config.method_tags()? {
            let sample_counts = if method.uses_samples() {
                config.samples.clone()
            } else {
                vec![0]
            };
            for samples in sample_counts {
                let config_hash = config.setting_hash(method, samples, fakes)?;
                for i in 0..config.seeds as u64 {
                    specs.push(RunSpec {
                        config_hash: config_hash.clone(),
                        problem,
                        method,
                        samples,
                        fakes,
                        seed: config.base_seed + i,
                    });
                }
            }
        }
    }
    Ok(specs)
}

/// Builds the problem instance and its splits from `rng`.
pub fn build_problem(config: &ExperimentConfig, fakes: usize, rng: &mut ChaCha8Rng) -> Result<(AnyProblem, SplitDataset)> {
    Ok(match config.problem_kind()? {
        ProblemKind::Inventory => {
            let (p, d) = Inventory::generate(&config.inventory_config()?, rng)?;
            (AnyProblem::Inventory(p), d)
        }
        ProblemKind::Budget => {
            let (p, d) = Budget::generate(&config.budget_config(fakes), rng)?;
            (AnyProblem::Budget(p), d)
        }
        ProblemKind::Portfolio => {
            let (p, d) = Portfolio::generate(&config.portfolio_config(), rng)?;
            (AnyProblem::Portfolio(p), d)
        }
    })
}

/// Runs one grid cell. With `data+model` reseeding a single stream seeded by
/// the run seed drives data generation, then initialization and training;
/// with `model-only` the data come from `base_seed` instead.
pub fn execute(config: &ExperimentConfig, spec: &RunSpec) -> RunResult {
    let started = Instant::now();
    let mut timings = RunTimings::default();
    let outcome = (|| -> Result<Metrics> {
        let resolved = config.resolved()?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let (problem, data) = match resolved.reseed {
            Reseed::DataAndModel => build_problem(&resolved, spec.fakes, &mut rng)?,
            Reseed::ModelOnly => {
                build_problem(&resolved, spec.fakes, &mut ChaCha8Rng::seed_from_u64(resolved.base_seed))?
            }
        };
        let (outcome, stages) = train_method(
            spec.method,
            &problem,
            &data,
            spec.samples,
            &resolved.lcgln_config()?,
            resolved.gaussian_sigma,
            &mut rng,
        )?;
        timings.sample = stages.sample;
        timings.fit = stages.fit;
        timings.train = stages.train;
        let checkpoints = resolved.output_dir().join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&checkpoints)?;
        outcome.model.save(&checkpoint_path(&checkpoints, spec))?;
        let eval = evaluate(&outcome.model, problem.as_dyn(), &data.test)?;
        if !eval.normalized_regret.is_finite() {
            return Err(Error::NonFinite(format!("normalized regret {}", eval.normalized_regret)));
        }
        Ok(Metrics {
            normalized_regret: eval.normalized_regret,
            raw_regret: eval.mean_regret,
            prediction_loss: eval.prediction_loss,
        })
    })()
    .map_err(|e| e.to_string());
    timings.wall = started.elapsed();
    RunResult {
        spec: spec.clone(),
        outcome,
        timings: Some(timings),
    }
}

/// `<hash>-<seed>.txt` inside `dir`.
pub fn checkpoint_path(dir: &Path, spec: &RunSpec) -> PathBuf {
    dir.join(format!("{}-{}.txt", spec.config_hash, spec.seed))
}

fn result_row(r: &RunResult) -> Vec<String> {
    let s = &r.spec;
    let mut row = vec![
        s.config_hash.clone(),
        s.problem.as_str().into(),
        s.method.as_str().into(),
        s.samples.to_string(),
        s.fakes.to_string(),
        s.seed.to_string(),
    ];
    match &r.outcome {
        Ok(m) => {
            row.push("ok".into());
            row.extend([m.normalized_regret, m.raw_regret, m.prediction_loss].map(|v| v.to_string()));
        }
        Err(msg) => {
            row.push(format!("error: {}", msg.replace(['\n', '\r'], " ")));
            row.extend(std::iter::repeat(String::new()).take(3));
        }
    }
    row
}

/// Reads a results file back. Rows are returned in file order.
pub fn read_results(path: &Path) -> Result<Vec<RunResult>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(String::from).collect();
    if header != RESULTS_HEADER {
        return Err(Error::Format(format!(
            "{}: unexpected header {header:?}",
            path.display()
        )));
    }
    reader
        .records()
        .enumerate()
        .map(|(i, rec)| {
            let rec = rec?;
            let row = i + 2;
            let field = |col: usize| rec.get(col).unwrap_or_default();
            let ingest = |col: usize, msg: String| Error::Ingest { row, col: col + 1, msg };
            let parse_usize = |col: usize| field(col).parse::<usize>().map_err(|e| ingest(col, e.to_string()));
            let parse_f64 = |col: usize| field(col).parse::<f64>().map_err(|e| ingest(col, e.to_string()));
            let spec = RunSpec {
                config_hash: field(0).to_string(),
                problem: field(1).parse().map_err(|e: Error| ingest(1, e.to_string()))?,
                method: field(2).parse().map_err(|e: Error| ingest(2, e.to_string()))?,
                samples: parse_usize(3)?,
                fakes: parse_usize(4)?,
                seed: field(5).parse().map_err(|e: std::num::ParseIntError| ingest(5, e.to_string()))?,
            };
            let status = field(6);
            let outcome = if status == "ok" {
                Ok(Metrics {
                    normalized_regret: parse_f64(7)?,
                    raw_regret: parse_f64(8)?,
                    prediction_loss: parse_f64(9)?,
                })
            } else if let Some(msg) = status.strip_prefix("error: ") {
                Err(msg.to_string())
            } else {
                return Err(ingest(6, format!("unknown status `{status}`")));
            };
            Ok(RunResult {
                spec,
                outcome,
                timings: None,
            })
        })
        .collect()
}

/// Opens `path` for appending, writing `header` first when the file is new
/// or empty.
/// Cuts a partially written last line, left behind when a writer died
/// mid-record, so the file ends on a complete row again.
fn drop_torn_tail(path: &Path) -> Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    warn!("{}: dropping an incomplete last row", path.display());
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
    Ok(())
}

fn open_append(path: &Path, header: &[&str]) -> Result<csv::Writer<File>> {
    if path.exists() {
        drop_torn_tail(path)?;
    }
    let fresh = std::fs::metadata(path).map(|m| m.len() == 0).unwrap_or(true);
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(file);
    if fresh {
        w.write_record(header)?;
        w.flush()?;
    }
    Ok(w)
}

fn worker_count(config: &ExperimentConfig) -> usize {
    if config.workers > 0 {
        config.workers
    } else {
        std::thread::available_parallelism().map_or(1, |n| n.get())
    }
}

/// Where a grid writes its files.
pub fn results_path(config: &ExperimentConfig) -> PathBuf {
    config.output_dir().join(RESULTS_FILE)
}

/// Runs every grid cell not yet recorded in the output directory and
/// returns the results of the whole grid, recorded ones included.
pub fn run_experiment(config: &ExperimentConfig) -> Result<Vec<RunResult>> {
    let specs = grid(config)?;
    let dir = config.output_dir();
    std::fs::create_dir_all(&dir)?;
    let results_file = dir.join(RESULTS_FILE);

    let mut done: BTreeMap<(String, u64), RunResult> = BTreeMap::new();
    if results_file.exists() {
        drop_torn_tail(&results_file)?;
    }
    if results_file.exists() && std::fs::metadata(&results_file)?.len() > 0 {
        for r in read_results(&results_file)? {
            done.insert((r.spec.config_hash.clone(), r.spec.seed), r);
        }
    }
    let wanted: HashSet<(String, u64)> = specs.iter().map(|s| (s.config_hash.clone(), s.seed)).collect();
    let pending: Vec<RunSpec> = specs
        .iter()
        .filter(|s| !done.contains_key(&(s.config_hash.clone(), s.seed)))
        .cloned()
        .collect();
    info!(
        "{} runs in grid, {} already recorded, {} to run",
        specs.len(),
        specs.len() - pending.len(),
        pending.len()
    );

    let mut results_w = open_append(&results_file, &RESULTS_HEADER)?;
    let mut timings_w = open_append(&dir.join(TIMINGS_FILE), &TIMINGS_HEADER)?;
    let workers = worker_count(config).min(pending.len()).max(1);
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<(usize, RunResult)>();

    let mut fresh = Vec::with_capacity(pending.len());
    let write_result = std::thread::scope(|scope| -> Result<()> {
        for _ in 0..workers {
            let tx = tx.clone();
            let (next, pending) = (&next, &pending);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some(spec) = pending.get(i) else { break };
                if tx.send((i, execute(config, spec))).is_err() {
                    break;
                }
            });
        }
        drop(tx);

        // Results arrive in completion order; hold them until every earlier
        // job has been written.
        let mut waiting = BTreeMap::new();
        let mut cursor = 0;
        for (i, result) in rx {
            waiting.insert(i, result);
            while let Some(r) = waiting.remove(&cursor) {
                let tag = format!("{} {} K={} F={} seed={}", r.spec.problem.as_str(), r.spec.method, r.spec.samples, r.spec.fakes, r.spec.seed);
                match &r.outcome {
                    Ok(m) => info!("{tag}: normalized regret {:.4}", m.normalized_regret),
                    Err(e) => warn!("{tag}: failed: {e}"),
                }
                results_w.write_record(result_row(&r))?;
                results_w.flush()?;
                if let Some(t) = &r.timings {
                    timings_w.write_record([
                        r.spec.config_hash.clone(),
                        r.spec.seed.to_string(),
                        format!("{:.3}", t.wall.as_secs_f64()),
                        format!("{:.3}", t.sample.as_secs_f64()),
                        format!("{:.3}", t.fit.as_secs_f64()),
                        format!("{:.3}", t.train.as_secs_f64()),
                    ])?;
                    timings_w.flush()?;
                }
                fresh.push(r);
                cursor += 1;
            }
        }
        Ok(())
    });
    write_result?;

    for r in fresh {
        done.insert((r.spec.config_hash.clone(), r.spec.seed), r);
    }
    Ok(specs
        .iter()
        .filter_map(|s| {
            let key = (s.config_hash.clone(), s.seed);
            if wanted.contains(&key) {
                done.get(&key).cloned()
            } else {
                None
            }
        })
        .collect())
}

/// Writes result rows to a fresh file, for tests and report tooling.
pub fn write_results(path: &Path, results: &[RunResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(RESULTS_HEADER)?;
    for r in results {
        w.write_record(result_row(r))?;
    }
    w.flush()?;
    Ok(())
}

/// True when any result in the slice failed.
pub fn any_failed(results: &[RunResult]) -> bool {
    results.iter().any(|r| !r.is_ok())
}
