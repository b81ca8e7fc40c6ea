//! Multi-seed sweeps and their per-iteration quartile curves.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::csvlog::{LogError, LogRow};
use crate::train::{train, RunError};

pub const THREADS_ENV: &str = "SURPRISE_RL_THREADS";
pub const SWEEP_SCHEMA: &str = "surprise-rl-sweep/1";
pub const SWEEP_FILE: &str = "sweep.csv";

/// `q`-quantile of sorted data by linear interpolation between order
/// statistics (R type 7).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "quantile of no data");
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// `(lower quartile, median, upper quartile)`.
pub fn quartiles(values: &[f64]) -> (f64, f64, f64) {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    (quantile_sorted(&v, 0.25), quantile_sorted(&v, 0.5), quantile_sorted(&v, 0.75))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuartilePoint {
    pub label: String,
    pub iteration: usize,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SeedRun {
    pub seed: u64,
    pub log_path: PathBuf,
    /// Set when the run failed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub label: String,
    pub runs: Vec<SeedRun>,
    /// Per-iteration quartiles of `ret_ext_mean` over completed seeds.
    pub curve: Vec<QuartilePoint>,
    /// Logs of the completed seeds, in seed order.
    pub logs: Vec<Vec<LogRow>>,
}

impl SweepResult {
    pub fn completed(&self) -> usize {
        self.runs.iter().filter(|r| r.error.is_none()).count()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum SweepError {
    #[error("no seeds given")]
    NoSeeds,
    #[error("only {completed} of {total} seeds completed; first failure: {first}")]
    TooFewCompleted {
        completed: usize,
        total: usize,
        first: String,
    },
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("{0}")]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Pool(#[from] rayon::ThreadPoolBuildError),
}

/// Quartile curve over equally long logs. Extra iterations in longer logs
/// are ignored.
pub fn aggregate(label: &str, logs: &[Vec<LogRow>]) -> Vec<QuartilePoint> {
    let len = logs.iter().map(Vec::len).min().unwrap_or(0);
    (0..len)
        .map(|i| {
            let values: Vec<f64> = logs.iter().map(|l| l[i].ret_ext_mean).collect();
            let (lower, median, upper) = quartiles(&values);
            QuartilePoint {
                label: label.to_string(),
                iteration: logs[0][i].iteration,
                lower,
                median,
                upper,
            }
        })
        .collect()
}

/// Worker count: `SURPRISE_RL_THREADS` if set and positive, else the
/// available parallelism.
pub fn thread_count() -> usize {
    std::env::var(THREADS_ENV)
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn seed_dir(out: &Path, seed: u64) -> PathBuf {
    out.join(format!("seed_{seed}"))
}

/// Trains every seed of `cfg` (seed field overridden) under `out/seed_N`,
/// in parallel, then aggregates. Fails only if fewer than half the seeds
/// complete.
pub fn run_sweep(cfg: &RunConfig, seeds: &[u64], out: &Path, label: &str) -> Result<SweepResult, SweepError> {
    if seeds.is_empty() {
        return Err(SweepError::NoSeeds);
    }
    std::fs::create_dir_all(out)?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(thread_count()).build()?;
    let outcomes: Vec<(u64, PathBuf, Result<Vec<LogRow>, RunError>)> = pool.install(|| {
        seeds
            .par_iter()
            .map(|&seed| {
                let mut c = cfg.clone();
                c.trainer.seed = seed;
                let dir = seed_dir(out, seed);
                let result = train(&c, &dir).map(|o| o.records.iter().map(LogRow::from).collect());
                (seed, dir, result)
            })
            .collect()
    });

    let outcomes = outcomes
        .into_iter()
        .map(|(seed, dir, r)| (seed, dir.join(crate::train::LOG_FILE), r.map_err(|e| e.to_string())))
        .collect();
    let result = assemble(label, outcomes)?;
    let file = std::fs::File::create(out.join(SWEEP_FILE))?;
    write_curve(std::io::BufWriter::new(file), &result.curve)?;
    Ok(result)
}

/// Aggregates per-seed outcomes `(seed, log path, log or error)`; fails if
/// fewer than half of them completed.
pub fn assemble(
    label: &str,
    outcomes: Vec<(u64, PathBuf, Result<Vec<LogRow>, String>)>,
) -> Result<SweepResult, SweepError> {
    let total = outcomes.len();
    if total == 0 {
        return Err(SweepError::NoSeeds);
    }
    let mut runs = Vec::new();
    let mut logs = Vec::new();
    for (seed, log_path, result) in outcomes {
        let error = match result {
            Ok(log) => {
                logs.push(log);
                None
            }
            Err(e) => {
                log::warn!("seed {seed} failed: {e}");
                Some(e)
            }
        };
        runs.push(SeedRun { seed, log_path, error });
    }
    let completed = logs.len();
    if 2 * completed < total {
        let first = runs.iter().find_map(|r| r.error.clone()).unwrap_or_default();
        return Err(SweepError::TooFewCompleted {
            completed,
            total,
            first,
        });
    }
    let curve = aggregate(label, &logs);
    Ok(SweepResult {
        label: label.to_string(),
        runs,
        curve,
        logs,
    })
}

pub fn write_curve(mut w: impl Write, curve: &[QuartilePoint]) -> Result<(), LogError> {
    writeln!(w, "#schema={SWEEP_SCHEMA}")?;
    let mut csv = csv::Writer::from_writer(w);
    if curve.is_empty() {
        csv.write_record(["label", "iteration", "lower", "median", "upper"])?;
    }
    for p in curve {
        csv.serialize(p)?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_curve(r: impl Read) -> Result<Vec<QuartilePoint>, LogError> {
    let mut r = std::io::BufReader::new(r);
    let mut first = String::new();
    std::io::BufRead::read_line(&mut r, &mut first)?;
    let found = first.trim_end().trim_start_matches("#schema=");
    if found != SWEEP_SCHEMA {
        return Err(LogError::Schema {
            expected: SWEEP_SCHEMA,
            found: found.to_string(),
        });
    }
    csv::Reader::from_reader(r)
        .deserialize()
        .map(|row| row.map_err(LogError::from))
        .collect()
}

/// Parses `A..B` (inclusive) or a single seed.
pub fn parse_seed_range(text: &str) -> Result<Vec<u64>, String> {
    let bad = || format!("seeds must look like `A..B` or `N`, got `{text}`");
    match text.split_once("..") {
        Some((a, b)) => {
            let a: u64 = a.trim().parse().map_err(|_| bad())?;
            let b: u64 = b.trim().parse().map_err(|_| bad())?;
            if a > b {
                return Err(format!("empty seed range `{text}`"));
            }
            Ok((a..=b).collect())
        }
        None => Ok(vec![text.trim().parse().map_err(|_| bad())?]),
    }
}
