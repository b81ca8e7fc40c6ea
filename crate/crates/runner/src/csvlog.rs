//! Per-run CSV logs.
//!
//! `log.csv` holds one row per iteration of deterministic quantities, so two
//! runs with the same config and seed write identical bytes. Wall-clock
//! phase times go to `timing.csv`. Both files start with a schema line
//! `#schema=<name>/<version>` followed by a CSV header.

use std::io::{self, BufRead, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use surprise_core::rl::IterationRecord;

pub const LOG_SCHEMA: &str = "surprise-rl-log/1";
pub const TIMING_SCHEMA: &str = "surprise-rl-timing/1";

pub const LOG_COLUMNS: &[&str] = &[
    "iteration",
    "steps_total",
    "episodes",
    "ret_ext_mean",
    "ret_ext_median_episode",
    "ret_ext_max",
    "bonus_mean_raw",
    "bonus_std_raw",
    "bonus_min_raw",
    "bonus_max_raw",
    "eta",
    "bonus_shift",
    "bonus_mean_applied",
    "policy_kl",
    "policy_accepted",
    "dynamics_nll",
    "dynamics_kl_step",
];

pub const TIMING_COLUMNS: &[&str] = &[
    "iteration",
    "wall_ms",
    "rollout_ms",
    "bonus_ms",
    "policy_ms",
    "value_ms",
    "dynamics_ms",
];

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("expected schema `{expected}`, found `{found}`")]
    Schema { expected: &'static str, found: String },
    #[error("header does not match schema {0}")]
    Header(&'static str),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub iteration: usize,
    pub steps_total: u64,
    pub episodes: usize,
    pub ret_ext_mean: f64,
    pub ret_ext_median_episode: f64,
    pub ret_ext_max: f64,
    pub bonus_mean_raw: f64,
    pub bonus_std_raw: f64,
    pub bonus_min_raw: f64,
    pub bonus_max_raw: f64,
    pub eta: f64,
    pub bonus_shift: f64,
    pub bonus_mean_applied: f64,
    pub policy_kl: f64,
    pub policy_accepted: bool,
    pub dynamics_nll: f64,
    pub dynamics_kl_step: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub iteration: usize,
    pub wall_ms: f64,
    pub rollout_ms: f64,
    pub bonus_ms: f64,
    pub policy_ms: f64,
    pub value_ms: f64,
    pub dynamics_ms: f64,
}

impl From<&IterationRecord> for LogRow {
    fn from(r: &IterationRecord) -> Self {
        Self {
            iteration: r.iteration,
            steps_total: r.steps_total,
            episodes: r.episodes,
            ret_ext_mean: r.ret_ext_mean,
            ret_ext_median_episode: r.ret_ext_median_episode,
            ret_ext_max: r.ret_ext_max,
            bonus_mean_raw: r.bonus.mean_raw,
            bonus_std_raw: r.bonus.std_raw,
            bonus_min_raw: r.bonus.min_raw,
            bonus_max_raw: r.bonus.max_raw,
            eta: r.bonus.eta,
            bonus_shift: r.bonus.shift,
            bonus_mean_applied: r.bonus.mean_applied,
            policy_kl: r.policy_kl,
            policy_accepted: r.policy_accepted,
            dynamics_nll: r.dynamics_nll,
            dynamics_kl_step: r.dynamics_kl_step,
        }
    }
}

impl From<&IterationRecord> for TimingRow {
    fn from(r: &IterationRecord) -> Self {
        let t = r.timings;
        Self {
            iteration: r.iteration,
            wall_ms: t.total_ms,
            rollout_ms: t.rollout_ms,
            bonus_ms: t.bonus_ms,
            policy_ms: t.policy_ms,
            value_ms: t.value_ms,
            dynamics_ms: t.dynamics_ms,
        }
    }
}

/// Streams rows of one schema to a writer, schema line and header first.
pub struct CsvSink<W: Write, T> {
    inner: csv::Writer<W>,
    _row: std::marker::PhantomData<T>,
}

impl<W: Write, T: Serialize> CsvSink<W, T> {
    fn new(mut w: W, schema: &str, columns: &[&str]) -> Result<Self, LogError> {
        writeln!(w, "#schema={schema}")?;
        let mut inner = csv::WriterBuilder::new().has_headers(false).from_writer(w);
        inner.write_record(columns)?;
        Ok(Self {
            inner,
            _row: std::marker::PhantomData,
        })
    }

    pub fn push(&mut self, row: &T) -> Result<(), LogError> {
        self.inner.serialize(row)?;
        self.inner.flush()?;
        Ok(())
    }
}

pub fn log_writer<W: Write>(w: W) -> Result<CsvSink<W, LogRow>, LogError> {
    CsvSink::new(w, LOG_SCHEMA, LOG_COLUMNS)
}

pub fn timing_writer<W: Write>(w: W) -> Result<CsvSink<W, TimingRow>, LogError> {
    CsvSink::new(w, TIMING_SCHEMA, TIMING_COLUMNS)
}

fn read_rows<T: for<'de> Deserialize<'de>>(
    r: impl Read,
    schema: &'static str,
    columns: &[&str],
) -> Result<Vec<T>, LogError> {
    let mut r = io::BufReader::new(r);
    let mut first = String::new();
    r.read_line(&mut first)?;
    let found = first.trim_end().strip_prefix("#schema=").unwrap_or(first.trim_end());
    if found != schema {
        return Err(LogError::Schema {
            expected: schema,
            found: found.to_string(),
        });
    }
    let mut csv = csv::Reader::from_reader(r);
    if csv.headers()?.iter().ne(columns.iter().copied()) {
        return Err(LogError::Header(schema));
    }
    csv.deserialize().map(|row| row.map_err(LogError::from)).collect()
}

pub fn read_log(r: impl Read) -> Result<Vec<LogRow>, LogError> {
    read_rows(r, LOG_SCHEMA, LOG_COLUMNS)
}

pub fn read_timing(r: impl Read) -> Result<Vec<TimingRow>, LogError> {
    read_rows(r, TIMING_SCHEMA, TIMING_COLUMNS)
}

pub fn read_log_file(path: &Path) -> Result<Vec<LogRow>, LogError> {
    read_log(std::fs::File::open(path)?)
}

pub fn read_timing_file(path: &Path) -> Result<Vec<TimingRow>, LogError> {
    read_timing(std::fs::File::open(path)?)
}
