//! Single-seed training runs with on-disk logs and checkpoints.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use surprise_core::rl::{Clock, IterationRecord, Trainer};

use crate::checkpoint::write_model;
use crate::config::{render_config, RunConfig};
use crate::csvlog::{log_writer, timing_writer, LogError, LogRow, TimingRow};

pub const LOG_FILE: &str = "log.csv";
pub const TIMING_FILE: &str = "timing.csv";
pub const CONFIG_FILE: &str = "config.toml";
pub const CHECKPOINT_DIR: &str = "checkpoints";

/// Wall clock measured from construction.
pub struct WallClock(Instant);

impl WallClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for WallClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for WallClock {
    fn now_ms(&self) -> f64 {
        self.0.elapsed().as_secs_f64() * 1e3
    }
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("setup failed: {0}")]
    Setup(surprise_core::Error),
    #[error("iteration {iteration} failed: {source}")]
    Iteration {
        iteration: usize,
        source: surprise_core::Error,
    },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error(transparent)]
    Log(#[from] LogError),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub records: Vec<IterationRecord>,
}

impl RunOutput {
    pub fn log_path(&self) -> PathBuf {
        self.dir.join(LOG_FILE)
    }
}

fn checkpoint(dir: &Path, name: &str, trainer: &Trainer) -> Result<(), RunError> {
    let path = dir.join(name);
    let mut w = BufWriter::new(File::create(&path).map_err(io_err(&path))?);
    write_model(&mut w, trainer.model()).and_then(|_| w.flush()).map_err(io_err(&path))
}

/// Trains one seed, writing the effective config, `log.csv`, `timing.csv`
/// and model checkpoints under `dir`.
pub fn train(cfg: &RunConfig, dir: &Path) -> Result<RunOutput, RunError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let cfg_path = dir.join(CONFIG_FILE);
    fs::write(&cfg_path, render_config(cfg)).map_err(io_err(&cfg_path))?;
    let ckpt_dir = dir.join(CHECKPOINT_DIR);
    if cfg.checkpoint_every > 0 {
        fs::create_dir_all(&ckpt_dir).map_err(io_err(&ckpt_dir))?;
    }

    let log_path = dir.join(LOG_FILE);
    let timing_path = dir.join(TIMING_FILE);
    let mut log = log_writer(BufWriter::new(File::create(&log_path).map_err(io_err(&log_path))?))?;
    let mut timing = timing_writer(BufWriter::new(File::create(&timing_path).map_err(io_err(&timing_path))?))?;

    let mut trainer =
        Trainer::with_clock(cfg.trainer.clone(), Box::new(WallClock::new())).map_err(RunError::Setup)?;
    let mut records = Vec::with_capacity(cfg.trainer.iterations);
    while !trainer.is_done() {
        let iteration = trainer.iteration();
        let record = trainer
            .step()
            .map_err(|source| RunError::Iteration { iteration, source })?;
        log.push(&LogRow::from(&record))?;
        timing.push(&TimingRow::from(&record))?;
        log::debug!(
            "{} seed {} it {}: return {:.3}, bonus {:.4}",
            cfg.trainer.env,
            cfg.trainer.seed,
            iteration,
            record.ret_ext_mean,
            record.bonus.mean_raw
        );
        let done = trainer.is_done();
        if cfg.checkpoint_every > 0 && ((iteration + 1) % cfg.checkpoint_every == 0 || done) {
            checkpoint(&ckpt_dir, &format!("model_{:05}.ckpt", iteration + 1), &trainer)?;
        }
        records.push(record);
    }
    Ok(RunOutput {
        dir: dir.to_path_buf(),
        records,
    })
}
