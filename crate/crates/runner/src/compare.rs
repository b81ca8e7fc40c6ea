//! Scheme-by-seed matrices summarized as one table row per scheme.

use std::fmt::Write as _;
use std::path::Path;

use surprise_core::bonus::BonusScheme;

use crate::config::RunConfig;
use crate::csvlog::{read_timing_file, LogRow};
use crate::sweep::{quantile_sorted, quartiles, run_sweep, seed_dir, SweepError, SweepResult};
use crate::train::TIMING_FILE;

#[derive(Debug, Clone, PartialEq)]
pub struct CompareRow {
    pub scheme: String,
    pub completed: usize,
    /// Median over seeds of the last iteration's mean extrinsic return.
    pub final_median: f64,
    /// Median over seeds of the first iteration with a rewarded episode;
    /// `None` when that median falls on seeds that never saw reward.
    pub first_reward_median: Option<f64>,
    /// Median over seeds of the mean per-iteration wall time.
    pub wall_ms: f64,
    pub bonus_ms: f64,
    pub dynamics_ms: f64,
}

/// First iteration with any rewarded episode.
pub fn first_reward(log: &[LogRow]) -> Option<usize> {
    log.iter().find(|r| r.ret_ext_max > 0.0).map(|r| r.iteration)
}

/// Median where `None` ranks above every number.
pub fn median_with_never(values: &[Option<usize>]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().map(|x| x.map_or(f64::INFINITY, |i| i as f64)).collect();
    v.sort_by(f64::total_cmp);
    let h = (v.len() - 1) as f64 * 0.5;
    let (lo, hi) = (h.floor() as usize, h.ceil() as usize);
    if v[hi].is_infinite() && (hi != lo || v[lo].is_infinite()) {
        return None;
    }
    if lo == hi {
        return Some(v[lo]);
    }
    Some(quantile_sorted(&v, 0.5))
}

fn dir_name(index: usize, scheme: &BonusScheme) -> String {
    format!("{index}_{}", scheme.label().replace(':', "-"))
}

/// Summarizes a finished sweep; phase times are read back from the seeds'
/// `timing.csv` files under `out`.
pub fn summarize(result: &SweepResult, out: &Path) -> CompareRow {
    let finals: Vec<f64> = result.logs.iter().filter_map(|l| l.last()).map(|r| r.ret_ext_mean).collect();
    let firsts: Vec<Option<usize>> = result.logs.iter().map(|l| first_reward(l)).collect();
    let mut wall = Vec::new();
    let mut bonus = Vec::new();
    let mut dynamics = Vec::new();
    for run in result.runs.iter().filter(|r| r.error.is_none()) {
        let Ok(rows) = read_timing_file(&seed_dir(out, run.seed).join(TIMING_FILE)) else {
            continue;
        };
        if rows.is_empty() {
            continue;
        }
        let n = rows.len() as f64;
        wall.push(rows.iter().map(|r| r.wall_ms).sum::<f64>() / n);
        bonus.push(rows.iter().map(|r| r.bonus_ms).sum::<f64>() / n);
        dynamics.push(rows.iter().map(|r| r.dynamics_ms).sum::<f64>() / n);
    }
    let med = |v: &[f64]| if v.is_empty() { f64::NAN } else { quartiles(v).1 };
    CompareRow {
        scheme: result.label.clone(),
        completed: result.completed(),
        final_median: med(&finals),
        first_reward_median: median_with_never(&firsts),
        wall_ms: med(&wall),
        bonus_ms: med(&bonus),
        dynamics_ms: med(&dynamics),
    }
}

/// Runs every scheme over every seed under `out/<index>_<scheme>/`.
pub fn compare_schemes(
    cfg: &RunConfig,
    schemes: &[BonusScheme],
    seeds: &[u64],
    out: &Path,
) -> Result<(Vec<CompareRow>, Vec<SweepResult>), SweepError> {
    let mut rows = Vec::with_capacity(schemes.len());
    let mut sweeps = Vec::with_capacity(schemes.len());
    for (i, scheme) in schemes.iter().enumerate() {
        let mut c = cfg.clone();
        c.trainer.bonus.scheme = *scheme;
        let dir = out.join(dir_name(i, scheme));
        let result = run_sweep(&c, seeds, &dir, &scheme.label())?;
        rows.push(summarize(&result, &dir));
        sweeps.push(result);
    }
    Ok((rows, sweeps))
}

pub fn render_table(rows: &[CompareRow]) -> String {
    let mut s = String::from(
        "| scheme | seeds | final median return | median first-reward iteration | wall ms/iter | bonus ms/iter | dynamics ms/iter |\n|---|---|---|---|---|---|---|\n",
    );
    for r in rows {
        let first = r.first_reward_median.map_or("never".to_string(), |v| format!("{v}"));
        let _ = writeln!(
            s,
            "| {} | {} | {:.4} | {} | {:.1} | {:.2} | {:.1} |",
            r.scheme, r.completed, r.final_median, first, r.wall_ms, r.bonus_ms, r.dynamics_ms
        );
    }
    s
}

pub fn render_csv(rows: &[CompareRow]) -> String {
    let mut s = String::from(
        "#schema=surprise-rl-compare/1\nscheme,seeds,final_median,first_reward_median,wall_ms,bonus_ms,dynamics_ms\n",
    );
    for r in rows {
        let first = r.first_reward_median.map_or(String::new(), |v| v.to_string());
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{}",
            r.scheme, r.completed, r.final_median, first, r.wall_ms, r.bonus_ms, r.dynamics_ms
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn never_ranks_last() {
        assert_eq!(median_with_never(&[Some(3), None, Some(5)]), Some(5.0));
        assert_eq!(median_with_never(&[Some(3), None]), None);
        assert_eq!(median_with_never(&[Some(3), Some(4), None]), Some(4.0));
        assert_eq!(median_with_never(&[None]), None);
    }
}
