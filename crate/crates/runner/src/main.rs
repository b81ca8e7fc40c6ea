use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use surprise_core::bonus::BonusScheme;
use surprise_rl::compare::{compare_schemes, render_csv, render_table};
use surprise_rl::config::{parse_config, render_config, RunConfig};
use surprise_rl::plot::emit_svg;
use surprise_rl::sweep::{parse_seed_range, read_curve, run_sweep, SWEEP_FILE};
use surprise_rl::train::train;

/// Surprise-driven exploration experiments.
#[derive(Parser)]
#[command(name = "surprise-rl", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// TOML config; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Environment, overriding the config.
    #[arg(long)]
    env: Option<String>,
    /// Training iterations, overriding the config.
    #[arg(long)]
    iterations: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Train a single seed.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        seed: Option<u64>,
        /// Bonus scheme NAME[:k], overriding the config.
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, default_value = "runs/train")]
        out: PathBuf,
    },
    /// Train several seeds and aggregate quartile curves.
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Inclusive seed range A..B.
        #[arg(long, default_value = "0..9")]
        seeds: String,
        #[arg(long)]
        scheme: Option<String>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
    },
    /// Render sweep directories (or their sweep.csv files) as an SVG plot.
    Plot {
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
        #[arg(long, default_value = "plot.svg")]
        out: PathBuf,
    },
    /// Sweep several schemes and print a summary table.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "0..9")]
        seeds: String,
        /// Repeatable or comma-separated list of NAME[:k].
        #[arg(long, value_delimiter = ',', required = true)]
        scheme: Vec<String>,
        #[arg(long, default_value = "runs/compare")]
        out: PathBuf,
    },
    /// Parse a config and print the effective settings.
    ValidateConfig {
        #[arg(long)]
        config: PathBuf,
    },
}

enum Failure {
    Config(String),
    Run(String),
}

impl Failure {
    fn run(e: impl std::fmt::Display) -> Self {
        Self::Run(e.to_string())
    }
}

fn load(path: Option<&Path>) -> Result<RunConfig, Failure> {
    match path {
        None => Ok(RunConfig::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))?;
            parse_config(&text).map_err(|e| Failure::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn scheme(text: &str) -> Result<BonusScheme, Failure> {
    BonusScheme::parse(text).map_err(|e| Failure::Config(e.to_string()))
}

fn configure(common: &Common) -> Result<RunConfig, Failure> {
    let mut cfg = load(common.config.as_deref())?;
    if let Some(env) = &common.env {
        surprise_core::envs::env_spec(env).map_err(|e| Failure::Config(e.to_string()))?;
        let shift = cfg.trainer.bonus.nonnegative_shift;
        let explicit_shift = common.config.is_some() && shift != surprise_rl::config::default_shift(&cfg.trainer.env);
        cfg = cfg.with_env(env);
        if explicit_shift {
            cfg.trainer.bonus.nonnegative_shift = shift;
        }
    }
    if let Some(n) = common.iterations {
        if n == 0 {
            return Err(Failure::Config("--iterations must be at least 1".into()));
        }
        cfg.trainer.iterations = n;
    }
    Ok(cfg)
}

fn seeds(text: &str) -> Result<Vec<u64>, Failure> {
    parse_seed_range(text).map_err(Failure::Config)
}

fn write(path: &Path, text: &str) -> Result<(), Failure> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Failure::run(format!("{}: {e}", dir.display())))?;
    }
    std::fs::write(path, text).map_err(|e| Failure::run(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Train {
            common,
            seed,
            scheme: s,
            out,
        } => {
            let mut cfg = configure(&common)?;
            if let Some(seed) = seed {
                cfg.trainer.seed = seed;
            }
            if let Some(s) = s {
                cfg.trainer.bonus.scheme = scheme(&s)?;
            }
            let output = train(&cfg, &out).map_err(Failure::run)?;
            let last = output.records.last();
            println!(
                "{} iterations, final mean return {:.4}, log {}",
                output.records.len(),
                last.map_or(0.0, |r| r.ret_ext_mean),
                output.log_path().display()
            );
        }
        Command::Sweep {
            common,
            seeds: range,
            scheme: s,
            out,
        } => {
            let mut cfg = configure(&common)?;
            if let Some(s) = s {
                cfg.trainer.bonus.scheme = scheme(&s)?;
            }
            let seeds = seeds(&range)?;
            let label = cfg.trainer.bonus.scheme.label();
            let result = run_sweep(&cfg, &seeds, &out, &label).map_err(Failure::run)?;
            for r in result.runs.iter().filter_map(|r| r.error.as_ref().map(|e| (r.seed, e))) {
                eprintln!("seed {} failed: {}", r.0, r.1);
            }
            if let Some(p) = result.curve.last() {
                println!(
                    "{}: {}/{} seeds, final median {:.4} (IQR {:.4}..{:.4}), curve {}",
                    label,
                    result.completed(),
                    seeds.len(),
                    p.median,
                    p.lower,
                    p.upper,
                    out.join(SWEEP_FILE).display()
                );
            }
        }
        Command::Plot { inputs, out } => {
            let mut series = Vec::new();
            for input in inputs {
                let path = if input.is_dir() { input.join(SWEEP_FILE) } else { input };
                let file = std::fs::File::open(&path).map_err(|e| Failure::run(format!("{}: {e}", path.display())))?;
                let curve = read_curve(file).map_err(|e| Failure::run(format!("{}: {e}", path.display())))?;
                let label = curve.first().map_or_else(|| path.display().to_string(), |p| p.label.clone());
                series.push((label, curve));
            }
            write(&out, &emit_svg(&series))?;
            println!("wrote {}", out.display());
        }
        Command::Compare {
            common,
            seeds: range,
            scheme: names,
            out,
        } => {
            let cfg = configure(&common)?;
            let schemes = names.iter().map(|n| scheme(n)).collect::<Result<Vec<_>, _>>()?;
            let seeds = seeds(&range)?;
            let (rows, sweeps) = compare_schemes(&cfg, &schemes, &seeds, &out).map_err(Failure::run)?;
            let table = render_table(&rows);
            print!("{table}");
            write(&out.join("compare.md"), &table)?;
            write(&out.join("compare.csv"), &render_csv(&rows))?;
            let series: Vec<_> = sweeps.into_iter().map(|s| (s.label, s.curve)).collect();
            write(&out.join("compare.svg"), &emit_svg(&series))?;
        }
        Command::ValidateConfig { config } => {
            let cfg = load(Some(&config))?;
            print!("{}", render_config(&cfg));
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Config(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
