//! Experiment runner for `surprise-core`: TOML configs, per-run CSV logs and
//! checkpoints, seed sweeps with quartile aggregation, SVG plots and scheme
//! comparison tables.

pub mod checkpoint;
pub mod compare;
pub mod config;
pub mod csvlog;
pub mod plot;
pub mod sweep;
pub mod train;

pub use config::{parse_config, ConfigError, RunConfig};
pub use train::{train, RunError, RunOutput};
