//! Scenario-file front end for `reboot-core` simulations.

pub mod config;
pub mod plot;
pub mod run;
pub mod table;

pub use config::{parse_config, render_config, ConfigError};
pub use run::{run, resolve_threads, CliError, RunConfig, RunSummary, THREADS_ENV};
pub use table::{metrics_to_string, read_metrics, write_metrics};
