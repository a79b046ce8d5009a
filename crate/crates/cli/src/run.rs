use crate::config::{parse_config, parse_methods, ConfigError};
use crate::plot::figure_script;
use crate::table::{write_metrics, TableError};
use reboot_core::sim::{monte_carlo_with, MetricsRow, RunOptions, Scenario, SimError};
use std::fs;
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use thiserror::Error;

pub const THREADS_ENV: &str = "REBOOT_KIT_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Config {
        path: PathBuf,
        #[source]
        source: ConfigError,
    },
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Table(#[from] TableError),
    #[error("{THREADS_ENV}=`{0}` is not a nonnegative integer")]
    BadThreadsEnv(String),
}

impl CliError {
    /// 2 for problems with the inputs, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config { .. } | Self::BadThreadsEnv(_) => 2,
            Self::Sim(SimError::InvalidScenario(_) | SimError::IndivisibleSplit { .. }) => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunConfig {
    pub scenario_path: PathBuf,
    pub out_dir: PathBuf,
    /// Comma-separated method names; `full` is always kept.
    pub methods: Option<String>,
    /// `None` falls back to [`THREADS_ENV`], then to 0 (all CPUs).
    pub threads: Option<usize>,
    pub replications: Option<usize>,
    pub seed: Option<u64>,
}

impl RunConfig {
    pub fn new(scenario_path: impl Into<PathBuf>) -> Self {
        Self {
            scenario_path: scenario_path.into(),
            out_dir: PathBuf::from("."),
            methods: None,
            threads: None,
            replications: None,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub scenario: Scenario,
    pub rows: Vec<MetricsRow>,
    pub metrics_path: PathBuf,
    pub plot_path: PathBuf,
}

pub fn resolve_threads(flag: Option<usize>, env: Option<&str>) -> Result<usize, CliError> {
    match (flag, env) {
        (Some(k), _) => Ok(k),
        (None, Some(v)) => v.trim().parse().map_err(|_| CliError::BadThreadsEnv(v.to_string())),
        (None, None) => Ok(0),
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|source| CliError::Config {
        path: path.to_path_buf(),
        source,
    })
}

/// Applies command-line overrides to a parsed scenario.
pub fn apply_overrides(mut scenario: Scenario, config: &RunConfig) -> Result<Scenario, CliError> {
    if let Some(r) = config.replications {
        scenario.replications = r;
    }
    if let Some(s) = config.seed {
        scenario.master_seed = s;
    }
    if let Some(list) = &config.methods {
        let keep = parse_methods(list)?;
        scenario.restrict_methods(&keep);
    }
    scenario.validate()?;
    Ok(scenario)
}

fn write_file(path: &Path, write: impl FnOnce(&mut BufWriter<fs::File>) -> Result<(), CliError>) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let file = fs::File::create(path).map_err(io_err)?;
    let mut buf = BufWriter::new(file);
    write(&mut buf)?;
    buf.into_inner()
        .map_err(|e| io_err(e.into_error()))?
        .sync_all()
        .map_err(io_err)
}

/// Runs the scenario and writes `metrics.csv` and `figure.plot` into the
/// output directory once every replication has finished.
pub fn run(config: &RunConfig, threads_env: Option<&str>) -> Result<RunSummary, CliError> {
    let threads = resolve_threads(config.threads, threads_env)?;
    let scenario = apply_overrides(load_scenario(&config.scenario_path)?, config)?;
    let result = monte_carlo_with(&scenario, &RunOptions { threads })?;

    fs::create_dir_all(&config.out_dir).map_err(|source| CliError::Io {
        path: config.out_dir.clone(),
        source,
    })?;
    let metrics_path = config.out_dir.join("metrics.csv");
    let plot_path = config.out_dir.join("figure.plot");
    write_file(&metrics_path, |w| Ok(write_metrics(&result.rows, w)?))?;
    let script = figure_script(&result.rows, "metrics.csv", scenario.kind.is_sign_invariant());
    write_file(&plot_path, |w| {
        use std::io::Write;
        w.write_all(script.as_bytes()).map_err(|source| CliError::Io {
            path: plot_path.clone(),
            source,
        })
    })?;
    Ok(RunSummary {
        scenario,
        rows: result.rows,
        metrics_path,
        plot_path,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn thread_resolution_order() {
        assert_eq!(resolve_threads(Some(3), Some("8")).unwrap(), 3);
        assert_eq!(resolve_threads(None, Some("8")).unwrap(), 8);
        assert_eq!(resolve_threads(None, None).unwrap(), 0);
        assert!(matches!(resolve_threads(None, Some("many")), Err(CliError::BadThreadsEnv(_))));
    }
}
