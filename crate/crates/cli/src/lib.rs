//! Declarative runner for the `fkloop` toolkit.
//!
//! A run is described by a TOML spec file (see `docs/spec-file.md`). The
//! dispatcher computes everything inside a rayon pool of `workers` threads
//! and writes the artifact only after all replicas have been merged.
//!
//! Exit codes: 0 success, 1 a check failed, 2 usage or configuration error.

use std::path::{Path, PathBuf};

pub mod commands;
pub mod spec;

pub use spec::{Command, RunSpec};

/// Overrides the worker count.
pub const ENV_WORKERS: &str = "FKLOOP_WORKERS";
/// Base directory for relative output paths.
pub const ENV_OUTPUT_DIR: &str = "FKLOOP_OUTPUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] fkloop::Error),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("csv: {0}")]
    Csv(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        2
    }
}

/// What a successful run produced.
#[derive(Debug, Clone)]
pub struct Outcome {
    /// False when an `oracle-check` found a failing identity.
    pub passed: bool,
    /// The artifact text (also written to `path` when set).
    pub text: String,
    pub path: Option<PathBuf>,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.passed {
            0
        } else {
            1
        }
    }
}

/// Environment overrides, read once.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub workers: Option<usize>,
    pub output_dir: Option<PathBuf>,
}

impl Overrides {
    pub fn from_env() -> Result<Self, CliError> {
        let workers = match std::env::var(ENV_WORKERS) {
            Ok(v) => Some(
                v.parse::<usize>()
                    .ok()
                    .filter(|&w| w > 0)
                    .ok_or_else(|| CliError::Config(format!("{ENV_WORKERS}: expected a positive integer, got `{v}`")))?,
            ),
            Err(_) => None,
        };
        Ok(Overrides {
            workers,
            output_dir: std::env::var_os(ENV_OUTPUT_DIR).map(PathBuf::from),
        })
    }
}

fn resolve(path: &Path, overrides: &Overrides) -> PathBuf {
    match &overrides.output_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    }
}

fn missing(section: &str) -> CliError {
    CliError::Config(format!("missing section `[{section}]`"))
}

/// Executes `spec`. Relative report inputs are resolved against `base`.
pub fn run_spec(spec: &RunSpec, base: &Path, overrides: &Overrides) -> Result<Outcome, CliError> {
    let workers = overrides.workers.unwrap_or(spec.workers);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("field `workers`: {e}")))?;
    let (text, passed) = pool.install(|| -> Result<(String, bool), CliError> {
        match spec.command {
            Command::Sample => Ok((commands::sample(spec.sample.as_ref().ok_or_else(|| missing("sample"))?, spec.seed)?, true)),
            Command::OracleCheck => commands::oracle_check(&spec.oracle_check.clone().unwrap_or_default()),
            Command::Experiment => {
                let sec = spec.experiment.as_ref().ok_or_else(|| missing("experiment"))?;
                Ok((commands::results_csv(&commands::experiment(sec, spec.seed)?)?, true))
            }
            Command::Report => Ok((commands::report(spec.report.as_ref().ok_or_else(|| missing("report"))?, base)?, true)),
        }
    })?;
    let path = spec.output.as_ref().map(|p| resolve(p, overrides));
    if let Some(p) = &path {
        if let Some(parent) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|source| CliError::Io {
                path: parent.to_path_buf(),
                source,
            })?;
        }
        std::fs::write(p, &text).map_err(|source| CliError::Io { path: p.clone(), source })?;
    }
    Ok(Outcome { passed, text, path })
}

/// Parses and executes a spec file with environment overrides applied.
pub fn run_file(path: &Path) -> Result<Outcome, CliError> {
    let text = std::fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let spec = RunSpec::parse(&text)?;
    let base = path.parent().unwrap_or(Path::new("."));
    run_spec(&spec, base, &Overrides::from_env()?)
}
