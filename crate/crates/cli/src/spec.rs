//! Spec-file schema. See `docs/spec-file.md` for the grammar.

use std::path::PathBuf;

use serde::Deserialize;

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    Sample,
    OracleCheck,
    Experiment,
    Report,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSpec {
    pub command: Command,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    pub output: Option<PathBuf>,
    pub sample: Option<SampleSection>,
    #[serde(rename = "oracle-check")]
    pub oracle_check: Option<OracleCheckSection>,
    pub experiment: Option<ExperimentSection>,
    pub report: Option<ReportSection>,
}

fn one() -> usize {
    1
}

fn default_burn_in() -> usize {
    200
}

fn default_thinning() -> usize {
    10
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleSection {
    pub model: String,
    pub graph: String,
    pub p: Option<f64>,
    #[serde(default = "default_q")]
    pub q: u32,
    pub x: Option<f64>,
    pub beta: Option<f64>,
    #[serde(default = "default_boundary")]
    pub boundary: String,
    /// Source vertices (mod 2).
    pub sources: Option<Vec<usize>>,
    /// Full source labelling mod `q`.
    pub labels: Option<Vec<u32>>,
    #[serde(default)]
    pub conditioned: bool,
    #[serde(default = "one")]
    pub count: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default = "default_thinning")]
    pub thinning: usize,
}

fn default_q() -> u32 {
    2
}

fn default_boundary() -> String {
    "free".to_string()
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckSection {
    #[serde(default = "default_suites")]
    pub suites: Vec<String>,
    #[serde(default = "default_xs")]
    pub x: Vec<f64>,
    #[serde(default = "default_max_edges")]
    pub max_edges: usize,
    #[serde(default = "default_qflow_edges")]
    pub qflow_max_edges: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
}

impl Default for OracleCheckSection {
    fn default() -> Self {
        OracleCheckSection {
            suites: default_suites(),
            x: default_xs(),
            max_edges: default_max_edges(),
            qflow_max_edges: default_qflow_edges(),
            tolerance: default_tolerance(),
        }
    }
}

fn default_suites() -> Vec<String> {
    ["fk-loop", "current-odd", "current-trace", "qflow-3", "qflow-4"]
        .map(String::from)
        .to_vec()
}

fn default_xs() -> Vec<f64> {
    vec![0.2, 0.5, 0.8]
}

fn default_max_edges() -> usize {
    8
}

fn default_qflow_edges() -> usize {
    5
}

fn default_tolerance() -> f64 {
    1e-12
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    #[default]
    Off,
    Wall,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    #[serde(default = "default_d")]
    pub d: usize,
    pub p: Option<f64>,
    pub x: Option<f64>,
    #[serde(rename = "N", alias = "n")]
    pub size: Option<OneOrMany<usize>>,
    pub k: Option<usize>,
    pub sources: Option<String>,
    #[serde(rename = "A1")]
    pub a1: Option<String>,
    #[serde(rename = "A2")]
    pub a2: Option<String>,
    pub mode: Option<String>,
    pub boundary: Option<OneOrMany<String>>,
    pub theta_hat: Option<f64>,
    #[serde(default = "default_theta_replicas")]
    pub theta_replicas: usize,
    pub epsilon: Option<f64>,
    #[serde(rename = "L0")]
    pub l0: Option<usize>,
    pub replicas: Option<usize>,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub timing: Timing,
}

fn default_d() -> usize {
    2
}

fn default_theta_replicas() -> usize {
    100
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReportSection {
    pub input: PathBuf,
}

impl RunSpec {
    pub fn parse(text: &str) -> Result<Self, CliError> {
        let spec: RunSpec = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        if spec.workers == 0 {
            return Err(CliError::Config("field `workers` must be at least 1".into()));
        }
        let present = [
            (Command::Sample, spec.sample.is_some(), "sample"),
            (Command::OracleCheck, spec.oracle_check.is_some(), "oracle-check"),
            (Command::Experiment, spec.experiment.is_some(), "experiment"),
            (Command::Report, spec.report.is_some(), "report"),
        ];
        for (cmd, there, name) in present {
            if there && cmd != spec.command {
                return Err(CliError::Config(format!(
                    "section `[{name}]` does not belong to command `{}`",
                    spec.command.name()
                )));
            }
        }
        Ok(spec)
    }
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::OracleCheck => "oracle-check",
            Command::Experiment => "experiment",
            Command::Report => "report",
        }
    }
}

/// Field that a section requires.
pub(crate) fn required<T: Clone>(v: &Option<T>, field: &str, section: &str) -> Result<T, CliError> {
    v.clone()
        .ok_or_else(|| CliError::Config(format!("missing field `{field}` in [{section}]")))
}
