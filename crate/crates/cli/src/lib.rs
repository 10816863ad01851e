//! Experiment runner for `bergman-balance`: reads an INI config, runs one
//! task, writes `report.json` plus CSV traces.

pub mod config;
pub mod invariants;
pub mod tasks;

pub use config::ExperimentConfig;

use serde::Serialize;
use serde_json::Value;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable or incomplete configuration, bad input files.
    Input(String),
    NonConvergence(String),
    Validation(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(s) => write!(f, "input error: {s}"),
            CliError::NonConvergence(s) => write!(f, "no convergence: {s}"),
            CliError::Validation(s) => write!(f, "validation failure: {s}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<bergman_balance::Error> for CliError {
    fn from(e: bergman_balance::Error) -> Self {
        use bergman_balance::Error as E;
        match e {
            E::SolverBreakdown { .. } | E::Overflow(_) => CliError::NonConvergence(e.to_string()),
            E::NonMonotone { .. } | E::NotPositiveDefinite { .. } => {
                CliError::Validation(e.to_string())
            }
            _ => CliError::Input(e.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Ok,
    NonConvergence,
    ValidationFailure,
}

impl Status {
    pub fn exit_code(self) -> i32 {
        match self {
            Status::Ok => 0,
            Status::NonConvergence => 2,
            Status::ValidationFailure => 3,
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 1,
            CliError::NonConvergence(_) => 2,
            CliError::Validation(_) => 3,
        }
    }
}

/// What a task hands back for the report.
#[derive(Debug, Clone)]
pub struct TaskOutput {
    pub status: Status,
    /// Model construction data, including quadrature exactness.
    pub model: Value,
    pub tolerances: Value,
    pub result: Value,
    /// Extra artifacts `(file name, contents)`.
    pub files: Vec<(String, String)>,
}

#[derive(Debug, Serialize)]
struct Report<'a> {
    task: &'a str,
    status: Status,
    exit_code: i32,
    config_hash: String,
    seed: u64,
    model: &'a Value,
    tolerances: &'a Value,
    result: &'a Value,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<String>,
}

/// Result of one invocation: final status and the files written.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub status: Status,
    pub report: PathBuf,
    pub files: Vec<PathBuf>,
}

pub fn render_report(
    cfg: &ExperimentConfig,
    task: &str,
    out: &TaskOutput,
    error: Option<String>,
) -> String {
    let r = Report {
        task,
        status: out.status,
        exit_code: out.status.exit_code(),
        config_hash: cfg.hash(),
        seed: cfg.seed().unwrap_or(0),
        model: &out.model,
        tolerances: &out.tolerances,
        result: &out.result,
        error,
    };
    let mut s = serde_json::to_string_pretty(&r).expect("report serializes");
    s.push('\n');
    s
}

fn write(dir: &Path, name: &str, contents: &str) -> Result<PathBuf, CliError> {
    let p = dir.join(name);
    std::fs::write(&p, contents)
        .map_err(|e| CliError::Input(format!("cannot write {}: {e}", p.display())))?;
    Ok(p)
}

/// Runs the configured task and writes its artifacts under `out_dir`.
/// Solver and validation failures still produce a report; input errors do not.
pub fn run(cfg: &ExperimentConfig, out_dir: &Path) -> Result<RunSummary, CliError> {
    let task = cfg.task()?;
    cfg.seed()?;
    let (output, error) = match tasks::dispatch(cfg, &task) {
        Ok(o) => (o, None),
        Err(CliError::Input(msg)) => return Err(CliError::Input(msg)),
        Err(e) => {
            let status = if e.exit_code() == 2 {
                Status::NonConvergence
            } else {
                Status::ValidationFailure
            };
            let o = TaskOutput {
                status,
                model: Value::Null,
                tolerances: Value::Null,
                result: Value::Null,
                files: vec![],
            };
            (o, Some(e.to_string()))
        }
    };
    std::fs::create_dir_all(out_dir)
        .map_err(|e| CliError::Input(format!("cannot create {}: {e}", out_dir.display())))?;
    let report = write(
        out_dir,
        "report.json",
        &render_report(cfg, &task, &output, error),
    )?;
    let mut files = Vec::new();
    for (name, contents) in &output.files {
        files.push(write(out_dir, name, contents)?);
    }
    Ok(RunSummary {
        status: output.status,
        report,
        files,
    })
}
