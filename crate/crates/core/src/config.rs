//! Run configuration: one serializable bundle of artifact paths and
//! settings shared by the command-line entry points. Command-line flags
//! override file values, which override defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{CopathError, Result};
use crate::eval::DecodeSpec;
use crate::learn::TrainConfig;

/// Everything a run can specify. All keys are optional in the file; unknown
/// keys are rejected so typos fail fast.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Task instances (JSON lines) to train on or evaluate over.
    pub tasks: Option<PathBuf>,
    /// Held-out task instances used for validation during training.
    pub val_tasks: Option<PathBuf>,
    /// Word-vector table.
    pub vectors: Option<PathBuf>,
    /// Video-side graph file for single-instance reasoning.
    pub video_graph: Option<PathBuf>,
    /// Dialogue-context graph file for single-instance reasoning.
    pub context_graph: Option<PathBuf>,
    /// Model checkpoint to evaluate or reason with.
    pub model: Option<PathBuf>,
    /// Output artifact path (not required to exist beforehand).
    pub out: Option<PathBuf>,
    /// Training log path (JSON lines; not required to exist beforehand).
    pub log: Option<PathBuf>,
    /// Training settings, including the run seed.
    pub train: TrainConfig,
    /// Decode strategy for evaluation and reasoning.
    pub decode: DecodeSpec,
    /// Also compute exhaustive-search reward ceilings in reports.
    pub oracle: bool,
    /// With no `val_tasks` file, hold out this many instances from the end
    /// of the task list for validation.
    pub val_count: usize,
}

impl RunConfig {
    /// Parse a configuration file, rejecting unknown keys.
    pub fn from_file(path: &Path) -> Result<RunConfig> {
        let text = fs::read_to_string(path).map_err(|source| CopathError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let config: RunConfig = serde_json::from_str(&text).map_err(|e| CopathError::Parse {
            line: e.line(),
            msg: format!("{} in {}", e, path.display()),
        })?;
        config.validate()?;
        Ok(config)
    }

    /// Serialize losslessly (pretty JSON with a trailing newline).
    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self)
            .map(|mut s| {
                s.push('\n');
                s
            })
            .map_err(|e| CopathError::InvalidInput(format!("cannot serialize config: {e}")))
    }

    /// Check settings and referenced input files. Output paths (`out`,
    /// `log`) are exempt: they are created by the run.
    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        for (name, path) in [
            ("tasks", &self.tasks),
            ("val_tasks", &self.val_tasks),
            ("vectors", &self.vectors),
            ("video_graph", &self.video_graph),
            ("context_graph", &self.context_graph),
            ("model", &self.model),
        ] {
            if let Some(path) = path {
                if !path.is_file() {
                    return Err(CopathError::InvalidInput(format!(
                        "{name} file '{}' does not exist",
                        path.display()
                    )));
                }
            }
        }
        Ok(())
    }

    /// The path a required input must have been given under.
    pub fn require(path: &Option<PathBuf>, name: &str) -> Result<PathBuf> {
        path.clone().ok_or_else(|| {
            CopathError::InvalidInput(format!(
                "no {name} path given (set it in the config file or pass the flag)"
            ))
        })
    }
}
