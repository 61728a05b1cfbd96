//! Completeness check over the per-job output files.
//!
//! A job counts as done once `output.<proc>` exists with a size above zero;
//! the pool creates every output file empty at submission and replaces it
//! atomically when the job finishes. Unlike the original script, which
//! stopped at the first missing index, the whole expected range is scanned.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::battery::BatteryKind;

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("cannot read directory {path}: {source}")]
    UnreadableDir {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

pub fn output_file_name(proc: u32) -> String {
    format!("output.{proc}")
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CompletionState {
    Complete,
    Incomplete,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CompletionStatus {
    pub state: CompletionState,
    pub done: u32,
    pub expected: u32,
    /// `k/N files generated` when incomplete, empty otherwise.
    pub message: String,
}

impl CompletionStatus {
    pub fn from_counts(done: u32, expected: u32) -> Self {
        if done == expected {
            CompletionStatus {
                state: CompletionState::Complete,
                done,
                expected,
                message: String::new(),
            }
        } else {
            CompletionStatus {
                state: CompletionState::Incomplete,
                done,
                expected,
                message: format!("{done}/{expected} files generated"),
            }
        }
    }

    pub fn is_complete(&self) -> bool {
        self.state == CompletionState::Complete
    }

    /// Exit status of the `check` command.
    pub fn exit_code(&self) -> i32 {
        match self.state {
            CompletionState::Complete => 0,
            CompletionState::Incomplete => 1,
        }
    }
}

fn is_done(path: &Path) -> bool {
    fs::metadata(path).is_ok_and(|m| m.is_file() && m.len() > 0)
}

pub fn check_outputs(dir: &Path, battery: BatteryKind) -> Result<CompletionStatus, MonitorError> {
    fs::read_dir(dir).map_err(|source| MonitorError::UnreadableDir {
        path: dir.to_path_buf(),
        source,
    })?;
    let expected = battery.job_count();
    let done = (0..expected)
        .filter(|&i| is_done(&dir.join(output_file_name(i))))
        .count() as u32;
    Ok(CompletionStatus::from_counts(done, expected))
}
