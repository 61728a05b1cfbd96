//! Job records, the job state machine and queue snapshots.

use std::fmt;
use std::path::PathBuf;

use crate::submitfile::ClusterId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum JobState {
    Idle,
    Running,
    Held,
    Completed,
    Removed,
}

impl JobState {
    pub fn is_terminal(self) -> bool {
        matches!(self, JobState::Completed | JobState::Removed)
    }

    pub fn can_transition_to(self, next: JobState) -> bool {
        use JobState::*;
        match (self, next) {
            (Idle, Running) | (Running, Completed) | (Running, Idle) => true,
            (Idle, Held) | (Running, Held) | (Held, Idle) => true,
            (from, Removed) => !from.is_terminal(),
            _ => false,
        }
    }
}

impl fmt::Display for JobState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct JobRecord {
    pub cluster: ClusterId,
    pub proc: u32,
    pub state: JobState,
    pub hold_reason: Option<String>,
    pub arguments: String,
    pub output_path: PathBuf,
    pub submitted_s: f64,
    pub started_s: Option<f64>,
    pub finished_s: Option<f64>,
    /// Node currently running the job.
    pub node: Option<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct QueueSnapshot {
    pub total: usize,
    pub idle: usize,
    pub running: usize,
    pub held: usize,
    pub completed: usize,
    pub removed: usize,
    pub jobs: Vec<JobRecord>,
}

impl QueueSnapshot {
    pub fn from_jobs(jobs: Vec<JobRecord>) -> Self {
        let mut s = QueueSnapshot {
            total: jobs.len(),
            ..Default::default()
        };
        for j in &jobs {
            match j.state {
                JobState::Idle => s.idle += 1,
                JobState::Running => s.running += 1,
                JobState::Held => s.held += 1,
                JobState::Completed => s.completed += 1,
                JobState::Removed => s.removed += 1,
            }
        }
        s.jobs = jobs;
        debug_assert!(s.is_conserved());
        s
    }

    pub fn is_conserved(&self) -> bool {
        self.idle + self.running + self.held + self.completed + self.removed == self.total
    }

    /// Jobs still waiting on the pool (idle or running).
    pub fn active(&self) -> usize {
        self.idle + self.running
    }
}

/// One-line queue summary; the held count is the first word after
/// `running, `.
pub fn render_queue_summary(s: &QueueSnapshot) -> String {
    format!(
        "{} jobs; {} idle, {} running, {} held",
        s.total, s.idle, s.running, s.held
    )
}

/// Reads the held count back out of a rendered summary: the first word
/// token after `running,` and whitespace.
pub fn scrape_held_count(summary: &str) -> Option<usize> {
    let pos = summary.find("running,")?;
    let rest = &summary[pos + "running,".len()..];
    let trimmed = rest.trim_start();
    if trimmed.len() == rest.len() {
        return None;
    }
    let token: String = trimmed
        .chars()
        .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
        .collect();
    token.parse().ok()
}
