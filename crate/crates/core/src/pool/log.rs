//! The pool's append-only event log.
//!
//! Job lines read `<time> (<cluster>.<proc>) <EVENT>` and node lines
//! `<time> node <id> <EVENT>`. Times are pool seconds with three decimals.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

use super::queue::{JobRecord, JobState, QueueSnapshot};
use crate::monitor::output_file_name;
use crate::submitfile::ClusterId;

#[derive(Debug, Error, PartialEq)]
#[error("log line {line}: cannot parse '{text}'")]
pub struct LogParseError {
    pub line: usize,
    pub text: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum JobEvent {
    Submitted,
    Started,
    Held(String),
    Released,
    Preempted,
    Completed,
    Removed,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeEvent {
    Restarted,
    Busy,
    Unclaimed,
}

#[derive(Clone, Debug, PartialEq)]
pub enum LogEntry {
    Job {
        time_s: f64,
        cluster: ClusterId,
        proc: u32,
        event: JobEvent,
    },
    Node {
        time_s: f64,
        node: usize,
        event: NodeEvent,
    },
}

impl LogEntry {
    pub fn time_s(&self) -> f64 {
        match self {
            LogEntry::Job { time_s, .. } | LogEntry::Node { time_s, .. } => *time_s,
        }
    }
}

impl fmt::Display for JobEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            JobEvent::Submitted => f.write_str("SUBMITTED"),
            JobEvent::Started => f.write_str("STARTED"),
            JobEvent::Held(reason) => write!(f, "HELD {reason}"),
            JobEvent::Released => f.write_str("RELEASED"),
            JobEvent::Preempted => f.write_str("PREEMPTED"),
            JobEvent::Completed => f.write_str("COMPLETED"),
            JobEvent::Removed => f.write_str("REMOVED"),
        }
    }
}

impl fmt::Display for NodeEvent {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            NodeEvent::Restarted => "RESTARTED",
            NodeEvent::Busy => "BUSY",
            NodeEvent::Unclaimed => "UNCLAIMED",
        })
    }
}

impl fmt::Display for LogEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LogEntry::Job {
                time_s,
                cluster,
                proc,
                event,
            } => write!(f, "{time_s:.3} ({cluster}.{proc}) {event}"),
            LogEntry::Node {
                time_s,
                node,
                event,
            } => write!(f, "{time_s:.3} node {node} {event}"),
        }
    }
}

fn parse_job_event(text: &str) -> Option<JobEvent> {
    Some(match text {
        "SUBMITTED" => JobEvent::Submitted,
        "STARTED" => JobEvent::Started,
        "RELEASED" => JobEvent::Released,
        "PREEMPTED" => JobEvent::Preempted,
        "COMPLETED" => JobEvent::Completed,
        "REMOVED" => JobEvent::Removed,
        other => JobEvent::Held(other.strip_prefix("HELD ")?.to_string()),
    })
}

fn parse_entry(line: &str) -> Option<LogEntry> {
    let (time, rest) = line.split_once(' ')?;
    let time_s: f64 = time.parse().ok()?;
    if let Some(rest) = rest.strip_prefix("node ") {
        let (node, event) = rest.split_once(' ')?;
        let event = match event {
            "RESTARTED" => NodeEvent::Restarted,
            "BUSY" => NodeEvent::Busy,
            "UNCLAIMED" => NodeEvent::Unclaimed,
            _ => return None,
        };
        return Some(LogEntry::Node {
            time_s,
            node: node.parse().ok()?,
            event,
        });
    }
    let rest = rest.strip_prefix('(')?;
    let (id, event) = rest.split_once(") ")?;
    let (cluster, proc) = id.split_once('.')?;
    Some(LogEntry::Job {
        time_s,
        cluster: cluster.parse().ok()?,
        proc: proc.parse().ok()?,
        event: parse_job_event(event)?,
    })
}

pub fn parse_log(text: &str) -> Result<Vec<LogEntry>, LogParseError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            parse_entry(l).ok_or_else(|| LogParseError {
                line: i + 1,
                text: l.to_string(),
            })
        })
        .collect()
}

/// Number of distinct start times among the STARTED events of `cluster`.
/// Jobs dispatched together share one logged time, so each cohort counts
/// once.
pub fn count_waves(entries: &[LogEntry], cluster: ClusterId) -> usize {
    entries
        .iter()
        .filter_map(|e| match e {
            LogEntry::Job {
                time_s,
                cluster: c,
                event: JobEvent::Started,
                ..
            } if *c == cluster => Some(format!("{time_s:.3}")),
            _ => None,
        })
        .collect::<BTreeSet<_>>()
        .len()
}

pub fn count_job_events(entries: &[LogEntry], pred: impl Fn(&JobEvent) -> bool) -> usize {
    entries
        .iter()
        .filter(|e| matches!(e, LogEntry::Job { event, .. } if pred(event)))
        .count()
}

/// Rebuilds the queue from a log, for tools that only see the working
/// directory.
pub fn replay(entries: &[LogEntry]) -> QueueSnapshot {
    let mut jobs: BTreeMap<(ClusterId, u32), JobRecord> = BTreeMap::new();
    for entry in entries {
        let LogEntry::Job {
            time_s,
            cluster,
            proc,
            event,
        } = entry
        else {
            continue;
        };
        let job = jobs.entry((*cluster, *proc)).or_insert_with(|| JobRecord {
            cluster: *cluster,
            proc: *proc,
            state: JobState::Idle,
            hold_reason: None,
            arguments: String::new(),
            output_path: PathBuf::from(output_file_name(*proc)),
            submitted_s: *time_s,
            started_s: None,
            finished_s: None,
            node: None,
        });
        match event {
            JobEvent::Submitted => job.state = JobState::Idle,
            JobEvent::Started => {
                job.state = JobState::Running;
                job.started_s = Some(*time_s);
            }
            JobEvent::Held(reason) => {
                job.state = JobState::Held;
                job.hold_reason = Some(reason.clone());
            }
            JobEvent::Released | JobEvent::Preempted => {
                job.state = JobState::Idle;
                job.hold_reason = None;
            }
            JobEvent::Completed => {
                job.state = JobState::Completed;
                job.finished_s = Some(*time_s);
            }
            JobEvent::Removed => job.state = JobState::Removed,
        }
    }
    QueueSnapshot::from_jobs(jobs.into_values().collect())
}
