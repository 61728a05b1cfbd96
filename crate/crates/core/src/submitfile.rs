//! Submission files and the submit acknowledgement line.
//!
//! The generated file is byte-for-byte what the `makesub` shell script
//! prints: four header lines, a blank line, then one
//! `Arguments = <job> <battery code>` / `Queue` / blank stanza per job.

use std::fmt::{self, Write as _};
use std::str::FromStr;

use thiserror::Error;

use crate::battery::{BatteryError, BatteryKind};

pub const OUTPUT_TEMPLATE: &str = "output.$(Process)";
pub const LOG_NAME: &str = "log";
/// File name the orchestrator writes the submit description to.
pub const SUBMIT_FILE_NAME: &str = "runTest";

#[derive(Debug, Error, PartialEq)]
pub enum SubmitError {
    #[error("line {line}: malformed line '{text}'")]
    Malformed { line: usize, text: String },
    #[error("line {line}: Queue without an Executable line")]
    MissingExecutable { line: usize },
    #[error("line {line}: bad queue count '{text}'")]
    BadQueueCount { line: usize, text: String },
    #[error("no cluster id in submit output")]
    NoClusterId,
}

/// Cluster number assigned by the pool to one submission.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct ClusterId(pub u64);

impl fmt::Display for ClusterId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl FromStr for ClusterId {
    type Err = std::num::ParseIntError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        s.parse().map(ClusterId)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Stanza {
    pub arguments: String,
    pub queue_count: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubmitDescription {
    pub universe: String,
    pub executable: String,
    pub log_name: String,
    pub output_template: String,
    pub stanzas: Vec<Stanza>,
    /// `Key = value` lines the pool does not interpret, in file order.
    pub extra: Vec<(String, String)>,
}

impl SubmitDescription {
    /// The description `makesub` produces for `battery`.
    pub fn for_battery(executable: &str, battery: BatteryKind) -> Self {
        SubmitDescription {
            universe: "vanilla".into(),
            executable: executable.into(),
            log_name: LOG_NAME.into(),
            output_template: OUTPUT_TEMPLATE.into(),
            stanzas: (0..battery.job_count())
                .map(|counter| Stanza {
                    arguments: format!("{counter} {}", battery.code()),
                    queue_count: 1,
                })
                .collect(),
            extra: Vec::new(),
        }
    }

    /// Total jobs queued by all stanzas.
    pub fn job_count(&self) -> usize {
        self.stanzas.iter().map(|s| s.queue_count as usize).sum()
    }

    /// Per-job argument strings in process-number order.
    pub fn job_arguments(&self) -> impl Iterator<Item = &str> {
        self.stanzas
            .iter()
            .flat_map(|s| std::iter::repeat_n(s.arguments.as_str(), s.queue_count as usize))
    }

    /// Output file name of process `proc`.
    pub fn output_name(&self, proc: u32) -> String {
        self.output_template
            .replace("$(Process)", &proc.to_string())
    }

    /// Renders the file in `makesub` layout.
    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "Universe = {}", self.universe);
        let _ = writeln!(out, "Executable = {}", self.executable);
        let _ = writeln!(out, "Log = {}", self.log_name);
        let _ = writeln!(out, "Output = {}", self.output_template);
        for (k, v) in &self.extra {
            let _ = writeln!(out, "{k} = {v}");
        }
        out.push('\n');
        for stanza in &self.stanzas {
            let _ = writeln!(out, "Arguments = {}", stanza.arguments);
            if stanza.queue_count == 1 {
                out.push_str("Queue\n");
            } else {
                let _ = writeln!(out, "Queue {}", stanza.queue_count);
            }
            out.push('\n');
        }
        out
    }
}

/// Text of the submit file for `battery`, as `makesub` prints it.
pub fn generate_submit(executable: &str, battery: &str) -> Result<String, BatteryError> {
    let kind: BatteryKind = battery.parse()?;
    Ok(SubmitDescription::for_battery(executable, kind).render())
}

pub fn parse_submit(text: &str) -> Result<SubmitDescription, SubmitError> {
    let mut universe = String::from("vanilla");
    let mut executable: Option<String> = None;
    let mut log_name = LOG_NAME.to_string();
    let mut output_template = OUTPUT_TEMPLATE.to_string();
    let mut extra = Vec::new();
    let mut stanzas = Vec::new();
    let mut arguments = String::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut words = line.split_whitespace();
        if words
            .next()
            .is_some_and(|w| w.eq_ignore_ascii_case("queue"))
        {
            if executable.is_none() {
                return Err(SubmitError::MissingExecutable { line: line_no });
            }
            let queue_count = match words.next() {
                None => 1,
                Some(n) => n.parse().map_err(|_| SubmitError::BadQueueCount {
                    line: line_no,
                    text: n.to_string(),
                })?,
            };
            stanzas.push(Stanza {
                arguments: std::mem::take(&mut arguments),
                queue_count,
            });
            continue;
        }
        let Some((key, value)) = line.split_once('=') else {
            return Err(SubmitError::Malformed {
                line: line_no,
                text: raw.to_string(),
            });
        };
        let (key, value) = (key.trim(), value.trim().to_string());
        match key.to_ascii_lowercase().as_str() {
            "universe" => universe = value,
            "executable" => executable = Some(value),
            "log" => log_name = value,
            "output" => output_template = value,
            "arguments" => arguments = value,
            _ => extra.push((key.to_string(), value)),
        }
    }

    Ok(SubmitDescription {
        universe,
        // a file without Queue statements may still lack an executable
        executable: executable.unwrap_or_default(),
        log_name,
        output_template,
        stanzas,
        extra,
    })
}

/// The acknowledgement printed after a successful submission.
pub fn format_submit_ack(jobs: usize, cluster: ClusterId) -> String {
    format!("{jobs} job(s) submitted to cluster {cluster}.")
}

/// Extracts the first word token that follows `cluster` and whitespace.
pub fn parse_cluster_id(text: &str) -> Result<ClusterId, SubmitError> {
    let is_word = |c: char| c.is_ascii_alphanumeric() || c == '_';
    let mut rest = text;
    while let Some(pos) = rest.find("cluster") {
        let after = &rest[pos + "cluster".len()..];
        let trimmed = after.trim_start();
        if trimmed.len() < after.len() {
            let token: String = trimmed.chars().take_while(|&c| is_word(c)).collect();
            if !token.is_empty() {
                return token.parse().map_err(|_| SubmitError::NoClusterId);
            }
        }
        rest = after;
    }
    Err(SubmitError::NoClusterId)
}
