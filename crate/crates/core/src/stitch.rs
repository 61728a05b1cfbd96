//! Per-job output documents and the stitching of a finished run into
//! `results.txt` and `stats.txt`.
//!
//! Every job output starts with the same six-line header. Test-bearing jobs
//! continue with a body and end with a block that starts at the `Summary`
//! line. Crush and BigCrush job 0 is header only.
//!
//! Stitching locates the summary block by its marker line instead of by line
//! offsets, so the layout of the body can change freely.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::battery::{BatteryKind, TestOutcome};
use crate::monitor::output_file_name;

pub const HEADER_LINES: usize = 6;
pub const SUMMARY_MARKER: &str = "Summary";
pub const RESULTS_FILE: &str = "results.txt";
pub const STATS_FILE: &str = "stats.txt";

#[derive(Debug, Error)]
pub enum StitchError {
    #[error("job output has {0} lines, fewer than the {HEADER_LINES}-line header")]
    ShortHeader(usize),
    #[error("missing summary")]
    MissingSummary,
    #[error("output.{index} is missing")]
    MissingOutput { index: u32 },
    #[error("output.{index}: {source}")]
    BadOutput {
        index: u32,
        #[source]
        source: Box<StitchError>,
    },
    #[error("cannot create destination {path}: {source}")]
    DestUncreatable {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StitchError + '_ {
    move |source| StitchError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Metadata written into every job header.
#[derive(Clone, Debug, PartialEq)]
pub struct JobMeta {
    pub battery: BatteryKind,
    pub proc: u32,
    pub generator: String,
    pub seed: u64,
    /// Pool time of the submission the job belongs to.
    pub started_s: f64,
}

/// Whether job `proc` of `battery` runs a test (Crush/BigCrush job 0 does
/// not).
pub fn is_test_bearing(battery: BatteryKind, proc: u32) -> bool {
    proc >= battery.first_index() && proc <= battery.test_count()
}

/// Jobs whose bodies end up in `results.txt`, in order.
pub fn test_bearing_jobs(battery: BatteryKind) -> std::ops::RangeInclusive<u32> {
    battery.first_index()..=battery.test_count()
}

fn header_lines(meta: &JobMeta) -> Vec<String> {
    vec![
        format!("========== {} ==========", meta.battery),
        format!("job: {}", meta.proc),
        format!("generator: {}", meta.generator),
        format!("seed: {}", meta.seed),
        format!("started: {:.3}", meta.started_s),
        "-".repeat(60),
    ]
}

/// A job output split into its parts. The summary block includes its
/// `Summary` line.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JobOutputDoc {
    pub header: Vec<String>,
    pub body: Vec<String>,
    pub summary: Option<Vec<String>>,
}

impl JobOutputDoc {
    pub fn render(&self) -> String {
        let mut out = String::new();
        let lines = self
            .header
            .iter()
            .chain(&self.body)
            .chain(self.summary.iter().flatten());
        for line in lines {
            out.push_str(line);
            out.push('\n');
        }
        out
    }

    /// Header-only documents have neither body nor summary.
    pub fn is_header_only(&self) -> bool {
        self.body.is_empty() && self.summary.is_none()
    }
}

/// Renders the output file of one job. `outcome` is `None` for header-only
/// jobs.
pub fn render_job_output(outcome: Option<&TestOutcome>, meta: &JobMeta) -> String {
    let mut doc = JobOutputDoc {
        header: header_lines(meta),
        body: Vec::new(),
        summary: None,
    };
    if let Some(o) = outcome {
        doc.body = vec![
            format!("test: {} {}", o.index, o.name),
            format!("samples: {}", o.samples_used),
            format!("statistic: {:.6}", o.statistic),
            String::new(),
        ];
        doc.summary = Some(vec![
            SUMMARY_MARKER.to_string(),
            format!(" test: {}", o.index),
            format!(" p-value: {:.6}", o.p_value),
            format!(" verdict: {}", o.verdict.label()),
        ]);
    }
    doc.render()
}

pub fn parse_job_output(text: &str) -> Result<JobOutputDoc, StitchError> {
    let lines: Vec<String> = text.lines().map(str::to_string).collect();
    if lines.len() < HEADER_LINES {
        return Err(StitchError::ShortHeader(lines.len()));
    }
    let mut rest = lines;
    let after = rest.split_off(HEADER_LINES);
    let header = rest;
    if after.is_empty() {
        return Ok(JobOutputDoc {
            header,
            body: Vec::new(),
            summary: None,
        });
    }
    let Some(pos) = after.iter().position(|l| l.starts_with(SUMMARY_MARKER)) else {
        return Err(StitchError::MissingSummary);
    };
    let mut body = after;
    let summary = body.split_off(pos);
    Ok(JobOutputDoc {
        header,
        body,
        summary: Some(summary),
    })
}

/// Builds `results.txt` and `stats.txt` contents from the parsed outputs
/// of jobs `0..job_count`.
pub fn assemble(battery: BatteryKind, docs: &[JobOutputDoc]) -> (String, String) {
    let mut results = String::new();
    let mut stats = String::new();
    let push = |out: &mut String, lines: &[String]| {
        for l in lines {
            out.push_str(l);
            out.push('\n');
        }
    };
    if let Some(first) = docs.first() {
        push(&mut results, &first.header);
    }
    for proc in test_bearing_jobs(battery) {
        let Some(doc) = docs.get(proc as usize) else {
            continue;
        };
        push(&mut results, &doc.body);
        let summary = doc.summary.as_deref().unwrap_or_default();
        if battery == BatteryKind::SmallCrush {
            push(&mut results, summary);
        } else {
            stats.push_str(&format!("{proc}\n"));
            push(&mut stats, summary);
            stats.push('\n');
        }
    }
    (results, stats)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StitchReport {
    pub results_path: PathBuf,
    pub stats_path: PathBuf,
    pub dest_dir: PathBuf,
    pub jobs_stitched: u32,
    pub dest_created: bool,
}

/// Loads and validates the output files of every job of `battery` in `dir`.
pub fn load_outputs(dir: &Path, battery: BatteryKind) -> Result<Vec<JobOutputDoc>, StitchError> {
    (0..battery.job_count())
        .map(|index| {
            let path = dir.join(output_file_name(index));
            let text = match fs::read_to_string(&path) {
                Ok(t) => t,
                Err(e) if e.kind() == io::ErrorKind::NotFound => {
                    return Err(StitchError::MissingOutput { index })
                }
                Err(e) => return Err(io_err(&path)(e)),
            };
            let doc = parse_job_output(&text).map_err(|e| StitchError::BadOutput {
                index,
                source: Box::new(e),
            })?;
            if is_test_bearing(battery, index) && doc.summary.is_none() {
                return Err(StitchError::BadOutput {
                    index,
                    source: Box::new(StitchError::MissingSummary),
                });
            }
            Ok(doc)
        })
        .collect()
}

/// Stitches the outputs in `dir` into `results.txt`/`stats.txt`, then
/// archives the outputs, the results and the pool log into `dest`.
/// Progress (job numbers, ten per line) goes to `progress`.
pub fn stitch_results(
    dir: &Path,
    battery: BatteryKind,
    dest: &Path,
    progress: &mut dyn Write,
) -> Result<StitchReport, StitchError> {
    let docs = load_outputs(dir, battery)?;

    let dest_created = !dest.is_dir();
    if dest_created {
        fs::create_dir_all(dest).map_err(|source| StitchError::DestUncreatable {
            path: dest.to_path_buf(),
            source,
        })?;
    } else {
        let _ = writeln!(progress, "directory exists");
    }

    let results_path = dir.join(RESULTS_FILE);
    let stats_path = dir.join(STATS_FILE);
    for stale in [&results_path, &stats_path] {
        match fs::remove_file(stale) {
            Err(e) if e.kind() != io::ErrorKind::NotFound => return Err(io_err(stale)(e)),
            _ => {}
        }
    }

    let (results, stats) = assemble(battery, &docs);
    fs::write(&results_path, results).map_err(io_err(&results_path))?;
    fs::write(&stats_path, stats).map_err(io_err(&stats_path))?;

    let mut jobs_stitched = 0;
    for proc in test_bearing_jobs(battery) {
        if proc % 10 == 0 && proc != battery.first_index() {
            let _ = writeln!(progress);
        }
        let _ = write!(progress, "{proc} ");
        jobs_stitched += 1;
    }
    let _ = writeln!(progress);

    for index in 0..battery.job_count() {
        let name = output_file_name(index);
        move_file(&dir.join(&name), &dest.join(&name))?;
    }
    for name in [RESULTS_FILE, STATS_FILE] {
        let to = dest.join(name);
        fs::copy(dir.join(name), &to).map_err(io_err(&to))?;
    }
    let log = dir.join(crate::submitfile::LOG_NAME);
    if log.exists() {
        move_file(&log, &dest.join(crate::submitfile::LOG_NAME))?;
    }

    Ok(StitchReport {
        results_path,
        stats_path,
        dest_dir: dest.to_path_buf(),
        jobs_stitched,
        dest_created,
    })
}

fn move_file(from: &Path, to: &Path) -> Result<(), StitchError> {
    if fs::rename(from, to).is_ok() {
        return Ok(());
    }
    // across filesystems
    fs::copy(from, to).map_err(io_err(to))?;
    fs::remove_file(from).map_err(io_err(from))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::battery::Verdict;

    fn meta(battery: BatteryKind, proc: u32) -> JobMeta {
        JobMeta {
            battery,
            proc,
            generator: "minstd".into(),
            seed: 99,
            started_s: 0.0,
        }
    }

    fn outcome(index: u32) -> TestOutcome {
        TestOutcome {
            index,
            name: format!("Runs n={index}"),
            statistic: 1.5,
            p_value: 0.25,
            verdict: Verdict::Pass,
            samples_used: 10,
            effective_seed: 99,
        }
    }

    #[test]
    fn crush_job_zero_is_header_only() {
        let text = render_job_output(None, &meta(BatteryKind::Crush, 0));
        assert_eq!(text.lines().count(), 6);
        let doc = parse_job_output(&text).unwrap();
        assert!(doc.is_header_only());
        assert_eq!(doc.header[0], "========== Crush ==========");
        assert_eq!(doc.header[1], "job: 0");
    }

    #[test]
    fn test_bearing_output_layout() {
        let text = render_job_output(Some(&outcome(3)), &meta(BatteryKind::SmallCrush, 3));
        assert_eq!(text.lines().filter(|l| l.starts_with("Summary")).count(), 1);
        assert!(text.contains("\n p-value: 0.250000\n"));
        assert!(text.contains("\n verdict: PASS\n"));
        let doc = parse_job_output(&text).unwrap();
        assert_eq!(doc.render(), text);
        assert_eq!(doc.summary.as_ref().unwrap()[0], "Summary");
    }

    #[test]
    fn parse_errors() {
        assert!(matches!(
            parse_job_output("a\nb\n"),
            Err(StitchError::ShortHeader(2))
        ));
        let no_summary = "1\n2\n3\n4\n5\n6\nbody\n";
        assert_eq!(
            parse_job_output(no_summary).unwrap_err().to_string(),
            "missing summary"
        );
    }

    #[test]
    fn crush_assembly_splits_summaries_into_stats() {
        let battery = BatteryKind::Crush;
        let docs: Vec<_> = (0..battery.job_count())
            .map(|p| {
                let o = (p > 0).then(|| outcome(p));
                parse_job_output(&render_job_output(o.as_ref(), &meta(battery, p))).unwrap()
            })
            .collect();
        let (results, stats) = assemble(battery, &docs);
        assert_eq!(results.matches("==========").count(), 2);
        assert!(!results.contains("Summary"));
        assert_eq!(stats.matches("Summary\n").count(), 96);
        assert!(stats.starts_with("1\nSummary\n test: 1\n"));
        assert!(stats.ends_with("96\nSummary\n test: 96\n p-value: 0.250000\n verdict: PASS\n\n"));
    }

    #[test]
    fn smallcrush_assembly_keeps_summaries() {
        let battery = BatteryKind::SmallCrush;
        let docs: Vec<_> = (0..11)
            .map(|p| {
                parse_job_output(&render_job_output(Some(&outcome(p)), &meta(battery, p))).unwrap()
            })
            .collect();
        let (results, stats) = assemble(battery, &docs);
        assert!(stats.is_empty());
        assert_eq!(results.matches("Summary\n").count(), 11);
        assert_eq!(results.matches("job: ").count(), 1);
    }
}
