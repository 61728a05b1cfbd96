//! The end-to-end run: write the submit file, submit, poll the outputs while
//! repairing and releasing held jobs, stitch, clean up.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use thiserror::Error;

use crate::battery::{run_sequential, run_single_test, BatteryError, BatteryKind};
use crate::generators::GeneratorSpec;
use crate::monitor::{check_outputs, output_file_name, MonitorError};
use crate::pool::log::{count_job_events, count_waves, JobEvent, LogEntry};
use crate::pool::{
    render_queue_summary, scrape_held_count, Pool, PoolConfig, PoolError, PoolMode, Until,
};
use crate::stitch::{
    assemble, is_test_bearing, parse_job_output, render_job_output, stitch_results, JobMeta,
    StitchError, StitchReport, HEADER_LINES, RESULTS_FILE, STATS_FILE,
};
use crate::submitfile::{
    format_submit_ack, parse_cluster_id, parse_submit, ClusterId, SubmitDescription, SubmitError,
    SUBMIT_FILE_NAME,
};

#[derive(Debug, Error)]
pub enum OrchestratorError {
    #[error("slot count must be at least 1")]
    NoSlots,
    #[error("poll interval must be positive")]
    BadPollInterval,
    #[error(transparent)]
    Pool(#[from] PoolError),
    #[error(transparent)]
    Submit(#[from] SubmitError),
    #[error(transparent)]
    Monitor(#[from] MonitorError),
    #[error(transparent)]
    Stitch(#[from] StitchError),
    #[error(transparent)]
    Battery(#[from] BatteryError),
    #[error("run cannot finish: {0}")]
    Incomplete(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> OrchestratorError + '_ {
    move |source| OrchestratorError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Number of job batches needed to run `jobs` jobs on `slots` slots.
pub fn compute_wave_count(jobs: usize, slots: usize) -> Result<usize, OrchestratorError> {
    if slots == 0 {
        return Err(OrchestratorError::NoSlots);
    }
    Ok(jobs.div_ceil(slots))
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub generator: GeneratorSpec,
    pub battery: BatteryKind,
    pub dest_dir: PathBuf,
    /// Directory the submit file, outputs and log are written to.
    pub work_dir: PathBuf,
    pub poll_interval_s: f64,
    pub pool: PoolConfig,
}

impl RunConfig {
    pub fn new(
        generator: GeneratorSpec,
        battery: BatteryKind,
        dest_dir: impl Into<PathBuf>,
    ) -> Self {
        RunConfig {
            generator,
            battery,
            dest_dir: dest_dir.into(),
            work_dir: PathBuf::from("."),
            poll_interval_s: 12.0,
            pool: PoolConfig::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub cluster: ClusterId,
    pub completed: bool,
    /// Pool time in simulated mode, real time otherwise.
    pub wall_time_s: f64,
    /// Real time spent in the orchestrator itself, excluding waits.
    pub submit_host_busy_s: f64,
    pub wave_count: usize,
    pub held_events: usize,
    pub results_path: PathBuf,
    pub stats_path: PathBuf,
    pub polls: usize,
    pub stitch: StitchReport,
    pub log: Vec<LogEntry>,
}

/// Makes every output file in `dir` writable (`chmod 777 output.*`).
pub fn repair_output_permissions(dir: &Path) -> Result<usize, OrchestratorError> {
    let mut fixed = 0;
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        if !entry.file_name().to_string_lossy().starts_with("output.") {
            continue;
        }
        let path = entry.path();
        let mut perms = entry.metadata().map_err(io_err(&path))?.permissions();
        #[cfg(unix)]
        {
            use std::os::unix::fs::PermissionsExt;
            perms.set_mode(0o777);
        }
        #[cfg(not(unix))]
        perms.set_readonly(false);
        fs::set_permissions(&path, perms).map_err(io_err(&path))?;
        fixed += 1;
    }
    Ok(fixed)
}

/// Runs a battery through a fresh pool built from `cfg.pool`.
pub fn run_master(cfg: &RunConfig, out: &mut dyn Write) -> Result<RunReport, OrchestratorError> {
    let pool = Pool::new(cfg.pool.clone(), &cfg.work_dir)?;
    run_master_on(&pool, cfg, out)
}

/// Runs a battery through an existing pool working in `cfg.work_dir`.
pub fn run_master_on(
    pool: &Pool,
    cfg: &RunConfig,
    out: &mut dyn Write,
) -> Result<RunReport, OrchestratorError> {
    if cfg.poll_interval_s.is_nan() || cfg.poll_interval_s <= 0.0 {
        return Err(OrchestratorError::BadPollInterval);
    }
    let began = Instant::now();
    let mut waiting = Duration::ZERO;
    let dir = &cfg.work_dir;

    let _ = writeln!(out, "making HTCondor submit file");
    let submit_path = dir.join(SUBMIT_FILE_NAME);
    let text = SubmitDescription::for_battery(&cfg.generator.to_string(), cfg.battery).render();
    fs::write(&submit_path, text).map_err(io_err(&submit_path))?;
    let desc = parse_submit(&fs::read_to_string(&submit_path).map_err(io_err(&submit_path))?)?;

    let (assigned, jobs) = pool.submit(&desc)?;
    let cluster = parse_cluster_id(&format_submit_ack(jobs, assigned))?;
    let _ = writeln!(out, "Condor Cluster Number : {cluster}");
    let submitted_at = pool.now();

    let mut polls = 0;
    loop {
        let status = check_outputs(dir, cfg.battery)?;
        if status.is_complete() {
            if polls > 0 {
                let _ = writeln!(out);
            }
            let _ = writeln!(out, "files generated");
            break;
        }
        let summary = render_queue_summary(&pool.query());
        if scrape_held_count(&summary).unwrap_or(0) != 0 {
            repair_output_permissions(dir)?;
            pool.release(cluster)?;
            let _ = writeln!(out, "held tests released");
        } else if pool.is_stalled() {
            return Err(OrchestratorError::Incomplete(format!(
                "{}; {summary}",
                status.message
            )));
        }
        let waited = Instant::now();
        pool.advance(Until::Time(pool.now() + cfg.poll_interval_s))?;
        waiting += waited.elapsed();
        polls += 1;
        let _ = write!(out, ".");
        let _ = out.flush();
    }

    let log = pool.log_entries();
    let wave_count = count_waves(&log, cluster);
    let held_events = log
        .iter()
        .filter(|e| matches!(e, LogEntry::Job { cluster: c, event: JobEvent::Held(_), .. } if *c == cluster))
        .count();
    let wall_time_s = match pool.config().mode {
        PoolMode::Simulated => pool.now() - submitted_at,
        PoolMode::Real => began.elapsed().as_secs_f64(),
    };

    let _ = writeln!(out, "Joining all output files");
    let stitch = stitch_results(dir, cfg.battery, &cfg.dest_dir, out)?;
    let _ = writeln!(out, "files joined, results.txt generated");
    fs::remove_file(&submit_path).map_err(io_err(&submit_path))?;
    let _ = writeln!(out, "Testing complete. Results are in results.txt");

    Ok(RunReport {
        cluster,
        completed: true,
        wall_time_s,
        submit_host_busy_s: (began.elapsed() - waiting).as_secs_f64(),
        wave_count,
        held_events,
        results_path: stitch.results_path.clone(),
        stats_path: stitch.stats_path.clone(),
        polls,
        stitch,
        log,
    })
}

/// Number of HELD lines in a log, over all clusters.
pub fn held_event_count(log: &[LogEntry]) -> usize {
    count_job_events(log, |e| matches!(e, JobEvent::Held(_)))
}

/// Sequential reference output for `battery`: every test on its own fresh
/// instance, rendered and assembled exactly as a distributed run would be.
/// Returns the `results.txt` and `stats.txt` contents.
pub fn sequential_reference(
    generator: &GeneratorSpec,
    battery: BatteryKind,
    started_s: f64,
) -> Result<(String, String), OrchestratorError> {
    let mut outcomes = run_sequential(battery, generator)?;
    if is_test_bearing(battery, 0) {
        outcomes.insert(0, run_single_test(battery, 0, generator)?);
    }
    let docs = (0..battery.job_count())
        .map(|proc| {
            let outcome = outcomes.iter().find(|o| o.index == proc);
            let meta = JobMeta {
                battery,
                proc,
                generator: generator.name(),
                seed: generator.job_seed(proc as u64),
                started_s,
            };
            parse_job_output(&render_job_output(outcome, &meta))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(assemble(battery, &docs))
}

fn header_started(results: &str) -> Option<f64> {
    results
        .lines()
        .take(HEADER_LINES)
        .find_map(|l| l.strip_prefix("started: "))
        .and_then(|v| v.parse().ok())
}

/// Whether the stitched results in `cfg.dest_dir` match a sequential run
/// of the same battery byte for byte.
pub fn verify_equivalence(cfg: &RunConfig) -> Result<bool, OrchestratorError> {
    let results_path = cfg.dest_dir.join(RESULTS_FILE);
    let stats_path = cfg.dest_dir.join(STATS_FILE);
    let results = fs::read_to_string(&results_path).map_err(io_err(&results_path))?;
    let stats = fs::read_to_string(&stats_path).map_err(io_err(&stats_path))?;
    let Some(started) = header_started(&results) else {
        return Ok(false);
    };
    let (want_results, want_stats) = sequential_reference(&cfg.generator, cfg.battery, started)?;
    Ok(results == want_results && stats == want_stats)
}

/// Paths of the per-job output files of `battery` under `dir`.
pub fn output_paths(dir: &Path, battery: BatteryKind) -> Vec<PathBuf> {
    (0..battery.job_count())
        .map(|i| dir.join(output_file_name(i)))
        .collect()
}
