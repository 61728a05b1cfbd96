//! Command-line front end. Every pipeline stage is a subcommand; the ones
//! that inspect or change the queue (`q`, `watch`, `status`, `release`,
//! `rm`) work from the `log` file in the current directory.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::thread;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};

use crate::battery::{run_single_test, spec_for, BatteryKind, TestFamily, Verdict};
use crate::generators::GeneratorSpec;
use crate::monitor::check_outputs;
use crate::orchestrator::{run_master, RunConfig};
use crate::pool::log::{parse_log, replay, JobEvent, LogEntry, NodeEvent};
use crate::pool::{render_queue_summary, FaultPlan, HoldCause, JobState, PoolConfig, PoolMode};
use crate::stitch::stitch_results;
use crate::submitfile::{generate_submit, ClusterId, LOG_NAME};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INCOMPLETE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "crushpool",
    version,
    about = "Run RNG test batteries on an opportunistic pool"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a battery end to end: submit, poll, release holds, stitch.
    Run(RunArgs),
    /// Print the submit file for a battery.
    Makesub {
        executable: String,
        battery: BatteryKind,
    },
    /// Check that every output file of a battery is present and non-empty.
    Check { battery: BatteryKind },
    /// Join the output files into results.txt and stats.txt and archive them.
    Stitch {
        battery: BatteryKind,
        dest_dir: PathBuf,
    },
    /// Print the queue summary.
    Q,
    /// Print the queue summary every 2 seconds.
    Watch {
        /// Stop after this many summaries.
        #[arg(long, hide = true)]
        count: Option<u64>,
    },
    /// Print the state of every node.
    Status {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        slots: Option<usize>,
    },
    /// Release the held jobs of a cluster.
    Release { cluster: u64 },
    /// Remove a cluster, or one job of it.
    Rm { cluster: u64, proc: Option<u32> },
    /// Show RANDU failing and minstd passing at desk scale.
    Selftest,
}

#[derive(Debug, clap::Args)]
pub struct RunArgs {
    /// minstd, randu, xorshift64star, zero, name@seed or file:<path>.
    pub generator: String,
    pub battery: BatteryKind,
    pub dest_dir: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub slots: Option<usize>,
    #[arg(long)]
    pub simulated: bool,
    /// Simulated job duration in seconds.
    #[arg(long)]
    pub duration: Option<f64>,
    /// Poll interval in seconds.
    #[arg(long)]
    pub poll: Option<f64>,
    #[arg(long)]
    pub restart_delay: Option<f64>,
    /// hold:P:transient, hold:P:unwritable, restart:N:T, restart-all:T,
    /// busy:N:START:END or load:N:PCT.
    #[arg(long = "fault")]
    pub faults: Vec<String>,
    /// File of `key = value` pool settings.
    #[arg(long)]
    pub config: Option<PathBuf>,
}

/// Pool settings from a config file, applied before flags.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FileConfig {
    pub pool: PoolConfig,
    pub poll_interval_s: Option<f64>,
    pub seed: Option<u64>,
}

pub fn parse_config(text: &str) -> Result<FileConfig> {
    let mut cfg = FileConfig::default();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| anyhow!("config line {}: expected key = value", n + 1))?;
        let (key, value) = (key.trim(), value.trim());
        let num = || -> Result<f64> {
            value
                .parse()
                .with_context(|| format!("config line {}: bad number '{value}'", n + 1))
        };
        let p = &mut cfg.pool;
        match key {
            "node_count" => p.node_count = num()? as usize,
            "slots_per_node" => p.slots_per_node = num()? as usize,
            "cpu_threshold_pct" => p.cpu_threshold_pct = num()?,
            "required_idle_minutes" => p.required_idle_minutes = num()?,
            "sim_job_duration_s" => p.sim_job_duration_s = num()?,
            "poll_granularity_s" => p.poll_granularity_s = num()?,
            "restart_delay_s" => p.restart_delay_s = num()?,
            "poll_interval_s" => cfg.poll_interval_s = Some(num()?),
            "seed" => cfg.seed = Some(num()? as u64),
            "mode" => {
                p.mode = match value {
                    "real" | "Real" => PoolMode::Real,
                    "simulated" | "Simulated" => PoolMode::Simulated,
                    _ => bail!("config line {}: mode must be real or simulated", n + 1),
                }
            }
            _ => bail!("config line {}: unknown key '{key}'", n + 1),
        }
    }
    Ok(cfg)
}

fn load_config(path: Option<&Path>, cwd: &Path) -> Result<FileConfig> {
    match path {
        Some(p) => {
            let p = cwd.join(p);
            let text =
                fs::read_to_string(&p).with_context(|| format!("reading {}", p.display()))?;
            parse_config(&text)
        }
        None => Ok(FileConfig::default()),
    }
}

/// Parses the `--fault` forms into `plan`.
pub fn apply_fault(plan: &mut FaultPlan, spec: &str, node_count: usize) -> Result<()> {
    let parts: Vec<&str> = spec.split(':').collect();
    let bad = || anyhow!("bad fault '{spec}'");
    let int = |s: &str| s.parse::<usize>().map_err(|_| bad());
    let real = |s: &str| s.parse::<f64>().map_err(|_| bad());
    match parts.as_slice() {
        ["hold", p, cause] => {
            let cause = match *cause {
                "transient" => HoldCause::Transient,
                "unwritable" => HoldCause::OutputNotWritable,
                _ => return Err(bad()),
            };
            plan.hold_faults.push((int(p)? as u32, cause));
        }
        ["restart", n, t] => plan.node_restarts.push((int(n)?, real(t)?)),
        ["restart-all", t] => {
            let t = real(t)?;
            plan.node_restarts.extend((1..=node_count).map(|n| (n, t)));
        }
        ["busy", n, s, e] => plan.busy_periods.push((int(n)?, real(s)?, real(e)?)),
        ["load", n, pct] => plan.cpu_load.push((int(n)?, real(pct)?)),
        _ => return Err(bad()),
    }
    Ok(())
}

fn resolve_generator(name: &str, seed: Option<u64>) -> Result<GeneratorSpec> {
    let spec: GeneratorSpec = name.parse()?;
    Ok(match seed {
        Some(seed) if !name.starts_with("file:") => GeneratorSpec::from_name(&spec.name(), seed)?,
        _ if !name.contains('@') && !name.starts_with("file:") => {
            GeneratorSpec::from_name(name, 1)?
        }
        _ => spec,
    })
}

pub fn build_run_config(args: &RunArgs, cwd: &Path) -> Result<RunConfig> {
    let file = load_config(args.config.as_deref(), cwd)?;
    let mut pool = file.pool;
    if args.simulated {
        pool.mode = PoolMode::Simulated;
    }
    if let Some(n) = args.slots {
        if n == 0 {
            bail!("--slots must be at least 1");
        }
        pool = pool.with_total_slots(n);
    }
    if let Some(d) = args.duration {
        pool.sim_job_duration_s = d;
    }
    if let Some(d) = args.restart_delay {
        pool.restart_delay_s = d;
    }
    for f in &args.faults {
        apply_fault(&mut pool.fault_plan, f, pool.node_count)?;
    }
    pool.validate()?;
    let poll_interval_s = args.poll.or(file.poll_interval_s).unwrap_or(12.0);
    if poll_interval_s.is_nan() || poll_interval_s <= 0.0 {
        bail!("--poll must be positive");
    }
    Ok(RunConfig {
        generator: resolve_generator(&args.generator, args.seed.or(file.seed))?,
        battery: args.battery,
        dest_dir: cwd.join(&args.dest_dir),
        work_dir: cwd.to_path_buf(),
        poll_interval_s,
        pool,
    })
}

fn read_log(cwd: &Path) -> Result<Vec<LogEntry>> {
    let path = cwd.join(LOG_NAME);
    match fs::read_to_string(&path) {
        Ok(text) => Ok(parse_log(&text)?),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(e).with_context(|| format!("reading {}", path.display())),
    }
}

/// Appends `event` for every job of `cluster` (or only `proc`) currently
/// in one of `from`. Returns how many lines were written.
fn append_job_events(
    cwd: &Path,
    cluster: ClusterId,
    proc: Option<u32>,
    from: &[JobState],
    event: JobEvent,
) -> Result<usize> {
    let entries = read_log(cwd)?;
    let snapshot = replay(&entries);
    if !snapshot.jobs.iter().any(|j| j.cluster == cluster) {
        bail!("unknown cluster {cluster}");
    }
    let time_s = entries.last().map_or(0.0, LogEntry::time_s);
    let path = cwd.join(LOG_NAME);
    let mut f = OpenOptions::new().append(true).open(&path)?;
    let mut n = 0;
    for job in &snapshot.jobs {
        if job.cluster == cluster && proc.is_none_or(|p| p == job.proc) && from.contains(&job.state)
        {
            let entry = LogEntry::Job {
                time_s,
                cluster,
                proc: job.proc,
                event: event.clone(),
            };
            writeln!(f, "{entry}")?;
            n += 1;
        }
    }
    Ok(n)
}

fn node_states(entries: &[LogEntry], nodes: usize) -> Vec<&'static str> {
    let mut states = vec!["Unclaimed"; nodes];
    for e in entries {
        if let LogEntry::Node { node, event, .. } = e {
            if let Some(s) = states.get_mut(node - 1) {
                *s = match event {
                    NodeEvent::Restarted => "Offline",
                    NodeEvent::Busy => "Busy",
                    NodeEvent::Unclaimed => "Unclaimed",
                };
            }
        }
    }
    states
}

/// Tests the self-test runs: the SmallCrush monobit test and the first
/// BigCrush birthday-spacings and serial tests on tuples of 3 or more.
fn selftest_cases() -> Vec<(BatteryKind, u32)> {
    let big = &spec_for(BatteryKind::BigCrush).tests;
    let first = |family| {
        big.iter()
            .find(|t| t.family() == family && t.params.dim().is_some_and(|d| d >= 3))
            .map(|t| (BatteryKind::BigCrush, t.index))
    };
    let mut cases = vec![(BatteryKind::SmallCrush, 1)];
    cases.extend(first(TestFamily::BirthdaySpacings));
    cases.extend(first(TestFamily::SerialPairs));
    cases
}

fn selftest(out: &mut dyn Write) -> Result<bool> {
    writeln!(
        out,
        "{:<16} {:<10} {:<48} {:>10} verdict",
        "generator", "battery", "test", "p-value"
    )?;
    let mut ok = true;
    for name in ["randu", "minstd", "xorshift64star"] {
        let gen = GeneratorSpec::from_name(name, 1)?;
        for (battery, index) in selftest_cases() {
            let o = run_single_test(battery, index, &gen)?;
            writeln!(
                out,
                "{:<16} {:<10} {:<48} {:>10.6} {}",
                name,
                battery.name(),
                o.name,
                o.p_value,
                o.verdict.label()
            )?;
            ok &= match (name, battery) {
                ("randu", BatteryKind::BigCrush) => o.p_value < 1e-6,
                ("randu", _) => true,
                _ => o.verdict != Verdict::Fail,
            };
        }
    }
    writeln!(
        out,
        "{}",
        if ok {
            "selftest passed"
        } else {
            "selftest FAILED"
        }
    )?;
    Ok(ok)
}

/// Runs one command with `cwd` as the working directory and returns the
/// exit code.
pub fn run_command(cmd: Command, cwd: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match dispatch(cmd, cwd, out, err) {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(err, "error: {e:#}");
            EXIT_INCOMPLETE
        }
    }
}

fn dispatch(cmd: Command, cwd: &Path, out: &mut dyn Write, err: &mut dyn Write) -> Result<i32> {
    match cmd {
        Command::Run(args) => {
            let cfg = build_run_config(&args, cwd)?;
            let report = run_master(&cfg, out)?;
            writeln!(
                err,
                "cluster {}: {} wave(s), wall time {:.3} s, submit host busy {:.3} s, {} held event(s)",
                report.cluster,
                report.wave_count,
                report.wall_time_s,
                report.submit_host_busy_s,
                report.held_events
            )?;
            Ok(EXIT_OK)
        }
        Command::Makesub {
            executable,
            battery,
        } => {
            write!(out, "{}", generate_submit(&executable, battery.name())?)?;
            Ok(EXIT_OK)
        }
        Command::Check { battery } => {
            let status = check_outputs(cwd, battery)?;
            write!(out, "{}", status.message)?;
            Ok(status.exit_code())
        }
        Command::Stitch { battery, dest_dir } => {
            stitch_results(cwd, battery, &cwd.join(dest_dir), out)?;
            Ok(EXIT_OK)
        }
        Command::Q => {
            writeln!(out, "{}", render_queue_summary(&replay(&read_log(cwd)?)))?;
            Ok(EXIT_OK)
        }
        Command::Watch { count } => {
            let mut shown = 0;
            loop {
                writeln!(out, "{}", render_queue_summary(&replay(&read_log(cwd)?)))?;
                out.flush()?;
                shown += 1;
                if count.is_some_and(|c| shown >= c) {
                    return Ok(EXIT_OK);
                }
                thread::sleep(Duration::from_secs(2));
            }
        }
        Command::Status { config, slots } => {
            let mut pool = load_config(config.as_deref(), cwd)?.pool;
            if let Some(n) = slots {
                pool = pool.with_total_slots(n);
            }
            let entries = read_log(cwd)?;
            for (i, state) in node_states(&entries, pool.node_count).iter().enumerate() {
                writeln!(
                    out,
                    "node {}: {state}, {} slots",
                    i + 1,
                    pool.slots_per_node
                )?;
            }
            writeln!(out, "{}", render_queue_summary(&replay(&entries)))?;
            Ok(EXIT_OK)
        }
        Command::Release { cluster } => {
            let n = append_job_events(
                cwd,
                ClusterId(cluster),
                None,
                &[JobState::Held],
                JobEvent::Released,
            )?;
            writeln!(out, "{n} job(s) released")?;
            Ok(EXIT_OK)
        }
        Command::Rm { cluster, proc } => {
            let n = append_job_events(
                cwd,
                ClusterId(cluster),
                proc,
                &[JobState::Idle, JobState::Running, JobState::Held],
                JobEvent::Removed,
            )?;
            writeln!(out, "{n} job(s) removed")?;
            Ok(EXIT_OK)
        }
        Command::Selftest => Ok(if selftest(out)? {
            EXIT_OK
        } else {
            EXIT_INCOMPLETE
        }),
    }
}

/// Parses `argv` and runs it. Usage errors print to `err` and return 2.
pub fn main_with(argv: &[String], cwd: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    match Cli::try_parse_from(argv) {
        Ok(cli) => run_command(cli.command, cwd, out, err),
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            if e.use_stderr() {
                let _ = write!(err, "{text}");
            } else {
                let _ = write!(out, "{text}");
            }
            code
        }
    }
}
