//! An HTCondor-like pool: a job queue with hold semantics, nodes with an
//! opportunistic eligibility policy, and an execution engine that either
//! runs jobs on worker threads (real mode) or replays them on a virtual
//! clock (simulated mode).
//!
//! Every queue mutation goes through one coordinator lock. In real mode
//! workers only compute job outputs and hand them back over a channel; the
//! coordinator writes the files and updates the queue.

pub mod log;
pub mod queue;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::fs::{self, OpenOptions};
use std::io::{self, Write as _};
use std::path::{Path, PathBuf};
use std::sync::mpsc::{self, Receiver, RecvTimeoutError, Sender};
use std::sync::{Arc, Mutex, MutexGuard};
use std::time::{Duration, Instant};

use rayon::prelude::*;
use thiserror::Error;

use crate::runner::{resolve_executable, run_job};
use crate::submitfile::{ClusterId, SubmitDescription, LOG_NAME};
use log::{JobEvent, LogEntry, NodeEvent};
pub use queue::{render_queue_summary, scrape_held_count, JobRecord, JobState, QueueSnapshot};

pub const HOLD_REASON_UNWRITABLE: &str = "output not writable";
pub const HOLD_REASON_TRANSIENT: &str = "transient error";

#[derive(Debug, Error)]
pub enum PoolError {
    #[error("invalid pool configuration: {0}")]
    InvalidConfig(String),
    #[error("unknown cluster {0}")]
    UnknownCluster(ClusterId),
    #[error("unknown node {0}")]
    UnknownNode(usize),
    #[error("submission rejected: {0}")]
    SubmitRejected(String),
    #[error("{idle} idle job(s) can never be matched to a node")]
    Stalled { idle: usize },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> PoolError + '_ {
    move |source| PoolError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolMode {
    Real,
    Simulated,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HoldCause {
    /// The job's output file is read-only when it finishes. Persists until
    /// the file is made writable again.
    OutputNotWritable,
    /// Holds the job once, at its first completion.
    Transient,
}

/// Faults injected into a pool. Procs are relative to each submitted
/// cluster; node ids are 1-based; times are pool seconds.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FaultPlan {
    pub hold_faults: Vec<(u32, HoldCause)>,
    pub node_restarts: Vec<(usize, f64)>,
    pub busy_periods: Vec<(usize, f64, f64)>,
    /// Constant background CPU load per node, in percent.
    pub cpu_load: Vec<(usize, f64)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct PoolConfig {
    pub node_count: usize,
    pub slots_per_node: usize,
    pub cpu_threshold_pct: f64,
    pub required_idle_minutes: f64,
    pub mode: PoolMode,
    pub sim_job_duration_s: f64,
    /// Longest wait between coordinator passes in real mode.
    pub poll_granularity_s: f64,
    /// Time a restarted node stays offline.
    pub restart_delay_s: f64,
    pub fault_plan: FaultPlan,
}

impl Default for PoolConfig {
    fn default() -> Self {
        PoolConfig {
            node_count: 9,
            slots_per_node: 8,
            cpu_threshold_pct: 3.0,
            required_idle_minutes: 15.0,
            mode: PoolMode::Real,
            sim_job_duration_s: 60.0,
            poll_granularity_s: 0.05,
            restart_delay_s: 30.0,
            fault_plan: FaultPlan::default(),
        }
    }
}

impl PoolConfig {
    pub fn simulated(duration_s: f64) -> Self {
        PoolConfig {
            mode: PoolMode::Simulated,
            sim_job_duration_s: duration_s,
            ..Default::default()
        }
    }

    /// Reshapes the pool to `n` slots: `n / 8` eight-slot nodes when `n` is
    /// a multiple of 8, otherwise `n` single-slot nodes.
    pub fn with_total_slots(mut self, n: usize) -> Self {
        if n.is_multiple_of(8) && n > 0 {
            self.node_count = n / 8;
            self.slots_per_node = 8;
        } else {
            self.node_count = n;
            self.slots_per_node = 1;
        }
        self
    }

    pub fn total_slots(&self) -> usize {
        self.node_count * self.slots_per_node
    }

    pub fn validate(&self) -> Result<(), PoolError> {
        let bad = |m: &str| Err(PoolError::InvalidConfig(m.to_string()));
        if self.node_count == 0 || self.slots_per_node == 0 {
            return bad("node_count and slots_per_node must be at least 1");
        }
        if self.mode == PoolMode::Simulated
            && (self.sim_job_duration_s.is_nan() || self.sim_job_duration_s <= 0.0)
        {
            return bad("sim_job_duration_s must be positive");
        }
        if self.poll_granularity_s.is_nan()
            || self.poll_granularity_s <= 0.0
            || self.restart_delay_s < 0.0
        {
            return bad("poll_granularity_s must be positive and restart_delay_s non-negative");
        }
        let plan = &self.fault_plan;
        let node_ok = |n: usize| (1..=self.node_count).contains(&n);
        for &(node, t) in &plan.node_restarts {
            if !node_ok(node) || t < 0.0 {
                return bad("node restart outside the pool or at negative time");
            }
        }
        for &(node, start, end) in &plan.busy_periods {
            if !node_ok(node) || start < 0.0 || end < start {
                return bad("busy period outside the pool or with bad times");
            }
        }
        for &(node, _) in &plan.cpu_load {
            if !node_ok(node) {
                return bad("cpu load for unknown node");
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeState {
    Unclaimed,
    Claimed,
    Busy,
    /// Restarting; not registered with the pool.
    Offline,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NodeStatus {
    pub id: usize,
    pub state: NodeState,
    pub cpu_pct: f64,
    pub last_input_event_s: f64,
    pub running: usize,
    pub slots: usize,
}

/// Policy inputs observed when a job started, for auditing.
#[derive(Clone, Debug, PartialEq)]
pub struct StartRecord {
    pub time_s: f64,
    pub cluster: ClusterId,
    pub proc: u32,
    pub node: usize,
    pub cpu_pct: f64,
    pub input_idle_s: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Until {
    /// No idle or running jobs remain.
    Quiescent,
    /// The pool clock reaches this time.
    Time(f64),
}

type JobKey = (ClusterId, u32);

struct Job {
    record: JobRecord,
    executable: String,
    /// Bumped whenever a run is abandoned so its completion is ignored.
    attempt: u64,
    slot: Option<(usize, usize)>,
    transient_pending: bool,
}

struct Node {
    cpu_pct: f64,
    last_input_s: f64,
    busy: bool,
    offline: bool,
    generation: u64,
    slots: Vec<Option<JobKey>>,
}

impl Node {
    fn running(&self) -> usize {
        self.slots.iter().flatten().count()
    }
}

#[derive(Clone, Debug)]
enum Event {
    JobFinish { key: JobKey, attempt: u64 },
    BusyStart { node: usize },
    BusyEnd { node: usize },
    Restart { node: usize },
    NodeBack { node: usize, generation: u64 },
    Wake,
}

struct Scheduled {
    time: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Scheduled {}
impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Scheduled {
    // reversed: BinaryHeap pops the earliest event first
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .time
            .total_cmp(&self.time)
            .then(other.seq.cmp(&self.seq))
    }
}

struct Completion {
    key: JobKey,
    attempt: u64,
    output: Result<String, String>,
}

struct PoolState {
    cfg: PoolConfig,
    work_dir: PathBuf,
    next_cluster: u64,
    jobs: BTreeMap<JobKey, Job>,
    nodes: Vec<Node>,
    events: BinaryHeap<Scheduled>,
    seq: u64,
    now: f64,
    /// Real mode: the clock starts at the first submission.
    epoch: Option<Instant>,
    log: Vec<LogEntry>,
    starts: Vec<StartRecord>,
    cluster_submit_s: BTreeMap<ClusterId, f64>,
}

/// Handle to a pool. Clones share the same pool.
#[derive(Clone)]
pub struct Pool {
    state: Arc<Mutex<PoolState>>,
    workers: Option<Arc<rayon::ThreadPool>>,
    done_tx: Sender<Completion>,
    done_rx: Arc<Mutex<Receiver<Completion>>>,
}

impl Pool {
    /// Creates a pool working in `work_dir`, where output files and the
    /// `log` file are written.
    pub fn new(cfg: PoolConfig, work_dir: impl Into<PathBuf>) -> Result<Pool, PoolError> {
        cfg.validate()?;
        let work_dir = work_dir.into();
        let mut nodes: Vec<Node> = (0..cfg.node_count)
            .map(|_| Node {
                cpu_pct: 0.0,
                last_input_s: f64::NEG_INFINITY,
                busy: false,
                offline: false,
                generation: 0,
                slots: vec![None; cfg.slots_per_node],
            })
            .collect();
        for &(node, pct) in &cfg.fault_plan.cpu_load {
            nodes[node - 1].cpu_pct = pct;
        }
        let workers = match cfg.mode {
            PoolMode::Real => Some(Arc::new(
                rayon::ThreadPoolBuilder::new()
                    .num_threads(cfg.total_slots())
                    .build()
                    .map_err(|e| PoolError::InvalidConfig(e.to_string()))?,
            )),
            PoolMode::Simulated => None,
        };
        let mut state = PoolState {
            cfg,
            work_dir,
            next_cluster: 1,
            jobs: BTreeMap::new(),
            nodes,
            events: BinaryHeap::new(),
            seq: 0,
            now: 0.0,
            epoch: None,
            log: Vec::new(),
            starts: Vec::new(),
            cluster_submit_s: BTreeMap::new(),
        };
        let plan = state.cfg.fault_plan.clone();
        for (node, t) in plan.node_restarts {
            state.push(t, Event::Restart { node });
        }
        for (node, start, end) in plan.busy_periods {
            state.push(start, Event::BusyStart { node });
            state.push(end, Event::BusyEnd { node });
        }
        let (done_tx, done_rx) = mpsc::channel();
        Ok(Pool {
            state: Arc::new(Mutex::new(state)),
            workers,
            done_tx,
            done_rx: Arc::new(Mutex::new(done_rx)),
        })
    }

    fn lock(&self) -> MutexGuard<'_, PoolState> {
        self.state.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn config(&self) -> PoolConfig {
        self.lock().cfg.clone()
    }

    pub fn total_slots(&self) -> usize {
        self.lock().cfg.total_slots()
    }

    pub fn work_dir(&self) -> PathBuf {
        self.lock().work_dir.clone()
    }

    /// Current pool time in seconds.
    pub fn now(&self) -> f64 {
        let mut st = self.lock();
        st.sync_clock();
        st.now
    }

    /// Queues one job per stanza entry, pre-creating every output file
    /// empty.
    pub fn submit(&self, desc: &SubmitDescription) -> Result<(ClusterId, usize), PoolError> {
        resolve_executable(&desc.executable)
            .map_err(|e| PoolError::SubmitRejected(format!("{}: {e}", desc.executable)))?;
        let mut st = self.lock();
        if st.cfg.mode == PoolMode::Real && st.epoch.is_none() {
            st.epoch = Some(Instant::now());
        } else {
            st.sync_clock();
        }
        let cluster = ClusterId(st.next_cluster);
        st.next_cluster += 1;
        let now = st.now;
        st.cluster_submit_s.insert(cluster, now);
        let faults = st.cfg.fault_plan.hold_faults.clone();
        let args: Vec<String> = desc.job_arguments().map(str::to_string).collect();
        for (proc, arguments) in args.into_iter().enumerate() {
            let proc = proc as u32;
            let output_path = st.work_dir.join(desc.output_name(proc));
            fs::write(&output_path, "").map_err(io_err(&output_path))?;
            let causes = faults.iter().filter(|(p, _)| *p == proc).map(|(_, c)| *c);
            let mut transient_pending = false;
            for cause in causes {
                match cause {
                    HoldCause::Transient => transient_pending = true,
                    HoldCause::OutputNotWritable => {
                        let mut perms = fs::metadata(&output_path)
                            .map_err(io_err(&output_path))?
                            .permissions();
                        perms.set_readonly(true);
                        fs::set_permissions(&output_path, perms).map_err(io_err(&output_path))?;
                    }
                }
            }
            st.jobs.insert(
                (cluster, proc),
                Job {
                    record: JobRecord {
                        cluster,
                        proc,
                        state: JobState::Idle,
                        hold_reason: None,
                        arguments,
                        output_path,
                        submitted_s: now,
                        started_s: None,
                        finished_s: None,
                        node: None,
                    },
                    executable: desc.executable.clone(),
                    attempt: 0,
                    slot: None,
                    transient_pending,
                },
            );
            st.log_job(cluster, proc, JobEvent::Submitted)?;
        }
        Ok((cluster, desc.job_count()))
    }

    pub fn query(&self) -> QueueSnapshot {
        let st = self.lock();
        QueueSnapshot::from_jobs(st.jobs.values().map(|j| j.record.clone()).collect())
    }

    /// Returns every held job of `cluster` to the idle queue.
    pub fn release(&self, cluster: ClusterId) -> Result<usize, PoolError> {
        let mut st = self.lock();
        st.sync_clock();
        st.check_cluster(cluster)?;
        let held: Vec<JobKey> = st
            .jobs
            .range((cluster, 0)..=(cluster, u32::MAX))
            .filter(|(_, j)| j.record.state == JobState::Held)
            .map(|(k, _)| *k)
            .collect();
        for key in &held {
            st.set_state(*key, JobState::Idle);
            st.jobs.get_mut(key).expect("held job").record.hold_reason = None;
            st.log_job(key.0, key.1, JobEvent::Released)?;
        }
        Ok(held.len())
    }

    /// Removes the non-terminal jobs of `cluster`, or only `proc` if given.
    pub fn remove(&self, cluster: ClusterId, proc: Option<u32>) -> Result<usize, PoolError> {
        let mut st = self.lock();
        st.sync_clock();
        st.check_cluster(cluster)?;
        let targets: Vec<JobKey> = st
            .jobs
            .range((cluster, 0)..=(cluster, u32::MAX))
            .filter(|(k, j)| proc.is_none_or(|p| k.1 == p) && !j.record.state.is_terminal())
            .map(|(k, _)| *k)
            .collect();
        for key in &targets {
            st.vacate(*key);
            st.set_state(*key, JobState::Removed);
            st.log_job(key.0, key.1, JobEvent::Removed)?;
        }
        Ok(targets.len())
    }

    pub fn pool_status(&self) -> Vec<NodeStatus> {
        let st = self.lock();
        st.nodes
            .iter()
            .enumerate()
            .map(|(i, n)| NodeStatus {
                id: i + 1,
                state: if n.offline {
                    NodeState::Offline
                } else if n.busy {
                    NodeState::Busy
                } else if n.running() > 0 {
                    NodeState::Claimed
                } else {
                    NodeState::Unclaimed
                },
                cpu_pct: n.cpu_pct,
                last_input_event_s: n.last_input_s,
                running: n.running(),
                slots: n.slots.len(),
            })
            .collect()
    }

    /// Restarts nodes now: their running jobs go back to the idle queue and
    /// the nodes rejoin after the configured delay.
    pub fn restart_nodes(&self, ids: &[usize]) -> Result<(), PoolError> {
        let mut st = self.lock();
        st.sync_clock();
        if let Some(&bad) = ids.iter().find(|&&id| id == 0 || id > st.nodes.len()) {
            return Err(PoolError::UnknownNode(bad));
        }
        for &id in ids {
            st.restart(id)?;
        }
        Ok(())
    }

    /// True when idle jobs wait but nothing is running and no pending
    /// event can change that.
    pub fn is_stalled(&self) -> bool {
        let st = self.lock();
        let can_start = (0..st.nodes.len())
            .any(|i| st.eligible(i) && st.nodes[i].slots.iter().any(Option::is_none));
        st.count(JobState::Idle) > 0
            && st.count(JobState::Running) == 0
            && st.events.is_empty()
            && !can_start
    }

    pub fn log_entries(&self) -> Vec<LogEntry> {
        self.lock().log.clone()
    }

    pub fn start_trace(&self) -> Vec<StartRecord> {
        self.lock().starts.clone()
    }

    /// Pool time at which `cluster` was submitted.
    pub fn submit_time(&self, cluster: ClusterId) -> Option<f64> {
        self.lock().cluster_submit_s.get(&cluster).copied()
    }

    /// Runs the pool until `until` holds and returns the pool time that
    /// passed.
    pub fn advance(&self, until: Until) -> Result<f64, PoolError> {
        let mode = self.lock().cfg.mode;
        match mode {
            PoolMode::Simulated => self.advance_simulated(until),
            PoolMode::Real => self.advance_real(until),
        }
    }

    fn advance_simulated(&self, until: Until) -> Result<f64, PoolError> {
        let mut st = self.lock();
        let start = st.now;
        loop {
            let now = st.now;
            let mut due = Vec::new();
            while st.events.peek().is_some_and(|e| e.time <= now) {
                due.push(st.events.pop().expect("peeked").event);
            }
            st.process_batch(due)?;
            st.schedule()?;
            if until == Until::Quiescent && st.is_quiescent() {
                break;
            }
            match (st.events.peek().map(|e| e.time), until) {
                (Some(t), Until::Time(limit)) if t > limit => {
                    st.now = st.now.max(limit);
                    break;
                }
                (None, Until::Time(limit)) => {
                    st.now = st.now.max(limit);
                    break;
                }
                (None, Until::Quiescent) => {
                    return Err(PoolError::Stalled {
                        idle: st.count(JobState::Idle),
                    });
                }
                (Some(t), _) => st.now = st.now.max(t),
            }
        }
        Ok(st.now - start)
    }

    fn advance_real(&self, until: Until) -> Result<f64, PoolError> {
        let rx = self.done_rx.lock().unwrap_or_else(|e| e.into_inner());
        let start = self.now();
        loop {
            let wait = {
                let mut st = self.lock();
                st.sync_clock();
                let now = st.now;
                let mut due = Vec::new();
                while st.events.peek().is_some_and(|e| e.time <= now) {
                    due.push(st.events.pop().expect("peeked").event);
                }
                st.process_batch(due)?;
                while let Ok(done) = rx.try_recv() {
                    st.complete(done.key, done.attempt, done.output)?;
                }
                let started = st.schedule()?;
                self.dispatch(&st, started);
                let limit = match until {
                    Until::Quiescent if st.is_quiescent() => break,
                    Until::Time(t) if now >= t => break,
                    Until::Quiescent => f64::INFINITY,
                    Until::Time(t) => t,
                };
                let next_event = st.events.peek().map_or(f64::INFINITY, |e| e.time);
                if until == Until::Quiescent
                    && st.count(JobState::Running) == 0
                    && next_event.is_infinite()
                {
                    return Err(PoolError::Stalled {
                        idle: st.count(JobState::Idle),
                    });
                }
                (next_event.min(limit) - now).clamp(0.0, st.cfg.poll_granularity_s)
            };
            match rx.recv_timeout(Duration::from_secs_f64(wait)) {
                Ok(done) => {
                    let mut st = self.lock();
                    st.sync_clock();
                    st.complete(done.key, done.attempt, done.output)?;
                }
                Err(RecvTimeoutError::Timeout) => {}
                Err(RecvTimeoutError::Disconnected) => unreachable!("pool holds a sender"),
            }
        }
        Ok(self.now() - start)
    }

    /// Hands newly started jobs to the worker threads.
    fn dispatch(&self, st: &PoolState, started: Vec<JobKey>) {
        let Some(workers) = &self.workers else { return };
        for key in started {
            let job = &st.jobs[&key];
            let exe = job.executable.clone();
            let args = job.record.arguments.clone();
            let submitted = job.record.submitted_s;
            let attempt = job.attempt;
            let tx = self.done_tx.clone();
            workers.spawn(move || {
                let output = run_job(&exe, &args, submitted).map_err(|e| e.to_string());
                let _ = tx.send(Completion {
                    key,
                    attempt,
                    output,
                });
            });
        }
    }
}

impl PoolState {
    fn push(&mut self, time: f64, event: Event) {
        self.seq += 1;
        self.events.push(Scheduled {
            time,
            seq: self.seq,
            event,
        });
    }

    fn sync_clock(&mut self) {
        if let Some(epoch) = self.epoch {
            self.now = self.now.max(epoch.elapsed().as_secs_f64());
        }
    }

    fn check_cluster(&self, cluster: ClusterId) -> Result<(), PoolError> {
        if self.cluster_submit_s.contains_key(&cluster) {
            Ok(())
        } else {
            Err(PoolError::UnknownCluster(cluster))
        }
    }

    fn count(&self, state: JobState) -> usize {
        self.jobs
            .values()
            .filter(|j| j.record.state == state)
            .count()
    }

    fn is_quiescent(&self) -> bool {
        !self
            .jobs
            .values()
            .any(|j| matches!(j.record.state, JobState::Idle | JobState::Running))
    }

    fn append_log(&mut self, entry: LogEntry) -> Result<(), PoolError> {
        let path = self.work_dir.join(LOG_NAME);
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(io_err(&path))?;
        writeln!(f, "{entry}").map_err(io_err(&path))?;
        self.log.push(entry);
        Ok(())
    }

    fn log_job(&mut self, cluster: ClusterId, proc: u32, event: JobEvent) -> Result<(), PoolError> {
        let time_s = self.now;
        self.append_log(LogEntry::Job {
            time_s,
            cluster,
            proc,
            event,
        })
    }

    fn log_node(&mut self, node: usize, event: NodeEvent) -> Result<(), PoolError> {
        let time_s = self.now;
        self.append_log(LogEntry::Node {
            time_s,
            node,
            event,
        })
    }

    fn set_state(&mut self, key: JobKey, next: JobState) {
        let job = self.jobs.get_mut(&key).expect("known job");
        assert!(
            job.record.state.can_transition_to(next),
            "illegal transition {} -> {next} for {}.{}",
            job.record.state,
            key.0,
            key.1
        );
        job.record.state = next;
    }

    /// Frees the job's slot and invalidates its current run.
    fn vacate(&mut self, key: JobKey) {
        let job = self.jobs.get_mut(&key).expect("known job");
        if let Some((node, slot)) = job.slot.take() {
            self.nodes[node].slots[slot] = None;
        }
        job.record.node = None;
        job.attempt += 1;
    }

    fn preempt_node(&mut self, node: usize) -> Result<(), PoolError> {
        let keys: Vec<JobKey> = self.nodes[node].slots.iter().flatten().copied().collect();
        for key in keys {
            self.vacate(key);
            self.set_state(key, JobState::Idle);
            self.log_job(key.0, key.1, JobEvent::Preempted)?;
        }
        Ok(())
    }

    fn restart(&mut self, id: usize) -> Result<(), PoolError> {
        let node = id - 1;
        self.preempt_node(node)?;
        let n = &mut self.nodes[node];
        n.offline = true;
        n.generation += 1;
        let generation = n.generation;
        self.log_node(id, NodeEvent::Restarted)?;
        let back = self.now + self.cfg.restart_delay_s;
        self.push(back, Event::NodeBack { node, generation });
        Ok(())
    }

    fn eligible(&self, node: usize) -> bool {
        let n = &self.nodes[node];
        !n.offline
            && !n.busy
            && n.cpu_pct < self.cfg.cpu_threshold_pct
            && self.now - n.last_input_s >= self.cfg.required_idle_minutes * 60.0
    }

    /// Matches idle jobs, in (cluster, proc) order, to free slots on
    /// eligible nodes. Returns the jobs started.
    fn schedule(&mut self) -> Result<Vec<JobKey>, PoolError> {
        let mut free: Vec<(usize, usize)> = Vec::new();
        for (i, n) in self.nodes.iter().enumerate() {
            if self.eligible(i) {
                free.extend(
                    n.slots
                        .iter()
                        .enumerate()
                        .filter(|(_, s)| s.is_none())
                        .map(|(s, _)| (i, s)),
                );
            }
        }
        let idle: Vec<JobKey> = self
            .jobs
            .iter()
            .filter(|(_, j)| j.record.state == JobState::Idle)
            .map(|(k, _)| *k)
            .take(free.len())
            .collect();
        let mut started = Vec::with_capacity(idle.len());
        for (key, (node, slot)) in idle.into_iter().zip(free) {
            self.set_state(key, JobState::Running);
            self.nodes[node].slots[slot] = Some(key);
            let now = self.now;
            let job = self.jobs.get_mut(&key).expect("idle job");
            job.slot = Some((node, slot));
            job.record.node = Some(node + 1);
            job.record.started_s = Some(now);
            let attempt = job.attempt;
            let n = &self.nodes[node];
            self.starts.push(StartRecord {
                time_s: now,
                cluster: key.0,
                proc: key.1,
                node: node + 1,
                cpu_pct: n.cpu_pct,
                input_idle_s: now - n.last_input_s,
            });
            self.log_job(key.0, key.1, JobEvent::Started)?;
            if self.cfg.mode == PoolMode::Simulated {
                let finish = now + self.cfg.sim_job_duration_s;
                self.push(finish, Event::JobFinish { key, attempt });
            }
            started.push(key);
        }
        Ok(started)
    }

    /// Applies events that fall due at the current time. Simulated job
    /// outputs are computed in parallel first.
    fn process_batch(&mut self, batch: Vec<Event>) -> Result<(), PoolError> {
        let finishing: Vec<((JobKey, u64), String, String, f64)> = batch
            .iter()
            .filter_map(|e| match e {
                Event::JobFinish { key, attempt } => {
                    let job = &self.jobs[key];
                    (job.attempt == *attempt).then(|| {
                        (
                            (*key, *attempt),
                            job.executable.clone(),
                            job.record.arguments.clone(),
                            job.record.submitted_s,
                        )
                    })
                }
                _ => None,
            })
            .collect();
        let mut outputs: BTreeMap<(JobKey, u64), Result<String, String>> = finishing
            .into_par_iter()
            .map(|(key, exe, args, submitted)| {
                (
                    key,
                    run_job(&exe, &args, submitted).map_err(|e| e.to_string()),
                )
            })
            .collect();

        for event in batch {
            match event {
                Event::JobFinish { key, attempt } => {
                    if let Some(output) = outputs.remove(&(key, attempt)) {
                        self.complete(key, attempt, output)?;
                    }
                }
                Event::BusyStart { node } => {
                    let i = node - 1;
                    self.preempt_node(i)?;
                    let now = self.now;
                    let n = &mut self.nodes[i];
                    n.busy = true;
                    n.last_input_s = now;
                    self.log_node(node, NodeEvent::Busy)?;
                }
                Event::BusyEnd { node } => {
                    let i = node - 1;
                    let now = self.now;
                    let n = &mut self.nodes[i];
                    n.busy = false;
                    n.last_input_s = now;
                    self.log_node(node, NodeEvent::Unclaimed)?;
                    let wake = now + self.cfg.required_idle_minutes * 60.0;
                    self.push(wake, Event::Wake);
                }
                Event::Restart { node } => self.restart(node)?,
                Event::NodeBack { node, generation } => {
                    if self.nodes[node].generation == generation {
                        self.nodes[node].offline = false;
                        self.log_node(node + 1, NodeEvent::Unclaimed)?;
                    }
                }
                Event::Wake => {}
            }
        }
        Ok(())
    }

    /// Finishes one run: holds the job or writes its output atomically.
    fn complete(
        &mut self,
        key: JobKey,
        attempt: u64,
        output: Result<String, String>,
    ) -> Result<(), PoolError> {
        let Some(job) = self.jobs.get(&key) else {
            return Ok(());
        };
        if job.attempt != attempt || job.record.state != JobState::Running {
            return Ok(());
        }
        let path = job.record.output_path.clone();
        let readonly = fs::metadata(&path).is_ok_and(|m| m.permissions().readonly());
        let hold = if job.transient_pending {
            Some(HOLD_REASON_TRANSIENT.to_string())
        } else if readonly {
            Some(HOLD_REASON_UNWRITABLE.to_string())
        } else {
            output.as_ref().err().map(|e| format!("job failed: {e}"))
        };
        self.vacate(key);
        if let Some(reason) = hold {
            self.set_state(key, JobState::Held);
            let job = self.jobs.get_mut(&key).expect("known job");
            job.transient_pending = false;
            job.record.hold_reason = Some(reason.clone());
            return self.log_job(key.0, key.1, JobEvent::Held(reason));
        }
        write_atomic(&path, output.as_deref().expect("checked above"))?;
        self.set_state(key, JobState::Completed);
        let now = self.now;
        self.jobs
            .get_mut(&key)
            .expect("known job")
            .record
            .finished_s = Some(now);
        self.log_job(key.0, key.1, JobEvent::Completed)
    }
}

/// Writes through a hidden temp file and a rename so readers never see a
/// partial file.
fn write_atomic(path: &Path, contents: &str) -> Result<(), PoolError> {
    let name = path.file_name().map(|n| n.to_string_lossy().into_owned());
    let tmp = path.with_file_name(format!(".{}.tmp", name.unwrap_or_default()));
    fs::write(&tmp, contents).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}
