//! Scheduler properties on the virtual clock.

mod common;

use common::uniform_jobs;
use crushpool::pool::log::{count_job_events, count_waves, JobEvent};
use crushpool::pool::{FaultPlan, HoldCause, JobState, Pool, PoolConfig, PoolMode, Until};
use proptest::prelude::*;

const EXE: &str = "xorshift64star@5";

fn pool(dir: &std::path::Path, slots: usize, duration: f64, plan: FaultPlan) -> Pool {
    let mut cfg = PoolConfig::simulated(duration).with_total_slots(slots);
    cfg.fault_plan = plan;
    cfg.restart_delay_s = 45.0;
    Pool::new(cfg, dir).unwrap()
}

fn fault_plan(nodes: usize) -> impl Strategy<Value = FaultPlan> {
    let node = 1..=nodes;
    (
        prop::collection::vec((0u32..40, prop::bool::ANY), 0..4),
        prop::collection::vec((node.clone(), 0.0f64..600.0), 0..3),
        prop::collection::vec((node.clone(), 0.0f64..600.0, 1.0f64..400.0), 0..3),
        prop::collection::vec((node, 0.0f64..10.0), 0..3),
    )
        .prop_map(|(holds, restarts, busy, load)| FaultPlan {
            hold_faults: holds
                .into_iter()
                .map(|(p, t)| {
                    let cause = if t {
                        HoldCause::Transient
                    } else {
                        HoldCause::OutputNotWritable
                    };
                    (p, cause)
                })
                .collect(),
            node_restarts: restarts,
            busy_periods: busy
                .into_iter()
                .map(|(n, s, len)| (n, s, s + len))
                .collect(),
            cpu_load: load,
        })
}

/// Polls like the orchestrator: release held jobs after repairing outputs.
fn drive_to_completion(pool: &Pool, dir: &std::path::Path, check: impl Fn(&Pool)) {
    let mut polls = 0;
    while pool.query().completed + pool.query().removed < pool.query().total {
        check(pool);
        if pool.query().held > 0 {
            crushpool::orchestrator::repair_output_permissions(dir).unwrap();
            pool.release(crushpool::submitfile::ClusterId(1)).unwrap();
        }
        if pool.is_stalled() {
            return;
        }
        pool.advance(Until::Time(pool.now() + 12.0)).unwrap();
        polls += 1;
        assert!(polls < 10_000, "run did not finish");
    }
    check(pool);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn makespan_is_waves_times_duration(jobs in 1usize..120, slots in 1usize..90, d in 1u32..600) {
        let dir = tempfile::tempdir().unwrap();
        let p = pool(dir.path(), slots, d as f64, FaultPlan::default());
        let (cluster, _) = p.submit(&uniform_jobs(EXE, jobs)).unwrap();
        let elapsed = p.advance(Until::Quiescent).unwrap();
        let waves = jobs.div_ceil(slots);
        prop_assert_eq!(elapsed, waves as f64 * d as f64);
        prop_assert_eq!(count_waves(&p.log_entries(), cluster), waves);
        prop_assert_eq!(p.query().completed, jobs);
    }

    #[test]
    fn queue_and_slots_conserved_under_faults(
        jobs in 1usize..60,
        slots in prop::sample::select(vec![8usize, 16, 24, 5, 12]),
        plan in fault_plan(3),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let nodes = PoolConfig::default().with_total_slots(slots).node_count;
        let mut plan = plan;
        plan.node_restarts.retain(|(n, _)| *n <= nodes);
        plan.busy_periods.retain(|(n, _, _)| *n <= nodes);
        plan.cpu_load.retain(|(n, _)| *n <= nodes);
        let p = pool(dir.path(), slots, 60.0, plan);
        p.submit(&uniform_jobs(EXE, jobs)).unwrap();
        let total_slots = p.total_slots();
        drive_to_completion(&p, dir.path(), |p| {
            let q = p.query();
            assert!(q.is_conserved());
            assert!(q.running <= total_slots);
            for n in p.pool_status() {
                assert!(n.running <= n.slots);
            }
        });
        for s in p.start_trace() {
            prop_assert!(s.cpu_pct < 3.0, "started on loaded node {:?}", s);
            prop_assert!(s.input_idle_s >= 900.0, "started on recently used node {:?}", s);
        }
    }

    #[test]
    fn transient_holds_always_finish(jobs in 1usize..40, holds in prop::collection::vec(0u32..40, 0..6)) {
        let dir = tempfile::tempdir().unwrap();
        let plan = FaultPlan {
            hold_faults: holds.iter().map(|&p| (p, HoldCause::Transient)).collect(),
            ..Default::default()
        };
        let p = pool(dir.path(), 16, 60.0, plan);
        p.submit(&uniform_jobs(EXE, jobs)).unwrap();
        drive_to_completion(&p, dir.path(), |_| {});
        prop_assert_eq!(p.query().completed, jobs);
        let mut distinct: Vec<u32> = holds.into_iter().filter(|&h| (h as usize) < jobs).collect();
        distinct.sort();
        distinct.dedup();
        let held = count_job_events(&p.log_entries(), |e| matches!(e, JobEvent::Held(_)));
        prop_assert_eq!(held, distinct.len());
    }
}

#[test]
fn unrepaired_output_is_held_again() {
    let dir = tempfile::tempdir().unwrap();
    let plan = FaultPlan {
        hold_faults: vec![(0, HoldCause::OutputNotWritable)],
        ..Default::default()
    };
    let p = pool(dir.path(), 8, 60.0, plan);
    let (c, _) = p.submit(&uniform_jobs(EXE, 1)).unwrap();
    p.advance(Until::Quiescent).unwrap();
    assert_eq!(p.query().jobs[0].state, JobState::Held);
    assert_eq!(p.release(c).unwrap(), 1);
    p.advance(Until::Quiescent).unwrap();
    let q = p.query();
    assert_eq!(q.jobs[0].state, JobState::Held);
    assert_eq!(
        q.jobs[0].hold_reason.as_deref(),
        Some("output not writable")
    );
    let held = count_job_events(&p.log_entries(), |e| matches!(e, JobEvent::Held(_)));
    assert_eq!(held, 2);
}

#[test]
fn restart_of_loaded_node_requeues_eight() {
    let dir = tempfile::tempdir().unwrap();
    let p = pool(dir.path(), 16, 60.0, FaultPlan::default());
    p.submit(&uniform_jobs(EXE, 16)).unwrap();
    p.advance(Until::Time(30.0)).unwrap();
    assert_eq!(p.pool_status()[0].running, 8);
    p.restart_nodes(&[1]).unwrap();
    let q = p.query();
    assert_eq!((q.idle, q.running), (8, 8));
    let preempted = count_job_events(&p.log_entries(), |e| *e == JobEvent::Preempted);
    assert_eq!(preempted, 8);
    p.advance(Until::Quiescent).unwrap();
    assert_eq!(p.query().completed, 16);
}

#[test]
fn restart_of_idle_node_moves_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let p = pool(dir.path(), 16, 60.0, FaultPlan::default());
    p.submit(&uniform_jobs(EXE, 4)).unwrap();
    p.advance(Until::Time(1.0)).unwrap();
    p.restart_nodes(&[2]).unwrap();
    assert_eq!(p.query().running, 4);
}

#[test]
fn remove_mid_run_and_single_proc() {
    let dir = tempfile::tempdir().unwrap();
    let p = pool(dir.path(), 8, 60.0, FaultPlan::default());
    let (c, _) = p.submit(&uniform_jobs(EXE, 20)).unwrap();
    assert_eq!(p.remove(c, Some(5)).unwrap(), 1);
    p.advance(Until::Time(70.0)).unwrap();
    let removed = p.remove(c, None).unwrap();
    let q = p.query();
    assert_eq!(q.completed + removed + 1, 20);
    assert_eq!(q.removed, removed + 1);
    assert_eq!(p.advance(Until::Quiescent).unwrap(), 0.0);
}

#[test]
fn real_and_simulated_outputs_agree() {
    let sim = tempfile::tempdir().unwrap();
    let real = tempfile::tempdir().unwrap();
    let desc = crushpool::submitfile::SubmitDescription::for_battery(
        "minstd@77",
        crushpool::battery::BatteryKind::SmallCrush,
    );
    let a = pool(sim.path(), 8, 60.0, FaultPlan::default());
    a.submit(&desc).unwrap();
    a.advance(Until::Quiescent).unwrap();
    let cfg = PoolConfig {
        mode: PoolMode::Real,
        ..PoolConfig::default().with_total_slots(4)
    };
    let b = Pool::new(cfg, real.path()).unwrap();
    b.submit(&desc).unwrap();
    b.advance(Until::Quiescent).unwrap();
    for i in 0..11 {
        let name = format!("output.{i}");
        let x = std::fs::read(sim.path().join(&name)).unwrap();
        let y = std::fs::read(real.path().join(&name)).unwrap();
        assert!(!x.is_empty());
        assert_eq!(x, y, "{name}");
    }
}
