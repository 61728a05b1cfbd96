//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any failed.

mod common;

use std::fs;
use std::panic::{self, AssertUnwindSafe};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use common::{chi_square_sf_by_quadrature, ks_critical, ks_uniform, uniform_jobs};
use crushpool::battery::{
    p_value_chi_square, run_single_test, spec_for, BatteryKind, TestFamily, Verdict,
};
use crushpool::generators::GeneratorSpec;
use crushpool::monitor::check_outputs;
use crushpool::orchestrator::{run_master, verify_equivalence, RunConfig, RunReport};
use crushpool::pool::log::{count_job_events, count_waves, JobEvent};
use crushpool::pool::{HoldCause, Pool, PoolConfig, PoolMode, Until};
use crushpool::stitch::{parse_job_output, render_job_output, JobMeta};
use crushpool::submitfile::{generate_submit, parse_submit, SubmitDescription};
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn real_pool(slots: usize) -> PoolConfig {
    PoolConfig {
        mode: PoolMode::Real,
        poll_granularity_s: 0.01,
        ..PoolConfig::default().with_total_slots(slots)
    }
}

fn run_in_tempdir(
    gen: GeneratorSpec,
    battery: BatteryKind,
    pool: PoolConfig,
    poll: f64,
) -> Result<(RunConfig, RunReport, tempfile::TempDir), String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let cfg = RunConfig {
        work_dir: dir.path().to_path_buf(),
        poll_interval_s: poll,
        pool,
        ..RunConfig::new(gen, battery, dir.path().join("dest"))
    };
    let report = run_master(&cfg, &mut std::io::sink()).map_err(|e| e.to_string())?;
    Ok((cfg, report, dir))
}

fn c1_job_counts() -> Outcome {
    for (name, kind, n) in [
        ("smallcrush", BatteryKind::SmallCrush, 11),
        ("crush", BatteryKind::Crush, 97),
        ("bigcrush", BatteryKind::BigCrush, 107),
    ] {
        let desc = parse_submit(&generate_submit("t", name).unwrap()).unwrap();
        ensure(
            desc.stanzas.len() == n,
            format!("{name}: {} stanzas", desc.stanzas.len()),
        )?;
        let dir = tempfile::tempdir().unwrap();
        let status = check_outputs(dir.path(), kind).unwrap();
        ensure(
            status.expected == n as u32,
            format!("{name}: expects {}", status.expected),
        )?;
    }
    Ok("11/97/107 stanzas and expected files".into())
}

fn c2_batch_table() -> Outcome {
    let d = 60.0;
    let mut seen = Vec::new();
    for (slots, waves) in [(40, 3), (70, 2), (90, 2), (107, 1)] {
        let dir = tempfile::tempdir().unwrap();
        let pool = Pool::new(PoolConfig::simulated(d).with_total_slots(slots), dir.path())
            .map_err(|e| e.to_string())?;
        let (cluster, _) = pool.submit(&uniform_jobs("minstd@1", 107)).unwrap();
        let elapsed = pool.advance(Until::Quiescent).unwrap();
        let measured = count_waves(&pool.log_entries(), cluster);
        ensure(
            measured == waves && elapsed == waves as f64 * d,
            format!("{slots} slots: {measured} waves, makespan {elapsed}"),
        )?;
        seen.push(format!("{slots}->{measured}"));
    }
    Ok(format!("waves {}", seen.join(", ")))
}

fn c3_monitor_contract() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let kind = BatteryKind::Crush;
    for i in 0..97u32 {
        let body = if i % 3 == 0 { "" } else { "x" };
        fs::write(dir.path().join(format!("output.{i}")), body).unwrap();
    }
    let s = check_outputs(dir.path(), kind).unwrap();
    ensure(
        s.message == "64/97 files generated",
        format!("message {:?}", s.message),
    )?;
    ensure(s.exit_code() == 1, "incomplete must exit 1")?;
    for i in 0..97u32 {
        fs::write(dir.path().join(format!("output.{i}")), "x").unwrap();
    }
    let s = check_outputs(dir.path(), kind).unwrap();
    ensure(
        s.exit_code() == 0 && s.message.is_empty(),
        "complete must exit 0",
    )?;
    Ok("k/N message byte-exact, zero-byte files ignored".into())
}

fn c4_stitch_determinism() -> Outcome {
    let mut runs = Vec::new();
    for _ in 0..3 {
        let (cfg, _, _dir) = run_in_tempdir(
            GeneratorSpec::xorshift64star(2024),
            BatteryKind::SmallCrush,
            real_pool(8),
            0.05,
        )?;
        let results = fs::read(cfg.dest_dir.join("results.txt")).unwrap();
        let stats = fs::read(cfg.dest_dir.join("stats.txt")).unwrap();
        runs.push((results, stats));
    }
    ensure(
        runs[0] == runs[1] && runs[1] == runs[2],
        "results differ between runs",
    )?;
    Ok(format!("3 real runs identical ({} bytes)", runs[0].0.len()))
}

fn c5_equivalence() -> Outcome {
    let mut notes = Vec::new();
    for kind in BatteryKind::ALL {
        let (cfg, report, _dir) =
            run_in_tempdir(GeneratorSpec::minstd(99), kind, real_pool(72), 0.05)?;
        ensure(
            verify_equivalence(&cfg).map_err(|e| e.to_string())?,
            format!("{kind} differs from the sequential run"),
        )?;
        notes.push(format!("{kind} {:.1}s", report.wall_time_s));
    }
    Ok(notes.join(", "))
}

fn c6_hold_release() -> Outcome {
    let mut pool = real_pool(72);
    pool.fault_plan.hold_faults = vec![
        (3, HoldCause::Transient),
        (7, HoldCause::Transient),
        (11, HoldCause::OutputNotWritable),
    ];
    let gen = GeneratorSpec::xorshift64star(6);
    let (faulty, report, _d1) = run_in_tempdir(gen.clone(), BatteryKind::Crush, pool, 0.05)?;
    let (clean, _, _d2) = run_in_tempdir(gen, BatteryKind::Crush, real_pool(72), 0.05)?;
    let held = count_job_events(&report.log, |e| matches!(e, JobEvent::Held(_)));
    let released = count_job_events(&report.log, |e| *e == JobEvent::Released);
    ensure(
        held >= 3 && released >= 3,
        format!("{held} HELD, {released} RELEASED"),
    )?;
    for name in ["results.txt", "stats.txt"] {
        let a = fs::read(faulty.dest_dir.join(name)).unwrap();
        let b = fs::read(clean.dest_dir.join(name)).unwrap();
        ensure(a == b, format!("{name} differs from the no-fault run"))?;
    }
    Ok(format!("{held} HELD, {released} RELEASED, results match"))
}

fn c7_restart_all() -> Outcome {
    let mut pool = PoolConfig::simulated(60.0);
    pool.restart_delay_s = 45.0;
    pool.fault_plan.node_restarts = (1..=9).map(|n| (n, 30.0)).collect();
    let (cfg, report, _dir) =
        run_in_tempdir(GeneratorSpec::minstd(5), BatteryKind::Crush, pool, 12.0)?;
    let preempted = count_job_events(&report.log, |e| *e == JobEvent::Preempted);
    ensure(preempted > 0, "restart preempted nothing")?;
    ensure(
        verify_equivalence(&cfg).map_err(|e| e.to_string())?,
        "not equivalent",
    )?;
    Ok(format!(
        "{preempted} jobs requeued, complete at {:.0} s simulated",
        report.wall_time_s
    ))
}

/// First test of `family`, preferring SmallCrush.
fn representative(family: TestFamily) -> (BatteryKind, u32) {
    for kind in [BatteryKind::SmallCrush, BatteryKind::Crush] {
        if let Some(t) = spec_for(kind).tests.iter().find(|t| t.family() == family) {
            return (kind, t.index);
        }
    }
    unreachable!("every family is in Crush")
}

fn c8_statistical_validity() -> Outcome {
    for k in 1..=50u64 {
        for step in 0..=20 {
            let x = step as f64 * 5.0;
            let diff =
                (p_value_chi_square(x, k).unwrap() - chi_square_sf_by_quadrature(x, k)).abs();
            ensure(
                diff < 1e-6,
                format!("chi-square k={k} x={x} off by {diff:e}"),
            )?;
        }
    }

    let seeds = 200;
    let crit = ks_critical(seeds, 1e-3);
    let mut worst = 0.0f64;
    for family in TestFamily::ALL {
        let (kind, index) = representative(family);
        let ps: Vec<f64> = (0..seeds as u64)
            .map(|s| {
                let gen = GeneratorSpec::xorshift64star(s * 7919 + 1);
                run_single_test(kind, index, &gen).unwrap().p_value
            })
            .collect();
        let d = ks_uniform(ps);
        ensure(d < crit, format!("{family:?}: KS D={d:.4} >= {crit:.4}"))?;
        worst = worst.max(d);
    }

    let big = spec_for(BatteryKind::BigCrush);
    let mut flagged = 0;
    for t in &big.tests {
        let family = t.family();
        let targeted = matches!(
            family,
            TestFamily::BirthdaySpacings | TestFamily::SerialPairs
        );
        if targeted && t.params.dim().is_some_and(|d| d >= 3) {
            let p = run_single_test(BatteryKind::BigCrush, t.index, &GeneratorSpec::randu(12345))
                .unwrap()
                .p_value;
            ensure(p < 1e-6, format!("RANDU passes {} with p={p:e}", t.name))?;
            flagged += 1;
        }
    }
    for seed in 1..=20 {
        let o = run_single_test(BatteryKind::SmallCrush, 1, &GeneratorSpec::minstd(seed)).unwrap();
        ensure(
            o.verdict != Verdict::Fail,
            format!("minstd seed {seed} fails monobit"),
        )?;
    }
    Ok(format!(
        "max KS D={worst:.4} < {crit:.4}; RANDU p<1e-6 on {flagged} tests of dim >= 3"
    ))
}

fn c9_busy_ratio() -> Outcome {
    let (_, report, _dir) = run_in_tempdir(
        GeneratorSpec::minstd(3),
        BatteryKind::BigCrush,
        PoolConfig::simulated(60.0),
        12.0,
    )?;
    let ratio = report.submit_host_busy_s / report.wall_time_s;
    ensure(ratio < 0.01, format!("busy ratio {ratio:.4}"))?;
    Ok(format!(
        "busy {:.4} s / wall {:.0} s = {ratio:.5}",
        report.submit_host_busy_s, report.wall_time_s
    ))
}

fn quiet_config() -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(1000)
    }
}

fn c10_codec_round_trips() -> Outcome {
    let mut runner = TestRunner::new(quiet_config());
    let stanza = ("[a-z0-9 ]{0,12}", 1u32..4);
    let desc = (
        "[a-zA-Z0-9_./@-]{1,12}",
        prop::collection::vec(stanza, 0..20),
    );
    runner
        .run(&desc, |(exe, stanzas)| {
            let mut d = SubmitDescription::for_battery(&exe, BatteryKind::SmallCrush);
            d.stanzas = stanzas
                .into_iter()
                .map(|(a, q)| crushpool::submitfile::Stanza {
                    arguments: a.trim().to_string(),
                    queue_count: q,
                })
                .collect();
            let text = d.render();
            let back = parse_submit(&text).unwrap();
            prop_assert_eq!(&back, &d);
            prop_assert_eq!(back.render(), text);
            Ok(())
        })
        .map_err(|e| format!("submit codec: {e}"))?;

    let mut runner = TestRunner::new(quiet_config());
    let job = (0u32..107, 0.0f64..=1.0, 0.0f64..1e5, any::<u64>());
    runner
        .run(&job, |(proc, p, stat, seed)| {
            let kind = BatteryKind::ALL[proc as usize % 3];
            let outcome = crushpool::battery::TestOutcome {
                index: proc,
                name: format!("T{proc}"),
                statistic: stat,
                p_value: p,
                verdict: Verdict::from_p_value(p),
                samples_used: 64,
                effective_seed: seed,
            };
            let meta = JobMeta {
                battery: kind,
                proc,
                generator: "randu".into(),
                seed,
                started_s: 0.0,
            };
            let text = render_job_output(Some(&outcome), &meta);
            prop_assert_eq!(parse_job_output(&text).unwrap().render(), text);
            Ok(())
        })
        .map_err(|e| format!("job output codec: {e}"))?;
    Ok("2 x 1000 random cases".into())
}

fn main() -> ExitCode {
    let criteria: [Criterion; 10] = [
        ("job-count table", Duration::from_secs(1), c1_job_counts),
        ("batch table", Duration::from_secs(1), c2_batch_table),
        (
            "monitor contract",
            Duration::from_secs(1),
            c3_monitor_contract,
        ),
        (
            "stitch determinism",
            Duration::from_secs(30),
            c4_stitch_determinism,
        ),
        (
            "distributed/sequential equivalence",
            Duration::from_secs(300),
            c5_equivalence,
        ),
        (
            "hold-release path",
            Duration::from_secs(60),
            c6_hold_release,
        ),
        (
            "node restart resilience",
            Duration::from_secs(60),
            c7_restart_all,
        ),
        (
            "statistical validity",
            Duration::from_secs(600),
            c8_statistical_validity,
        ),
        (
            "submit-host busy ratio",
            Duration::from_secs(10),
            c9_busy_ratio,
        ),
        (
            "codec round-trips",
            Duration::from_secs(30),
            c10_codec_round_trips,
        ),
    ];
    panic::set_hook(Box::new(|_| {}));
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let result = panic::catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            Err(format!("panicked: {msg}"))
        });
        let took = start.elapsed();
        let result = match result {
            Ok(_) if took > limit => Err(format!("took {took:.2?}, limit {limit:?}")),
            other => other,
        };
        let (tag, detail) = match &result {
            Ok(d) => ("PASS", d.as_str()),
            Err(d) => ("FAIL", d.as_str()),
        };
        println!("criterion {:>2} {tag} {name}: {detail} ({took:.2?})", i + 1);
        failed += usize::from(result.is_err());
    }
    if failed == 0 {
        println!("acceptance: all 10 criteria passed");
        ExitCode::SUCCESS
    } else {
        println!("acceptance: {failed} criteria failed");
        ExitCode::FAILURE
    }
}
