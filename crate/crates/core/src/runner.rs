//! The per-job executable: `<executable> <test_index> <battery_code>`.
//!
//! The executable string names the generator under test (see
//! [`GeneratorSpec`]'s `Display`), and the two arguments select one test of
//! one battery, exactly as the generated submit file passes them.

use thiserror::Error;

use crate::battery::{run_single_test, BatteryError, BatteryKind};
use crate::generators::{make_generator, GeneratorError, GeneratorSpec};
use crate::stitch::{is_test_bearing, render_job_output, JobMeta};

#[derive(Debug, Error)]
pub enum RunnerError {
    #[error("bad job arguments '{0}' (expected '<test_index> <battery_code>')")]
    BadArguments(String),
    #[error("unknown battery code {0}")]
    UnknownBatteryCode(u32),
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    Battery(#[from] BatteryError),
}

/// Parsed job arguments.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct JobArgs {
    pub index: u32,
    pub battery: BatteryKind,
}

impl JobArgs {
    pub fn parse(arguments: &str) -> Result<Self, RunnerError> {
        let bad = || RunnerError::BadArguments(arguments.to_string());
        let mut it = arguments.split_whitespace();
        let index = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let code = it.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        if it.next().is_some() {
            return Err(bad());
        }
        let battery = BatteryKind::from_code(code).ok_or(RunnerError::UnknownBatteryCode(code))?;
        Ok(JobArgs { index, battery })
    }
}

/// Resolves an executable string and checks that it can run (byte-stream
/// files must exist and be non-empty).
pub fn resolve_executable(executable: &str) -> Result<GeneratorSpec, RunnerError> {
    let spec: GeneratorSpec = executable.parse()?;
    make_generator(&spec, 0)?;
    Ok(spec)
}

/// Renders the output document of one job for `generator`.
pub fn render_job(
    generator: &GeneratorSpec,
    args: JobArgs,
    started_s: f64,
) -> Result<String, RunnerError> {
    let meta = JobMeta {
        battery: args.battery,
        proc: args.index,
        generator: generator.name(),
        seed: generator.job_seed(args.index as u64),
        started_s,
    };
    if is_test_bearing(args.battery, args.index) {
        let outcome = run_single_test(args.battery, args.index, generator)?;
        Ok(render_job_output(Some(&outcome), &meta))
    } else if args.index == 0 {
        Ok(render_job_output(None, &meta))
    } else {
        // surfaces the battery's own range error
        run_single_test(args.battery, args.index, generator)?;
        unreachable!("index {} accepted but not test-bearing", args.index)
    }
}

/// Runs one job as the pool invokes it.
pub fn run_job(executable: &str, arguments: &str, started_s: f64) -> Result<String, RunnerError> {
    let generator: GeneratorSpec = executable.parse()?;
    render_job(&generator, JobArgs::parse(arguments)?, started_s)
}
