//! The three test batteries and the per-test entry point.
//!
//! A battery is an ordered list of [`TestSpec`]s indexed from 1. Each test
//! runs on its own generator instance built with the test index as the job
//! index, so a test computes the same outcome whether it runs alone on a pool
//! slot or inside [`run_sequential`].
//!
//! SmallCrush also accepts index 0: its job 0 carries the battery header and
//! runs the first test's parameters on the job-0 stream.

mod families;
pub mod pvalue;
mod table;

use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use thiserror::Error;

pub use families::{FamilyResult, TestFamily, TestParams, BITS_PER_WORD};
pub use pvalue::{p_value_chi_square, PValueError};

use crate::generators::{make_generator, GeneratorError, GeneratorSpec};

#[derive(Debug, Error)]
pub enum BatteryError {
    #[error(
        "unknown battery '{0}' (expected SmallCrush/smallcrush, Crush/crush or BigCrush/bigcrush)"
    )]
    UnknownBattery(String),
    #[error("test index {index} out of range {lo}..{hi} for {battery}")]
    IndexOutOfRange {
        battery: BatteryKind,
        index: u32,
        lo: u32,
        hi: u32,
    },
    #[error(transparent)]
    Generator(#[from] GeneratorError),
    #[error(transparent)]
    PValue(#[from] PValueError),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum BatteryKind {
    SmallCrush,
    Crush,
    BigCrush,
}

impl BatteryKind {
    pub const ALL: [BatteryKind; 3] = [
        BatteryKind::SmallCrush,
        BatteryKind::Crush,
        BatteryKind::BigCrush,
    ];

    pub fn test_count(self) -> u32 {
        match self {
            BatteryKind::SmallCrush => 10,
            BatteryKind::Crush => 96,
            BatteryKind::BigCrush => 106,
        }
    }

    /// Second argument of every job, selecting the battery in the runner.
    pub fn code(self) -> u32 {
        match self {
            BatteryKind::SmallCrush => 0,
            BatteryKind::Crush => 1,
            BatteryKind::BigCrush => 2,
        }
    }

    pub fn from_code(code: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|b| b.code() == code)
    }

    /// Jobs per submission: one per test plus job 0.
    pub fn job_count(self) -> u32 {
        self.test_count() + 1
    }

    /// Lowest test index [`run_single_test`] accepts.
    pub fn first_index(self) -> u32 {
        match self {
            BatteryKind::SmallCrush => 0,
            _ => 1,
        }
    }

    /// Word budget each test of this battery stays within.
    pub fn word_budget(self) -> u64 {
        (match self {
            BatteryKind::SmallCrush => table::SMALL_CRUSH_BUDGET,
            BatteryKind::Crush => table::CRUSH_BUDGET,
            BatteryKind::BigCrush => table::BIG_CRUSH_BUDGET,
        }) as u64
    }

    pub fn name(self) -> &'static str {
        match self {
            BatteryKind::SmallCrush => "SmallCrush",
            BatteryKind::Crush => "Crush",
            BatteryKind::BigCrush => "BigCrush",
        }
    }
}

impl fmt::Display for BatteryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BatteryKind {
    type Err = BatteryError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "SmallCrush" | "smallcrush" => Ok(BatteryKind::SmallCrush),
            "Crush" | "crush" => Ok(BatteryKind::Crush),
            "BigCrush" | "bigcrush" => Ok(BatteryKind::BigCrush),
            other => Err(BatteryError::UnknownBattery(other.to_string())),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TestSpec {
    pub index: u32,
    pub params: TestParams,
    pub name: String,
}

impl TestSpec {
    pub fn family(&self) -> TestFamily {
        self.params.family()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BatterySpec {
    pub kind: BatteryKind,
    /// Tests 1..=test_count in order.
    pub tests: Vec<TestSpec>,
}

impl BatterySpec {
    pub fn test_count(&self) -> u32 {
        self.kind.test_count()
    }

    pub fn job_count(&self) -> u32 {
        self.kind.job_count()
    }

    pub fn battery_code(&self) -> u32 {
        self.kind.code()
    }

    /// The test run by `index`; SmallCrush index 0 maps to test 1's
    /// parameters.
    pub fn test(&self, index: u32) -> Result<&TestSpec, BatteryError> {
        let lo = self.kind.first_index();
        let hi = self.kind.test_count();
        if index < lo || index > hi {
            return Err(BatteryError::IndexOutOfRange {
                battery: self.kind,
                index,
                lo,
                hi,
            });
        }
        Ok(&self.tests[index.max(1) as usize - 1])
    }
}

fn build_spec(kind: BatteryKind) -> BatterySpec {
    let params = match kind {
        BatteryKind::SmallCrush => table::small_crush(),
        BatteryKind::Crush => table::crush(),
        BatteryKind::BigCrush => table::big_crush(),
    };
    let tests = params
        .into_iter()
        .enumerate()
        .map(|(i, params)| TestSpec {
            index: i as u32 + 1,
            name: format!("{} {}", params.family(), params.describe()),
            params,
        })
        .collect();
    BatterySpec { kind, tests }
}

/// The frozen specification of `kind`.
pub fn spec_for(kind: BatteryKind) -> &'static BatterySpec {
    static SPECS: OnceLock<[BatterySpec; 3]> = OnceLock::new();
    let specs = SPECS.get_or_init(|| BatteryKind::ALL.map(build_spec));
    &specs[kind.code() as usize]
}

/// Looks a battery up by its makesub spelling.
pub fn battery_spec(name: &str) -> Result<&'static BatterySpec, BatteryError> {
    Ok(spec_for(name.parse()?))
}

/// Suspect below this p-value (or above one minus it).
pub const SUSPECT_THRESHOLD: f64 = 1e-3;
/// Fail below this p-value (or above one minus it).
pub const FAIL_THRESHOLD: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Verdict {
    Pass,
    Suspect,
    Fail,
}

impl Verdict {
    pub fn from_p_value(p: f64) -> Self {
        if !(FAIL_THRESHOLD..=1.0 - FAIL_THRESHOLD).contains(&p) {
            Verdict::Fail
        } else if !(SUSPECT_THRESHOLD..=1.0 - SUSPECT_THRESHOLD).contains(&p) {
            Verdict::Suspect
        } else {
            Verdict::Pass
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Verdict::Pass => "PASS",
            Verdict::Suspect => "SUSPECT",
            Verdict::Fail => "FAIL",
        }
    }
}

impl FromStr for Verdict {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "PASS" => Ok(Verdict::Pass),
            "SUSPECT" => Ok(Verdict::Suspect),
            "FAIL" => Ok(Verdict::Fail),
            _ => Err(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TestOutcome {
    pub index: u32,
    pub name: String,
    pub statistic: f64,
    pub p_value: f64,
    pub verdict: Verdict,
    pub samples_used: u64,
    /// Seed of the fresh instance the test ran on.
    pub effective_seed: u64,
}

/// Runs test `index` of `kind` on a fresh generator for that index.
pub fn run_single_test(
    kind: BatteryKind,
    index: u32,
    gen: &GeneratorSpec,
) -> Result<TestOutcome, BatteryError> {
    let test = spec_for(kind).test(index)?;
    let mut instance = make_generator(gen, index as u64)?;
    let result = test.params.run(&mut instance)?;
    Ok(TestOutcome {
        index,
        name: test.name.clone(),
        statistic: result.statistic,
        p_value: result.p_value,
        verdict: Verdict::from_p_value(result.p_value),
        samples_used: result.words_used,
        effective_seed: instance.effective_seed(),
    })
}

/// Runs tests 1..=test_count in order, each on its own fresh instance.
pub fn run_sequential(
    kind: BatteryKind,
    gen: &GeneratorSpec,
) -> Result<Vec<TestOutcome>, BatteryError> {
    (1..=kind.test_count())
        .map(|i| run_single_test(kind, i, gen))
        .collect()
}
