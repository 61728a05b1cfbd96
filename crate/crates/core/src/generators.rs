//! Pseudo-random word sources under test.
//!
//! Every generator emits 32-bit words. Instances are built per job with
//! [`make_generator`], which derives an effective seed from the base seed and
//! the job index so that each test gets its own fresh, reproducible stream.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;

use thiserror::Error;

/// Multiplier of the Park-Miller "minimal standard" generator.
pub const MINSTD_MULTIPLIER: u64 = 16807;
/// Modulus of the minimal standard generator, 2^31 - 1.
pub const MINSTD_MODULUS: u64 = (1 << 31) - 1;
/// Multiplier of IBM's RANDU.
pub const RANDU_MULTIPLIER: u64 = 65539;
/// Modulus of RANDU, 2^31.
pub const RANDU_MODULUS: u64 = 1 << 31;
/// Output multiplier of xorshift64*.
pub const XORSHIFT64STAR_MULTIPLIER: u64 = 2685821657736338717;
/// Golden-ratio increment used to spread job indices before mixing.
pub const JOB_INDEX_STRIDE: u64 = 0x9E37_79B9_7F4A_7C15;

#[derive(Debug, Error)]
pub enum GeneratorError {
    #[error("byte-stream file {path}: {reason}")]
    ByteStream { path: PathBuf, reason: String },
    #[error(
        "unknown generator '{0}' (expected minstd, randu, xorshift64star, zero or file:<path>)"
    )]
    UnknownName(String),
    #[error("invalid seed '{0}'")]
    InvalidSeed(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum GeneratorKind {
    Minstd,
    Randu,
    Xorshift64Star,
    ConstantZero,
    ByteStreamFile,
}

/// Which generator to test and how to seed it.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct GeneratorSpec {
    pub kind: GeneratorKind,
    /// Ignored for byte-stream files.
    pub seed: u64,
    /// Only meaningful for [`GeneratorKind::ByteStreamFile`].
    pub path: Option<PathBuf>,
}

impl GeneratorSpec {
    pub fn new(kind: GeneratorKind, seed: u64) -> Self {
        Self {
            kind,
            seed,
            path: None,
        }
    }

    pub fn minstd(seed: u64) -> Self {
        Self::new(GeneratorKind::Minstd, seed)
    }

    pub fn randu(seed: u64) -> Self {
        Self::new(GeneratorKind::Randu, seed)
    }

    pub fn xorshift64star(seed: u64) -> Self {
        Self::new(GeneratorKind::Xorshift64Star, seed)
    }

    pub fn zero() -> Self {
        Self::new(GeneratorKind::ConstantZero, 0)
    }

    pub fn byte_stream(path: impl Into<PathBuf>) -> Self {
        Self {
            kind: GeneratorKind::ByteStreamFile,
            seed: 0,
            path: Some(path.into()),
        }
    }

    /// Parses a CLI generator name (`minstd`, `randu`, `xorshift64star`,
    /// `zero`, `file:<path>`) and attaches `seed`.
    pub fn from_name(name: &str, seed: u64) -> Result<Self, GeneratorError> {
        if let Some(path) = name.strip_prefix("file:") {
            return Ok(Self::byte_stream(path));
        }
        let kind = match name {
            "minstd" => GeneratorKind::Minstd,
            "randu" => GeneratorKind::Randu,
            "xorshift64star" => GeneratorKind::Xorshift64Star,
            "zero" => GeneratorKind::ConstantZero,
            other => return Err(GeneratorError::UnknownName(other.to_string())),
        };
        Ok(Self::new(kind, seed))
    }

    /// Seed an instance for job `job_index` reports; 0 for streams
    /// without a seed.
    pub fn job_seed(&self, job_index: u64) -> u64 {
        match self.kind {
            GeneratorKind::ByteStreamFile | GeneratorKind::ConstantZero => 0,
            _ => effective_seed(self.seed, job_index),
        }
    }

    /// The CLI name without the seed.
    pub fn name(&self) -> String {
        match self.kind {
            GeneratorKind::Minstd => "minstd".into(),
            GeneratorKind::Randu => "randu".into(),
            GeneratorKind::Xorshift64Star => "xorshift64star".into(),
            GeneratorKind::ConstantZero => "zero".into(),
            GeneratorKind::ByteStreamFile => format!(
                "file:{}",
                self.path
                    .as_deref()
                    .unwrap_or_else(|| Path::new(""))
                    .display()
            ),
        }
    }
}

/// Executable form used in submit files: `<name>@<seed>` for built-in
/// generators and `file:<path>` for byte streams.
impl fmt::Display for GeneratorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GeneratorKind::ByteStreamFile => f.write_str(&self.name()),
            _ => write!(f, "{}@{}", self.name(), self.seed),
        }
    }
}

impl FromStr for GeneratorSpec {
    type Err = GeneratorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.starts_with("file:") {
            return Self::from_name(s, 0);
        }
        match s.rsplit_once('@') {
            Some((name, seed)) => {
                let seed = seed
                    .parse()
                    .map_err(|_| GeneratorError::InvalidSeed(seed.to_string()))?;
                Self::from_name(name, seed)
            }
            None => Self::from_name(s, 0),
        }
    }
}

/// SplitMix64 output finalizer.
pub fn splitmix64_finalize(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Effective seed of job `job_index` for base seed `seed`.
pub fn effective_seed(seed: u64, job_index: u64) -> u64 {
    splitmix64_finalize(seed ^ job_index.wrapping_mul(JOB_INDEX_STRIDE))
}

#[derive(Clone, Debug)]
enum State {
    Minstd(u64),
    Randu(u64),
    Xorshift64Star(u64),
    ConstantZero,
    ByteStream { bytes: Arc<[u8]>, pos: usize },
}

/// A single-owner generator stream.
#[derive(Clone, Debug)]
pub struct GeneratorInstance {
    spec: GeneratorSpec,
    effective_seed: u64,
    state: State,
}

/// Builds a fresh instance for job `job_index`.
pub fn make_generator(
    spec: &GeneratorSpec,
    job_index: u64,
) -> Result<GeneratorInstance, GeneratorError> {
    let seed = effective_seed(spec.seed, job_index);
    let state = match spec.kind {
        GeneratorKind::Minstd => State::Minstd(match seed % MINSTD_MODULUS {
            0 => 1,
            s => s,
        }),
        // RANDU is only defined on odd states; forcing the low bit also
        // maps zero to one.
        GeneratorKind::Randu => State::Randu((seed % RANDU_MODULUS) | 1),
        GeneratorKind::Xorshift64Star => State::Xorshift64Star(if seed == 0 { 1 } else { seed }),
        GeneratorKind::ConstantZero => State::ConstantZero,
        GeneratorKind::ByteStreamFile => {
            let path = spec.path.clone().unwrap_or_default();
            let bytes = std::fs::read(&path).map_err(|e| GeneratorError::ByteStream {
                path: path.clone(),
                reason: e.to_string(),
            })?;
            if bytes.is_empty() {
                return Err(GeneratorError::ByteStream {
                    path,
                    reason: "file is empty".into(),
                });
            }
            State::ByteStream {
                bytes: bytes.into(),
                pos: 0,
            }
        }
    };
    Ok(GeneratorInstance {
        spec: spec.clone(),
        effective_seed: spec.job_seed(job_index),
        state,
    })
}

impl GeneratorInstance {
    /// Instance of a linear congruential generator starting from a raw
    /// state, bypassing the seed mix.
    pub fn from_raw_state(kind: GeneratorKind, raw: u64) -> Self {
        let state = match kind {
            GeneratorKind::Minstd => State::Minstd(raw),
            GeneratorKind::Randu => State::Randu(raw),
            GeneratorKind::Xorshift64Star => State::Xorshift64Star(raw),
            _ => State::ConstantZero,
        };
        Self {
            spec: GeneratorSpec::new(kind, raw),
            effective_seed: raw,
            state,
        }
    }

    pub fn spec(&self) -> &GeneratorSpec {
        &self.spec
    }

    /// Seed after the per-job mix (0 for streams that have no seed).
    pub fn effective_seed(&self) -> u64 {
        self.effective_seed
    }

    /// The raw internal state of LCG and xorshift generators.
    pub fn raw_state(&self) -> Option<u64> {
        match self.state {
            State::Minstd(s) | State::Randu(s) | State::Xorshift64Star(s) => Some(s),
            _ => None,
        }
    }

    pub fn next_word(&mut self) -> u32 {
        match &mut self.state {
            State::Minstd(s) => {
                *s = *s * MINSTD_MULTIPLIER % MINSTD_MODULUS;
                (*s << 1) as u32
            }
            State::Randu(s) => {
                *s = s.wrapping_mul(RANDU_MULTIPLIER) % RANDU_MODULUS;
                (*s << 1) as u32
            }
            State::Xorshift64Star(s) => {
                let mut x = *s;
                x ^= x >> 12;
                x ^= x << 25;
                x ^= x >> 27;
                *s = x;
                (x.wrapping_mul(XORSHIFT64STAR_MULTIPLIER) >> 32) as u32
            }
            State::ConstantZero => 0,
            State::ByteStream { bytes, pos } => {
                let mut word = [0u8; 4];
                for b in &mut word {
                    *b = bytes[*pos];
                    *pos = (*pos + 1) % bytes.len();
                }
                u32::from_le_bytes(word)
            }
        }
    }

    /// Returns the next `n` words, advancing the state by exactly `n` steps.
    pub fn next_words(&mut self, n: usize) -> Vec<u32> {
        (0..n).map(|_| self.next_word()).collect()
    }

    /// Next word as a uniform in [0, 1).
    pub fn next_unit(&mut self) -> f64 {
        self.next_word() as f64 / 4_294_967_296.0
    }
}
