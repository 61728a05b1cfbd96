//! The statistical test families.
//!
//! Bit-oriented tests read the 31 most significant bits of each word, so the
//! 31-bit LCGs (whose word has a constant zero low bit) are judged on the
//! bits they actually produce. Value-oriented tests take the leading bits of
//! each word as cell coordinates.

use std::fmt;

use super::pvalue::{p_value_chi_square, poisson_mid_p, PValueError};
use crate::generators::GeneratorInstance;

/// Bits of each word used by the bit-stream tests.
pub const BITS_PER_WORD: u32 = 31;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestFamily {
    MonobitFrequency,
    BlockFrequency,
    Runs,
    Gap,
    SerialPairs,
    BirthdaySpacings,
    CollisionTest,
    MaxOfT,
}

impl TestFamily {
    pub const ALL: [TestFamily; 8] = [
        TestFamily::MonobitFrequency,
        TestFamily::BlockFrequency,
        TestFamily::Runs,
        TestFamily::Gap,
        TestFamily::SerialPairs,
        TestFamily::BirthdaySpacings,
        TestFamily::CollisionTest,
        TestFamily::MaxOfT,
    ];
}

impl fmt::Display for TestFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// Family together with its integer parameters.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TestParams {
    MonobitFrequency {
        words: u32,
    },
    /// Blocks are `block_words` whole words, i.e. 31 * block_words bits.
    BlockFrequency {
        words: u32,
        block_words: u32,
    },
    Runs {
        words: u32,
    },
    /// Gaps between values falling in [lo/256, hi/256); lengths of
    /// `max_gap` or more share one cell.
    Gap {
        values: u32,
        lo: u32,
        hi: u32,
        max_gap: u32,
    },
    /// Non-overlapping `dim`-tuples binned into 2^bits cells per axis.
    SerialPairs {
        tuples: u32,
        skip: u32,
        bits: u32,
        dim: u32,
    },
    /// `reps` repetitions of `birthdays` points in 2^(bits*dim) days.
    BirthdaySpacings {
        birthdays: u32,
        skip: u32,
        bits: u32,
        dim: u32,
        reps: u32,
    },
    /// `balls` tuples thrown into 2^(bits*dim) urns.
    CollisionTest {
        balls: u32,
        skip: u32,
        bits: u32,
        dim: u32,
    },
    /// Maximum of `t` uniforms, transformed to uniform and binned.
    MaxOfT {
        groups: u32,
        t: u32,
        bins: u32,
    },
}

/// Raw result of one family evaluation.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FamilyResult {
    pub statistic: f64,
    pub p_value: f64,
    pub words_used: u64,
}

impl TestParams {
    pub fn family(&self) -> TestFamily {
        match self {
            TestParams::MonobitFrequency { .. } => TestFamily::MonobitFrequency,
            TestParams::BlockFrequency { .. } => TestFamily::BlockFrequency,
            TestParams::Runs { .. } => TestFamily::Runs,
            TestParams::Gap { .. } => TestFamily::Gap,
            TestParams::SerialPairs { .. } => TestFamily::SerialPairs,
            TestParams::BirthdaySpacings { .. } => TestFamily::BirthdaySpacings,
            TestParams::CollisionTest { .. } => TestFamily::CollisionTest,
            TestParams::MaxOfT { .. } => TestFamily::MaxOfT,
        }
    }

    /// Tuple dimension for the cell-based families.
    pub fn dim(&self) -> Option<u32> {
        match *self {
            TestParams::SerialPairs { dim, .. }
            | TestParams::BirthdaySpacings { dim, .. }
            | TestParams::CollisionTest { dim, .. } => Some(dim),
            _ => None,
        }
    }

    /// Number of generator words the test consumes.
    pub fn words_needed(&self) -> u64 {
        match *self {
            TestParams::MonobitFrequency { words }
            | TestParams::Runs { words }
            | TestParams::BlockFrequency { words, .. } => words as u64,
            TestParams::Gap { values, .. } => values as u64,
            TestParams::SerialPairs { tuples, dim, .. } => tuples as u64 * dim as u64,
            TestParams::BirthdaySpacings {
                birthdays,
                dim,
                reps,
                ..
            } => birthdays as u64 * dim as u64 * reps as u64,
            TestParams::CollisionTest { balls, dim, .. } => balls as u64 * dim as u64,
            TestParams::MaxOfT { groups, t, .. } => groups as u64 * t as u64,
        }
    }

    /// Parameter list used in test names, e.g. `n=65536 d=64 t=2`.
    pub fn describe(&self) -> String {
        match *self {
            TestParams::MonobitFrequency { words } => format!("n={words}"),
            TestParams::BlockFrequency { words, block_words } => {
                format!("n={words} m={}", block_words * BITS_PER_WORD)
            }
            TestParams::Runs { words } => format!("n={words}"),
            TestParams::Gap {
                values,
                lo,
                hi,
                max_gap,
            } => format!("n={values} a={lo}/256 b={hi}/256 t={max_gap}"),
            TestParams::SerialPairs {
                tuples,
                skip,
                bits,
                dim,
            } => format!("n={tuples} r={skip} d={} t={dim}", 1u64 << bits),
            TestParams::BirthdaySpacings {
                birthdays,
                skip,
                bits,
                dim,
                reps,
            } => format!(
                "n={birthdays} r={skip} d={} t={dim} reps={reps}",
                1u64 << bits
            ),
            TestParams::CollisionTest {
                balls,
                skip,
                bits,
                dim,
            } => format!("n={balls} r={skip} d={} t={dim}", 1u64 << bits),
            TestParams::MaxOfT { groups, t, bins } => format!("n={groups} t={t} d={bins}"),
        }
    }

    pub fn run(&self, gen: &mut GeneratorInstance) -> Result<FamilyResult, PValueError> {
        let (statistic, p_value) = match *self {
            TestParams::MonobitFrequency { words } => monobit(gen, words)?,
            TestParams::BlockFrequency { words, block_words } => {
                block_frequency(gen, words, block_words)?
            }
            TestParams::Runs { words } => runs(gen, words)?,
            TestParams::Gap {
                values,
                lo,
                hi,
                max_gap,
            } => gap(gen, values, lo, hi, max_gap)?,
            TestParams::SerialPairs {
                tuples,
                skip,
                bits,
                dim,
            } => serial(gen, tuples, skip, bits, dim)?,
            TestParams::BirthdaySpacings {
                birthdays,
                skip,
                bits,
                dim,
                reps,
            } => birthday_spacings(gen, birthdays, skip, bits, dim, reps),
            TestParams::CollisionTest {
                balls,
                skip,
                bits,
                dim,
            } => collision(gen, balls, skip, bits, dim),
            TestParams::MaxOfT { groups, t, bins } => max_of_t(gen, groups, t, bins)?,
        };
        Ok(FamilyResult {
            statistic,
            p_value,
            words_used: self.words_needed(),
        })
    }
}

fn top_bits(word: u32) -> u32 {
    word >> (32 - BITS_PER_WORD)
}

/// Packs `bits` bits (after skipping the `skip` most significant ones) of
/// `dim` consecutive words into one cell index.
fn next_cell(gen: &mut GeneratorInstance, skip: u32, bits: u32, dim: u32) -> u64 {
    (0..dim).fold(0u64, |acc, _| {
        (acc << bits) | ((gen.next_word() << skip) >> (32 - bits)) as u64
    })
}

fn monobit(gen: &mut GeneratorInstance, words: u32) -> Result<(f64, f64), PValueError> {
    let ones: u64 = (0..words)
        .map(|_| top_bits(gen.next_word()).count_ones() as u64)
        .sum();
    let n = words as f64 * BITS_PER_WORD as f64;
    let s = 2.0 * ones as f64 - n;
    let stat = s * s / n;
    Ok((stat, p_value_chi_square(stat, 1)?))
}

fn block_frequency(
    gen: &mut GeneratorInstance,
    words: u32,
    block_words: u32,
) -> Result<(f64, f64), PValueError> {
    let m = (block_words * BITS_PER_WORD) as f64;
    let blocks = words / block_words;
    let mut stat = 0.0;
    for _ in 0..blocks {
        let ones: u32 = (0..block_words)
            .map(|_| top_bits(gen.next_word()).count_ones())
            .sum();
        let d = 2.0 * ones as f64 - m;
        stat += d * d / m;
    }
    // leftover words are consumed but not scored
    for _ in 0..words % block_words {
        gen.next_word();
    }
    Ok((stat, p_value_chi_square(stat, blocks as u64)?))
}

fn runs(gen: &mut GeneratorInstance, words: u32) -> Result<(f64, f64), PValueError> {
    let inner_mask = (1u32 << (BITS_PER_WORD - 1)) - 1;
    let mut transitions = 0u64;
    let mut last_bit: Option<u32> = None;
    for _ in 0..words {
        let bits = top_bits(gen.next_word());
        let first = bits >> (BITS_PER_WORD - 1);
        if let Some(prev) = last_bit {
            transitions += (prev ^ first) as u64;
        }
        transitions += ((bits ^ (bits >> 1)) & inner_mask).count_ones() as u64;
        last_bit = Some(bits & 1);
    }
    let pairs = (words as f64 * BITS_PER_WORD as f64) - 1.0;
    let z = (2.0 * transitions as f64 - pairs) / pairs.sqrt();
    let stat = z * z;
    Ok((stat, p_value_chi_square(stat, 1)?))
}

fn gap(
    gen: &mut GeneratorInstance,
    values: u32,
    lo: u32,
    hi: u32,
    max_gap: u32,
) -> Result<(f64, f64), PValueError> {
    let p = (hi - lo) as f64 / 256.0;
    let lo_u = lo as f64 / 256.0;
    let hi_u = hi as f64 / 256.0;
    let mut counts = vec![0u64; max_gap as usize + 1];
    let mut hits = 0u64;
    let mut run = 0usize;
    for _ in 0..values {
        let u = gen.next_unit();
        if u >= lo_u && u < hi_u {
            hits += 1;
            counts[run.min(max_gap as usize)] += 1;
            run = 0;
        } else {
            run += 1;
        }
    }
    let mut stat = 0.0;
    if hits > 0 {
        let g = hits as f64;
        for (k, &obs) in counts.iter().enumerate() {
            let prob = if k < max_gap as usize {
                p * (1.0 - p).powi(k as i32)
            } else {
                (1.0 - p).powi(max_gap as i32)
            };
            let e = g * prob;
            stat += (obs as f64 - e).powi(2) / e;
        }
    }
    // hit count against its binomial expectation
    let n = values as f64;
    let z2 = (hits as f64 - n * p).powi(2) / (n * p * (1.0 - p));
    stat += z2;
    Ok((stat, p_value_chi_square(stat, max_gap as u64 + 1)?))
}

fn serial(
    gen: &mut GeneratorInstance,
    tuples: u32,
    skip: u32,
    bits: u32,
    dim: u32,
) -> Result<(f64, f64), PValueError> {
    let cells = 1usize << (bits * dim);
    let mut counts = vec![0u32; cells];
    for _ in 0..tuples {
        counts[next_cell(gen, skip, bits, dim) as usize] += 1;
    }
    let e = tuples as f64 / cells as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    Ok((stat, p_value_chi_square(stat, cells as u64 - 1)?))
}

fn birthday_spacings(
    gen: &mut GeneratorInstance,
    birthdays: u32,
    skip: u32,
    bits: u32,
    dim: u32,
    reps: u32,
) -> (f64, f64) {
    let days = 2f64.powi((bits * dim) as i32);
    let n = birthdays as f64;
    let lambda = n * n * n / (4.0 * days);
    let mut collisions = 0u64;
    let mut points = Vec::with_capacity(birthdays as usize);
    for _ in 0..reps {
        points.clear();
        points.extend((0..birthdays).map(|_| next_cell(gen, skip, bits, dim)));
        points.sort_unstable();
        let mut prev = 0u64;
        for p in points.iter_mut() {
            let spacing = *p - prev;
            prev = *p;
            *p = spacing;
        }
        points.sort_unstable();
        collisions += points.windows(2).filter(|w| w[0] == w[1]).count() as u64;
    }
    let mean = lambda * reps as f64;
    (collisions as f64, poisson_mid_p(collisions, mean))
}

fn collision(
    gen: &mut GeneratorInstance,
    balls: u32,
    skip: u32,
    bits: u32,
    dim: u32,
) -> (f64, f64) {
    let cells_log2 = bits * dim;
    let cells = 2f64.powi(cells_log2 as i32);
    let mut occupied = vec![0u64; ((1u64 << cells_log2) as usize).div_ceil(64)];
    let mut collisions = 0u64;
    for _ in 0..balls {
        let c = next_cell(gen, skip, bits, dim) as usize;
        let (word, bit) = (c / 64, c % 64);
        if occupied[word] & (1 << bit) != 0 {
            collisions += 1;
        } else {
            occupied[word] |= 1 << bit;
        }
    }
    let n = balls as f64;
    let empty_fraction = (n * (-1.0 / cells).ln_1p()).exp();
    let mean = n - cells + cells * empty_fraction;
    (collisions as f64, poisson_mid_p(collisions, mean))
}

fn max_of_t(
    gen: &mut GeneratorInstance,
    groups: u32,
    t: u32,
    bins: u32,
) -> Result<(f64, f64), PValueError> {
    let mut counts = vec![0u64; bins as usize];
    for _ in 0..groups {
        let max = (0..t).map(|_| gen.next_unit()).fold(0.0, f64::max);
        let y = max.powi(t as i32);
        let bin = ((y * bins as f64) as usize).min(bins as usize - 1);
        counts[bin] += 1;
    }
    let e = groups as f64 / bins as f64;
    let stat: f64 = counts.iter().map(|&c| (c as f64 - e).powi(2) / e).sum();
    Ok((stat, p_value_chi_square(stat, bins as u64 - 1)?))
}
