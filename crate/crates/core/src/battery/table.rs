//! Instantiation tables for the three batteries.
//!
//! SmallCrush is listed by hand. Crush and BigCrush draw successive
//! parameter variants from each family and interleave the families
//! round-robin, so every family appears throughout the battery. All sample
//! counts stay within the battery's word budget (2^16, 2^18, 2^20) and every
//! chi-square cell expects at least five observations.

use super::families::TestParams;

/// Largest `bits` such that the number of cells `2^(bits*dim)` still leaves
/// at least `min_per_cell` expected samples per cell.
fn max_cell_bits(samples: u32, dim: u32, min_per_cell: u32) -> u32 {
    let cells_log2 = (samples / min_per_cell).ilog2();
    cells_log2 / dim
}

fn bit_stream_sizes(budget: u32) -> impl Iterator<Item = u32> {
    (0..16u32).map(move |v| budget - v * (budget / 16))
}

fn monobit_variants(budget: u32) -> Vec<TestParams> {
    bit_stream_sizes(budget)
        .map(|words| TestParams::MonobitFrequency { words })
        .collect()
}

fn runs_variants(budget: u32) -> Vec<TestParams> {
    bit_stream_sizes(budget)
        .map(|words| TestParams::Runs { words })
        .collect()
}

fn block_frequency_variants(budget: u32) -> Vec<TestParams> {
    let mut out = Vec::new();
    for words in [budget, budget / 2, budget / 4] {
        for block_words in [4, 8, 16, 32, 64, 128] {
            out.push(TestParams::BlockFrequency { words, block_words });
        }
    }
    out
}

/// Longest gap cell keeping the tail expectation at five or more.
fn gap_cells(values: u32, lo: u32, hi: u32) -> u32 {
    let p = (hi - lo) as f64 / 256.0;
    let gaps = values as f64 * p;
    let t = 1.0 + (5.0 / (gaps * p)).ln() / (1.0 - p).ln();
    (t.floor() as u32).clamp(2, 64)
}

fn gap_variants(budget: u32) -> Vec<TestParams> {
    let mut out = Vec::new();
    for values in [budget, budget / 2, budget / 4] {
        for (lo, hi) in [
            (0, 32),
            (0, 64),
            (64, 96),
            (128, 192),
            (224, 256),
            (96, 104),
        ] {
            out.push(TestParams::Gap {
                values,
                lo,
                hi,
                max_gap: gap_cells(values, lo, hi),
            });
        }
    }
    out
}

fn serial_variants(budget: u32) -> Vec<TestParams> {
    let mut out = Vec::new();
    for skip in [0, 6, 12] {
        for drop in 0..3 {
            for dim in [3, 2] {
                let tuples = budget / dim;
                let bits = max_cell_bits(tuples, dim, 5) - drop;
                out.push(TestParams::SerialPairs {
                    tuples,
                    skip,
                    bits,
                    dim,
                });
            }
        }
    }
    out
}

fn birthday_variants(budget: u32) -> Vec<TestParams> {
    // (dim, bits per axis, log2 birthdays); n^3 / (4 * 2^(dim*bits)) is 1
    // or 2 and n >= 1024, where the Poisson limit is accurate
    const SHAPES: [(u32, u32, u32); 6] = [
        (3, 9, 10),
        (2, 14, 10),
        (3, 10, 11),
        (4, 7, 10),
        (2, 15, 11),
        (3, 11, 12),
    ];
    let mut out = Vec::new();
    for skip in [0, 4, 8] {
        for (dim, bits, log2_n) in SHAPES {
            let birthdays = 1u32 << log2_n;
            let reps = budget / (birthdays * dim);
            if reps < 4 {
                continue;
            }
            out.push(TestParams::BirthdaySpacings {
                birthdays,
                skip,
                bits,
                dim,
                reps,
            });
        }
    }
    out
}

fn collision_variants(budget: u32) -> Vec<TestParams> {
    let mut out = Vec::new();
    for skip in [0, 5] {
        for (dim, bits) in [(2, 10), (1, 20), (3, 7), (2, 11), (1, 22), (3, 8), (2, 12)] {
            let cells_log2 = bits * dim;
            // about 128 expected collisions, at most one ball per 16 urns
            let wanted = 1u32 << ((cells_log2 + 8) / 2);
            let balls = wanted.min(budget / dim).min(1 << (cells_log2 - 4));
            out.push(TestParams::CollisionTest {
                balls,
                skip,
                bits,
                dim,
            });
        }
    }
    out
}

fn max_of_t_variants(budget: u32) -> Vec<TestParams> {
    [2, 3, 4, 5, 6, 8, 10, 12, 16, 20, 24, 32, 48, 64]
        .into_iter()
        .map(|t| {
            let groups = budget / t;
            let bins = (groups / 20).next_power_of_two().clamp(8, 256) / 2;
            TestParams::MaxOfT { groups, t, bins }
        })
        .collect()
}

fn family_variants(budget: u32) -> [Vec<TestParams>; 8] {
    [
        monobit_variants(budget),
        block_frequency_variants(budget),
        runs_variants(budget),
        gap_variants(budget),
        serial_variants(budget),
        birthday_variants(budget),
        collision_variants(budget),
        max_of_t_variants(budget),
    ]
}

/// Takes `counts[f]` variants from family `f`, interleaving families.
fn interleave(budget: u32, counts: [usize; 8]) -> Vec<TestParams> {
    let variants = family_variants(budget);
    let rounds = *counts.iter().max().unwrap_or(&0);
    let mut out = Vec::new();
    for round in 0..rounds {
        for (family, list) in variants.iter().enumerate() {
            if round < counts[family] {
                out.push(list[round]);
            }
        }
    }
    out
}

pub(crate) const SMALL_CRUSH_BUDGET: u32 = 1 << 16;
pub(crate) const CRUSH_BUDGET: u32 = 1 << 18;
pub(crate) const BIG_CRUSH_BUDGET: u32 = 1 << 20;

pub(crate) fn small_crush() -> Vec<TestParams> {
    let budget = SMALL_CRUSH_BUDGET;
    vec![
        TestParams::MonobitFrequency { words: budget },
        TestParams::BlockFrequency {
            words: budget,
            block_words: 8,
        },
        TestParams::Runs { words: budget },
        TestParams::Gap {
            values: budget,
            lo: 0,
            hi: 32,
            max_gap: gap_cells(budget, 0, 32),
        },
        TestParams::SerialPairs {
            tuples: budget / 2,
            skip: 0,
            bits: 6,
            dim: 2,
        },
        TestParams::BirthdaySpacings {
            birthdays: 1024,
            skip: 0,
            bits: 14,
            dim: 2,
            reps: 32,
        },
        TestParams::CollisionTest {
            balls: 1 << 14,
            skip: 0,
            bits: 10,
            dim: 2,
        },
        TestParams::MaxOfT {
            groups: budget / 8,
            t: 8,
            bins: 64,
        },
        TestParams::SerialPairs {
            tuples: budget / 3,
            skip: 0,
            bits: 4,
            dim: 3,
        },
        TestParams::BirthdaySpacings {
            birthdays: 1024,
            skip: 0,
            bits: 9,
            dim: 3,
            reps: 21,
        },
    ]
}

pub(crate) fn crush() -> Vec<TestParams> {
    interleave(CRUSH_BUDGET, [12; 8])
}

pub(crate) fn big_crush() -> Vec<TestParams> {
    interleave(BIG_CRUSH_BUDGET, [13, 13, 13, 13, 14, 14, 13, 13])
}
