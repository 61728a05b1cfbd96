//! Tail probabilities for the test statistics.

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum PValueError {
    #[error("non-finite statistic {0}")]
    NonFinite(f64),
    #[error("negative statistic {0}")]
    Negative(f64),
    #[error("degrees of freedom must be positive")]
    ZeroDof,
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn ln_gamma(x: f64) -> f64 {
    if x < 0.5 {
        // reflection
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    let t = x + LANCZOS_G + 0.5;
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

const EPS: f64 = 1e-15;
const MAX_ITER: usize = 10_000;

fn gamma_p_series(a: f64, x: f64) -> f64 {
    let mut sum = 1.0 / a;
    let mut term = sum;
    let mut ap = a;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * EPS {
            break;
        }
    }
    (sum.ln() - x + a * x.ln() - ln_gamma(a)).exp()
}

fn gamma_q_continued_fraction(a: f64, x: f64) -> f64 {
    // modified Lentz
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < EPS {
            break;
        }
    }
    (-x + a * x.ln() - ln_gamma(a)).exp() * h
}

/// Regularized lower incomplete gamma P(a, x).
pub fn gamma_p(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x < a + 1.0 {
        gamma_p_series(a, x).clamp(0.0, 1.0)
    } else {
        (1.0 - gamma_q_continued_fraction(a, x)).clamp(0.0, 1.0)
    }
}

/// Regularized upper incomplete gamma Q(a, x).
pub fn gamma_q(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    if x < a + 1.0 {
        (1.0 - gamma_p_series(a, x)).clamp(0.0, 1.0)
    } else {
        gamma_q_continued_fraction(a, x).clamp(0.0, 1.0)
    }
}

/// Upper-tail probability of a chi-square variable with `dof` degrees of
/// freedom: Q(dof/2, statistic/2).
pub fn p_value_chi_square(statistic: f64, dof: u64) -> Result<f64, PValueError> {
    if !statistic.is_finite() {
        // +inf is a legitimate limit
        if statistic == f64::INFINITY {
            return Ok(0.0);
        }
        return Err(PValueError::NonFinite(statistic));
    }
    if statistic < 0.0 {
        return Err(PValueError::Negative(statistic));
    }
    if dof == 0 {
        return Err(PValueError::ZeroDof);
    }
    Ok(gamma_q(dof as f64 / 2.0, statistic / 2.0))
}

/// Poisson probability mass P(Y = k) for mean `mean`.
pub fn poisson_pmf(k: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if k == 0 { 1.0 } else { 0.0 };
    }
    let k = k as f64;
    (k * mean.ln() - mean - ln_gamma(k + 1.0)).exp()
}

/// Upper-tail mid-p value of an observed Poisson count:
/// P(Y > k) + P(Y = k) / 2.
pub fn poisson_mid_p(observed: u64, mean: f64) -> f64 {
    if mean <= 0.0 {
        return if observed == 0 { 0.5 } else { 0.0 };
    }
    // P(Y > k) = P(Y >= k + 1) = gamma_p(k + 1, mean)
    let above = gamma_p(observed as f64 + 1.0, mean);
    (above + 0.5 * poisson_pmf(observed, mean)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_statistic_is_one() {
        for k in [1, 2, 7, 100] {
            assert_eq!(p_value_chi_square(0.0, k).unwrap(), 1.0);
        }
    }

    #[test]
    fn infinite_statistic_is_zero() {
        assert_eq!(p_value_chi_square(f64::INFINITY, 3).unwrap(), 0.0);
        assert!(p_value_chi_square(1e6, 3).unwrap() < 1e-300);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            p_value_chi_square(f64::NAN, 1),
            Err(PValueError::NonFinite(_))
        ));
        assert!(p_value_chi_square(-1.0, 1).is_err());
        assert_eq!(p_value_chi_square(1.0, 0), Err(PValueError::ZeroDof));
    }

    #[test]
    fn ln_gamma_factorials() {
        let mut fact = 1.0f64;
        for n in 1..30u32 {
            fact *= n as f64;
            let lg = ln_gamma(n as f64 + 1.0);
            assert!((lg - fact.ln()).abs() < 1e-10, "n={n}");
        }
        assert!((ln_gamma(0.5) - std::f64::consts::PI.sqrt().ln()).abs() < 1e-12);
    }

    #[test]
    fn poisson_mid_p_small_cases() {
        // mean 1, k = 0: P(Y>0) + P(Y=0)/2 = 1 - e^-1 + e^-1/2
        let e = (-1.0f64).exp();
        assert!((poisson_mid_p(0, 1.0) - (1.0 - e / 2.0)).abs() < 1e-12);
        // k = 2: P(Y>2) = 1 - e(1 + 1 + 1/2)
        let above = 1.0 - e * 2.5;
        assert!((poisson_mid_p(2, 1.0) - (above + e / 4.0)).abs() < 1e-12);
    }
}
