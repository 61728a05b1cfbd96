//! Helpers shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::Path;

use crushpool::submitfile::{Stanza, SubmitDescription, LOG_NAME, OUTPUT_TEMPLATE};

/// Γ(k/2) for integer k ≥ 1, from Γ(1) = 1, Γ(1/2) = √π and Γ(a + 1) = aΓ(a).
pub fn gamma_half(k: u64) -> f64 {
    let (mut g, mut a) = if k.is_multiple_of(2) {
        (1.0, 1.0)
    } else {
        (std::f64::consts::PI.sqrt(), 0.5)
    };
    while a < k as f64 / 2.0 {
        g *= a;
        a += 1.0;
    }
    g
}

/// Chi-square upper tail by composite Simpson integration of the density.
/// Substituting t = u² makes the integrand smooth at zero for every dof.
pub fn chi_square_sf_by_quadrature(x: f64, k: u64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let norm = 2.0 / (2f64.powf(k as f64 / 2.0) * gamma_half(k));
    let f = |u: f64| norm * u.powi(k as i32 - 1) * (-u * u / 2.0).exp();
    let b = x.sqrt();
    let n = 20_000;
    let h = b / n as f64;
    let mut sum = f(0.0) + f(b);
    for i in 1..n {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        sum += w * f(i as f64 * h);
    }
    1.0 - sum * h / 3.0
}

/// Kolmogorov-Smirnov distance of a sample from Uniform[0, 1].
pub fn ks_uniform(mut p: Vec<f64>) -> f64 {
    p.sort_by(f64::total_cmp);
    let n = p.len() as f64;
    p.iter()
        .enumerate()
        .map(|(i, &x)| ((i as f64 + 1.0) / n - x).max(x - i as f64 / n))
        .fold(0.0, f64::max)
}

/// Asymptotic KS critical distance for `n` samples at level `alpha`.
pub fn ks_critical(n: usize, alpha: f64) -> f64 {
    (-(alpha / 2.0).ln() / 2.0).sqrt() / (n as f64).sqrt()
}

/// `jobs` identical cheap jobs (SmallCrush test 1) under `executable`.
pub fn uniform_jobs(executable: &str, jobs: usize) -> SubmitDescription {
    SubmitDescription {
        universe: "vanilla".into(),
        executable: executable.into(),
        log_name: LOG_NAME.into(),
        output_template: OUTPUT_TEMPLATE.into(),
        stanzas: vec![Stanza {
            arguments: "1 0".into(),
            queue_count: jobs as u32,
        }],
        extra: Vec::new(),
    }
}

pub fn dir_listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<String> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    names
}
