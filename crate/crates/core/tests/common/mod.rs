//! Oracles shared by the integration tests, independent of the library's
//! transform-based routes.

#![allow(dead_code)]

use std::f64::consts::PI;

use burstnav::C64;

/// `out[p] = sum_m signal[p + m] * conj(template[m])` over valid lags.
pub fn direct_correlation(signal: &[C64], template: &[C64]) -> Vec<C64> {
    (0..=signal.len() - template.len())
        .map(|p| {
            template
                .iter()
                .zip(&signal[p..])
                .map(|(t, s)| s * t.conj())
                .sum()
        })
        .collect()
}

/// `|sum_{n<len} exp(j 2 pi x n)| / len`.
pub fn dirichlet(x: f64, len: usize) -> f64 {
    let den = len as f64 * (PI * x).sin();
    if den == 0.0 {
        1.0
    } else {
        ((PI * x * len as f64).sin() / den).abs()
    }
}
