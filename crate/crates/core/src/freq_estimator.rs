//! Two-step carrier frequency estimation for detected bursts.
//!
//! The coarse step searches a frequency grid for the shift of the
//! representative that maximizes the full-sequence correlation at the burst
//! start. The fine step reads the phase advance between consecutive partial
//! correlations, which is unambiguous only within one subsequence rate
//! `fs / L`; the coarse value selects the ambiguity branch.

use std::f64::consts::TAU;

use rayon::prelude::*;

use crate::detector::{check_rates, DetectionEvent};
use crate::error::{Error, Result};
use crate::signal_model::{phasor, IqSignal, SyncSequence, C64, SUBSEQUENCES};

/// Half-width of the default coarse search range, Hz.
pub const DEFAULT_SEARCH_HALF_WIDTH: f64 = 600e3;

/// Partials weaker than this fraction of their magnitude sum abort the fine
/// step.
const PARTIAL_FLOOR: f64 = 1e3 * f64::EPSILON;

/// Samples between exact phasor evaluations in the rotation recurrence.
const PHASOR_RESYNC: usize = 1024;

/// Uniform grid `min, min + step, ...` up to `max`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrequencyGrid {
    min: f64,
    max: f64,
    step: f64,
}

impl FrequencyGrid {
    pub fn new(min: f64, max: f64, step: f64) -> Result<Self> {
        if !(min.is_finite() && max.is_finite()) || min > max {
            return Err(Error::EmptyGrid);
        }
        if min < max && !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "grid step {step} must be positive"
            )));
        }
        Ok(FrequencyGrid { min, max, step })
    }

    pub fn single(freq: f64) -> Result<Self> {
        FrequencyGrid::new(freq, freq, 0.0)
    }

    /// Step `fs / (4 L_c)` over +-600 kHz.
    pub fn default_for(eps: &SyncSequence) -> Self {
        let step = eps.sample_rate() / (4.0 * eps.len() as f64);
        FrequencyGrid::new(-DEFAULT_SEARCH_HALF_WIDTH, DEFAULT_SEARCH_HALF_WIDTH, step)
            .expect("default grid is valid")
    }

    pub fn min(&self) -> f64 {
        self.min
    }

    pub fn max(&self) -> f64 {
        self.max
    }

    pub fn step(&self) -> f64 {
        self.step
    }

    pub fn points(&self) -> Vec<f64> {
        if self.min == self.max {
            return vec![self.min];
        }
        let count = ((self.max - self.min) / self.step + 1e-9).floor() as usize + 1;
        (0..count)
            .map(|i| self.min + i as f64 * self.step)
            .collect()
    }
}

/// Result of both estimation steps for one burst.
#[derive(Debug, Clone, PartialEq)]
pub struct FrequencyEstimate {
    pub coarse: f64,
    /// Fine estimate before ambiguity correction.
    pub raw: f64,
    pub fine: f64,
    pub ambiguity_index: i64,
    pub detection: DetectionEvent,
}

/// Grid frequency maximizing `|r_{s, eps_f}[lag]|`, where `eps_f` is the
/// representative shifted by `f`. Ties go to the smaller `|f|`.
pub fn coarse_estimate(
    s: &IqSignal,
    eps: &SyncSequence,
    lag: i64,
    grid: &FrequencyGrid,
) -> Result<f64> {
    check_rates(s.sample_rate(), eps.sample_rate())?;
    let rendered = eps.render();
    let samples = s.samples();
    // s[lag + n] * conj(eps[n]), zero outside the signal.
    let products: Vec<C64> = rendered
        .iter()
        .enumerate()
        .map(|(n, e)| {
            let i = lag + n as i64;
            if i >= 0 && (i as usize) < samples.len() {
                samples[i as usize] * e.conj()
            } else {
                C64::new(0.0, 0.0)
            }
        })
        .collect();
    let fs = s.sample_rate();
    let mut best: Option<(f64, f64)> = None;
    for f in grid.points() {
        let mag = derotated_sum(&products, -f / fs).norm();
        let better = match best {
            None => true,
            Some((bf, bm)) => {
                mag > bm || (mag == bm && (f.abs() < bf.abs() || (f.abs() == bf.abs() && f < bf)))
            }
        };
        if better {
            best = Some((f, mag));
        }
    }
    best.map(|(f, _)| f).ok_or(Error::EmptyGrid)
}

/// `sum_n products[n] * exp(j 2 pi cycles_per_sample n)`.
fn derotated_sum(products: &[C64], cycles_per_sample: f64) -> C64 {
    let step = phasor(cycles_per_sample, 1);
    let mut acc = C64::new(0.0, 0.0);
    for (block, chunk) in products.chunks(PHASOR_RESYNC).enumerate() {
        let mut w = phasor(cycles_per_sample, (block * PHASOR_RESYNC) as u64);
        for p in chunk {
            acc += p * w;
            w *= step;
        }
    }
    acc
}

/// Phase-difference estimate from the event's partial correlations, with
/// the ambiguity branch chosen closest to `coarse`.
pub fn fine_estimate(
    event: &DetectionEvent,
    coarse: f64,
    subseq_len: usize,
    sample_rate: f64,
) -> Result<FrequencyEstimate> {
    let partials = &event.partials;
    let scale: f64 = partials.iter().map(|p| p.norm()).sum();
    for (index, p) in partials.iter().enumerate() {
        let magnitude = p.norm();
        if scale == 0.0 || magnitude < PARTIAL_FLOOR * scale {
            return Err(Error::UnreliableEstimate { index, magnitude });
        }
    }
    let acc: C64 = (1..SUBSEQUENCES)
        .map(|k| partials[k - 1] * partials[k].conj())
        .sum();
    // Consecutive partials of a burst offset by +f rotate by
    // -2 pi f L / fs, hence the leading minus.
    let period = sample_rate / subseq_len as f64;
    let raw = -acc.arg() / TAU * period;
    let g = ((coarse - raw) / period).round();
    Ok(FrequencyEstimate {
        coarse,
        raw,
        fine: raw + g * period,
        ambiguity_index: g as i64,
        detection: event.clone(),
    })
}

/// Coarse then fine estimate for one event.
pub fn estimate(
    s: &IqSignal,
    eps: &SyncSequence,
    event: &DetectionEvent,
    grid: &FrequencyGrid,
) -> Result<FrequencyEstimate> {
    let coarse = coarse_estimate(s, eps, event.sample_index, grid)?;
    fine_estimate(event, coarse, eps.subseq_len(), eps.sample_rate())
}

/// [`estimate`] for every event, in order. Failures stay per-event.
pub fn estimate_all(
    s: &IqSignal,
    eps: &SyncSequence,
    events: &[DetectionEvent],
    grid: &FrequencyGrid,
) -> Vec<Result<FrequencyEstimate>> {
    events
        .par_iter()
        .map(|e| estimate(s, eps, e, grid))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detector::partials_at;
    use crate::signal_model::{synthesize_burst, uplink, BurstSpec};

    fn event_for(s: &IqSignal, eps: &SyncSequence, lag: i64) -> DetectionEvent {
        DetectionEvent {
            sample_index: lag,
            statistic: 1.0,
            partials: partials_at(s, eps, lag),
            normalization: 1.0,
            representative_id: 0,
            low_confidence: false,
        }
    }

    fn burst(eps: &SyncSequence, df: f64) -> IqSignal {
        synthesize_burst(
            &BurstSpec {
                sync: eps.clone(),
                data_len: 2000,
                freq_offset: df,
                gain: C64::from_polar(0.8, -1.1),
                guard_before: 700,
                guard_after: 300,
            },
            0.0,
            42,
        )
        .unwrap()
    }

    #[test]
    fn grid_points() {
        assert_eq!(
            FrequencyGrid::new(-1.0, 1.0, 0.5).unwrap().points(),
            vec![-1.0, -0.5, 0.0, 0.5, 1.0]
        );
        assert_eq!(FrequencyGrid::single(0.0).unwrap().points(), vec![0.0]);
        assert!(matches!(
            FrequencyGrid::new(1.0, -1.0, 0.5),
            Err(Error::EmptyGrid)
        ));
        assert!(FrequencyGrid::new(-1.0, 1.0, 0.0).is_err());
        let eps = uplink::sync_sequence(1);
        let g = FrequencyGrid::default_for(&eps);
        assert!((g.step() - 562.5e6 / (4.0 * 9820.0)).abs() < 1e-9);
    }

    #[test]
    fn coarse_recovers_grid_member() {
        let eps = uplink::sync_sequence(1);
        let step = 562.5e6 / (4.0 * 9820.0);
        let df = 7.0 * step;
        let s = burst(&eps, df);
        let grid = FrequencyGrid::new(-40.0 * step, 40.0 * step, step).unwrap();
        let f = coarse_estimate(&s, &eps, 700, &grid).unwrap();
        assert!((f - df).abs() < 1e-6);
    }

    #[test]
    fn coarse_picks_nearest_grid_point() {
        let eps = uplink::sync_sequence(2);
        let grid = FrequencyGrid::new(-600e3, 600e3, 10e3).unwrap();
        for df in [12_300.0, -47_600.0, 151_000.0] {
            let s = burst(&eps, df);
            let f = coarse_estimate(&s, &eps, 700, &grid).unwrap();
            assert!((f - df).abs() <= 5e3, "{df} -> {f}");
        }
    }

    #[test]
    fn degenerate_grid_returns_its_point() {
        let eps = uplink::sync_sequence(2);
        let s = burst(&eps, 80e3);
        let f = coarse_estimate(&s, &eps, 700, &FrequencyGrid::single(0.0).unwrap()).unwrap();
        assert_eq!(f, 0.0);
    }

    #[test]
    fn fine_recovers_offset_within_ambiguity_range() {
        let eps = uplink::sync_sequence(3);
        let s = burst(&eps, 50e3);
        let est = fine_estimate(&event_for(&s, &eps, 700), 46_875.0, 1200, 562.5e6).unwrap();
        assert!((est.fine - 50e3).abs() < 1e-3, "{}", est.fine);
        assert_eq!(est.ambiguity_index, 0);
    }

    #[test]
    fn fine_corrects_wrapped_offset() {
        let eps = uplink::sync_sequence(3);
        let s = burst(&eps, 300e3);
        for coarse in [200e3, 300e3, 399e3] {
            let est = fine_estimate(&event_for(&s, &eps, 700), coarse, 1200, 562.5e6).unwrap();
            assert_eq!(est.ambiguity_index, 1);
            assert!((est.fine - 300e3).abs() < 1e-3, "{}", est.fine);
            let steps = (est.fine - est.raw) / 468_750.0;
            assert!((steps - steps.round()).abs() < 1e-9);
        }
    }

    #[test]
    fn fine_zero_offset() {
        let eps = uplink::sync_sequence(4);
        let s = burst(&eps, 0.0);
        let est = fine_estimate(&event_for(&s, &eps, 700), 0.0, 1200, 562.5e6).unwrap();
        assert!(est.fine.abs() < 1e-6);
        assert_eq!(est.ambiguity_index, 0);
    }

    #[test]
    fn fine_rejects_vanishing_partial() {
        let eps = uplink::sync_sequence(4);
        let s = burst(&eps, 0.0);
        let mut ev = event_for(&s, &eps, 700);
        ev.partials[3] = C64::new(1e-20, 0.0);
        assert!(matches!(
            fine_estimate(&ev, 0.0, 1200, 562.5e6),
            Err(Error::UnreliableEstimate { index: 3, .. })
        ));
        ev.partials = [C64::new(0.0, 0.0); 8];
        assert!(fine_estimate(&ev, 0.0, 1200, 562.5e6).is_err());
    }

    #[test]
    fn estimate_all_keeps_order_and_errors() {
        let eps = uplink::sync_sequence(5);
        let s = burst(&eps, -120e3);
        assert!(estimate_all(&s, &eps, &[], &FrequencyGrid::default_for(&eps)).is_empty());
        let good = event_for(&s, &eps, 700);
        let mut bad = good.clone();
        bad.partials = [C64::new(0.0, 0.0); 8];
        let out = estimate_all(
            &s,
            &eps,
            &[good.clone(), bad, good],
            &FrequencyGrid::default_for(&eps),
        );
        assert_eq!(out.len(), 3);
        assert!((out[0].as_ref().unwrap().fine + 120e3).abs() < 1e-3);
        assert!(out[1].is_err());
        assert!(out[2].is_ok());
    }
}
