//! Burst detection by eight-fold partial correlation.
//!
//! The detection statistic at lag `l` sums the magnitudes of the eight
//! correlations between the received signal and the representative's
//! subsequences, each placed where it would sit in a burst starting at `l`.
//! Taking magnitudes before summing discards the phase rotation a carrier
//! offset causes from one subsequence to the next, so the statistic only
//! suffers the offset's loss over a single subsequence.
//!
//! Normalization follows the full-sequence correlation: the magnitude sum is
//! divided by `D = sum_k sqrt(E(s_k) E(eps_k))`, with `s_k` the signal slices
//! aligned with the subsequences at the lag where the magnitude sum peaks.
//! Since every other lag has a smaller magnitude sum, `0 <= d[l] <= 1`.

use std::collections::VecDeque;
use std::ops::Range;

use crate::correlate::{dot_at, FftCorrelator};
use crate::error::{Error, Result};
use crate::signal_model::{energy, IqSignal, SyncSequence, C64, SUBSEQUENCES};

/// Default detection threshold for high-SNR uplink records.
pub const DEFAULT_THRESHOLD: f64 = 0.35;

/// Values indexed by lag; `values[i]` belongs to lag `lag_origin + i`.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationSeries<T> {
    pub values: Vec<T>,
    pub lag_origin: i64,
    pub normalized: bool,
}

impl<T: Copy> CorrelationSeries<T> {
    pub fn lags(&self) -> Range<i64> {
        self.lag_origin..self.lag_origin + self.values.len() as i64
    }

    pub fn at_lag(&self, lag: i64) -> Option<T> {
        let i = lag - self.lag_origin;
        if i < 0 {
            return None;
        }
        self.values.get(i as usize).copied()
    }
}

/// Normalized correlation of `y1` against the shorter `y2` over all fully
/// overlapping lags `0..=len(y1) - len(y2)`.
pub fn xcorr_normalized(y1: &IqSignal, y2: &IqSignal) -> Result<CorrelationSeries<C64>> {
    check_rates(y1.sample_rate(), y2.sample_rate())?;
    if y2.is_empty() || y2.len() >= y1.len() {
        return Err(Error::LengthMismatch {
            signal: y1.len(),
            template: y2.len(),
        });
    }
    let template_energy = energy(y2.samples());
    if template_energy == 0.0 {
        return Err(Error::ZeroEnergy("template"));
    }
    let corr = FftCorrelator::new(y2.samples())?;
    let mut values = corr.correlate_valid(y1.samples());
    let peak = argmax(values.iter().map(|v| v.norm()));
    let aligned = &y1.samples()[peak..peak + y2.len()];
    let a = (energy(aligned) * template_energy).sqrt();
    if a == 0.0 {
        return Err(Error::ZeroEnergy("signal"));
    }
    for v in values.iter_mut() {
        *v /= a;
    }
    Ok(CorrelationSeries {
        values,
        lag_origin: 0,
        normalized: true,
    })
}

/// The eight partial correlations of a signal against a representative.
///
/// All eight are read from one correlation `x` of the signal against the
/// bare subsequence: `d_k[l] = sign_k * x[l + (gamma + k) L]`.
#[derive(Debug, Clone)]
pub struct PartialCorrelations {
    x: Vec<C64>,
    x_origin: i64,
    lags: Range<i64>,
    offsets: [i64; SUBSEQUENCES],
    signs: [f64; SUBSEQUENCES],
}

impl PartialCorrelations {
    pub fn lags(&self) -> Range<i64> {
        self.lags.clone()
    }

    /// `d_k[lag]`. Panics outside `lags()`.
    pub fn at(&self, k: usize, lag: i64) -> C64 {
        assert!(
            self.lags.contains(&lag),
            "lag {lag} outside {:?}",
            self.lags
        );
        self.x[(lag + self.offsets[k] - self.x_origin) as usize] * self.signs[k]
    }

    pub fn all_at(&self, lag: i64) -> [C64; SUBSEQUENCES] {
        std::array::from_fn(|k| self.at(k, lag))
    }

    /// The series `d_k[l]` over `lags()`.
    pub fn series(&self, k: usize) -> Vec<C64> {
        self.lags.clone().map(|l| self.at(k, l)).collect()
    }

    /// `sum_k |d_k[l]|` over `lags()`.
    fn magnitude_sum(&self) -> Vec<f64> {
        let mags: Vec<f64> = self.x.iter().map(|v| v.norm()).collect();
        let mut sum = vec![0.0; self.lags.end.saturating_sub(self.lags.start).max(0) as usize];
        for off in self.offsets {
            let base = (self.lags.start + off - self.x_origin) as usize;
            for (acc, m) in sum.iter_mut().zip(&mags[base..]) {
                *acc += m;
            }
        }
        sum
    }
}

/// Lags at which a representative fully overlaps `s`.
pub fn valid_lags(s: &IqSignal, eps: &SyncSequence) -> Range<i64> {
    0..(s.len() as i64 - eps.len() as i64 + 1).max(0)
}

/// Partial correlations over `lags`. Lags where the representative
/// overhangs the signal see implicit zeros outside it.
pub fn partial_correlations(
    s: &IqSignal,
    eps: &SyncSequence,
    lags: Range<i64>,
) -> Result<PartialCorrelations> {
    check_inputs(s, eps)?;
    let offsets: [i64; SUBSEQUENCES] = std::array::from_fn(|k| eps.subsequence_offset(k) as i64);
    let signs = std::array::from_fn(|k| eps.sign(k));
    let lags = lags.start..lags.end.max(lags.start);
    let x_origin = lags.start + offsets[0];
    let x_end = lags.end + offsets[SUBSEQUENCES - 1];
    let corr = FftCorrelator::new(eps.subseq())?;
    let x = corr.correlate_range(s.samples(), x_origin..x_end);
    Ok(PartialCorrelations {
        x,
        x_origin,
        lags,
        offsets,
        signs,
    })
}

/// The eight partial correlations at one lag, computed directly.
pub fn partials_at(s: &IqSignal, eps: &SyncSequence, lag: i64) -> [C64; SUBSEQUENCES] {
    std::array::from_fn(|k| {
        let start = lag + eps.subsequence_offset(k) as i64;
        dot_at(s.samples(), eps.subseq(), start) * eps.sign(k)
    })
}

/// `sum_k sqrt(E(s_k) E(eps_k))` for the slices aligned at `lag`.
pub fn aligned_normalization(s: &[C64], eps: &SyncSequence, lag: i64) -> f64 {
    let eps_energy = eps.subseq_energy();
    let l = eps.subseq_len() as i64;
    (0..SUBSEQUENCES)
        .map(|k| {
            let start = lag + eps.subsequence_offset(k) as i64;
            let lo = start.clamp(0, s.len() as i64) as usize;
            let hi = (start + l).clamp(0, s.len() as i64) as usize;
            (energy(&s[lo..hi]) * eps_energy).sqrt()
        })
        .sum()
}

/// Normalized detection statistic together with the partial correlations it
/// was built from.
#[derive(Debug, Clone)]
pub struct DetectionStatistic {
    pub series: CorrelationSeries<f64>,
    pub partials: PartialCorrelations,
    /// The normalization `D`.
    pub normalization: f64,
    /// Lag of the global maximum.
    pub peak_lag: i64,
    pub signal_len: usize,
    pub sync_len: usize,
    pub representative_id: u32,
}

impl DetectionStatistic {
    pub fn with_representative_id(mut self, id: u32) -> Self {
        self.representative_id = id;
        self
    }
}

pub fn detection_statistic(
    s: &IqSignal,
    eps: &SyncSequence,
    lags: Range<i64>,
) -> Result<DetectionStatistic> {
    let partials = partial_correlations(s, eps, lags)?;
    let mut values = partials.magnitude_sum();
    let lags = partials.lags();
    let (peak_lag, normalization) = if values.is_empty() {
        (lags.start, 0.0)
    } else {
        let peak = lags.start + argmax(values.iter().copied()) as i64;
        (peak, aligned_normalization(s.samples(), eps, peak))
    };
    if normalization > 0.0 {
        for v in values.iter_mut() {
            *v /= normalization;
        }
    } else {
        // Zero signal energy at the peak means every magnitude sum is zero.
        values.fill(0.0);
    }
    Ok(DetectionStatistic {
        series: CorrelationSeries {
            values,
            lag_origin: lags.start,
            normalized: true,
        },
        partials,
        normalization,
        peak_lag,
        signal_len: s.len(),
        sync_len: eps.len(),
        representative_id: 0,
    })
}

/// A detected burst.
#[derive(Debug, Clone, PartialEq)]
pub struct DetectionEvent {
    pub sample_index: i64,
    pub statistic: f64,
    pub partials: [C64; SUBSEQUENCES],
    /// `statistic == sum_k |partials[k]| / normalization`.
    pub normalization: f64,
    pub representative_id: u32,
    /// The burst lies within one sequence length of either record edge.
    pub low_confidence: bool,
}

impl DetectionEvent {
    pub fn magnitude_sum(&self) -> f64 {
        self.partials.iter().map(|p| p.norm()).sum()
    }
}

pub(crate) fn is_low_confidence(lag: i64, sync_len: usize, signal_len: usize) -> bool {
    let lc = sync_len as i64;
    lag < lc || lag + 2 * lc > signal_len as i64
}

/// Rejects a threshold outside (0, 1) or a window not longer than the sequence.
pub fn validate_picking(threshold: f64, window: usize, sync_len: usize) -> Result<()> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold {threshold} must lie strictly between 0 and 1"
        )));
    }
    if window <= sync_len {
        return Err(Error::InvalidParameter(format!(
            "window of {window} samples must exceed the sequence length {sync_len}"
        )));
    }
    Ok(())
}

/// Every lag whose statistic exceeds `threshold` and is the maximum within
/// `window / 2` lags on either side. Ties go to the smaller lag.
pub fn detect_bursts(
    stat: &DetectionStatistic,
    threshold: f64,
    window: usize,
) -> Result<Vec<DetectionEvent>> {
    validate_picking(threshold, window, stat.sync_len)?;
    let values = &stat.series.values;
    let picks = window_maxima(values, window / 2, 0..values.len());
    Ok(picks
        .into_iter()
        .filter(|&i| values[i] > threshold)
        .map(|i| {
            let lag = stat.series.lag_origin + i as i64;
            DetectionEvent {
                sample_index: lag,
                statistic: values[i],
                partials: stat.partials.all_at(lag),
                normalization: stat.normalization,
                representative_id: stat.representative_id,
                low_confidence: is_low_confidence(lag, stat.sync_len, stat.signal_len),
            }
        })
        .collect())
}

/// Indices `i` in `decide` with `values[i] > values[j]` for `j` in
/// `[i - half, i)` and `values[i] >= values[j]` for `j` in `(i, i + half]`,
/// windows clipped to the slice.
pub(crate) fn window_maxima(values: &[f64], half: usize, decide: Range<usize>) -> Vec<usize> {
    let n = values.len();
    let decide = decide.start.min(n)..decide.end.min(n);
    if decide.is_empty() {
        return Vec::new();
    }
    let mut left_ok = vec![false; decide.len()];
    let mut dq: VecDeque<usize> = VecDeque::new();
    for i in decide.start.saturating_sub(half)..decide.end {
        while dq.front().is_some_and(|&f| f + half < i) {
            dq.pop_front();
        }
        if i >= decide.start {
            left_ok[i - decide.start] = dq.front().is_none_or(|&f| values[f] < values[i]);
        }
        while dq.back().is_some_and(|&b| values[b] <= values[i]) {
            dq.pop_back();
        }
        dq.push_back(i);
    }
    dq.clear();
    let mut picks = Vec::new();
    let last = (decide.end + half).min(n);
    for i in (decide.start..last).rev() {
        while dq.front().is_some_and(|&f| f > i + half) {
            dq.pop_front();
        }
        if i < decide.end
            && left_ok[i - decide.start]
            && dq.front().is_none_or(|&f| values[f] <= values[i])
        {
            picks.push(i);
        }
        while dq.back().is_some_and(|&b| values[b] <= values[i]) {
            dq.pop_back();
        }
        dq.push_back(i);
    }
    picks.reverse();
    picks
}

fn argmax(values: impl Iterator<Item = f64>) -> usize {
    let mut best = (0, f64::NEG_INFINITY);
    for (i, v) in values.enumerate() {
        if v > best.1 {
            best = (i, v);
        }
    }
    best.0
}

pub(crate) fn check_rates(a: f64, b: f64) -> Result<()> {
    if (a - b).abs() > 1e-9 * a.abs().max(b.abs()) {
        return Err(Error::SampleRateMismatch(a, b));
    }
    Ok(())
}

fn check_inputs(s: &IqSignal, eps: &SyncSequence) -> Result<()> {
    check_rates(s.sample_rate(), eps.sample_rate())?;
    if eps.subseq_energy() == 0.0 {
        return Err(Error::ZeroEnergy("representative"));
    }
    if s.len() < eps.len() {
        return Err(Error::LengthMismatch {
            signal: s.len(),
            template: eps.len(),
        });
    }
    Ok(())
}
