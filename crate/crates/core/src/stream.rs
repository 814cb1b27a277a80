//! Chunked burst detection for records too large to hold in memory.
//!
//! [`StreamingDetector`] produces the same events as
//! [`detection_statistic`](crate::detector::detection_statistic) over the
//! valid lags followed by [`detect_bursts`](crate::detector::detect_bursts),
//! while holding only one processing chunk plus a window of context.

use crate::correlate::FftCorrelator;
use crate::detector::{is_low_confidence, validate_picking, window_maxima, DetectionEvent};
use crate::error::Result;
use crate::signal_model::{energy, SyncSequence, C64, SUBSEQUENCES};

const DEFAULT_CHUNK: usize = 1 << 20;

#[derive(Debug, Clone, Copy)]
struct Peak {
    lag: usize,
    sum: f64,
    normalization: f64,
}

/// Result of a streaming detection run.
#[derive(Debug, Clone)]
pub struct StreamOutcome {
    pub events: Vec<DetectionEvent>,
    pub normalization: f64,
    pub peak_lag: Option<usize>,
    pub samples: usize,
}

pub struct StreamingDetector {
    eps: SyncSequence,
    correlator: FftCorrelator,
    offsets: [usize; SUBSEQUENCES],
    signs: [f64; SUBSEQUENCES],
    eps_energy: f64,
    threshold: f64,
    half: usize,
    chunk: usize,
    representative_id: u32,
    // Raw samples from absolute index `buf_start`.
    buf: Vec<C64>,
    buf_start: usize,
    total: usize,
    // Correlation against the subsequence from absolute position `x_start`.
    x: Vec<C64>,
    xmag: Vec<f64>,
    x_start: usize,
    // Un-normalized magnitude sums from lag `sum_start`.
    sums: Vec<f64>,
    sum_start: usize,
    decided: usize,
    candidates: Vec<(usize, f64, [C64; SUBSEQUENCES])>,
    peak: Option<Peak>,
}

impl StreamingDetector {
    pub fn new(eps: SyncSequence, threshold: f64, window: usize) -> Result<Self> {
        validate_picking(threshold, window, eps.len())?;
        if eps.subseq_energy() == 0.0 {
            return Err(crate::error::Error::ZeroEnergy("representative"));
        }
        let correlator = FftCorrelator::new(eps.subseq())?;
        let offsets = std::array::from_fn(|k| eps.subsequence_offset(k));
        let signs = std::array::from_fn(|k| eps.sign(k));
        Ok(StreamingDetector {
            correlator,
            offsets,
            signs,
            eps_energy: eps.subseq_energy(),
            threshold,
            half: window / 2,
            chunk: DEFAULT_CHUNK,
            representative_id: 0,
            buf: Vec::new(),
            buf_start: 0,
            total: 0,
            x: Vec::new(),
            xmag: Vec::new(),
            x_start: offsets[0],
            sums: Vec::new(),
            sum_start: 0,
            decided: 0,
            candidates: Vec::new(),
            peak: None,
            eps,
        })
    }

    /// Samples accumulated before each processing pass.
    pub fn with_chunk(mut self, chunk: usize) -> Self {
        self.chunk = chunk.max(1);
        self
    }

    pub fn with_representative_id(mut self, id: u32) -> Self {
        self.representative_id = id;
        self
    }

    pub fn push(&mut self, samples: &[C64]) {
        self.buf.extend_from_slice(samples);
        self.total += samples.len();
        let x_end = self.x_start + self.x.len();
        if self.total >= x_end + self.chunk + self.eps.len() {
            self.process(false);
        }
    }

    pub fn finish(mut self) -> StreamOutcome {
        self.process(true);
        let normalization = self.peak.map_or(0.0, |p| p.normalization);
        let sync_len = self.eps.len();
        let events = if normalization > 0.0 {
            self.candidates
                .iter()
                .filter(|(_, sum, _)| sum / normalization > self.threshold)
                .map(|&(lag, sum, partials)| DetectionEvent {
                    sample_index: lag as i64,
                    statistic: sum / normalization,
                    partials,
                    normalization,
                    representative_id: self.representative_id,
                    low_confidence: is_low_confidence(lag as i64, sync_len, self.total),
                })
                .collect()
        } else {
            Vec::new()
        };
        StreamOutcome {
            events,
            normalization,
            peak_lag: self.peak.map(|p| p.lag),
            samples: self.total,
        }
    }

    fn process(&mut self, last: bool) {
        let l = self.eps.subseq_len();
        let x_end = self.x_start + self.x.len();
        let new_x_end = (self.total + 1).saturating_sub(l).max(x_end);
        if new_x_end > x_end {
            let from = x_end - self.buf_start;
            let to = self.total - self.buf_start;
            let old = self.x.len();
            self.x.resize(old + new_x_end - x_end, C64::new(0.0, 0.0));
            self.correlator
                .correlate_valid_into(&self.buf[from..to], &mut self.x[old..]);
            self.xmag.extend(self.x[old..].iter().map(|v| v.norm()));
        }

        let last_off = self.offsets[SUBSEQUENCES - 1];
        let next_lag = self.sum_start + self.sums.len();
        let sum_end = new_x_end.saturating_sub(last_off).max(next_lag);
        for lag in next_lag..sum_end {
            let sum: f64 = self
                .offsets
                .iter()
                .map(|off| self.xmag[lag + off - self.x_start])
                .sum();
            if self.peak.is_none_or(|p| sum > p.sum) {
                self.peak = Some(Peak {
                    lag,
                    sum,
                    normalization: self.normalization_at(lag),
                });
            }
            self.sums.push(sum);
        }

        let decide_end = if last {
            sum_end
        } else {
            sum_end.saturating_sub(self.half)
        };
        if decide_end > self.decided {
            let ctx = self.decided.saturating_sub(self.half).max(self.sum_start);
            let slice = &self.sums[ctx - self.sum_start..];
            let picks = window_maxima(slice, self.half, self.decided - ctx..decide_end - ctx);
            let floor = self.peak.map_or(0.0, |p| p.sum) * self.threshold;
            for i in picks {
                let lag = ctx + i;
                let sum = slice[i];
                if sum > floor {
                    let partials = std::array::from_fn(|k| {
                        self.x[lag + self.offsets[k] - self.x_start] * self.signs[k]
                    });
                    self.candidates.push((lag, sum, partials));
                }
            }
            self.decided = decide_end;
        }
        // Drop only the oldest candidates: later peaks raise the floor.
        if let Some(p) = self.peak {
            let floor = p.sum * self.threshold;
            self.candidates.retain(|c| c.1 > floor);
        }

        let keep_sums = self.decided.saturating_sub(self.half).max(self.sum_start);
        self.sums.drain(..keep_sums - self.sum_start);
        self.sum_start = keep_sums;

        let keep_x = (self.decided + self.offsets[0])
            .max(self.x_start)
            .min(new_x_end);
        self.x.drain(..keep_x - self.x_start);
        self.xmag.drain(..keep_x - self.x_start);
        self.x_start = keep_x;

        let keep_buf = (sum_end + self.offsets[0])
            .min(new_x_end)
            .min(self.total)
            .max(self.buf_start);
        self.buf.drain(..keep_buf - self.buf_start);
        self.buf_start = keep_buf;
    }

    fn normalization_at(&self, lag: usize) -> f64 {
        let l = self.eps.subseq_len();
        self.offsets
            .iter()
            .map(|off| {
                let start = lag + off - self.buf_start;
                (energy(&self.buf[start..start + l]) * self.eps_energy).sqrt()
            })
            .sum()
    }
}
