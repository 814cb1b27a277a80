//! Overlap-save cross-correlation against a fixed template.

use std::ops::Range;
use std::sync::Arc;

use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};
use crate::signal_model::C64;

const MIN_FFT_LEN: usize = 4096;

/// Correlates signals against one template:
/// `out[p] = sum_m signal[p + m] * conj(template[m])`.
pub struct FftCorrelator {
    template_len: usize,
    fft_len: usize,
    /// `conj(FFT(template))`, scaled by `1 / fft_len`.
    template_spectrum: Vec<C64>,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftCorrelator {
    pub fn new(template: &[C64]) -> Result<Self> {
        let fft_len = (4 * template.len()).max(MIN_FFT_LEN).next_power_of_two();
        Self::with_fft_len(template, fft_len)
    }

    pub fn with_fft_len(template: &[C64], fft_len: usize) -> Result<Self> {
        if template.is_empty() {
            return Err(Error::InvalidParameter("empty correlation template".into()));
        }
        if fft_len < template.len() {
            return Err(Error::InvalidParameter(format!(
                "FFT length {fft_len} shorter than template length {}",
                template.len()
            )));
        }
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(fft_len);
        let inverse = planner.plan_fft_inverse(fft_len);
        let mut spectrum = vec![C64::new(0.0, 0.0); fft_len];
        spectrum[..template.len()].copy_from_slice(template);
        forward.process(&mut spectrum);
        let scale = 1.0 / fft_len as f64;
        for v in spectrum.iter_mut() {
            *v = v.conj() * scale;
        }
        Ok(FftCorrelator {
            template_len: template.len(),
            fft_len,
            template_spectrum: spectrum,
            forward,
            inverse,
        })
    }

    pub fn template_len(&self) -> usize {
        self.template_len
    }

    /// Outputs produced per FFT block.
    fn step(&self) -> usize {
        self.fft_len - self.template_len + 1
    }

    /// Fully overlapping lags only: `signal.len() - template_len + 1` values,
    /// or none if the signal is shorter than the template.
    pub fn correlate_valid(&self, signal: &[C64]) -> Vec<C64> {
        let n_out = (signal.len() + 1).saturating_sub(self.template_len);
        let mut out = vec![C64::new(0.0, 0.0); n_out];
        self.correlate_valid_into(signal, &mut out);
        out
    }

    /// Writes `out.len()` lags starting at lag 0. Requires
    /// `out.len() + template_len - 1 <= signal.len()`.
    pub fn correlate_valid_into(&self, signal: &[C64], out: &mut [C64]) {
        if out.is_empty() {
            return;
        }
        assert!(
            out.len() + self.template_len <= signal.len() + 1,
            "output longer than the valid correlation"
        );
        let step = self.step();
        let fft_len = self.fft_len;
        let scratch_len = self
            .forward
            .get_inplace_scratch_len()
            .max(self.inverse.get_inplace_scratch_len());
        out.par_chunks_mut(step).enumerate().for_each_init(
            || {
                (
                    vec![C64::new(0.0, 0.0); fft_len],
                    vec![C64::new(0.0, 0.0); scratch_len],
                )
            },
            |(buf, scratch), (block, chunk)| {
                let start = block * step;
                let end = (start + fft_len).min(signal.len());
                let avail = end - start;
                buf[..avail].copy_from_slice(&signal[start..end]);
                buf[avail..].fill(C64::new(0.0, 0.0));
                self.forward.process_with_scratch(buf, scratch);
                for (b, t) in buf.iter_mut().zip(&self.template_spectrum) {
                    *b *= t;
                }
                self.inverse.process_with_scratch(buf, scratch);
                chunk.copy_from_slice(&buf[..chunk.len()]);
            },
        );
    }

    /// Lags `p` in `lags`, treating samples outside the signal as zero.
    pub fn correlate_range(&self, signal: &[C64], lags: Range<i64>) -> Vec<C64> {
        if lags.is_empty() {
            return Vec::new();
        }
        let n = signal.len() as i64;
        let need_end = lags.end - 1 + self.template_len as i64;
        if lags.start >= 0 && need_end <= n {
            let slice = &signal[lags.start as usize..need_end as usize];
            return self.correlate_valid(slice);
        }
        let mut padded = vec![C64::new(0.0, 0.0); (need_end - lags.start) as usize];
        let lo = lags.start.max(0);
        let hi = need_end.min(n);
        if lo < hi {
            padded[(lo - lags.start) as usize..(hi - lags.start) as usize]
                .copy_from_slice(&signal[lo as usize..hi as usize]);
        }
        self.correlate_valid(&padded)
    }
}

/// `sum_m signal[start + m] * conj(template[m])` for a single lag, zero
/// outside the signal.
pub fn dot_at(signal: &[C64], template: &[C64], start: i64) -> C64 {
    let mut acc = C64::new(0.0, 0.0);
    for (m, t) in template.iter().enumerate() {
        let i = start + m as i64;
        if i >= 0 && (i as usize) < signal.len() {
            acc += signal[i as usize] * t.conj();
        }
    }
    acc
}
