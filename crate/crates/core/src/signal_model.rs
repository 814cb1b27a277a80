//! Burst signal model: the eight-fold synchronization sequence, the Starlink
//! uplink and downlink structural constants, and seeded synthesis of noisy,
//! frequency-shifted bursts.
//!
//! A synchronization sequence is a cyclic prefix followed by eight copies of
//! one subsequence of length `L`, where copy `k` is multiplied by
//! `sign_pattern[k]`. The prefix is the last `gamma * L` samples of copy 0.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};
use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// Number of subsequences in a synchronization sequence.
pub const SUBSEQUENCES: usize = 8;

/// `-c0 = c1 = ... = c7`.
pub const DEFAULT_SIGN_PATTERN: [i8; SUBSEQUENCES] = [-1, 1, 1, 1, 1, 1, 1, 1];

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Constants of the Starlink user uplink burst structure, measured at
/// `SAMPLE_RATE`.
pub mod uplink {
    use super::{PrefixFraction, SyncSequence};

    pub const SAMPLE_RATE: f64 = 562_500_000.0;
    pub const SUBSEQ_LEN: usize = 1200;
    pub const PREFIX_LEN: usize = 220;
    pub const PREFIX_FRACTION: PrefixFraction = PrefixFraction::from_parts(220, 1200);
    pub const SUBCHANNEL_BANDWIDTH: f64 = 62_500_000.0;
    /// Burst repetition intervals in seconds.
    pub const BRI_SET: [f64; 6] = [6.67e-3, 8.00e-3, 9.33e-3, 10.67e-3, 16.00e-3, 18.67e-3];
    /// Granularity of the burst duration in seconds.
    pub const DURATION_STEP: f64 = 17.87e-6;
    /// A frequently observed burst duration in seconds.
    pub const TYPICAL_BURST_DURATION: f64 = 0.84e-3;

    /// Seeded unit-magnitude QPSK stand-in for the (unpublished) uplink
    /// subsequence.
    pub fn sync_sequence(seed: u64) -> SyncSequence {
        SyncSequence::pseudo_random(SUBSEQ_LEN, PREFIX_FRACTION, SAMPLE_RATE, seed)
            .expect("uplink constants are consistent")
    }
}

/// Constants of the Starlink user downlink frame structure.
///
/// Synthesized downlink sequences hold each of the 127 symbols for
/// `OVERSAMPLING` samples so that the 1/32 cyclic prefix is an integer
/// number of samples.
pub mod downlink {
    use super::{PrefixFraction, SyncSequence};

    pub const SUBSEQ_DURATION: f64 = 4.27e-6;
    pub const SYMBOLS_PER_SUBSEQ: usize = 127;
    pub const PREFIX_FRACTION: PrefixFraction = PrefixFraction::from_parts(1, 32);
    pub const CHANNEL_BANDWIDTH: f64 = 240_000_000.0;
    pub const FRAME_PERIOD: f64 = 1.0 / 750.0;
    pub const SYMBOL_PERIOD: f64 = 4.17e-9;
    /// Symbols observed over the eight subsequences.
    pub const OBSERVED_SYMBOLS: usize = 8 * SYMBOLS_PER_SUBSEQ;
    pub const OVERSAMPLING: usize = 32;
    pub const SAMPLE_RATE: f64 = OVERSAMPLING as f64 / SYMBOL_PERIOD;
    pub const SUBSEQ_LEN: usize = SYMBOLS_PER_SUBSEQ * OVERSAMPLING;

    /// Seeded QPSK symbols, each held for `OVERSAMPLING` samples.
    pub fn sync_sequence(seed: u64) -> SyncSequence {
        let symbols = super::qpsk_sequence(SYMBOLS_PER_SUBSEQ, seed);
        let subseq = symbols
            .iter()
            .flat_map(|&s| std::iter::repeat_n(s, OVERSAMPLING))
            .collect();
        SyncSequence::new(
            subseq,
            PREFIX_FRACTION,
            super::DEFAULT_SIGN_PATTERN,
            SAMPLE_RATE,
        )
        .expect("downlink constants are consistent")
    }
}

/// Relative prefix length `gamma` as an exact ratio.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PrefixFraction {
    numer: u32,
    denom: u32,
}

impl PrefixFraction {
    pub const ZERO: PrefixFraction = PrefixFraction { numer: 0, denom: 1 };

    const fn from_parts(numer: u32, denom: u32) -> Self {
        PrefixFraction { numer, denom }
    }

    pub fn new(numer: u32, denom: u32) -> Result<Self> {
        if denom == 0 {
            return Err(Error::InvalidParameter(
                "prefix fraction denominator is zero".into(),
            ));
        }
        if numer > denom {
            return Err(Error::InvalidParameter(format!(
                "prefix fraction {numer}/{denom} exceeds one subsequence"
            )));
        }
        Ok(PrefixFraction { numer, denom })
    }

    pub fn numer(&self) -> u32 {
        self.numer
    }

    pub fn denom(&self) -> u32 {
        self.denom
    }

    pub fn as_f64(&self) -> f64 {
        self.numer as f64 / self.denom as f64
    }

    /// Prefix length in samples for a subsequence of `subseq_len` samples.
    pub fn prefix_len(&self, subseq_len: usize) -> Result<usize> {
        let scaled = subseq_len as u128 * self.numer as u128;
        if !scaled.is_multiple_of(self.denom as u128) {
            return Err(Error::NonIntegralPrefix {
                fraction: self.to_string(),
                subseq_len,
            });
        }
        Ok((scaled / self.denom as u128) as usize)
    }
}

impl fmt::Display for PrefixFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.numer, self.denom)
    }
}

impl FromStr for PrefixFraction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::InvalidParameter(format!("cannot parse prefix fraction {s:?}"));
        match s.split_once('/') {
            Some((n, d)) => PrefixFraction::new(
                n.trim().parse().map_err(|_| bad())?,
                d.trim().parse().map_err(|_| bad())?,
            ),
            None => PrefixFraction::new(s.trim().parse().map_err(|_| bad())?, 1),
        }
    }
}

/// Synchronization sequence: cyclic prefix plus eight signed copies of one
/// subsequence.
#[derive(Debug, Clone, PartialEq)]
pub struct SyncSequence {
    subseq: Vec<C64>,
    prefix_fraction: PrefixFraction,
    prefix_len: usize,
    sign_pattern: [i8; SUBSEQUENCES],
    sample_rate: f64,
}

impl SyncSequence {
    pub fn new(
        subseq: Vec<C64>,
        prefix_fraction: PrefixFraction,
        sign_pattern: [i8; SUBSEQUENCES],
        sample_rate: f64,
    ) -> Result<Self> {
        if subseq.is_empty() {
            return Err(Error::InvalidParameter("empty subsequence".into()));
        }
        if let Some(s) = sign_pattern.iter().find(|s| s.abs() != 1) {
            return Err(Error::InvalidParameter(format!(
                "sign pattern entry {s} is not +1 or -1"
            )));
        }
        check_sample_rate(sample_rate)?;
        let prefix_len = prefix_fraction.prefix_len(subseq.len())?;
        Ok(SyncSequence {
            subseq,
            prefix_fraction,
            prefix_len,
            sign_pattern,
            sample_rate,
        })
    }

    /// Unit-magnitude QPSK subsequence drawn from `seed`, default sign pattern.
    pub fn pseudo_random(
        subseq_len: usize,
        prefix_fraction: PrefixFraction,
        sample_rate: f64,
        seed: u64,
    ) -> Result<Self> {
        SyncSequence::new(
            qpsk_sequence(subseq_len, seed),
            prefix_fraction,
            DEFAULT_SIGN_PATTERN,
            sample_rate,
        )
    }

    pub fn subseq(&self) -> &[C64] {
        &self.subseq
    }

    pub fn subseq_len(&self) -> usize {
        self.subseq.len()
    }

    pub fn prefix_len(&self) -> usize {
        self.prefix_len
    }

    pub fn prefix_fraction(&self) -> PrefixFraction {
        self.prefix_fraction
    }

    pub fn sign_pattern(&self) -> [i8; SUBSEQUENCES] {
        self.sign_pattern
    }

    pub fn sign(&self, k: usize) -> f64 {
        self.sign_pattern[k] as f64
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    /// Total rendered length `(8 + gamma) * L`.
    pub fn len(&self) -> usize {
        self.prefix_len + SUBSEQUENCES * self.subseq.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Offset of subsequence `k` from the start of the sequence.
    pub fn subsequence_offset(&self, k: usize) -> usize {
        self.prefix_len + k * self.subseq.len()
    }

    /// `sign_pattern[k] * subseq`.
    pub fn subsequence(&self, k: usize) -> Vec<C64> {
        let s = self.sign(k);
        self.subseq.iter().map(|&c| c * s).collect()
    }

    /// Energy of one subsequence; the sign does not enter.
    pub fn subseq_energy(&self) -> f64 {
        energy(&self.subseq)
    }

    pub fn render(&self) -> Vec<C64> {
        let l = self.subseq.len();
        let mut out = Vec::with_capacity(self.len());
        let s0 = self.sign(0);
        out.extend(self.subseq[l - self.prefix_len..].iter().map(|&c| c * s0));
        for k in 0..SUBSEQUENCES {
            let s = self.sign(k);
            out.extend(self.subseq.iter().map(|&c| c * s));
        }
        out
    }
}

/// Complex baseband samples at a known sample rate.
#[derive(Debug, Clone, PartialEq)]
pub struct IqSignal {
    samples: Vec<C64>,
    sample_rate: f64,
}

impl IqSignal {
    pub fn new(samples: Vec<C64>, sample_rate: f64) -> Result<Self> {
        check_sample_rate(sample_rate)?;
        Ok(IqSignal {
            samples,
            sample_rate,
        })
    }

    pub fn samples(&self) -> &[C64] {
        &self.samples
    }

    pub fn samples_mut(&mut self) -> &mut [C64] {
        &mut self.samples
    }

    pub fn into_samples(self) -> Vec<C64> {
        self.samples
    }

    pub fn sample_rate(&self) -> f64 {
        self.sample_rate
    }

    pub fn sample_period(&self) -> f64 {
        1.0 / self.sample_rate
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Every sample multiplied by the same complex constant.
    pub fn scaled(&self, gain: C64) -> IqSignal {
        IqSignal {
            samples: self.samples.iter().map(|&s| s * gain).collect(),
            sample_rate: self.sample_rate,
        }
    }
}

/// One isolated burst with noise-only guards around it.
#[derive(Debug, Clone)]
pub struct BurstSpec {
    pub sync: SyncSequence,
    pub data_len: usize,
    /// Aggregate carrier and Doppler offset, constant over the burst.
    pub freq_offset: f64,
    pub gain: C64,
    pub guard_before: usize,
    pub guard_after: usize,
}

impl BurstSpec {
    pub fn burst_len(&self) -> usize {
        self.sync.len() + self.data_len
    }

    pub fn total_len(&self) -> usize {
        self.guard_before + self.burst_len() + self.guard_after
    }
}

/// Noisy, frequency-shifted burst per `spec`. The same `(spec, seed)` always
/// produces bit-identical samples.
pub fn synthesize_burst(spec: &BurstSpec, noise_variance: f64, seed: u64) -> Result<IqSignal> {
    let train = BurstTrain::new(
        spec.sync.clone(),
        vec![TrainBurst {
            start: spec.guard_before as u64,
            data_len: spec.data_len,
            freq_offset: spec.freq_offset,
            gain: spec.gain,
        }],
        spec.total_len() as u64,
        noise_variance,
    )?;
    Ok(train.synthesize(seed))
}

/// Multiplies sample `n` by `exp(j 2 pi delta_f n / fs)`.
pub fn apply_frequency_shift(signal: &IqSignal, delta_f: f64) -> IqSignal {
    let mut out = signal.clone();
    rotate(&mut out.samples, delta_f / signal.sample_rate, 0);
    out
}

/// Multiplies `samples[i]` by `exp(j 2 pi cycles_per_sample (first + i))`.
pub fn rotate(samples: &mut [C64], cycles_per_sample: f64, first: u64) {
    if cycles_per_sample == 0.0 {
        return;
    }
    for (i, s) in samples.iter_mut().enumerate() {
        *s *= phasor(cycles_per_sample, first + i as u64);
    }
}

/// `exp(j 2 pi cycles_per_sample n)` with the phase reduced modulo one cycle
/// before scaling, so large `n` keep full precision.
#[inline]
pub fn phasor(cycles_per_sample: f64, n: u64) -> C64 {
    let cycles = (cycles_per_sample * n as f64).fract();
    C64::from_polar(1.0, TAU * cycles)
}

pub fn energy(samples: &[C64]) -> f64 {
    samples.iter().map(|s| s.norm_sqr()).sum()
}

/// Unit-magnitude QPSK symbols drawn from `seed`.
pub fn qpsk_sequence(len: usize, seed: u64) -> Vec<C64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| qpsk_symbol(&mut rng)).collect()
}

fn qpsk_symbol<R: Rng>(rng: &mut R) -> C64 {
    let bits: u8 = rng.random_range(0..4);
    let re = if bits & 1 == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    let im = if bits & 2 == 0 {
        FRAC_1_SQRT_2
    } else {
        -FRAC_1_SQRT_2
    };
    C64::new(re, im)
}

fn check_sample_rate(sample_rate: f64) -> Result<()> {
    if !(sample_rate.is_finite() && sample_rate > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "sample rate {sample_rate} must be positive and finite"
        )));
    }
    Ok(())
}

/// One burst inside a [`BurstTrain`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainBurst {
    /// Absolute index of the first sync-sequence sample.
    pub start: u64,
    pub data_len: usize,
    pub freq_offset: f64,
    pub gain: C64,
}

/// A record of non-overlapping bursts in complex white Gaussian noise.
#[derive(Debug, Clone)]
pub struct BurstTrain {
    sync: SyncSequence,
    rendered: Vec<C64>,
    bursts: Vec<TrainBurst>,
    len: u64,
    noise_variance: f64,
}

impl BurstTrain {
    pub fn new(
        sync: SyncSequence,
        bursts: Vec<TrainBurst>,
        len: u64,
        noise_variance: f64,
    ) -> Result<Self> {
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance {noise_variance} must be finite and non-negative"
            )));
        }
        let sync_len = sync.len() as u64;
        let mut end = 0u64;
        for (i, b) in bursts.iter().enumerate() {
            if !b.freq_offset.is_finite() || !b.gain.is_finite() {
                return Err(Error::InvalidParameter(format!(
                    "burst {i}: non-finite parameter"
                )));
            }
            if b.start < end {
                return Err(Error::InvalidParameter(format!(
                    "burst {i} starts at {} before the previous burst ends at {end}",
                    b.start
                )));
            }
            end = b.start + sync_len + b.data_len as u64;
        }
        if end > len {
            return Err(Error::InvalidParameter(format!(
                "bursts end at sample {end}, beyond record length {len}"
            )));
        }
        let rendered = sync.render();
        Ok(BurstTrain {
            sync,
            rendered,
            bursts,
            len,
            noise_variance,
        })
    }

    /// `count` identical-length bursts every `spacing` samples after a
    /// leading guard; `freq_offset(i)` sets the offset of burst `i`.
    #[allow(clippy::too_many_arguments)]
    pub fn periodic(
        sync: SyncSequence,
        count: usize,
        spacing: u64,
        lead_guard: u64,
        trail_guard: u64,
        data_len: usize,
        noise_variance: f64,
        freq_offset: impl Fn(usize) -> f64,
    ) -> Result<Self> {
        let burst_len = (sync.len() + data_len) as u64;
        if count > 1 && spacing < burst_len {
            return Err(Error::InvalidParameter(format!(
                "spacing {spacing} is shorter than the burst length {burst_len}"
            )));
        }
        let bursts = (0..count)
            .map(|i| TrainBurst {
                start: lead_guard + i as u64 * spacing,
                data_len,
                freq_offset: freq_offset(i),
                gain: C64::new(1.0, 0.0),
            })
            .collect();
        let len = match count {
            0 => lead_guard + trail_guard,
            n => lead_guard + (n as u64 - 1) * spacing + burst_len + trail_guard,
        };
        BurstTrain::new(sync, bursts, len, noise_variance)
    }

    pub fn sync(&self) -> &SyncSequence {
        &self.sync
    }

    pub fn bursts(&self) -> &[TrainBurst] {
        &self.bursts
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn sample_rate(&self) -> f64 {
        self.sync.sample_rate()
    }

    pub fn generator(&self, seed: u64) -> TrainGenerator<'_> {
        let mut noise_rng = ChaCha8Rng::seed_from_u64(seed);
        noise_rng.set_stream(0);
        let mut data_rng = ChaCha8Rng::seed_from_u64(seed);
        data_rng.set_stream(1);
        TrainGenerator {
            train: self,
            position: 0,
            next_burst: 0,
            noise_rng,
            data_rng,
            noise_scale: (self.noise_variance / 2.0).sqrt(),
        }
    }

    pub fn synthesize(&self, seed: u64) -> IqSignal {
        let mut samples = vec![C64::new(0.0, 0.0); self.len as usize];
        self.generator(seed).fill(&mut samples);
        IqSignal {
            samples,
            sample_rate: self.sample_rate(),
        }
    }
}

/// Produces the samples of a [`BurstTrain`] in order, chunk by chunk. The
/// output does not depend on how the record is split into chunks.
pub struct TrainGenerator<'a> {
    train: &'a BurstTrain,
    position: u64,
    next_burst: usize,
    noise_rng: ChaCha8Rng,
    data_rng: ChaCha8Rng,
    noise_scale: f64,
}

impl TrainGenerator<'_> {
    pub fn position(&self) -> u64 {
        self.position
    }

    pub fn remaining(&self) -> u64 {
        self.train.len - self.position
    }

    /// Fills `out` with the next samples and returns how many were written
    /// (fewer than `out.len()` only at the end of the record).
    pub fn fill(&mut self, out: &mut [C64]) -> usize {
        let n = (out.len() as u64).min(self.remaining()) as usize;
        let out = &mut out[..n];
        for s in out.iter_mut() {
            *s = C64::new(0.0, 0.0);
        }
        self.add_bursts(out);
        if self.noise_scale > 0.0 {
            for s in out.iter_mut() {
                let re: f64 = self.noise_rng.sample(StandardNormal);
                let im: f64 = self.noise_rng.sample(StandardNormal);
                *s += C64::new(re, im) * self.noise_scale;
            }
        }
        self.position += n as u64;
        n
    }

    fn add_bursts(&mut self, out: &mut [C64]) {
        let chunk_start = self.position;
        let chunk_end = chunk_start + out.len() as u64;
        let sync_len = self.train.rendered.len() as u64;
        let fs = self.train.sample_rate();
        let mut idx = self.next_burst;
        while let Some(b) = self.train.bursts.get(idx) {
            if b.start >= chunk_end {
                break;
            }
            let burst_end = b.start + sync_len + b.data_len as u64;
            let from = b.start.max(chunk_start);
            let to = burst_end.min(chunk_end);
            let cps = b.freq_offset / fs;
            for abs in from..to {
                let n = abs - b.start;
                let base = if n < sync_len {
                    self.train.rendered[n as usize]
                } else {
                    qpsk_symbol(&mut self.data_rng)
                };
                out[(abs - chunk_start) as usize] = b.gain * base * phasor(cps, n);
            }
            if burst_end <= chunk_end {
                idx += 1;
            } else {
                break;
            }
        }
        self.next_burst = idx;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_train_spec(sync: SyncSequence) -> BurstSpec {
        BurstSpec {
            sync,
            data_len: 0,
            freq_offset: 0.0,
            gain: C64::new(1.0, 0.0),
            guard_before: 0,
            guard_after: 0,
        }
    }

    #[test]
    fn uplink_sequence_length() {
        let seq = uplink::sync_sequence(1);
        assert_eq!(seq.prefix_len(), 220);
        assert_eq!(seq.len(), 9820);
        assert_eq!(seq.render().len(), 9820);
    }

    #[test]
    fn unit_subsequence_renders_ones() {
        let seq =
            SyncSequence::new(vec![C64::new(1.0, 0.0)], PrefixFraction::ZERO, [1; 8], 1.0).unwrap();
        assert_eq!(seq.render(), vec![C64::new(1.0, 0.0); 8]);
    }

    #[test]
    fn downlink_prefix_is_one_32nd() {
        let seq = downlink::sync_sequence(3);
        let len = seq.subseq_len();
        assert_eq!(len, 127 * 32);
        assert_eq!(seq.prefix_len(), len / 32);
        assert_eq!(seq.len() * 32, (8 * 32 + 1) * len);
    }

    #[test]
    fn prefix_is_cyclic_copy_of_first_subsequence() {
        let seq = uplink::sync_sequence(9);
        let r = seq.render();
        let p = seq.prefix_len();
        let l = seq.subseq_len();
        assert_eq!(&r[..p], &r[p + l - p..p + l]);
        for k in 1..8 {
            let a = &r[p + k * l..p + (k + 1) * l];
            assert_eq!(a, seq.subseq());
        }
        let first: Vec<C64> = r[p..p + l].iter().map(|c| -c).collect();
        assert_eq!(first, seq.subseq());
    }

    #[test]
    fn rejects_non_integral_prefix_and_empty_subseq() {
        let err = SyncSequence::new(
            vec![C64::new(1.0, 0.0); 127],
            PrefixFraction::new(1, 32).unwrap(),
            DEFAULT_SIGN_PATTERN,
            1.0,
        );
        assert!(matches!(err, Err(Error::NonIntegralPrefix { .. })));
        let err = SyncSequence::new(vec![], PrefixFraction::ZERO, DEFAULT_SIGN_PATTERN, 1.0);
        assert!(matches!(err, Err(Error::InvalidParameter(_))));
        let err = SyncSequence::new(
            vec![C64::new(1.0, 0.0)],
            PrefixFraction::ZERO,
            [1, 1, 1, 0, 1, 1, 1, 1],
            1.0,
        );
        assert!(err.is_err());
    }

    #[test]
    fn prefix_fraction_parses() {
        assert_eq!(
            "220/1200".parse::<PrefixFraction>().unwrap(),
            uplink::PREFIX_FRACTION
        );
        assert_eq!("0".parse::<PrefixFraction>().unwrap().as_f64(), 0.0);
        assert!("3/2".parse::<PrefixFraction>().is_err());
        assert!("a/b".parse::<PrefixFraction>().is_err());
    }

    #[test]
    fn noiseless_burst_is_rendered_sequence() {
        let seq = uplink::sync_sequence(4);
        let sig = synthesize_burst(&unit_train_spec(seq.clone()), 0.0, 77).unwrap();
        assert_eq!(sig.samples(), seq.render().as_slice());
    }

    #[test]
    fn frequency_offset_phase_matches_direct_computation() {
        let seq = uplink::sync_sequence(4);
        let base = synthesize_burst(&unit_train_spec(seq.clone()), 0.0, 1).unwrap();
        let mut spec = unit_train_spec(seq);
        spec.freq_offset = 1e5;
        let shifted = synthesize_burst(&spec, 0.0, 1).unwrap();
        for n in [1usize, 1000, 5625, 9000] {
            let expected = TAU * 1e5 * n as f64 / 562.5e6;
            let got = (shifted.samples()[n] * base.samples()[n].conj()).arg();
            let diff = (got - expected).rem_euclid(TAU);
            let diff = diff.min(TAU - diff);
            assert!(diff < 1e-9, "n={n}: {diff}");
        }
        // 1e5 Hz over 5625 samples at 562.5 MHz is exactly one cycle.
        assert!((shifted.samples()[5625] - base.samples()[5625]).norm() < 1e-9);
    }

    #[test]
    fn noise_power_matches_requested_snr() {
        let seq = SyncSequence::pseudo_random(1000, PrefixFraction::ZERO, 1.0, 3).unwrap();
        let spec = BurstSpec {
            sync: seq.clone(),
            data_len: 0,
            freq_offset: 0.0,
            gain: C64::new(0.0, 0.0),
            guard_before: 1_000_000,
            guard_after: 0,
        };
        let sig = synthesize_burst(&spec, 100.0, 5).unwrap();
        let noise_power = energy(&sig.samples()[..1_000_000]) / 1e6;
        let snr_db = 10.0 * (1.0 / noise_power).log10();
        assert!((snr_db + 20.0).abs() < 0.5, "{snr_db}");
    }

    #[test]
    fn seed_changes_noise_only() {
        let seq = uplink::sync_sequence(2);
        let mut spec = unit_train_spec(seq.clone());
        spec.data_len = 500;
        spec.guard_before = 300;
        let a = synthesize_burst(&spec, 0.0, 1).unwrap();
        let b = synthesize_burst(&spec, 0.0, 2).unwrap();
        let sync_region = 300..300 + seq.len();
        assert_eq!(&a.samples()[sync_region.clone()], &b.samples()[sync_region]);
        assert_ne!(
            &a.samples()[300 + seq.len()..],
            &b.samples()[300 + seq.len()..]
        );
        let again = synthesize_burst(&spec, 0.0, 1).unwrap();
        assert_eq!(a, again);
    }

    #[test]
    fn sync_region_has_unit_power() {
        let seq = uplink::sync_sequence(8);
        let sig = synthesize_burst(&unit_train_spec(seq), 0.0, 0).unwrap();
        let p = energy(sig.samples()) / sig.len() as f64;
        assert!((0.99..=1.01).contains(&p));
    }

    #[test]
    fn frequency_shift_identities() {
        let sig = IqSignal::new(qpsk_sequence(4096, 11), 562.5e6).unwrap();
        assert_eq!(apply_frequency_shift(&sig, 0.0), sig);
        let back = apply_frequency_shift(&apply_frequency_shift(&sig, 123_456.7), -123_456.7);
        let err = sig
            .samples()
            .iter()
            .zip(back.samples())
            .map(|(a, b)| (a - b).norm())
            .fold(0.0, f64::max);
        assert!(err < 1e-12, "{err}");
        let aliased = apply_frequency_shift(&sig, sig.sample_rate());
        assert_eq!(aliased, sig);
    }

    #[test]
    fn generator_is_chunking_invariant() {
        let seq =
            SyncSequence::pseudo_random(64, PrefixFraction::new(1, 4).unwrap(), 1e6, 1).unwrap();
        let train =
            BurstTrain::periodic(seq, 3, 2000, 100, 50, 300, 0.5, |i| 1e3 * i as f64).unwrap();
        let whole = train.synthesize(9);
        let mut gen = train.generator(9);
        let mut pieces = Vec::new();
        let mut buf = vec![C64::new(0.0, 0.0); 777];
        loop {
            let n = gen.fill(&mut buf);
            if n == 0 {
                break;
            }
            pieces.extend_from_slice(&buf[..n]);
        }
        assert_eq!(pieces, whole.samples());
        assert_eq!(train.len(), 100 + 2 * 2000 + (64 * 8 + 16 + 300) + 50);
    }

    #[test]
    fn train_rejects_overlap() {
        let seq = SyncSequence::pseudo_random(64, PrefixFraction::ZERO, 1e6, 1).unwrap();
        let b = |start| TrainBurst {
            start,
            data_len: 0,
            freq_offset: 0.0,
            gain: C64::new(1.0, 0.0),
        };
        assert!(BurstTrain::new(seq.clone(), vec![b(0), b(100)], 1000, 0.0).is_err());
        assert!(BurstTrain::new(seq.clone(), vec![b(0), b(512)], 1024, 0.0).is_ok());
        assert!(BurstTrain::new(seq, vec![b(600)], 1000, 0.0).is_err());
    }
}
