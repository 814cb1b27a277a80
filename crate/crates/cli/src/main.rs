//! `burstnav`: synthesize, detect and estimate bursts, and evaluate Doppler
//! curves and positioning bounds. Every table is written as CSV.
//!
//! All parameters are validated before any file is read or written.

use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use num_complex::Complex64;

use burstnav::bounds::{
    accuracy_map, db_to_linear, linear_to_db, mcrb_frequency, snr_at_receiver, AccuracyConfig,
    LinkBudget, MapAxis, SpectralFluxDensity,
};
use burstnav::detector::{
    aligned_normalization, partials_at, validate_picking, DetectionEvent, DEFAULT_THRESHOLD,
};
use burstnav::freq_estimator::{estimate, FrequencyGrid};
use burstnav::iq_io::{
    read_csv, read_iq, write_csv, Cell, IqReader, IqWriter, SampleFormat, Table,
};
use burstnav::orbit_doppler::{doppler_curve, time_grid, OverflightScenario};
use burstnav::signal_model::{
    downlink, uplink, BurstTrain, SyncSequence, TrainBurst, SPEED_OF_LIGHT,
};
use burstnav::stream::StreamingDetector;

const READ_CHUNK: usize = 1 << 20;

#[derive(Parser)]
#[command(
    name = "burstnav",
    version,
    about = "Burst detection and Doppler positioning bounds"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic burst train as an IQ capture.
    Synth(SynthArgs),
    /// Detect bursts in an IQ capture; writes sample_index,statistic,low_confidence.
    Detect(DetectArgs),
    /// Estimate the carrier offset of detected bursts; writes l_j,coarse,fine,g_j.
    Estimate(EstimateArgs),
    /// Received carrier frequency over one pass for several cross-track offsets.
    Doppler(DopplerArgs),
    /// Positioning accuracy bound over cross-track distance.
    Crb(CrbArgs),
    /// Receiver SNR and frequency MCRB of a link budget.
    Snr(SnrArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Profile {
    Uplink,
    Downlink,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Cf32le,
    Ci16le,
}

impl From<Format> for SampleFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Cf32le => SampleFormat::Cf32le,
            Format::Ci16le => SampleFormat::Ci16le,
        }
    }
}

#[derive(Args)]
struct RepresentativeArgs {
    /// Signal profile fixing subsequence length, prefix and sample rate.
    #[arg(long, value_enum, default_value = "uplink")]
    profile: Profile,
    /// Seed of the synthesized subsequence.
    #[arg(long, default_value_t = 1)]
    rep_seed: u64,
    /// IQ capture holding one measured subsequence; replaces the seeded one.
    #[arg(long)]
    representative: Option<PathBuf>,
}

impl RepresentativeArgs {
    fn validate(&self) -> Result<()> {
        if let Some(p) = &self.representative {
            check_input(p)?;
        }
        Ok(())
    }

    fn build(&self) -> Result<SyncSequence> {
        let seeded = match self.profile {
            Profile::Uplink => uplink::sync_sequence(self.rep_seed),
            Profile::Downlink => downlink::sync_sequence(self.rep_seed),
        };
        let Some(path) = &self.representative else {
            return Ok(seeded);
        };
        let rep =
            read_iq(path).with_context(|| format!("reading representative {}", path.display()))?;
        let seq = SyncSequence::new(
            rep.samples().to_vec(),
            seeded.prefix_fraction(),
            seeded.sign_pattern(),
            rep.sample_rate(),
        )?;
        Ok(seq)
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    rep: RepresentativeArgs,
    #[arg(long, default_value_t = 5)]
    bursts: usize,
    /// Burst repetition interval, s.
    #[arg(long, conflicts_with = "bri_ms")]
    bri: Option<f64>,
    #[arg(long)]
    bri_ms: Option<f64>,
    /// Burst duration including the sync sequence, s.
    #[arg(long, default_value_t = uplink::TYPICAL_BURST_DURATION)]
    burst_duration: f64,
    /// Burst-free samples before the first burst; defaults to twice the
    /// sync length.
    #[arg(long)]
    lead: Option<u64>,
    /// Burst-free samples after the last burst; defaults to twice the sync
    /// length.
    #[arg(long)]
    trail: Option<u64>,
    /// Per-sample SNR of the unit-power bursts; omit for a noiseless record.
    #[arg(long, allow_hyphen_values = true)]
    snr_db: Option<f64>,
    /// Carrier offset of the first burst, Hz.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    freq_offset: f64,
    /// Offset drift, Hz per second of burst start time.
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    freq_slope: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "cf32le")]
    format: Format,
    /// Ground-truth CSV with burst,start,freq_offset.
    #[arg(long)]
    truth: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    rep: RepresentativeArgs,
    /// Normalized statistic an event must exceed, in (0, 1).
    #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
    threshold: f64,
    /// Window length in samples; defaults to twice the sync length.
    #[arg(long)]
    window: Option<usize>,
    /// Events CSV; stdout if omitted.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EstimateArgs {
    #[arg(long)]
    input: PathBuf,
    /// Events CSV written by `detect`.
    #[arg(long)]
    events: PathBuf,
    #[command(flatten)]
    rep: RepresentativeArgs,
    /// Coarse grid lower edge, Hz; default -600 kHz.
    #[arg(long, allow_hyphen_values = true)]
    grid_min: Option<f64>,
    /// Coarse grid upper edge, Hz; default 600 kHz.
    #[arg(long, allow_hyphen_values = true)]
    grid_max: Option<f64>,
    /// Coarse grid step, Hz; default a quarter of the sync-length bin.
    #[arg(long)]
    grid_step: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ScenarioArgs {
    /// Orbit height, m.
    #[arg(long, conflicts_with = "orbit_height_km")]
    orbit_height: Option<f64>,
    #[arg(long)]
    orbit_height_km: Option<f64>,
    /// Carrier frequency, Hz.
    #[arg(long, conflicts_with = "carrier_freq_ghz")]
    carrier_freq: Option<f64>,
    #[arg(long)]
    carrier_freq_ghz: Option<f64>,
}

impl ScenarioArgs {
    fn build(&self) -> Result<OverflightScenario> {
        let mut scn = OverflightScenario::default();
        if let Some(h) = self.orbit_height.or(self.orbit_height_km.map(|k| k * 1e3)) {
            scn.orbit_height = h;
        }
        if let Some(f) = self.carrier_freq.or(self.carrier_freq_ghz.map(|g| g * 1e9)) {
            scn.carrier_freq = f;
        }
        scn.validate()?;
        Ok(scn)
    }
}

#[derive(Args)]
struct DopplerArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Cross-track offsets, m.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "cross_track_km"
    )]
    cross_track: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    cross_track_km: Vec<f64>,
    /// s.
    #[arg(long, default_value_t = -300.0, allow_hyphen_values = true)]
    t_start: f64,
    #[arg(long, default_value_t = 300.0, allow_hyphen_values = true)]
    t_stop: f64,
    #[arg(long, default_value_t = 1.0)]
    t_step: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct LinkArgs {
    /// Spectral flux density, W/m^2/Hz.
    #[arg(long, conflicts_with = "flux_density_db")]
    flux_density: Option<f64>,
    /// Spectral flux density, dB(W/m^2/MHz).
    #[arg(long, allow_hyphen_values = true)]
    flux_density_db: Option<f64>,
    /// Carrier frequency, Hz.
    #[arg(long, conflicts_with = "carrier_freq_ghz")]
    carrier_freq: Option<f64>,
    #[arg(long)]
    carrier_freq_ghz: Option<f64>,
    /// Linear receive gain.
    #[arg(long, conflicts_with = "rx_gain_db")]
    rx_gain: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    rx_gain_db: Option<f64>,
    /// K.
    #[arg(long, default_value_t = 290.0)]
    noise_temperature: f64,
}

impl LinkArgs {
    fn carrier(&self) -> Option<f64> {
        self.carrier_freq.or(self.carrier_freq_ghz.map(|g| g * 1e9))
    }

    fn build(&self) -> Result<LinkBudget> {
        let mut lb = LinkBudget::default();
        if let Some(v) = self.flux_density {
            lb.flux_density = SpectralFluxDensity::from_w_per_m2_hz(v);
        }
        if let Some(db) = self.flux_density_db {
            lb.flux_density = SpectralFluxDensity::from_db_w_per_m2_mhz(db);
        }
        if let Some(f) = self.carrier() {
            lb.carrier_wavelength = SPEED_OF_LIGHT / f;
        }
        if let Some(g) = self.rx_gain.or(self.rx_gain_db.map(db_to_linear)) {
            lb.rx_gain = g;
        }
        lb.noise_temperature = self.noise_temperature;
        lb.validate()?;
        Ok(lb)
    }
}

#[derive(Args)]
struct CrbArgs {
    #[command(flatten)]
    link: LinkArgs,
    /// Orbit height, m.
    #[arg(long, conflicts_with = "orbit_height_km")]
    orbit_height: Option<f64>,
    #[arg(long)]
    orbit_height_km: Option<f64>,
    /// Cross-track distances, m; defaults to 100 points over 10..1000 km.
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        conflicts_with = "distances_km"
    )]
    distances: Vec<f64>,
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    distances_km: Vec<f64>,
    /// Receive gains to sweep, dB.
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true, conflicts_with_all = ["tracking_spans", "tracking_spans_min"])]
    rx_gains_db: Vec<f64>,
    /// Tracking spans to sweep, s.
    #[arg(long, value_delimiter = ',', conflicts_with = "tracking_spans_min")]
    tracking_spans: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    tracking_spans_min: Vec<f64>,
    /// Tracking span when gains are swept, s.
    #[arg(long, conflicts_with = "tracking_span_min")]
    tracking_span: Option<f64>,
    #[arg(long)]
    tracking_span_min: Option<f64>,
    /// Interval between measurements, s.
    #[arg(long, default_value_t = downlink::FRAME_PERIOD)]
    frame_period: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SnrArgs {
    #[command(flatten)]
    link: LinkArgs,
    /// Symbol period, s.
    #[arg(long, default_value_t = downlink::SYMBOL_PERIOD)]
    symbol_period: f64,
    /// Observed symbols per estimate.
    #[arg(long, default_value_t = downlink::OBSERVED_SYMBOLS as f64)]
    observed_symbols: f64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => synth(a),
        Command::Detect(a) => detect(a),
        Command::Estimate(a) => estimate_cmd(a),
        Command::Doppler(a) => doppler(a),
        Command::Crb(a) => crb(a),
        Command::Snr(a) => snr(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn check_input(path: &Path) -> Result<()> {
    if !path.is_file() {
        bail!("input {} does not exist", path.display());
    }
    Ok(())
}

fn check_output(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    if !parent.is_dir() {
        bail!("output directory {} does not exist", parent.display());
    }
    if path.is_dir() {
        bail!("output {} is a directory", path.display());
    }
    Ok(())
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if !(v.is_finite() && v > 0.0) {
        bail!("{name} must be positive and finite, got {v}");
    }
    Ok(())
}

fn check_finite(name: &str, v: f64) -> Result<()> {
    if !v.is_finite() {
        bail!("{name} must be finite, got {v}");
    }
    Ok(())
}

fn emit(table: &Table, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_csv(table, p).with_context(|| format!("writing {}", p.display()))?,
        None => table.write_to(io::stdout().lock())?,
    }
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    check_output(&a.out)?;
    if let Some(t) = &a.truth {
        check_output(t)?;
    }
    a.rep.validate()?;
    let bri = a
        .bri
        .or(a.bri_ms.map(|m| m * 1e-3))
        .unwrap_or(uplink::BRI_SET[0]);
    check_positive("bri", bri)?;
    check_positive("burst duration", a.burst_duration)?;
    check_finite("freq offset", a.freq_offset)?;
    check_finite("freq slope", a.freq_slope)?;
    let noise_variance = match a.snr_db {
        Some(db) => {
            check_finite("snr", db)?;
            db_to_linear(-db)
        }
        None => 0.0,
    };

    let sync = a.rep.build()?;
    let fs = sync.sample_rate();
    let spacing = (bri * fs).round() as u64;
    let data_len = ((a.burst_duration * fs).round() as usize).saturating_sub(sync.len());
    let lead = a.lead.unwrap_or(2 * sync.len() as u64);
    let trail = a.trail.unwrap_or(2 * sync.len() as u64);
    let train = BurstTrain::periodic(
        sync,
        a.bursts,
        spacing,
        lead,
        trail,
        data_len,
        noise_variance,
        |i| a.freq_offset + a.freq_slope * (lead + i as u64 * spacing) as f64 / fs,
    )?;

    let description = format!(
        "synthetic train: {} bursts, spacing {spacing}, seed {}, rep_seed {}",
        a.bursts, a.seed, a.rep.rep_seed
    );
    let mut writer = IqWriter::create(&a.out, a.format.into(), fs, 0.0, &description)?;
    let mut gen = train.generator(a.seed);
    let mut buf = vec![Complex64::new(0.0, 0.0); READ_CHUNK];
    loop {
        let n = gen.fill(&mut buf);
        if n == 0 {
            break;
        }
        writer.write(&buf[..n])?;
    }
    writer.finish()?;

    if let Some(path) = &a.truth {
        let mut t = Table::new(["burst", "start", "freq_offset"]);
        for (i, b) in train.bursts().iter().enumerate() {
            let TrainBurst {
                start, freq_offset, ..
            } = *b;
            t.push(vec![
                Cell::Int(i as i64),
                Cell::Int(start as i64),
                freq_offset.into(),
            ])?;
        }
        write_csv(&t, path)?;
    }
    Ok(())
}

fn detect(a: DetectArgs) -> Result<()> {
    check_input(&a.input)?;
    if let Some(o) = &a.out {
        check_output(o)?;
    }
    a.rep.validate()?;
    let sync = a.rep.build()?;
    let window = a.window.unwrap_or(2 * sync.len());
    validate_picking(a.threshold, window, sync.len())?;

    let mut reader = IqReader::open(&a.input)?;
    let rate = reader.header().sample_rate_hz;
    if (rate / sync.sample_rate() - 1.0).abs() > 1e-9 {
        bail!(
            "capture sample rate {rate} Hz differs from representative rate {} Hz",
            sync.sample_rate()
        );
    }
    let mut det = StreamingDetector::new(sync, a.threshold, window)?;
    let mut buf = vec![Complex64::new(0.0, 0.0); READ_CHUNK];
    loop {
        let n = reader.read_chunk(&mut buf)?;
        if n == 0 {
            break;
        }
        det.push(&buf[..n]);
    }
    let outcome = det.finish();
    let mut t = Table::new(["sample_index", "statistic", "low_confidence"]);
    for e in &outcome.events {
        t.push(vec![
            Cell::Int(e.sample_index),
            e.statistic.into(),
            e.low_confidence.into(),
        ])?;
    }
    emit(&t, a.out.as_deref())
}

fn estimate_cmd(a: EstimateArgs) -> Result<()> {
    check_input(&a.input)?;
    check_input(&a.events)?;
    if let Some(o) = &a.out {
        check_output(o)?;
    }
    a.rep.validate()?;
    let sync = a.rep.build()?;
    let default = FrequencyGrid::default_for(&sync);
    let grid = FrequencyGrid::new(
        a.grid_min.unwrap_or(default.min()),
        a.grid_max.unwrap_or(default.max()),
        a.grid_step.unwrap_or(default.step()),
    )?;

    let events = read_csv(&a.events)?;
    let Some(col) = events.column("sample_index") else {
        bail!("{} has no sample_index column", a.events.display());
    };
    let lags = events
        .rows
        .iter()
        .map(|r| r[col].as_i64().context("sample_index must be an integer"))
        .collect::<Result<Vec<_>>>()?;

    let s = read_iq(&a.input)?;
    let mut t = Table::new(["l_j", "coarse", "fine", "g_j"]);
    for lag in lags {
        let event = DetectionEvent {
            sample_index: lag,
            statistic: f64::NAN,
            partials: partials_at(&s, &sync, lag),
            normalization: aligned_normalization(s.samples(), &sync, lag),
            representative_id: 0,
            low_confidence: false,
        };
        match estimate(&s, &sync, &event, &grid) {
            Ok(est) => t.push(vec![
                Cell::Int(lag),
                est.coarse.into(),
                est.fine.into(),
                Cell::Int(est.ambiguity_index),
            ])?,
            Err(e) => eprintln!("warning: burst at {lag} skipped: {e}"),
        }
    }
    emit(&t, a.out.as_deref())
}

fn doppler(a: DopplerArgs) -> Result<()> {
    if let Some(o) = &a.out {
        check_output(o)?;
    }
    let scn = a.scenario.build()?;
    let xs: Vec<f64> = if !a.cross_track_km.is_empty() {
        a.cross_track_km.iter().map(|k| k * 1e3).collect()
    } else if !a.cross_track.is_empty() {
        a.cross_track.clone()
    } else {
        vec![0.0, 200e3, 400e3, 800e3]
    };
    for &x in &xs {
        check_finite("cross-track offset", x)?;
    }
    let ts = time_grid(a.t_start, a.t_stop, a.t_step)?;
    let curve = doppler_curve(&scn, &xs, &ts)?;

    let mut columns = vec!["t".to_string()];
    columns.extend(xs.iter().map(|x| format!("f_r@{x}")));
    let mut t = Table::new(columns);
    for (i, &time) in ts.iter().enumerate() {
        let mut row = vec![Cell::Float(time)];
        row.extend((0..xs.len()).map(|j| Cell::Float(curve[j * ts.len() + i].frequency)));
        t.push(row)?;
    }
    emit(&t, a.out.as_deref())
}

fn crb(a: CrbArgs) -> Result<()> {
    if let Some(o) = &a.out {
        check_output(o)?;
    }
    let mut scn = OverflightScenario::default();
    if let Some(h) = a.orbit_height.or(a.orbit_height_km.map(|k| k * 1e3)) {
        scn.orbit_height = h;
    }
    if let Some(f) = a.link.carrier() {
        scn.carrier_freq = f;
    }
    scn.validate()?;
    let link = a.link.build()?;
    check_positive("frame period", a.frame_period)?;
    let span = a
        .tracking_span
        .or(a.tracking_span_min.map(|m| m * 60.0))
        .unwrap_or(240.0);
    check_positive("tracking span", span)?;

    let distances: Vec<f64> = if !a.distances_km.is_empty() {
        a.distances_km.iter().map(|k| k * 1e3).collect()
    } else if !a.distances.is_empty() {
        a.distances.clone()
    } else {
        (1..=100).map(|i| i as f64 * 10e3).collect()
    };
    for &d in &distances {
        check_finite("distance", d)?;
    }
    let spans: Vec<f64> = if !a.tracking_spans_min.is_empty() {
        a.tracking_spans_min.iter().map(|m| m * 60.0).collect()
    } else {
        a.tracking_spans.clone()
    };
    let axis = if !spans.is_empty() {
        MapAxis::TrackingSpan(spans)
    } else if !a.rx_gains_db.is_empty() {
        MapAxis::RxGainDb(a.rx_gains_db.clone())
    } else {
        MapAxis::RxGainDb(vec![linear_to_db(link.rx_gain)])
    };
    let cfg = AccuracyConfig {
        link,
        tracking_span: span,
        frame_period: a.frame_period,
        ..AccuracyConfig::default()
    };
    let map = accuracy_map(&scn, &cfg, &axis, &distances)?;
    let mut t = Table::new(["cross_track", "rx_gain_db", "tracking_span", "bound"]);
    for r in &map.rows {
        t.push(vec![
            r.cross_track.into(),
            r.rx_gain_db.into(),
            r.tracking_span.into(),
            r.bound.into(),
        ])?;
    }
    emit(&t, a.out.as_deref())
}

fn snr(a: SnrArgs) -> Result<()> {
    check_positive("symbol period", a.symbol_period)?;
    check_positive("observed symbols", a.observed_symbols)?;
    let lb = a.link.build()?;
    let snr = snr_at_receiver(&lb);
    let sigma = mcrb_frequency(a.symbol_period, a.observed_symbols, snr).sqrt();
    let mut out = BufWriter::new(io::stdout().lock());
    writeln!(
        out,
        "snr_db={:.6} snr_linear={:.9e} sqrt_mcrb_hz={:.9e}",
        linear_to_db(snr),
        snr,
        sigma
    )?;
    out.flush()?;
    Ok(())
}
