//! Positioning accuracy chain: receiver SNR from a link budget, the
//! frequency-estimation MCRB, and the Doppler-positioning CRB of a static
//! receiver with known altitude tracking one satellite pass.
//!
//! The Jacobian is taken with respect to longitude and latitude by central
//! differences and then scaled to meters east and north on the sphere
//! through the receiver, so the reported bound is a position standard
//! deviation in meters.

use std::f64::consts::PI;

use nalgebra::{Matrix2, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::orbit_doppler::{range_rate_from, Geodetic, OverflightScenario, ReceiverPosition};
use crate::signal_model::{downlink, SPEED_OF_LIGHT};

pub const BOLTZMANN: f64 = 1.380_649e-23;

/// Central-difference step in radians (about 0.64 m on the ground).
pub const DEFAULT_FD_STEP: f64 = 1e-7;

/// `det(H^T H) <= DEGENERACY_TOL * trace(H^T H)^2` counts as rank deficient.
const DEGENERACY_TOL: f64 = 1e-12;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(linear: f64) -> f64 {
    10.0 * linear.log10()
}

/// Spectral flux density in W/m^2/Hz.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SpectralFluxDensity(f64);

impl SpectralFluxDensity {
    pub fn from_w_per_m2_hz(value: f64) -> Self {
        SpectralFluxDensity(value)
    }

    pub fn from_db_w_per_m2_hz(db: f64) -> Self {
        SpectralFluxDensity(db_to_linear(db))
    }

    /// Regulatory filings quote flux in dB(W/m^2/MHz); one MHz is 60 dB
    /// above one Hz.
    pub fn from_db_w_per_m2_mhz(db: f64) -> Self {
        SpectralFluxDensity(db_to_linear(db - 60.0))
    }

    pub fn w_per_m2_hz(&self) -> f64 {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkBudget {
    pub flux_density: SpectralFluxDensity,
    /// m.
    pub carrier_wavelength: f64,
    /// Linear receive antenna gain.
    pub rx_gain: f64,
    /// K.
    pub noise_temperature: f64,
    pub boltzmann: f64,
}

impl Default for LinkBudget {
    /// -122 dB(W/m^2/MHz) at 11.7 GHz, 8 dBi, 290 K.
    fn default() -> Self {
        LinkBudget {
            flux_density: SpectralFluxDensity::from_db_w_per_m2_mhz(-122.0),
            carrier_wavelength: SPEED_OF_LIGHT / 11.7e9,
            rx_gain: db_to_linear(8.0),
            noise_temperature: 290.0,
            boltzmann: BOLTZMANN,
        }
    }
}

impl LinkBudget {
    pub fn validate(&self) -> Result<()> {
        for (v, name) in [
            (self.flux_density.0, "flux density"),
            (self.carrier_wavelength, "wavelength"),
            (self.rx_gain, "receive gain"),
            (self.noise_temperature, "noise temperature"),
            (self.boltzmann, "Boltzmann constant"),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    pub fn with_rx_gain_db(mut self, db: f64) -> Self {
        self.rx_gain = db_to_linear(db);
        self
    }

    pub fn with_carrier_freq(mut self, hz: f64) -> Self {
        self.carrier_wavelength = SPEED_OF_LIGHT / hz;
        self
    }
}

/// `Phi lambda^2 G / (4 pi k T)`, linear.
pub fn snr_at_receiver(lb: &LinkBudget) -> f64 {
    lb.flux_density.0 * lb.carrier_wavelength.powi(2) * lb.rx_gain
        / (4.0 * PI * lb.boltzmann * lb.noise_temperature)
}

/// Modified CRB on the variance (Hz^2) of a frequency estimate over
/// `observed_symbols` symbols of duration `symbol_period` at linear `snr`:
/// `3 / (T^2 2 pi L^3 snr)`.
pub fn mcrb_frequency(symbol_period: f64, observed_symbols: f64, snr: f64) -> f64 {
    3.0 / (symbol_period.powi(2) * 2.0 * PI * observed_symbols.powi(3) * snr)
}

/// Measurement epochs of one tracked pass.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSchedule {
    pub times: Vec<f64>,
    pub frame_period: f64,
    pub tracking_span: f64,
}

impl MeasurementSchedule {
    /// `N = round(span / frame_period)` epochs `q * frame_period` with `q`
    /// running from `-(N-1)/2` in unit steps, symmetric about zero.
    pub fn uniform(tracking_span: f64, frame_period: f64) -> Result<Self> {
        if !(frame_period.is_finite() && frame_period > 0.0 && tracking_span.is_finite()) {
            return Err(Error::InvalidParameter(
                "frame period and span must be positive".into(),
            ));
        }
        let n = (tracking_span / frame_period).round();
        if n < 2.0 {
            return Err(Error::InvalidParameter(format!(
                "tracking span {tracking_span} s yields fewer than two measurements"
            )));
        }
        let n = n as usize;
        let first = -((n - 1) as f64) / 2.0;
        let times = (0..n).map(|i| (first + i as f64) * frame_period).collect();
        Ok(MeasurementSchedule {
            times,
            frame_period,
            tracking_span,
        })
    }

    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(Error::InvalidParameter(
                "need at least two measurement times".into(),
            ));
        }
        let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = times.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(MeasurementSchedule {
            times,
            frame_period: f64::NAN,
            tracking_span: hi - lo,
        })
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn shifted(&self, dt: f64) -> Self {
        MeasurementSchedule {
            times: self.times.iter().map(|t| t + dt).collect(),
            ..self.clone()
        }
    }
}

/// Receiver positions perturbed by +-step in longitude and latitude, with
/// the radian-to-meter scale of each axis.
struct Stencil {
    points: [Vector3<f64>; 4],
    east_scale: f64,
    north_scale: f64,
}

impl Stencil {
    fn new(scn: &OverflightScenario, rx: &Geodetic, step: f64) -> Result<Self> {
        if !(step.is_finite() && step > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "difference step {step} must be positive"
            )));
        }
        let r = scn.earth_radius + rx.altitude;
        let moved = |dl: f64, db: f64| {
            Geodetic {
                longitude: rx.longitude + dl,
                latitude: rx.latitude + db,
                altitude: rx.altitude,
            }
            .position(scn.earth_radius)
        };
        let east = r * rx.latitude.cos();
        if east <= 0.0 {
            return Err(Error::DegenerateGeometry(
                "receiver at a pole of the track frame".into(),
            ));
        }
        Ok(Stencil {
            points: [
                moved(step, 0.0),
                moved(-step, 0.0),
                moved(0.0, step),
                moved(0.0, -step),
            ],
            east_scale: 1.0 / (2.0 * step * east),
            north_scale: 1.0 / (2.0 * step * r),
        })
    }

    /// Hz per meter east and north at time `t`.
    fn row(&self, scn: &OverflightScenario, t: f64) -> Result<[f64; 2]> {
        let state = scn.satellite_state(t);
        let k = -scn.carrier_freq / SPEED_OF_LIGHT;
        let f = |i: usize| -> Result<f64> { Ok(k * range_rate_from(&state, &self.points[i])?) };
        Ok([
            (f(0)? - f(1)?) * self.east_scale,
            (f(2)? - f(3)?) * self.north_scale,
        ])
    }
}

/// One row of H: derivatives of the received frequency at `t` with respect
/// to east and north receiver displacement, Hz/m.
pub fn jacobian_row(
    scn: &OverflightScenario,
    rx: &Geodetic,
    t: f64,
    step: f64,
) -> Result<[f64; 2]> {
    Stencil::new(scn, rx, step)?.row(scn, t)
}

/// `H` with one row per scheduled measurement, columns east and north in
/// Hz/m.
#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    pub rows: Vec<[f64; 2]>,
}

impl Jacobian {
    pub fn information(&self) -> InformationMatrix {
        let mut info = InformationMatrix::default();
        for row in &self.rows {
            info.accumulate(*row);
        }
        info
    }
}

pub fn jacobian(
    scn: &OverflightScenario,
    rx: &Geodetic,
    sched: &MeasurementSchedule,
) -> Result<Jacobian> {
    jacobian_with_step(scn, rx, sched, DEFAULT_FD_STEP)
}

pub fn jacobian_with_step(
    scn: &OverflightScenario,
    rx: &Geodetic,
    sched: &MeasurementSchedule,
    step: f64,
) -> Result<Jacobian> {
    let stencil = Stencil::new(scn, rx, step)?;
    let rows = sched
        .times
        .iter()
        .map(|&t| stencil.row(scn, t))
        .collect::<Result<Vec<_>>>()?;
    let h = Jacobian { rows };
    h.information().check_rank()?;
    Ok(h)
}

/// `H^T H` accumulated row by row in schedule order.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InformationMatrix {
    pub ee: f64,
    pub en: f64,
    pub nn: f64,
}

impl InformationMatrix {
    pub fn accumulate(&mut self, row: [f64; 2]) {
        self.ee += row[0] * row[0];
        self.en += row[0] * row[1];
        self.nn += row[1] * row[1];
    }

    pub fn matrix(&self) -> Matrix2<f64> {
        Matrix2::new(self.ee, self.en, self.en, self.nn)
    }

    fn check_rank(&self) -> Result<()> {
        let m = self.matrix();
        let trace = m.trace();
        if trace.is_nan() || trace <= 0.0 || m.determinant() <= DEGENERACY_TOL * trace * trace {
            return Err(Error::DegenerateGeometry(format!(
                "H^T H = [[{:e}, {:e}], [{:e}, {:e}]] is rank deficient",
                self.ee, self.en, self.en, self.nn
            )));
        }
        Ok(())
    }

    /// `trace((H^T H)^-1)`, m^2/Hz^2.
    pub fn inverse_trace(&self) -> Result<f64> {
        self.check_rank()?;
        let inv = self
            .matrix()
            .try_inverse()
            .ok_or_else(|| Error::DegenerateGeometry("singular H^T H".into()))?;
        Ok(inv.trace())
    }
}

/// `H^T H` for the whole schedule without storing `H`.
pub fn information_matrix(
    scn: &OverflightScenario,
    rx: &Geodetic,
    sched: &MeasurementSchedule,
    step: f64,
) -> Result<InformationMatrix> {
    let stencil = Stencil::new(scn, rx, step)?;
    let mut info = InformationMatrix::default();
    for &t in &sched.times {
        info.accumulate(stencil.row(scn, t)?);
    }
    Ok(info)
}

/// `sigma2 * trace((H^T H)^-1)` in m^2.
pub fn positioning_crb(sigma2: f64, h: &Jacobian) -> Result<f64> {
    Ok(sigma2 * h.information().inverse_trace()?)
}

/// Everything but the cross-track distance that fixes one map cell.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyConfig {
    pub link: LinkBudget,
    /// s.
    pub tracking_span: f64,
    pub frame_period: f64,
    pub symbol_period: f64,
    pub observed_symbols: f64,
    pub fd_step: f64,
}

impl Default for AccuracyConfig {
    /// Four-minute pass, one downlink sync sequence per frame.
    fn default() -> Self {
        AccuracyConfig {
            link: LinkBudget::default(),
            tracking_span: 240.0,
            frame_period: downlink::FRAME_PERIOD,
            symbol_period: downlink::SYMBOL_PERIOD,
            observed_symbols: downlink::OBSERVED_SYMBOLS as f64,
            fd_step: DEFAULT_FD_STEP,
        }
    }
}

impl AccuracyConfig {
    /// Per-measurement frequency variance, Hz^2.
    pub fn measurement_variance(&self) -> f64 {
        mcrb_frequency(
            self.symbol_period,
            self.observed_symbols,
            snr_at_receiver(&self.link),
        )
    }
}

/// Lower bound on the position standard deviation (m) of a receiver
/// `cross_track` meters from the ground track.
pub fn position_bound(
    scn: &OverflightScenario,
    cfg: &AccuracyConfig,
    cross_track: f64,
) -> Result<f64> {
    let rx = ReceiverPosition::cross_track(cross_track).to_geodetic(scn.earth_radius)?;
    let sched = MeasurementSchedule::uniform(cfg.tracking_span, cfg.frame_period)?;
    let info = information_matrix(scn, &rx, &sched, cfg.fd_step)?;
    Ok((cfg.measurement_variance() * info.inverse_trace()?).sqrt())
}

/// The swept parameter of an accuracy map.
#[derive(Debug, Clone, PartialEq)]
pub enum MapAxis {
    RxGainDb(Vec<f64>),
    /// Tracking spans in seconds.
    TrackingSpan(Vec<f64>),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AccuracyRow {
    pub cross_track: f64,
    pub rx_gain_db: f64,
    pub tracking_span: f64,
    /// m; infinite where the geometry is degenerate.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct AccuracyMap {
    pub rows: Vec<AccuracyRow>,
}

/// Bound for every (parameter, distance) pair, parameter major.
pub fn accuracy_map(
    scn: &OverflightScenario,
    base: &AccuracyConfig,
    axis: &MapAxis,
    distances: &[f64],
) -> Result<AccuracyMap> {
    let configs: Vec<AccuracyConfig> = match axis {
        MapAxis::RxGainDb(gains) => gains
            .iter()
            .map(|&g| AccuracyConfig {
                link: base.link.with_rx_gain_db(g),
                ..*base
            })
            .collect(),
        MapAxis::TrackingSpan(spans) => spans
            .iter()
            .map(|&t| AccuracyConfig {
                tracking_span: t,
                ..*base
            })
            .collect(),
    };
    if configs.is_empty() || distances.is_empty() {
        return Err(Error::InvalidParameter("empty accuracy map grid".into()));
    }
    scn.validate()?;
    for cfg in &configs {
        cfg.link.validate()?;
        MeasurementSchedule::uniform(cfg.tracking_span, cfg.frame_period)?;
    }
    let cells: Vec<(AccuracyConfig, f64)> = configs
        .iter()
        .flat_map(|c| distances.iter().map(move |&d| (*c, d)))
        .collect();
    let rows = cells
        .par_iter()
        .map(|(cfg, d)| {
            let bound = match position_bound(scn, cfg, *d) {
                Ok(b) => b,
                Err(Error::DegenerateGeometry(_)) => f64::INFINITY,
                Err(e) => return Err(e),
            };
            Ok(AccuracyRow {
                cross_track: *d,
                rx_gain_db: linear_to_db(cfg.link.rx_gain),
                tracking_span: cfg.tracking_span,
                bound,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(AccuracyMap { rows })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_link_snr() {
        let snr = snr_at_receiver(&LinkBudget::default());
        // Direct substitution.
        let phi = 10f64.powf(-18.2);
        let lambda = SPEED_OF_LIGHT / 11.7e9;
        let g = 10f64.powf(0.8);
        let expected = phi * lambda * lambda * g / (4.0 * PI * 1.380649e-23 * 290.0);
        assert!((snr / expected - 1.0).abs() < 1e-12);
        assert!(
            (linear_to_db(snr) + 12.8).abs() < 0.05,
            "{}",
            linear_to_db(snr)
        );
    }

    #[test]
    fn snr_scales_linearly_with_gain() {
        let lb = LinkBudget::default();
        let doubled = LinkBudget {
            rx_gain: 2.0 * lb.rx_gain,
            ..lb
        };
        assert!((snr_at_receiver(&doubled) / snr_at_receiver(&lb) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn unit_snr_construction() {
        let lambda = 0.03;
        let t = 300.0;
        let phi = 4.0 * PI * BOLTZMANN * t / (lambda * lambda);
        let lb = LinkBudget {
            flux_density: SpectralFluxDensity::from_w_per_m2_hz(phi),
            carrier_wavelength: lambda,
            rx_gain: 1.0,
            noise_temperature: t,
            boltzmann: BOLTZMANN,
        };
        assert!((snr_at_receiver(&lb) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn mhz_hz_mixup_is_sixty_db() {
        let right = LinkBudget::default();
        let wrong = LinkBudget {
            flux_density: SpectralFluxDensity::from_db_w_per_m2_hz(-122.0),
            ..right
        };
        let gap = linear_to_db(snr_at_receiver(&wrong)) - linear_to_db(snr_at_receiver(&right));
        assert!((gap - 60.0).abs() < 1e-9);
    }

    #[test]
    fn mcrb_scaling() {
        let base = mcrb_frequency(4.17e-9, 1016.0, 0.05);
        assert!((mcrb_frequency(4.17e-9, 1016.0, 0.1) / base - 0.5).abs() < 1e-12);
        assert!((mcrb_frequency(4.17e-9, 2032.0, 0.05) / base - 0.125).abs() < 1e-12);
        let expected = 3.0 / (4.17e-9f64.powi(2) * 2.0 * PI * 1016f64.powi(3) * 0.05);
        assert!((base / expected - 1.0).abs() < 1e-12);
    }

    #[test]
    fn uniform_schedule_is_symmetric() {
        let s = MeasurementSchedule::uniform(240.0, 1.0 / 750.0).unwrap();
        assert_eq!(s.len(), 180_000);
        assert!((s.times[0] + s.times[s.len() - 1]).abs() < 1e-12);
        let odd = MeasurementSchedule::uniform(5.0, 1.0).unwrap();
        assert_eq!(odd.times, vec![-2.0, -1.0, 0.0, 1.0, 2.0]);
        assert!(MeasurementSchedule::uniform(0.1, 1.0).is_err());
    }

    #[test]
    fn closed_form_crb() {
        let h = Jacobian {
            rows: vec![[3.0, 0.0], [0.0, 0.5]],
        };
        let crb = positioning_crb(2.0, &h).unwrap();
        assert!((crb - 2.0 * (1.0 / 9.0 + 1.0 / 0.25)).abs() < 1e-12);
        assert!((positioning_crb(6.0, &h).unwrap() - 3.0 * crb).abs() < 1e-12);
        let singular = Jacobian {
            rows: vec![[1.0, 2.0], [2.0, 4.0]],
        };
        assert!(matches!(
            positioning_crb(1.0, &singular),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn ground_track_is_degenerate() {
        let scn = OverflightScenario::default();
        let rx = Geodetic {
            longitude: 0.0,
            latitude: 0.0,
            altitude: 0.0,
        };
        for t in [-100.0, -3.0, 0.0, 50.0] {
            let row = jacobian_row(&scn, &rx, t, DEFAULT_FD_STEP).unwrap();
            assert!(row[1].abs() < 1e-9 * row[0].abs().max(1.0), "{row:?}");
        }
        let sched = MeasurementSchedule::uniform(60.0, 0.5).unwrap();
        assert!(matches!(
            jacobian(&scn, &rx, &sched),
            Err(Error::DegenerateGeometry(_))
        ));
    }

    #[test]
    fn two_measurements_off_track_are_full_rank() {
        let scn = OverflightScenario::default();
        let rx = ReceiverPosition::cross_track(400e3)
            .to_geodetic(scn.earth_radius)
            .unwrap();
        let sched = MeasurementSchedule::from_times(vec![-120.0, 120.0]).unwrap();
        let h = jacobian(&scn, &rx, &sched).unwrap();
        assert_eq!(h.rows.len(), 2);
        assert!(positioning_crb(1.0, &h).unwrap().is_finite());
    }

    #[test]
    fn streaming_information_matches_materialized() {
        let scn = OverflightScenario::default();
        let rx = ReceiverPosition::cross_track(300e3)
            .to_geodetic(scn.earth_radius)
            .unwrap();
        let sched = MeasurementSchedule::uniform(30.0, 0.01).unwrap();
        let a = jacobian(&scn, &rx, &sched).unwrap().information();
        let b = information_matrix(&scn, &rx, &sched, DEFAULT_FD_STEP).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn map_marks_ground_track_unbounded() {
        let scn = OverflightScenario::default();
        let cfg = AccuracyConfig {
            tracking_span: 20.0,
            ..AccuracyConfig::default()
        };
        let map = accuracy_map(&scn, &cfg, &MapAxis::RxGainDb(vec![8.0]), &[0.0, 300e3]).unwrap();
        assert!(map.rows[0].bound.is_infinite());
        assert!(map.rows[1].bound.is_finite());
        assert!(accuracy_map(&scn, &cfg, &MapAxis::RxGainDb(vec![]), &[1.0]).is_err());
    }
}
