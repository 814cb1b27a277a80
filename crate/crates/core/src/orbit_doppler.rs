//! Zenith-pass geometry over a non-rotating spherical earth.
//!
//! The satellite flies a circular orbit in the equatorial plane of a frame
//! whose equator is the ground track, passing over longitude 0 at the
//! closest-approach time. Latitude in this frame is the cross-track
//! direction and longitude the along-track direction, so a receiver's
//! geodetic coordinates here are relative to the ground track, not to the
//! real earth.

use std::f64::consts::{FRAC_PI_2, TAU};

use nalgebra::Vector3;

use crate::error::{Error, Result};
use crate::signal_model::SPEED_OF_LIGHT;

pub const EARTH_RADIUS: f64 = 6_371_000.0;
pub const EARTH_MU: f64 = 3.986_004_418e14;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OverflightScenario {
    /// Orbit height above the sphere, m.
    pub orbit_height: f64,
    /// Transmitted carrier, Hz.
    pub carrier_freq: f64,
    pub earth_radius: f64,
    /// m^3/s^2.
    pub gravitational_parameter: f64,
    /// Time at which the satellite is over the scenario origin, s.
    pub closest_approach_time: f64,
}

impl Default for OverflightScenario {
    fn default() -> Self {
        OverflightScenario {
            orbit_height: 550e3,
            carrier_freq: 11.7e9,
            earth_radius: EARTH_RADIUS,
            gravitational_parameter: EARTH_MU,
            closest_approach_time: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SatelliteState {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
}

impl OverflightScenario {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive(self.orbit_height, "orbit height")?;
        positive(self.carrier_freq, "carrier frequency")?;
        positive(self.earth_radius, "earth radius")?;
        positive(self.gravitational_parameter, "gravitational parameter")?;
        if !self.closest_approach_time.is_finite() {
            return Err(Error::InvalidParameter(
                "closest approach time must be finite".into(),
            ));
        }
        Ok(())
    }

    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.orbit_height
    }

    pub fn speed(&self) -> f64 {
        (self.gravitational_parameter / self.orbit_radius()).sqrt()
    }

    /// rad/s.
    pub fn angular_rate(&self) -> f64 {
        self.speed() / self.orbit_radius()
    }

    pub fn period(&self) -> f64 {
        TAU * (self.orbit_radius().powi(3) / self.gravitational_parameter).sqrt()
    }

    pub fn satellite_state(&self, t: f64) -> SatelliteState {
        let a = self.orbit_radius();
        let w = self.angular_rate();
        let (s, c) = (w * (t - self.closest_approach_time)).sin_cos();
        SatelliteState {
            position: Vector3::new(a * c, a * s, 0.0),
            velocity: Vector3::new(-a * w * s, a * w * c, 0.0),
        }
    }

    /// Receiver frequency for a receiver at `rx`, via the time-shifted curve
    /// of the receiver's foot point on the cross-track axis.
    pub fn received_frequency(&self, rx: &ReceiverPosition, t: f64) -> Result<f64> {
        let geo = rx.to_geodetic(self.earth_radius)?;
        let delay = geo.longitude / self.angular_rate();
        let on_axis = Geodetic {
            longitude: 0.0,
            ..geo
        };
        self.received_frequency_at(&on_axis, t - delay)
    }

    /// Receiver frequency from the geometry directly.
    pub fn received_frequency_at(&self, rx: &Geodetic, t: f64) -> Result<f64> {
        Ok(self.carrier_freq + self.doppler_shift(&rx.position(self.earth_radius), t)?)
    }

    /// `-f_c * range_rate / c` for a static receiver at `rx` (frame
    /// coordinates).
    pub fn doppler_shift(&self, rx: &Vector3<f64>, t: f64) -> Result<f64> {
        let state = self.satellite_state(t);
        Ok(-self.carrier_freq * range_rate_from(&state, rx)? / SPEED_OF_LIGHT)
    }

    pub fn range(&self, rx: &Geodetic, t: f64) -> f64 {
        (self.satellite_state(t).position - rx.position(self.earth_radius)).norm()
    }

    pub fn range_rate(&self, rx: &Geodetic, t: f64) -> Result<f64> {
        range_rate_from(&self.satellite_state(t), &rx.position(self.earth_radius))
    }
}

pub(crate) fn range_rate_from(state: &SatelliteState, rx: &Vector3<f64>) -> Result<f64> {
    let los = state.position - rx;
    let range = los.norm();
    if range < 1e-6 {
        return Err(Error::CoincidentReceiver);
    }
    Ok(los.dot(&state.velocity) / range)
}

/// Receiver location in ground-track coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReceiverPosition {
    /// Arc length along the ground track from the zenith point, m.
    pub along_track: f64,
    /// Arc length perpendicular to the ground track, m.
    pub cross_track: f64,
    /// Height above the sphere, m.
    pub altitude: f64,
}

impl ReceiverPosition {
    pub fn cross_track(cross_track: f64) -> Self {
        ReceiverPosition {
            along_track: 0.0,
            cross_track,
            altitude: 0.0,
        }
    }

    pub fn to_geodetic(&self, earth_radius: f64) -> Result<Geodetic> {
        let latitude = self.cross_track / earth_radius;
        if latitude.is_nan() || latitude.abs() >= FRAC_PI_2 {
            return Err(Error::InvalidParameter(format!(
                "cross-track distance {} m must be below a quarter circumference",
                self.cross_track
            )));
        }
        Ok(Geodetic {
            longitude: self.along_track / earth_radius,
            latitude,
            altitude: self.altitude,
        })
    }
}

/// Longitude and latitude in the ground-track frame, radians.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geodetic {
    pub longitude: f64,
    pub latitude: f64,
    pub altitude: f64,
}

impl Geodetic {
    pub fn position(&self, earth_radius: f64) -> Vector3<f64> {
        let r = earth_radius + self.altitude;
        let (sl, cl) = self.longitude.sin_cos();
        let (sb, cb) = self.latitude.sin_cos();
        Vector3::new(r * cb * cl, r * cb * sl, r * sb)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DopplerSample {
    pub cross_track: f64,
    pub time: f64,
    pub frequency: f64,
}

/// Received frequency for every `(cross_track, time)` pair, cross-track
/// major.
pub fn doppler_curve(
    scn: &OverflightScenario,
    cross_track: &[f64],
    times: &[f64],
) -> Result<Vec<DopplerSample>> {
    if cross_track.is_empty() || times.is_empty() {
        return Err(Error::InvalidParameter(
            "empty cross-track or time grid".into(),
        ));
    }
    let mut out = Vec::with_capacity(cross_track.len() * times.len());
    for &x in cross_track {
        let rx = ReceiverPosition::cross_track(x);
        for &t in times {
            out.push(DopplerSample {
                cross_track: x,
                time: t,
                frequency: scn.received_frequency(&rx, t)?,
            });
        }
    }
    Ok(out)
}

/// `start, start + step, ...` up to `stop` inclusive.
pub fn time_grid(start: f64, stop: f64, step: f64) -> Result<Vec<f64>> {
    if !(start.is_finite() && stop.is_finite() && step.is_finite()) || stop < start {
        return Err(Error::InvalidParameter(
            "time grid needs start <= stop".into(),
        ));
    }
    if start == stop {
        return Ok(vec![start]);
    }
    if step <= 0.0 {
        return Err(Error::InvalidParameter("time step must be positive".into()));
    }
    let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
    Ok((0..count).map(|i| start + i as f64 * step).collect())
}
