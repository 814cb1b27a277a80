//! Burst detection, carrier frequency estimation and Doppler positioning
//! bounds for repetitive synchronization sequences broadcast by LEO
//! satellites.

pub mod bounds;
pub mod correlate;
pub mod detector;
pub mod error;
pub mod freq_estimator;
pub mod iq_io;
pub mod orbit_doppler;
pub mod signal_model;
pub mod stream;

pub use error::{Error, Result};
pub use signal_model::{IqSignal, SyncSequence, C64};
