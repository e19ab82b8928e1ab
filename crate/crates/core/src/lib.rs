//! Simulation of narrowband biphotons from EIT-assisted spontaneous
//! four-wave mixing in a Doppler-broadened vapor, plus the time-tag
//! analysis chain used to characterize them.

pub mod biphoton;
pub mod calibration;
pub mod config;
pub mod detection;
pub mod constants;
pub mod correlation;
pub mod error;
pub mod export;
pub mod optimize;
pub mod pipeline;
pub mod quadrature;
pub mod ratemodel;
pub mod spectral;
pub mod sweep;
pub mod timestamps;
pub mod units;

pub use error::{Error, Result};
