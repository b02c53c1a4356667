//! Mono-static OFDM radar simulation and processing for small-UAV detection
//! with 5G FR2 communication hardware.
//!
//! The crate is organised along the processing flow:
//!
//! * [`linkbudget`] - analytic SINR and maximum-range model.
//! * [`scene`] - synthetic frequency-domain radio frames with ground truth.
//! * [`dsp`] - channel estimation, clutter removal, range-Doppler periodogram.
//! * [`detect`] - CA-CFAR, sub-bin interpolation, TDD replica suppression.
//! * [`track`] - frame-to-frame association and target validation.
//! * [`harness`] - scenario replay, metrics and model reports.

pub mod detect;
pub mod dsp;
pub mod harness;
pub mod linkbudget;
pub mod scene;
pub mod track;

pub use num_complex::Complex64;

/// Speed of light in vacuum, m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;
