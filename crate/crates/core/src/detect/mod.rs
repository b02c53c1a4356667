//! CA-CFAR detection, sub-bin interpolation, TDD replica suppression and
//! SINR annotation.

mod cfar;
mod replica;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dsp::Periodogram;
use crate::linkbudget::{linear_to_db, RangeWindowModel};

pub use cfar::{cfar_detect, cfar_hits, CfarConfig, CfarHit};
pub use replica::{
    flag_tdd_replicas, range_rate_consistent, suppress_tdd_replicas, MaskInfo, ReplicaConfig,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DetectError {
    #[error("invalid CFAR configuration: {0}")]
    InvalidConfig(String),
    #[error("CFAR window {window:?} does not fit the {grid:?} periodogram")]
    WindowTooLarge { window: (usize, usize), grid: (usize, usize) },
    #[error("periodogram has no noise floor estimate")]
    MissingNoiseFloor,
    #[error("noise floor estimate {0} is not positive")]
    NonPositiveNoiseFloor(f64),
}

pub type Result<T> = std::result::Result<T, DetectError>;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectionFlags {
    pub replica_suppressed: bool,
    pub clutter_band: bool,
}

impl DetectionFlags {
    /// `|`-separated flag names, empty when no flag is set.
    pub fn label(&self) -> String {
        let mut names = Vec::new();
        if self.replica_suppressed {
            names.push("replica_suppressed");
        }
        if self.clutter_band {
            names.push("clutter_band");
        }
        names.join("|")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub frame_index: u64,
    pub range_m: f64,
    /// Range rate, negative when approaching.
    pub velocity_mps: f64,
    pub doppler_hz: f64,
    pub peak_power: f64,
    /// Relative to the local CFAR training mean until [`annotate_sinr`]
    /// replaces it with the frame noise floor.
    pub sinr_db: f64,
    /// Integer (range, Doppler) bin of the local maximum.
    pub bin: (usize, usize),
    pub flags: DetectionFlags,
}

/// Peak SINR relative to the periodogram's noise floor estimate.
pub fn annotate_sinr(dets: &[Detection], p: &Periodogram) -> Result<Vec<Detection>> {
    let floor = p.noise_floor_estimate.ok_or(DetectError::MissingNoiseFloor)?;
    if !(floor > 0.0) {
        return Err(DetectError::NonPositiveNoiseFloor(floor));
    }
    Ok(dets
        .iter()
        .map(|d| Detection {
            sinr_db: linear_to_db(d.peak_power / floor),
            ..d.clone()
        })
        .collect())
}

/// Sets `clutter_band` on detections inside any of the inclusive range bands.
pub fn flag_clutter_bands(dets: &mut [Detection], bands: &[(f64, f64)]) {
    for d in dets {
        d.flags.clutter_band = bands.iter().any(|&(lo, hi)| d.range_m >= lo && d.range_m <= hi);
    }
}

/// Keeps detections strictly inside the receive-window support.
pub fn retain_in_window(dets: Vec<Detection>, window: &RangeWindowModel) -> Vec<Detection> {
    dets.into_iter()
        .filter(|d| d.range_m > window.r_low_clamped() && d.range_m < window.r_limit)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;

    fn det(range_m: f64, peak_power: f64) -> Detection {
        Detection {
            frame_index: 0,
            range_m,
            velocity_mps: 0.0,
            doppler_hz: 0.0,
            peak_power,
            sinr_db: 0.0,
            bin: (0, 0),
            flags: DetectionFlags::default(),
        }
    }

    fn periodogram(floor: Option<f64>) -> Periodogram {
        Periodogram {
            power: Array2::zeros((4, 4)),
            range_bin_m: 1.0,
            velocity_bin_mps: 1.0,
            doppler_bin_hz: 1.0,
            range_pad: 1,
            doppler_pad: 1,
            f_c: 1e9,
            frame_index: 0,
            noise_floor_estimate: floor,
        }
    }

    #[test]
    fn sinr_at_noise_floor_is_zero_db() {
        let out = annotate_sinr(&[det(10.0, 3.5)], &periodogram(Some(3.5))).unwrap();
        assert!(out[0].sinr_db.abs() < 1e-12);
        let out = annotate_sinr(&[det(10.0, 350.0)], &periodogram(Some(3.5))).unwrap();
        assert!((out[0].sinr_db - 20.0).abs() < 1e-9);
    }

    #[test]
    fn sinr_needs_noise_floor() {
        assert_eq!(
            annotate_sinr(&[det(1.0, 1.0)], &periodogram(None)).unwrap_err(),
            DetectError::MissingNoiseFloor
        );
        assert!(annotate_sinr(&[], &periodogram(Some(0.0))).is_err());
    }

    #[test]
    fn clutter_band_flag() {
        let mut dets = vec![det(240.0, 1.0), det(260.0, 1.0), det(300.0, 1.0)];
        flag_clutter_bands(&mut dets, &[(250.0, 300.0)]);
        let flags: Vec<bool> = dets.iter().map(|d| d.flags.clutter_band).collect();
        assert_eq!(flags, [false, true, true]);
        assert_eq!(dets[1].flags.label(), "clutter_band");
    }
}
