//! TDD replica handling.
//!
//! UL symbols leave periodic holes in slow time. With a gap period of `P`
//! symbols every target is accompanied by weaker copies at Doppler offsets
//! `k / (P T_sym)`, all at the target's range.

use serde::{Deserialize, Serialize};

use super::Detection;
use crate::dsp::Periodogram;
use crate::scene::TddMask;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaskInfo {
    /// Replica spacing in Doppler; `None` when the mask has no periodic gaps.
    pub gap_frequency_hz: Option<f64>,
    /// Unambiguous Doppler span of the periodogram.
    pub doppler_span_hz: f64,
}

impl MaskInfo {
    pub fn new(mask: &TddMask, symbol_duration: f64) -> Self {
        Self {
            gap_frequency_hz: mask.gap_period().map(|p| 1.0 / (p as f64 * symbol_duration)),
            doppler_span_hz: 1.0 / symbol_duration,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ReplicaConfig {
    /// Same-range tolerance in unpadded range bins.
    pub range_tolerance_bins: f64,
    /// Doppler tolerance around `k * gap_frequency`, in padded Doppler bins.
    pub doppler_tolerance_bins: f64,
}

impl Default for ReplicaConfig {
    fn default() -> Self {
        Self {
            range_tolerance_bins: 1.0,
            doppler_tolerance_bins: 1.0,
        }
    }
}

fn is_replica_of(weak: &Detection, strong: &Detection, info: &MaskInfo, range_tol: f64, doppler_tol: f64) -> bool {
    let Some(gap) = info.gap_frequency_hz else {
        return false;
    };
    if (weak.range_m - strong.range_m).abs() > range_tol {
        return false;
    }
    let span = info.doppler_span_hz;
    let diff = (weak.doppler_hz - strong.doppler_hz + 0.5 * span).rem_euclid(span) - 0.5 * span;
    let k = (diff / gap).round();
    k != 0.0 && (diff - k * gap).abs() <= doppler_tol
}

/// Flags every detection that has a stronger unflagged detection at the same
/// range and an integer-multiple gap-frequency Doppler offset.
pub fn flag_tdd_replicas(dets: &mut [Detection], info: &MaskInfo, p: &Periodogram, cfg: &ReplicaConfig) {
    let range_tol = cfg.range_tolerance_bins * p.range_resolution_m();
    let doppler_tol = cfg.doppler_tolerance_bins * p.doppler_bin_hz;
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].peak_power.total_cmp(&dets[a].peak_power).then(a.cmp(&b)));
    for (pos, &i) in order.iter().enumerate() {
        let flagged = order[..pos].iter().any(|&j| {
            !dets[j].flags.replica_suppressed && is_replica_of(&dets[i], &dets[j], info, range_tol, doppler_tol)
        });
        if flagged {
            dets[i].flags.replica_suppressed = true;
        }
    }
}

/// Active detections after replica removal, in input order.
pub fn suppress_tdd_replicas(dets: &[Detection], info: &MaskInfo, p: &Periodogram, cfg: &ReplicaConfig) -> Vec<Detection> {
    let mut flagged = dets.to_vec();
    flag_tdd_replicas(&mut flagged, info, p, cfg);
    flagged.retain(|d| !d.flags.replica_suppressed);
    flagged
}

/// Least-squares slope of range over time compared with the mean measured
/// range rate. Samples are `(time_s, range_m, velocity_mps)`. Returns `None`
/// with fewer than two samples or no time spread.
pub fn range_rate_consistent(samples: &[(f64, f64, f64)], threshold_mps: f64) -> Option<bool> {
    if samples.len() < 2 {
        return None;
    }
    let n = samples.len() as f64;
    let t_mean = samples.iter().map(|s| s.0).sum::<f64>() / n;
    let r_mean = samples.iter().map(|s| s.1).sum::<f64>() / n;
    let v_mean = samples.iter().map(|s| s.2).sum::<f64>() / n;
    let stt: f64 = samples.iter().map(|s| (s.0 - t_mean).powi(2)).sum();
    if !(stt > 0.0) {
        return None;
    }
    let str_: f64 = samples.iter().map(|s| (s.0 - t_mean) * (s.1 - r_mean)).sum();
    Some((str_ / stt - v_mean).abs() < threshold_mps)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::DetectionFlags;
    use ndarray::Array2;

    const T_SYM: f64 = (1.0 + 1.0 / 14.0) / 120e3;

    fn grid() -> Periodogram {
        Periodogram {
            power: Array2::zeros((8, 8)),
            range_bin_m: 0.394,
            velocity_bin_mps: 0.27,
            doppler_bin_hz: 50.0,
            range_pad: 2,
            doppler_pad: 2,
            f_c: 27.6e9,
            frame_index: 0,
            noise_floor_estimate: None,
        }
    }

    fn det(range_m: f64, doppler_hz: f64, peak_power: f64) -> Detection {
        Detection {
            frame_index: 0,
            range_m,
            velocity_mps: 0.0,
            doppler_hz,
            peak_power,
            sinr_db: 0.0,
            bin: (0, 0),
            flags: DetectionFlags::default(),
        }
    }

    #[test]
    fn default_mask_gap_frequency() {
        let info = MaskInfo::new(&TddMask::fr2_default(), T_SYM);
        let gap = info.gap_frequency_hz.unwrap();
        assert!((gap - 1600.0).abs() < 1e-6, "{gap}");
        assert!((info.doppler_span_hz / gap - 70.0).abs() < 1e-9);
    }

    #[test]
    fn replicas_removed_primary_kept() {
        let info = MaskInfo::new(&TddMask::fr2_default(), T_SYM);
        let dets = vec![
            det(450.2, 1630.0, 0.1),
            det(450.0, 30.0, 1.0),
            det(450.5, 30.0 - 3200.0, 0.1),
            det(300.0, 1630.0, 0.05),
            det(450.1, 800.0, 0.05),
        ];
        let out = suppress_tdd_replicas(&dets, &info, &grid(), &ReplicaConfig::default());
        let kept: Vec<f64> = out.iter().map(|d| d.doppler_hz).collect();
        assert_eq!(kept, [30.0, 1630.0, 800.0]);
    }

    #[test]
    fn replica_across_doppler_wrap() {
        let info = MaskInfo::new(&TddMask::fr2_default(), T_SYM);
        let half = 0.5 * info.doppler_span_hz;
        let dets = vec![det(100.0, half - 100.0, 1.0), det(100.0, -half + 1500.0, 0.1)];
        let out = suppress_tdd_replicas(&dets, &info, &grid(), &ReplicaConfig::default());
        assert_eq!(out.len(), 1);
    }

    #[test]
    fn full_dl_mask_changes_nothing() {
        let info = MaskInfo::new(&TddMask::full_dl(1120), T_SYM);
        let dets = vec![det(450.0, 30.0, 1.0), det(450.0, 1630.0, 0.1)];
        let out = suppress_tdd_replicas(&dets, &info, &grid(), &ReplicaConfig::default());
        assert_eq!(out, dets);
    }

    #[test]
    fn consistency_predicate() {
        let consistent: Vec<_> = (0..10)
            .map(|i| {
                let t = i as f64 * 0.01;
                (t, 400.0 - 5.0 * t, -5.0 + if i % 2 == 0 { 0.1 } else { -0.1 })
            })
            .collect();
        assert_eq!(range_rate_consistent(&consistent, 2.0), Some(true));
        let replica: Vec<_> = consistent.iter().map(|&(t, r, v)| (t, r, v + 8.7)).collect();
        assert_eq!(range_rate_consistent(&replica, 2.0), Some(false));
        let hover: Vec<_> = (0..10).map(|i| (i as f64 * 0.01, 50.0, 0.0)).collect();
        assert_eq!(range_rate_consistent(&hover, 2.0), Some(true));
        assert_eq!(range_rate_consistent(&consistent[..1], 2.0), None);
    }
}
