//! Static clutter removal.
//!
//! * ECA-C: per-subcarrier least-squares cancellation of the zero-Doppler
//!   component over DL symbols. The cancelled subspace is the DL mean plus,
//!   by default, low-order slow-time polynomials, which widens the notch
//!   just enough to take out targets slower than about 0.5 m/s.
//! * Acquisition-based removal: a stored clutter signature averaged over an
//!   acquisition period is scaled by a per-frame complex factor and
//!   subtracted. This is a simplified stand-in for the full CRAP method.

use std::f64::consts::PI;

use nalgebra::DMatrix;
use ndarray::{Array2, Zip};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{ChannelEstimate, DspError, Result};
use crate::scene::TddMask;

/// Slow-time signal subspace cancelled on every subcarrier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum EcaBasis {
    /// Powers of slow time up to `degree`. The notch is maximally flat at
    /// zero Doppler, so slow targets are cancelled deeply while the loss
    /// beyond a few m/s stays small. Degree 0 subtracts the DL mean.
    Polynomial { degree: usize },
    /// Doppler bins `-half_width..=half_width` around zero, one bin being one
    /// over the frame duration.
    Harmonic { half_width: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EcaConfig {
    pub basis: EcaBasis,
}

impl Default for EcaConfig {
    fn default() -> Self {
        Self { basis: EcaBasis::Polynomial { degree: 4 } }
    }
}

impl EcaConfig {
    /// Plain per-subcarrier DL mean subtraction.
    pub fn mean() -> Self {
        Self { basis: EcaBasis::Polynomial { degree: 0 } }
    }

    pub fn basis_size(&self) -> usize {
        match self.basis {
            EcaBasis::Polynomial { degree } => degree + 1,
            EcaBasis::Harmonic { half_width } => 2 * half_width + 1,
        }
    }
}

/// Precomputed slow-time projector for one DL mask.
#[derive(Debug, Clone)]
pub struct EcaCanceller {
    mask: TddMask,
    dl: Vec<usize>,
    /// Orthonormal basis on DL symbols, one row per basis vector.
    basis: Vec<Vec<Complex64>>,
}

impl EcaCanceller {
    pub fn new(mask: &TddMask, cfg: &EcaConfig) -> Result<Self> {
        let dl: Vec<usize> = mask.dl_symbols().collect();
        let n_basis = cfg.basis_size();
        if dl.len() < n_basis {
            return Err(DspError::InvalidConfig(format!(
                "{} DL symbols cannot support {} clutter basis vectors",
                dl.len(),
                n_basis
            )));
        }
        let s = mask.len() as f64;
        let b = DMatrix::from_fn(dl.len(), n_basis, |i, j| {
            let m = dl[i] as f64;
            match cfg.basis {
                EcaBasis::Polynomial { .. } => Complex64::new((2.0 * (m + 0.5) / s - 1.0).powi(j as i32), 0.0),
                EcaBasis::Harmonic { half_width } => {
                    let k = j as f64 - half_width as f64;
                    Complex64::from_polar(1.0, 2.0 * PI * k * m / s)
                }
            }
        });
        let q = b.qr().q();
        let basis = (0..n_basis).map(|j| q.column(j).iter().copied().collect()).collect();
        Ok(Self { mask: mask.clone(), dl, basis })
    }

    pub fn remove(&self, ch: &ChannelEstimate) -> Result<ChannelEstimate> {
        if ch.dl_mask != self.mask {
            return Err(DspError::DimensionMismatch("ECA-C built for a different DL mask".into()));
        }
        let mut out = ch.clone();
        let mut values = vec![Complex64::new(0.0, 0.0); self.dl.len()];
        for mut row in out.grid.rows_mut() {
            for (v, &m) in values.iter_mut().zip(&self.dl) {
                *v = row[m];
            }
            for b in &self.basis {
                let coef: Complex64 = b.iter().zip(&values).map(|(a, x)| a.conj() * x).sum();
                for (&m, bv) in self.dl.iter().zip(b) {
                    row[m] -= coef * bv;
                }
            }
        }
        Ok(out)
    }
}

/// Removes the static (near-zero-Doppler) component of every subcarrier.
pub fn eca_c_remove(ch: &ChannelEstimate, cfg: &EcaConfig) -> Result<ChannelEstimate> {
    EcaCanceller::new(&ch.dl_mask, cfg)?.remove(ch)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClutterMapConfig {
    pub acquisition_frames: usize,
    /// Frames after acquisition at which the stored map is considered stale.
    pub stale_after: u64,
}

impl Default for ClutterMapConfig {
    fn default() -> Self {
        // 100 frames = 1 s of acquisition; stale after two minutes.
        Self {
            acquisition_frames: 100,
            stale_after: 12_000,
        }
    }
}

/// Coherently averaged clutter signature of a static scene.
#[derive(Debug, Clone)]
pub struct ClutterMap {
    pub acquisition: Array2<Complex64>,
    pub dl_mask: TddMask,
    pub acquisition_frame_count: usize,
    pub acquired_at: u64,
    pub stale_after: u64,
    energy: f64,
}

impl ClutterMap {
    pub fn is_stale(&self, frame_index: u64) -> bool {
        frame_index.saturating_sub(self.acquired_at) > self.stale_after
    }
}

/// Running sum of acquisition frames, so a long acquisition never holds more
/// than one frame.
#[derive(Debug, Clone)]
pub struct ClutterMapAccumulator {
    sum: Array2<Complex64>,
    dl_mask: TddMask,
    count: usize,
}

impl ClutterMapAccumulator {
    pub fn new(first: &ChannelEstimate) -> Self {
        Self {
            sum: first.grid.clone(),
            dl_mask: first.dl_mask.clone(),
            count: 1,
        }
    }

    pub fn push(&mut self, f: &ChannelEstimate) -> Result<()> {
        if f.grid.dim() != self.sum.dim() || f.dl_mask != self.dl_mask {
            return Err(DspError::DimensionMismatch("acquisition frames differ in shape".into()));
        }
        self.sum += &f.grid;
        self.count += 1;
        Ok(())
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn finish(self, acquired_at: u64, stale_after: u64) -> ClutterMap {
        let n = self.count as f64;
        let mut acc = self.sum;
        acc.mapv_inplace(|z| z / n);
        let energy = acc.iter().map(|z| z.norm_sqr()).sum();
        ClutterMap {
            acquisition: acc,
            dl_mask: self.dl_mask,
            acquisition_frame_count: self.count,
            acquired_at,
            stale_after,
            energy,
        }
    }
}

pub fn crap_acquire(frames: &[ChannelEstimate], acquired_at: u64, stale_after: u64) -> Result<ClutterMap> {
    let (first, rest) = frames.split_first().ok_or(DspError::EmptyAcquisition)?;
    let mut acc = ClutterMapAccumulator::new(first);
    for f in rest {
        acc.push(f)?;
    }
    Ok(acc.finish(acquired_at, stale_after))
}

/// Subtracts `beta * signature`, with the complex scale `beta` fitted to the
/// frame by least squares. A stale map is used anyway, with a warning.
pub fn crap_remove(ch: &ChannelEstimate, map: &ClutterMap) -> Result<ChannelEstimate> {
    if ch.grid.dim() != map.acquisition.dim() || ch.dl_mask != map.dl_mask {
        return Err(DspError::DimensionMismatch("frame and clutter map differ in shape".into()));
    }
    if map.is_stale(ch.frame_index) {
        log::warn!(
            "clutter map acquired at frame {} is stale at frame {}; re-acquire",
            map.acquired_at,
            ch.frame_index
        );
    }
    let beta = if map.energy > 0.0 {
        let cross: Complex64 = Zip::from(&map.acquisition)
            .and(&ch.grid)
            .fold(Complex64::new(0.0, 0.0), |acc, s, h| acc + s.conj() * h);
        cross / map.energy
    } else {
        Complex64::new(0.0, 0.0)
    };
    let mut out = ch.clone();
    Zip::from(&mut out.grid)
        .and(&map.acquisition)
        .for_each(|h, s| *h -= beta * s);
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn channel(mask: &TddMask, n: usize, f: impl Fn(usize, usize) -> Complex64) -> ChannelEstimate {
        let grid = Array2::from_shape_fn((n, mask.len()), |(i, m)| {
            if mask.is_dl(m) {
                f(i, m)
            } else {
                Complex64::new(0.0, 0.0)
            }
        });
        ChannelEstimate { grid, dl_mask: mask.clone(), frame_index: 0, zeroed_cells: 0 }
    }

    #[test]
    fn mean_removal_with_zero_width() {
        let mask = TddMask::periodic(5, 2, 4);
        let ch = channel(&mask, 3, |i, m| Complex64::new(i as f64 + 1.0, 0.5) + Complex64::new(0.0, m as f64 * 0.01));
        let out = eca_c_remove(&ch, &EcaConfig::mean()).unwrap();
        for (i, row) in ch.grid.rows().into_iter().enumerate() {
            let mean: Complex64 = mask.dl_symbols().map(|m| row[m]).sum::<Complex64>() / mask.dl_count() as f64;
            for m in mask.dl_symbols() {
                assert!((out.grid[[i, m]] - (row[m] - mean)).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn ul_symbols_stay_zero() {
        let mask = TddMask::periodic(5, 2, 4);
        let ch = channel(&mask, 2, |_, m| Complex64::from_polar(1.0, 0.7 * m as f64));
        let out = eca_c_remove(&ch, &EcaConfig::default()).unwrap();
        for m in (0..mask.len()).filter(|&m| !mask.is_dl(m)) {
            assert_eq!(out.grid[[0, m]], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn too_many_basis_vectors() {
        let mask = TddMask::periodic(1, 3, 2);
        assert!(EcaCanceller::new(&mask, &EcaConfig { basis: EcaBasis::Harmonic { half_width: 2 } }).is_err());
    }

    fn tone(mask: &TddMask, cycles_per_frame: f64) -> ChannelEstimate {
        let s = mask.len() as f64;
        channel(mask, 1, |_, m| Complex64::from_polar(1.0, 2.0 * PI * cycles_per_frame * m as f64 / s))
    }

    #[test]
    fn polynomial_notch_is_deep_near_zero_and_narrow() {
        let mask = TddMask::fr2_default();
        let eca = EcaCanceller::new(&mask, &EcaConfig::default()).unwrap();
        let slow = tone(&mask, 0.55);
        assert!(eca.remove(&slow).unwrap().energy() < 1e-4 * slow.energy());
        let fast = tone(&mask, 9.2);
        assert!(eca.remove(&fast).unwrap().energy() > 0.85 * fast.energy());
    }

    #[test]
    fn cancellation_is_idempotent() {
        let mask = TddMask::fr2_default();
        let ch = channel(&mask, 4, |i, m| Complex64::from_polar(1.0 + i as f64, 0.013 * (i + 1) as f64 * m as f64));
        for cfg in [EcaConfig::default(), EcaConfig { basis: EcaBasis::Harmonic { half_width: 2 } }] {
            let once = eca_c_remove(&ch, &cfg).unwrap();
            let twice = eca_c_remove(&once, &cfg).unwrap();
            let diff: f64 = once.grid.iter().zip(twice.grid.iter()).map(|(a, b)| (a - b).norm_sqr()).sum();
            assert!(diff < 1e-24 * ch.energy());
        }
    }

    #[test]
    fn identical_frame_cancels() {
        let mask = TddMask::periodic(5, 2, 4);
        let ch = channel(&mask, 3, |i, m| Complex64::from_polar(1.0 + i as f64, 0.3 * m as f64));
        let map = crap_acquire(std::slice::from_ref(&ch), 0, 10).unwrap();
        let out = crap_remove(&ch, &map).unwrap();
        assert!(out.energy() < 1e-25 * ch.energy());
    }

    #[test]
    fn scaled_frame_cancels() {
        let mask = TddMask::full_dl(16);
        let ch = channel(&mask, 3, |i, m| Complex64::from_polar(1.0 + i as f64, 0.3 * m as f64));
        let map = crap_acquire(std::slice::from_ref(&ch), 0, 10).unwrap();
        let mut rotated = ch.clone();
        rotated.grid.mapv_inplace(|z| z * Complex64::from_polar(0.8, 1.2));
        let out = crap_remove(&rotated, &map).unwrap();
        assert!(out.energy() < 1e-25 * ch.energy());
    }

    #[test]
    fn empty_acquisition_rejected() {
        assert_eq!(crap_acquire(&[], 0, 10).unwrap_err(), DspError::EmptyAcquisition);
    }

    #[test]
    fn staleness() {
        let mask = TddMask::full_dl(4);
        let ch = channel(&mask, 1, |_, _| Complex64::new(1.0, 0.0));
        let map = crap_acquire(&[ch], 100, 50).unwrap();
        assert!(!map.is_stale(150));
        assert!(map.is_stale(151));
        assert!(!map.is_stale(20));
    }
}
