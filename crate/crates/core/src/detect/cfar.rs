//! Two-dimensional cell-averaging CFAR on a range-Doppler periodogram.
//!
//! Training and guard windows wrap around both axes: the periodogram is a DFT
//! grid and therefore circular. Near strong clutter the wrapped training
//! cells raise the threshold slightly on the opposite edge.

use std::cell::RefCell;

use serde::{Deserialize, Serialize};

use super::{Detection, DetectError, DetectionFlags, Result};
use crate::dsp::Periodogram;
use crate::linkbudget::linear_to_db;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CfarConfig {
    pub pfa: f64,
    /// Training cells per side, (range, Doppler).
    pub training: (usize, usize),
    /// Guard cells per side, (range, Doppler).
    pub guard: (usize, usize),
    /// Local-maximum neighbourhood half-size, (range, Doppler).
    pub neighborhood: (usize, usize),
}

impl Default for CfarConfig {
    fn default() -> Self {
        Self {
            pfa: 1e-6,
            training: (8, 8),
            guard: (4, 4),
            neighborhood: (1, 1),
        }
    }
}

impl CfarConfig {
    /// Setting used for long-range detection.
    pub fn long_range() -> Self {
        Self {
            pfa: 1e-4,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.pfa > 0.0 && self.pfa < 1.0) {
            return Err(DetectError::InvalidConfig(format!("pfa {} not in (0, 1)", self.pfa)));
        }
        if self.training.0 == 0 || self.training.1 == 0 {
            return Err(DetectError::InvalidConfig("need at least one training cell per side".into()));
        }
        Ok(())
    }

    pub fn training_cells(&self) -> usize {
        let outer = (2 * (self.guard.0 + self.training.0) + 1) * (2 * (self.guard.1 + self.training.1) + 1);
        let inner = (2 * self.guard.0 + 1) * (2 * self.guard.1 + 1);
        outer - inner
    }

    /// Threshold multiplier on the training mean for exponentially
    /// distributed (square-law) cell powers.
    pub fn threshold_factor(&self) -> f64 {
        let n = self.training_cells() as f64;
        n * (self.pfa.powf(-1.0 / n) - 1.0)
    }
}

/// A cell whose power exceeded the adaptive threshold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CfarHit {
    pub range_bin: usize,
    pub doppler_bin: usize,
    pub power: f64,
    /// Mean power of the training ring.
    pub local_mean: f64,
}

thread_local! {
    /// Box-sum buffers reused across frames on the same thread.
    static SCRATCH: RefCell<[Vec<f64>; 3]> = RefCell::new(Default::default());
}

#[cfg(test)]
fn box_sum(data: &[f64], nr: usize, nd: usize, hr: usize, hd: usize) -> Vec<f64> {
    let mut rows = Vec::new();
    let mut out = Vec::new();
    box_sum_into(data, nr, nd, hr, hd, &mut rows, &mut out);
    out
}

/// Cyclic box sum with half-widths `(hr, hd)` over Doppler-major data.
fn box_sum_into(data: &[f64], nr: usize, nd: usize, hr: usize, hd: usize, rows: &mut Vec<f64>, out: &mut Vec<f64>) {
    rows.clear();
    rows.resize(data.len(), 0.0);
    for d in 0..nd {
        let col = &data[d * nr..(d + 1) * nr];
        let out = &mut rows[d * nr..(d + 1) * nr];
        let mut acc: f64 = (0..=2 * hr).map(|k| col[(k + nr - hr) % nr]).sum();
        out[0] = acc;
        // Window entering at `add`, leaving at `sub`, both wrapped.
        let mut add = hr % nr;
        let mut sub = (nr - hr - 1) % nr;
        for o in out.iter_mut().skip(1) {
            add += 1;
            if add == nr {
                add = 0;
            }
            sub += 1;
            if sub == nr {
                sub = 0;
            }
            acc += col[add] - col[sub];
            *o = acc;
        }
    }
    out.clear();
    out.resize(data.len(), 0.0);
    let mut acc = vec![0.0; nr];
    for k in 0..=2 * hd {
        let d = (k + nd - hd) % nd;
        for (a, v) in acc.iter_mut().zip(&rows[d * nr..(d + 1) * nr]) {
            *a += v;
        }
    }
    out[..nr].copy_from_slice(&acc);
    for d in 1..nd {
        let add = ((d + hd) % nd) * nr;
        let sub = ((d + nd - hd - 1) % nd) * nr;
        for r in 0..nr {
            acc[r] += rows[add + r] - rows[sub + r];
        }
        out[d * nr..(d + 1) * nr].copy_from_slice(&acc);
    }
}

/// All threshold exceedances, before local-maximum reduction.
pub fn cfar_hits(p: &Periodogram, cfg: &CfarConfig) -> Result<Vec<CfarHit>> {
    cfg.validate()?;
    let nr = p.n_range();
    let nd = p.n_doppler();
    let (hr, hd) = (cfg.guard.0 + cfg.training.0, cfg.guard.1 + cfg.training.1);
    if 2 * hr + 1 > nr || 2 * hd + 1 > nd {
        return Err(DetectError::WindowTooLarge {
            window: (2 * hr + 1, 2 * hd + 1),
            grid: (nr, nd),
        });
    }
    let data = p.raw();
    let n_train = cfg.training_cells() as f64;
    let alpha = cfg.threshold_factor();
    let mut hits = Vec::new();
    SCRATCH.with(|cell| {
        let [rows, outer, inner] = &mut *cell.borrow_mut();
        box_sum_into(data, nr, nd, hr, hd, rows, outer);
        box_sum_into(data, nr, nd, cfg.guard.0, cfg.guard.1, rows, inner);
        for (i, &x) in data.iter().enumerate() {
            let mean = (outer[i] - inner[i]) / n_train;
            if x > alpha * mean {
                hits.push(CfarHit {
                    range_bin: i % nr,
                    doppler_bin: i / nr,
                    power: x,
                    local_mean: mean,
                });
            }
        }
    });
    Ok(hits)
}

fn is_local_max(p: &Periodogram, r: usize, d: usize, nb: (usize, usize)) -> bool {
    let nr = p.n_range();
    let nd = p.n_doppler();
    let data = p.raw();
    let idx = d * nr + r;
    let x = data[idx];
    for dd in 0..=2 * nb.1 {
        let d2 = (d + nd + dd - nb.1) % nd;
        for dr in 0..=2 * nb.0 {
            let r2 = (r + nr + dr - nb.0) % nr;
            let j = d2 * nr + r2;
            if j != idx && (data[j] > x || (data[j] == x && j < idx)) {
                return false;
            }
        }
    }
    true
}

/// Largest ratio of main-lobe peak to the nearest bin centre for a
/// rectangular window padded by `pad`: the peak sits half a padded bin away.
fn max_interpolation_gain(pad: usize) -> f64 {
    let x = std::f64::consts::PI * 0.5 / pad as f64;
    (x / x.sin()).powi(2)
}

/// Sub-bin offset and peak gain of a parabola through three log-powers. The
/// gain is capped at `max_gain` so that distorted peaks (e.g. next to a
/// clutter notch) cannot extrapolate far above the measured cell.
fn parabolic(left: f64, centre: f64, right: f64, max_gain: f64) -> (f64, f64) {
    if !(left > 0.0 && centre > 0.0 && right > 0.0) {
        return (0.0, 1.0);
    }
    let (a, b, c) = (left.ln(), centre.ln(), right.ln());
    let denom = a - 2.0 * b + c;
    if denom >= 0.0 {
        return (0.0, 1.0);
    }
    let delta = (0.5 * (a - c) / denom).clamp(-0.5, 0.5);
    let log_gain = -0.25 * (a - c) * delta;
    (delta, log_gain.exp().min(max_gain))
}

/// CA-CFAR detection reduced to local maxima, each refined to sub-bin
/// position by log-parabolic interpolation in range and Doppler.
pub fn cfar_detect(p: &Periodogram, cfg: &CfarConfig) -> Result<Vec<Detection>> {
    let hits = cfar_hits(p, cfg)?;
    let nr = p.n_range();
    let nd = p.n_doppler();
    let data = p.raw();
    let at = |r: usize, d: usize| data[(d % nd) * nr + (r % nr)];
    let gain_r = max_interpolation_gain(p.range_pad);
    let gain_d = max_interpolation_gain(p.doppler_pad);
    let mut out = Vec::new();
    for h in hits {
        if !is_local_max(p, h.range_bin, h.doppler_bin, cfg.neighborhood) {
            continue;
        }
        let (r, d) = (h.range_bin, h.doppler_bin);
        let (dr, gr) = parabolic(at(r + nr - 1, d), h.power, at(r + 1, d), gain_r);
        let (dd, gd) = parabolic(at(r, d + nd - 1), h.power, at(r, d + 1), gain_d);
        let range_bin = (r as f64 + dr).rem_euclid(nr as f64);
        let doppler_bin = (d as f64 + dd).rem_euclid(nd as f64);
        let peak_power = h.power * gr * gd;
        out.push(Detection {
            frame_index: p.frame_index,
            range_m: p.range_m(range_bin),
            velocity_mps: p.velocity_mps(doppler_bin),
            doppler_hz: p.doppler_hz(doppler_bin),
            peak_power,
            sinr_db: linear_to_db(peak_power / h.local_mean),
            bin: (r, d),
            flags: DetectionFlags::default(),
        });
    }
    Ok(out)
}
