use serde::{Deserialize, Serialize};

use super::{DspError, Periodogram, Result};

pub const MIN_NOISE_CELLS: usize = 1000;

/// Rectangle in range/velocity excluded from the noise estimate. Bounds are
/// inclusive; velocity is range rate.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExclusionBox {
    pub range_m: (f64, f64),
    pub velocity_mps: (f64, f64),
}

/// Periodogram cells used for the noise-plus-interference floor: everything
/// outside the listed boxes.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NoiseRegion {
    pub exclude: Vec<ExclusionBox>,
}

impl NoiseRegion {
    pub fn everything() -> Self {
        Self::default()
    }

    pub fn exclude_around(mut self, range_m: f64, velocity_mps: f64, range_margin: f64, velocity_margin: f64) -> Self {
        self.exclude.push(ExclusionBox {
            range_m: (range_m - range_margin, range_m + range_margin),
            velocity_mps: (velocity_mps - velocity_margin, velocity_mps + velocity_margin),
        });
        self
    }

    /// Excludes a velocity band at every range (e.g. the zero-Doppler ridge).
    pub fn exclude_velocity_band(mut self, lo: f64, hi: f64) -> Self {
        self.exclude.push(ExclusionBox {
            range_m: (f64::NEG_INFINITY, f64::INFINITY),
            velocity_mps: (lo, hi),
        });
        self
    }

    pub fn exclude_range_band(mut self, lo: f64, hi: f64) -> Self {
        self.exclude.push(ExclusionBox {
            range_m: (lo, hi),
            velocity_mps: (f64::NEG_INFINITY, f64::INFINITY),
        });
        self
    }
}

/// Median power over the noise region divided by ln 2, i.e. the mean of an
/// exponentially distributed cell power. Stored in the periodogram.
pub fn estimate_noise_floor(p: &mut Periodogram, region: &NoiseRegion) -> Result<f64> {
    let nr = p.n_range();
    let nd = p.n_doppler();
    let in_range: Vec<Vec<bool>> = region
        .exclude
        .iter()
        .map(|b| (0..nr).map(|r| {
            let x = p.range_m(r as f64);
            x >= b.range_m.0 && x <= b.range_m.1
        }).collect())
        .collect();
    let in_velocity: Vec<Vec<bool>> = region
        .exclude
        .iter()
        .map(|b| (0..nd).map(|d| {
            let v = p.velocity_mps(d as f64);
            v >= b.velocity_mps.0 && v <= b.velocity_mps.1
        }).collect())
        .collect();

    let raw = p.raw();
    let mut cells = Vec::with_capacity(raw.len());
    for d in 0..nd {
        let active: Vec<usize> = (0..region.exclude.len()).filter(|&b| in_velocity[b][d]).collect();
        let column = &raw[d * nr..(d + 1) * nr];
        if active.is_empty() {
            cells.extend_from_slice(column);
        } else {
            cells.extend(
                column
                    .iter()
                    .enumerate()
                    .filter(|(r, _)| !active.iter().any(|&b| in_range[b][*r]))
                    .map(|(_, &v)| v),
            );
        }
    }
    if cells.len() < MIN_NOISE_CELLS {
        return Err(DspError::NoiseRegionTooSmall {
            cells: cells.len(),
            min: MIN_NOISE_CELLS,
        });
    }
    let floor = median(&mut cells) / std::f64::consts::LN_2;
    p.noise_floor_estimate = Some(floor);
    Ok(floor)
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (lower, &mut upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    if n % 2 == 1 {
        upper
    } else {
        let below = lower.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (below + upper)
    }
}
