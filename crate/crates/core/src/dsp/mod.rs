//! Sensing chain: channel estimation, clutter removal and range-Doppler
//! periodogram.

mod clutter;
mod noise;
mod periodogram;

use ndarray::{Array2, Zip};
use num_complex::Complex64;
use thiserror::Error;

use crate::scene::{RadioFrame, Scenario, TddMask};

pub use clutter::{
    crap_acquire, crap_remove, eca_c_remove, ClutterMap, ClutterMapAccumulator, ClutterMapConfig, EcaCanceller,
    EcaBasis, EcaConfig,
};
pub use noise::{estimate_noise_floor, ExclusionBox, NoiseRegion, MIN_NOISE_CELLS};
pub use periodogram::{periodogram, Periodogram, PeriodogramConfig, RangeDopplerProcessor, Window};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DspError {
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("clutter acquisition needs at least one frame")]
    EmptyAcquisition,
    #[error("noise region holds {cells} cells, at least {min} required")]
    NoiseRegionTooSmall { cells: usize, min: usize },
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T> = std::result::Result<T, DspError>;

/// Physical constants of the OFDM grid needed to label periodogram bins.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Numerology {
    pub f_c: f64,
    pub delta_f: f64,
    /// Symbol spacing in slow time, including the cyclic prefix.
    pub symbol_duration: f64,
}

impl Numerology {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            f_c: s.params.f_c,
            delta_f: s.params.delta_f,
            symbol_duration: s.params.symbol_duration(),
        }
    }
}

/// Time-frequency channel of one frame: received over transmitted symbols.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelEstimate {
    pub grid: Array2<Complex64>,
    pub dl_mask: TddMask,
    pub frame_index: u64,
    /// DL cells zeroed because the transmitted symbol was below epsilon.
    pub zeroed_cells: usize,
}

impl ChannelEstimate {
    pub fn n_subcarriers(&self) -> usize {
        self.grid.nrows()
    }

    pub fn n_symbols(&self) -> usize {
        self.grid.ncols()
    }

    pub fn energy(&self) -> f64 {
        self.grid.iter().map(|z| z.norm_sqr()).sum()
    }
}

pub const DEFAULT_DIVISION_EPSILON: f64 = 1e-12;

/// Element-wise division of the received by the transmitted frame on DL
/// symbols; UL symbols and near-zero Tx cells are set to zero.
pub fn estimate_channel(tx: &RadioFrame, rx: &RadioFrame, epsilon: f64) -> Result<ChannelEstimate> {
    if tx.grid.dim() != rx.grid.dim() {
        return Err(DspError::DimensionMismatch(format!(
            "tx {:?} vs rx {:?}",
            tx.grid.dim(),
            rx.grid.dim()
        )));
    }
    if tx.dl_mask != rx.dl_mask {
        return Err(DspError::DimensionMismatch("tx and rx DL masks differ".into()));
    }
    if tx.dl_mask.len() != tx.grid.ncols() {
        return Err(DspError::DimensionMismatch(format!(
            "mask covers {} symbols, grid has {}",
            tx.dl_mask.len(),
            tx.grid.ncols()
        )));
    }
    let mask = tx.dl_mask.as_slice();
    let mut grid = Array2::<Complex64>::zeros(tx.grid.dim());
    let mut zeroed = 0usize;
    Zip::from(grid.rows_mut())
        .and(tx.grid.rows())
        .and(rx.grid.rows())
        .for_each(|mut h, t, r| {
            for m in 0..mask.len() {
                if !mask[m] {
                    continue;
                }
                if t[m].norm() < epsilon {
                    zeroed += 1;
                } else {
                    h[m] = r[m] / t[m];
                }
            }
        });
    Ok(ChannelEstimate {
        grid,
        dl_mask: tx.dl_mask.clone(),
        frame_index: rx.frame_index,
        zeroed_cells: zeroed,
    })
}
