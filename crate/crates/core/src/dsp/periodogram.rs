use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use ndarray::Array2;
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use super::{ChannelEstimate, DspError, Numerology, Result};
use crate::SPEED_OF_LIGHT;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Window {
    #[default]
    Rect,
    Hann,
}

impl Window {
    fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::Rect => vec![1.0; len],
            Window::Hann if len <= 1 => vec![1.0; len],
            Window::Hann => (0..len)
                .map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / (len - 1) as f64).cos())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct PeriodogramConfig {
    pub range_pad: usize,
    pub doppler_pad: usize,
    pub window: Window,
}

impl Default for PeriodogramConfig {
    fn default() -> Self {
        Self {
            range_pad: 2,
            doppler_pad: 2,
            window: Window::Rect,
        }
    }
}

/// Range-Doppler power map of one frame.
///
/// `power[[r, d]]` is indexed by range bin then Doppler bin. The storage is
/// Doppler-major (column-major for this indexing); [`Periodogram::raw`]
/// exposes it directly. Both transforms are unnormalized, so a unit-amplitude
/// exponential over `N` subcarriers and `M` DL symbols peaks at `(N M)^2`.
#[derive(Debug, Clone)]
pub struct Periodogram {
    pub power: Array2<f64>,
    /// Range spacing between adjacent (padded) bins.
    pub range_bin_m: f64,
    /// Velocity spacing between adjacent (padded) Doppler bins.
    pub velocity_bin_mps: f64,
    pub doppler_bin_hz: f64,
    pub range_pad: usize,
    pub doppler_pad: usize,
    pub f_c: f64,
    pub frame_index: u64,
    pub noise_floor_estimate: Option<f64>,
}

impl Periodogram {
    pub fn n_range(&self) -> usize {
        self.power.nrows()
    }

    pub fn n_doppler(&self) -> usize {
        self.power.ncols()
    }

    /// Range resolution of the unpadded transform.
    pub fn range_resolution_m(&self) -> f64 {
        self.range_bin_m * self.range_pad as f64
    }

    pub fn velocity_resolution_mps(&self) -> f64 {
        self.velocity_bin_mps * self.doppler_pad as f64
    }

    /// Full unambiguous Doppler span, Hz.
    pub fn doppler_span_hz(&self) -> f64 {
        self.doppler_bin_hz * self.n_doppler() as f64
    }

    pub fn range_m(&self, range_bin: f64) -> f64 {
        range_bin * self.range_bin_m
    }

    /// Doppler frequency of a (fractional) bin, mapped to `[-span/2, span/2)`.
    pub fn doppler_hz(&self, doppler_bin: f64) -> f64 {
        let n = self.n_doppler() as f64;
        let wrapped = doppler_bin.rem_euclid(n);
        let signed = if wrapped >= n / 2.0 { wrapped - n } else { wrapped };
        signed * self.doppler_bin_hz
    }

    /// Range rate of a (fractional) Doppler bin. Positive Doppler means an
    /// approaching target, hence a negative range rate.
    pub fn velocity_mps(&self, doppler_bin: f64) -> f64 {
        -self.doppler_hz(doppler_bin) * SPEED_OF_LIGHT / (2.0 * self.f_c)
    }

    /// Doppler bin (fractional, unwrapped into `[0, n)`) of a range rate.
    pub fn doppler_bin_of_velocity(&self, velocity_mps: f64) -> f64 {
        let hz = -velocity_mps * 2.0 * self.f_c / SPEED_OF_LIGHT;
        (hz / self.doppler_bin_hz).rem_euclid(self.n_doppler() as f64)
    }

    /// Doppler-major storage, `raw()[d * n_range + r]`.
    pub fn raw(&self) -> &[f64] {
        self.power
            .as_slice_memory_order()
            .expect("periodogram storage is contiguous")
    }

    pub fn raw_mut(&mut self) -> &mut [f64] {
        self.power
            .as_slice_memory_order_mut()
            .expect("periodogram storage is contiguous")
    }

    pub fn total_power(&self) -> f64 {
        self.raw().iter().sum()
    }

    /// `(range_bin, doppler_bin, power)` of the strongest cell.
    pub fn argmax(&self) -> (usize, usize, f64) {
        let nr = self.n_range();
        let (i, &p) = self
            .raw()
            .iter()
            .enumerate()
            .max_by(|a, b| a.1.total_cmp(b.1))
            .expect("non-empty periodogram");
        (i % nr, i / nr, p)
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        out.raw_mut().iter_mut().for_each(|p| *p *= factor);
        out.noise_floor_estimate = self.noise_floor_estimate.map(|n| n * factor);
        out
    }
}

/// Reusable periodogram engine with FFT plans for one grid shape.
pub struct RangeDopplerProcessor {
    cfg: PeriodogramConfig,
    numerology: Numerology,
    n_subcarriers: usize,
    n_symbols: usize,
    doppler_fft: Arc<dyn Fft<f64>>,
    range_fft: Arc<dyn Fft<f64>>,
    slow_window: Vec<f64>,
    fast_window: Vec<f64>,
    /// Work buffers kept between frames; large per-frame allocations are
    /// otherwise a significant share of the run time.
    scratch: Mutex<Scratch>,
}

#[derive(Default)]
struct Scratch {
    slow: Vec<Complex64>,
    fast: Vec<Complex64>,
    fft: Vec<Complex64>,
}

impl RangeDopplerProcessor {
    pub fn new(
        n_subcarriers: usize,
        n_symbols: usize,
        numerology: Numerology,
        cfg: PeriodogramConfig,
    ) -> Result<Self> {
        if cfg.range_pad == 0 || cfg.doppler_pad == 0 {
            return Err(DspError::InvalidConfig("padding factors must be >= 1".into()));
        }
        if n_subcarriers == 0 || n_symbols == 0 {
            return Err(DspError::InvalidConfig("empty grid".into()));
        }
        let mut planner = FftPlanner::new();
        Ok(Self {
            doppler_fft: planner.plan_fft_forward(n_symbols * cfg.doppler_pad),
            range_fft: planner.plan_fft_inverse(n_subcarriers * cfg.range_pad),
            slow_window: cfg.window.coefficients(n_symbols),
            fast_window: cfg.window.coefficients(n_subcarriers),
            scratch: Mutex::new(Scratch::default()),
            cfg,
            numerology,
            n_subcarriers,
            n_symbols,
        })
    }

    /// Doppler transform (forward) along slow time for each subcarrier, then
    /// range transform (inverse) along subcarriers for each Doppler bin.
    pub fn process(&self, ch: &ChannelEstimate) -> Result<Periodogram> {
        if ch.grid.dim() != (self.n_subcarriers, self.n_symbols) {
            return Err(DspError::DimensionMismatch(format!(
                "processor built for {:?}, channel is {:?}",
                (self.n_subcarriers, self.n_symbols),
                ch.grid.dim()
            )));
        }
        let n = self.n_subcarriers;
        let s = self.n_symbols;
        let ld = s * self.cfg.doppler_pad;
        let lr = n * self.cfg.range_pad;

        let zero = Complex64::new(0.0, 0.0);
        let mut guard = self.scratch.lock().unwrap_or_else(|e| e.into_inner());
        let Scratch { slow, fast, fft } = &mut *guard;
        slow.clear();
        slow.resize(n * ld, zero);
        for (i, row) in ch.grid.rows().into_iter().enumerate() {
            let wf = self.fast_window[i];
            let dst = &mut slow[i * ld..i * ld + s];
            for ((d, &x), &ws) in dst.iter_mut().zip(row.iter()).zip(&self.slow_window) {
                *d = x * (wf * ws);
            }
        }
        fft.resize(self.doppler_fft.get_inplace_scratch_len(), zero);
        self.doppler_fft.process_with_scratch(slow, fft);

        fast.clear();
        fast.resize(ld * lr, zero);
        transpose_into(slow, n, ld, fast, lr);
        fft.resize(self.range_fft.get_inplace_scratch_len(), zero);
        self.range_fft.process_with_scratch(fast, fft);

        let power: Vec<f64> = fast.iter().map(|z| z.norm_sqr()).collect();
        drop(guard);
        let power = Array2::from_shape_vec((ld, lr), power)
            .expect("shape matches buffer")
            .reversed_axes();

        let frame_time = s as f64 * self.numerology.symbol_duration;
        let doppler_bin_hz = 1.0 / (frame_time * self.cfg.doppler_pad as f64);
        Ok(Periodogram {
            power,
            range_bin_m: SPEED_OF_LIGHT / (2.0 * lr as f64 * self.numerology.delta_f),
            velocity_bin_mps: doppler_bin_hz * SPEED_OF_LIGHT / (2.0 * self.numerology.f_c),
            doppler_bin_hz,
            range_pad: self.cfg.range_pad,
            doppler_pad: self.cfg.doppler_pad,
            f_c: self.numerology.f_c,
            frame_index: ch.frame_index,
            noise_floor_estimate: None,
        })
    }
}

/// Writes the `rows x cols` row-major `src` transposed into `dst`, whose rows
/// have stride `dst_stride >= rows`.
fn transpose_into(src: &[Complex64], rows: usize, cols: usize, dst: &mut [Complex64], dst_stride: usize) {
    const BLOCK: usize = 32;
    for r0 in (0..rows).step_by(BLOCK) {
        for c0 in (0..cols).step_by(BLOCK) {
            for r in r0..(r0 + BLOCK).min(rows) {
                for c in c0..(c0 + BLOCK).min(cols) {
                    dst[c * dst_stride + r] = src[r * cols + c];
                }
            }
        }
    }
}

pub fn periodogram(ch: &ChannelEstimate, numerology: &Numerology, cfg: &PeriodogramConfig) -> Result<Periodogram> {
    RangeDopplerProcessor::new(ch.n_subcarriers(), ch.n_symbols(), *numerology, *cfg)?.process(ch)
}
