use std::f64::consts::PI;

use ndarray::Array2;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::Serialize;

use super::{beam_gain, Beam, RcsModel, Result, Scenario, SceneError, TddMask, Target};
use crate::linkbudget::{interference_psd, RangeWindowModel};
use crate::SPEED_OF_LIGHT;

/// Frequency-domain I/Q grid of one radio frame, `N` subcarriers (rows) by
/// `symbols_per_frame` OFDM symbols (columns).
#[derive(Debug, Clone, PartialEq)]
pub struct RadioFrame {
    pub grid: Array2<Complex64>,
    pub dl_mask: TddMask,
    pub frame_index: u64,
    pub timestamp: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TruthRecord {
    pub frame_index: u64,
    pub time_s: f64,
    pub target_id: u32,
    pub range_m: f64,
    /// Range rate; negative while approaching.
    pub radial_velocity_mps: f64,
    pub az_offset_deg: f64,
}

#[derive(Debug, Clone)]
pub struct SynthesizedFrame {
    pub tx: RadioFrame,
    pub rx: RadioFrame,
    pub truth: Vec<TruthRecord>,
    pub beam_index: usize,
}

#[derive(Clone, Copy)]
enum Stream {
    Payload = 1,
    Noise = 2,
    Fading = 3,
    Jitter = 4,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent RNG per (seed, frame key, stream), so frames can be generated
/// in any order with identical results.
fn stream_rng(seed: u64, key: u64, stream: Stream) -> ChaCha8Rng {
    let s = splitmix64(splitmix64(seed ^ splitmix64(key)) ^ stream as u64);
    ChaCha8Rng::seed_from_u64(s)
}

const ACQUISITION_KEY: u64 = 1 << 63;

/// Synthesizes frame `frame_index`. `beam` overrides the scheduled beam.
pub fn synthesize_frame(
    scenario: &Scenario,
    frame_index: u64,
    beam: Option<usize>,
) -> Result<SynthesizedFrame> {
    let frames = scenario.frame_count();
    if frame_index >= frames {
        return Err(SceneError::FrameOutOfRange { frame_index, frames });
    }
    let beam = beam.unwrap_or_else(|| scenario.beam_index_for_frame(frame_index));
    let t = scenario.frame_time(frame_index);
    synthesize_at(scenario, t, frame_index, frame_index, beam)
}

/// Synthesizes the `k`-th clutter-acquisition frame for a beam: the static
/// scene recorded just before the flight. Targets sit at their first
/// waypoint, so a UAV hovering there becomes part of the clutter map.
pub fn synthesize_acquisition_frame(
    scenario: &Scenario,
    beam: usize,
    k: u64,
) -> Result<SynthesizedFrame> {
    let t = -((k + 1) as f64) * scenario.frame_duration;
    let key = ACQUISITION_KEY | ((beam as u64) << 40) | k;
    synthesize_at(scenario, t, 0, key, beam)
}

fn truth_record(target: &Target, beam: &Beam, t: f64, frame_index: u64) -> TruthRecord {
    let k = target.trajectory.kinematics(t);
    TruthRecord {
        frame_index,
        time_s: t,
        target_id: target.id,
        range_m: k.range,
        radial_velocity_mps: k.range_rate,
        az_offset_deg: k.azimuth_deg - beam.boresight_azimuth,
    }
}

/// Ground truth of frame `frame_index` without synthesizing the I/Q grid.
pub fn frame_truth(scenario: &Scenario, frame_index: u64) -> Result<Vec<TruthRecord>> {
    let frames = scenario.frame_count();
    if frame_index >= frames {
        return Err(SceneError::FrameOutOfRange { frame_index, frames });
    }
    let b = scenario.beam_index_for_frame(frame_index);
    let beam = scenario.beams.get(b).ok_or(SceneError::BadBeam(b))?;
    let t = scenario.frame_time(frame_index);
    Ok(scenario.targets.iter().map(|x| truth_record(x, beam, t, frame_index)).collect())
}

struct Ray {
    amplitude: Complex64,
    delay: f64,
    doppler: f64,
}

fn synthesize_at(
    scenario: &Scenario,
    t: f64,
    frame_index: u64,
    key: u64,
    beam_index: usize,
) -> Result<SynthesizedFrame> {
    scenario.validate()?;
    let beam = scenario
        .beams
        .get(beam_index)
        .ok_or(SceneError::BadBeam(beam_index))?;
    let p = &scenario.params;
    let window = RangeWindowModel::from_params(p);
    let n_sub = p.n_subcarriers;
    let n_sym = scenario.symbols_per_frame;
    let seed = scenario.rng_seed;
    let t0 = scenario.symbol_duration();

    let mut rays = Vec::new();
    let mut truth = Vec::new();
    let mut fading = stream_rng(seed, key, Stream::Fading);
    for target in &scenario.targets {
        let k = target.trajectory.kinematics(t);
        let az_offset = k.azimuth_deg - beam.boresight_azimuth;
        let el_offset = k.elevation_deg - beam.boresight_elevation;
        truth.push(truth_record(target, beam, t, frame_index));
        let fade: f64 = Exp1.sample(&mut fading);
        if k.range <= 0.0 {
            continue;
        }
        let w = if scenario.impairments.receive_window {
            window.overlap(k.range)
        } else {
            1.0
        };
        if w == 0.0 {
            continue;
        }
        let pattern = beam_gain(beam, az_offset, el_offset) / beam.gain_boresight;
        let rcs = match target.rcs_model {
            RcsModel::Constant => target.rcs_mean,
            RcsModel::PerFrameExponentialFading => target.rcs_mean * fade,
        };
        let power = p.g_tx * p.g_rx * pattern * pattern * rcs * p.wavelength().powi(2)
            / (4.0 * PI).powi(3)
            / k.range.powi(4);
        let carrier_phase = -4.0 * PI * p.f_c * k.range / SPEED_OF_LIGHT;
        rays.push(Ray {
            amplitude: Complex64::from_polar(power.sqrt() * w, carrier_phase),
            delay: 2.0 * k.range / SPEED_OF_LIGHT,
            doppler: -2.0 * k.range_rate * p.f_c / SPEED_OF_LIGHT,
        });
    }

    let mut jitter = stream_rng(seed, key, Stream::Jitter);
    for c in &scenario.clutter {
        let dphi: f64 = jitter.sample::<f64, _>(StandardNormal) * c.phase_jitter_std;
        let w = if scenario.impairments.receive_window {
            window.overlap(c.range)
        } else {
            1.0
        };
        if w == 0.0 {
            continue;
        }
        let phase = -4.0 * PI * p.f_c * c.range / SPEED_OF_LIGHT + 2.0 * PI * c.doppler * t + dphi;
        rays.push(Ray {
            amplitude: Complex64::from_polar(w / c.coupling_loss.sqrt(), phase),
            delay: 2.0 * c.range / SPEED_OF_LIGHT,
            doppler: c.doppler,
        });
    }

    let leakage = if scenario.impairments.leakage {
        Complex64::new((1.0 / p.isolation).sqrt(), 0.0)
    } else {
        Complex64::new(0.0, 0.0)
    };

    let dl: Vec<usize> = scenario.dl_mask.dl_symbols().collect();
    let range_phasors: Vec<Vec<Complex64>> = rays
        .iter()
        .map(|r| {
            (0..n_sub)
                .map(|n| Complex64::from_polar(1.0, -2.0 * PI * n as f64 * p.delta_f * r.delay))
                .collect()
        })
        .collect();
    let doppler_phasors: Vec<Vec<Complex64>> = rays
        .iter()
        .map(|r| {
            dl.iter()
                .map(|&m| Complex64::from_polar(1.0, 2.0 * PI * r.doppler * m as f64 * t0))
                .collect()
        })
        .collect();

    let mut payload = stream_rng(seed, key, Stream::Payload);
    let mut noise_rng = stream_rng(seed, key, Stream::Noise);
    let noise_std = if scenario.impairments.noise {
        let psd = interference_psd(p)?;
        (psd.s_total * p.delta_f * n_sub as f64 / p.p_tx / 2.0).sqrt()
    } else {
        0.0
    };

    let qpsk = std::f64::consts::FRAC_1_SQRT_2;
    let mut tx = Array2::<Complex64>::zeros((n_sub, n_sym));
    let mut rx = Array2::<Complex64>::zeros((n_sub, n_sym));
    let mut channel = vec![Complex64::new(0.0, 0.0); dl.len()];
    for n in 0..n_sub {
        channel.fill(leakage);
        for (ray, (a, b)) in rays.iter().zip(range_phasors.iter().zip(&doppler_phasors)) {
            let coef = ray.amplitude * a[n];
            for (h, d) in channel.iter_mut().zip(b) {
                *h += coef * d;
            }
        }
        let mut tx_row = tx.row_mut(n);
        let mut rx_row = rx.row_mut(n);
        for (j, &m) in dl.iter().enumerate() {
            let bits: u8 = payload.random();
            let s = Complex64::new(
                if bits & 1 == 0 { qpsk } else { -qpsk },
                if bits & 2 == 0 { qpsk } else { -qpsk },
            );
            tx_row[m] = s;
            let mut y = channel[j] * s;
            if noise_std > 0.0 {
                let re: f64 = noise_rng.sample(StandardNormal);
                let im: f64 = noise_rng.sample(StandardNormal);
                y += Complex64::new(re * noise_std, im * noise_std);
            }
            rx_row[m] = y;
        }
    }

    let make = |grid| RadioFrame {
        grid,
        dl_mask: scenario.dl_mask.clone(),
        frame_index,
        timestamp: t,
    };
    Ok(SynthesizedFrame {
        tx: make(tx),
        rx: make(rx),
        truth,
        beam_index,
    })
}
