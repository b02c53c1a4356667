//! Scene description and frame synthesis: moving targets, static clutter,
//! beam schedule, TDD mask and receiver impairments.

mod experiments;
pub mod raw;
mod synth;
mod tdd;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linkbudget::{LinkBudgetError, LinkBudgetParams};

pub use experiments::{make_experiment1_scenario, make_experiment2_scenario};
pub use synth::{
    frame_truth, synthesize_acquisition_frame, synthesize_frame, RadioFrame, SynthesizedFrame, TruthRecord,
};
pub use tdd::TddMask;

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("frame {frame_index} is beyond the scenario duration ({frames} frames)")]
    FrameOutOfRange { frame_index: u64, frames: u64 },
    #[error("beam index {0} out of range")]
    BadBeam(usize),
    #[error(transparent)]
    LinkBudget(#[from] LinkBudgetError),
    #[error("raw frame dump: {0}")]
    Io(#[from] std::io::Error),
    #[error("raw frame dump: {0}")]
    Format(String),
}

pub type Result<T> = std::result::Result<T, SceneError>;

/// Serializes a linear power ratio as dB.
mod db_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::linkbudget::{db_to_linear, linear_to_db};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_f64(linear_to_db(*v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        f64::deserialize(d).map(db_to_linear)
    }
}

/// Piecewise-linear position versus time. Before the first waypoint and after
/// the last one the object hovers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    /// `[t_s, x_m, y_m, z_m]`, time-sorted. The radar sits at the origin,
    /// x points along azimuth 0.
    pub waypoints: Vec<[f64; 4]>,
}

/// Instantaneous kinematics of an object relative to the radar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kinematics {
    pub range: f64,
    /// d(range)/dt; negative while approaching.
    pub range_rate: f64,
    pub azimuth_deg: f64,
    pub elevation_deg: f64,
}

impl Trajectory {
    pub fn hover(x: f64, y: f64, z: f64) -> Self {
        Self {
            waypoints: vec![[0.0, x, y, z]],
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.waypoints.is_empty() {
            return Err(SceneError::Invalid("trajectory without waypoints".into()));
        }
        if self.waypoints.iter().flatten().any(|v| !v.is_finite()) {
            return Err(SceneError::Invalid("non-finite trajectory waypoint".into()));
        }
        if self.waypoints.windows(2).any(|w| w[1][0] < w[0][0]) {
            return Err(SceneError::Invalid("trajectory waypoints are not time-sorted".into()));
        }
        Ok(())
    }

    fn segment(&self, t: f64) -> ([f64; 3], [f64; 3]) {
        let wp = &self.waypoints;
        let pos = |w: &[f64; 4]| [w[1], w[2], w[3]];
        if t < wp[0][0] {
            return (pos(&wp[0]), [0.0; 3]);
        }
        let last = wp.len() - 1;
        if t >= wp[last][0] {
            return (pos(&wp[last]), [0.0; 3]);
        }
        let i = wp.partition_point(|w| w[0] <= t) - 1;
        let (a, b) = (&wp[i], &wp[i + 1]);
        let dt = b[0] - a[0];
        if dt <= 0.0 {
            return (pos(b), [0.0; 3]);
        }
        let u = (t - a[0]) / dt;
        let mut p = [0.0; 3];
        let mut v = [0.0; 3];
        for k in 0..3 {
            p[k] = a[k + 1] + u * (b[k + 1] - a[k + 1]);
            v[k] = (b[k + 1] - a[k + 1]) / dt;
        }
        (p, v)
    }

    pub fn position(&self, t: f64) -> [f64; 3] {
        self.segment(t).0
    }

    pub fn kinematics(&self, t: f64) -> Kinematics {
        let (p, v) = self.segment(t);
        let range = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
        let range_rate = if range > 0.0 {
            (p[0] * v[0] + p[1] * v[1] + p[2] * v[2]) / range
        } else {
            0.0
        };
        let horizontal = p[0].hypot(p[1]);
        Kinematics {
            range,
            range_rate,
            azimuth_deg: p[1].atan2(p[0]).to_degrees(),
            elevation_deg: p[2].atan2(horizontal).to_degrees(),
        }
    }

    pub fn start_time(&self) -> f64 {
        self.waypoints[0][0]
    }

    pub fn end_time(&self) -> f64 {
        self.waypoints[self.waypoints.len() - 1][0]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RcsModel {
    #[default]
    Constant,
    /// Exponentially distributed power per frame around the mean.
    PerFrameExponentialFading,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Target {
    pub id: u32,
    pub trajectory: Trajectory,
    /// Mean radar cross section, m^2.
    #[serde(rename = "rcs_dbsm", with = "db_serde")]
    pub rcs_mean: f64,
    #[serde(default)]
    pub rcs_model: RcsModel,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClutterObject {
    pub range: f64,
    /// Two-way coupling loss of this reflector, linear.
    #[serde(rename = "coupling_loss_db", with = "db_serde")]
    pub coupling_loss: f64,
    #[serde(default)]
    pub doppler: f64,
    /// Standard deviation of a per-frame phase perturbation, radians.
    #[serde(default)]
    pub phase_jitter_std: f64,
}

/// Separable Gaussian beam, identical on Tx and Rx.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Beam {
    pub id: u32,
    pub boresight_azimuth: f64,
    #[serde(default)]
    pub boresight_elevation: f64,
    pub hpbw_az: f64,
    pub hpbw_el: f64,
    /// Linear boresight gain.
    #[serde(rename = "gain_boresight_db", with = "db_serde")]
    pub gain_boresight: f64,
    /// Time spent in this beam per sweep, seconds.
    pub dwell: f64,
}

impl Beam {
    pub fn new(id: u32, boresight_azimuth: f64, gain_boresight: f64, dwell: f64) -> Self {
        Self {
            id,
            boresight_azimuth,
            boresight_elevation: 0.0,
            hpbw_az: 14.0,
            hpbw_el: 6.4,
            gain_boresight,
            dwell,
        }
    }
}

/// One-way gain of `beam` for an object offset from boresight by the given
/// angles: half power at half the HPBW in each plane.
pub fn beam_gain(beam: &Beam, az_offset_deg: f64, el_offset_deg: f64) -> f64 {
    let k = 4.0 * std::f64::consts::LN_2;
    beam.gain_boresight
        * (-k * (az_offset_deg / beam.hpbw_az).powi(2)).exp()
        * (-k * (el_offset_deg / beam.hpbw_el).powi(2)).exp()
}

/// Which synthetic contributions are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Impairments {
    /// Additive white noise with the model's noise-plus-interference PSD.
    pub noise: bool,
    /// Direct Tx-Rx leakage at zero delay with power P_tx / I.
    pub leakage: bool,
    /// Linear amplitude loss for echoes outside the CP-protected range.
    pub receive_window: bool,
}

impl Default for Impairments {
    fn default() -> Self {
        Self {
            noise: true,
            leakage: true,
            receive_window: true,
        }
    }
}

impl Impairments {
    pub fn none() -> Self {
        Self {
            noise: false,
            leakage: false,
            receive_window: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub name: String,
    pub params: LinkBudgetParams,
    pub frame_duration: f64,
    pub symbols_per_frame: usize,
    pub dl_mask: TddMask,
    #[serde(default)]
    pub targets: Vec<Target>,
    #[serde(default)]
    pub clutter: Vec<ClutterObject>,
    pub beams: Vec<Beam>,
    pub duration: f64,
    pub rng_seed: u64,
    #[serde(default)]
    pub impairments: Impairments,
}

impl Scenario {
    /// Reference numerology with the default TDD mask and a single fixed beam,
    /// no objects. A starting point for tests and custom scenes.
    pub fn empty(params: LinkBudgetParams, duration: f64, rng_seed: u64) -> Self {
        let frame_duration = 0.01;
        let symbols_per_frame = (frame_duration / params.symbol_duration()).round() as usize;
        let beam = Beam::new(0, 0.0, params.g_tx, frame_duration);
        Self {
            name: "custom".into(),
            params,
            frame_duration,
            symbols_per_frame,
            dl_mask: TddMask::fr2_default(),
            targets: Vec::new(),
            clutter: Vec::new(),
            beams: vec![beam],
            duration,
            rng_seed,
            impairments: Impairments::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        if self.dl_mask.len() != self.symbols_per_frame {
            return Err(SceneError::Invalid(format!(
                "DL mask covers {} symbols, frame has {}",
                self.dl_mask.len(),
                self.symbols_per_frame
            )));
        }
        if self.dl_mask.dl_count() != self.params.m_symbols {
            return Err(SceneError::Invalid(format!(
                "DL mask has {} DL symbols, M = {}",
                self.dl_mask.dl_count(),
                self.params.m_symbols
            )));
        }
        let implied = self.symbols_per_frame as f64 * self.params.symbol_duration();
        if ((implied - self.frame_duration) / self.frame_duration).abs() > 1e-9 {
            return Err(SceneError::Invalid(format!(
                "{} symbols of {:.6e} s do not fill a {} s frame",
                self.symbols_per_frame,
                self.params.symbol_duration(),
                self.frame_duration
            )));
        }
        if self.beams.is_empty() {
            return Err(SceneError::Invalid("no beams configured".into()));
        }
        for beam in &self.beams {
            if !(beam.gain_boresight > 0.0 && beam.hpbw_az > 0.0 && beam.hpbw_el > 0.0) {
                return Err(SceneError::Invalid(format!("beam {} has non-positive gain or width", beam.id)));
            }
            let dwell_frames = beam.dwell / self.frame_duration;
            if !(dwell_frames >= 1.0 - 1e-9 && (dwell_frames - dwell_frames.round()).abs() < 1e-6) {
                return Err(SceneError::Invalid(format!(
                    "beam {} dwell {} s is not a whole number of frames",
                    beam.id, beam.dwell
                )));
            }
        }
        for target in &self.targets {
            target.trajectory.validate()?;
            if !(target.rcs_mean > 0.0) {
                return Err(SceneError::Invalid(format!("target {} RCS must be positive", target.id)));
            }
        }
        for c in &self.clutter {
            if !(c.coupling_loss > 0.0 && c.range >= 0.0 && c.phase_jitter_std >= 0.0) {
                return Err(SceneError::Invalid(format!("clutter object at {} m is invalid", c.range)));
            }
        }
        if !(self.duration > 0.0) {
            return Err(SceneError::Invalid("duration must be positive".into()));
        }
        Ok(())
    }

    pub fn frame_count(&self) -> u64 {
        (self.duration / self.frame_duration + 1e-9).floor() as u64
    }

    pub fn frame_time(&self, frame_index: u64) -> f64 {
        frame_index as f64 * self.frame_duration
    }

    pub fn sweep_period(&self) -> f64 {
        self.beams.iter().map(|b| b.dwell).sum()
    }

    /// Index of the beam scheduled at time `t`.
    pub fn beam_index_at(&self, t: f64) -> usize {
        let period = self.sweep_period();
        let mut phase = t.rem_euclid(period);
        for (i, b) in self.beams.iter().enumerate() {
            if phase < b.dwell {
                return i;
            }
            phase -= b.dwell;
        }
        self.beams.len() - 1
    }

    /// Beam of a frame, judged at the frame centre so that dwell boundaries
    /// falling on frame starts are unambiguous.
    pub fn beam_index_for_frame(&self, frame_index: u64) -> usize {
        self.beam_index_at(self.frame_time(frame_index) + 0.5 * self.frame_duration)
    }

    /// Combined coupling loss of all clutter objects: 1/C = sum of 1/C_i.
    pub fn combined_coupling_loss(&self) -> Option<f64> {
        if self.clutter.is_empty() {
            return None;
        }
        Some(1.0 / self.clutter.iter().map(|c| 1.0 / c.coupling_loss).sum::<f64>())
    }

    /// Slow-time sampling interval (one OFDM symbol including CP).
    pub fn symbol_duration(&self) -> f64 {
        self.params.symbol_duration()
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario =
            toml::from_str(text).map_err(|e| SceneError::Invalid(format!("scenario file: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario serializes to TOML")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn beam() -> Beam {
        Beam::new(41, 0.0, 100.0, 0.05)
    }

    #[test]
    fn beam_gain_boresight_and_half_power() {
        let b = beam();
        assert_eq!(beam_gain(&b, 0.0, 0.0), 100.0);
        assert_relative_eq!(beam_gain(&b, 7.0, 0.0), 50.0, max_relative = 1e-12);
        assert_relative_eq!(beam_gain(&b, 0.0, -3.2), 50.0, max_relative = 1e-12);
    }

    #[test]
    fn two_way_beam_edge_loss_is_six_db() {
        let b = beam();
        let two_way = (beam_gain(&b, 7.0, 0.0) / b.gain_boresight).powi(2);
        assert_relative_eq!(crate::linkbudget::linear_to_db(two_way), -6.0206, epsilon = 1e-4);
    }

    #[test]
    fn trajectory_interpolates_and_hovers() {
        let t = Trajectory {
            waypoints: vec![[0.0, 100.0, 0.0, 0.0], [10.0, 50.0, 0.0, 0.0]],
        };
        let k = t.kinematics(5.0);
        assert_relative_eq!(k.range, 75.0);
        assert_relative_eq!(k.range_rate, -5.0);
        let k = t.kinematics(20.0);
        assert_relative_eq!(k.range, 50.0);
        assert_eq!(k.range_rate, 0.0);
        assert_eq!(t.kinematics(-1.0).range, 100.0);
    }

    #[test]
    fn unsorted_trajectory_rejected() {
        let t = Trajectory {
            waypoints: vec![[1.0, 1.0, 0.0, 0.0], [0.0, 2.0, 0.0, 0.0]],
        };
        assert!(t.validate().is_err());
    }

    #[test]
    fn empty_scenario_is_consistent() {
        let s = Scenario::empty(LinkBudgetParams::fr2_reference(), 1.0, 7);
        assert_eq!(s.symbols_per_frame, 1120);
        s.validate().unwrap();
        assert_eq!(s.frame_count(), 100);
    }

    #[test]
    fn beam_schedule_cycles() {
        let mut s = Scenario::empty(LinkBudgetParams::fr2_reference(), 1.0, 7);
        s.beams = (0..6).map(|i| Beam::new(i, 10.0 * i as f64, 100.0, 0.05)).collect();
        assert_relative_eq!(s.sweep_period(), 0.3, max_relative = 1e-12);
        let seq: Vec<usize> = (0..35).map(|f| s.beam_index_for_frame(f)).collect();
        assert_eq!(&seq[..5], &[0; 5]);
        assert_eq!(&seq[5..10], &[1; 5]);
        assert_eq!(&seq[25..30], &[5; 5]);
        assert_eq!(&seq[30..35], &[0; 5]);
    }

    #[test]
    fn mismatched_mask_rejected() {
        let mut s = Scenario::empty(LinkBudgetParams::fr2_reference(), 1.0, 7);
        s.dl_mask = TddMask::full_dl(1120);
        assert!(s.validate().is_err());
    }
}
