use std::collections::BTreeSet;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::{Chain, ChainConfig, HarnessError, Result};
use crate::detect::Detection;
use crate::dsp::{estimate_channel, DEFAULT_DIVISION_EPSILON};
use crate::linkbudget::{expected_sinr_at_range, linear_to_db, RangeWindowModel, SinrModel};
use crate::scene::{beam_gain, synthesize_frame, Scenario, TruthRecord};
use crate::track::{write_track_summary_csv, write_tracks_csv, Track, TrackState, Tracker};

/// Association of ground truth to valid-track detections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TruthGate {
    pub range_m: f64,
    /// Keeps Doppler replicas and sidelobe tracks at the right range from
    /// counting as matches.
    pub velocity_mps: f64,
}

impl Default for TruthGate {
    fn default() -> Self {
        Self { range_m: 5.0, velocity_mps: 3.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub frame_index: u64,
    pub time_s: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub sinr_db: f64,
    pub flags: String,
    pub beam: usize,
    pub track_id: Option<u64>,
    pub track_valid: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MatchRecord {
    pub frame_index: u64,
    pub target_id: u32,
    pub track_id: u64,
    pub truth_range_m: f64,
    pub range_m: f64,
    pub range_error_m: f64,
    pub truth_velocity_mps: f64,
    pub velocity_mps: f64,
    pub sinr_db: f64,
    /// Window-limited model including the two-way beam pattern loss.
    pub model_sinr_db: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RangeErrorQuantiles {
    /// Median signed error removed before the quantiles.
    pub bias_m: f64,
    pub q50: f64,
    pub q95: f64,
    pub matched: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SinrBin {
    pub range_m: f64,
    pub measured_sinr_db: f64,
    pub model_sinr_db: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub frames: usize,
    pub mean_s: f64,
    pub median_s: f64,
    pub max_s: f64,
    pub synthesis_mean_s: f64,
    pub processing_mean_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub scenario: String,
    pub clutter: String,
    pub frames_processed: usize,
    /// Truth frames with the target inside the receive window and the
    /// half-power footprint of the active beam.
    pub truth_frames: usize,
    pub detected_frames: usize,
    pub detection_rate: f64,
    /// Detection rate over covered frames with |v| < 1 m/s.
    pub detection_rate_slow: Option<f64>,
    /// Detection rate over covered frames with |v| >= 5 m/s.
    pub detection_rate_fast: Option<f64>,
    pub range_error_quantiles: Option<RangeErrorQuantiles>,
    pub max_matched_range_m: Option<f64>,
    /// Lowest SINR of any detection that updated a valid track.
    pub min_validated_sinr_db: Option<f64>,
    pub valid_track_count: usize,
    /// Tracks that were validated but never matched the truth.
    pub false_track_count: usize,
    /// Median measured and model SINR in 10 m range bins.
    pub sinr_curve: Vec<SinrBin>,
    /// Kept out of `metrics.json`, which must be reproducible byte for byte.
    #[serde(skip)]
    pub timing: TimingStats,
}

#[derive(Debug, Clone)]
pub struct ReplayOutput {
    pub metrics: RunMetrics,
    pub truth: Vec<TruthRecord>,
    pub detections: Vec<DetectionRecord>,
    pub tracks: Vec<Track>,
    pub matches: Vec<MatchRecord>,
}

fn csv_file(dir: &Path, name: &str) -> Result<csv::Writer<BufWriter<File>>> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(dir.join(name))?)))
}

impl ReplayOutput {
    /// Writes truth, detection, track, match and metric files into `dir`.
    pub fn write_artifacts(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut w = csv_file(dir, "truth.csv")?;
        for t in &self.truth {
            w.serialize(t)?;
        }
        w.flush()?;
        let mut w = csv_file(dir, "detections.csv")?;
        for d in &self.detections {
            w.serialize(d)?;
        }
        w.flush()?;
        let mut w = csv_file(dir, "matches.csv")?;
        for m in &self.matches {
            w.serialize(m)?;
        }
        w.flush()?;
        let tracks: Vec<&Track> = self.tracks.iter().collect();
        write_tracks_csv(&tracks, BufWriter::new(File::create(dir.join("tracks.csv"))?))?;
        write_track_summary_csv(&tracks, BufWriter::new(File::create(dir.join("track_summary.csv"))?))?;
        let mut json = serde_json::to_string_pretty(&self.metrics)?;
        json.push('\n');
        std::fs::write(dir.join("metrics.json"), json)?;
        let mut json = serde_json::to_string_pretty(&self.metrics.timing)?;
        json.push('\n');
        std::fs::write(dir.join("timing.json"), json)?;
        Ok(())
    }
}

/// Linear-interpolation quantile of sorted data.
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

fn median(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    quantile(&v, 0.5)
}

pub(super) fn range_error_quantiles(errors: &[f64]) -> Option<RangeErrorQuantiles> {
    if errors.is_empty() {
        return None;
    }
    let bias = median(errors);
    let mut dev: Vec<f64> = errors.iter().map(|e| (e - bias).abs()).collect();
    dev.sort_by(f64::total_cmp);
    Some(RangeErrorQuantiles {
        bias_m: bias,
        q50: quantile(&dev, 0.5),
        q95: quantile(&dev, 0.95),
        matched: errors.len(),
    })
}

fn sinr_curve(matches: &[MatchRecord]) -> Vec<SinrBin> {
    let mut bins: std::collections::BTreeMap<i64, (Vec<f64>, Vec<f64>)> = Default::default();
    for m in matches {
        let e = bins.entry((m.truth_range_m / 10.0).floor() as i64).or_default();
        e.0.push(m.sinr_db);
        e.1.push(m.model_sinr_db);
    }
    bins.into_iter()
        .map(|(b, (measured, model))| SinrBin {
            range_m: b as f64 * 10.0 + 5.0,
            measured_sinr_db: median(&measured),
            model_sinr_db: median(&model),
            count: measured.len(),
        })
        .collect()
}

fn frame_list(cfg: &ChainConfig, total: u64) -> Result<Vec<std::ops::Range<u64>>> {
    if cfg.frames.is_empty() {
        return Ok(vec![0..total]);
    }
    cfg.frames
        .iter()
        .map(|&[a, b]| {
            if a >= b || b > total {
                Err(HarnessError::Config(format!(
                    "frame window [{a}, {b}) invalid for a scenario of {total} frames"
                )))
            } else {
                Ok(a..b)
            }
        })
        .collect()
}

/// Truth-side quantities that depend on the beam: coverage and the expected
/// windowed SINR with two-way pattern loss.
struct TruthView {
    covered: bool,
    model_sinr_db: f64,
}

fn truth_view(s: &Scenario, window: &RangeWindowModel, t: &TruthRecord, beam_index: usize) -> TruthView {
    let beam = &s.beams[beam_index];
    let target = s.targets.iter().find(|x| x.id == t.target_id);
    let (az, el, rcs) = match target {
        Some(x) => {
            let k = x.trajectory.kinematics(t.time_s);
            (k.azimuth_deg - beam.boresight_azimuth, k.elevation_deg - beam.boresight_elevation, x.rcs_mean)
        }
        None => (t.az_offset_deg, 0.0, s.params.rcs),
    };
    let covered = window.contains(t.range_m) && az.abs() <= 0.5 * beam.hpbw_az && el.abs() <= 0.5 * beam.hpbw_el;
    let pattern = beam_gain(beam, az, el) / beam.gain_boresight;
    let model_sinr_db = expected_sinr_at_range(&s.params, t.range_m, SinrModel::Windowed)
        .map(|m| m + 2.0 * linear_to_db(pattern) + linear_to_db(rcs / s.params.rcs))
        .unwrap_or(f64::NEG_INFINITY);
    TruthView { covered, model_sinr_db }
}

fn detection_rate(hits: usize, total: usize) -> Option<f64> {
    (total > 0).then(|| hits as f64 / total as f64)
}

/// Replays a scenario through the full chain and scores the result against
/// ground truth.
pub fn replay(s: &Scenario, cfg: &ChainConfig) -> Result<ReplayOutput> {
    let windows = frame_list(cfg, s.frame_count())?;
    let mut chain = Chain::for_scenario(s, cfg.clone())?;
    if chain.needs_clutter_map() {
        chain.acquire_from_scenario(s)?;
    }
    let window_model = RangeWindowModel::from_params(&s.params);
    let gate = cfg.truth_gate;

    let mut truth_out = Vec::new();
    let mut det_out = Vec::new();
    let mut matches = Vec::new();
    let mut tracks: Vec<Track> = Vec::new();
    let mut matched_tracks = BTreeSet::new();
    let mut valid_sinrs = Vec::new();
    let mut frame_times = Vec::new();
    let (mut synth_time, mut proc_time) = (0.0, 0.0);
    let (mut covered, mut detected) = (0usize, 0usize);
    let (mut slow, mut slow_hit, mut fast, mut fast_hit) = (0usize, 0usize, 0usize, 0usize);
    let mut next_id = 0;

    for w in windows {
        log::info!("replaying frames {}..{} of {}", w.start, w.end, s.name);
        let mut tracker = Tracker::with_first_id(chain.cfg.tracker, next_id);
        for k in w {
            let started = Instant::now();
            let f = synthesize_frame(s, k, None)?;
            let synthesized = Instant::now();
            let ch = estimate_channel(&f.tx, &f.rx, DEFAULT_DIVISION_EPSILON)?;
            drop(f.tx);
            drop(f.rx);
            let out = chain.process(&ch, f.beam_index)?;
            drop(ch);
            let processed = Instant::now();

            let active: Vec<Detection> = out.active();
            let ids = tracker.update(&active, k);
            let time_s = s.frame_time(k);
            let mut valid = Vec::new();
            let mut next_active = 0;
            for d in &out.detections {
                let track_id = if d.flags.replica_suppressed {
                    None
                } else {
                    next_active += 1;
                    Some(ids[next_active - 1])
                };
                let track_valid = track_id.and_then(|id| tracker.state_of(id)) == Some(TrackState::Valid);
                if track_valid {
                    valid.push((d, track_id.expect("valid implies a track")));
                    valid_sinrs.push(d.sinr_db);
                }
                det_out.push(DetectionRecord {
                    frame_index: k,
                    time_s,
                    range_m: d.range_m,
                    velocity_mps: d.velocity_mps,
                    sinr_db: d.sinr_db,
                    flags: d.flags.label(),
                    beam: f.beam_index,
                    track_id,
                    track_valid,
                });
            }

            for t in &f.truth {
                let view = truth_view(s, &window_model, t, f.beam_index);
                let best = valid
                    .iter()
                    .filter(|(d, _)| {
                        (d.range_m - t.range_m).abs() <= gate.range_m
                            && (d.velocity_mps - t.radial_velocity_mps).abs() <= gate.velocity_mps
                    })
                    .min_by(|a, b| {
                        (a.0.range_m - t.range_m).abs().total_cmp(&(b.0.range_m - t.range_m).abs())
                    });
                if let Some(&(d, id)) = best {
                    matched_tracks.insert(id);
                    matches.push(MatchRecord {
                        frame_index: k,
                        target_id: t.target_id,
                        track_id: id,
                        truth_range_m: t.range_m,
                        range_m: d.range_m,
                        range_error_m: d.range_m - t.range_m,
                        truth_velocity_mps: t.radial_velocity_mps,
                        velocity_mps: d.velocity_mps,
                        sinr_db: d.sinr_db,
                        model_sinr_db: view.model_sinr_db,
                    });
                }
                if view.covered {
                    let hit = best.is_some() as usize;
                    covered += 1;
                    detected += hit;
                    let v = t.radial_velocity_mps.abs();
                    if v < 1.0 {
                        slow += 1;
                        slow_hit += hit;
                    } else if v >= 5.0 {
                        fast += 1;
                        fast_hit += hit;
                    }
                }
            }
            truth_out.extend(f.truth);

            let done = Instant::now();
            synth_time += (synthesized - started).as_secs_f64();
            proc_time += (processed - synthesized).as_secs_f64();
            frame_times.push((done - started).as_secs_f64());
        }
        next_id = tracker.next_id();
        tracks.extend(tracker.into_tracks());
    }

    let errors: Vec<f64> = matches.iter().map(|m| m.range_error_m).collect();
    let validated: Vec<&Track> = tracks.iter().filter(|t| t.validated_frame.is_some()).collect();
    let n = frame_times.len();
    let timing = if n == 0 {
        TimingStats::default()
    } else {
        let mut sorted = frame_times.clone();
        sorted.sort_by(f64::total_cmp);
        TimingStats {
            frames: n,
            mean_s: frame_times.iter().sum::<f64>() / n as f64,
            median_s: quantile(&sorted, 0.5),
            max_s: sorted[n - 1],
            synthesis_mean_s: synth_time / n as f64,
            processing_mean_s: proc_time / n as f64,
        }
    };
    let metrics = RunMetrics {
        scenario: s.name.clone(),
        clutter: cfg.clutter.to_string(),
        frames_processed: n,
        truth_frames: covered,
        detected_frames: detected,
        detection_rate: detection_rate(detected, covered).unwrap_or(0.0),
        detection_rate_slow: detection_rate(slow_hit, slow),
        detection_rate_fast: detection_rate(fast_hit, fast),
        range_error_quantiles: range_error_quantiles(&errors),
        max_matched_range_m: matches.iter().map(|m| m.truth_range_m).max_by(f64::total_cmp),
        min_validated_sinr_db: valid_sinrs.iter().copied().min_by(f64::total_cmp),
        valid_track_count: validated.len(),
        false_track_count: validated.iter().filter(|t| !matched_tracks.contains(&t.id)).count(),
        sinr_curve: sinr_curve(&matches),
        timing,
    };
    Ok(ReplayOutput {
        metrics,
        truth: truth_out,
        detections: det_out,
        tracks,
        matches,
    })
}

/// Pass limits for a replay, applied by `--check`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplayThresholds {
    pub q50_m: f64,
    pub q95_m: Option<f64>,
    pub min_validated_sinr_db: f64,
}

impl ReplayThresholds {
    /// Desk-scale limits: 0.15 m median for the close-range experiment,
    /// 0.30 m / 0.9 m otherwise, and a 7 dB floor on validated peaks.
    pub fn for_scenario(name: &str) -> Self {
        match name {
            "experiment-1" => Self { q50_m: 0.15, q95_m: None, min_validated_sinr_db: 7.0 },
            _ => Self { q50_m: 0.30, q95_m: Some(0.9), min_validated_sinr_db: 7.0 },
        }
    }

    /// Human-readable list of failed limits; empty when the run passes.
    pub fn violations(&self, m: &RunMetrics) -> Vec<String> {
        let mut out = Vec::new();
        match &m.range_error_quantiles {
            None => out.push("no matched detections".to_string()),
            Some(q) => {
                if q.q50 > self.q50_m {
                    out.push(format!("range error q50 {:.3} m > {:.2} m", q.q50, self.q50_m));
                }
                if let Some(limit) = self.q95_m {
                    if q.q95 > limit {
                        out.push(format!("range error q95 {:.3} m > {:.2} m", q.q95, limit));
                    }
                }
            }
        }
        if let Some(sinr) = m.min_validated_sinr_db {
            if sinr < self.min_validated_sinr_db {
                out.push(format!(
                    "validated peak at {sinr:.2} dB SINR, below {:.1} dB",
                    self.min_validated_sinr_db
                ));
            }
        }
        out
    }
}
