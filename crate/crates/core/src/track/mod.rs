//! Nearest-neighbour association with the candidate/valid/retired state
//! machine.
//!
//! A candidate becomes valid after `frames_to_validate` consecutive
//! associated frames (an association already implies the measurement fell
//! inside the prediction gate). Any track is retired once its consecutive
//! misses exceed `max_misses`.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::detect::{range_rate_consistent, Detection};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrackState {
    Candidate,
    Valid,
    Retired,
}

impl std::fmt::Display for TrackState {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            TrackState::Candidate => "candidate",
            TrackState::Valid => "valid",
            TrackState::Retired => "retired",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RetireReason {
    Missed,
    /// Range rate disagreed with measured velocity: probable TDD replica.
    RangeRateInconsistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackPoint {
    pub frame_index: u64,
    pub time_s: f64,
    pub range_m: f64,
    pub velocity_mps: f64,
    pub sinr_db: f64,
    /// Track state right after this update.
    pub state: TrackState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    pub state: TrackState,
    pub history: Vec<TrackPoint>,
    pub consecutive_misses: u32,
    pub consecutive_hits: u32,
    pub created_frame: u64,
    pub validated_frame: Option<u64>,
    pub retired_frame: Option<u64>,
    pub retire_reason: Option<RetireReason>,
}

impl Track {
    fn last(&self) -> &TrackPoint {
        self.history.last().expect("tracks start with one point")
    }

    /// Constant-velocity range prediction.
    pub fn predicted_range(&self, time_s: f64) -> f64 {
        let p = self.last();
        p.range_m + p.velocity_mps * (time_s - p.time_s)
    }

    pub fn last_frame(&self) -> u64 {
        self.last().frame_index
    }

    /// Frames from creation to validation.
    pub fn validation_latency(&self) -> Option<u64> {
        self.validated_frame.map(|v| v - self.created_frame)
    }

    /// Frames from creation to the last associated detection, inclusive.
    pub fn lifetime_frames(&self) -> u64 {
        self.last_frame() - self.created_frame + 1
    }

    /// See [`range_rate_consistent`]; `None` with fewer than `window` points.
    pub fn range_rate_consistency(&self, window: usize, threshold_mps: f64) -> Option<bool> {
        if window < 2 || self.history.len() < window {
            return None;
        }
        let samples: Vec<(f64, f64, f64)> = self.history[self.history.len() - window..]
            .iter()
            .map(|p| (p.time_s, p.range_m, p.velocity_mps))
            .collect();
        range_rate_consistent(&samples, threshold_mps)
    }
}

/// Free-function form of [`Track::range_rate_consistency`] with the default
/// threshold.
pub fn range_rate_consistency(track: &Track, window: usize) -> Option<bool> {
    track.range_rate_consistency(window, TrackerConfig::default().consistency_threshold_mps)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub range_m: f64,
    pub velocity_mps: f64,
}

impl Default for Gate {
    fn default() -> Self {
        Self { range_m: 3.0, velocity_mps: 3.0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub gate: Gate,
    pub frames_to_validate: u32,
    /// Retire when consecutive misses exceed this. 11 gives the stricter
    /// reading of the 12-frame rule.
    pub max_misses: u32,
    pub frame_duration_s: f64,
    /// History points used by the range-rate check; 0 disables it.
    pub consistency_window: usize,
    pub consistency_threshold_mps: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self {
            gate: Gate::default(),
            frames_to_validate: 10,
            max_misses: 12,
            frame_duration_s: 0.01,
            consistency_window: 10,
            consistency_threshold_mps: 2.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Tracker {
    pub cfg: TrackerConfig,
    active: Vec<Track>,
    retired: Vec<Track>,
    next_id: u64,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig) -> Self {
        Self { cfg, active: Vec::new(), retired: Vec::new(), next_id: 0 }
    }

    /// Tracker whose first track gets id `first_id`, so that ids stay unique
    /// across restarts.
    pub fn with_first_id(cfg: TrackerConfig, first_id: u64) -> Self {
        Self { next_id: first_id, ..Self::new(cfg) }
    }

    pub fn next_id(&self) -> u64 {
        self.next_id
    }

    /// Current state of an active track, `None` for retired or unknown ids.
    pub fn state_of(&self, id: u64) -> Option<TrackState> {
        self.active.iter().find(|t| t.id == id).map(|t| t.state)
    }

    pub fn active(&self) -> &[Track] {
        &self.active
    }

    pub fn retired(&self) -> &[Track] {
        &self.retired
    }

    pub fn valid_tracks(&self) -> impl Iterator<Item = &Track> {
        self.active.iter().filter(|t| t.state == TrackState::Valid)
    }

    /// Active and retired tracks, ordered by id.
    pub fn all_tracks(&self) -> Vec<&Track> {
        let mut all: Vec<&Track> = self.active.iter().chain(&self.retired).collect();
        all.sort_by_key(|t| t.id);
        all
    }

    /// Consumes the tracker, returning every track ordered by id.
    pub fn into_tracks(self) -> Vec<Track> {
        let mut all = self.active;
        all.extend(self.retired);
        all.sort_by_key(|t| t.id);
        all
    }

    /// Processes one frame of replica-filtered detections. Returns, for each
    /// detection, the id of the track it updated or spawned.
    pub fn update(&mut self, dets: &[Detection], frame_index: u64) -> Vec<u64> {
        let time_s = frame_index as f64 * self.cfg.frame_duration_s;
        let gate = self.cfg.gate;

        let mut pairs: Vec<(f64, f64, u64, usize, usize)> = Vec::new();
        for (ti, t) in self.active.iter().enumerate() {
            let pred = t.predicted_range(time_s);
            let v = t.last().velocity_mps;
            for (di, d) in dets.iter().enumerate() {
                let dr = (d.range_m - pred).abs();
                let dv = (d.velocity_mps - v).abs();
                if dr <= gate.range_m && dv <= gate.velocity_mps {
                    let dist = (dr / gate.range_m).hypot(dv / gate.velocity_mps);
                    pairs.push((dist, dr, t.id, ti, di));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
                .then(a.4.cmp(&b.4))
        });

        let mut track_hit = vec![false; self.active.len()];
        let mut owner: Vec<Option<u64>> = vec![None; dets.len()];
        for &(_, _, id, ti, di) in &pairs {
            if track_hit[ti] || owner[di].is_some() {
                continue;
            }
            track_hit[ti] = true;
            owner[di] = Some(id);
            self.hit(ti, &dets[di], frame_index, time_s);
        }
        for (ti, hit) in track_hit.iter().enumerate() {
            if !hit {
                let t = &mut self.active[ti];
                t.consecutive_misses += 1;
                t.consecutive_hits = 0;
                if t.consecutive_misses > self.cfg.max_misses {
                    t.state = TrackState::Retired;
                    t.retired_frame = Some(frame_index);
                    t.retire_reason = Some(RetireReason::Missed);
                }
            }
        }
        for (di, d) in dets.iter().enumerate() {
            if owner[di].is_none() {
                owner[di] = Some(self.spawn(d, frame_index, time_s));
            }
        }

        let (keep, done): (Vec<Track>, Vec<Track>) =
            std::mem::take(&mut self.active).into_iter().partition(|t| t.state != TrackState::Retired);
        self.active = keep;
        self.retired.extend(done);
        owner.into_iter().map(|o| o.expect("every detection assigned")).collect()
    }

    /// Records a detection on a track. The range-rate check runs before
    /// promotion, so a replica is retired without ever being valid.
    fn hit(&mut self, ti: usize, d: &Detection, frame_index: u64, time_s: f64) {
        let cfg = self.cfg;
        let t = &mut self.active[ti];
        t.consecutive_misses = 0;
        t.consecutive_hits += 1;
        t.history.push(TrackPoint {
            frame_index,
            time_s,
            range_m: d.range_m,
            velocity_mps: d.velocity_mps,
            sinr_db: d.sinr_db,
            state: t.state,
        });
        if cfg.consistency_window > 0
            && t.range_rate_consistency(cfg.consistency_window, cfg.consistency_threshold_mps) == Some(false)
        {
            t.state = TrackState::Retired;
            t.retired_frame = Some(frame_index);
            t.retire_reason = Some(RetireReason::RangeRateInconsistent);
        } else if t.state == TrackState::Candidate && t.consecutive_hits >= cfg.frames_to_validate {
            t.state = TrackState::Valid;
            t.validated_frame = Some(frame_index);
        }
        let state = t.state;
        if let Some(p) = t.history.last_mut() {
            p.state = state;
        }
    }

    fn spawn(&mut self, d: &Detection, frame_index: u64, time_s: f64) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        let state = if self.cfg.frames_to_validate <= 1 { TrackState::Valid } else { TrackState::Candidate };
        self.active.push(Track {
            id,
            state,
            history: vec![TrackPoint {
                frame_index,
                time_s,
                range_m: d.range_m,
                velocity_mps: d.velocity_mps,
                sinr_db: d.sinr_db,
                state,
            }],
            consecutive_misses: 0,
            consecutive_hits: 1,
            created_frame: frame_index,
            validated_frame: (state == TrackState::Valid).then_some(frame_index),
            retired_frame: None,
            retire_reason: None,
        });
        id
    }
}

/// One tracker update with an explicit association gate.
pub fn associate_and_update(tracker: &mut Tracker, dets: &[Detection], frame_index: u64, gate: Gate) -> Vec<u64> {
    tracker.cfg.gate = gate;
    tracker.update(dets, frame_index)
}

#[derive(Debug, Serialize)]
struct TrackRow {
    track_id: u64,
    state: TrackState,
    frame_index: u64,
    range_m: f64,
    velocity_mps: f64,
    sinr_db: f64,
}

/// One row per associated detection.
pub fn write_tracks_csv<W: Write>(tracks: &[&Track], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in tracks {
        for p in &t.history {
            out.serialize(TrackRow {
                track_id: t.id,
                state: p.state,
                frame_index: p.frame_index,
                range_m: p.range_m,
                velocity_mps: p.velocity_mps,
                sinr_db: p.sinr_db,
            })?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Serialize)]
struct SummaryRow {
    track_id: u64,
    final_state: TrackState,
    created_frame: u64,
    validated_frame: Option<u64>,
    validation_latency_frames: Option<u64>,
    last_frame: u64,
    lifetime_frames: u64,
    detections: usize,
    retire_reason: Option<RetireReason>,
}

pub fn write_track_summary_csv<W: Write>(tracks: &[&Track], w: W) -> csv::Result<()> {
    let mut out = csv::Writer::from_writer(w);
    for t in tracks {
        out.serialize(SummaryRow {
            track_id: t.id,
            final_state: t.state,
            created_frame: t.created_frame,
            validated_frame: t.validated_frame,
            validation_latency_frames: t.validation_latency(),
            last_frame: t.last_frame(),
            lifetime_frames: t.lifetime_frames(),
            detections: t.history.len(),
            retire_reason: t.retire_reason,
        })?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detect::DetectionFlags;

    fn det(frame: u64, range_m: f64, velocity_mps: f64) -> Detection {
        Detection {
            frame_index: frame,
            range_m,
            velocity_mps,
            doppler_hz: 0.0,
            peak_power: 1.0,
            sinr_db: 20.0,
            bin: (0, 0),
            flags: DetectionFlags::default(),
        }
    }

    /// Target moving at -5 m/s from 100 m, observed on the given frames.
    fn run(frames: impl IntoIterator<Item = (u64, bool)>) -> Tracker {
        let mut tr = Tracker::new(TrackerConfig::default());
        for (f, seen) in frames {
            let r = 100.0 - 5.0 * f as f64 * 0.01;
            let dets = if seen { vec![det(f, r, -5.0)] } else { vec![] };
            tr.update(&dets, f);
        }
        tr
    }

    #[test]
    fn valid_at_tenth_frame() {
        let tr = run((0..9).map(|f| (f, true)));
        assert_eq!(tr.active()[0].state, TrackState::Candidate);
        let tr = run((0..10).map(|f| (f, true)));
        assert_eq!(tr.active()[0].state, TrackState::Valid);
        assert_eq!(tr.active()[0].validated_frame, Some(9));
        assert_eq!(tr.active()[0].validation_latency(), Some(9));
    }

    #[test]
    fn twelve_misses_survive_thirteen_retire() {
        let tr = run((0..35).map(|f| (f, f < 10 || f >= 22)));
        assert_eq!(tr.all_tracks().len(), 1);
        assert_eq!(tr.active()[0].id, 0);
        assert_eq!(tr.active()[0].consecutive_misses, 0);

        let tr = run((0..23).map(|f| (f, f < 10)));
        assert!(tr.active().is_empty());
        assert_eq!(tr.retired()[0].retired_frame, Some(22));
        assert_eq!(tr.retired()[0].retire_reason, Some(RetireReason::Missed));
    }

    #[test]
    fn miss_resets_validation_count() {
        let tr = run((0..16).map(|f| (f, f != 5)));
        assert_eq!(tr.active()[0].validated_frame, Some(15));
    }

    #[test]
    fn two_targets_no_double_association() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for f in 0..12 {
            let t = f as f64 * 0.01;
            let dets = vec![det(f, 50.0 + 2.0 * t, 2.0), det(f, 51.0 - 2.0 * t, -2.0)];
            let ids = tr.update(&dets, f);
            assert_eq!(ids, vec![0, 1]);
        }
        assert_eq!(tr.valid_tracks().count(), 2);
    }

    #[test]
    fn replica_track_retired_by_consistency() {
        let mut tr = Tracker::new(TrackerConfig::default());
        for f in 0..10 {
            let t = f as f64 * 0.01;
            // Range moves at -5 m/s but the Doppler reads an aliased +3.7 m/s.
            tr.update(&[det(f, 300.0 - 5.0 * t, 3.7)], f);
        }
        assert!(tr.active().is_empty());
        assert_eq!(tr.retired()[0].retire_reason, Some(RetireReason::RangeRateInconsistent));
    }

    #[test]
    fn csv_outputs() {
        let tr = run((0..12).map(|f| (f, true)));
        let tracks = tr.all_tracks();
        let mut buf = Vec::new();
        write_tracks_csv(&tracks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("track_id,state,frame_index,range_m,velocity_mps,sinr_db\n"));
        assert_eq!(text.lines().count(), 13);
        let mut buf = Vec::new();
        write_track_summary_csv(&tracks, &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.lines().nth(1).unwrap().starts_with("0,valid,0,9,9,11,12,12,"));
    }
}
