use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{HarnessError, Result};
use crate::detect::{
    annotate_sinr, cfar_detect, flag_clutter_bands, flag_tdd_replicas, retain_in_window, CfarConfig, Detection,
    MaskInfo, ReplicaConfig,
};
use crate::dsp::{
    crap_remove, estimate_channel, estimate_noise_floor, ChannelEstimate, ClutterMap, ClutterMapAccumulator,
    ClutterMapConfig, DspError, EcaCanceller, EcaConfig, NoiseRegion, Numerology, Periodogram, PeriodogramConfig,
    RangeDopplerProcessor, DEFAULT_DIVISION_EPSILON,
};
use crate::linkbudget::{LinkBudgetParams, RangeWindowModel};
use crate::scene::{synthesize_acquisition_frame, Scenario, TddMask};
use crate::track::TrackerConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum ClutterRemoval {
    #[serde(rename = "none")]
    None,
    #[default]
    #[serde(rename = "eca-c")]
    EcaC,
    #[serde(rename = "crap")]
    Crap,
}

impl FromStr for ClutterRemoval {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "none" => Ok(Self::None),
            "eca-c" => Ok(Self::EcaC),
            "crap" => Ok(Self::Crap),
            other => Err(format!("unknown clutter removal '{other}', expected eca-c, crap or none")),
        }
    }
}

impl std::fmt::Display for ClutterRemoval {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::None => "none",
            Self::EcaC => "eca-c",
            Self::Crap => "crap",
        })
    }
}

/// Which periodogram cells feed the noise floor median.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct NoiseEstimation {
    /// Half-size of the box excluded around each detection, in unpadded
    /// range and velocity resolution cells.
    pub detection_guard_cells: f64,
    /// Half-width of the excluded zero-Doppler ridge, in unpadded velocity
    /// resolution cells.
    pub zero_doppler_cells: f64,
}

impl Default for NoiseEstimation {
    fn default() -> Self {
        Self {
            detection_guard_cells: 4.0,
            zero_doppler_cells: 3.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChainConfig {
    pub clutter: ClutterRemoval,
    pub eca: EcaConfig,
    pub clutter_map: ClutterMapConfig,
    pub periodogram: PeriodogramConfig,
    pub cfar: CfarConfig,
    pub replica_suppression: bool,
    pub replica: ReplicaConfig,
    pub noise: NoiseEstimation,
    pub tracker: TrackerConfig,
    /// Range bands flagged as clutter in the detection output.
    pub clutter_bands: Vec<(f64, f64)>,
    /// Half-open frame windows `[start, end)` to replay; empty means all.
    /// The tracker restarts at each window.
    pub frames: Vec<[u64; 2]>,
    pub truth_gate: super::TruthGate,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            clutter: ClutterRemoval::EcaC,
            eca: EcaConfig::default(),
            clutter_map: ClutterMapConfig::default(),
            periodogram: PeriodogramConfig::default(),
            cfar: CfarConfig::default(),
            replica_suppression: true,
            replica: ReplicaConfig::default(),
            noise: NoiseEstimation::default(),
            tracker: TrackerConfig::default(),
            clutter_bands: Vec::new(),
            frames: Vec::new(),
            truth_gate: super::TruthGate::default(),
        }
    }
}

/// Result of processing one frame.
#[derive(Debug, Clone)]
pub struct FrameOutput {
    pub periodogram: Periodogram,
    /// Every CFAR peak inside the receive window, replicas flagged.
    pub detections: Vec<Detection>,
    pub noise_floor: f64,
}

impl FrameOutput {
    /// Detections that survive replica suppression.
    pub fn active(&self) -> Vec<Detection> {
        self.detections.iter().filter(|d| !d.flags.replica_suppressed).cloned().collect()
    }
}

/// Per-frame processing from channel estimate to annotated detections, with
/// FFT plans and clutter state kept between frames.
pub struct Chain {
    pub cfg: ChainConfig,
    numerology: Numerology,
    processor: RangeDopplerProcessor,
    eca: Option<EcaCanceller>,
    maps: Vec<Option<ClutterMap>>,
    mask_info: MaskInfo,
    window: RangeWindowModel,
}

impl Chain {
    pub fn new(params: &LinkBudgetParams, mask: &TddMask, n_beams: usize, cfg: ChainConfig) -> Result<Self> {
        params.validate()?;
        cfg.cfar.validate()?;
        let numerology = Numerology {
            f_c: params.f_c,
            delta_f: params.delta_f,
            symbol_duration: params.symbol_duration(),
        };
        let processor = RangeDopplerProcessor::new(params.n_subcarriers, mask.len(), numerology, cfg.periodogram)?;
        let eca = match cfg.clutter {
            ClutterRemoval::EcaC => Some(EcaCanceller::new(mask, &cfg.eca)?),
            _ => None,
        };
        Ok(Self {
            numerology,
            processor,
            eca,
            maps: vec![None; n_beams.max(1)],
            mask_info: MaskInfo::new(mask, numerology.symbol_duration),
            window: RangeWindowModel::from_params(params),
            cfg,
        })
    }

    pub fn for_scenario(s: &Scenario, cfg: ChainConfig) -> Result<Self> {
        s.validate()?;
        let mut cfg = cfg;
        cfg.tracker.frame_duration_s = s.frame_duration;
        Self::new(&s.params, &s.dl_mask, s.beams.len(), cfg)
    }

    pub fn numerology(&self) -> Numerology {
        self.numerology
    }

    pub fn mask_info(&self) -> MaskInfo {
        self.mask_info
    }

    pub fn needs_clutter_map(&self) -> bool {
        self.cfg.clutter == ClutterRemoval::Crap
    }

    pub fn set_clutter_map(&mut self, beam: usize, map: ClutterMap) -> Result<()> {
        let slot = self
            .maps
            .get_mut(beam)
            .ok_or_else(|| HarnessError::Config(format!("beam {beam} has no clutter map slot")))?;
        *slot = Some(map);
        Ok(())
    }

    /// Records `clutter_map.acquisition_frames` target-free frames per beam
    /// and stores their average as that beam's clutter map.
    pub fn acquire_from_scenario(&mut self, s: &Scenario) -> Result<()> {
        let n = self.cfg.clutter_map.acquisition_frames as u64;
        if n == 0 {
            return Err(DspError::EmptyAcquisition.into());
        }
        for beam in 0..s.beams.len() {
            let channel = |k| -> Result<ChannelEstimate> {
                let f = synthesize_acquisition_frame(s, beam, k)?;
                Ok(estimate_channel(&f.tx, &f.rx, DEFAULT_DIVISION_EPSILON)?)
            };
            let mut acc = ClutterMapAccumulator::new(&channel(0)?);
            for k in 1..n {
                acc.push(&channel(k)?)?;
            }
            let map = acc.finish(0, self.cfg.clutter_map.stale_after);
            self.set_clutter_map(beam, map)?;
        }
        Ok(())
    }

    pub fn remove_clutter(&self, ch: &ChannelEstimate, beam: usize) -> Result<ChannelEstimate> {
        Ok(match self.cfg.clutter {
            ClutterRemoval::None => ch.clone(),
            ClutterRemoval::EcaC => self.eca.as_ref().expect("built with ECA-C").remove(ch)?,
            ClutterRemoval::Crap => {
                let map = self.maps.get(beam).and_then(Option::as_ref).ok_or_else(|| {
                    HarnessError::Config(format!("no clutter map acquired for beam {beam}"))
                })?;
                crap_remove(ch, map)?
            }
        })
    }

    /// Clutter removal followed by the range-Doppler periodogram.
    pub fn periodogram(&self, ch: &ChannelEstimate, beam: usize) -> Result<Periodogram> {
        let cleaned = self.remove_clutter(ch, beam)?;
        Ok(self.processor.process(&cleaned)?)
    }

    /// Clutter removal, periodogram, CFAR, noise floor, SINR annotation,
    /// band flags and replica flags.
    pub fn process(&self, ch: &ChannelEstimate, beam: usize) -> Result<FrameOutput> {
        let mut p = self.periodogram(ch, beam)?;
        self.detect(&mut p).map(|(detections, noise_floor)| FrameOutput {
            periodogram: p,
            detections,
            noise_floor,
        })
    }

    /// Detection stages on an existing periodogram. Sets its noise floor.
    pub fn detect(&self, p: &mut Periodogram) -> Result<(Vec<Detection>, f64)> {
        let dets = retain_in_window(cfar_detect(p, &self.cfg.cfar)?, &self.window);
        let dr = self.cfg.noise.detection_guard_cells * p.range_resolution_m();
        let dv = self.cfg.noise.detection_guard_cells * p.velocity_resolution_mps();
        let ridge = self.cfg.noise.zero_doppler_cells * p.velocity_resolution_mps();
        let mut region = NoiseRegion::everything().exclude_velocity_band(-ridge, ridge);
        for d in &dets {
            region = region.exclude_around(d.range_m, d.velocity_mps, dr, dv);
        }
        let floor = estimate_noise_floor(p, &region)?;
        let mut dets = annotate_sinr(&dets, p)?;
        flag_clutter_bands(&mut dets, &self.cfg.clutter_bands);
        if self.cfg.replica_suppression {
            flag_tdd_replicas(&mut dets, &self.mask_info, p, &self.cfg.replica);
        }
        Ok((dets, floor))
    }
}
