//! End-to-end processing chain, scenario replay with metrics, and the
//! analytic model report.

mod chain;
mod replay;
mod report;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::detect::DetectError;
use crate::dsp::DspError;
use crate::linkbudget::LinkBudgetError;
use crate::scene::{make_experiment1_scenario, make_experiment2_scenario, Scenario, SceneError};

pub use chain::{Chain, ChainConfig, ClutterRemoval, FrameOutput, NoiseEstimation};
pub use replay::{
    replay, DetectionRecord, MatchRecord, RangeErrorQuantiles, ReplayOutput, ReplayThresholds, RunMetrics, SinrBin,
    TimingStats, TruthGate,
};
pub use report::{model_report, reference_violations, CurvePoint, ModelReport, RangeSweep};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Scene(#[from] SceneError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Detect(#[from] DetectError),
    #[error(transparent)]
    LinkBudget(#[from] LinkBudgetError),
    #[error("{0}")]
    Config(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, HarnessError>;

/// Where a run's scenario comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioSource {
    /// Built-in desk replica, `exp1` or `exp2`.
    Experiment(String),
    /// Scenario TOML file.
    File(PathBuf),
}

impl ScenarioSource {
    pub fn load(&self) -> Result<Scenario> {
        match self {
            ScenarioSource::Experiment(name) => builtin_scenario(name),
            ScenarioSource::File(path) => Ok(Scenario::from_toml(&std::fs::read_to_string(path)?)?),
        }
    }
}

pub fn builtin_scenario(name: &str) -> Result<Scenario> {
    match name {
        "exp1" | "experiment1" => Ok(make_experiment1_scenario()),
        "exp2" | "experiment2" => Ok(make_experiment2_scenario()),
        other => Err(HarnessError::Config(format!("unknown experiment '{other}', expected exp1 or exp2"))),
    }
}

/// Contents of a run configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub scenario: ScenarioSource,
    /// Overrides the scenario's RNG seed.
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub chain: ChainConfig,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| HarnessError::Config(format!("run config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serializes to TOML")
    }

    /// Built-in experiment with the processing it was flown with: CRAP for
    /// the close-range sweep, ECA-C at pfa 1e-4 for the long-range flight.
    pub fn for_experiment(name: &str) -> Result<Self> {
        let scenario = builtin_scenario(name)?;
        let chain = if scenario.name == "experiment-1" {
            ChainConfig { clutter: ClutterRemoval::Crap, ..ChainConfig::default() }
        } else {
            ChainConfig {
                clutter: ClutterRemoval::EcaC,
                cfar: crate::detect::CfarConfig::long_range(),
                ..ChainConfig::default()
            }
        };
        Ok(Self {
            scenario: ScenarioSource::Experiment(name.to_string()),
            seed: None,
            chain,
        })
    }

    /// Loads the scenario with the seed override applied.
    pub fn scenario(&self) -> Result<Scenario> {
        let mut s = self.scenario.load()?;
        if let Some(seed) = self.seed {
            s.rng_seed = seed;
        }
        Ok(s)
    }
}
