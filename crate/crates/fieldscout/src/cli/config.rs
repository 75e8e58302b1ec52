//! The experiment configuration file.
//!
//! One TOML document drives every command: camera and ladder geometry, the
//! oracle error model, travel dynamics, decision-function knobs, synthetic
//! field specs, and the strategy x seed matrix. Every section is optional
//! and defaults to the module defaults; unknown keys are rejected.

use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::camera::{CameraModel, GsdLadder};
use crate::field::FieldSpec;
use crate::gp::SearchSpace;
use crate::oracle::OracleParams;
use crate::planner::{DecisionState, DecisionStateData, InitParams, PlannerError};
use crate::sim::{Strategy, TimeModel};

use super::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub camera: CameraModel,
    pub ladder: GsdLadder,
    pub oracle: OracleParams,
    pub time: TimeModel,
    pub decision: DecisionConfig,
    pub fields: Vec<FieldEntry>,
    pub experiment: ExperimentSection,
}

impl Default for ExperimentConfig {
    fn default() -> ExperimentConfig {
        ExperimentConfig {
            camera: CameraModel::default(),
            ladder: GsdLadder::default(),
            oracle: OracleParams::default(),
            time: TimeModel::default(),
            decision: DecisionConfig::default(),
            fields: Vec::new(),
            experiment: ExperimentSection::default(),
        }
    }
}

/// One named synthetic field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldEntry {
    pub name: String,
    pub spec: FieldSpec,
}

/// Decision-function configuration: initialization knobs plus optional
/// absolute overrides applied to the initialized state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecisionConfig {
    pub v_lo_percentile: f64,
    pub v_hi_percentile: f64,
    pub gain_threshold: f64,
    pub refit_period: u32,
    pub search_space: SearchSpace,
    /// Replaces the initialized v_lo when set.
    pub v_lo: Option<f64>,
    /// Replaces the initialized v_hi when set.
    pub v_hi: Option<f64>,
}

impl Default for DecisionConfig {
    fn default() -> DecisionConfig {
        let p = InitParams::default();
        DecisionConfig {
            v_lo_percentile: p.v_lo_percentile,
            v_hi_percentile: p.v_hi_percentile,
            gain_threshold: p.gain_threshold,
            refit_period: p.refit_period,
            search_space: p.search_space,
            v_lo: None,
            v_hi: None,
        }
    }
}

impl DecisionConfig {
    pub fn init_params(&self) -> InitParams {
        InitParams {
            v_lo_percentile: self.v_lo_percentile,
            v_hi_percentile: self.v_hi_percentile,
            gain_threshold: self.gain_threshold,
            refit_period: self.refit_period,
            search_space: self.search_space.clone(),
        }
    }

    /// Applies the v_lo/v_hi overrides, revalidating the state.
    pub fn apply_overrides(&self, state: DecisionState) -> Result<DecisionState, PlannerError> {
        if self.v_lo.is_none() && self.v_hi.is_none() {
            return Ok(state);
        }
        let mut data = DecisionStateData::from(state);
        if let Some(v) = self.v_lo {
            data.v_lo = v;
        }
        if let Some(v) = self.v_hi {
            data.v_hi = v;
        }
        DecisionState::try_from(data)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentSection {
    /// Name of the field used by `init`.
    pub training_field: String,
    /// Name of the field flown by `compare`.
    pub test_field: String,
    pub strategies: Vec<String>,
    pub seeds: Vec<u64>,
    /// Default output directory; `FIELDSCOUT_OUT` and `--out` take
    /// precedence.
    pub out_dir: PathBuf,
}

impl Default for ExperimentSection {
    fn default() -> ExperimentSection {
        ExperimentSection {
            training_field: "training".into(),
            test_field: "testing".into(),
            strategies: vec![
                "fixed:3.0".into(),
                "fixed:2.5".into(),
                "fixed:2.0".into(),
                "fixed:1.5".into(),
                "fixed:1.0".into(),
                "non_adaptive".into(),
                "linear".into(),
                "adaptive".into(),
            ],
            seeds: vec![1],
            out_dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn load(path: &std::path::Path) -> Result<ExperimentConfig, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            CliError::Data(format!("cannot read config {}: {e}", path.display()))
        })?;
        let config: ExperimentConfig = toml::from_str(&text)
            .map_err(|e| CliError::Data(format!("config {}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let data = |msg: String| CliError::Data(msg);
        self.camera.validate().map_err(|e| data(format!("camera: {e}")))?;
        self.oracle.validate().map_err(|e| data(format!("oracle: {e}")))?;
        self.time.validate().map_err(|e| data(format!("time: {e}")))?;
        for entry in &self.fields {
            entry.spec.validate().map_err(|e| data(format!("field {:?}: {e}", entry.name)))?;
        }
        let mut names: Vec<&str> = self.fields.iter().map(|f| f.name.as_str()).collect();
        names.sort_unstable();
        if names.windows(2).any(|w| w[0] == w[1]) {
            return Err(data("field names must be unique".into()));
        }
        if self.experiment.seeds.is_empty() {
            return Err(data("experiment.seeds must be non-empty".into()));
        }
        for s in &self.experiment.strategies {
            Strategy::from_str(s).map_err(|e| data(e.to_string()))?;
        }
        Ok(())
    }

    pub fn strategies(&self) -> Vec<Strategy> {
        self.experiment
            .strategies
            .iter()
            .map(|s| Strategy::from_str(s).expect("validated at load"))
            .collect()
    }

    pub fn field_spec(&self, name: &str) -> Result<&FieldSpec, CliError> {
        self.fields
            .iter()
            .find(|f| f.name == name)
            .map(|f| &f.spec)
            .ok_or_else(|| CliError::Data(format!("no field named {name:?} in the config")))
    }
}
