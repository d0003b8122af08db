//! Experiment configuration, read from TOML. Every field has a desk-scale
//! default, so a config file only lists what it changes.

use std::path::{Path, PathBuf};

use mdfeat_core::channel::{GeometryConfig, ScenarioConfig};
use mdfeat_core::features::Scheme;
use mdfeat_core::frontend::SignalConfig;
use mdfeat_core::select::SelectionConfig;
use mdfeat_nn::{Head, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{config, io_at, Error, Result};
use crate::zones::ZoneLayout;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Environment {
    Residential,
    Outdoor,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Learner {
    Pnn,
    Fcl,
    Knn,
}

impl std::fmt::Display for Learner {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Learner::Pnn => "pnn",
            Learner::Fcl => "fcl",
            Learner::Knn => "knn",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Classification,
    Regression,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Master seed of the simulated data.
    pub seed: u64,
    /// Seed of model initialization and shuffling, kept apart from `seed`.
    pub model_seed: u64,
    pub geometry: GeometryConfig,
    pub environment: Environment,
    /// Replaces the named environment's parameters when present.
    pub scenario: Option<ScenarioConfig>,
    pub los: bool,
    pub signal: SignalConfig,
    /// Defaults to the range [4, 10], u = 30 and weight 0.8 (LOS) or 0.6 (NLOS).
    pub selection: Option<SelectionConfig>,
    pub n_angular: usize,
    pub n_radial: usize,
    pub snr_db: Vec<f64>,
    pub scheme: Scheme,
    pub learner: Learner,
    pub task: Task,
    /// Fixed feature size; when absent the size-selection criterion picks it.
    pub feature_size: Option<usize>,
    pub d_train: usize,
    pub d_test: usize,
    pub repeats: usize,
    pub training: TrainConfig,
    pub knn_k: usize,
    /// Monte-Carlo targets used to calibrate the noise level.
    pub calibration_targets: usize,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            model_seed: 0,
            geometry: GeometryConfig::default(),
            environment: Environment::Residential,
            scenario: None,
            los: true,
            signal: SignalConfig::default(),
            selection: None,
            n_angular: 4,
            n_radial: 2,
            snr_db: vec![15.0],
            scheme: Scheme::Proposed,
            learner: Learner::Fcl,
            task: Task::Classification,
            feature_size: Some(5),
            d_train: 3000,
            d_test: 600,
            repeats: 3,
            training: TrainConfig::default(),
            knn_k: 11,
            calibration_targets: 20_000,
            out: PathBuf::from("runs/default"),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Format { what: "config", msg: e.to_string() })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path).map_err(io_at(path))?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn scenario(&self) -> ScenarioConfig {
        let base = match (&self.scenario, self.environment) {
            (Some(s), _) => s.clone(),
            (None, Environment::Residential) => ScenarioConfig::residential(),
            (None, Environment::Outdoor) => ScenarioConfig::outdoor(),
        };
        base.with_los(self.los)
    }

    pub fn selection(&self) -> SelectionConfig {
        self.selection.clone().unwrap_or(SelectionConfig {
            f_min: 4,
            f_max: 10,
            weight: if self.los { 0.8 } else { 0.6 },
            neighbors: 30,
        })
    }

    pub fn layout(&self) -> ZoneLayout {
        ZoneLayout { n_angular: self.n_angular, n_radial: self.n_radial, d_r: self.geometry.d_r }
    }

    pub fn head(&self) -> Head {
        match self.task {
            Task::Classification => Head::Classification { zones: self.layout().num_zones() },
            Task::Regression => Head::Regression,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.scenario().validate()?;
        self.signal.validate()?;
        self.layout().validate()?;
        let nz = self.layout().num_zones();
        if self.d_train < nz || self.d_test < nz {
            return config(format!(
                "D_train = {} and D_test = {} must both reach N_z = {nz}",
                self.d_train, self.d_test
            ));
        }
        if self.snr_db.is_empty() || self.snr_db.iter().any(|s| !s.is_finite()) {
            return config("the SNR list must hold finite values");
        }
        if self.repeats == 0 || self.knn_k == 0 || self.calibration_targets == 0 {
            return config("repeats, knn_k and calibration_targets must be positive");
        }
        let n_bins = self.signal.num_bins()?;
        match self.feature_size {
            Some(f) if f == 0 || f > n_bins => return config(format!("feature size {f} outside [1, {n_bins}]")),
            Some(_) => {}
            None => self.selection().validate(n_bins)?,
        }
        if self.learner == Learner::Knn && self.task == Task::Regression {
            return config("the KNN baseline only classifies zones");
        }
        if self.training.batch_size == 0 || self.training.lr.is_nan() || self.training.lr <= 0.0 {
            return config("training needs a positive batch size and learning rate");
        }
        Ok(())
    }
}
