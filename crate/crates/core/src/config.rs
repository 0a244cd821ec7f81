//! Run configuration: one TOML file holding every setting a command needs.
//!
//! ```toml
//! seed = 7
//!
//! [data]
//! t_max = 48
//! campaigns_per_scenario = 100
//! holdout = [2]
//!
//! [model]
//! d_model = 64
//!
//! [train]
//! epochs = 30
//! ```
//!
//! Omitted keys take their defaults, unknown keys are rejected, and
//! [`RunConfig::resolve`] pins every seed to the top-level one.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::{load_dataset, Dataset, TARGETS};
use crate::error::{Error, Result};
use crate::eval::{BidMode, MonotonicityConfig};
use crate::model::ModelConfig;
use crate::synth::{default_scenarios, derive_seed, generate_dataset, ScenarioSpec};
use crate::train::TrainConfig;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub t_max: usize,
    /// Read records from this file instead of generating them.
    pub dataset: Option<PathBuf>,
    pub campaigns_per_scenario: usize,
    /// Train/val/test proportions, by campaign.
    pub split: [f64; 3],
    /// Scenarios kept out of training.
    pub holdout: Vec<u32>,
}

impl Default for DataConfig {
    fn default() -> Self {
        DataConfig {
            t_max: 96,
            dataset: None,
            campaigns_per_scenario: 100,
            split: [0.7, 0.15, 0.15],
            holdout: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FinetuneConfig {
    /// Share of the holdout campaigns used for fine-tuning.
    pub fraction: f64,
    pub epochs: usize,
    pub lr: f64,
    pub batch_size: usize,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            fraction: 0.05,
            epochs: 10,
            lr: 1e-4,
            batch_size: 16,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProbeConfig {
    pub monotonicity: MonotonicityConfig,
    pub bins: usize,
    /// Target exported by `export-hist`; all targets when empty.
    pub target: String,
    pub grid: Vec<f64>,
    pub mode: BidMode,
    /// Trajectories handled by `bid-select`.
    pub max_trajectories: usize,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            monotonicity: MonotonicityConfig::default(),
            bins: 20,
            target: String::new(),
            grid: vec![5.0, 10.0, 20.0, 40.0, 80.0, 160.0],
            mode: BidMode::Cumhead,
            max_trajectories: 10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub d_model: Vec<usize>,
    pub seeds: Vec<u64>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        SweepConfig {
            d_model: vec![16, 32, 64],
            seeds: vec![0, 1, 2],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub finetune: FinetuneConfig,
    pub probe: ProbeConfig,
    pub sweep: SweepConfig,
    /// Generator scenarios; the eight defaults when empty.
    pub scenario: Vec<ScenarioSpec>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            data: DataConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            finetune: FinetuneConfig::default(),
            probe: ProbeConfig::default(),
            sweep: SweepConfig::default(),
            scenario: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<RunConfig> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills in the scenario list and derives every seed from `seed`, so the
    /// result reproduces the run on its own. Idempotent.
    pub fn resolve(mut self) -> Result<RunConfig> {
        if self.scenario.is_empty() {
            self.scenario = default_scenarios(self.data.t_max, self.seed);
        }
        for s in &mut self.scenario {
            s.seed = derive_seed(self.seed, &s.name);
            s.t_max = self.data.t_max;
        }
        self.train.seed = self.seed;
        self.model.t_max = self.data.t_max;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.data.t_max == 0 {
            return Err(Error::Config("data.t_max must be positive".into()));
        }
        if self.data.split.iter().any(|r| !(*r >= 0.0)) || self.data.split.iter().sum::<f64>() <= 0.0 {
            return Err(Error::Config("data.split needs non-negative parts with a positive sum".into()));
        }
        if !(self.finetune.fraction > 0.0 && self.finetune.fraction <= 1.0) {
            return Err(Error::Config("finetune.fraction must lie in (0, 1]".into()));
        }
        if !self.probe.target.is_empty() && !TARGETS.contains(&self.probe.target.as_str()) {
            return Err(Error::Config(format!(
                "probe.target {:?} is not one of {TARGETS:?}",
                self.probe.target
            )));
        }
        for s in &self.scenario {
            s.validate()?;
        }
        self.model.validate()?;
        self.train.validate()
    }

    /// Records from `data.dataset`, or freshly generated from the scenarios.
    pub fn load_data(&self) -> Result<Dataset> {
        match &self.data.dataset {
            Some(path) => {
                let ds = load_dataset(path)?;
                if ds.header.t_max != self.data.t_max {
                    return Err(Error::Config(format!(
                        "dataset has T_max {}, config says {}",
                        ds.header.t_max, self.data.t_max
                    )));
                }
                Ok(ds)
            }
            None => generate_dataset(&self.scenario, self.data.campaigns_per_scenario),
        }
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<PathBuf> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("resolved.toml");
        fs::write(&path, self.to_toml()?).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}
