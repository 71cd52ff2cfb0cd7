//! Single-file TOML configuration. Every section and key is optional; missing
//! values come from the desk preset and unknown keys are rejected.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{InferenceMode, Result, TrainConfig, WorkbenchError};
use crate::devices::{DatasetConfig, DeviceKind, GeometryRanges};
use crate::model::ModelConfig;

const UM: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSection {
    pub rows: usize,
    pub cols: usize,
    /// Worker threads for dataset generation and evaluation; 0 uses the default.
    pub threads: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeviceSection {
    pub kind: DeviceKind,
    pub n_ports: usize,
    /// Devices generated before the split.
    pub count: usize,
    pub seed: u64,
    /// Train, validation and test fractions.
    pub split: [f64; 3],
    /// Existing dataset directory to use instead of generating one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<PathBuf>,
    pub ranges: GeometryRanges,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalSection {
    pub mode: InferenceMode,
    /// Seed of the multi-source coefficient rows.
    pub seed: u64,
    pub sweep_lo: f64,
    pub sweep_hi: f64,
    pub sweep_step: f64,
    /// Sweep rows also solved for comparison.
    pub cross_check: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdaptSection {
    pub probe_epochs: usize,
    pub tune_epochs: usize,
    /// Ports of the target devices.
    pub n_ports: usize,
    pub count: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorkbenchConfig {
    pub domain: DomainSection,
    pub device: DeviceSection,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub adapt: AdaptSection,
}

impl WorkbenchConfig {
    /// 32×64 grid, 256 three-port tunable MMIs in the training split,
    /// C = 16, K = 4, modes (16, 8), 50 epochs at batch 8.
    pub fn desk() -> Self {
        Self {
            domain: DomainSection { rows: 32, cols: 64, threads: 0 },
            device: DeviceSection {
                kind: DeviceKind::TunableMmi,
                n_ports: 3,
                count: 356,
                seed: 0,
                split: [0.72, 0.08, 0.20],
                dataset: None,
                ranges: GeometryRanges::desk(),
            },
            model: ModelConfig::desk(),
            train: TrainConfig { lr: 0.005, ..TrainConfig::default() },
            eval: EvalSection {
                mode: InferenceMode::Multi,
                seed: 7,
                sweep_lo: 1.550 * UM,
                sweep_hi: 1.565 * UM,
                sweep_step: 0.002 * UM,
                cross_check: vec![0, 3, 7],
            },
            adapt: AdaptSection { probe_epochs: 20, tune_epochs: 30, n_ports: 4, count: 64, seed: 1 },
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        let user: toml::Table = toml::from_str(text)?;
        let encoding_only = user
            .get("model")
            .and_then(|m| m.as_table())
            .is_none_or(|m| !m.contains_key("in_channels"));
        let mut merged = toml::Table::try_from(Self::desk()).map_err(|e| WorkbenchError::InvalidConfig(e.to_string()))?;
        overlay(&mut merged, user);
        let mut cfg: Self = merged.try_into()?;
        if encoding_only {
            cfg.model.in_channels = cfg.train.encoding.channels();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml_str(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string_pretty(self).map_err(|e| WorkbenchError::InvalidConfig(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.model.validate()?;
        self.model.check_grid(self.domain.rows, self.domain.cols)?;
        if self.model.in_channels != self.train.encoding.channels() {
            return Err(WorkbenchError::InvalidConfig(format!(
                "model.in_channels = {} but encoding {:?} has {} channels",
                self.model.in_channels,
                self.train.encoding,
                self.train.encoding.channels()
            )));
        }
        if self.device.n_ports == 0 || self.adapt.n_ports == 0 {
            return Err(WorkbenchError::InvalidConfig("devices need at least one port".into()));
        }
        if !(self.eval.sweep_step > 0.0) || self.eval.sweep_hi < self.eval.sweep_lo {
            return Err(WorkbenchError::InvalidConfig("sweep needs step > 0 and hi >= lo".into()));
        }
        Ok(())
    }

    pub fn dataset_config(&self) -> DatasetConfig {
        DatasetConfig {
            kind: self.device.kind,
            n_ports: self.device.n_ports,
            count: self.device.count,
            rows: self.domain.rows,
            cols: self.domain.cols,
            seed: self.device.seed,
            ranges: self.device.ranges.clone(),
            threads: self.domain.threads,
        }
    }

    /// Dataset of out-of-distribution devices for adaptation.
    pub fn adapt_dataset_config(&self) -> DatasetConfig {
        DatasetConfig { n_ports: self.adapt.n_ports, count: self.adapt.count, seed: self.adapt.seed, ..self.dataset_config() }
    }
}

impl Default for WorkbenchConfig {
    fn default() -> Self {
        Self::desk()
    }
}

fn overlay(base: &mut toml::Table, user: toml::Table) {
    for (key, value) in user {
        match (base.get_mut(&key), value) {
            (Some(toml::Value::Table(b)), toml::Value::Table(u)) => overlay(b, u),
            (_, value) => {
                base.insert(key, value);
            }
        }
    }
}
