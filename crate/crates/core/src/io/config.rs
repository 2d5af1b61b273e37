//! TOML run configuration.
//!
//! Every field has a default; unknown keys are rejected. See
//! `docs/config.example.toml` in the repository for an annotated example.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionSamplerConfig;
use crate::error::{Error, Result};
use crate::fit::FitConfig;
use crate::pipeline::{
    CostModel, DetectorKind, DetectorSpec, PipelineConfig, PlaybackOptions, ScheduleConfig,
};
use crate::saliency::SaliencyConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub name: String,
    pub kind: DetectorKindSection,
    /// Explicit cost; when absent, the name is looked up in the cost table.
    pub cost_gflops: Option<f64>,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self {
            name: "efficientnet-b1".into(),
            kind: DetectorKindSection::Null,
            cost_gflops: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKindSection {
    Null,
    Playback { path: String },
    Command { template: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Background supervision weight for the grid-fit mask.
    pub gamma: f64,
    pub detector_timeout_ms: u64,
    pub saliency: SaliencyConfig,
    pub sampler: AttentionSamplerConfig,
    pub fit: FitConfig,
    pub schedule: ScheduleConfig,
    pub playback: PlaybackOptions,
    pub costs: CostModel,
    pub detectors: DetectorsSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorsSection {
    pub key: DetectorSection,
    pub light: DetectorSection,
}

impl Default for DetectorsSection {
    fn default() -> Self {
        Self {
            key: DetectorSection {
                name: "efficientnet-b1".into(),
                kind: DetectorKindSection::Null,
                cost_gflops: None,
            },
            light: DetectorSection {
                name: "efficientnet-b0".into(),
                kind: DetectorKindSection::Null,
                cost_gflops: None,
            },
        }
    }
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            gamma: 0.5,
            detector_timeout_ms: 30_000,
            saliency: SaliencyConfig::default(),
            sampler: AttentionSamplerConfig::default(),
            fit: FitConfig::default(),
            schedule: ScheduleConfig::default(),
            playback: PlaybackOptions::default(),
            costs: CostModel::default(),
            detectors: DetectorsSection::default(),
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.saliency.validate()?;
        self.sampler.validate()?;
        self.fit.validate()?;
        self.schedule.validate()?;
        if !self.gamma.is_finite() || self.gamma < 0.0 {
            return Err(Error::Config(format!(
                "gamma must be finite and non-negative, got {}",
                self.gamma
            )));
        }
        Ok(())
    }

    pub fn pipeline_config(&self) -> PipelineConfig {
        PipelineConfig {
            saliency: self.saliency.clone(),
            sampler: self.sampler.clone(),
            fit: self.fit.clone(),
            gamma: self.gamma,
            schedule: self.schedule.clone(),
            playback: self.playback.clone(),
            costs: self.costs.clone(),
            seed: self.seed,
            detector_timeout_ms: self.detector_timeout_ms,
        }
    }

    /// Resolve a detector section against the cost table.
    pub fn detector_spec(&self, section: &DetectorSection) -> Result<DetectorSpec> {
        let cost = match section.cost_gflops {
            Some(c) => c,
            None => *self.costs.entries.get(&section.name).ok_or_else(|| {
                Error::Config(format!(
                    "no cost entry for detector {:?}; set cost_gflops or add a [costs.entries] row",
                    section.name
                ))
            })?,
        };
        let kind = match &section.kind {
            DetectorKindSection::Null => DetectorKind::Null,
            DetectorKindSection::Playback { path } => DetectorKind::Playback { path: path.into() },
            DetectorKindSection::Command { template } => DetectorKind::Command {
                template: template.clone(),
            },
        };
        Ok(DetectorSpec {
            name: section.name.clone(),
            kind,
            cost_gflops: cost,
        })
    }

    pub fn key_detector(&self) -> Result<DetectorSpec> {
        self.detector_spec(&self.detectors.key)
    }

    pub fn light_detector(&self) -> Result<DetectorSpec> {
        self.detector_spec(&self.detectors.light)
    }
}

pub fn parse_config(text: &str) -> Result<RunConfig> {
    let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<RunConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
