//! Versioned JSON experiment configuration. Unknown keys are rejected so a
//! stale or typoed config fails loudly instead of silently using defaults.

use std::fs;
use std::path::Path;

use crate::dataset::ClusterSpec;
use crate::dynamics::FlowConfig;
use crate::error::{LabError, Result};
use crate::losses::SimilarityConfig;
use crate::network::NetSpec;

use super::compare::CompareConfig;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Default, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxes {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cluster_counts: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub squared_distances: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub taus: Option<Vec<f64>>,
}

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,
    /// One of: sweep-clusters, sweep-distance, sweep-tau, compare-dynamics.
    pub experiment: String,
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub output_dir: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dataset: Option<ClusterSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub network: Option<NetSpec>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub flow: Option<FlowConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub similarity: Option<SimilarityConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepAxes>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub compare: Option<CompareConfig>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(LabError::Config(format!(
                "unsupported schema version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        match self.experiment.as_str() {
            "sweep-clusters" | "sweep-distance" | "sweep-tau" | "compare-dynamics" => {}
            other => {
                return Err(LabError::Config(format!("unknown experiment id {other:?}")));
            }
        }
        if let Some(ds) = &self.dataset {
            ds.validate()?;
        }
        if let Some(flow) = &self.flow {
            flow.validate()?;
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| LabError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }
}
