use std::path::Path;

use anyhow::Context;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use roadside_eval::latency::LatencyEstimate;
use roadside_eval::metrics::{MetricsReport, ThresholdSweep};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputFile {
    pub path: String,
    pub sha256: String,
    pub accepted: usize,
    pub rejected: usize,
}

impl InputFile {
    pub fn read(path: &Path, accepted: usize, rejected: usize) -> anyhow::Result<Self> {
        let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
        Ok(Self {
            path: path.display().to_string(),
            sha256: hex::encode(Sha256::digest(&bytes)),
            accepted,
            rejected,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialLatency {
    pub trial_id: String,
    pub latency_s: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimate: Option<LatencyEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSweep {
    pub trial_id: String,
    #[serde(flatten)]
    pub sweep: ThresholdSweep,
}

/// Everything needed to reproduce a run from its inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub tool: String,
    pub tool_version: String,
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputFile>,
    pub latency: Vec<TrialLatency>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub combined_latency: Option<LatencyEstimate>,
    pub reports: Vec<MetricsReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sweeps: Vec<TrialSweep>,
    /// Only recorded on request, so that repeated runs stay byte-identical.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub wall_clock_s: Option<f64>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> anyhow::Result<Self> {
        Ok(Self {
            schema_version: SCHEMA_VERSION,
            tool: env!("CARGO_PKG_NAME").to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: serde_json::to_value(config)?,
            inputs: Vec::new(),
            latency: Vec::new(),
            combined_latency: None,
            reports: Vec::new(),
            sweeps: Vec::new(),
            wall_clock_s: None,
        })
    }

    pub fn to_json(&self) -> anyhow::Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }
}
