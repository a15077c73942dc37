//! Run configuration: a TOML file overlaid with command-line flags.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use serde::{Deserialize, Serialize};

use roadside_eval::latency::{RouteLine, DEFAULT_TEST_POINTS};
use roadside_eval::matcher::DEFAULT_THRESHOLD_M;
use roadside_eval::trajectory::DEFAULT_FRAME_BIN_S;
use roadside_eval::{Category, GeoPoint};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    Table,
    Csv,
    Json,
}

impl std::str::FromStr for OutputFormat {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "table" => Ok(Self::Table),
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            other => bail!("unknown output format {other:?} (expected table, csv or json)"),
        }
    }
}

/// One detection recording and the ground truth it is scored against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialPaths {
    /// Defaults to the detection file's stem.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub detection_path: PathBuf,
    pub ground_truth_path: PathBuf,
}

impl TrialPaths {
    pub fn label(&self) -> String {
        self.id.clone().unwrap_or_else(|| {
            self.detection_path
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "trial".to_string())
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub trials: Vec<TrialPaths>,
    /// Local-plane origin; the first ground-truth point when absent.
    pub projection_origin: Option<GeoPoint>,
    pub threshold_m: f64,
    /// Latency to compensate; estimated from the route when absent.
    pub latency_s: Option<f64>,
    pub category_filter: Option<Category>,
    pub max_gap_s: Option<f64>,
    pub output_dir: PathBuf,
    pub output_formats: BTreeSet<OutputFormat>,
    pub frame_bin_s: f64,
    /// Constant-speed route of latency runs.
    pub route: Option<RouteLine>,
    pub test_points: usize,
    /// Ground-truth object driving the latency runs; the longest vehicle track when absent.
    pub gt_object_id: Option<String>,
    /// Detection object following it; the largest detection track of that category when absent.
    pub det_object_id: Option<String>,
    pub thresholds_m: Vec<f64>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            trials: Vec::new(),
            projection_origin: None,
            threshold_m: DEFAULT_THRESHOLD_M,
            latency_s: None,
            category_filter: None,
            max_gap_s: None,
            output_dir: PathBuf::from("out"),
            output_formats: [OutputFormat::Table, OutputFormat::Json].into(),
            frame_bin_s: DEFAULT_FRAME_BIN_S,
            route: None,
            test_points: DEFAULT_TEST_POINTS,
            gt_object_id: None,
            det_object_id: None,
            thresholds_m: vec![0.25, 0.5, 1.0, 1.5, 3.0, 6.0],
        }
    }
}

impl EvalConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        if path.extension().is_some_and(|e| e == "json") {
            // A run manifest: its echoed config already holds resolved paths.
            let manifest: crate::RunManifest =
                serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
            return serde_json::from_value(manifest.config)
                .with_context(|| format!("reading the config echoed in {}", path.display()));
        }
        let mut cfg: Self = toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        // Input paths are relative to the file that names them.
        let base = path.parent().unwrap_or(Path::new(""));
        for t in &mut cfg.trials {
            t.detection_path = base.join(&t.detection_path);
            t.ground_truth_path = base.join(&t.ground_truth_path);
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> anyhow::Result<()> {
        if self.trials.is_empty() {
            bail!("no trials configured: give --detection and --ground-truth or a [[trials]] table");
        }
        if !(self.threshold_m > 0.0) || !self.threshold_m.is_finite() {
            bail!("threshold must be positive, got {}", self.threshold_m);
        }
        if let Some(l) = self.latency_s {
            if !l.is_finite() {
                bail!("latency must be finite, got {l}");
            }
        }
        if let Some(g) = self.max_gap_s {
            if !(g > 0.0) {
                bail!("max gap must be positive, got {g}");
            }
        }
        if !(self.frame_bin_s > 0.0) {
            bail!("frame bin must be positive, got {}", self.frame_bin_s);
        }
        if self.test_points == 0 {
            bail!("need at least one test point");
        }
        Ok(())
    }
}
