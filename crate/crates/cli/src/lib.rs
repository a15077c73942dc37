//! Command-line front end for `roadside-eval`: latency estimation, metric
//! evaluation, threshold sweeps and synthetic trial generation.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
pub mod config;
pub mod manifest;
pub mod render;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use commands::run;
pub use config::{EvalConfig, OutputFormat, TrialPaths};
pub use manifest::{RunManifest, SCHEMA_VERSION};

/// Exit status for input and configuration errors.
pub const EXIT_INPUT: u8 = 1;
/// Exit status for internal consistency failures.
pub const EXIT_INTERNAL: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "roadside-eval", version, about = "Evaluate roadside perception against RTK ground truth")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate latency from paired constant-speed runs.
    Latency(RunArgs),
    /// Compute the metric table for each trial and category.
    Eval(RunArgs),
    /// FP and FN rates over a list of thresholds.
    Sweep {
        #[command(flatten)]
        run: RunArgs,
        /// Comma-separated, strictly ascending thresholds in meters.
        #[arg(long, value_delimiter = ',')]
        thresholds: Option<Vec<f64>>,
    },
    /// Generate ground-truth and detection files from a scenario and error model.
    Synth(SynthArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// TOML configuration; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Detection file (repeat once per trial).
    #[arg(short = 'd', long = "detection")]
    pub detection: Vec<PathBuf>,
    /// Ground-truth file (repeat once per trial, in the same order).
    #[arg(short = 'g', long = "ground-truth")]
    pub ground_truth: Vec<PathBuf>,
    /// Projection origin as `lat,lon`.
    #[arg(long, value_parser = parse_origin)]
    pub origin: Option<roadside_eval::GeoPoint>,
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Latency to compensate, in seconds (estimated from the route when absent).
    #[arg(long, allow_negative_numbers = true)]
    pub latency: Option<f64>,
    #[arg(long)]
    pub category: Option<roadside_eval::Category>,
    #[arg(long)]
    pub max_gap: Option<f64>,
    #[arg(short = 'o', long)]
    pub output_dir: Option<PathBuf>,
    /// Comma-separated subset of table, csv, json.
    #[arg(long, value_delimiter = ',')]
    pub format: Option<Vec<OutputFormat>>,
    /// Record wall-clock duration in the manifest (breaks byte-identical reruns).
    #[arg(long)]
    pub record_timing: bool,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// TOML file with optional `[scenario]` and `[model]` tables.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_parser = parse_template)]
    pub template: Option<roadside_eval::synth::Template>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub round_trips: Option<usize>,
    #[arg(long)]
    pub duration: Option<f64>,
    #[arg(long)]
    pub det_rate: Option<f64>,
    #[arg(short = 'o', long, default_value = "synth")]
    pub output_dir: PathBuf,
}

fn parse_origin(s: &str) -> Result<roadside_eval::GeoPoint, String> {
    let (lat, lon) = s.split_once(',').ok_or("expected lat,lon")?;
    let lat: f64 = lat.trim().parse().map_err(|e| format!("latitude: {e}"))?;
    let lon: f64 = lon.trim().parse().map_err(|e| format!("longitude: {e}"))?;
    roadside_eval::GeoPoint::new(lat, lon).map_err(|e| e.to_string())
}

fn parse_template(s: &str) -> Result<roadside_eval::synth::Template, String> {
    let quoted = format!("{:?}", s.trim().replace('-', "_"));
    serde_json::from_str(&quoted).map_err(|_| {
        format!(
            "unknown template {s:?} (expected latency_run, one_vehicle_maneuver, vehicle_plus_pedestrian or two_vehicle_plus_pedestrian)"
        )
    })
}

/// Maps an error to the process exit status.
pub fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<roadside_eval::Error>() {
        Some(roadside_eval::Error::Consistency(_)) => EXIT_INTERNAL,
        _ => EXIT_INPUT,
    }
}
