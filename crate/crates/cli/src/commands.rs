use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use roadside_eval::ingest::{read_file, write_file};
use roadside_eval::latency::{combine_trials, estimate_latency, sample_tau, LatencyEstimate};
use roadside_eval::metrics::{evaluate, threshold_sweep_with, EvalOptions, MetricsReport};
use roadside_eval::synth::{degrade, generate_scenario, ErrorModel, ScenarioSpec};
use roadside_eval::{
    build_trajectory_set, make_projection, Category, Error, ProjectionContext, Source, Trajectory, TrajectorySet,
};

use crate::config::{EvalConfig, OutputFormat, TrialPaths};
use crate::manifest::{InputFile, RunManifest, TrialLatency, TrialSweep};
use crate::render;
use crate::{Cli, Command, RunArgs, SynthArgs};

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Latency(args) => cmd_latency(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Sweep { run, thresholds } => cmd_sweep(&run, thresholds),
        Command::Synth(args) => cmd_synth(&args),
    }
}

fn resolve_config(args: &RunArgs) -> Result<EvalConfig> {
    let mut cfg = EvalConfig::load(args.config.as_deref())?;
    if !args.detection.is_empty() || !args.ground_truth.is_empty() {
        if args.detection.len() != args.ground_truth.len() {
            bail!(
                "{} detection files but {} ground-truth files; give one of each per trial",
                args.detection.len(),
                args.ground_truth.len()
            );
        }
        cfg.trials = args
            .detection
            .iter()
            .zip(&args.ground_truth)
            .map(|(d, g)| TrialPaths {
                id: None,
                detection_path: d.clone(),
                ground_truth_path: g.clone(),
            })
            .collect();
    }
    if let Some(o) = args.origin {
        cfg.projection_origin = Some(o);
    }
    if let Some(t) = args.threshold {
        cfg.threshold_m = t;
    }
    if let Some(l) = args.latency {
        cfg.latency_s = Some(l);
    }
    if let Some(c) = args.category {
        cfg.category_filter = Some(c);
    }
    if let Some(g) = args.max_gap {
        cfg.max_gap_s = Some(g);
    }
    if let Some(dir) = &args.output_dir {
        cfg.output_dir = dir.clone();
    }
    if let Some(f) = &args.format {
        cfg.output_formats = f.iter().copied().collect();
    }
    cfg.validate()?;
    Ok(cfg)
}

struct Trial {
    id: String,
    det: TrajectorySet,
    gt: TrajectorySet,
    inputs: Vec<InputFile>,
}

fn load_set(path: &Path, source: Source, bin: f64) -> Result<(TrajectorySet, InputFile)> {
    let (points, report) = read_file(path, source).with_context(|| format!("reading {}", path.display()))?;
    for r in &report.rejection_reasons {
        eprintln!("{}:{}: skipped: {}", path.display(), r.line_number, r.reason);
    }
    let input = InputFile::read(path, report.accepted, report.rejected)?;
    let set = build_trajectory_set(points, bin, source).with_context(|| format!("grouping {}", path.display()))?;
    Ok((set, input))
}

fn load_trials(cfg: &EvalConfig) -> Result<Vec<Trial>> {
    cfg.trials
        .iter()
        .map(|t| {
            let (det, det_in) = load_set(&t.detection_path, Source::Detection, cfg.frame_bin_s)?;
            let (gt, gt_in) = load_set(&t.ground_truth_path, Source::GroundTruth, cfg.frame_bin_s)?;
            Ok(Trial {
                id: t.label(),
                det,
                gt,
                inputs: vec![det_in, gt_in],
            })
        })
        .collect()
}

fn projection(cfg: &EvalConfig, trials: &[Trial]) -> Result<ProjectionContext> {
    if let Some(origin) = cfg.projection_origin {
        return Ok(make_projection(origin));
    }
    let first = trials
        .iter()
        .find_map(|t| t.gt.frames.first())
        .context("ground truth has no points and no projection origin is configured")?;
    Ok(make_projection(first.points[0].position))
}

fn pick_gt<'a>(cfg: &EvalConfig, gt: &'a TrajectorySet) -> Result<&'a Trajectory> {
    if let Some(id) = &cfg.gt_object_id {
        return gt
            .trajectory(id)
            .with_context(|| format!("ground truth has no object {id:?}"));
    }
    gt.trajectories
        .iter()
        .filter(|t| t.category == Category::Vehicle)
        .max_by_key(|t| t.len())
        .or_else(|| gt.trajectories.iter().max_by_key(|t| t.len()))
        .ok_or_else(|| Error::NoSamples("ground truth has no points".into()).into())
}

fn pick_det<'a>(cfg: &EvalConfig, det: &'a TrajectorySet, category: Category) -> Result<&'a Trajectory> {
    if let Some(id) = &cfg.det_object_id {
        return det
            .trajectory(id)
            .with_context(|| format!("detections have no object {id:?}"));
    }
    det.trajectories
        .iter()
        .filter(|t| t.category == category)
        .max_by_key(|t| t.len())
        .ok_or_else(|| Error::NoSamples(format!("no {category} detections to pair with the ground truth")).into())
}

fn estimate_trial_latency(cfg: &EvalConfig, trial: &Trial, ctx: &ProjectionContext) -> Result<LatencyEstimate> {
    let route = cfg
        .route
        .context("latency is neither given nor estimable: configure a [route] or pass --latency")?;
    let gt = pick_gt(cfg, &trial.gt)?;
    let det = pick_det(cfg, &trial.det, gt.category)?;
    let sampling = sample_tau(gt, det, &route, &route.test_points(cfg.test_points), ctx)
        .with_context(|| format!("sampling tau in trial {}", trial.id))?;
    for s in &sampling.skipped {
        eprintln!(
            "{}: test point {:.2} m, pass {}: {}",
            trial.id, s.test_point_m, s.pass_index, s.reason
        );
    }
    estimate_latency(&sampling.samples).with_context(|| format!("estimating latency in trial {}", trial.id))
}

/// Latency per trial: configured, or estimated from that trial's runs.
fn trial_latencies(cfg: &EvalConfig, trials: &[Trial], ctx: &ProjectionContext) -> Result<Vec<TrialLatency>> {
    trials
        .iter()
        .map(|t| match cfg.latency_s {
            Some(l) => Ok(TrialLatency {
                trial_id: t.id.clone(),
                latency_s: l,
                estimate: None,
            }),
            None => {
                let e = estimate_trial_latency(cfg, t, ctx)?;
                Ok(TrialLatency {
                    trial_id: t.id.clone(),
                    latency_s: e.mean_s,
                    estimate: Some(e),
                })
            }
        })
        .collect()
}

fn categories(cfg: &EvalConfig, trial: &Trial) -> Vec<Category> {
    match cfg.category_filter {
        Some(c) => vec![c],
        None => trial.gt.categories(),
    }
}

/// Runs `f` for every trial on its own thread and returns results in trial order.
fn per_trial<T: Send>(trials: &[Trial], f: impl Fn(&Trial) -> Result<T> + Sync) -> Result<Vec<T>> {
    std::thread::scope(|s| {
        let handles: Vec<_> = trials.iter().map(|t| s.spawn(|| f(t))).collect();
        handles
            .into_iter()
            .map(|h| h.join().unwrap_or_else(|_| bail!("evaluation thread panicked")))
            .collect()
    })
}

struct Outputs {
    dir: PathBuf,
    files: Vec<(String, String)>,
}

impl Outputs {
    fn new(dir: &Path) -> Self {
        Self {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        }
    }

    fn add(&mut self, name: &str, contents: String) {
        self.files.push((name.to_string(), contents));
    }

    fn write(self) -> Result<()> {
        if self.files.is_empty() {
            return Ok(());
        }
        std::fs::create_dir_all(&self.dir).with_context(|| format!("creating {}", self.dir.display()))?;
        for (name, contents) in self.files {
            let path = self.dir.join(name);
            std::fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        }
        Ok(())
    }
}

fn finish(mut manifest: RunManifest, name: &str, cfg: &EvalConfig, record_timing: bool, started: Instant, mut out: Outputs) -> Result<()> {
    if record_timing {
        manifest.wall_clock_s = Some(started.elapsed().as_secs_f64());
    }
    if cfg.output_formats.contains(&OutputFormat::Json) {
        out.add(name, manifest.to_json()?);
    }
    out.write()
}

fn cmd_latency(args: &RunArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = resolve_config(args)?;
    let trials = load_trials(&cfg)?;
    let ctx = projection(&cfg, &trials)?;
    let estimates = per_trial(&trials, |t| estimate_trial_latency(&cfg, t, &ctx))?;
    let combined = combine_trials(&estimates)?;

    let labelled: Vec<(String, LatencyEstimate)> = trials.iter().map(|t| t.id.clone()).zip(estimates).collect();
    let table = render::latency_table(&labelled, &combined);
    print!("{table}");
    println!(
        "latency {:.4} s (std {:.4} s, {} samples)",
        combined.mean_s, combined.std_s, combined.n_samples
    );

    let mut manifest = RunManifest::new("latency", &cfg)?;
    manifest.inputs = trials.iter().flat_map(|t| t.inputs.clone()).collect();
    manifest.latency = labelled
        .into_iter()
        .map(|(trial_id, e)| TrialLatency {
            trial_id,
            latency_s: e.mean_s,
            estimate: Some(e),
        })
        .collect();
    manifest.combined_latency = Some(combined);

    let mut out = Outputs::new(&cfg.output_dir);
    if cfg.output_formats.contains(&OutputFormat::Table) {
        out.add("latency.txt", table);
    }
    finish(manifest, "latency.json", &cfg, args.record_timing, started, out)
}

fn cmd_eval(args: &RunArgs) -> Result<()> {
    let started = Instant::now();
    let cfg = resolve_config(args)?;
    let trials = load_trials(&cfg)?;
    let ctx = projection(&cfg, &trials)?;
    let latencies = trial_latencies(&cfg, &trials, &ctx)?;

    let results = per_trial(&trials, |t| {
        let latency = latencies.iter().find(|l| l.trial_id == t.id).map_or(0.0, |l| l.latency_s);
        let opts = EvalOptions {
            threshold_m: cfg.threshold_m,
            max_gap_s: cfg.max_gap_s,
            same_category_only: true,
            trial_id: t.id.clone(),
        };
        categories(&cfg, t)
            .into_iter()
            .map(|c| evaluate(&t.det, &t.gt, latency, c, &ctx, &opts).with_context(|| format!("evaluating trial {}", t.id)))
            .collect::<Result<Vec<_>>>()
    })?;
    let reports: Vec<MetricsReport> = results.iter().flatten().map(|e| e.report.clone()).collect();

    let mut out = Outputs::new(&cfg.output_dir);
    if cfg.output_formats.contains(&OutputFormat::Table) {
        let table = render::metrics_table(&reports);
        print!("{table}");
        out.add("metrics.txt", table);
    }
    if cfg.output_formats.contains(&OutputFormat::Csv) {
        out.add("metrics.csv", render::metrics_csv(&reports)?);
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut first = true;
        for e in results.iter().flatten() {
            render::matches_csv(&e.report.trial_id, &e.frames, &mut w, first)?;
            first = false;
        }
        out.add("matches.csv", String::from_utf8(w.into_inner()?)?);
    }

    let mut manifest = RunManifest::new("eval", &cfg)?;
    manifest.inputs = trials.iter().flat_map(|t| t.inputs.clone()).collect();
    manifest.latency = latencies;
    manifest.reports = reports;
    finish(manifest, "report.json", &cfg, args.record_timing, started, out)
}

fn cmd_sweep(args: &RunArgs, thresholds: Option<Vec<f64>>) -> Result<()> {
    let started = Instant::now();
    let mut cfg = resolve_config(args)?;
    if let Some(t) = thresholds {
        cfg.thresholds_m = t;
    }
    let trials = load_trials(&cfg)?;
    let ctx = projection(&cfg, &trials)?;
    let latencies = trial_latencies(&cfg, &trials, &ctx)?;

    let sweeps = per_trial(&trials, |t| {
        let latency = latencies.iter().find(|l| l.trial_id == t.id).map_or(0.0, |l| l.latency_s);
        categories(&cfg, t)
            .into_iter()
            .map(|c| {
                let sweep = threshold_sweep_with(&t.det, &t.gt, latency, &cfg.thresholds_m, c, &ctx, cfg.max_gap_s)
                    .with_context(|| format!("sweeping trial {}", t.id))?;
                Ok(TrialSweep {
                    trial_id: t.id.clone(),
                    sweep,
                })
            })
            .collect::<Result<Vec<_>>>()
    })?
    .into_iter()
    .flatten()
    .collect::<Vec<_>>();

    let mut out = Outputs::new(&cfg.output_dir);
    if cfg.output_formats.contains(&OutputFormat::Table) {
        let table = render::sweep_table(&sweeps);
        print!("{table}");
        out.add("sweep.txt", table);
    }
    if cfg.output_formats.contains(&OutputFormat::Csv) {
        out.add("sweep.csv", render::sweep_csv(&sweeps)?);
    }
    let mut manifest = RunManifest::new("sweep", &cfg)?;
    manifest.inputs = trials.iter().flat_map(|t| t.inputs.clone()).collect();
    manifest.latency = latencies;
    manifest.sweeps = sweeps;
    finish(manifest, "sweep.json", &cfg, args.record_timing, started, out)
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
struct SynthConfig {
    scenario: ScenarioSpec,
    model: ErrorModel,
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let mut cfg: SynthConfig = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(t) = args.template {
        cfg.scenario.template = t;
    }
    if let Some(s) = args.seed {
        cfg.scenario.rng_seed = s;
    }
    if let Some(n) = args.round_trips {
        cfg.scenario.round_trips = n;
    }
    if let Some(d) = args.duration {
        cfg.scenario.duration_s = Some(d);
    }
    if let Some(r) = args.det_rate {
        cfg.model.det_rate_hz = r;
    }
    cfg.scenario.validate()?;
    cfg.model.validate()?;

    let gt = generate_scenario(&cfg.scenario)?;
    let ctx = make_projection(cfg.scenario.origin);
    let det = degrade(&gt, &cfg.model, &ctx, cfg.scenario.rng_seed.wrapping_add(1))?;

    std::fs::create_dir_all(&args.output_dir).with_context(|| format!("creating {}", args.output_dir.display()))?;
    let gt_path = args.output_dir.join("ground_truth.csv");
    let det_path = args.output_dir.join("detections.csv");
    write_file(&gt_path, &gt.points().cloned().collect::<Vec<_>>())?;
    write_file(&det_path, &det.points().cloned().collect::<Vec<_>>())?;

    // A ready-to-run configuration for the generated trial.
    let trial_cfg = EvalConfig {
        trials: vec![TrialPaths {
            id: Some(format!("synth-{}", cfg.scenario.rng_seed)),
            detection_path: PathBuf::from("detections.csv"),
            ground_truth_path: PathBuf::from("ground_truth.csv"),
        }],
        projection_origin: Some(cfg.scenario.origin),
        route: Some(cfg.scenario.route),
        ..EvalConfig::default()
    };
    std::fs::write(args.output_dir.join("trial.toml"), toml::to_string(&trial_cfg)?)?;
    std::fs::write(args.output_dir.join("synth.toml"), toml::to_string(&cfg)?)?;

    println!(
        "{:?} scenario, seed {}: {} ground-truth points in {} trajectories, {} detection points",
        cfg.scenario.template,
        cfg.scenario.rng_seed,
        gt.point_count(),
        gt.trajectories.len(),
        det.point_count()
    );
    println!("wrote {} and {}", gt_path.display(), det_path.display());
    Ok(())
}
