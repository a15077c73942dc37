use std::path::Path;
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_roadside-eval"))
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().expect("spawn roadside-eval")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status, stdout(&o), stderr(&o));
    o
}

const LATENCY_MODEL: &str = r#"
[scenario]
template = "latency_run"
round_trips = 4

[model]
latency_mean_s = 0.1
latency_std_s = 0.01
noise_sigma_m = 0.1
offset_frame = "fixed"
det_rate_hz = 10.0

[model.offset_e1_m]
along_m = 0.5
cross_m = 0.0
"#;

fn synth_with(dir: &Path, name: &str, model: &str, seed: u64) -> std::path::PathBuf {
    std::fs::write(dir.join(format!("{name}.toml")), model).unwrap();
    ok(run(
        &["synth", "--config", &format!("{name}.toml"), "--seed", &seed.to_string(), "-o", name],
        dir,
    ));
    dir.join(name)
}

#[test]
fn synth_is_deterministic_for_a_seed() {
    let tmp = TempDir::new().unwrap();
    for out in ["a", "b"] {
        ok(run(&["synth", "--template", "vehicle_plus_pedestrian", "--seed", "9", "-o", out], tmp.path()));
    }
    for f in ["ground_truth.csv", "detections.csv", "trial.toml", "synth.toml"] {
        let a = std::fs::read(tmp.path().join("a").join(f)).unwrap();
        let b = std::fs::read(tmp.path().join("b").join(f)).unwrap();
        assert_eq!(a, b, "{f} differs between runs");
    }
}

#[test]
fn latency_of_synthetic_runs_recovers_configured_latency() {
    let tmp = TempDir::new().unwrap();
    let dir = synth_with(tmp.path(), "lat", LATENCY_MODEL, 3);
    let o = ok(run(&["latency", "--config", "lat/trial.toml", "-o", "out"], tmp.path()));
    let line = stdout(&o).lines().find(|l| l.starts_with("latency ")).unwrap().to_string();
    let value: f64 = line.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((value - 0.1).abs() < 0.01, "{line}");
    assert!(tmp.path().join("out/latency.json").exists());
    assert!(dir.join("trial.toml").exists());
}

#[test]
fn latency_combines_trials() {
    let tmp = TempDir::new().unwrap();
    synth_with(tmp.path(), "t1", LATENCY_MODEL, 1);
    synth_with(tmp.path(), "t2", LATENCY_MODEL, 2);
    let o = ok(run(
        &[
            "latency",
            "--config",
            "t1/trial.toml",
            "-d",
            "t1/detections.csv",
            "-g",
            "t1/ground_truth.csv",
            "-d",
            "t2/detections.csv",
            "-g",
            "t2/ground_truth.csv",
            "-o",
            "out",
        ],
        tmp.path(),
    ));
    assert!(stdout(&o).lines().any(|l| l.starts_with("combined")), "{}", stdout(&o));
    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join("out/latency.json")).unwrap()).unwrap();
    assert_eq!(manifest["latency"].as_array().unwrap().len(), 2);
    let combined = manifest["combined_latency"]["mean_s"].as_f64().unwrap();
    assert!((combined - 0.1).abs() < 0.01, "{combined}");
}

#[test]
fn perfect_detections_score_perfectly() {
    let tmp = TempDir::new().unwrap();
    ok(run(&["synth", "--template", "one_vehicle_maneuver", "--seed", "4", "-o", "p"], tmp.path()));
    let o = ok(run(&["eval", "--config", "p/trial.toml", "--latency", "0", "-o", "out"], tmp.path()));
    let row = stdout(&o).lines().find(|l| l.starts_with("synth-4")).unwrap().to_string();
    let cells: Vec<&str> = row.split_whitespace().skip(2).collect();
    assert_eq!(cells, ["0.0", "0.0", "0", "100.0", "0.000", "100.0", "100.0"], "{row}");
}

#[test]
fn reports_are_byte_identical_across_runs() {
    let tmp = TempDir::new().unwrap();
    synth_with(tmp.path(), "lat", LATENCY_MODEL, 5);
    for out in ["r1", "r2"] {
        ok(run(&["eval", "--config", "lat/trial.toml", "--format", "table,csv,json", "-o", out], tmp.path()));
    }
    for f in ["report.json", "metrics.csv", "matches.csv", "metrics.txt"] {
        let a = std::fs::read_to_string(tmp.path().join("r1").join(f)).unwrap();
        let b = std::fs::read_to_string(tmp.path().join("r2").join(f)).unwrap();
        let a = a.replace("r1", "OUT");
        let b = b.replace("r2", "OUT");
        assert_eq!(a, b, "{f} differs");
    }
}

#[test]
fn manifest_config_reproduces_the_run() {
    let tmp = TempDir::new().unwrap();
    synth_with(tmp.path(), "lat", LATENCY_MODEL, 6);
    ok(run(&["eval", "--config", "lat/trial.toml", "-o", "first"], tmp.path()));
    ok(run(&["eval", "--config", "first/report.json", "-o", "first"], tmp.path()));
    let again = std::fs::read_to_string(tmp.path().join("first/report.json")).unwrap();
    ok(run(&["eval", "--config", "first/report.json", "-o", "first"], tmp.path()));
    let third = std::fs::read_to_string(tmp.path().join("first/report.json")).unwrap();
    assert_eq!(again, third);
    let m: serde_json::Value = serde_json::from_str(&third).unwrap();
    assert_eq!(m["schema_version"], 1);
    assert_eq!(m["inputs"][0]["sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn missing_category_is_an_input_error() {
    let tmp = TempDir::new().unwrap();
    ok(run(&["synth", "--template", "one_vehicle_maneuver", "--seed", "1", "-o", "v"], tmp.path()));
    let o = run(
        &["eval", "--config", "v/trial.toml", "--latency", "0", "--category", "pedestrian", "-o", "out"],
        tmp.path(),
    );
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("no ground truth in category"), "{}", stderr(&o));
}

#[test]
fn empty_detections_give_no_latency_samples() {
    let tmp = TempDir::new().unwrap();
    synth_with(tmp.path(), "lat", LATENCY_MODEL, 7);
    std::fs::write(tmp.path().join("lat/detections.csv"), "timestamp,lat,lon,category,id\n").unwrap();
    let o = run(&["latency", "--config", "lat/trial.toml", "-o", "out"], tmp.path());
    assert!(!o.status.success());
    assert!(stderr(&o).to_lowercase().contains("no samples"), "{}", stderr(&o));
}

#[test]
fn sweep_rejects_unsorted_thresholds() {
    let tmp = TempDir::new().unwrap();
    synth_with(tmp.path(), "lat", LATENCY_MODEL, 8);
    let o = run(&["sweep", "--config", "lat/trial.toml", "--thresholds", "1,0.5", "-o", "out"], tmp.path());
    assert!(!o.status.success());
    assert!(!stderr(&o).is_empty());
}

#[test]
fn single_threshold_sweep_matches_eval() {
    let tmp = TempDir::new().unwrap();
    synth_with(tmp.path(), "lat", LATENCY_MODEL, 10);
    let common = ["--config", "lat/trial.toml", "--latency", "0.1", "--format", "json"];
    ok(run(&[&["eval"][..], &common, &["--threshold", "1.5", "-o", "e"]].concat(), tmp.path()));
    ok(run(&[&["sweep"][..], &common, &["--thresholds", "1.5", "-o", "s"]].concat(), tmp.path()));
    let read = |p: &str| -> serde_json::Value {
        serde_json::from_str(&std::fs::read_to_string(tmp.path().join(p)).unwrap()).unwrap()
    };
    let e = read("e/report.json");
    let s = read("s/sweep.json");
    let fp = e["reports"][0]["fp_rate_pct"].as_f64().unwrap();
    let fn_ = e["reports"][0]["fn_rate_pct"].as_f64().unwrap();
    assert!((s["sweeps"][0]["fp_rate_pct"][0].as_f64().unwrap() - fp).abs() < 1e-9);
    assert!((s["sweeps"][0]["fn_rate_pct"][0].as_f64().unwrap() - fn_).abs() < 1e-9);
}

#[test]
fn zero_duration_synth_is_rejected() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["synth", "--template", "one_vehicle_maneuver", "--duration", "0", "-o", "z"], tmp.path());
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
}

#[test]
fn bad_flags_exit_with_input_status() {
    let tmp = TempDir::new().unwrap();
    let o = run(&["eval", "--threshold", "abc"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    let o = run(&["eval"], tmp.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("no trials"), "{}", stderr(&o));
}
