use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use roadside_eval::ingest::apply_clock_offset;
use roadside_eval::latency::{
    estimate_latency, estimate_position_error, extract_constant_speed_window, sample_tau, LatencyEstimate,
    RouteLine,
};
use roadside_eval::matcher::{association_match, match_frames_by_time};
use roadside_eval::metrics::{compute_report, evaluate, threshold_sweep, EvalOptions};
use roadside_eval::synth::{
    degrade, generate_scenario, monte_carlo_validate, ErrorModel, OffsetFrame, ScenarioSpec, TravelOffset,
};
use roadside_eval::trajectory::{interpolate_position, DEFAULT_FRAME_BIN_S};
use roadside_eval::{
    build_trajectory_set, make_projection, Category, DataPoint, GeoPoint, LocalPoint, ProjectionContext, Source,
    Trajectory, TrajectorySet,
};

const T0: f64 = 1_700_000_000.0;
const EARTH_RADIUS_M: f64 = 6_371_008.8;

fn origin() -> GeoPoint {
    GeoPoint::new(42.3, -83.7).unwrap()
}

fn haversine(a: GeoPoint, b: GeoPoint) -> f64 {
    let (p1, p2) = (a.lat_deg.to_radians(), b.lat_deg.to_radians());
    let dp = p2 - p1;
    let dl = (b.lon_deg - a.lon_deg).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().asin()
}

fn route(v0: f64) -> RouteLine {
    RouteLine::new(LocalPoint::ORIGIN, LocalPoint::new(1.0, 0.0), 0.0, 60.0, v0).unwrap()
}

fn local_set(ctx: &ProjectionContext, source: Source, pts: &[(f64, f64, f64, &str)]) -> TrajectorySet {
    let points = pts
        .iter()
        .map(|&(t, x, y, id)| {
            DataPoint::new(T0 + t, ctx.unproject(LocalPoint::new(x, y)).unwrap(), Category::Vehicle, id).unwrap()
        })
        .collect();
    build_trajectory_set(points, DEFAULT_FRAME_BIN_S, source).unwrap()
}

#[test]
fn projection_agrees_with_haversine() {
    let ctx = make_projection(origin());
    let north = GeoPoint::new(42.301, -83.7).unwrap();
    let p = ctx.project(north).unwrap();
    assert_eq!(p.x_m, 0.0);
    assert!((p.y_m - 111.13).abs() < 0.01);
    assert!((p.y_m - haversine(origin(), north)).abs() < 0.2);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..500 {
        let r = rng.random_range(1.0..1000.0);
        let a = rng.random_range(0.0..std::f64::consts::TAU);
        let g = ctx.unproject(LocalPoint::new(r * a.cos(), r * a.sin())).unwrap();
        let flat = ctx.project(g).unwrap().norm();
        let sphere = haversine(origin(), g);
        assert!((flat - sphere).abs() / sphere < 1e-3, "{flat} vs {sphere}");
    }
}

#[test]
fn shuffled_points_build_the_same_set() {
    let ctx = make_projection(origin());
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut points = Vec::new();
    for k in 0..1000 {
        for id in 0..10 {
            let p = LocalPoint::new(rng.random_range(-200.0..200.0), rng.random_range(-200.0..200.0));
            points.push(
                DataPoint::new(T0 + k as f64 * 0.05, ctx.unproject(p).unwrap(), Category::ALL[id % 2], format!("o{id}"))
                    .unwrap(),
            );
        }
    }
    let mut sorted = points.clone();
    sorted.sort_by(|a, b| a.timestamp_s.total_cmp(&b.timestamp_s).then_with(|| a.object_id.cmp(&b.object_id)));
    let reference = build_trajectory_set(sorted, DEFAULT_FRAME_BIN_S, Source::GroundTruth).unwrap();
    for _ in 0..3 {
        for i in (1..points.len()).rev() {
            points.swap(i, rng.random_range(0..=i));
        }
        let set = build_trajectory_set(points.clone(), DEFAULT_FRAME_BIN_S, Source::GroundTruth).unwrap();
        assert_eq!(set, reference);
    }
    assert_eq!(reference.frames.len(), 1000);
    assert_eq!(reference.trajectories.len(), 10);
}

#[test]
fn dense_interpolation_matches_closed_form() {
    // Small timestamps keep the time grid exact to well below a nanosecond.
    let ctx = make_projection(origin());
    let (v, start) = (LocalPoint::new(3.0, -1.5), 1000.0);
    let points: Vec<DataPoint> = (0..=1000)
        .map(|k| {
            let t = k as f64 / 100.0;
            DataPoint::new(start + t, ctx.unproject(v * t).unwrap(), Category::Vehicle, "a").unwrap()
        })
        .collect();
    let traj = Trajectory::new(points).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..1000 {
        let t = rng.random_range(0.0..10.0);
        let p = interpolate_position(&traj, start + t, &ctx).unwrap();
        assert!(p.distance(v * t) < 1e-9, "{}", p.distance(v * t));
    }
}

#[test]
fn braking_ends_the_window_at_onset() {
    let ctx = make_projection(origin());
    let r = route(10.0);
    // 10 m/s from x = -20, hard braking (6 m/s²) once x passes 35 m.
    let (mut t, mut x, mut v) = (0.0, -20.0, 10.0);
    let mut samples = Vec::new();
    while v > 0.0 && samples.len() < 2000 {
        samples.push((t, x));
        let a = if x >= 35.0 { -6.0 } else { 0.0 };
        x += v * 0.01 + 0.5 * a * 0.0001;
        v += a * 0.01;
        t += 0.01;
    }
    let points: Vec<DataPoint> = samples
        .iter()
        .map(|&(t, x)| DataPoint::new(T0 + t, ctx.unproject(LocalPoint::new(x, 0.0)).unwrap(), Category::Vehicle, "a").unwrap())
        .collect();
    let traj = Trajectory::new(points.clone()).unwrap();
    let w = extract_constant_speed_window(&traj, &r, 0.1, &ctx).unwrap();

    // Brute force: longest run of consecutive steps inside the window whose
    // speed lies within 10% of nominal.
    let xs: Vec<f64> = points.iter().map(|p| ctx.project(p.position).unwrap().x_m).collect();
    let ts: Vec<f64> = points.iter().map(|p| p.timestamp_s).collect();
    let good: Vec<bool> = (0..xs.len() - 1)
        .map(|i| {
            let s = (xs[i + 1] - xs[i]) / (ts[i + 1] - ts[i]);
            (s - 10.0).abs() <= 1.0 && (-1e-6..=60.0 + 1e-6).contains(&xs[i]) && (-1e-6..=60.0 + 1e-6).contains(&xs[i + 1])
        })
        .collect();
    let (mut best, mut run_start) = ((0, 0), None);
    for (i, &g) in good.iter().chain([false].iter()).enumerate() {
        match (g, run_start) {
            (true, None) => run_start = Some(i),
            (false, Some(s)) => {
                if i - s > best.1 - best.0 {
                    best = (s, i);
                }
                run_start = None;
            }
            _ => {}
        }
    }
    assert_eq!((w.first_index, w.last_index), (best.0, best.1));
    assert!(w.end_s > ts[0] + 5.5 && w.end_s < ts[0] + 5.9);
}

fn paired_run(model: &ErrorModel, round_trips: usize, seed: u64) -> (ScenarioSpec, TrajectorySet, TrajectorySet) {
    let spec = ScenarioSpec::latency_run(route(10.0), round_trips, seed);
    let gt = generate_scenario(&spec).unwrap();
    let det = degrade(&gt, model, &make_projection(spec.origin), seed + 1).unwrap();
    (spec, gt, det)
}

fn offset_model() -> ErrorModel {
    ErrorModel {
        latency_mean_s: 0.1,
        offset_e1_m: TravelOffset { along_m: 0.5, cross_m: 0.0 },
        offset_frame: OffsetFrame::Fixed,
        noise_sigma_m: 0.1,
        ..ErrorModel::default()
    }
}

#[test]
fn single_direction_means_carry_the_offset() {
    let (spec, gt, det) = paired_run(&offset_model(), 10, 40);
    let ctx = make_projection(spec.origin);
    let s = sample_tau(&gt.trajectories[0], &det.trajectories[0], &spec.route, &spec.route.test_points(11), &ctx).unwrap();
    let est = estimate_latency(&s.samples).unwrap();
    let means: Vec<f64> = est.per_direction.values().map(|d| d.mean_s).collect();
    assert!((means[0] - 0.05).abs() < 0.005, "{means:?}");
    assert!((means[1] - 0.15).abs() < 0.005, "{means:?}");
    assert!((est.mean_s - 0.1).abs() < 0.005);
}

#[test]
fn zero_noise_offsets_cancel_exactly() {
    let model = ErrorModel {
        noise_sigma_m: 0.0,
        det_rate_hz: 20.0,
        ..offset_model()
    };
    let (spec, gt, det) = paired_run(&model, 2, 41);
    let ctx = make_projection(spec.origin);
    let s = sample_tau(&gt.trajectories[0], &det.trajectories[0], &spec.route, &spec.route.test_points(11), &ctx).unwrap();
    let est = estimate_latency(&s.samples).unwrap();
    assert!((est.mean_s - 0.1).abs() < 1e-5, "{}", est.mean_s);
}

#[test]
fn clock_offset_shifts_the_estimate() {
    let model = ErrorModel {
        noise_sigma_m: 0.0,
        ..offset_model()
    };
    let (spec, gt, det) = paired_run(&model, 2, 42);
    let ctx = make_projection(spec.origin);
    let tps = spec.route.test_points(11);
    let base = sample_tau(&gt.trajectories[0], &det.trajectories[0], &spec.route, &tps, &ctx).unwrap();
    let base = estimate_latency(&base.samples).unwrap();
    let shifted = Trajectory::new(apply_clock_offset(&gt.trajectories[0].points, 0.25).unwrap()).unwrap();
    let moved = sample_tau(&shifted, &det.trajectories[0], &spec.route, &tps, &ctx).unwrap();
    let moved = estimate_latency(&moved.samples).unwrap();
    assert!((moved.mean_s - (base.mean_s - 0.25)).abs() < 1e-6, "{} vs {}", moved.mean_s, base.mean_s);
}

fn known_latency(l: f64) -> LatencyEstimate {
    LatencyEstimate {
        mean_s: l,
        std_s: 0.0,
        n_samples: 0,
        per_direction: Default::default(),
    }
}

#[test]
fn exact_shift_has_no_position_error() {
    let model = ErrorModel {
        latency_mean_s: 0.1,
        det_rate_hz: 20.0,
        ..ErrorModel::default()
    };
    let (spec, gt, det) = paired_run(&model, 1, 43);
    let est = estimate_position_error(&det.trajectories[0], &gt.trajectories[0], &known_latency(0.1), &make_projection(spec.origin))
        .unwrap();
    assert!(est.mean_offset_m.norm() < 1e-5);
    assert!(est.residual_rms_m < 1e-5);
}

#[test]
fn latency_jitter_inflates_along_track_residuals() {
    // One long constant-speed pass so every residual is taken at v0.
    let ctx = make_projection(origin());
    let pts: Vec<(f64, f64, f64, &str)> = (0..=6000).map(|k| (k as f64 * 0.05, -1500.0 + 0.5 * k as f64, 0.0, "a")).collect();
    let gt = local_set(&ctx, Source::GroundTruth, &pts);
    let model = ErrorModel {
        latency_mean_s: 0.1,
        latency_std_s: 0.02,
        noise_sigma_m: 0.1,
        ..ErrorModel::default()
    };
    let det = degrade(&gt, &model, &ctx, 44).unwrap();
    let (mean, var_l) = model.latency_moments();
    let est = estimate_position_error(&det.trajectories[0], &gt.trajectories[0], &known_latency(mean), &ctx).unwrap();
    let along = est.travel_frame.unwrap().along_rms_m.powi(2);
    let predicted = 0.01 + 100.0 * var_l;
    assert!((along - predicted).abs() / predicted < 0.1, "{along} vs {predicted}");
    let total = est.residual_rms_m.powi(2);
    assert!((total - (predicted + 0.01)).abs() / (predicted + 0.01) < 0.1, "{total}");
}

#[test]
fn motp_follows_rayleigh_mean() {
    let model = ErrorModel {
        noise_sigma_m: 0.3,
        det_rate_hz: 20.0,
        ..ErrorModel::default()
    };
    let (spec, gt, det) = paired_run(&model, 14, 45);
    let report = compute_report(&det, &gt, 0.0, 1.5, Category::Vehicle, &make_projection(spec.origin)).unwrap();
    assert!(report.counts.tp >= 10_000, "{}", report.counts.tp);
    let expected = 0.3 * (std::f64::consts::PI / 2.0).sqrt();
    let motp = report.motp_m.unwrap();
    assert!((motp - expected).abs() / expected < 0.05, "{motp}");
}

#[test]
fn perfect_detections_score_perfectly() {
    let spec = ScenarioSpec::with_template(roadside_eval::synth::Template::TwoVehiclePlusPedestrian, 1);
    let gt = generate_scenario(&spec).unwrap();
    let ctx = make_projection(spec.origin);
    for category in Category::ALL {
        let r = compute_report(&gt, &gt, 0.0, 1.5, category, &ctx).unwrap();
        assert_eq!((r.counts.fp, r.counts.fn_, r.ids), (0, 0, 0));
        assert_eq!(r.mota_pct, Some(100.0));
        assert_eq!(r.motp_m, Some(0.0));
        assert_eq!(r.idf1_pct, Some(100.0));
        assert_eq!(r.hota_pct, Some(100.0));
    }
}

#[test]
fn swapped_halves_enumerated_by_hand() {
    let ctx = make_projection(origin());
    let mut gt = Vec::new();
    let mut det = Vec::new();
    for k in 0..10 {
        let (t, x) = (k as f64 * 0.1, k as f64);
        gt.push((t, x, 0.0, "A"));
        gt.push((t, x, 10.0, "B"));
        let (on_a, on_b) = if k < 6 { ("a", "b") } else { ("b", "a") };
        det.push((t, x, 0.2, on_a));
        det.push((t, x, 10.2, on_b));
    }
    let gt = local_set(&ctx, Source::GroundTruth, &gt);
    let det = local_set(&ctx, Source::Detection, &det);
    // Scores: (a,A)=6, (a,B)=4, (b,A)=4, (b,B)=6; the identity pairing wins 12 to 8.
    let assoc = association_match(&det, &gt, 0.0, 1.5, &ctx).unwrap();
    assert_eq!(assoc.tpa, 12);
    assert_eq!((assoc.fpa, assoc.fna), (8, 8));
    let mut pairs = assoc.trajectory_pairs.clone();
    pairs.sort();
    assert_eq!(pairs, vec![("a".into(), "A".into()), ("b".into(), "B".into())]);

    let r = compute_report(&det, &gt, 0.0, 1.5, Category::Vehicle, &ctx).unwrap();
    assert_eq!(r.ids, 2);
    assert!((r.mota_pct.unwrap() - 90.0).abs() < 1e-9);
    assert!((r.idf1_pct.unwrap() - 60.0).abs() < 1e-9);
}

#[test]
fn sweep_extremes() {
    let model = ErrorModel {
        noise_sigma_m: 0.5,
        det_rate_hz: 20.0,
        ..ErrorModel::default()
    };
    let (spec, gt, det) = paired_run(&model, 2, 46);
    let ctx = make_projection(spec.origin);
    let sweep = threshold_sweep(&det, &gt, 0.0, &[0.01, 0.5, 1.0, 1.5, 3.0, 6.0, 1000.0], Category::Vehicle, &ctx).unwrap();
    assert!(sweep.fp_rate_pct[0] > 99.0 && sweep.fn_rate_pct[0] > 99.0, "{sweep:?}");
    assert_eq!(*sweep.fp_rate_pct.last().unwrap(), 0.0);
    let positive: Vec<f64> = sweep.fp_rate_pct.iter().copied().take_while(|&r| r > 0.0).collect();
    assert!(positive.len() >= 4);
    assert!(positive.windows(2).all(|w| w[1] < w[0]), "{sweep:?}");

    let single = threshold_sweep(&det, &gt, 0.0, &[1.5], Category::Vehicle, &ctx).unwrap();
    let report = evaluate(&det, &gt, 0.0, Category::Vehicle, &ctx, &EvalOptions::default()).unwrap().report;
    assert_eq!(single.fp_rate_pct[0], report.fp_rate_pct.unwrap());
    assert_eq!(single.fn_rate_pct[0], report.fn_rate_pct.unwrap());
}

#[test]
fn frame_pairing_gaps_at_mixed_rates() {
    let ctx = make_projection(origin());
    let gt: Vec<(f64, f64, f64, &str)> = (0..500).map(|k| (k as f64 * 0.02, k as f64 * 0.2, 0.0, "a")).collect();
    let det: Vec<(f64, f64, f64, &str)> = (0..90).map(|k| (0.1 + k as f64 * 0.1, k as f64 * 2.0, 0.0, "a")).collect();
    let gt = local_set(&ctx, Source::GroundTruth, &gt);
    let det = local_set(&ctx, Source::Detection, &det);
    let alignment = match_frames_by_time(&det, &gt, 0.1, None).unwrap();
    assert_eq!(alignment.pairs.len(), 90);
    for pair in &alignment.pairs {
        let target = pair.det_time_s - 0.1;
        let nearest = gt
            .frames
            .iter()
            .map(|f| (f.timestamp_s - target).abs())
            .fold(f64::INFINITY, f64::min);
        let chosen = (gt.frames[pair.gt_frame.unwrap()].timestamp_s - target).abs();
        assert!(chosen <= 0.01 + 1e-6);
        assert!((chosen - nearest).abs() < 1e-9);
    }
}

#[test]
fn faster_runs_quarter_the_noise_term() {
    let model = ErrorModel {
        latency_mean_s: 0.1,
        noise_sigma_m: 0.1,
        ..ErrorModel::default()
    };
    let slow = monte_carlo_validate(&model, &route(5.0), 200, 1).unwrap();
    let fast = monte_carlo_validate(&model, &route(10.0), 200, 2).unwrap();
    let ratio = slow.empirical_var_tau / fast.empirical_var_tau;
    assert!((ratio - 4.0).abs() < 0.4, "{ratio}");
    assert!((slow.predicted_var_tau / fast.predicted_var_tau - 4.0).abs() < 1e-12);
}

#[test]
fn monte_carlo_matches_predictors() {
    let model = ErrorModel {
        latency_mean_s: 0.1,
        latency_std_s: 0.02,
        noise_sigma_m: 0.1,
        ..ErrorModel::default()
    };
    let c = monte_carlo_validate(&model, &route(10.0), 1000, 7).unwrap();
    assert!((c.empirical_var_tau - c.predicted_var_tau).abs() / c.predicted_var_tau < 0.1, "{c:?}");
    assert!((c.empirical_var_ed - c.predicted_var_ed).abs() / c.predicted_var_ed < 0.1, "{c:?}");
}
