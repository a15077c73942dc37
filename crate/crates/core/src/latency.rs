//! Latency and positioning-error estimation from constant-speed runs.
//!
//! A test vehicle drives back and forth along a straight route. Along the
//! route a detection reported at `t2` sits where the ground truth was at some
//! earlier `t1`, and `tau = t2 - t1` mixes the latency with the detector's
//! static offset divided by the speed. The offset term flips sign with the
//! travel direction, so averaging the per-direction means of `tau` cancels it
//! and leaves the expected latency.
//!
//! Once the latency is known, `D(t) - G(t - latency)` is an unbiased estimate
//! of the static positional offset.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{LocalPoint, ProjectionContext};
use crate::trajectory::{LocalTrack, Trajectory};

/// Speed tolerance used to find constant-speed passes in ground truth.
pub const DEFAULT_SPEED_TOL_FRAC: f64 = 0.1;

/// Test points placed in each constant-speed window unless configured otherwise.
pub const DEFAULT_TEST_POINTS: usize = 11;

/// Minimum residual count accepted by [`estimate_position_error`].
pub const MIN_POSITION_SAMPLES: usize = 10;

/// Slack on the window bounds so samples exactly on a boundary count as inside.
const WINDOW_SLACK_M: f64 = 1e-6;

/// Travel direction along a [`RouteLine`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Forward,
    Reverse,
}

impl Direction {
    pub fn sign(self) -> f64 {
        match self {
            Direction::Forward => 1.0,
            Direction::Reverse => -1.0,
        }
    }

    fn of(speed: f64) -> Direction {
        if speed >= 0.0 {
            Direction::Forward
        } else {
            Direction::Reverse
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Direction::Forward => "forward",
            Direction::Reverse => "reverse",
        })
    }
}

/// Straight route of a latency run, parameterised by signed arc length from `anchor`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RouteLine {
    pub anchor: LocalPoint,
    /// Unit vector of the forward direction.
    pub direction: LocalPoint,
    pub window_start_m: f64,
    pub window_end_m: f64,
    pub nominal_speed_mps: f64,
}

impl RouteLine {
    /// Builds a route; `direction` is normalised.
    pub fn new(
        anchor: LocalPoint,
        direction: LocalPoint,
        window_start_m: f64,
        window_end_m: f64,
        nominal_speed_mps: f64,
    ) -> Result<Self> {
        let direction = direction
            .normalized()
            .ok_or_else(|| Error::InvalidArgument("route direction must be non-zero".into()))?;
        if !(window_start_m < window_end_m) || !window_start_m.is_finite() || !window_end_m.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "window start {window_start_m} must be below window end {window_end_m}"
            )));
        }
        if !(nominal_speed_mps > 0.0) || !nominal_speed_mps.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "nominal speed must be positive, got {nominal_speed_mps}"
            )));
        }
        Ok(Self {
            anchor,
            direction,
            window_start_m,
            window_end_m,
            nominal_speed_mps,
        })
    }

    /// Route along a compass heading (degrees clockwise from north).
    pub fn from_heading(
        anchor: LocalPoint,
        heading_deg: f64,
        window_start_m: f64,
        window_end_m: f64,
        nominal_speed_mps: f64,
    ) -> Result<Self> {
        let h = heading_deg.to_radians();
        Self::new(
            anchor,
            LocalPoint::new(h.sin(), h.cos()),
            window_start_m,
            window_end_m,
            nominal_speed_mps,
        )
    }

    pub fn arc_length(&self, p: LocalPoint) -> f64 {
        (p - self.anchor).dot(self.direction)
    }

    pub fn point_at(&self, arc_length_m: f64) -> LocalPoint {
        self.anchor + self.direction * arc_length_m
    }

    pub fn window_length_m(&self) -> f64 {
        self.window_end_m - self.window_start_m
    }

    fn in_window(&self, s: f64) -> bool {
        s >= self.window_start_m - WINDOW_SLACK_M && s <= self.window_end_m + WINDOW_SLACK_M
    }

    /// `count` evenly spaced test points, centred in equal sub-intervals of the window.
    pub fn test_points(&self, count: usize) -> Vec<f64> {
        let step = self.window_length_m() / count as f64;
        (0..count)
            .map(|k| self.window_start_m + (k as f64 + 0.5) * step)
            .collect()
    }
}

/// A time interval in which a trajectory holds the nominal speed inside the window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpeedWindow {
    pub start_s: f64,
    pub end_s: f64,
    pub direction: Direction,
    /// Sample indices bounding the interval (inclusive).
    pub first_index: usize,
    pub last_index: usize,
}

impl SpeedWindow {
    pub fn duration_s(&self) -> f64 {
        self.end_s - self.start_s
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.start_s && t <= self.end_s
    }
}

/// All maximal constant-speed intervals of `track` on `route`, in time order.
pub fn constant_speed_windows(track: &LocalTrack, route: &RouteLine, speed_tol_frac: f64) -> Vec<SpeedWindow> {
    let times = track.times();
    let arc: Vec<f64> = track.positions().iter().map(|&p| route.arc_length(p)).collect();
    let v0 = route.nominal_speed_mps;

    let mut windows = Vec::new();
    let mut open: Option<SpeedWindow> = None;
    for i in 0..times.len().saturating_sub(1) {
        let speed = (arc[i + 1] - arc[i]) / (times[i + 1] - times[i]);
        let ok = (speed.abs() - v0).abs() <= speed_tol_frac * v0
            && route.in_window(arc[i])
            && route.in_window(arc[i + 1]);
        let dir = Direction::of(speed);
        match (&mut open, ok) {
            (Some(w), true) if w.direction == dir => {
                w.end_s = times[i + 1];
                w.last_index = i + 1;
            }
            (_, true) => {
                if let Some(w) = open.take() {
                    windows.push(w);
                }
                open = Some(SpeedWindow {
                    start_s: times[i],
                    end_s: times[i + 1],
                    direction: dir,
                    first_index: i,
                    last_index: i + 1,
                });
            }
            (_, false) => {
                if let Some(w) = open.take() {
                    windows.push(w);
                }
            }
        }
    }
    if let Some(w) = open {
        windows.push(w);
    }
    windows
}

/// The longest constant-speed interval of `traj` (earliest on ties).
pub fn extract_constant_speed_window(
    traj: &Trajectory,
    route: &RouteLine,
    speed_tol_frac: f64,
    ctx: &ProjectionContext,
) -> Result<SpeedWindow> {
    if !(speed_tol_frac > 0.0 && speed_tol_frac <= 0.5) {
        return Err(Error::InvalidArgument(format!(
            "speed tolerance must lie in (0, 0.5], got {speed_tol_frac}"
        )));
    }
    let track = LocalTrack::new(traj, ctx)?;
    constant_speed_windows(&track, route, speed_tol_frac)
        .into_iter()
        .fold(None::<SpeedWindow>, |best, w| match best {
            Some(b) if b.duration_s() >= w.duration_s() => Some(b),
            _ => Some(w),
        })
        .ok_or_else(|| {
            Error::Extraction(format!(
                "trajectory {} never holds {} m/s ± {:.0}% inside the window",
                traj.object_id,
                route.nominal_speed_mps,
                speed_tol_frac * 100.0
            ))
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauSample {
    pub test_point_m: f64,
    /// Time at which the ground truth occupied the detected position.
    pub t1_s: f64,
    /// Timestamp of the detection.
    pub t2_s: f64,
    pub tau_s: f64,
    pub direction: Direction,
}

impl TauSample {
    pub fn new(test_point_m: f64, t1_s: f64, t2_s: f64, direction: Direction) -> Self {
        Self {
            test_point_m,
            t1_s,
            t2_s,
            tau_s: t2_s - t1_s,
            direction,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedTestPoint {
    pub test_point_m: f64,
    pub pass_index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TauSampling {
    pub samples: Vec<TauSample>,
    pub skipped: Vec<SkippedTestPoint>,
}

/// Time at which the monotone stretch `arc[lo..=hi]` reaches `level`.
fn crossing_time(times: &[f64], arc: &[f64], lo: usize, hi: usize, level: f64, dir: Direction) -> Option<f64> {
    let seg = &arc[lo..=hi];
    let idx = match dir {
        Direction::Forward => seg.partition_point(|&s| s < level),
        Direction::Reverse => seg.partition_point(|&s| s > level),
    };
    if idx == seg.len() {
        return None;
    }
    if idx == 0 {
        return (seg[0] == level).then_some(times[lo]);
    }
    let (a, b) = (lo + idx - 1, lo + idx);
    let w = (level - arc[a]) / (arc[b] - arc[a]);
    Some(times[a] + (times[b] - times[a]) * w)
}

/// Widest index range around `w` over which the arc length keeps moving in the
/// window's direction, so detections just outside the window can still be inverted.
fn monotone_span(arc: &[f64], w: &SpeedWindow) -> (usize, usize) {
    let sign = w.direction.sign();
    let mut lo = w.first_index;
    while lo > 0 && (arc[lo] - arc[lo - 1]) * sign > 0.0 {
        lo -= 1;
    }
    let mut hi = w.last_index;
    while hi + 1 < arc.len() && (arc[hi + 1] - arc[hi]) * sign > 0.0 {
        hi += 1;
    }
    (lo, hi)
}

/// Samples `tau` at each test point of every constant-speed pass of `gt`.
///
/// For each pass and test point, the ground-truth crossing time of the test
/// point selects the detection sample nearest in time. That sample's
/// timestamp is `t2`; `t1` is the time the ground truth occupied the
/// detection's along-route position during the same pass (including its
/// acceleration and deceleration stretches). The selection
/// depends only on timestamps, so each sample carries the full noise of a
/// single detection.
pub fn sample_tau(
    gt: &Trajectory,
    det: &Trajectory,
    route: &RouteLine,
    test_points_m: &[f64],
    ctx: &ProjectionContext,
) -> Result<TauSampling> {
    let gt_track = LocalTrack::new(gt, ctx)?;
    let det_track = LocalTrack::new(det, ctx)?;
    sample_tau_tracks(&gt_track, &det_track, route, test_points_m, DEFAULT_SPEED_TOL_FRAC)
}

/// [`sample_tau`] on pre-projected tracks with an explicit speed tolerance.
pub fn sample_tau_tracks(
    gt: &LocalTrack,
    det: &LocalTrack,
    route: &RouteLine,
    test_points_m: &[f64],
    speed_tol_frac: f64,
) -> Result<TauSampling> {
    let gt_times = gt.times();
    let gt_arc: Vec<f64> = gt.positions().iter().map(|&p| route.arc_length(p)).collect();
    let det_times = det.times();
    let det_arc: Vec<f64> = det.positions().iter().map(|&p| route.arc_length(p)).collect();

    let mut samples = Vec::new();
    let mut skipped = Vec::new();
    let mut used: HashSet<usize> = HashSet::new();

    for (pass_index, w) in constant_speed_windows(gt, route, speed_tol_frac).iter().enumerate() {
        let (lo, hi) = monotone_span(&gt_arc, w);
        for &x in test_points_m {
            let mut skip = |reason: &str| {
                skipped.push(SkippedTestPoint {
                    test_point_m: x,
                    pass_index,
                    reason: reason.to_string(),
                })
            };
            let Some(t_cross) = crossing_time(gt_times, &gt_arc, w.first_index, w.last_index, x, w.direction) else {
                skip("not crossed by ground truth");
                continue;
            };
            let k = det_times.partition_point(|&t| t < t_cross);
            let k = match (k.checked_sub(1), det_times.get(k)) {
                (Some(prev), Some(&next)) if t_cross - det_times[prev] <= next - t_cross => prev,
                (_, Some(_)) => k,
                (Some(prev), None) => prev,
                (None, None) => {
                    skip("no detection samples");
                    continue;
                }
            };
            if !used.insert(k) {
                skip("nearest detection sample already used");
                continue;
            }
            let Some(t1) = crossing_time(gt_times, &gt_arc, lo, hi, det_arc[k], w.direction) else {
                skip("detection position outside the pass");
                continue;
            };
            samples.push(TauSample::new(x, t1, det_times[k], w.direction));
        }
    }

    if samples.is_empty() {
        return Err(Error::NoSamples(format!(
            "no test point produced a tau sample ({} skipped)",
            skipped.len()
        )));
    }
    Ok(TauSampling { samples, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DirectionStats {
    pub mean_s: f64,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LatencyEstimate {
    /// Expected latency: the average of the two per-direction means.
    pub mean_s: f64,
    /// Sample standard deviation of all tau samples.
    pub std_s: f64,
    pub n_samples: usize,
    pub per_direction: BTreeMap<Direction, DirectionStats>,
}

impl LatencyEstimate {
    /// Plain mean of all tau samples (not offset-corrected).
    fn raw_mean(&self) -> f64 {
        self.per_direction
            .values()
            .map(|d| d.mean_s * d.n_samples as f64)
            .sum::<f64>()
            / self.n_samples as f64
    }
}

/// Latency from paired-direction tau samples.
pub fn estimate_latency(samples: &[TauSample]) -> Result<LatencyEstimate> {
    let mut per_direction = BTreeMap::new();
    for dir in [Direction::Forward, Direction::Reverse] {
        let taus: Vec<f64> = samples.iter().filter(|s| s.direction == dir).map(|s| s.tau_s).collect();
        if taus.is_empty() {
            return Err(Error::Pairing(format!(
                "no {dir} samples; runs must be driven in both directions"
            )));
        }
        per_direction.insert(
            dir,
            DirectionStats {
                mean_s: taus.iter().sum::<f64>() / taus.len() as f64,
                n_samples: taus.len(),
            },
        );
    }
    let n = samples.len();
    let mean_all = samples.iter().map(|s| s.tau_s).sum::<f64>() / n as f64;
    let ss: f64 = samples.iter().map(|s| (s.tau_s - mean_all).powi(2)).sum();
    let mean_s = (per_direction[&Direction::Forward].mean_s + per_direction[&Direction::Reverse].mean_s) / 2.0;
    Ok(LatencyEstimate {
        mean_s,
        std_s: (ss / (n - 1) as f64).sqrt(),
        n_samples: n,
        per_direction,
    })
}

/// Sample-count-weighted combination of several trials.
pub fn combine_trials(estimates: &[LatencyEstimate]) -> Result<LatencyEstimate> {
    match estimates {
        [] => return Err(Error::InvalidArgument("no latency estimates to combine".into())),
        [only] => return Ok(only.clone()),
        _ => {}
    }
    let total: usize = estimates.iter().map(|e| e.n_samples).sum();
    let weight = |e: &LatencyEstimate| e.n_samples as f64 / total as f64;
    let mean_s = estimates.iter().map(|e| weight(e) * e.mean_s).sum();

    let mut per_direction = BTreeMap::new();
    for dir in [Direction::Forward, Direction::Reverse] {
        let n: usize = estimates
            .iter()
            .filter_map(|e| e.per_direction.get(&dir))
            .map(|d| d.n_samples)
            .sum();
        if n > 0 {
            let mean = estimates
                .iter()
                .filter_map(|e| e.per_direction.get(&dir))
                .map(|d| d.mean_s * d.n_samples as f64)
                .sum::<f64>()
                / n as f64;
            per_direction.insert(dir, DirectionStats { mean_s: mean, n_samples: n });
        }
    }

    // Pooled spread: within-trial sums of squares plus between-trial spread of raw means.
    let grand = estimates.iter().map(|e| weight(e) * e.raw_mean()).sum::<f64>();
    let ss: f64 = estimates
        .iter()
        .map(|e| {
            (e.n_samples as f64 - 1.0) * e.std_s.powi(2) + e.n_samples as f64 * (e.raw_mean() - grand).powi(2)
        })
        .sum();
    Ok(LatencyEstimate {
        mean_s,
        std_s: (ss / (total as f64 - 1.0)).sqrt(),
        n_samples: total,
        per_direction,
    })
}

/// Milliseconds rounded to a whole number, halves away from zero.
///
/// The value is first snapped to a nanosecond grid so that binary
/// representation error cannot flip a half (0.0475 s renders as 48).
pub fn format_ms(seconds: f64) -> String {
    let ms = (seconds * 1e6).round() / 1e3;
    format!("{:.0}", ms.round())
}

/// One detection's displacement from the latency-compensated ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Residual {
    pub timestamp_s: f64,
    pub offset: LocalPoint,
    /// Components along and left of the ground-truth travel direction;
    /// absent while the ground truth is stationary.
    pub along_m: Option<f64>,
    pub cross_m: Option<f64>,
}

/// Residuals `D(t) - G(t - latency_s)` for every detection whose compensated
/// time falls inside the ground-truth span.
pub fn position_residuals(det: &LocalTrack, gt: &LocalTrack, latency_s: f64) -> Vec<Residual> {
    det.times()
        .iter()
        .zip(det.positions())
        .filter_map(|(&t, &d)| {
            let q = t - latency_s;
            let g = gt.position_at(q).ok()?;
            let offset = d - g;
            let heading = gt.velocity_at(q).normalized();
            Some(Residual {
                timestamp_s: t,
                offset,
                along_m: heading.map(|u| offset.dot(u)),
                cross_m: heading.map(|u| offset.dot(u.perp())),
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TravelFrameStats {
    pub n_samples: usize,
    pub mean_along_m: f64,
    pub mean_cross_m: f64,
    /// RMS of the along-track component after mean removal.
    pub along_rms_m: f64,
    pub cross_rms_m: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositionErrorEstimate {
    /// Mean residual in the local plane: the static offset estimate.
    pub mean_offset_m: LocalPoint,
    /// RMS residual magnitude after mean removal.
    pub residual_rms_m: f64,
    pub n_samples: usize,
    /// Statistics in the ground truth's travel frame (moving samples only).
    pub travel_frame: Option<TravelFrameStats>,
}

fn mean_and_rms(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let ms = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    (mean, ms.sqrt())
}

pub fn summarize_residuals(residuals: &[Residual]) -> Result<PositionErrorEstimate> {
    if residuals.len() < MIN_POSITION_SAMPLES {
        return Err(Error::InsufficientData(format!(
            "{} usable detections, need at least {MIN_POSITION_SAMPLES}",
            residuals.len()
        )));
    }
    let xs: Vec<f64> = residuals.iter().map(|r| r.offset.x_m).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.offset.y_m).collect();
    let (mx, rx) = mean_and_rms(&xs);
    let (my, ry) = mean_and_rms(&ys);

    let along: Vec<f64> = residuals.iter().filter_map(|r| r.along_m).collect();
    let cross: Vec<f64> = residuals.iter().filter_map(|r| r.cross_m).collect();
    let travel_frame = (!along.is_empty()).then(|| {
        let (ma, ra) = mean_and_rms(&along);
        let (mc, rc) = mean_and_rms(&cross);
        TravelFrameStats {
            n_samples: along.len(),
            mean_along_m: ma,
            mean_cross_m: mc,
            along_rms_m: ra,
            cross_rms_m: rc,
        }
    });
    Ok(PositionErrorEstimate {
        mean_offset_m: LocalPoint::new(mx, my),
        residual_rms_m: rx.hypot(ry),
        n_samples: residuals.len(),
        travel_frame,
    })
}

/// Static offset and residual spread of `det` against `gt` compensated by the
/// expected latency.
pub fn estimate_position_error(
    det: &Trajectory,
    gt: &Trajectory,
    latency: &LatencyEstimate,
    ctx: &ProjectionContext,
) -> Result<PositionErrorEstimate> {
    let det = LocalTrack::new(det, ctx)?;
    let gt = LocalTrack::new(gt, ctx)?;
    summarize_residuals(&position_residuals(&det, &gt, latency.mean_s))
}

fn check_variance_inputs(var_l_s2: f64, var_e2_m2: f64, v0_mps: f64) -> Result<()> {
    if !(var_l_s2 >= 0.0) || !(var_e2_m2 >= 0.0) || !var_l_s2.is_finite() || !var_e2_m2.is_finite() {
        return Err(Error::Domain(format!(
            "variances must be finite and non-negative (got {var_l_s2}, {var_e2_m2})"
        )));
    }
    if !(v0_mps > 0.0) || !v0_mps.is_finite() {
        return Err(Error::Domain(format!("speed must be positive, got {v0_mps}")));
    }
    Ok(())
}

/// Predicted variance of tau: `Var(l) + Var(e2) / v0²`.
pub fn predict_tau_variance(var_l_s2: f64, var_e2_m2: f64, v0_mps: f64) -> Result<f64> {
    check_variance_inputs(var_l_s2, var_e2_m2, v0_mps)?;
    Ok(var_l_s2 + var_e2_m2 / (v0_mps * v0_mps))
}

/// Predicted along-track variance of the position-error estimator:
/// `Var(e2) + v0² Var(l)`.
pub fn predict_position_error_variance(var_l_s2: f64, var_e2_m2: f64, v0_mps: f64) -> Result<f64> {
    check_variance_inputs(var_l_s2, var_e2_m2, v0_mps)?;
    Ok(var_e2_m2 + v0_mps * v0_mps * var_l_s2)
}
