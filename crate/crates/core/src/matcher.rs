//! Frame alignment, per-frame point matching, trajectory association and
//! ID-switch counting.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use serde::{Deserialize, Serialize};

use crate::assignment::{solve_assignment, CostMatrix};
use crate::error::{Error, Result};
use crate::geo::{LocalPoint, ProjectionContext};
use crate::trajectory::{DataFrame, DataPoint, TrajectorySet};

/// Default match distance (metres).
pub const DEFAULT_THRESHOLD_M: f64 = 1.5;

/// Detection-clock gaps wider than this many median intervals are filled with
/// empty frames, so that wholly missed frames still count their ground truth.
const CLOCK_GAP_FACTOR: f64 = 1.5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchPair {
    pub det_point: DataPoint,
    pub gt_point: DataPoint,
    pub distance_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameMatchResult {
    pub frame_time_s: f64,
    pub tp: Vec<MatchPair>,
    pub fp: Vec<DataPoint>,
    #[serde(rename = "fn")]
    pub fn_: Vec<DataPoint>,
    pub gt_count: usize,
}

impl FrameMatchResult {
    pub fn det_count(&self) -> usize {
        self.tp.len() + self.fp.len()
    }

    pub fn tp_distance_sum(&self) -> f64 {
        self.tp.iter().map(|m| m.distance_m).sum()
    }
}

/// One evaluated instant: a detection frame (or an empty stand-in) and the
/// ground-truth frame nearest its latency-compensated time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FramePair {
    /// Index into the detection frames; `None` for a frame the detector never emitted.
    pub det_frame: Option<usize>,
    pub det_time_s: f64,
    /// Index into the ground-truth frames; `None` when the detections are all false positives.
    pub gt_frame: Option<usize>,
    /// Signed offset of the chosen ground-truth frame from `det_time_s - latency`.
    pub gap_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameAlignment {
    pub pairs: Vec<FramePair>,
    /// Detection frames too far from any ground truth to evaluate.
    pub dropped: usize,
    pub max_gap_s: f64,
}

fn median_interval(times: &[f64]) -> Option<f64> {
    let mut d: Vec<f64> = times.windows(2).map(|w| w[1] - w[0]).collect();
    if d.is_empty() {
        return None;
    }
    d.sort_by(f64::total_cmp);
    let mid = d.len() / 2;
    Some(if d.len() % 2 == 1 { d[mid] } else { (d[mid - 1] + d[mid]) / 2.0 })
}

/// Detection clock with interior gaps filled by virtual (empty) frames.
fn detection_clock(det_times: &[f64], interval: Option<f64>) -> Vec<(Option<usize>, f64)> {
    let mut clock = Vec::with_capacity(det_times.len());
    for (i, &t) in det_times.iter().enumerate() {
        if let (Some(dt), Some(&prev)) = (interval, i.checked_sub(1).map(|p| &det_times[p])) {
            let gap = t - prev;
            if dt > 0.0 && gap > CLOCK_GAP_FACTOR * dt {
                let missing = (gap / dt).round() as usize;
                for k in 1..missing {
                    clock.push((None, prev + k as f64 * gap / missing as f64));
                }
            }
        }
        clock.push((Some(i), t));
    }
    clock
}

/// Pairs every detection frame with the ground-truth frame nearest to its
/// latency-compensated timestamp.
///
/// `max_gap_s` defaults to half the median detection interval. Frames whose
/// nearest ground truth lies within twice that gap but beyond it are kept as
/// all-false-positive frames; anything further is dropped.
pub fn match_frames_by_time(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    latency_s: f64,
    max_gap_s: Option<f64>,
) -> Result<FrameAlignment> {
    if gt.frames.is_empty() {
        return Err(Error::InvalidArgument("ground-truth set has no frames".into()));
    }
    if !latency_s.is_finite() {
        return Err(Error::InvalidArgument(format!("latency {latency_s} is not finite")));
    }
    let gt_times: Vec<f64> = gt.frames.iter().map(|f| f.timestamp_s).collect();
    let det_times: Vec<f64> = det.frames.iter().map(|f| f.timestamp_s).collect();
    let det_interval = median_interval(&det_times);

    let max_gap_s = match max_gap_s {
        Some(g) if g > 0.0 => g,
        Some(g) => {
            return Err(Error::InvalidArgument(format!("max gap must be positive, got {g}")));
        }
        None => det_interval
            .or_else(|| median_interval(&gt_times))
            .map_or(f64::INFINITY, |dt| 0.5 * dt),
    };

    let clock = if det_times.is_empty() {
        // No detections at all: evaluate every ground-truth frame as missed.
        gt_times.iter().map(|&t| (None, t + latency_s)).collect()
    } else {
        detection_clock(&det_times, det_interval)
    };

    let mut pairs = Vec::with_capacity(clock.len());
    let mut dropped = 0;
    for (det_frame, t) in clock {
        let target = t - latency_s;
        let hi = gt_times.partition_point(|&g| g < target);
        let nearest = match (hi.checked_sub(1), gt_times.get(hi)) {
            (Some(lo), Some(&g)) if target - gt_times[lo] <= g - target => lo,
            (_, Some(_)) => hi,
            (Some(lo), None) => lo,
            (None, None) => unreachable!("ground truth is non-empty"),
        };
        let gap_s = gt_times[nearest] - target;
        if gap_s.abs() <= max_gap_s {
            pairs.push(FramePair {
                det_frame,
                det_time_s: t,
                gt_frame: Some(nearest),
                gap_s,
            });
        } else if det_frame.is_some() && gap_s.abs() <= 2.0 * max_gap_s {
            pairs.push(FramePair {
                det_frame,
                det_time_s: t,
                gt_frame: None,
                gap_s,
            });
        } else if det_frame.is_some() {
            dropped += 1;
        }
    }
    Ok(FrameAlignment {
        pairs,
        dropped,
        max_gap_s,
    })
}

fn project_all(frame: &DataFrame, ctx: &ProjectionContext) -> Result<Vec<LocalPoint>> {
    frame.points.iter().map(|p| ctx.project(p.position)).collect()
}

/// Optimal one-to-one matching of a detection frame against a ground-truth frame.
///
/// Only pairs within `threshold_m` (and of one category, when gated) can
/// become true positives. Every other cell carries a sentinel cost larger
/// than the sum of all admissible distances, so the solver first maximises
/// the number of true positives and then minimises their total distance.
pub fn point_match(
    det_frame: &DataFrame,
    gt_frame: &DataFrame,
    threshold_m: f64,
    ctx: &ProjectionContext,
    same_category_only: bool,
) -> Result<FrameMatchResult> {
    if !(threshold_m > 0.0) {
        return Err(Error::InvalidArgument(format!("threshold must be positive, got {threshold_m}")));
    }
    let det_xy = project_all(det_frame, ctx)?;
    let gt_xy = project_all(gt_frame, ctx)?;
    let (n, m) = (det_xy.len(), gt_xy.len());

    let admissible = |i: usize, j: usize| -> Option<f64> {
        let d = det_xy[i].distance(gt_xy[j]);
        let same = det_frame.points[i].category == gt_frame.points[j].category;
        (d <= threshold_m && (same || !same_category_only)).then_some(d)
    };
    let mut dist = vec![None; n * m];
    let mut sentinel = 1.0;
    for i in 0..n {
        for j in 0..m {
            dist[i * m + j] = admissible(i, j);
            sentinel += dist[i * m + j].unwrap_or(0.0);
        }
    }

    let mut det_used = vec![false; n];
    let mut gt_used = vec![false; m];
    let mut tp = Vec::new();
    if dist.iter().any(Option::is_some) {
        let cost = CostMatrix::from_fn(n, m, |i, j| dist[i * m + j].unwrap_or(sentinel));
        for (i, j) in solve_assignment(&cost)?.pairs {
            if let Some(d) = dist[i * m + j] {
                det_used[i] = true;
                gt_used[j] = true;
                tp.push(MatchPair {
                    det_point: det_frame.points[i].clone(),
                    gt_point: gt_frame.points[j].clone(),
                    distance_m: d,
                });
            }
        }
    }
    let leftovers = |points: &[DataPoint], used: &[bool]| -> Vec<DataPoint> {
        points
            .iter()
            .zip(used)
            .filter(|(_, &u)| !u)
            .map(|(p, _)| p.clone())
            .collect()
    };
    Ok(FrameMatchResult {
        frame_time_s: det_frame.timestamp_s,
        fp: leftovers(&det_frame.points, &det_used),
        fn_: leftovers(&gt_frame.points, &gt_used),
        tp,
        gt_count: m,
    })
}

/// Point-matches every aligned frame pair.
pub fn match_aligned_frames(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    alignment: &FrameAlignment,
    threshold_m: f64,
    ctx: &ProjectionContext,
    same_category_only: bool,
) -> Result<Vec<FrameMatchResult>> {
    alignment
        .pairs
        .iter()
        .map(|pair| {
            let (det_frame, gt_frame) = frames_of(det, gt, pair);
            point_match(&det_frame, &gt_frame, threshold_m, ctx, same_category_only)
        })
        .collect()
}

fn frames_of(det: &TrajectorySet, gt: &TrajectorySet, pair: &FramePair) -> (DataFrame, DataFrame) {
    let empty = |t: f64| DataFrame {
        timestamp_s: t,
        points: Vec::new(),
    };
    let det_frame = pair.det_frame.map_or_else(|| empty(pair.det_time_s), |i| det.frames[i].clone());
    let gt_frame = pair
        .gt_frame
        .map_or_else(|| empty(pair.det_time_s), |i| gt.frames[i].clone());
    (det_frame, gt_frame)
}

/// Number of changes in the detection id matched to each ground-truth object,
/// scanned in time order over the frames where the object is a true positive.
pub fn count_id_switches(frame_results: &[FrameMatchResult]) -> usize {
    let mut last: HashMap<&str, &str> = HashMap::new();
    let mut switches = 0;
    for frame in frame_results {
        for m in &frame.tp {
            let gt_id = m.gt_point.object_id.as_str();
            let det_id = m.det_point.object_id.as_str();
            if let Some(prev) = last.insert(gt_id, det_id) {
                if prev != det_id {
                    switches += 1;
                }
            }
        }
    }
    switches
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssociationResult {
    /// `(detection id, ground-truth id)` pairs, sorted by ground-truth id.
    pub trajectory_pairs: Vec<(String, String)>,
    pub tpa: usize,
    pub fpa: usize,
    pub fna: usize,
}

/// Association matching over an existing frame alignment.
pub fn associate_aligned(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    alignment: &FrameAlignment,
    threshold_m: f64,
    ctx: &ProjectionContext,
    same_category_only: bool,
) -> Result<AssociationResult> {
    let mut counts: BTreeMap<(&str, &str), usize> = BTreeMap::new();
    let mut det_total = 0;
    let mut gt_total = 0;
    for pair in &alignment.pairs {
        let det_points: &[DataPoint] = pair.det_frame.map_or(&[], |i| &det.frames[i].points);
        let gt_points: &[DataPoint] = pair.gt_frame.map_or(&[], |i| &gt.frames[i].points);
        det_total += det_points.len();
        gt_total += gt_points.len();
        if det_points.is_empty() || gt_points.is_empty() {
            continue;
        }
        let det_xy = det_points.iter().map(|p| ctx.project(p.position)).collect::<Result<Vec<_>>>()?;
        let gt_xy = gt_points.iter().map(|p| ctx.project(p.position)).collect::<Result<Vec<_>>>()?;
        for (d, dp) in det_points.iter().zip(&det_xy) {
            for (g, gp) in gt_points.iter().zip(&gt_xy) {
                if same_category_only && d.category != g.category {
                    continue;
                }
                if dp.distance(*gp) <= threshold_m {
                    *counts.entry((g.object_id.as_str(), d.object_id.as_str())).or_default() += 1;
                }
            }
        }
    }

    let gt_ids: Vec<&str> = counts.keys().map(|k| k.0).collect::<BTreeSet<_>>().into_iter().collect();
    let det_ids: Vec<&str> = counts.keys().map(|k| k.1).collect::<BTreeSet<_>>().into_iter().collect();
    let cost = CostMatrix::from_fn(gt_ids.len(), det_ids.len(), |i, j| {
        -(counts.get(&(gt_ids[i], det_ids[j])).copied().unwrap_or(0) as f64)
    });
    let mut trajectory_pairs = Vec::new();
    let mut tpa = 0;
    for (i, j) in solve_assignment(&cost)?.pairs {
        let c = counts.get(&(gt_ids[i], det_ids[j])).copied().unwrap_or(0);
        if c > 0 {
            tpa += c;
            trajectory_pairs.push((det_ids[j].to_string(), gt_ids[i].to_string()));
        }
    }
    Ok(AssociationResult {
        trajectory_pairs,
        tpa,
        fpa: det_total - tpa,
        fna: gt_total - tpa,
    })
}

/// One-to-one trajectory association maximising the number of frames in which
/// each paired detection lies within `threshold_m` of its ground truth.
pub fn association_match(
    det: &TrajectorySet,
    gt: &TrajectorySet,
    latency_s: f64,
    threshold_m: f64,
    ctx: &ProjectionContext,
) -> Result<AssociationResult> {
    if gt.frames.is_empty() {
        return Ok(AssociationResult {
            trajectory_pairs: Vec::new(),
            tpa: 0,
            fpa: det.point_count(),
            fna: 0,
        });
    }
    let alignment = match_frames_by_time(det, gt, latency_s, None)?;
    associate_aligned(det, gt, &alignment, threshold_m, ctx, true)
}
