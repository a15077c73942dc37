//! Data points, frames, trajectories and trajectory sets.
//!
//! A [`TrajectorySet`] holds the same points twice: grouped by time into
//! [`DataFrame`]s and grouped by object id into [`Trajectory`]s.

use std::cmp::Ordering;
use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalPoint, ProjectionContext};

/// Default frame bin width: effectively exact timestamp matching.
pub const DEFAULT_FRAME_BIN_S: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    Vehicle,
    Pedestrian,
}

impl Category {
    pub const ALL: [Category; 2] = [Category::Vehicle, Category::Pedestrian];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Vehicle => "vehicle",
            Category::Pedestrian => "pedestrian",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Category {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let token = s.trim();
        if token.eq_ignore_ascii_case("vehicle") {
            Ok(Category::Vehicle)
        } else if token.eq_ignore_ascii_case("pedestrian") {
            Ok(Category::Pedestrian)
        } else {
            Err(Error::InvalidArgument(format!("unknown category {token:?}")))
        }
    }
}

/// Which stream a set of points came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    Detection,
    GroundTruth,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Detection => "detection",
            Source::GroundTruth => "ground_truth",
        })
    }
}

/// One measured object at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataPoint {
    pub timestamp_s: f64,
    pub position: GeoPoint,
    pub category: Category,
    pub object_id: String,
}

impl DataPoint {
    pub fn new(
        timestamp_s: f64,
        position: GeoPoint,
        category: Category,
        object_id: impl Into<String>,
    ) -> Result<Self> {
        let object_id = object_id.into();
        if !timestamp_s.is_finite() || timestamp_s <= 0.0 {
            return Err(Error::InvalidArgument(format!(
                "timestamp {timestamp_s} must be finite and positive"
            )));
        }
        if object_id.is_empty() {
            return Err(Error::InvalidArgument("object id must not be empty".into()));
        }
        Ok(Self {
            timestamp_s,
            position,
            category,
            object_id,
        })
    }

    /// Total order used to make set construction independent of input order.
    fn canonical_cmp(&self, other: &Self) -> Ordering {
        self.timestamp_s
            .total_cmp(&other.timestamp_s)
            .then_with(|| self.object_id.cmp(&other.object_id))
            .then_with(|| self.position.lat_deg.total_cmp(&other.position.lat_deg))
            .then_with(|| self.position.lon_deg.total_cmp(&other.position.lon_deg))
            .then_with(|| self.category.cmp(&other.category))
    }
}

/// All points reported at (approximately) one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFrame {
    pub timestamp_s: f64,
    pub points: Vec<DataPoint>,
}

impl DataFrame {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Time-ordered points of one object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub object_id: String,
    pub category: Category,
    pub points: Vec<DataPoint>,
}

impl Trajectory {
    /// Builds a trajectory, checking id consistency and strict time order.
    pub fn new(points: Vec<DataPoint>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::Integrity("trajectory needs at least one point".into()))?;
        let object_id = first.object_id.clone();
        let category = first.category;
        for w in points.windows(2) {
            if w[1].timestamp_s <= w[0].timestamp_s {
                return Err(Error::Integrity(format!(
                    "trajectory {object_id}: timestamps not strictly increasing at {}",
                    w[1].timestamp_s
                )));
            }
        }
        for p in &points {
            if p.object_id != object_id {
                return Err(Error::Integrity(format!(
                    "trajectory {object_id} contains point of {}",
                    p.object_id
                )));
            }
            if p.category != category {
                return Err(Error::Integrity(format!(
                    "object {object_id} reported as both {category} and {} (t = {})",
                    p.category, p.timestamp_s
                )));
            }
        }
        Ok(Self {
            object_id,
            category,
            points,
        })
    }

    pub fn start_s(&self) -> f64 {
        self.points[0].timestamp_s
    }

    pub fn end_s(&self) -> f64 {
        self.points[self.points.len() - 1].timestamp_s
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    pub frames: Vec<DataFrame>,
    pub trajectories: Vec<Trajectory>,
    pub source: Source,
}

impl TrajectorySet {
    pub fn empty(source: Source) -> Self {
        Self {
            frames: Vec::new(),
            trajectories: Vec::new(),
            source,
        }
    }

    /// Number of points (counted through the trajectories).
    pub fn point_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.point_count() == 0
    }

    /// All points in canonical (time, id) order.
    pub fn points(&self) -> impl Iterator<Item = &DataPoint> {
        self.frames.iter().flat_map(|f| f.points.iter())
    }

    pub fn trajectory(&self, object_id: &str) -> Option<&Trajectory> {
        self.trajectories
            .binary_search_by(|t| t.object_id.as_str().cmp(object_id))
            .ok()
            .map(|i| &self.trajectories[i])
    }

    /// Keeps only points of `category`. Frames are kept even when they end up
    /// empty so the frame clock of the stream is preserved.
    pub fn filter_category(&self, category: Category) -> TrajectorySet {
        TrajectorySet {
            frames: self
                .frames
                .iter()
                .map(|f| DataFrame {
                    timestamp_s: f.timestamp_s,
                    points: f
                        .points
                        .iter()
                        .filter(|p| p.category == category)
                        .cloned()
                        .collect(),
                })
                .collect(),
            trajectories: self
                .trajectories
                .iter()
                .filter(|t| t.category == category)
                .cloned()
                .collect(),
            source: self.source,
        }
    }

    pub fn categories(&self) -> Vec<Category> {
        let mut cats: Vec<Category> = self.trajectories.iter().map(|t| t.category).collect();
        cats.sort();
        cats.dedup();
        cats
    }
}

/// Groups points into frames (by timestamp bin) and trajectories (by id).
///
/// Points whose timestamps round to the same multiple of `frame_bin_s` share
/// a frame; the frame carries the earliest member timestamp. The result does
/// not depend on the order of `points`.
pub fn build_trajectory_set(
    points: Vec<DataPoint>,
    frame_bin_s: f64,
    source: Source,
) -> Result<TrajectorySet> {
    if !(frame_bin_s > 0.0) || !frame_bin_s.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "frame bin width must be positive, got {frame_bin_s}"
        )));
    }
    let mut points = points;
    points.sort_by(DataPoint::canonical_cmp);

    let mut seen: HashSet<(i64, &str)> = HashSet::with_capacity(points.len());
    let mut bins: Vec<i64> = Vec::with_capacity(points.len());
    for p in &points {
        let bin = (p.timestamp_s / frame_bin_s).round() as i64;
        if !seen.insert((bin, p.object_id.as_str())) {
            return Err(Error::Integrity(format!(
                "object {} appears twice in the frame at t = {} s",
                p.object_id, p.timestamp_s
            )));
        }
        bins.push(bin);
    }
    drop(seen);

    let mut frames: Vec<DataFrame> = Vec::new();
    let mut last_bin = None;
    let mut by_id: BTreeMap<String, Vec<DataPoint>> = BTreeMap::new();
    for (p, bin) in points.into_iter().zip(bins) {
        by_id.entry(p.object_id.clone()).or_default().push(p.clone());
        if last_bin == Some(bin) {
            frames.last_mut().expect("frame exists").points.push(p);
        } else {
            frames.push(DataFrame {
                timestamp_s: p.timestamp_s,
                points: vec![p],
            });
            last_bin = Some(bin);
        }
    }
    for f in &mut frames {
        f.points.sort_by(|a, b| a.object_id.cmp(&b.object_id));
    }

    let trajectories = by_id
        .into_values()
        .map(Trajectory::new)
        .collect::<Result<Vec<_>>>()?;

    Ok(TrajectorySet {
        frames,
        trajectories,
        source,
    })
}

/// Position of `traj` at time `t`, linearly interpolated in the local plane.
pub fn interpolate_position(traj: &Trajectory, t: f64, ctx: &ProjectionContext) -> Result<LocalPoint> {
    let (start, end) = (traj.start_s(), traj.end_s());
    if !(t >= start && t <= end) {
        return Err(Error::Extrapolation { t, start, end });
    }
    let pts = &traj.points;
    let hi = pts.partition_point(|p| p.timestamp_s < t);
    if pts[hi].timestamp_s == t {
        return ctx.project(pts[hi].position);
    }
    let (a, b) = (&pts[hi - 1], &pts[hi]);
    let w = (t - a.timestamp_s) / (b.timestamp_s - a.timestamp_s);
    Ok(ctx.project(a.position)?.lerp(ctx.project(b.position)?, w))
}

/// A trajectory projected once into the local plane, for repeated queries.
#[derive(Debug, Clone)]
pub struct LocalTrack {
    pub object_id: String,
    pub category: Category,
    times: Vec<f64>,
    positions: Vec<LocalPoint>,
}

impl LocalTrack {
    pub fn new(traj: &Trajectory, ctx: &ProjectionContext) -> Result<Self> {
        let positions = traj
            .points
            .iter()
            .map(|p| ctx.project(p.position))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            object_id: traj.object_id.clone(),
            category: traj.category,
            times: traj.points.iter().map(|p| p.timestamp_s).collect(),
            positions,
        })
    }

    /// Builds a track directly from local samples; times must be strictly increasing.
    pub fn from_samples(
        object_id: impl Into<String>,
        category: Category,
        times: Vec<f64>,
        positions: Vec<LocalPoint>,
    ) -> Result<Self> {
        if times.is_empty() || times.len() != positions.len() {
            return Err(Error::InvalidArgument(
                "track needs matching, non-empty time and position lists".into(),
            ));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Integrity("track times must be strictly increasing".into()));
        }
        Ok(Self {
            object_id: object_id.into(),
            category,
            times,
            positions,
        })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[LocalPoint] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn start_s(&self) -> f64 {
        self.times[0]
    }

    pub fn end_s(&self) -> f64 {
        self.times[self.times.len() - 1]
    }

    pub fn contains_time(&self, t: f64) -> bool {
        t >= self.start_s() && t <= self.end_s()
    }

    /// Index `i` of the segment `[i, i + 1]` containing `t` (clamped to the ends).
    fn segment(&self, t: f64) -> usize {
        let hi = self.times.partition_point(|&x| x <= t);
        hi.saturating_sub(1).min(self.times.len().saturating_sub(2))
    }

    pub fn position_at(&self, t: f64) -> Result<LocalPoint> {
        if !self.contains_time(t) {
            return Err(Error::Extrapolation {
                t,
                start: self.start_s(),
                end: self.end_s(),
            });
        }
        if self.times.len() == 1 {
            return Ok(self.positions[0]);
        }
        let i = self.segment(t);
        let w = (t - self.times[i]) / (self.times[i + 1] - self.times[i]);
        Ok(self.positions[i].lerp(self.positions[i + 1], w))
    }

    fn segment_velocity(&self, i: usize) -> LocalPoint {
        (self.positions[i + 1] - self.positions[i]) * (1.0 / (self.times[i + 1] - self.times[i]))
    }

    /// Velocity of the segment containing `t` (zero for single-point tracks).
    pub fn velocity_at(&self, t: f64) -> LocalPoint {
        if self.times.len() < 2 {
            return LocalPoint::ORIGIN;
        }
        self.segment_velocity(self.segment(t))
    }

    /// Unit heading at `t`: the direction of the segment containing `t`, or of
    /// the most recent moving segment when the object is at rest.
    pub fn heading_at(&self, t: f64) -> Option<LocalPoint> {
        if self.times.len() < 2 {
            return None;
        }
        let seg = self.segment(t);
        (0..=seg)
            .rev()
            .find_map(|i| self.segment_velocity(i).normalized())
            .or_else(|| (seg + 1..self.times.len() - 1).find_map(|i| self.segment_velocity(i).normalized()))
    }
}
