//! Turning ground truth into detections: `D(t) = G(t - l) + e1 + e2`, plus
//! misses, clutter and identity swaps.

use std::collections::HashSet;

use rand::Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::{rng_from_seed, ErrorModel};
use crate::error::{Error, Result};
use crate::geo::{LocalPoint, ProjectionContext};
use crate::trajectory::{
    build_trajectory_set, Category, DataPoint, LocalTrack, Source, TrajectorySet, DEFAULT_FRAME_BIN_S,
};

/// Margin around the ground-truth bounding box in which clutter is placed.
const CLUTTER_MARGIN_M: f64 = 5.0;

#[derive(Debug, Clone, PartialEq)]
pub struct DetectedPoint {
    pub timestamp_s: f64,
    pub object_id: String,
    pub category: Category,
    pub position: LocalPoint,
}

fn normal(sigma: f64) -> Result<Option<Normal<f64>>> {
    if sigma > 0.0 {
        Normal::new(0.0, sigma)
            .map(Some)
            .map_err(|e| Error::InvalidArgument(e.to_string()))
    } else {
        Ok(None)
    }
}

/// Degrades local ground-truth tracks.
///
/// The detector runs on its own clock at `det_rate_hz`, starting with the
/// earliest ground truth. Each frame draws one latency from a normal
/// truncated at zero and reports every actor present at `t - l`.
pub fn degrade_tracks(tracks: &[LocalTrack], model: &ErrorModel, seed: u64) -> Result<Vec<DetectedPoint>> {
    model.validate()?;
    if tracks.is_empty() {
        return Ok(Vec::new());
    }
    let mut rng = rng_from_seed(seed);
    let latency_jitter = normal(model.latency_std_s)?;
    let noise = normal(model.noise_sigma_m)?;
    let clutter = if model.clutter_rate > 0.0 {
        Some(Poisson::new(model.clutter_rate).map_err(|e| Error::InvalidArgument(e.to_string()))?)
    } else {
        None
    };

    let t_start = tracks.iter().map(LocalTrack::start_s).fold(f64::INFINITY, f64::min);
    let t_end = tracks.iter().map(LocalTrack::end_s).fold(f64::NEG_INFINITY, f64::max);
    let frames = ((t_end + model.latency_mean_s - t_start) * model.det_rate_hz + 1e-9).floor() as usize;

    let (mut lo, mut hi) = (LocalPoint::new(f64::INFINITY, f64::INFINITY), LocalPoint::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for p in tracks.iter().flat_map(|t| t.positions()) {
        lo = LocalPoint::new(lo.x_m.min(p.x_m), lo.y_m.min(p.y_m));
        hi = LocalPoint::new(hi.x_m.max(p.x_m), hi.y_m.max(p.y_m));
    }
    let mut categories: Vec<Category> = tracks.iter().map(|t| t.category).collect();
    categories.sort();
    categories.dedup();
    let actor_ids: HashSet<&str> = tracks.iter().map(|t| t.object_id.as_str()).collect();
    let mut next_clutter = 1usize;

    // reported[i]: index of the track whose id actor i is reported under.
    let mut reported: Vec<usize> = (0..tracks.len()).collect();
    let mut out = Vec::new();
    let mut present = Vec::with_capacity(tracks.len());

    for k in 0..=frames {
        let t = t_start + k as f64 / model.det_rate_hz;
        let latency = match latency_jitter {
            Some(n) => loop {
                let l = model.latency_mean_s + n.sample(&mut rng);
                if l >= 0.0 {
                    break l;
                }
            },
            None => model.latency_mean_s,
        };
        let q = t - latency;
        present.clear();
        present.extend((0..tracks.len()).filter(|&i| tracks[i].contains_time(q)));

        if model.id_switch_prob > 0.0 {
            for &i in &present {
                if rng.random::<f64>() < model.id_switch_prob {
                    let partners: Vec<usize> = present
                        .iter()
                        .copied()
                        .filter(|&j| j != i && tracks[j].category == tracks[i].category)
                        .collect();
                    if !partners.is_empty() {
                        let j = partners[rng.random_range(0..partners.len())];
                        reported.swap(i, j);
                    }
                }
            }
        }

        for &i in &present {
            let track = &tracks[i];
            let g = track.position_at(q)?;
            let heading = track.heading_at(q).unwrap_or(LocalPoint::new(1.0, 0.0));
            let e2 = match noise {
                Some(n) => LocalPoint::new(n.sample(&mut rng), n.sample(&mut rng)),
                None => LocalPoint::ORIGIN,
            };
            if model.miss_prob > 0.0 && rng.random::<f64>() < model.miss_prob {
                continue;
            }
            out.push(DetectedPoint {
                timestamp_s: t,
                object_id: tracks[reported[i]].object_id.clone(),
                category: track.category,
                position: g + model.offset_frame.apply(model.offset_e1_m, heading) + e2,
            });
        }

        if let Some(poisson) = clutter {
            let n = poisson.sample(&mut rng) as usize;
            for _ in 0..n {
                let position = LocalPoint::new(
                    rng.random_range(lo.x_m - CLUTTER_MARGIN_M..=hi.x_m + CLUTTER_MARGIN_M),
                    rng.random_range(lo.y_m - CLUTTER_MARGIN_M..=hi.y_m + CLUTTER_MARGIN_M),
                );
                let category = categories[rng.random_range(0..categories.len())];
                let object_id = loop {
                    let id = format!("clutter-{next_clutter}");
                    next_clutter += 1;
                    if !actor_ids.contains(id.as_str()) {
                        break id;
                    }
                };
                out.push(DetectedPoint {
                    timestamp_s: t,
                    object_id,
                    category,
                    position,
                });
            }
        }
    }
    Ok(out)
}

/// Degrades a ground-truth set into a detection set.
pub fn degrade(gt: &TrajectorySet, model: &ErrorModel, ctx: &ProjectionContext, seed: u64) -> Result<TrajectorySet> {
    let tracks = gt
        .trajectories
        .iter()
        .map(|t| LocalTrack::new(t, ctx))
        .collect::<Result<Vec<_>>>()?;
    let points = degrade_tracks(&tracks, model, seed)?
        .into_iter()
        .map(|d| DataPoint::new(d.timestamp_s, ctx.unproject(d.position)?, d.category, d.object_id))
        .collect::<Result<Vec<_>>>()?;
    build_trajectory_set(points, DEFAULT_FRAME_BIN_S, Source::Detection)
}

/// Exchanges the ids `a` and `b` on every point at or after `from_s`.
pub fn swap_ids_from(set: &TrajectorySet, a: &str, b: &str, from_s: f64) -> Result<TrajectorySet> {
    let points = set
        .points()
        .map(|p| {
            let mut p = p.clone();
            if p.timestamp_s >= from_s {
                if p.object_id == a {
                    p.object_id = b.to_string();
                } else if p.object_id == b {
                    p.object_id = a.to_string();
                }
            }
            p
        })
        .collect();
    build_trajectory_set(points, DEFAULT_FRAME_BIN_S, set.source)
}
