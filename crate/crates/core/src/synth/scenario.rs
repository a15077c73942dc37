//! Ground-truth generation for the trial templates.
//!
//! The intersection is two straight roads crossing at the local origin: one
//! east-west along the x axis, one north-south along the y axis, each with
//! one lane per direction. Traffic keeps right.

use rand_distr::{Distribution, Normal};

use super::{rng_from_seed, Maneuver, ScenarioSpec, Template, TwoVehicleLayout};
use crate::error::{Error, Result};
use crate::geo::{make_projection, LocalPoint, ProjectionContext};
use crate::trajectory::{build_trajectory_set, Category, DataPoint, LocalTrack, Source, TrajectorySet, DEFAULT_FRAME_BIN_S};

const LANE_OFFSET_M: f64 = 1.75;
const APPROACH_M: f64 = 60.0;
const TURN_RADIUS_M: f64 = 6.0;
const CROSSWALK_Y_M: f64 = 10.0;
const CROSSWALK_HALF_M: f64 = 8.0;
const FOLLOWING_HEADWAY_M: f64 = 15.0;
const CROSSING_DELAY_S: f64 = 3.0;

#[derive(Debug, Clone, Copy)]
enum Piece {
    Line { a: LocalPoint, b: LocalPoint },
    Arc { center: LocalPoint, radius: f64, start_angle: f64, sweep: f64 },
}

impl Piece {
    fn length(&self) -> f64 {
        match *self {
            Piece::Line { a, b } => a.distance(b),
            Piece::Arc { radius, sweep, .. } => radius * sweep.abs(),
        }
    }

    fn at(&self, d: f64) -> LocalPoint {
        match *self {
            Piece::Line { a, b } => {
                let len = a.distance(b);
                if len == 0.0 {
                    a
                } else {
                    a.lerp(b, d / len)
                }
            }
            Piece::Arc { center, radius, start_angle, sweep } => {
                let angle = start_angle + sweep.signum() * d / radius;
                center + LocalPoint::new(angle.cos(), angle.sin()) * radius
            }
        }
    }
}

/// A polyline with circular fillets, parameterised by distance travelled.
#[derive(Debug, Clone)]
struct Path {
    pieces: Vec<Piece>,
    starts: Vec<f64>,
    length: f64,
}

impl Path {
    fn new(pieces: Vec<Piece>) -> Self {
        let mut starts = Vec::with_capacity(pieces.len());
        let mut length = 0.0;
        for p in &pieces {
            starts.push(length);
            length += p.length();
        }
        Self { pieces, starts, length }
    }

    fn straight(a: LocalPoint, b: LocalPoint) -> Self {
        Self::new(vec![Piece::Line { a, b }])
    }

    /// Enter along `d_in` towards `corner`, turn through a fillet of `radius`, leave along `d_out`.
    fn turn(corner: LocalPoint, d_in: LocalPoint, d_out: LocalPoint, approach: f64, radius: f64) -> Self {
        let cos_phi = d_in.dot(d_out).clamp(-1.0, 1.0);
        let phi = cos_phi.acos();
        let left = d_in.x_m * d_out.y_m - d_in.y_m * d_out.x_m > 0.0;
        let cut = radius * (phi / 2.0).tan();
        let t1 = corner - d_in * cut;
        let t2 = corner + d_out * cut;
        let normal = if left { d_in.perp() } else { -d_in.perp() };
        let center = t1 + normal * radius;
        let rel = t1 - center;
        let start_angle = rel.y_m.atan2(rel.x_m);
        let sweep = if left { phi } else { -phi };
        Self::new(vec![
            Piece::Line { a: corner - d_in * approach, b: t1 },
            Piece::Arc { center, radius, start_angle, sweep },
            Piece::Line { a: t2, b: corner + d_out * approach },
        ])
    }

    fn at(&self, d: f64) -> LocalPoint {
        let d = d.clamp(0.0, self.length);
        let i = self.starts.partition_point(|&s| s <= d).saturating_sub(1);
        self.pieces[i].at(d - self.starts[i])
    }
}

/// One pass of a latency run: accelerate, hold speed through the window,
/// decelerate, then dwell.
#[derive(Debug, Clone, Copy)]
struct Leg {
    t_start: f64,
    s_start: f64,
    sign: f64,
    speed: f64,
    accel_zone: f64,
    window: f64,
    dwell: f64,
}

impl Leg {
    fn ramp_s(&self) -> f64 {
        2.0 * self.accel_zone / self.speed
    }

    fn duration_s(&self) -> f64 {
        2.0 * self.ramp_s() + self.window / self.speed + self.dwell
    }

    /// Distance covered `t` seconds into the leg.
    fn travelled(&self, t: f64) -> f64 {
        let (v, ramp) = (self.speed, self.ramp_s());
        let a = v * v / (2.0 * self.accel_zone);
        let cruise = self.window / v;
        if t <= ramp {
            0.5 * a * t * t
        } else if t <= ramp + cruise {
            self.accel_zone + v * (t - ramp)
        } else if t <= 2.0 * ramp + cruise {
            let u = t - ramp - cruise;
            self.accel_zone + self.window + v * u - 0.5 * a * u * u
        } else {
            2.0 * self.accel_zone + self.window
        }
    }
}

#[derive(Debug, Clone)]
enum Motion {
    Path { path: Path, speed: f64 },
    Shuttle { anchor: LocalPoint, direction: LocalPoint, legs: Vec<Leg> },
}

#[derive(Debug, Clone)]
struct Actor {
    id: String,
    category: Category,
    start_s: f64,
    motion: Motion,
}

impl Actor {
    fn duration_s(&self) -> f64 {
        match &self.motion {
            Motion::Path { path, speed } => path.length / speed,
            Motion::Shuttle { legs, .. } => legs.iter().map(Leg::duration_s).sum(),
        }
    }

    fn end_s(&self) -> f64 {
        self.start_s + self.duration_s()
    }

    fn position(&self, t: f64) -> LocalPoint {
        let t = t - self.start_s;
        match &self.motion {
            Motion::Path { path, speed } => path.at(speed * t),
            Motion::Shuttle { anchor, direction, legs } => {
                let i = legs.partition_point(|l| l.t_start <= t).saturating_sub(1);
                let leg = &legs[i];
                let s = leg.s_start + leg.sign * leg.travelled(t - leg.t_start);
                *anchor + *direction * s
            }
        }
    }
}

fn latency_actor(spec: &ScenarioSpec) -> Result<Actor> {
    let route = &spec.route;
    let direction = route
        .direction
        .normalized()
        .ok_or_else(|| Error::InfeasibleScenario("route direction is zero".into()))?;
    let window = route.window_end_m - route.window_start_m;
    let v0 = route.nominal_speed_mps;
    let jitter = if spec.speed_jitter_mps > 0.0 {
        Some(Normal::new(0.0, spec.speed_jitter_mps).map_err(|e| Error::InfeasibleScenario(e.to_string()))?)
    } else {
        None
    };
    let mut rng = rng_from_seed(spec.rng_seed);
    let mut legs = Vec::with_capacity(2 * spec.round_trips);
    let mut t = 0.0;
    for k in 0..2 * spec.round_trips {
        let mu = jitter.map_or(0.0, |n| n.sample(&mut rng));
        let forward = k % 2 == 0;
        let leg = Leg {
            t_start: t,
            s_start: if forward {
                route.window_start_m - spec.accel_zone_m
            } else {
                route.window_end_m + spec.accel_zone_m
            },
            sign: if forward { 1.0 } else { -1.0 },
            speed: (v0 + mu).max(0.5 * v0),
            accel_zone: spec.accel_zone_m,
            window,
            dwell: spec.dwell_s,
        };
        t += leg.duration_s();
        legs.push(leg);
    }
    Ok(Actor {
        id: "veh-1".into(),
        category: Category::Vehicle,
        start_s: 0.0,
        motion: Motion::Shuttle {
            anchor: route.anchor,
            direction,
            legs,
        },
    })
}

fn vehicle(id: &str, path: Path, speed: f64, start_s: f64) -> Actor {
    Actor {
        id: id.into(),
        category: Category::Vehicle,
        start_s,
        motion: Motion::Path { path, speed },
    }
}

fn eastbound(maneuver: Maneuver) -> Path {
    let east = LocalPoint::new(1.0, 0.0);
    match maneuver {
        Maneuver::Straight => Path::straight(
            LocalPoint::new(-APPROACH_M, -LANE_OFFSET_M),
            LocalPoint::new(APPROACH_M, -LANE_OFFSET_M),
        ),
        Maneuver::LeftTurn => Path::turn(
            LocalPoint::new(LANE_OFFSET_M, -LANE_OFFSET_M),
            east,
            LocalPoint::new(0.0, 1.0),
            APPROACH_M,
            TURN_RADIUS_M,
        ),
        Maneuver::RightTurn => Path::turn(
            LocalPoint::new(-LANE_OFFSET_M, -LANE_OFFSET_M),
            east,
            LocalPoint::new(0.0, -1.0),
            APPROACH_M,
            TURN_RADIUS_M,
        ),
    }
}

fn pedestrian(spec: &ScenarioSpec) -> Actor {
    Actor {
        id: "ped-1".into(),
        category: Category::Pedestrian,
        start_s: 0.0,
        motion: Motion::Path {
            path: Path::straight(
                LocalPoint::new(-CROSSWALK_HALF_M, CROSSWALK_Y_M),
                LocalPoint::new(CROSSWALK_HALF_M, CROSSWALK_Y_M),
            ),
            speed: spec.pedestrian_speed_mps,
        },
    }
}

fn actors(spec: &ScenarioSpec) -> Result<Vec<Actor>> {
    spec.validate()?;
    let v = spec.vehicle_speed_mps;
    let mut actors = match spec.template {
        Template::LatencyRun => vec![latency_actor(spec)?],
        Template::OneVehicleManeuver => vec![vehicle("veh-1", eastbound(spec.maneuver), v, 0.0)],
        Template::VehiclePlusPedestrian => {
            vec![vehicle("veh-1", eastbound(spec.maneuver), v, 0.0), pedestrian(spec)]
        }
        Template::TwoVehiclePlusPedestrian => {
            let second = match spec.layout {
                TwoVehicleLayout::Following => vehicle("veh-2", eastbound(Maneuver::Straight), v, FOLLOWING_HEADWAY_M / v),
                TwoVehicleLayout::Perpendicular => vehicle(
                    "veh-2",
                    Path::straight(
                        LocalPoint::new(LANE_OFFSET_M, -APPROACH_M),
                        LocalPoint::new(LANE_OFFSET_M, APPROACH_M),
                    ),
                    v,
                    CROSSING_DELAY_S,
                ),
            };
            vec![vehicle("veh-1", eastbound(spec.maneuver), v, 0.0), second, pedestrian(spec)]
        }
    };
    actors.sort_by(|a, b| a.id.cmp(&b.id));
    Ok(actors)
}

/// Trial length: the configured duration, or the time the last actor finishes.
pub fn scenario_duration_s(spec: &ScenarioSpec) -> Result<f64> {
    let needed = actors(spec)?.iter().map(Actor::end_s).fold(0.0, f64::max);
    match spec.duration_s {
        Some(d) if d + 1e-9 < needed => Err(Error::InfeasibleScenario(format!(
            "duration {d} s is shorter than the {needed:.3} s the actors need"
        ))),
        Some(d) => Ok(d),
        None => Ok(needed),
    }
}

/// Ground-truth tracks in the local plane, sorted by id. Sample times are
/// `start_time_s + k / gt_rate_hz`.
pub fn actor_tracks(spec: &ScenarioSpec) -> Result<Vec<LocalTrack>> {
    let duration = scenario_duration_s(spec)?;
    let actors = actors(spec)?;
    let last_k = (duration * spec.gt_rate_hz + 1e-9).floor() as usize;
    actors
        .iter()
        .map(|actor| {
            let (start, end) = (actor.start_s, actor.end_s().min(duration));
            let first = (start * spec.gt_rate_hz - 1e-9).ceil().max(0.0) as usize;
            let last = ((end * spec.gt_rate_hz + 1e-9).floor() as usize).min(last_k);
            if last <= first {
                return Err(Error::InfeasibleScenario(format!(
                    "actor {} is sampled fewer than twice at {} Hz",
                    actor.id, spec.gt_rate_hz
                )));
            }
            let rel: Vec<f64> = (first..=last).map(|k| k as f64 / spec.gt_rate_hz).collect();
            let positions = rel.iter().map(|&t| actor.position(t)).collect();
            let times = rel.iter().map(|&t| spec.start_time_s + t).collect();
            LocalTrack::from_samples(actor.id.clone(), actor.category, times, positions)
        })
        .collect()
}

/// Converts local tracks into a trajectory set through `ctx`.
pub fn tracks_to_set(tracks: &[LocalTrack], ctx: &ProjectionContext, source: Source) -> Result<TrajectorySet> {
    let mut points = Vec::with_capacity(tracks.iter().map(LocalTrack::len).sum());
    for track in tracks {
        for (&t, &p) in track.times().iter().zip(track.positions()) {
            points.push(DataPoint::new(t, ctx.unproject(p)?, track.category, track.object_id.clone())?);
        }
    }
    build_trajectory_set(points, DEFAULT_FRAME_BIN_S, source)
}

/// Generates the ground truth of a trial.
pub fn generate_scenario(spec: &ScenarioSpec) -> Result<TrajectorySet> {
    let tracks = actor_tracks(spec)?;
    tracks_to_set(&tracks, &make_projection(spec.origin), Source::GroundTruth)
}
