//! Evaluation of roadside perception systems against RTK ground truth.
//!
//! The crate covers the whole evaluation chain:
//!
//! * [`ingest`] reads point recordings (`timestamp,lat,lon,category,id`).
//! * [`trajectory`] groups points into frames and trajectories and projects
//!   them onto a local plane ([`geo`]).
//! * [`latency`] estimates end-to-end latency and the static positional offset
//!   from constant-speed runs driven in both directions.
//! * [`matcher`] aligns detection and ground-truth frames, matches points with
//!   the Hungarian method ([`assignment`]) and associates trajectories.
//! * [`metrics`] turns the matches into FP/FN rates, IDS, MOTP, MOTA, IDF1 and
//!   HOTA, and sweeps the match threshold.
//! * [`synth`] generates synthetic trials with a known error model.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assignment;
pub mod error;
pub mod geo;
pub mod ingest;
pub mod latency;
pub mod matcher;
pub mod metrics;
pub mod synth;
pub mod trajectory;

pub use error::{Error, Result};
pub use geo::{make_projection, GeoPoint, LocalPoint, ProjectionContext};
pub use trajectory::{build_trajectory_set, Category, DataFrame, DataPoint, LocalTrack, Source, Trajectory, TrajectorySet};
