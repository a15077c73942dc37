//! Geographic points and the local tangent-plane projection.
//!
//! Trials cover a single intersection, so an equirectangular plane centred on
//! the trial origin is accurate to well under a decimetre and every
//! downstream distance is plain Euclidean geometry in metres.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Nominal length of one degree of latitude, in metres.
pub const METERS_PER_DEG_LAT: f64 = 111_132.95;

/// Projected points further than this from the origin are rejected.
pub const MAX_PROJECTION_RANGE_M: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lat_deg: f64,
    pub lon_deg: f64,
}

impl GeoPoint {
    pub fn new(lat_deg: f64, lon_deg: f64) -> Result<Self> {
        if !lat_deg.is_finite() || !(-90.0..=90.0).contains(&lat_deg) {
            return Err(Error::InvalidCoordinate(format!(
                "latitude {lat_deg} outside [-90, 90]"
            )));
        }
        if !lon_deg.is_finite() || !(-180.0..=180.0).contains(&lon_deg) {
            return Err(Error::InvalidCoordinate(format!(
                "longitude {lon_deg} outside [-180, 180]"
            )));
        }
        Ok(Self { lat_deg, lon_deg })
    }
}

/// A point in the local plane: metres east (`x_m`) and north (`y_m`) of the
/// projection origin.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct LocalPoint {
    pub x_m: f64,
    pub y_m: f64,
}

impl LocalPoint {
    pub const ORIGIN: LocalPoint = LocalPoint { x_m: 0.0, y_m: 0.0 };

    pub const fn new(x_m: f64, y_m: f64) -> Self {
        Self { x_m, y_m }
    }

    pub fn dot(self, other: LocalPoint) -> f64 {
        self.x_m * other.x_m + self.y_m * other.y_m
    }

    pub fn norm(self) -> f64 {
        self.x_m.hypot(self.y_m)
    }

    pub fn distance(self, other: LocalPoint) -> f64 {
        (self - other).norm()
    }

    /// Counter-clockwise perpendicular (the "left" side of a heading).
    pub fn perp(self) -> LocalPoint {
        LocalPoint::new(-self.y_m, self.x_m)
    }

    /// Unit vector in the same direction, or `None` for a (near) zero vector.
    pub fn normalized(self) -> Option<LocalPoint> {
        let n = self.norm();
        (n > 1e-12 && n.is_finite()).then(|| self * (1.0 / n))
    }

    pub fn lerp(self, other: LocalPoint, w: f64) -> LocalPoint {
        LocalPoint::new(
            self.x_m + (other.x_m - self.x_m) * w,
            self.y_m + (other.y_m - self.y_m) * w,
        )
    }
}

impl Add for LocalPoint {
    type Output = LocalPoint;
    fn add(self, rhs: LocalPoint) -> LocalPoint {
        LocalPoint::new(self.x_m + rhs.x_m, self.y_m + rhs.y_m)
    }
}

impl Sub for LocalPoint {
    type Output = LocalPoint;
    fn sub(self, rhs: LocalPoint) -> LocalPoint {
        LocalPoint::new(self.x_m - rhs.x_m, self.y_m - rhs.y_m)
    }
}

impl Mul<f64> for LocalPoint {
    type Output = LocalPoint;
    fn mul(self, k: f64) -> LocalPoint {
        LocalPoint::new(self.x_m * k, self.y_m * k)
    }
}

impl Neg for LocalPoint {
    type Output = LocalPoint;
    fn neg(self) -> LocalPoint {
        LocalPoint::new(-self.x_m, -self.y_m)
    }
}

/// Equirectangular tangent plane centred on `origin`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjectionContext {
    pub origin: GeoPoint,
    pub meters_per_deg_lat: f64,
    pub meters_per_deg_lon: f64,
}

pub fn make_projection(origin: GeoPoint) -> ProjectionContext {
    ProjectionContext::new(origin)
}

impl ProjectionContext {
    pub fn new(origin: GeoPoint) -> Self {
        let meters_per_deg_lat = METERS_PER_DEG_LAT;
        // Clamp so a polar origin still yields a usable (if degenerate) plane.
        let meters_per_deg_lon = (meters_per_deg_lat * origin.lat_deg.to_radians().cos()).max(1e-6);
        Self {
            origin,
            meters_per_deg_lat,
            meters_per_deg_lon,
        }
    }

    /// Projects `p` into the local plane.
    pub fn project(&self, p: GeoPoint) -> Result<LocalPoint> {
        let local = self.project_unchecked(p);
        let distance_m = local.norm();
        if !(distance_m < MAX_PROJECTION_RANGE_M) {
            return Err(Error::OutOfRange {
                distance_m,
                limit_m: MAX_PROJECTION_RANGE_M,
            });
        }
        Ok(local)
    }

    fn project_unchecked(&self, p: GeoPoint) -> LocalPoint {
        LocalPoint::new(
            (p.lon_deg - self.origin.lon_deg) * self.meters_per_deg_lon,
            (p.lat_deg - self.origin.lat_deg) * self.meters_per_deg_lat,
        )
    }

    /// Inverse of [`ProjectionContext::project`].
    pub fn unproject(&self, p: LocalPoint) -> Result<GeoPoint> {
        GeoPoint::new(
            self.origin.lat_deg + p.y_m / self.meters_per_deg_lat,
            self.origin.lon_deg + p.x_m / self.meters_per_deg_lon,
        )
    }
}
