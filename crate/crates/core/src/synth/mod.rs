//! Synthetic trials: ground-truth scenario generation, degradation through an
//! additive error model, and Monte Carlo validation of the variance predictors.

mod degrade;
mod monte_carlo;
mod scenario;

pub use degrade::{degrade, degrade_tracks, swap_ids_from, DetectedPoint};
pub use monte_carlo::{monte_carlo_validate, MonteCarloComparison, MIN_MONTE_CARLO_RUNS};
pub use scenario::{actor_tracks, generate_scenario, scenario_duration_s, tracks_to_set};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::geo::{GeoPoint, LocalPoint};
use crate::latency::RouteLine;

/// Epoch second at which generated trials start unless configured otherwise.
pub const DEFAULT_START_TIME_S: f64 = 1_700_000_000.0;

pub(crate) fn rng_from_seed(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Template {
    LatencyRun,
    OneVehicleManeuver,
    VehiclePlusPedestrian,
    TwoVehiclePlusPedestrian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Maneuver {
    Straight,
    LeftTurn,
    RightTurn,
}

/// Relative placement of the two vehicles in the two-vehicle template.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwoVehicleLayout {
    /// Both eastbound in one lane, the second a fixed headway behind.
    Following,
    /// The second vehicle crosses northbound after the first has cleared.
    Perpendicular,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioSpec {
    pub template: Template,
    /// Geographic anchor of the local plane.
    pub origin: GeoPoint,
    /// Route of the latency-run template.
    pub route: RouteLine,
    /// Length of the acceleration and deceleration zones either side of the window.
    pub accel_zone_m: f64,
    /// Pause at each end of a latency-run pass.
    pub dwell_s: f64,
    pub round_trips: usize,
    /// Standard deviation of the per-pass speed deviation.
    pub speed_jitter_mps: f64,
    pub vehicle_speed_mps: f64,
    pub pedestrian_speed_mps: f64,
    pub maneuver: Maneuver,
    pub layout: TwoVehicleLayout,
    pub gt_rate_hz: f64,
    pub start_time_s: f64,
    /// Trial length; derived from the actors' paths when absent.
    pub duration_s: Option<f64>,
    pub rng_seed: u64,
}

impl Default for ScenarioSpec {
    fn default() -> Self {
        Self {
            template: Template::LatencyRun,
            origin: GeoPoint {
                lat_deg: 42.3,
                lon_deg: -83.7,
            },
            route: RouteLine {
                anchor: LocalPoint::ORIGIN,
                direction: LocalPoint::new(1.0, 0.0),
                window_start_m: 0.0,
                window_end_m: 60.0,
                nominal_speed_mps: 10.0,
            },
            accel_zone_m: 30.0,
            dwell_s: 2.0,
            round_trips: 1,
            speed_jitter_mps: 0.0,
            vehicle_speed_mps: 10.0,
            pedestrian_speed_mps: 1.4,
            maneuver: Maneuver::Straight,
            layout: TwoVehicleLayout::Perpendicular,
            gt_rate_hz: 20.0,
            start_time_s: DEFAULT_START_TIME_S,
            duration_s: None,
            rng_seed: 0,
        }
    }
}

impl ScenarioSpec {
    pub fn latency_run(route: RouteLine, round_trips: usize, rng_seed: u64) -> Self {
        Self {
            template: Template::LatencyRun,
            route,
            round_trips,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn with_template(template: Template, rng_seed: u64) -> Self {
        Self {
            template,
            rng_seed,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InfeasibleScenario(format!("{name} must be positive, got {v}")))
            }
        };
        positive("ground-truth rate", self.gt_rate_hz)?;
        positive("vehicle speed", self.vehicle_speed_mps)?;
        positive("pedestrian speed", self.pedestrian_speed_mps)?;
        positive("route speed", self.route.nominal_speed_mps)?;
        positive("acceleration zone", self.accel_zone_m)?;
        positive("start time", self.start_time_s)?;
        if !(self.route.window_start_m < self.route.window_end_m) {
            return Err(Error::InfeasibleScenario("route window is empty".into()));
        }
        if self.route.direction.normalized().is_none() {
            return Err(Error::InfeasibleScenario("route direction is zero".into()));
        }
        if !(self.dwell_s >= 0.0) || !(self.speed_jitter_mps >= 0.0) {
            return Err(Error::InfeasibleScenario("dwell and speed jitter must be non-negative".into()));
        }
        if self.template == Template::LatencyRun && self.round_trips == 0 {
            return Err(Error::InfeasibleScenario("a latency run needs at least one round trip".into()));
        }
        if let Some(d) = self.duration_s {
            positive("duration", d)?;
        }
        Ok(())
    }
}

/// Constant positional offset split along and across the direction of travel
/// (cross positive to the left).
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct TravelOffset {
    pub along_m: f64,
    pub cross_m: f64,
}

impl TravelOffset {
    pub fn to_local(self, heading: LocalPoint) -> LocalPoint {
        heading * self.along_m + heading.perp() * self.cross_m
    }
}

/// Frame in which the constant offset is applied.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffsetFrame {
    /// Along and across the actor's instantaneous heading.
    #[default]
    Travel,
    /// Fixed in the local plane: along is east, cross is north. Reverses sign
    /// relative to the heading when the actor turns back, which is what the
    /// paired-run cancellation relies on.
    Fixed,
}

impl OffsetFrame {
    pub fn apply(self, offset: TravelOffset, heading: LocalPoint) -> LocalPoint {
        match self {
            Self::Travel => offset.to_local(heading),
            Self::Fixed => LocalPoint::new(offset.along_m, offset.cross_m),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ErrorModel {
    pub latency_mean_s: f64,
    /// Standard deviation of the latency before truncation at zero.
    pub latency_std_s: f64,
    pub offset_e1_m: TravelOffset,
    pub offset_frame: OffsetFrame,
    /// Per-axis standard deviation of the random positional error.
    pub noise_sigma_m: f64,
    /// Standard deviation of the per-pass speed deviation of the test vehicle.
    pub speed_jitter_mps: f64,
    pub miss_prob: f64,
    /// Expected clutter points per detection frame.
    pub clutter_rate: f64,
    /// Per-frame, per-object probability of a persistent id swap.
    pub id_switch_prob: f64,
    pub det_rate_hz: f64,
}

impl Default for ErrorModel {
    fn default() -> Self {
        Self {
            latency_mean_s: 0.0,
            latency_std_s: 0.0,
            offset_e1_m: TravelOffset::default(),
            offset_frame: OffsetFrame::Travel,
            noise_sigma_m: 0.0,
            speed_jitter_mps: 0.0,
            miss_prob: 0.0,
            clutter_rate: 0.0,
            id_switch_prob: 0.0,
            det_rate_hz: 10.0,
        }
    }
}

impl ErrorModel {
    /// The identity model at `det_rate_hz`.
    pub fn perfect(det_rate_hz: f64) -> Self {
        Self {
            det_rate_hz,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let finite_nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidArgument(format!("{name} must be finite and non-negative, got {v}")))
            }
        };
        finite_nonneg("latency mean", self.latency_mean_s)?;
        finite_nonneg("latency std", self.latency_std_s)?;
        finite_nonneg("noise sigma", self.noise_sigma_m)?;
        finite_nonneg("speed jitter", self.speed_jitter_mps)?;
        finite_nonneg("clutter rate", self.clutter_rate)?;
        for (name, p) in [("miss probability", self.miss_prob), ("id switch probability", self.id_switch_prob)] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.det_rate_hz > 0.0) || !self.det_rate_hz.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "detection rate must be positive, got {}",
                self.det_rate_hz
            )));
        }
        if !self.offset_e1_m.along_m.is_finite() || !self.offset_e1_m.cross_m.is_finite() {
            return Err(Error::InvalidArgument("offset must be finite".into()));
        }
        Ok(())
    }

    /// Mean and variance of the latency after truncation at zero.
    pub fn latency_moments(&self) -> (f64, f64) {
        let (mu, sigma) = (self.latency_mean_s, self.latency_std_s);
        if sigma == 0.0 {
            return (mu, 0.0);
        }
        let std_normal = Normal::standard();
        let alpha = -mu / sigma;
        let z = 1.0 - std_normal.cdf(alpha);
        let lambda = std_normal.pdf(alpha) / z;
        let mean = mu + sigma * lambda;
        let var = sigma * sigma * (1.0 + alpha * lambda - lambda * lambda);
        (mean, var)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn truncated_moments() {
        let m = ErrorModel {
            latency_mean_s: 0.1,
            latency_std_s: 0.0,
            ..ErrorModel::default()
        };
        assert_eq!(m.latency_moments(), (0.1, 0.0));

        // Far from the truncation point the moments are those of the normal.
        let m = ErrorModel {
            latency_mean_s: 0.1,
            latency_std_s: 0.01,
            ..ErrorModel::default()
        };
        let (mean, var) = m.latency_moments();
        assert!((mean - 0.1).abs() < 1e-12);
        assert!((var - 1e-4).abs() < 1e-12);

        // Half-normal: mean sigma*sqrt(2/pi), variance sigma²(1 - 2/pi).
        let m = ErrorModel {
            latency_mean_s: 0.0,
            latency_std_s: 0.1,
            ..ErrorModel::default()
        };
        let (mean, var) = m.latency_moments();
        assert!((mean - 0.1 * (2.0 / std::f64::consts::PI).sqrt()).abs() < 1e-12);
        assert!((var - 0.01 * (1.0 - 2.0 / std::f64::consts::PI)).abs() < 1e-12);
    }

    #[test]
    fn model_validation() {
        assert!(ErrorModel::default().validate().is_ok());
        let bad = ErrorModel {
            miss_prob: 1.5,
            ..ErrorModel::default()
        };
        assert!(bad.validate().is_err());
        let bad = ErrorModel {
            det_rate_hz: 0.0,
            ..ErrorModel::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn offset_in_travel_frame() {
        let o = TravelOffset { along_m: 0.5, cross_m: 0.2 };
        let north = LocalPoint::new(0.0, 1.0);
        let v = o.to_local(north);
        assert!((v.x_m + 0.2).abs() < 1e-12 && (v.y_m - 0.5).abs() < 1e-12);
        assert_eq!(OffsetFrame::Fixed.apply(o, north), LocalPoint::new(0.5, 0.2));
    }
}
