//! Monte Carlo check of the tau and position-error variance predictors.

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{actor_tracks, degrade_tracks, rng_from_seed, ErrorModel, ScenarioSpec};
use crate::error::{Error, Result};
use crate::latency::{
    constant_speed_windows, position_residuals, predict_position_error_variance, predict_tau_variance,
    sample_tau_tracks, Direction, RouteLine, DEFAULT_SPEED_TOL_FRAC, DEFAULT_TEST_POINTS,
};
use crate::trajectory::LocalTrack;

pub const MIN_MONTE_CARLO_RUNS: usize = 100;

const MONTE_CARLO_GT_RATE_HZ: f64 = 20.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloComparison {
    pub n_runs: usize,
    pub n_tau_samples: usize,
    pub n_position_samples: usize,
    /// Pooled within-direction variance of tau.
    pub empirical_var_tau: f64,
    pub predicted_var_tau: f64,
    /// Variance of the along-track position-error residual inside the window.
    pub empirical_var_ed: f64,
    pub predicted_var_ed: f64,
}

fn sum_sq_dev(v: &[f64]) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - mean).powi(2)).sum()
}

/// Runs `n_runs` single round trips on `route`, degrades each through `model`
/// and compares the empirical variances with the predictors.
///
/// The predictors are evaluated with the moments of the truncated latency
/// distribution actually sampled. Residuals use the expected latency.
pub fn monte_carlo_validate(
    model: &ErrorModel,
    route: &RouteLine,
    n_runs: usize,
    seed: u64,
) -> Result<MonteCarloComparison> {
    if n_runs < MIN_MONTE_CARLO_RUNS {
        return Err(Error::InvalidArgument(format!(
            "need at least {MIN_MONTE_CARLO_RUNS} runs, got {n_runs}"
        )));
    }
    model.validate()?;
    let (latency_mean, latency_var) = model.latency_moments();
    let test_points = route.test_points(DEFAULT_TEST_POINTS);
    let mut master = rng_from_seed(seed);

    let mut forward = Vec::new();
    let mut reverse = Vec::new();
    let mut along = Vec::new();
    for _ in 0..n_runs {
        let spec = ScenarioSpec {
            gt_rate_hz: MONTE_CARLO_GT_RATE_HZ,
            speed_jitter_mps: model.speed_jitter_mps,
            ..ScenarioSpec::latency_run(*route, 1, master.random())
        };
        let gt_tracks = actor_tracks(&spec)?;
        let gt = &gt_tracks[0];
        let detections = degrade_tracks(&gt_tracks, model, master.random())?;
        let (times, positions): (Vec<f64>, Vec<_>) = detections
            .iter()
            .filter(|d| d.object_id == gt.object_id)
            .map(|d| (d.timestamp_s, d.position))
            .unzip();
        if times.len() < 2 {
            continue;
        }
        let det = LocalTrack::from_samples(gt.object_id.clone(), gt.category, times, positions)?;

        if let Ok(sampling) = sample_tau_tracks(gt, &det, route, &test_points, DEFAULT_SPEED_TOL_FRAC) {
            for s in sampling.samples {
                match s.direction {
                    Direction::Forward => forward.push(s.tau_s),
                    Direction::Reverse => reverse.push(s.tau_s),
                }
            }
        }

        let windows = constant_speed_windows(gt, route, DEFAULT_SPEED_TOL_FRAC);
        along.extend(
            position_residuals(&det, gt, latency_mean)
                .into_iter()
                .filter(|r| {
                    let q = r.timestamp_s - latency_mean;
                    windows.iter().any(|w| w.contains(q))
                })
                .filter_map(|r| r.along_m),
        );
    }

    let n_tau = forward.len() + reverse.len();
    let groups = usize::from(!forward.is_empty()) + usize::from(!reverse.is_empty());
    if n_tau <= groups || along.len() < 2 {
        return Err(Error::NoSamples("Monte Carlo runs produced too few samples".into()));
    }
    let var_e2 = model.noise_sigma_m * model.noise_sigma_m;
    let v0 = route.nominal_speed_mps;
    Ok(MonteCarloComparison {
        n_runs,
        n_tau_samples: n_tau,
        n_position_samples: along.len(),
        empirical_var_tau: (sum_sq_dev(&forward) + sum_sq_dev(&reverse)) / (n_tau - groups) as f64,
        predicted_var_tau: predict_tau_variance(latency_var, var_e2, v0)?,
        empirical_var_ed: sum_sq_dev(&along) / (along.len() - 1) as f64,
        predicted_var_ed: predict_position_error_variance(latency_var, var_e2, v0)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geo::LocalPoint;

    fn route() -> RouteLine {
        RouteLine::new(LocalPoint::ORIGIN, LocalPoint::new(1.0, 0.0), 0.0, 60.0, 10.0).unwrap()
    }

    #[test]
    fn zero_noise_gives_zero_variances() {
        let model = ErrorModel {
            latency_mean_s: 0.1,
            ..ErrorModel::default()
        };
        let c = monte_carlo_validate(&model, &route(), 100, 1).unwrap();
        assert_eq!(c.predicted_var_tau, 0.0);
        assert_eq!(c.predicted_var_ed, 0.0);
        assert!(c.empirical_var_tau < 1e-10, "{c:?}");
        assert!(c.empirical_var_ed < 1e-10, "{c:?}");
    }

    #[test]
    fn too_few_runs() {
        assert!(monte_carlo_validate(&ErrorModel::default(), &route(), 10, 1).is_err());
    }
}
