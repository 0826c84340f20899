use std::f64::consts::{E, PI};

use serde::Serialize;

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};

/// Minimal transport duration set by the largest force a Gaussian tweezer can exert.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SpeedLimitReport {
    /// `sqrt(6 m L sigma sqrt(e) / A)`
    pub t_csl: f64,
    /// `(pi / omega) sqrt(L / sigma)`
    pub t_csl_harmonic: f64,
    /// `A / (m sigma sqrt(e))`, the steepest slope of the Gaussian divided by the mass.
    pub max_acceleration: f64,
    pub omega: f64,
}

pub fn classical_speed_limit(cfg: &PhysicsConfig, distance: f64) -> Result<SpeedLimitReport> {
    if !(distance >= 0.0) || !distance.is_finite() {
        return Err(Error::Domain(format!(
            "transport distance must be non-negative, got {distance}"
        )));
    }
    if cfg.moving_amplitude <= 0.0 || cfg.width <= 0.0 || cfg.mass <= 0.0 {
        return Err(Error::Config("A, sigma and m must be positive".into()));
    }
    let sqrt_e = E.sqrt();
    let omega = cfg.trap_frequency();
    Ok(SpeedLimitReport {
        t_csl: (6.0 * cfg.mass * distance * cfg.width * sqrt_e / cfg.moving_amplitude).sqrt(),
        t_csl_harmonic: PI / omega * (distance / cfg.width).sqrt(),
        max_acceleration: cfg.moving_amplitude / (cfg.mass * cfg.width * sqrt_e),
        omega,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::protocol::cubic_ramp;

    fn with_amplitude(a: f64) -> PhysicsConfig {
        PhysicsConfig {
            moving_amplitude: a,
            ..PhysicsConfig::default()
        }
    }

    #[test]
    fn reported_values_for_both_depths() {
        let deep = classical_speed_limit(&with_amplitude(160.0), 1.1).unwrap();
        let shallow = classical_speed_limit(&with_amplitude(130.0), 1.1).unwrap();
        assert!((deep.t_csl - 0.092).abs() < 1e-3, "{}", deep.t_csl);
        assert!((shallow.t_csl - 0.102).abs() < 1e-3, "{}", shallow.t_csl);
    }

    #[test]
    fn zero_distance_is_instant() {
        let r = classical_speed_limit(&PhysicsConfig::default(), 0.0).unwrap();
        assert_eq!(r.t_csl, 0.0);
        assert_eq!(r.t_csl_harmonic, 0.0);
        assert!(classical_speed_limit(&PhysicsConfig::default(), -1.0).is_err());
    }

    #[test]
    fn closed_forms_agree_over_depth_range() {
        for a in (100..=200).step_by(5) {
            let r = classical_speed_limit(&with_amplitude(a as f64), 1.1).unwrap();
            assert!((r.t_csl - r.t_csl_harmonic).abs() / r.t_csl < 0.02);
        }
    }

    #[test]
    fn cubic_at_the_limit_saturates_the_bound() {
        let cfg = PhysicsConfig::default();
        let r = classical_speed_limit(&cfg, 1.1).unwrap();
        // Peak acceleration of the cubic is 6 L / T^2.
        let peak = 6.0 * 1.1 / (r.t_csl * r.t_csl);
        assert!((peak - r.max_acceleration).abs() / r.max_acceleration < 1e-6);
        let sampled = cubic_ramp(1.1, r.t_csl, 0.0).unwrap().accelerations()[0].abs();
        assert!((sampled - r.max_acceleration).abs() / r.max_acceleration < 1e-3);
    }
}
