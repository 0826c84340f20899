use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::SpatialGrid;

/// Physical parameters of the two-tweezer problem and the spatial grid they are solved on.
///
/// Units are dimensionless with `hbar = m = 1` by default. The moving tweezer has depth
/// `moving_amplitude` and sits at the protocol position `x0`; the static tweezer has depth
/// `static_amplitude` and sits at `static_center`. Both share the Gaussian width `width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhysicsConfig {
    pub mass: f64,
    pub hbar: f64,
    #[serde(rename = "A")]
    pub moving_amplitude: f64,
    #[serde(rename = "B")]
    pub static_amplitude: f64,
    #[serde(rename = "sigma")]
    pub width: f64,
    #[serde(rename = "x_B")]
    pub static_center: f64,
    pub grid_min: f64,
    pub grid_max: f64,
    pub grid_points: usize,
    pub x0_start: f64,
    pub x0_end: f64,
}

impl Default for PhysicsConfig {
    fn default() -> Self {
        Self {
            mass: 1.0,
            hbar: 1.0,
            moving_amplitude: 160.0,
            static_amplitude: 130.0,
            width: 0.125,
            static_center: 0.0,
            grid_min: -2.0,
            grid_max: 2.0,
            grid_points: 512,
            x0_start: 0.55,
            x0_end: -0.55,
        }
    }
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        let finite = [
            self.mass,
            self.hbar,
            self.moving_amplitude,
            self.static_amplitude,
            self.width,
            self.static_center,
            self.grid_min,
            self.grid_max,
            self.x0_start,
            self.x0_end,
        ];
        if finite.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("all parameters must be finite".into()));
        }
        if self.mass <= 0.0 || self.hbar <= 0.0 {
            return Err(Error::Config("mass and hbar must be positive".into()));
        }
        if self.moving_amplitude <= 0.0 {
            return Err(Error::Config(
                "moving tweezer amplitude A must be > 0".into(),
            ));
        }
        if self.static_amplitude < 0.0 {
            return Err(Error::Config(
                "static tweezer amplitude B must be >= 0".into(),
            ));
        }
        if self.width <= 0.0 {
            return Err(Error::Config("tweezer width sigma must be > 0".into()));
        }
        if self.grid_min >= self.grid_max {
            return Err(Error::Config("grid bounds must be strictly ordered".into()));
        }
        if self.grid_points < 64 {
            return Err(Error::Config("grid needs at least 64 points".into()));
        }
        if self.x0_start == self.x0_end {
            return Err(Error::Config("transport endpoints must differ".into()));
        }
        let lo = self.x0_start.min(self.x0_end) - 4.0 * self.width;
        let hi = self.x0_start.max(self.x0_end) + 4.0 * self.width;
        if lo < self.grid_min || hi > self.grid_max {
            return Err(Error::Config(format!(
                "grid [{}, {}] must contain the padded transport range [{lo}, {hi}]",
                self.grid_min, self.grid_max
            )));
        }
        Ok(())
    }

    /// Transport distance `L = |x0_start - x0_end|`.
    pub fn transport_distance(&self) -> f64 {
        (self.x0_start - self.x0_end).abs()
    }

    /// Harmonic frequency of the moving tweezer, `omega^2 = A / (m sigma^2)`.
    pub fn trap_frequency(&self) -> f64 {
        (self.moving_amplitude / self.mass).sqrt() / self.width
    }

    pub fn grid(&self) -> SpatialGrid {
        SpatialGrid::new(self.grid_min, self.grid_max, self.grid_points)
    }

    /// Two-Gaussian potential at `x` with the moving tweezer at `x0`.
    pub fn potential(&self, x: f64, x0: f64) -> f64 {
        let two_s2 = 2.0 * self.width * self.width;
        let moving = self.moving_amplitude * (-(x - x0).powi(2) / two_s2).exp();
        let fixed = self.static_amplitude * (-(x - self.static_center).powi(2) / two_s2).exp();
        -moving - fixed
    }

    /// The same problem without the static tweezer.
    pub fn single_tweezer(&self) -> Self {
        Self {
            static_amplitude: 0.0,
            ..self.clone()
        }
    }
}
