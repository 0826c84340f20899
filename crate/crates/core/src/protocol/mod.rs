//! Tweezer protocols `x0(t)` and the analytic constructions built on them.

mod counterdiabatic;
mod geodesic;
mod metric;
mod reference;
mod speed_limit;
mod velocity;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};

pub use counterdiabatic::{cd_correct_double, cd_correct_single};
pub use geodesic::{geodesic_protocol, geodesic_protocol_with_samples, DEFAULT_RAMP_FRACTION};
pub use metric::{build_metric_table, metric, metric_sqrt, Interpolation, MetricTable};
pub use reference::{default_metric_table, ReferenceFamily, DEFAULT_METRIC_SAMPLES};
pub use speed_limit::{classical_speed_limit, SpeedLimitReport};
pub use velocity::{exact_velocity_field, VelocityField, DENSITY_FLOOR};

/// Sample count used for analytically generated protocols.
pub const DEFAULT_SAMPLES: usize = 2001;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKind {
    Cubic,
    CdSingle,
    Geodesic,
    CdDouble,
    #[serde(alias = "optimizer")]
    Optimized,
    Human,
}

impl ProtocolKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ProtocolKind::Cubic => "cubic",
            ProtocolKind::CdSingle => "cd_single",
            ProtocolKind::Geodesic => "geodesic",
            ProtocolKind::CdDouble => "cd_double",
            ProtocolKind::Optimized => "optimized",
            ProtocolKind::Human => "human",
        }
    }
}

impl std::fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_owned()))
            .map_err(|_| Error::Config(format!("unknown protocol kind '{s}'")))
    }
}

/// Tweezer position sampled at strictly increasing times from 0 to `T`, linearly
/// interpolated in between.
#[derive(Debug, Clone, PartialEq)]
pub struct Protocol {
    times: Vec<f64>,
    positions: Vec<f64>,
    kind: ProtocolKind,
}

#[derive(Serialize, Deserialize)]
struct ProtocolFile {
    #[serde(rename = "T")]
    duration: f64,
    samples: Vec<[f64; 2]>,
    kind: ProtocolKind,
}

impl Protocol {
    pub fn new(times: Vec<f64>, positions: Vec<f64>, kind: ProtocolKind) -> Result<Self> {
        if times.len() != positions.len() {
            return Err(Error::Domain("times and positions differ in length".into()));
        }
        if times.len() < 2 {
            return Err(Error::Domain(
                "a protocol needs at least two samples".into(),
            ));
        }
        if times[0] != 0.0 {
            return Err(Error::Domain("protocol must start at t = 0".into()));
        }
        if times.iter().chain(&positions).any(|v| !v.is_finite()) {
            return Err(Error::Domain("protocol samples must be finite".into()));
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "protocol times must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            times,
            positions,
            kind,
        })
    }

    /// Samples `f` at `samples` uniformly spaced times on `[0, duration]`.
    pub fn from_fn(
        duration: f64,
        samples: usize,
        kind: ProtocolKind,
        f: impl Fn(f64) -> f64,
    ) -> Result<Self> {
        if !(duration > 0.0) || !duration.is_finite() {
            return Err(Error::Domain(format!(
                "duration must be positive, got {duration}"
            )));
        }
        if samples < 2 {
            return Err(Error::Domain(
                "a protocol needs at least two samples".into(),
            ));
        }
        let times: Vec<f64> = (0..samples)
            .map(|j| duration * j as f64 / (samples - 1) as f64)
            .collect();
        let positions = times.iter().map(|&t| f(t)).collect();
        Self::new(times, positions, kind)
    }

    pub fn constant(duration: f64, position: f64, kind: ProtocolKind) -> Result<Self> {
        Self::from_fn(duration, DEFAULT_SAMPLES, kind, |_| position)
    }

    pub fn duration(&self) -> f64 {
        *self.times.last().expect("non-empty")
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn kind(&self) -> ProtocolKind {
        self.kind
    }

    pub fn with_kind(mut self, kind: ProtocolKind) -> Self {
        self.kind = kind;
        self
    }

    pub fn start(&self) -> f64 {
        self.positions[0]
    }

    pub fn end(&self) -> f64 {
        *self.positions.last().expect("non-empty")
    }

    /// Piecewise-linear interpolation; clamps to the end values outside `[0, T]`.
    pub fn position_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        if t <= self.times[0] {
            return self.positions[0];
        }
        if t >= self.times[n - 1] {
            return self.positions[n - 1];
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        let w = (t - self.times[lo]) / (self.times[hi] - self.times[lo]);
        self.positions[lo] + w * (self.positions[hi] - self.positions[lo])
    }

    /// Velocity at the linear interpolant, for times strictly between samples; at a
    /// sample point the mean of the adjacent slopes.
    pub fn slope_at(&self, t: f64) -> f64 {
        let n = self.times.len();
        let segment = |i: usize| {
            (self.positions[i + 1] - self.positions[i]) / (self.times[i + 1] - self.times[i])
        };
        if t <= self.times[0] {
            return segment(0);
        }
        if t >= self.times[n - 1] {
            return segment(n - 2);
        }
        let hi = self.times.partition_point(|&s| s <= t);
        let lo = hi - 1;
        if t == self.times[lo] && lo > 0 {
            0.5 * (segment(lo - 1) + segment(lo))
        } else {
            segment(lo)
        }
    }

    pub fn min_position(&self) -> f64 {
        self.positions.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max_position(&self) -> f64 {
        self.positions
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// Checks that every sample lies inside the configuration's grid.
    pub fn check_range(&self, cfg: &PhysicsConfig) -> Result<()> {
        if self.min_position() < cfg.grid_min || self.max_position() > cfg.grid_max {
            return Err(Error::Domain(format!(
                "protocol range [{}, {}] leaves the grid [{}, {}]",
                self.min_position(),
                self.max_position(),
                cfg.grid_min,
                cfg.grid_max
            )));
        }
        Ok(())
    }

    /// First time derivative at every sample.
    pub fn velocities(&self) -> Vec<f64> {
        differentiate(&self.times, &self.positions)
    }

    /// Second time derivative, computed by applying the first-derivative stencil twice.
    pub fn accelerations(&self) -> Vec<f64> {
        differentiate(&self.times, &self.velocities())
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(ProtocolFile {
            duration: self.duration(),
            samples: self
                .times
                .iter()
                .zip(&self.positions)
                .map(|(&t, &x)| [t, x])
                .collect(),
            kind: self.kind,
        })
        .expect("protocol serializes")
    }

    pub fn from_json(value: serde_json::Value) -> Result<Self> {
        let file: ProtocolFile = serde_json::from_value(value)?;
        Self::from_file(file)
    }

    fn from_file(file: ProtocolFile) -> Result<Self> {
        let (times, positions): (Vec<f64>, Vec<f64>) =
            file.samples.iter().map(|s| (s[0], s[1])).unzip();
        let p = Self::new(times, positions, file.kind)?;
        if (p.duration() - file.duration).abs() > 1e-9 * file.duration.abs().max(1.0) {
            return Err(Error::Domain(format!(
                "declared T = {} but samples end at {}",
                file.duration,
                p.duration()
            )));
        }
        Ok(p)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_file(serde_json::from_str(&text)?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(&self.to_json())?)?;
        Ok(())
    }
}

/// Derivative of the polynomial through `nodes` (at most four) evaluated at `at`.
fn lagrange_slope(ts: &[f64], ys: &[f64], at: f64) -> f64 {
    let k = ts.len();
    let mut total = 0.0;
    for j in 0..k {
        let mut denom = 1.0;
        for m in 0..k {
            if m != j {
                denom *= ts[j] - ts[m];
            }
        }
        // d/dt prod_{m != j} (t - t_m)
        let mut numer = 0.0;
        for skip in 0..k {
            if skip == j {
                continue;
            }
            numer += (0..k)
                .filter(|&m| m != j && m != skip)
                .map(|m| at - ts[m])
                .product::<f64>();
        }
        // Weights sum to zero; offsetting by ys[0] keeps constants exact.
        total += (ys[j] - ys[0]) * numer / denom;
    }
    total
}

/// Central differences (second order on non-uniform spacing) in the interior and
/// four-point one-sided stencils at the ends, which are exact for cubics.
pub(crate) fn differentiate(times: &[f64], values: &[f64]) -> Vec<f64> {
    let n = times.len();
    if n < 2 {
        return vec![0.0; n];
    }
    if n < 4 {
        let slope = (values[n - 1] - values[0]) / (times[n - 1] - times[0]);
        return vec![slope; n];
    }
    let mut out = vec![0.0; n];
    out[0] = lagrange_slope(&times[..4], &values[..4], times[0]);
    out[n - 1] = lagrange_slope(&times[n - 4..], &values[n - 4..], times[n - 1]);
    for i in 1..n - 1 {
        let h0 = times[i] - times[i - 1];
        let h1 = times[i + 1] - times[i];
        let right = (values[i + 1] - values[i]) / h1;
        let left = (values[i] - values[i - 1]) / h0;
        out[i] = (right * h0 + left * h1) / (h0 + h1);
    }
    out
}

/// `x0(t) = L (2 (t/T)^3 - 3 (t/T)^2 + 1/2) + center`, from `center + L/2` to `center - L/2`
/// with zero velocity at both ends.
pub fn cubic_ramp(distance: f64, duration: f64, center: f64) -> Result<Protocol> {
    cubic_ramp_with_samples(distance, duration, center, DEFAULT_SAMPLES)
}

pub fn cubic_ramp_with_samples(
    distance: f64,
    duration: f64,
    center: f64,
    samples: usize,
) -> Result<Protocol> {
    Protocol::from_fn(duration, samples, ProtocolKind::Cubic, |t| {
        let u = t / duration;
        distance * (2.0 * u * u * u - 3.0 * u * u + 0.5) + center
    })
}

/// Cubic ramp between the configured transport endpoints.
pub fn transport_cubic(cfg: &PhysicsConfig, duration: f64) -> Result<Protocol> {
    let center = 0.5 * (cfg.x0_start + cfg.x0_end);
    cubic_ramp(cfg.x0_start - cfg.x0_end, duration, center)
}
