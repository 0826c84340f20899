//! Effective adiabatic metric `g(x0)`: how fast the atom's ground-state density moves
//! per unit tweezer displacement, from the least-squares solution of the continuity
//! equation restricted to a homogeneous velocity field.

use std::fmt::Write as _;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::schrodinger::ground_state;

/// `sqrt(g) = int (-d n/d x0)(d n/d x) dx / int (d n/d x)^2 dx` for the ground-state density.
///
/// `d n/d x0` is a symmetric difference of two ground-state solves at `x0 +- dx`;
/// `d n/d x` uses central differences on the grid.
pub fn metric_sqrt(x0: f64, cfg: &PhysicsConfig) -> Result<f64> {
    let grid = cfg.grid();
    let delta = grid.dx();
    if !(x0 - delta >= grid.x_min() && x0 + delta <= grid.x_max()) {
        return Err(Error::Domain(format!(
            "metric position {x0} too close to the grid edge"
        )));
    }
    let density = ground_state(x0, cfg)?.1.density();
    let plus = ground_state(x0 + delta, cfg)?.1.density();
    let minus = ground_state(x0 - delta, cfg)?.1.density();
    let n = density.len();
    let mut numer = 0.0;
    let mut denom = 0.0;
    for i in 1..n - 1 {
        let dn_dx = (density[i + 1] - density[i - 1]) / (2.0 * delta);
        let dn_dx0 = (plus[i] - minus[i]) / (2.0 * delta);
        numer -= dn_dx0 * dn_dx;
        denom += dn_dx * dn_dx;
    }
    if denom == 0.0 {
        return Err(Error::Numeric("density has no spatial gradient".into()));
    }
    Ok(numer / denom)
}

pub fn metric(x0: f64, cfg: &PhysicsConfig) -> Result<f64> {
    Ok(metric_sqrt(x0, cfg)?.powi(2))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Interpolation {
    #[default]
    Cubic,
    Linear,
}

/// Sampled `x0 -> g(x0)` with natural-cubic-spline or piecewise-linear interpolation.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricTable {
    positions: Vec<f64>,
    values: Vec<f64>,
    interpolation: Interpolation,
    curvature: Vec<f64>,
}

impl MetricTable {
    pub fn new(
        positions: Vec<f64>,
        values: Vec<f64>,
        interpolation: Interpolation,
    ) -> Result<Self> {
        if positions.len() != values.len() || positions.len() < 2 {
            return Err(Error::Domain(
                "metric table needs matching samples, at least two".into(),
            ));
        }
        if positions.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Domain(
                "metric positions must be strictly increasing".into(),
            ));
        }
        if let Some((x, g)) = positions
            .iter()
            .zip(&values)
            .find(|(_, &g)| !(g > 0.0) || !g.is_finite())
        {
            return Err(Error::Numeric(format!(
                "non-positive metric g({x}) = {g}; density derivative under-resolved"
            )));
        }
        let curvature = match interpolation {
            Interpolation::Cubic => natural_spline_curvature(&positions, &values),
            Interpolation::Linear => vec![0.0; positions.len()],
        };
        Ok(Self {
            positions,
            values,
            interpolation,
            curvature,
        })
    }

    /// Constant metric, used for flat-space reductions.
    pub fn flat(value: f64, lo: f64, hi: f64, samples: usize) -> Result<Self> {
        let positions = (0..samples)
            .map(|k| lo + (hi - lo) * k as f64 / (samples - 1) as f64)
            .collect();
        Self::new(positions, vec![value; samples], Interpolation::Linear)
    }

    pub fn positions(&self) -> &[f64] {
        &self.positions
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn interpolation(&self) -> Interpolation {
        self.interpolation
    }

    pub fn range(&self) -> (f64, f64) {
        (self.positions[0], *self.positions.last().unwrap())
    }

    pub fn contains(&self, x: f64) -> bool {
        let (lo, hi) = self.range();
        x >= lo && x <= hi
    }

    /// Interpolated metric; positions outside the table are clamped to its ends.
    pub fn g(&self, x: f64) -> f64 {
        let (lo, hi) = self.range();
        let x = x.clamp(lo, hi);
        let k = self
            .positions
            .partition_point(|&p| p <= x)
            .clamp(1, self.positions.len() - 1);
        let (x0, x1) = (self.positions[k - 1], self.positions[k]);
        let (y0, y1) = (self.values[k - 1], self.values[k]);
        let h = x1 - x0;
        let a = (x1 - x) / h;
        let b = (x - x0) / h;
        let linear = a * y0 + b * y1;
        match self.interpolation {
            Interpolation::Linear => linear,
            Interpolation::Cubic => {
                let (m0, m1) = (self.curvature[k - 1], self.curvature[k]);
                linear + ((a * a * a - a) * m0 + (b * b * b - b) * m1) * h * h / 6.0
            }
        }
    }

    pub fn sqrt_g(&self, x: f64) -> f64 {
        self.g(x).max(f64::MIN_POSITIVE).sqrt()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("x0,g\n");
        for (x, g) in self.positions.iter().zip(&self.values) {
            let _ = writeln!(out, "{x},{g}");
        }
        out
    }

    pub fn from_csv(text: &str, interpolation: Interpolation) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("x0,g") => {}
            other => {
                return Err(Error::Domain(format!(
                    "expected metric CSV header 'x0,g', found {other:?}"
                )))
            }
        }
        let mut positions = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            let mut parts = line.split(',');
            let parse = |s: Option<&str>| -> Result<f64> {
                s.and_then(|v| v.trim().parse().ok())
                    .ok_or_else(|| Error::Domain(format!("bad metric CSV row '{line}'")))
            };
            positions.push(parse(parts.next())?);
            values.push(parse(parts.next())?);
        }
        Self::new(positions, values, interpolation)
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }
}

/// Second derivatives of the natural cubic spline through the samples.
fn natural_spline_curvature(x: &[f64], y: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut m = vec![0.0; n];
    if n < 3 {
        return m;
    }
    // Tridiagonal system for interior second derivatives (Thomas algorithm).
    let mut diag = vec![0.0; n];
    let mut rhs = vec![0.0; n];
    let mut upper = vec![0.0; n];
    for i in 1..n - 1 {
        let h0 = x[i] - x[i - 1];
        let h1 = x[i + 1] - x[i];
        let lower = h0 / 6.0;
        diag[i] = (h0 + h1) / 3.0;
        upper[i] = h1 / 6.0;
        rhs[i] = (y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0;
        if i > 1 {
            let w = lower / diag[i - 1];
            diag[i] -= w * upper[i - 1];
            rhs[i] -= w * rhs[i - 1];
        }
    }
    for i in (1..n - 1).rev() {
        m[i] = (rhs[i] - upper[i] * m[i + 1]) / diag[i];
    }
    m
}

/// Samples the metric at `n_samples` uniformly spaced positions on `[x0_min, x0_max]`.
pub fn build_metric_table(
    cfg: &PhysicsConfig,
    x0_min: f64,
    x0_max: f64,
    n_samples: usize,
) -> Result<MetricTable> {
    if n_samples < 32 {
        return Err(Error::Domain(format!(
            "metric table needs at least 32 samples, got {n_samples}"
        )));
    }
    if !(x0_max > x0_min) {
        return Err(Error::Domain("metric range must be increasing".into()));
    }
    cfg.validate()?;
    let positions: Vec<f64> = (0..n_samples)
        .map(|k| x0_min + (x0_max - x0_min) * k as f64 / (n_samples - 1) as f64)
        .collect();
    let values = positions
        .par_iter()
        .map(|&x| metric(x, cfg))
        .collect::<Result<Vec<_>>>()?;
    MetricTable::new(positions, values, Interpolation::Cubic)
}
