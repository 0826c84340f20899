use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid `x_i = x_min + i dx`, `i = 0..n`, both ends included.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpatialGrid {
    x_min: f64,
    dx: f64,
    len: usize,
}

impl SpatialGrid {
    pub fn new(x_min: f64, x_max: f64, len: usize) -> Self {
        assert!(len >= 2 && x_max > x_min, "degenerate grid");
        Self {
            x_min,
            dx: (x_max - x_min) / (len - 1) as f64,
            len,
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn x_max(&self) -> f64 {
        self.x(self.len - 1)
    }

    pub fn x(&self, i: usize) -> f64 {
        self.x_min + i as f64 * self.dx
    }

    pub fn points(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len).map(move |i| self.x(i))
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.x_min && x <= self.x_max()
    }

    /// Same layout up to round-off.
    pub fn compatible(&self, other: &SpatialGrid) -> bool {
        self.len == other.len
            && (self.dx - other.dx).abs() <= 1e-14 * self.dx.abs()
            && (self.x_min - other.x_min).abs() <= 1e-14 * (1.0 + self.x_min.abs())
    }
}

/// Complex amplitudes on a [`SpatialGrid`], normalized so that `sum |psi_i|^2 dx = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveFunction {
    grid: SpatialGrid,
    amplitudes: Vec<Complex64>,
}

impl WaveFunction {
    /// Wraps amplitudes and rescales them to unit norm.
    pub fn new(grid: SpatialGrid, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != grid.len() {
            return Err(Error::Domain(format!(
                "{} amplitudes for a grid of {} points",
                amplitudes.len(),
                grid.len()
            )));
        }
        let mut psi = Self { grid, amplitudes };
        let norm = psi.norm_squared().sqrt();
        if !norm.is_finite() || norm == 0.0 {
            return Err(Error::Numeric(
                "wave function has zero or non-finite norm".into(),
            ));
        }
        psi.amplitudes.iter_mut().for_each(|a| *a /= norm);
        Ok(psi)
    }

    pub fn from_real(grid: SpatialGrid, values: &[f64]) -> Result<Self> {
        Self::new(
            grid,
            values.iter().map(|&v| Complex64::new(v, 0.0)).collect(),
        )
    }

    /// Wraps amplitudes as they are; the caller guarantees normalization.
    pub(crate) fn from_parts_unchecked(grid: SpatialGrid, amplitudes: Vec<Complex64>) -> Self {
        debug_assert_eq!(grid.len(), amplitudes.len());
        Self { grid, amplitudes }
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<Complex64> {
        self.amplitudes
    }

    pub fn norm_squared(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum::<f64>() * self.grid.dx()
    }

    /// `<self|other> = sum conj(self_i) other_i dx`.
    pub fn inner(&self, other: &WaveFunction) -> Result<Complex64> {
        if !self.grid.compatible(&other.grid) {
            return Err(Error::Contract(
                "wave functions live on different grids".into(),
            ));
        }
        let sum: Complex64 = self
            .amplitudes
            .iter()
            .zip(&other.amplitudes)
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok(sum * self.grid.dx())
    }

    pub fn density(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|a| a.norm_sqr()).collect()
    }

    pub fn scaled(&self, factor: Complex64) -> WaveFunction {
        Self {
            grid: self.grid.clone(),
            amplitudes: self.amplitudes.iter().map(|a| a * factor).collect(),
        }
    }

    pub fn same_grid(&self, other: &WaveFunction) -> bool {
        self.grid.compatible(&other.grid)
    }
}
