use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Allowed tweezer positions, uniformly spaced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PositionLattice {
    first: f64,
    spacing: f64,
    len: usize,
}

impl PositionLattice {
    pub const DEFAULT_LEN: usize = 128;

    pub fn new(first: f64, spacing: f64, len: usize) -> Result<Self> {
        if len == 0 {
            return Err(Error::Domain("lattice needs at least one position".into()));
        }
        if !(spacing > 0.0) || !spacing.is_finite() || !first.is_finite() {
            return Err(Error::Domain(format!(
                "lattice spacing must be positive and finite, got {spacing}"
            )));
        }
        Ok(Self {
            first,
            spacing,
            len,
        })
    }

    /// `len` cells tiling `[lo, hi]`, one position at the centre of each.
    pub fn centered(lo: f64, hi: f64, len: usize) -> Result<Self> {
        if !(hi > lo) {
            return Err(Error::Domain("lattice range must be increasing".into()));
        }
        let spacing = (hi - lo) / len.max(1) as f64;
        Self::new(lo + 0.5 * spacing, spacing, len)
    }

    /// 128 positions `-1 + (k + 1/2)/64`.
    pub fn standard() -> Self {
        Self::centered(-1.0, 1.0, Self::DEFAULT_LEN).expect("valid constants")
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn position(&self, k: usize) -> f64 {
        self.first + self.spacing * k as f64
    }

    pub fn positions(&self) -> impl ExactSizeIterator<Item = f64> + '_ {
        (0..self.len).map(|k| self.position(k))
    }

    /// Span covered by the lattice cells, half a spacing beyond the outer positions.
    pub fn range(&self) -> (f64, f64) {
        let half = 0.5 * self.spacing;
        (self.first - half, self.position(self.len - 1) + half)
    }

    /// Index of the nearest position. On an exact tie between two positions the one equal
    /// to `previous` wins, otherwise the lower index.
    pub fn nearest(&self, x: f64, previous: Option<usize>) -> Result<usize> {
        let (lo, hi) = self.range();
        if !(x >= lo && x <= hi) {
            return Err(Error::Domain(format!(
                "position {x} outside lattice range [{lo}, {hi}]"
            )));
        }
        let u = (x - self.first) / self.spacing;
        let below = u.floor().clamp(0.0, (self.len - 1) as f64) as usize;
        let above = (below + 1).min(self.len - 1);
        let d_below = (x - self.position(below)).abs();
        let d_above = (self.position(above) - x).abs();
        Ok(if d_below < d_above {
            below
        } else if d_above < d_below || previous == Some(above) {
            above
        } else {
            below
        })
    }
}
