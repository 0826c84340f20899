//! Resonant double wells: level splitting against tweezer separation.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::schrodinger::{spectral_decomposition, SpectralDecomposition};

/// Two Gaussians of depth `A` at `+-d/2`; the moving tweezer sits at `+d/2`.
pub fn resonant_config(cfg: &PhysicsConfig, separation: f64) -> PhysicsConfig {
    PhysicsConfig {
        static_amplitude: cfg.moving_amplitude,
        static_center: -0.5 * separation,
        ..cfg.clone()
    }
}

fn lowest_pair(cfg: &PhysicsConfig, separation: f64) -> Result<SpectralDecomposition> {
    if !(separation >= 0.0) || !separation.is_finite() {
        return Err(Error::Domain(format!(
            "separation must be non-negative, got {separation}"
        )));
    }
    spectral_decomposition(0.5 * separation, &resonant_config(cfg, separation), 2)
}

/// Lowest point of the resonant double well, by a scan refined with golden sections.
fn potential_minimum(cfg: &PhysicsConfig, separation: f64) -> f64 {
    let v = |x: f64| cfg.potential(x, 0.5 * separation);
    let hi = 0.5 * separation + 3.0 * cfg.width;
    let scan = 2000;
    let step = hi / scan as f64;
    let best = (0..=scan)
        .map(|i| i as f64 * step)
        .min_by(|a, b| v(*a).total_cmp(&v(*b)))
        .unwrap_or(0.0);
    let (mut a, mut b) = ((best - step).max(0.0), best + step);
    let ratio = 0.5 * (5f64.sqrt() - 1.0);
    for _ in 0..100 {
        let c = b - ratio * (b - a);
        let d = a + ratio * (b - a);
        if v(c) < v(d) {
            b = d;
        } else {
            a = c;
        }
    }
    v(0.5 * (a + b)).min(v(best))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BarrierReport {
    #[serde(rename = "E0")]
    pub e0: f64,
    /// Potential at the midpoint between the wells.
    pub barrier_top: f64,
    pub barrier_height: f64,
    /// `E0` lies below the barrier top, so crossing is classically forbidden.
    pub tunneling_regime: bool,
}

fn barrier_from(cfg: &PhysicsConfig, separation: f64, e0: f64) -> BarrierReport {
    let top = cfg.potential(0.0, 0.5 * separation);
    BarrierReport {
        e0,
        barrier_top: top,
        barrier_height: top - potential_minimum(cfg, separation),
        tunneling_regime: e0 < top,
    }
}

pub fn barrier_report(cfg: &PhysicsConfig, separation: f64) -> Result<BarrierReport> {
    let spec = lowest_pair(cfg, separation)?;
    Ok(barrier_from(
        &resonant_config(cfg, separation),
        separation,
        spec.energies()[0],
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TunnelSample {
    #[serde(rename = "d")]
    pub separation: f64,
    /// `E1 - E0`
    pub splitting: f64,
    /// Half the splitting, the tunnel matrix element between the local ground states.
    pub coupling: f64,
    /// `pi hbar / splitting`
    pub transfer_time: f64,
    pub barrier_height: f64,
    #[serde(rename = "E0")]
    pub e0: f64,
    pub tunneling_regime: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TunnelCurve {
    pub samples: Vec<TunnelSample>,
}

pub fn tunnel_curve(cfg: &PhysicsConfig, separations: &[f64]) -> Result<TunnelCurve> {
    if separations.is_empty() {
        return Err(Error::Domain(
            "tunnel curve needs at least one separation".into(),
        ));
    }
    if separations.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Domain(
            "separations must be strictly ascending".into(),
        ));
    }
    let samples = separations
        .par_iter()
        .map(|&d| {
            let spec = lowest_pair(cfg, d)?;
            let (e0, e1) = (spec.energies()[0], spec.energies()[1]);
            let splitting = (e1 - e0).max(0.0);
            let barrier = barrier_from(&resonant_config(cfg, d), d, e0);
            Ok(TunnelSample {
                separation: d,
                splitting,
                coupling: 0.5 * splitting,
                transfer_time: PI * cfg.hbar / splitting,
                barrier_height: barrier.barrier_height,
                e0,
                tunneling_regime: barrier.tunneling_regime,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TunnelCurve { samples })
}

impl TunnelCurve {
    pub fn to_csv(&self) -> String {
        let mut out =
            String::from("d,splitting,transfer_time,barrier_height,E0,tunneling_regime\n");
        for s in &self.samples {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{}",
                s.separation,
                s.splitting,
                s.transfer_time,
                s.barrier_height,
                s.e0,
                s.tunneling_regime
            );
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayFit {
    /// Decay rate from `log(splitting) = c - kappa d`.
    pub kappa: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub points: usize,
}

/// Least-squares line through `log(splitting)` for samples with `d` in `[d_min, d_max]`.
pub fn fit_decay(curve: &TunnelCurve, d_min: f64, d_max: f64) -> Result<DecayFit> {
    let pts: Vec<(f64, f64)> = curve
        .samples
        .iter()
        .filter(|s| s.separation >= d_min && s.separation <= d_max && s.splitting > 0.0)
        .map(|s| (s.separation, s.splitting.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::Domain(format!(
            "need at least three positive splittings in [{d_min}, {d_max}], found {}",
            pts.len()
        )));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = sxy / sxx;
    Ok(DecayFit {
        kappa: -slope,
        intercept: my - slope * mx,
        r_squared: sxy * sxy / (sxx * syy),
        points: pts.len(),
    })
}

/// `sqrt(-2 m E0) / hbar` for the ground state `E0` of a single tweezer.
pub fn reference_kappa(cfg: &PhysicsConfig) -> Result<f64> {
    let single = cfg.single_tweezer();
    let e0 = spectral_decomposition(0.0, &single, 1)?.energies()[0];
    if e0 >= 0.0 {
        return Err(Error::Numeric(format!(
            "single tweezer is unbound, E0 = {e0}"
        )));
    }
    Ok((-2.0 * cfg.mass * e0).sqrt() / cfg.hbar)
}

/// Largest separation whose transfer time fits in `budget`, interpolating
/// `log(transfer_time)` linearly between samples.
pub fn max_tunnel_distance(curve: &TunnelCurve, budget: f64) -> Result<f64> {
    let s = &curve.samples;
    let Some(last_ok) = s.iter().rposition(|p| p.transfer_time <= budget) else {
        return Err(Error::Domain(format!(
            "no sampled separation transfers within {budget}"
        )));
    };
    if last_ok + 1 == s.len() {
        return Ok(s[last_ok].separation);
    }
    let (a, b) = (&s[last_ok], &s[last_ok + 1]);
    let (la, lb) = (a.transfer_time.ln(), b.transfer_time.ln());
    let w = ((budget.ln() - la) / (lb - la)).clamp(0.0, 1.0);
    Ok(a.separation + w * (b.separation - a.separation))
}

/// Transfer time at `separation`, by direct diagonalization.
pub fn transfer_time(cfg: &PhysicsConfig, separation: f64) -> Result<f64> {
    let spec = lowest_pair(cfg, separation)?;
    Ok(PI * cfg.hbar / (spec.energies()[1] - spec.energies()[0]))
}
