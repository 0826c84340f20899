//! Constant-atom-speed protocols: `sqrt(g(x0)) x0' = const` in the interior, joined to
//! constant-acceleration ramps so the tweezer starts and stops at rest.

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::protocol::{MetricTable, Protocol, ProtocolKind, DEFAULT_SAMPLES};

pub const DEFAULT_RAMP_FRACTION: f64 = 0.15;

const ARC_INTERVALS: usize = 20_000;
const JUNCTION_SCAN: usize = 4_000;

/// `S(x) = int_{lo}^{x} sqrt(g)`, tabulated on a fine uniform grid (Simpson per cell).
struct ArcLength {
    xs: Vec<f64>,
    s: Vec<f64>,
}

impl ArcLength {
    fn new(table: &MetricTable) -> Self {
        let (lo, hi) = table.range();
        let h = (hi - lo) / ARC_INTERVALS as f64;
        let xs: Vec<f64> = (0..=ARC_INTERVALS).map(|i| lo + h * i as f64).collect();
        let mut s = Vec::with_capacity(xs.len());
        s.push(0.0);
        for w in xs.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            let cell =
                h / 6.0 * (table.sqrt_g(w[0]) + 4.0 * table.sqrt_g(mid) + table.sqrt_g(w[1]));
            s.push(s.last().unwrap() + cell);
        }
        Self { xs, s }
    }

    fn at(&self, x: f64) -> f64 {
        interpolate(&self.xs, &self.s, x)
    }

    fn inverse(&self, s: f64) -> f64 {
        interpolate(&self.s, &self.xs, s)
    }
}

fn interpolate(from: &[f64], to: &[f64], v: f64) -> f64 {
    let n = from.len();
    let k = from.partition_point(|&f| f <= v).clamp(1, n - 1);
    let w = (v - from[k - 1]) / (from[k] - from[k - 1]);
    to[k - 1] + w.clamp(0.0, 1.0) * (to[k] - to[k - 1])
}

/// Smallest distance `u` from `anchor` (towards `direction`) at which a constant
/// acceleration ramp of duration `ramp` reaches the atom speed `c`.
fn junction(
    table: &MetricTable,
    anchor: f64,
    direction: f64,
    span: f64,
    ramp: f64,
    c: f64,
) -> Option<f64> {
    let f = |u: f64| u - 0.5 * ramp * c / table.sqrt_g(anchor + direction * u);
    let step = span / JUNCTION_SCAN as f64;
    let mut prev = 0.0;
    for k in 1..=JUNCTION_SCAN {
        let u = step * k as f64;
        if f(u) >= 0.0 {
            let (mut a, mut b) = (prev, u);
            for _ in 0..80 {
                let mid = 0.5 * (a + b);
                if f(mid) >= 0.0 {
                    b = mid;
                } else {
                    a = mid;
                }
            }
            return Some(0.5 * (a + b));
        }
        prev = u;
    }
    None
}

struct Plan {
    start: f64,
    end: f64,
    direction: f64,
    ramp: f64,
    speed: f64,
    entry: f64,
    entry_acceleration: f64,
    exit_acceleration: f64,
}

fn plan(
    table: &MetricTable,
    arc: &ArcLength,
    start: f64,
    end: f64,
    duration: f64,
    ramp: f64,
) -> Result<Plan> {
    let direction = (end - start).signum();
    let span = (end - start).abs();
    let cruise = duration - 2.0 * ramp;
    // Interior time at atom speed c minus the time available; None when the ramps overlap.
    let residual = |c: f64| -> Option<(f64, f64, f64)> {
        let u1 = junction(table, start, direction, span, ramp, c)?;
        let u2 = junction(table, end, -direction, span, ramp, c)?;
        if u1 + u2 >= span {
            return None;
        }
        let x1 = start + direction * u1;
        let x2 = end - direction * u2;
        Some(((arc.at(x2) - arc.at(x1)).abs() / c - cruise, x1, x2))
    };
    let mut lo = 1e-9;
    let mut hi = 1.0;
    while residual(hi).is_some_and(|(r, _, _)| r > 0.0) {
        hi *= 2.0;
        if hi > 1e12 {
            return Err(Error::Numeric("geodesic speed search diverged".into()));
        }
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        match residual(mid) {
            Some((r, _, _)) if r > 0.0 => lo = mid,
            _ => hi = mid,
        }
        if hi / lo - 1.0 < 1e-14 {
            break;
        }
    }
    let speed = lo;
    let (_, entry, exit) = residual(speed)
        .ok_or_else(|| Error::Numeric("geodesic ramps overlap at the solved speed".into()))?;
    Ok(Plan {
        start,
        end,
        direction,
        ramp,
        speed,
        entry,
        entry_acceleration: speed / table.sqrt_g(entry) / ramp,
        exit_acceleration: speed / table.sqrt_g(exit) / ramp,
    })
}

/// Geodesic transport from `cfg.x0_start` to `cfg.x0_end` in time `duration`.
pub fn geodesic_protocol(
    table: &MetricTable,
    duration: f64,
    cfg: &PhysicsConfig,
    ramp_fraction: f64,
) -> Result<Protocol> {
    geodesic_protocol_with_samples(table, duration, cfg, ramp_fraction, DEFAULT_SAMPLES)
}

pub fn geodesic_protocol_with_samples(
    table: &MetricTable,
    duration: f64,
    cfg: &PhysicsConfig,
    ramp_fraction: f64,
    samples: usize,
) -> Result<Protocol> {
    if !(ramp_fraction > 0.0 && ramp_fraction < 0.5) {
        return Err(Error::Domain(format!(
            "ramp fraction must lie in (0, 0.5), got {ramp_fraction}"
        )));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Domain(format!(
            "duration must be positive, got {duration}"
        )));
    }
    if !table.contains(cfg.x0_start) || !table.contains(cfg.x0_end) {
        let (lo, hi) = table.range();
        return Err(Error::Domain(format!(
            "metric table [{lo}, {hi}] does not cover the transport endpoints {} -> {}",
            cfg.x0_start, cfg.x0_end
        )));
    }
    let arc = ArcLength::new(table);
    let ramp = ramp_fraction * duration;
    let p = plan(table, &arc, cfg.x0_start, cfg.x0_end, duration, ramp)?;
    let s_entry = arc.at(p.entry);
    let position = |t: f64| -> f64 {
        if t <= p.ramp {
            p.start + p.direction * 0.5 * p.entry_acceleration * t * t
        } else if t >= duration - p.ramp {
            let r = duration - t;
            p.end - p.direction * 0.5 * p.exit_acceleration * r * r
        } else {
            arc.inverse(s_entry + p.direction * p.speed * (t - p.ramp))
        }
    };
    Protocol::from_fn(duration, samples, ProtocolKind::Geodesic, position)
}
