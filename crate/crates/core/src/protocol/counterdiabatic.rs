//! Counter-diabatic position shifts: the tweezer is displaced so that its restoring
//! force cancels the pseudo-force of the accelerating frame.

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::protocol::{differentiate, MetricTable, Protocol, ProtocolKind};

/// End velocities must vanish to this fraction of the mean speed `L / T`.
const END_VELOCITY_TOLERANCE: f64 = 1e-6;

fn check_end_velocities(base: &Protocol, velocities: &[f64]) -> Result<()> {
    let distance = (base.end() - base.start()).abs();
    // Absolute floor for round-off on stationary protocols.
    let scale = base.start().abs().max(base.end().abs()).max(1.0);
    let limit = (END_VELOCITY_TOLERANCE * distance + 1e-9 * scale) / base.duration();
    let (first, last) = (velocities[0], velocities[velocities.len() - 1]);
    if first.abs() > limit || last.abs() > limit {
        return Err(Error::Contract(format!(
            "base protocol must start and end at rest; end velocities {first:e}, {last:e} exceed {limit:e}"
        )));
    }
    Ok(())
}

/// `x_CD = x0 + x0'' / omega^2` with `omega^2 = A / (m sigma^2)`.
pub fn cd_correct_single(base: &Protocol, cfg: &PhysicsConfig) -> Result<Protocol> {
    let velocities = base.velocities();
    check_end_velocities(base, &velocities)?;
    let omega2 = cfg.trap_frequency().powi(2);
    let accelerations = differentiate(base.times(), &velocities);
    let positions = base
        .positions()
        .iter()
        .zip(&accelerations)
        .map(|(x, a)| x + a / omega2)
        .collect();
    Protocol::new(base.times().to_vec(), positions, ProtocolKind::CdSingle)
}

/// `x_CD = x0 + d/dt(sqrt(g(x0)) x0') / omega^2`, the correction for the deviation of
/// the atom's velocity `sqrt(g) x0'` from a constant.
pub fn cd_correct_double(
    base: &Protocol,
    table: &MetricTable,
    cfg: &PhysicsConfig,
) -> Result<Protocol> {
    let velocities = base.velocities();
    check_end_velocities(base, &velocities)?;
    let (lo, hi) = table.range();
    if base.min_position() < lo || base.max_position() > hi {
        return Err(Error::Domain(format!(
            "protocol range [{}, {}] exceeds metric table [{lo}, {hi}]",
            base.min_position(),
            base.max_position()
        )));
    }
    let omega2 = cfg.trap_frequency().powi(2);
    let atom_velocity: Vec<f64> = base
        .positions()
        .iter()
        .zip(&velocities)
        .map(|(&x, &v)| table.sqrt_g(x) * v)
        .collect();
    let rate = differentiate(base.times(), &atom_velocity);
    let positions = base
        .positions()
        .iter()
        .zip(&rate)
        .map(|(x, r)| x + r / omega2)
        .collect();
    Protocol::new(base.times().to_vec(), positions, ProtocolKind::CdDouble)
}
