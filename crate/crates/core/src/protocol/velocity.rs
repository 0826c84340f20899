use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::protocol::Protocol;
use crate::schrodinger::{density_and_cdf, ground_state};

/// Densities below this are treated as empty space and the velocity is left undefined.
pub const DENSITY_FLOOR: f64 = 1e-8;

/// Velocity field `v = -d_t I / d_x I` that transports the instantaneous ground-state
/// density along a protocol.
#[derive(Debug, Clone)]
pub struct VelocityField {
    pub t: f64,
    pub x0: f64,
    /// Tweezer velocity at `t` from the same symmetric difference used for the densities.
    pub tweezer_velocity: f64,
    pub positions: Vec<f64>,
    /// `None` where the density is below [`DENSITY_FLOOR`].
    pub velocity: Vec<Option<f64>>,
    pub density: Vec<f64>,
    pub density_rate: Vec<f64>,
    dx: f64,
}

impl VelocityField {
    fn flux(&self) -> Vec<f64> {
        self.velocity
            .iter()
            .zip(&self.density)
            .map(|(v, n)| v.map_or(0.0, |v| v * n))
            .collect()
    }

    fn central(&self, f: &[f64], i: usize) -> f64 {
        (f[i + 1] - f[i - 1]) / (2.0 * self.dx)
    }

    /// Homogeneous speed `w` minimizing `int (d_t n + d_x(w n))^2`, evaluated with the
    /// density rate implied by this field's flux.
    pub fn least_squares_speed(&self) -> f64 {
        let flux = self.flux();
        let n = self.density.len();
        let mut numer = 0.0;
        let mut denom = 0.0;
        for i in 1..n - 1 {
            let dn = self.central(&self.density, i);
            numer += self.central(&flux, i) * dn;
            denom += dn * dn;
        }
        numer / denom
    }

    /// L2 norms of the continuity residual `d_t n + d_x(v n)` and of `d_t n` over points
    /// whose stencil is entirely unmasked.
    pub fn continuity_residual(&self) -> (f64, f64) {
        let flux = self.flux();
        let n = self.density.len();
        let mut residual = 0.0;
        let mut rate = 0.0;
        for i in 1..n - 1 {
            if self.velocity[i - 1..=i + 1].iter().any(Option::is_none) {
                continue;
            }
            let r = self.density_rate[i] + self.central(&flux, i);
            residual += r * r;
            rate += self.density_rate[i] * self.density_rate[i];
        }
        (residual.sqrt(), rate.sqrt())
    }
}

/// `d_x I` of the trapezoidal CDF, `n + dx^2 n'' / 12`, so that the O(dx^2) error of the
/// cumulative sum cancels between numerator and denominator of `v`.
fn cdf_slope(density: &[f64], i: usize) -> f64 {
    if i == 0 || i + 1 == density.len() {
        return density[i];
    }
    (density[i - 1] + 10.0 * density[i] + density[i + 1]) / 12.0
}

/// Exact field at time `t`, with `d_t I` from ground-state CDFs at `t +- dt`.
pub fn exact_velocity_field(
    protocol: &Protocol,
    t: f64,
    cfg: &PhysicsConfig,
) -> Result<VelocityField> {
    let duration = protocol.duration();
    if !(t > 0.0 && t < duration) {
        return Err(Error::Domain(format!(
            "t = {t} must lie inside (0, {duration})"
        )));
    }
    let dt = (1e-4 * duration).min(0.5 * t).min(0.5 * (duration - t));
    let x_minus = protocol.position_at(t - dt);
    let x_plus = protocol.position_at(t + dt);
    let x0 = protocol.position_at(t);
    let (density, _) = density_and_cdf(&ground_state(x0, cfg)?.1);
    let (n_minus, i_minus) = density_and_cdf(&ground_state(x_minus, cfg)?.1);
    let (n_plus, i_plus) = density_and_cdf(&ground_state(x_plus, cfg)?.1);

    let velocity = (0..density.len())
        .map(|i| {
            (density[i] > DENSITY_FLOOR)
                .then(|| -((i_plus[i] - i_minus[i]) / (2.0 * dt)) / cdf_slope(&density, i))
        })
        .collect();
    let density_rate = n_plus
        .iter()
        .zip(&n_minus)
        .map(|(p, m)| (p - m) / (2.0 * dt))
        .collect();
    let grid = cfg.grid();
    Ok(VelocityField {
        t,
        x0,
        tweezer_velocity: (x_plus - x_minus) / (2.0 * dt),
        positions: grid.points().collect(),
        velocity,
        density,
        density_rate,
        dx: grid.dx(),
    })
}
