//! Finite-difference Hamiltonians for the one- and two-tweezer potentials, their
//! spectra, and ground-state densities.

use ndarray::{Array2, ArrayView1, Axis};

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, WaveFunction};
use crate::tridiag;

/// `H = p^2/2m + V(x - x0)` on the grid, second-order central differences, hard walls.
#[derive(Debug, Clone, PartialEq)]
pub struct HamiltonianMatrix {
    x0: f64,
    grid: SpatialGrid,
    diagonal: Vec<f64>,
    offdiagonal: Vec<f64>,
}

impl HamiltonianMatrix {
    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.diagonal.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diagonal
    }

    /// The `dim - 1` nearest-neighbour couplings, all equal to `-hbar^2 / (2 m dx^2)`.
    pub fn offdiagonal(&self) -> &[f64] {
        &self.offdiagonal
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let n = self.dim();
        let mut h = Array2::zeros((n, n));
        for i in 0..n {
            h[[i, i]] = self.diagonal[i];
            if i + 1 < n {
                h[[i, i + 1]] = self.offdiagonal[i];
                h[[i + 1, i]] = self.offdiagonal[i];
            }
        }
        h
    }

    /// `H v` for a real grid vector.
    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = self.dim();
        (0..n)
            .map(|i| {
                let mut acc = self.diagonal[i] * v[i];
                if i > 0 {
                    acc += self.offdiagonal[i - 1] * v[i - 1];
                }
                if i + 1 < n {
                    acc += self.offdiagonal[i] * v[i + 1];
                }
                acc
            })
            .collect()
    }
}

pub fn build_hamiltonian(x0: f64, cfg: &PhysicsConfig) -> Result<HamiltonianMatrix> {
    cfg.validate()?;
    let grid = cfg.grid();
    if !x0.is_finite() || !grid.contains(x0) {
        return Err(Error::Domain(format!(
            "tweezer position {x0} outside grid [{}, {}]",
            grid.x_min(),
            grid.x_max()
        )));
    }
    let hopping = cfg.hbar * cfg.hbar / (2.0 * cfg.mass * grid.dx() * grid.dx());
    let diagonal = grid
        .points()
        .map(|x| 2.0 * hopping + cfg.potential(x, x0))
        .collect();
    let offdiagonal = vec![-hopping; grid.len() - 1];
    Ok(HamiltonianMatrix {
        x0,
        grid,
        diagonal,
        offdiagonal,
    })
}

/// Lowest eigenpairs of a [`HamiltonianMatrix`]. Eigenvectors are stored with unit
/// Euclidean norm; [`SpectralDecomposition::state`] rescales them to grid normalization.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    x0: f64,
    grid: SpatialGrid,
    energies: Vec<f64>,
    vectors: Array2<f64>,
}

impl SpectralDecomposition {
    pub fn x0(&self) -> f64 {
        self.x0
    }

    pub fn grid(&self) -> &SpatialGrid {
        &self.grid
    }

    pub fn len(&self) -> usize {
        self.energies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies.is_empty()
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    /// Column `n` is the eigenvector for `energies[n]`.
    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    pub fn vector(&self, n: usize) -> ArrayView1<'_, f64> {
        self.vectors.column(n)
    }

    pub fn state(&self, n: usize) -> WaveFunction {
        let scale = 1.0 / self.grid.dx().sqrt();
        let amps = self
            .vector(n)
            .iter()
            .map(|&v| num_complex::Complex64::new(v * scale, 0.0))
            .collect();
        WaveFunction::from_parts_unchecked(self.grid.clone(), amps)
    }

    pub(crate) fn into_parts(self) -> (Vec<f64>, Array2<f64>) {
        (self.energies, self.vectors)
    }
}

/// Flips each column so that its entry at the largest |v| is positive.
fn fix_signs(vectors: &mut Array2<f64>) {
    for mut col in vectors.axis_iter_mut(Axis(1)) {
        let peak = col
            .iter()
            .copied()
            .max_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        if peak < 0.0 {
            col.mapv_inplace(|v| -v);
        }
    }
}

pub fn decompose(h: &HamiltonianMatrix, n_states: usize) -> Result<SpectralDecomposition> {
    let n = h.dim();
    if n_states == 0 || n_states > n {
        return Err(Error::Domain(format!(
            "n_states must lie in [1, {n}], got {n_states}"
        )));
    }
    let eig = if n_states == n {
        tridiag::full_eigen(h.diagonal(), h.offdiagonal())?
    } else {
        tridiag::lowest_eigenpairs(h.diagonal(), h.offdiagonal(), n_states)?
    };
    let mut vectors = eig.vectors;
    fix_signs(&mut vectors);
    Ok(SpectralDecomposition {
        x0: h.x0(),
        grid: h.grid().clone(),
        energies: eig.values,
        vectors,
    })
}

pub fn spectral_decomposition(
    x0: f64,
    cfg: &PhysicsConfig,
    n_states: usize,
) -> Result<SpectralDecomposition> {
    decompose(&build_hamiltonian(x0, cfg)?, n_states)
}

/// Lowest eigenpair; the state is real, unit-normalized and positive at its density maximum.
pub fn ground_state(x0: f64, cfg: &PhysicsConfig) -> Result<(f64, WaveFunction)> {
    let spec = spectral_decomposition(x0, cfg, 1)?;
    Ok((spec.energies()[0], spec.state(0)))
}

/// Density `|psi|^2` and its running trapezoidal integral starting from zero at the
/// left wall. The integral reaches 1 at the right wall whenever the state vanishes at
/// both walls, which holds for all bound states on the default grid.
pub fn density_and_cdf(psi: &WaveFunction) -> (Vec<f64>, Vec<f64>) {
    let density = psi.density();
    let dx = psi.grid().dx();
    let mut cdf = Vec::with_capacity(density.len());
    let mut acc = 0.0;
    cdf.push(0.0);
    for w in density.windows(2) {
        acc += 0.5 * (w[0] + w[1]) * dx;
        cdf.push(acc);
    }
    (density, cdf)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single() -> PhysicsConfig {
        PhysicsConfig {
            static_amplitude: 0.0,
            ..PhysicsConfig::default()
        }
    }

    /// Ground-state energy of the Gaussian well from the harmonic term plus first-order
    /// perturbation by the quartic term `-A x^4 / (8 sigma^4)`.
    fn perturbative_e0(cfg: &PhysicsConfig) -> f64 {
        let omega = cfg.trap_frequency();
        let length2 = cfg.hbar / (2.0 * cfg.mass * omega);
        let quartic = -cfg.moving_amplitude / (8.0 * cfg.width.powi(4));
        -cfg.moving_amplitude + 0.5 * cfg.hbar * omega + quartic * 3.0 * length2 * length2
    }

    fn perturbative_gap(cfg: &PhysicsConfig) -> f64 {
        let omega = cfg.trap_frequency();
        let length2 = cfg.hbar / (2.0 * cfg.mass * omega);
        let quartic = -cfg.moving_amplitude / (8.0 * cfg.width.powi(4));
        cfg.hbar * omega + quartic * 12.0 * length2 * length2
    }

    #[test]
    fn peak_of_single_well_diagonal() {
        let cfg = single();
        let dx = cfg.grid().dx();
        let x0 = cfg.grid().x(255);
        let h = build_hamiltonian(x0, &cfg).unwrap();
        let min = h.diagonal().iter().copied().fold(f64::INFINITY, f64::min);
        let expected = -160.0 + 2.0 / (2.0 * dx * dx);
        assert!((min - expected).abs() < 1e-9, "{min} vs {expected}");
        assert_eq!(h.diagonal()[255], min);
        assert!(h.offdiagonal().iter().all(|&o| o == -1.0 / (2.0 * dx * dx)));
    }

    #[test]
    fn mirror_symmetric_when_centered() {
        let h = build_hamiltonian(0.0, &PhysicsConfig::default()).unwrap();
        let d = h.diagonal();
        let n = d.len();
        for i in 0..n {
            assert!((d[i] - d[n - 1 - i]).abs() < 1e-10);
        }
    }

    #[test]
    fn potential_entries_match_formula() {
        let cfg = PhysicsConfig::default();
        let h = build_hamiltonian(0.55, &cfg).unwrap();
        let grid = cfg.grid();
        let kin = 1.0 / (2.0 * grid.dx() * grid.dx());
        for (i, x) in grid.points().enumerate() {
            let v =
                -160.0 * (-(x - 0.55).powi(2) / 0.03125).exp() - 130.0 * (-x * x / 0.03125).exp();
            assert!((h.diagonal()[i] - 2.0 * kin - v).abs() < 1e-9);
        }
    }

    #[test]
    fn out_of_grid_position_is_a_domain_error() {
        let cfg = PhysicsConfig::default();
        assert!(matches!(
            build_hamiltonian(2.5, &cfg),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            build_hamiltonian(f64::NAN, &cfg),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn single_well_energy_matches_anharmonic_estimate() {
        let cfg = single();
        let (e0, psi) = ground_state(0.0, &cfg).unwrap();
        let harmonic = -160.0 + 0.5 * cfg.trap_frequency();
        assert!((harmonic + 109.404).abs() < 1e-3);
        let estimate = perturbative_e0(&cfg);
        assert!(
            (e0 - estimate).abs() / estimate.abs() < 0.01,
            "{e0} vs {estimate}"
        );
        assert!((psi.norm_squared() - 1.0).abs() < 1e-10);
    }

    #[test]
    fn ground_state_is_nodeless_and_positive() {
        let (_, psi) = ground_state(0.3, &PhysicsConfig::default()).unwrap();
        assert!(psi
            .amplitudes()
            .iter()
            .all(|a| a.re >= -1e-12 && a.im == 0.0));
    }

    #[test]
    fn lowest_pair_is_consistent_with_full_spectrum() {
        let cfg = PhysicsConfig::default();
        let (e0, psi) = ground_state(0.2, &cfg).unwrap();
        let full = spectral_decomposition(0.2, &cfg, cfg.grid_points).unwrap();
        assert!((full.energies()[0] - e0).abs() < 1e-9);
        let other = full.state(0);
        for (a, b) in psi.amplitudes().iter().zip(other.amplitudes()) {
            assert!((a - b).norm() < 1e-9);
        }
    }

    #[test]
    fn full_spectrum_reconstructs_hamiltonian() {
        let cfg = PhysicsConfig {
            grid_points: 128,
            ..PhysicsConfig::default()
        };
        let h = build_hamiltonian(-0.4, &cfg).unwrap();
        let spec = decompose(&h, 128).unwrap();
        let v = spec.vectors();
        let scaled = v * &ndarray::Array1::from(spec.energies().to_vec());
        let rebuilt = scaled.dot(&v.t());
        let dense = h.to_dense();
        let err = (&rebuilt - &dense)
            .iter()
            .fold(0.0f64, |m, x| m.max(x.abs()));
        // Entries are O(1e3); 1e-8 relative to the matrix scale.
        assert!(err < 1e-8 * 4.0 / (2.0 * cfg.grid().dx().powi(2)), "{err}");
        let gram = v.t().dot(v);
        for i in 0..128 {
            for j in 0..128 {
                let want = if i == j { 1.0 } else { 0.0 };
                assert!((gram[[i, j]] - want).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn single_well_gap_matches_anharmonic_estimate() {
        let cfg = single();
        let spec = spectral_decomposition(0.0, &cfg, 2).unwrap();
        let gap = spec.energies()[1] - spec.energies()[0];
        let estimate = perturbative_gap(&cfg);
        assert!(
            (gap - estimate).abs() / estimate < 0.05,
            "{gap} vs {estimate}"
        );
        assert!(gap < cfg.trap_frequency());
    }

    #[test]
    fn cdf_boundaries_and_symmetry() {
        let cfg = PhysicsConfig {
            static_amplitude: 0.0,
            grid_points: 513,
            ..PhysicsConfig::default()
        };
        let (_, psi) = ground_state(0.0, &cfg).unwrap();
        let (n, cdf) = density_and_cdf(&psi);
        assert_eq!(cdf[0], 0.0);
        assert!((cdf.last().unwrap() - 1.0).abs() < 1e-10);
        assert!((cdf[256] - 0.5).abs() < 1e-8);
        assert!(cdf.windows(2).all(|w| w[1] >= w[0]));
        assert!(n.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn energy_decreases_with_depth() {
        let energies: Vec<f64> = [120.0, 160.0, 200.0]
            .iter()
            .map(|&a| {
                let cfg = PhysicsConfig {
                    moving_amplitude: a,
                    ..PhysicsConfig::default()
                };
                ground_state(0.55, &cfg).unwrap().0
            })
            .collect();
        assert!(energies[0] > energies[1] && energies[1] > energies[2]);
    }

    #[test]
    fn grid_refinement_changes_energy_little() {
        let coarse = PhysicsConfig::default();
        let fine = PhysicsConfig {
            grid_points: 1024,
            ..coarse.clone()
        };
        let e1 = ground_state(0.55, &coarse).unwrap().0;
        let e2 = ground_state(0.55, &fine).unwrap().0;
        assert!(((e1 - e2) / e2).abs() < 1e-4, "{e1} vs {e2}");
    }

    #[test]
    fn single_tweezer_density_translates() {
        let cfg = single();
        let dx = cfg.grid().dx();
        let shift = 12;
        // Place the tweezer on grid points so the shift is exact.
        let base = cfg.grid().x(200);
        let (_, a) = ground_state(base, &cfg).unwrap();
        let (_, b) = ground_state(base + shift as f64 * dx, &cfg).unwrap();
        let na = a.density();
        let nb = b.density();
        for i in 40..(na.len() - 40 - shift) {
            assert!((nb[i + shift] - na[i]).abs() < 1e-6);
        }
    }
}
