//! Exact step propagators `exp(-i H_k dt / hbar)` applied through stored eigenbases.

use std::sync::{Arc, OnceLock};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::grid::SpatialGrid;
use crate::propagation::PositionLattice;
use crate::schrodinger::spectral_decomposition;

/// Full eigenbasis of one lattice Hamiltonian, eigenvectors of unit Euclidean norm
/// stored one after another.
#[derive(Debug)]
pub struct Factorization {
    energies: Vec<f64>,
    basis: Vec<f64>,
    dim: usize,
}

impl Factorization {
    fn new(energies: Vec<f64>, vectors: Array2<f64>) -> Self {
        let dim = vectors.nrows();
        let basis = vectors
            .columns()
            .into_iter()
            .flat_map(|c| c.to_vec())
            .collect();
        Self {
            energies,
            basis,
            dim,
        }
    }

    pub fn energies(&self) -> &[f64] {
        &self.energies
    }

    pub fn vector(&self, n: usize) -> &[f64] {
        &self.basis[n * self.dim..(n + 1) * self.dim]
    }

    /// `out[n][c] = <v_n, x_c>` for every eigenvector `v_n`.
    fn project<const C: usize>(&self, x: [&[f64]; C]) -> Vec<[f64; C]> {
        self.basis
            .chunks_exact(self.dim)
            .map(|v| dot_columns(v, x))
            .collect()
    }

    /// `sum_n coeffs[n] v_n` for complex coefficients stored as `[re, im]`.
    fn expand(&self, coeffs: &[[f64; 2]]) -> Vec<Complex64> {
        let mut re = vec![0.0; self.dim];
        let mut im = vec![0.0; self.dim];
        for (v, c) in self.basis.chunks_exact(self.dim).zip(coeffs) {
            for ((r, i), &vi) in re.iter_mut().zip(im.iter_mut()).zip(v) {
                *r += c[0] * vi;
                *i += c[1] * vi;
            }
        }
        re.into_iter()
            .zip(im)
            .map(|(r, i)| Complex64::new(r, i))
            .collect()
    }
}

const LANES: usize = 8;

/// Relative accuracy of [`UnitaryBank::local_overlaps`].
pub const OVERLAP_TOLERANCE: f64 = 1e-13;

/// Eigenvectors processed between checks of the truncation bound.
const OVERLAP_BLOCK: usize = 16;

/// Dot products of `v` with each of the `C` columns.
fn dot_columns<const C: usize>(v: &[f64], x: [&[f64]; C]) -> [f64; C] {
    #[cfg(target_arch = "x86_64")]
    if is_x86_feature_detected!("avx2") && is_x86_feature_detected!("fma") {
        // SAFETY: the required CPU features were detected at runtime.
        return unsafe { dot_columns_fma(v, x) };
    }
    dot_columns_lanes::<C, false>(v, x)
}

#[cfg(target_arch = "x86_64")]
#[target_feature(enable = "avx2,fma")]
unsafe fn dot_columns_fma<const C: usize>(v: &[f64], x: [&[f64]; C]) -> [f64; C] {
    dot_columns_lanes::<C, true>(v, x)
}

/// Accumulates in independent lanes so the loop vectorizes; `FUSED` selects `mul_add`,
/// which is only fast where the hardware has it.
#[inline(always)]
fn dot_columns_lanes<const C: usize, const FUSED: bool>(v: &[f64], x: [&[f64]; C]) -> [f64; C] {
    let mut acc = [[0.0; LANES]; C];
    let body = v.len() / LANES * LANES;
    for start in (0..body).step_by(LANES) {
        let vs = &v[start..start + LANES];
        for (a, xc) in acc.iter_mut().zip(&x) {
            let xs = &xc[start..start + LANES];
            for lane in 0..LANES {
                a[lane] = if FUSED {
                    vs[lane].mul_add(xs[lane], a[lane])
                } else {
                    a[lane] + vs[lane] * xs[lane]
                };
            }
        }
    }
    let mut out = [0.0; C];
    for (c, a) in acc.iter().enumerate() {
        out[c] = a.iter().sum::<f64>() + (body..v.len()).map(|i| v[i] * x[c][i]).sum::<f64>();
    }
    out
}

/// Eigenbases of `H(x^k)` for every lattice position, independent of the time step.
/// Entries are computed on first use, or all at once by [`SpectralStore::build_all`].
#[derive(Debug)]
pub struct SpectralStore {
    cfg: PhysicsConfig,
    lattice: PositionLattice,
    slots: Vec<OnceLock<Factorization>>,
}

impl SpectralStore {
    /// Fails with [`Error::Resource`] when the fully built store would exceed
    /// `memory_budget` bytes.
    pub fn new(
        cfg: &PhysicsConfig,
        lattice: &PositionLattice,
        memory_budget: Option<usize>,
    ) -> Result<Self> {
        cfg.validate()?;
        let (lo, hi) = lattice.range();
        if lo < cfg.grid_min || hi > cfg.grid_max {
            return Err(Error::Domain(format!(
                "lattice [{lo}, {hi}] leaves the grid [{}, {}]",
                cfg.grid_min, cfg.grid_max
            )));
        }
        let required = Self::required_bytes(cfg, lattice);
        if let Some(budget) = memory_budget {
            if required > budget {
                return Err(Error::Resource(format!(
                    "spectral store for {} positions on {} grid points needs {required} bytes, budget is {budget}",
                    lattice.len(),
                    cfg.grid_points
                )));
            }
        }
        Ok(Self {
            cfg: cfg.clone(),
            lattice: lattice.clone(),
            slots: (0..lattice.len()).map(|_| OnceLock::new()).collect(),
        })
    }

    /// Memory held by a fully built store.
    pub fn required_bytes(cfg: &PhysicsConfig, lattice: &PositionLattice) -> usize {
        let n = cfg.grid_points;
        lattice.len() * (n * n + n) * std::mem::size_of::<f64>()
    }

    pub fn config(&self) -> &PhysicsConfig {
        &self.cfg
    }

    pub fn lattice(&self) -> &PositionLattice {
        &self.lattice
    }

    pub fn grid(&self) -> SpatialGrid {
        self.cfg.grid()
    }

    pub fn built(&self) -> usize {
        self.slots.iter().filter(|s| s.get().is_some()).count()
    }

    pub fn factorization(&self, k: usize) -> Result<&Factorization> {
        let slot = self.slots.get(k).ok_or_else(|| {
            Error::Contract(format!(
                "lattice index {k} out of range 0..{}",
                self.slots.len()
            ))
        })?;
        if let Some(f) = slot.get() {
            return Ok(f);
        }
        let spec =
            spectral_decomposition(self.lattice.position(k), &self.cfg, self.cfg.grid_points)?;
        let (energies, vectors) = spec.into_parts();
        Ok(slot.get_or_init(|| Factorization::new(energies, vectors)))
    }

    pub fn build_all(&self) -> Result<()> {
        (0..self.slots.len())
            .into_par_iter()
            .try_for_each(|k| self.factorization(k).map(|_| ()))
    }
}

/// Step propagators for one time step `dt` over a shared [`SpectralStore`].
#[derive(Debug)]
pub struct UnitaryBank {
    store: Arc<SpectralStore>,
    dt: f64,
    phases: Vec<OnceLock<Vec<Complex64>>>,
}

impl UnitaryBank {
    pub fn new(store: Arc<SpectralStore>, dt: f64) -> Result<Self> {
        if !(dt >= 0.0) || !dt.is_finite() {
            return Err(Error::Domain(format!(
                "time step must be non-negative, got {dt}"
            )));
        }
        let phases = (0..store.lattice().len())
            .map(|_| OnceLock::new())
            .collect();
        Ok(Self { store, dt, phases })
    }

    pub fn store(&self) -> &Arc<SpectralStore> {
        &self.store
    }

    pub fn lattice(&self) -> &PositionLattice {
        self.store.lattice()
    }

    pub fn grid(&self) -> SpatialGrid {
        self.store.grid()
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// The same factorizations with a different time step.
    pub fn with_dt(&self, dt: f64) -> Result<Self> {
        Self::new(Arc::clone(&self.store), dt)
    }

    fn phases(&self, k: usize) -> Result<(&Factorization, &[Complex64])> {
        let f = self.store.factorization(k)?;
        let scale = self.dt / self.store.config().hbar;
        let phases = self.phases[k].get_or_init(|| {
            f.energies
                .iter()
                .map(|&e| Complex64::from_polar(1.0, -e * scale))
                .collect()
        });
        Ok((f, phases))
    }

    fn check_len(&self, amps: &[Complex64]) -> Result<()> {
        if amps.len() != self.store.cfg.grid_points {
            return Err(Error::Contract(format!(
                "state has {} amplitudes, bank grid has {}",
                amps.len(),
                self.store.cfg.grid_points
            )));
        }
        Ok(())
    }

    fn apply(&self, k: usize, amps: &[Complex64], inverse: bool) -> Result<Vec<Complex64>> {
        self.check_len(amps)?;
        let (f, phases) = self.phases(k)?;
        let (re, im): (Vec<f64>, Vec<f64>) = amps.iter().map(|a| (a.re, a.im)).unzip();
        let coeffs: Vec<[f64; 2]> = f
            .project([&re, &im])
            .into_iter()
            .zip(phases)
            .map(|([r, i], p)| {
                let p = if inverse { p.conj() } else { *p };
                let c = Complex64::new(r, i) * p;
                [c.re, c.im]
            })
            .collect();
        Ok(f.expand(&coeffs))
    }

    /// `U_k psi` on raw grid amplitudes.
    pub fn step(&self, k: usize, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(k, amps, false)
    }

    /// `U_k^dagger psi`.
    pub fn step_back(&self, k: usize, amps: &[Complex64]) -> Result<Vec<Complex64>> {
        self.apply(k, amps, true)
    }

    /// `<phi|U_k|psi>` (grid inner product, including `dx`) for every lattice index `k`.
    ///
    /// Eigenvectors are visited in ascending energy and the sum stops once the remaining
    /// terms are bounded by [`OVERLAP_TOLERANCE`] times `|phi| |psi|`. The bound is
    /// Cauchy-Schwarz on the unprojected weights, which are known from the norms.
    pub fn local_overlaps(&self, psi: &[Complex64], phi: &[Complex64]) -> Result<Vec<Complex64>> {
        self.check_len(psi)?;
        self.check_len(phi)?;
        let (phi_re, phi_im): (Vec<f64>, Vec<f64>) = phi.iter().map(|a| (a.re, a.im)).unzip();
        let (psi_re, psi_im): (Vec<f64>, Vec<f64>) = psi.iter().map(|a| (a.re, a.im)).unzip();
        let phi_norm: f64 = phi.iter().map(|a| a.norm_sqr()).sum();
        let psi_norm: f64 = psi.iter().map(|a| a.norm_sqr()).sum();
        // Round-off floor on the tail weights, which are computed by subtraction.
        let guard = 64.0 * f64::EPSILON;
        let limit = (OVERLAP_TOLERANCE * OVERLAP_TOLERANCE) * phi_norm * psi_norm;
        let dx = self.store.grid().dx();
        (0..self.lattice().len())
            .into_par_iter()
            .map(|k| {
                let (f, phases) = self.phases(k)?;
                let mut sum = Complex64::new(0.0, 0.0);
                let (mut phi_seen, mut psi_seen) = (0.0, 0.0);
                for (block, vs) in f.basis.chunks(OVERLAP_BLOCK * f.dim).enumerate() {
                    for (j, v) in vs.chunks_exact(f.dim).enumerate() {
                        let [ar, ai, br, bi] = dot_columns(v, [&phi_re, &phi_im, &psi_re, &psi_im]);
                        let p = phases[block * OVERLAP_BLOCK + j];
                        sum += Complex64::new(ar, -ai) * Complex64::new(br, bi) * p;
                        phi_seen += ar * ar + ai * ai;
                        psi_seen += br * br + bi * bi;
                    }
                    let phi_tail = (phi_norm - phi_seen).max(0.0) + guard * phi_norm;
                    let psi_tail = (psi_norm - psi_seen).max(0.0) + guard * psi_norm;
                    if phi_tail * psi_tail <= limit {
                        break;
                    }
                }
                Ok(sum * dx)
            })
            .collect()
    }
}

/// Store plus bank for `dt = duration / steps`; `eager` builds every factorization now.
pub fn build_bank(
    cfg: &PhysicsConfig,
    lattice: &PositionLattice,
    duration: f64,
    steps: usize,
    eager: bool,
    memory_budget: Option<usize>,
) -> Result<UnitaryBank> {
    if steps == 0 {
        return Err(Error::Domain(
            "a discrete protocol needs at least one step".into(),
        ));
    }
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(Error::Domain(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let store = Arc::new(SpectralStore::new(cfg, lattice, memory_budget)?);
    if eager {
        store.build_all()?;
    }
    UnitaryBank::new(store, duration / steps as f64)
}
