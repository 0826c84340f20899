//! Piecewise-constant time evolution on a lattice of tweezer positions.

mod bank;
mod lattice;

use std::fmt::Write as _;
use std::sync::Arc;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::config::PhysicsConfig;
use crate::error::{Error, Result};
use crate::grid::{SpatialGrid, WaveFunction};
use crate::protocol::{Protocol, ProtocolKind};
use crate::schrodinger::ground_state;

pub use bank::{build_bank, Factorization, SpectralStore, UnitaryBank};
pub use lattice::PositionLattice;

/// Number of points a density frame is averaged down to.
pub const FRAME_POINTS: usize = 160;

/// Step sequence `k_1 .. k_N` over a [`PositionLattice`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiscreteProtocol {
    indices: Vec<usize>,
    lattice: PositionLattice,
}

impl DiscreteProtocol {
    pub fn new(indices: Vec<usize>, lattice: PositionLattice) -> Result<Self> {
        if indices.is_empty() {
            return Err(Error::Domain(
                "a discrete protocol needs at least one step".into(),
            ));
        }
        if let Some(&k) = indices.iter().find(|&&k| k >= lattice.len()) {
            return Err(Error::Domain(format!(
                "lattice index {k} out of range 0..{}",
                lattice.len()
            )));
        }
        Ok(Self { indices, lattice })
    }

    pub fn constant(k: usize, steps: usize, lattice: PositionLattice) -> Result<Self> {
        Self::new(vec![k; steps], lattice)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn lattice(&self) -> &PositionLattice {
        &self.lattice
    }

    pub fn positions(&self) -> Vec<f64> {
        self.indices
            .iter()
            .map(|&k| self.lattice.position(k))
            .collect()
    }

    pub(crate) fn set(&mut self, step: usize, k: usize) {
        debug_assert!(k < self.lattice.len());
        self.indices[step] = k;
    }

    /// The step sequence reversed in time.
    pub fn reversed(&self) -> Self {
        Self {
            indices: self.indices.iter().rev().copied().collect(),
            lattice: self.lattice.clone(),
        }
    }

    /// Sampled protocol holding each position over its step, with samples at step
    /// midpoints plus the two ends.
    pub fn to_protocol(&self, duration: f64, kind: ProtocolKind) -> Result<Protocol> {
        let n = self.len();
        let dt = duration / n as f64;
        let positions = self.positions();
        let mut times = vec![0.0];
        let mut xs = vec![positions[0]];
        for (i, &x) in positions.iter().enumerate() {
            times.push((i as f64 + 0.5) * dt);
            xs.push(x);
        }
        times.push(duration);
        xs.push(positions[n - 1]);
        Protocol::new(times, xs, kind)
    }
}

/// Samples `p` at step midpoints `(i - 1/2) dt` and rounds each sample to the nearest
/// lattice position, breaking exact ties toward the previous step's position.
pub fn quantize_protocol(
    p: &Protocol,
    lattice: &PositionLattice,
    steps: usize,
) -> Result<DiscreteProtocol> {
    if steps == 0 {
        return Err(Error::Domain(
            "a discrete protocol needs at least one step".into(),
        ));
    }
    let (lo, hi) = lattice.range();
    if p.min_position() < lo || p.max_position() > hi {
        return Err(Error::Domain(format!(
            "protocol range [{}, {}] exceeds lattice range [{lo}, {hi}]",
            p.min_position(),
            p.max_position()
        )));
    }
    let dt = p.duration() / steps as f64;
    let mut indices: Vec<usize> = Vec::with_capacity(steps);
    for i in 0..steps {
        let x = p.position_at((i as f64 + 0.5) * dt);
        indices.push(lattice.nearest(x, indices.last().copied())?);
    }
    DiscreteProtocol::new(indices, lattice.clone())
}

/// `|<phi|psi>|^2`.
pub fn fidelity(psi: &WaveFunction, phi: &WaveFunction) -> Result<f64> {
    Ok(phi.inner(psi)?.norm_sqr())
}

/// Density averaged onto [`FRAME_POINTS`] bins at time `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityFrame {
    pub t: f64,
    pub density: Vec<f64>,
}

/// Grid index ranges of the frame bins: `points` nearly equal contiguous blocks.
pub fn frame_bins(grid_len: usize, points: usize) -> Vec<std::ops::Range<usize>> {
    let points = points.min(grid_len).max(1);
    (0..points)
        .map(|b| (b * grid_len / points)..((b + 1) * grid_len / points))
        .collect()
}

/// Bin centres of density frames on `grid`.
pub fn frame_positions(grid: &SpatialGrid) -> Vec<f64> {
    frame_bins(grid.len(), FRAME_POINTS)
        .into_iter()
        .map(|r| 0.5 * (grid.x(r.start) + grid.x(r.end - 1)))
        .collect()
}

fn downsample(amps: &[Complex64]) -> Vec<f64> {
    frame_bins(amps.len(), FRAME_POINTS)
        .into_iter()
        .map(|r| {
            let count = r.len() as f64;
            amps[r].iter().map(|a| a.norm_sqr()).sum::<f64>() / count
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SimulationResult {
    /// `|<target|psi(T)>|^2`, present when a target was supplied.
    pub fidelity: Option<f64>,
    pub frames: Vec<DensityFrame>,
    pub final_state: WaveFunction,
}

/// Applies `U_{k_N} ... U_{k_1}` to `psi0`. With `frame_stride = Some(s)` a density frame
/// is recorded at `t = 0`, after every `s`-th step, and at the end.
pub fn evolve(
    dp: &DiscreteProtocol,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    target: Option<&WaveFunction>,
    frame_stride: Option<usize>,
) -> Result<SimulationResult> {
    if dp.lattice() != bank.lattice() {
        return Err(Error::Contract(
            "protocol and bank use different lattices".into(),
        ));
    }
    if !psi0.grid().compatible(&bank.grid()) {
        return Err(Error::Contract(
            "initial state and bank use different grids".into(),
        ));
    }
    if frame_stride == Some(0) {
        return Err(Error::Domain("frame stride must be at least 1".into()));
    }
    let dt = bank.dt();
    let mut frames = Vec::new();
    let mut amps = psi0.amplitudes().to_vec();
    if frame_stride.is_some() {
        frames.push(DensityFrame {
            t: 0.0,
            density: downsample(&amps),
        });
    }
    for (i, &k) in dp.indices().iter().enumerate() {
        amps = bank.step(k, &amps)?;
        if let Some(stride) = frame_stride {
            let done = i + 1;
            if done % stride == 0 || done == dp.len() {
                frames.push(DensityFrame {
                    t: done as f64 * dt,
                    density: downsample(&amps),
                });
            }
        }
    }
    let final_state = WaveFunction::from_parts_unchecked(psi0.grid().clone(), amps);
    let fidelity = target.map(|phi| fidelity(&final_state, phi)).transpose()?;
    Ok(SimulationResult {
        fidelity,
        frames,
        final_state,
    })
}

/// Which states a transport run starts from and is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateConvention {
    /// Two-tweezer ground states at `x0_start` and `x0_end`.
    #[default]
    JointGround,
    /// The atom starts in the static tweezer alone; the target is the two-tweezer ground
    /// state at `x0_end`.
    StaticWell,
}

/// `(initial, target)` for a transport run.
pub fn boundary_states(
    cfg: &PhysicsConfig,
    convention: StateConvention,
) -> Result<(WaveFunction, WaveFunction)> {
    let target = ground_state(cfg.x0_end, cfg)?.1;
    let initial = match convention {
        StateConvention::JointGround => ground_state(cfg.x0_start, cfg)?.1,
        StateConvention::StaticWell => {
            if cfg.static_amplitude <= 0.0 {
                return Err(Error::Config("static-well convention needs B > 0".into()));
            }
            let alone = PhysicsConfig {
                moving_amplitude: cfg.static_amplitude,
                static_amplitude: 0.0,
                ..cfg.clone()
            };
            ground_state(cfg.static_center, &alone)?.1
        }
    };
    Ok((initial, target))
}

/// How many steps a protocol of duration `T` is discretized into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepRule {
    Fixed(usize),
    /// `max(min_steps, ceil(T / max_dt))`.
    MaxStep {
        max_dt: f64,
        min_steps: usize,
    },
}

impl Default for StepRule {
    fn default() -> Self {
        StepRule::MaxStep {
            max_dt: 0.0025,
            min_steps: 40,
        }
    }
}

impl StepRule {
    pub fn steps(&self, duration: f64) -> usize {
        match *self {
            StepRule::Fixed(n) => n.max(1),
            StepRule::MaxStep { max_dt, min_steps } => {
                ((duration / max_dt).ceil() as usize).max(min_steps).max(1)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CurvePoint {
    #[serde(rename = "T")]
    pub duration: f64,
    #[serde(rename = "F")]
    pub fidelity: f64,
    pub steps: usize,
    pub protocol_kind: ProtocolKind,
}

/// Transport fidelity of `family(T)` for every `T` in `durations`, reusing one spectral
/// store across durations.
pub fn fidelity_curve<F>(
    family: F,
    store: &Arc<SpectralStore>,
    rule: StepRule,
    durations: &[f64],
    convention: StateConvention,
) -> Result<Vec<CurvePoint>>
where
    F: Fn(f64) -> Result<Protocol>,
{
    if durations.is_empty() {
        return Err(Error::Domain(
            "fidelity curve needs at least one duration".into(),
        ));
    }
    if durations.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::Domain("durations must be ascending".into()));
    }
    let (psi0, phi) = boundary_states(store.config(), convention)?;
    durations
        .iter()
        .map(|&duration| {
            let protocol = family(duration)?;
            let steps = rule.steps(duration);
            let dp = quantize_protocol(&protocol, store.lattice(), steps)?;
            let bank = UnitaryBank::new(Arc::clone(store), duration / steps as f64)?;
            let result = evolve(&dp, &bank, &psi0, Some(&phi), None)?;
            Ok(CurvePoint {
                duration,
                fidelity: result.fidelity.expect("target supplied"),
                steps,
                protocol_kind: protocol.kind(),
            })
        })
        .collect()
}

pub fn curve_to_csv(points: &[CurvePoint]) -> String {
    let mut out = String::from("T,F,protocol_kind\n");
    for p in points {
        let _ = writeln!(out, "{},{},{}", p.duration, p.fidelity, p.protocol_kind);
    }
    out
}
