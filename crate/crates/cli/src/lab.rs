//! Simulation entry points shared by the CLI and the service, so both produce
//! bit-identical fidelities for the same protocol.

use std::sync::{Arc, OnceLock};

use qmoves_core::optimizer::{optimize, OptimizationTrace, OptimizerConfig};
use qmoves_core::propagation::{
    boundary_states, evolve, frame_positions, quantize_protocol, DiscreteProtocol, PositionLattice,
    SpectralStore, UnitaryBank,
};
use qmoves_core::protocol::ReferenceFamily;
use qmoves_core::schrodinger::ground_state;
use qmoves_core::{Protocol, ProtocolKind, WaveFunction};
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

/// Frames returned per simulation at most; longer runs are strided.
pub const MAX_FRAMES: usize = 120;

/// Which states a simulation starts from and is scored against.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Endpoints {
    /// The configured transport convention.
    #[default]
    Transport,
    /// Ground states at the protocol's first and last lattice positions.
    Protocol,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Frame {
    pub t: f64,
    pub x0: f64,
    pub density: Vec<f64>,
    pub potential: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Simulation {
    pub fidelity: f64,
    #[serde(rename = "T")]
    pub duration: f64,
    #[serde(rename = "N")]
    pub steps: usize,
    pub indices: Vec<usize>,
    /// Bin centres of the frame densities.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub x: Option<Vec<f64>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub frames: Option<Vec<Frame>>,
}

pub struct Lab {
    config: RunConfig,
    lattice: PositionLattice,
    store: Arc<SpectralStore>,
    family: OnceLock<ReferenceFamily>,
    transport: OnceLock<(WaveFunction, WaveFunction)>,
}

impl Lab {
    pub fn new(config: RunConfig) -> CliResult<Self> {
        config.validate()?;
        let lattice = config.lattice.build()?;
        let store = Arc::new(SpectralStore::new(
            &config.physics,
            &lattice,
            config.memory_budget,
        )?);
        Ok(Self {
            config,
            lattice,
            store,
            family: OnceLock::new(),
            transport: OnceLock::new(),
        })
    }

    pub fn config(&self) -> &RunConfig {
        &self.config
    }

    pub fn lattice(&self) -> &PositionLattice {
        &self.lattice
    }

    pub fn store(&self) -> &Arc<SpectralStore> {
        &self.store
    }

    pub fn family(&self) -> CliResult<&ReferenceFamily> {
        if let Some(f) = self.family.get() {
            return Ok(f);
        }
        let f = ReferenceFamily::new(&self.config.physics)?;
        Ok(self.family.get_or_init(|| f))
    }

    /// `(initial, target)` under the configured convention.
    pub fn transport_states(&self) -> CliResult<&(WaveFunction, WaveFunction)> {
        if let Some(s) = self.transport.get() {
            return Ok(s);
        }
        let s = boundary_states(&self.config.physics, self.config.convention)?;
        Ok(self.transport.get_or_init(|| s))
    }

    /// Step count for duration `T`, from the override or the configured rule.
    pub fn steps_for(&self, duration: f64, steps: Option<usize>) -> CliResult<usize> {
        check_duration(duration)?;
        match steps {
            Some(0) => Err(CliError::Config("steps must be at least 1".into())),
            Some(n) => Ok(n),
            None => Ok(self.config.step_rule.steps(duration)),
        }
    }

    pub fn bank(&self, duration: f64, steps: usize) -> CliResult<UnitaryBank> {
        check_duration(duration)?;
        Ok(UnitaryBank::new(
            Arc::clone(&self.store),
            duration / steps as f64,
        )?)
    }

    pub fn discretize(&self, protocol: &Protocol, steps: usize) -> CliResult<DiscreteProtocol> {
        Ok(quantize_protocol(protocol, &self.lattice, steps)?)
    }

    pub fn simulate(
        &self,
        protocol: &Protocol,
        steps: Option<usize>,
        endpoints: Endpoints,
        frames: bool,
    ) -> CliResult<Simulation> {
        let n = self.steps_for(protocol.duration(), steps)?;
        let bank = self.bank(protocol.duration(), n)?;
        self.simulate_with(protocol, n, &bank, endpoints, frames)
    }

    /// Like [`Lab::simulate`] with a caller-supplied bank whose step must be `T / steps`.
    pub fn simulate_with(
        &self,
        protocol: &Protocol,
        steps: usize,
        bank: &UnitaryBank,
        endpoints: Endpoints,
        frames: bool,
    ) -> CliResult<Simulation> {
        let duration = protocol.duration();
        if bank.dt() != duration / steps as f64 {
            return Err(CliError::Numeric(
                "bank time step does not match the protocol".into(),
            ));
        }
        let dp = self.discretize(protocol, steps)?;
        let owned;
        let (psi0, phi) = match endpoints {
            Endpoints::Transport => {
                let s = self.transport_states()?;
                (&s.0, &s.1)
            }
            Endpoints::Protocol => {
                let first = self.lattice.position(dp.indices()[0]);
                let last = self.lattice.position(dp.indices()[steps - 1]);
                owned = (
                    ground_state(first, &self.config.physics)?.1,
                    ground_state(last, &self.config.physics)?.1,
                );
                (&owned.0, &owned.1)
            }
        };
        let stride = frames.then(|| steps.div_ceil(MAX_FRAMES));
        let result = evolve(&dp, bank, psi0, Some(phi), stride)?;
        let fidelity = result.fidelity.expect("target supplied");
        if !fidelity.is_finite() {
            return Err(CliError::Numeric("fidelity is not finite".into()));
        }
        let (x, frames) = if frames {
            let x = frame_positions(&self.store.grid());
            let positions = dp.positions();
            let dt = bank.dt();
            let frames = result
                .frames
                .into_iter()
                .map(|f| {
                    let done = (f.t / dt).round() as usize;
                    let x0 = positions[done.saturating_sub(1).min(steps - 1)];
                    let potential = x
                        .iter()
                        .map(|&xi| self.config.physics.potential(xi, x0))
                        .collect();
                    Frame {
                        t: f.t,
                        x0,
                        density: f.density,
                        potential,
                    }
                })
                .collect();
            (Some(x), Some(frames))
        } else {
            (None, None)
        };
        Ok(Simulation {
            fidelity: fidelity.clamp(0.0, 1.0),
            duration,
            steps,
            indices: dp.indices().to_vec(),
            x,
            frames,
        })
    }

    /// Optimizer run at duration `T` with the configured settings and `steps` steps.
    pub fn optimize(&self, duration: f64, steps: usize, seed: u64) -> CliResult<OptimizationTrace> {
        let cfg = OptimizerConfig {
            steps,
            seed,
            ..self.config.optimizer.clone()
        };
        let bank = self.bank(duration, steps)?;
        let (psi0, phi) = self.transport_states()?;
        Ok(optimize(&cfg, &bank, psi0, phi)?)
    }

    /// The reference protocol of `kind` at `T`, snapped to the lattice, and its simulation.
    ///
    /// The returned protocol has a sample at every step midpoint, so replaying it
    /// reproduces the same step sequence and fidelity exactly.
    pub fn reference(
        &self,
        kind: ProtocolKind,
        duration: f64,
    ) -> CliResult<(Protocol, Simulation)> {
        let steps = self.steps_for(duration, None)?;
        let dp = match kind {
            ProtocolKind::Optimized => {
                let trace = self.optimize(duration, steps, self.config.optimizer.seed)?;
                DiscreteProtocol::new(trace.final_protocol, self.lattice.clone())?
            }
            ProtocolKind::Human => {
                return Err(CliError::Config("human protocols have no reference".into()))
            }
            _ => self.discretize(&self.family()?.protocol(kind, duration)?, steps)?,
        };
        let published = dp.to_protocol(duration, kind)?;
        let sim = self.simulate(&published, Some(steps), Endpoints::Transport, false)?;
        Ok((published, sim))
    }
}

fn check_duration(duration: f64) -> CliResult<()> {
    if !(duration > 0.0) || !duration.is_finite() {
        return Err(CliError::Config(format!(
            "duration must be positive, got {duration}"
        )));
    }
    Ok(())
}
