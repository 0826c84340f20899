//! Resolved run configuration: defaults, overlaid by a JSON file, overlaid by flags.

use std::path::Path;

use qmoves_core::optimizer::OptimizerConfig;
use qmoves_core::propagation::{PositionLattice, StateConvention, StepRule};
use qmoves_core::PhysicsConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LatticeConfig {
    pub lo: f64,
    pub hi: f64,
    pub len: usize,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            lo: -1.0,
            hi: 1.0,
            len: PositionLattice::DEFAULT_LEN,
        }
    }
}

impl LatticeConfig {
    pub fn build(&self) -> CliResult<PositionLattice> {
        if self.len < 2 {
            return Err(CliError::Config(
                "lattice needs at least two positions".into(),
            ));
        }
        Ok(PositionLattice::centered(self.lo, self.hi, self.len)?)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ServiceConfig {
    /// Simulations allowed to run at once; further requests get 429.
    pub max_concurrent: usize,
    /// Budget for cached step phases, in bytes.
    pub bank_cache_bytes: usize,
    pub max_duration: f64,
    pub max_steps: usize,
    pub max_samples: usize,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            max_concurrent: 4,
            bank_cache_bytes: 64 << 20,
            max_duration: 2.0,
            max_steps: 2000,
            max_samples: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub physics: PhysicsConfig,
    pub lattice: LatticeConfig,
    pub step_rule: StepRule,
    pub convention: StateConvention,
    pub optimizer: OptimizerConfig,
    /// Upper bound on the spectral store, in bytes.
    pub memory_budget: Option<usize>,
    pub service: ServiceConfig,
}

impl RunConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Config(format!("config {}: {e}", path.display())))
    }

    pub fn validate(&self) -> CliResult<()> {
        self.physics.validate()?;
        let lattice = self.lattice.build()?;
        self.optimizer.validate(lattice.len())?;
        if let StepRule::MaxStep { max_dt, .. } = self.step_rule {
            if !(max_dt > 0.0) || !max_dt.is_finite() {
                return Err(CliError::Config("step_rule.max_dt must be positive".into()));
            }
        }
        if self.service.max_concurrent == 0 {
            return Err(CliError::Config(
                "service.max_concurrent must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// First 8 hex digits of the SHA-256 of the canonical JSON.
    pub fn short_hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        hex::encode(&Sha256::digest(text.as_bytes())[..4])
    }
}

/// Flag values that override the file and defaults when present.
#[derive(Debug, Clone, Default, PartialEq, Serialize, clap::Args)]
pub struct PhysicsFlags {
    /// Moving tweezer depth.
    #[arg(long = "A", global = true, allow_hyphen_values = true)]
    pub a: Option<f64>,
    /// Static tweezer depth.
    #[arg(long = "B", global = true, allow_hyphen_values = true)]
    pub b: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub sigma: Option<f64>,
    /// Static tweezer centre.
    #[arg(long = "x-b", global = true, allow_hyphen_values = true)]
    pub x_b: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub mass: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub hbar: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid_min: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub grid_max: Option<f64>,
    /// Spatial grid points.
    #[arg(long, global = true)]
    pub nx: Option<usize>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x0_start: Option<f64>,
    #[arg(long, global = true, allow_hyphen_values = true)]
    pub x0_end: Option<f64>,
    /// Number of tweezer lattice positions.
    #[arg(long = "M", global = true)]
    pub lattice_len: Option<usize>,
    #[arg(long, global = true)]
    pub convention: Option<ConventionArg>,
    /// Spectral store budget in MiB.
    #[arg(long, global = true)]
    pub memory_budget_mb: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ConventionArg {
    JointGround,
    StaticWell,
}

impl From<ConventionArg> for StateConvention {
    fn from(c: ConventionArg) -> Self {
        match c {
            ConventionArg::JointGround => StateConvention::JointGround,
            ConventionArg::StaticWell => StateConvention::StaticWell,
        }
    }
}

impl PhysicsFlags {
    pub fn apply(&self, cfg: &mut RunConfig) {
        let p = &mut cfg.physics;
        set(&mut p.moving_amplitude, self.a);
        set(&mut p.static_amplitude, self.b);
        set(&mut p.width, self.sigma);
        set(&mut p.static_center, self.x_b);
        set(&mut p.mass, self.mass);
        set(&mut p.hbar, self.hbar);
        set(&mut p.grid_min, self.grid_min);
        set(&mut p.grid_max, self.grid_max);
        set(&mut p.grid_points, self.nx);
        set(&mut p.x0_start, self.x0_start);
        set(&mut p.x0_end, self.x0_end);
        set(&mut cfg.lattice.len, self.lattice_len);
        if let Some(c) = self.convention {
            cfg.convention = c.into();
        }
        if let Some(mb) = self.memory_budget_mb {
            cfg.memory_budget = Some(mb << 20);
        }
    }
}

pub(crate) fn set<T>(slot: &mut T, value: Option<T>) {
    if let Some(v) = value {
        *slot = v;
    }
}

/// Defaults, then `file`, then `flags`.
pub fn resolve(file: Option<&Path>, flags: &PhysicsFlags) -> CliResult<RunConfig> {
    let mut cfg = match file {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    flags.apply(&mut cfg);
    Ok(cfg)
}
