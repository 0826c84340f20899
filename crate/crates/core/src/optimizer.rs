//! Stochastic local ascent over discrete protocols: visit the steps in random order and
//! set each to the lattice position that maximizes the transport fidelity.

use std::fmt::Write as _;

use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::WaveFunction;
use crate::propagation::{evolve, DiscreteProtocol, UnitaryBank};

/// Identifier of the generator behind every seed, recorded in traces.
pub const RNG_ALGORITHM: &str = "chacha20 (rand_chacha 0.3, seed_from_u64)";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub steps: usize,
    pub seed: u64,
    pub max_sweeps: usize,
    /// Stop once a sweep gains no more than this; zero stops only at a fixed point.
    pub tolerance: f64,
    /// Hold the first and last steps at the given lattice indices and never visit them.
    pub pinned_ends: Option<(usize, usize)>,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            steps: 40,
            seed: 0,
            max_sweeps: 200,
            tolerance: 0.0,
            pinned_ends: None,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self, lattice_len: usize) -> Result<()> {
        if self.steps == 0 {
            return Err(Error::Config("optimizer needs at least one step".into()));
        }
        if self.max_sweeps == 0 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        if !(self.tolerance >= 0.0) {
            return Err(Error::Config("tolerance must be non-negative".into()));
        }
        if let Some((first, last)) = self.pinned_ends {
            if self.steps < 2 {
                return Err(Error::Config("pinned ends need at least two steps".into()));
            }
            if first >= lattice_len || last >= lattice_len {
                return Err(Error::Config(format!(
                    "pinned indices ({first}, {last}) outside lattice 0..{lattice_len}"
                )));
            }
        }
        Ok(())
    }
}

/// Discrete protocol with lazily maintained partial states: `forward[j]` is the state
/// after the first `j` steps and `backward[j]` is the target propagated back through
/// steps `j+1 .. N`. A change at step `w` invalidates `forward[w+1..]` and
/// `backward[..=w]`; entries are recomputed from the nearest valid one on demand.
pub struct AscentState<'a> {
    bank: &'a UnitaryBank,
    protocol: DiscreteProtocol,
    forward: Vec<Vec<Complex64>>,
    backward: Vec<Vec<Complex64>>,
    forward_valid: usize,
    backward_valid: usize,
    dx: f64,
}

impl<'a> AscentState<'a> {
    pub fn new(
        protocol: DiscreteProtocol,
        bank: &'a UnitaryBank,
        psi0: &WaveFunction,
        phi: &WaveFunction,
    ) -> Result<Self> {
        if protocol.lattice() != bank.lattice() {
            return Err(Error::Contract(
                "protocol and bank use different lattices".into(),
            ));
        }
        let grid = bank.grid();
        if !psi0.grid().compatible(&grid) || !phi.grid().compatible(&grid) {
            return Err(Error::Contract(
                "boundary states and bank use different grids".into(),
            ));
        }
        let n = protocol.len();
        let mut forward = vec![Vec::new(); n + 1];
        let mut backward = vec![Vec::new(); n + 1];
        forward[0] = psi0.amplitudes().to_vec();
        backward[n] = phi.amplitudes().to_vec();
        Ok(Self {
            bank,
            protocol,
            forward,
            backward,
            forward_valid: 0,
            backward_valid: n,
            dx: grid.dx(),
        })
    }

    pub fn protocol(&self) -> &DiscreteProtocol {
        &self.protocol
    }

    pub fn into_protocol(self) -> DiscreteProtocol {
        self.protocol
    }

    fn forward(&mut self, j: usize) -> Result<()> {
        while self.forward_valid < j {
            let i = self.forward_valid;
            self.forward[i + 1] = self
                .bank
                .step(self.protocol.indices()[i], &self.forward[i])?;
            self.forward_valid += 1;
        }
        Ok(())
    }

    fn backward(&mut self, j: usize) -> Result<()> {
        while self.backward_valid > j {
            let i = self.backward_valid;
            self.backward[i - 1] = self
                .bank
                .step_back(self.protocol.indices()[i - 1], &self.backward[i])?;
            self.backward_valid -= 1;
        }
        Ok(())
    }

    /// `F_k` for every lattice index `k` placed at step `w` (0-based), all other steps fixed.
    pub fn local_fidelities(&mut self, w: usize) -> Result<Vec<f64>> {
        if w >= self.protocol.len() {
            return Err(Error::Contract(format!(
                "step {w} out of range 0..{}",
                self.protocol.len()
            )));
        }
        self.forward(w)?;
        self.backward(w + 1)?;
        let overlaps = self
            .bank
            .local_overlaps(&self.forward[w], &self.backward[w + 1])?;
        Ok(overlaps.iter().map(|o| o.norm_sqr()).collect())
    }

    /// Fidelity of the current protocol.
    pub fn fidelity(&mut self) -> Result<f64> {
        let n = self.protocol.len();
        self.forward(n)?;
        let overlap: Complex64 = self.backward[n]
            .iter()
            .zip(&self.forward[n])
            .map(|(a, b)| a.conj() * b)
            .sum();
        Ok((overlap * self.dx).norm_sqr())
    }

    pub fn set_step(&mut self, w: usize, k: usize) -> Result<()> {
        if w >= self.protocol.len() || k >= self.protocol.lattice().len() {
            return Err(Error::Contract(format!(
                "invalid step assignment ({w}, {k})"
            )));
        }
        if self.protocol.indices()[w] != k {
            self.protocol.set(w, k);
            self.forward_valid = self.forward_valid.min(w);
            self.backward_valid = self.backward_valid.max(w + 1);
        }
        Ok(())
    }
}

/// Fidelities of all single-step replacements at step `w`, computed from scratch.
pub fn local_fidelities(
    dp: &DiscreteProtocol,
    w: usize,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    phi: &WaveFunction,
) -> Result<Vec<f64>> {
    AscentState::new(dp.clone(), bank, psi0, phi)?.local_fidelities(w)
}

/// Index of the maximum; the incumbent wins ties, otherwise the lowest index.
fn choose(values: &[f64], incumbent: usize) -> usize {
    let mut best = 0;
    for (k, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = k;
        }
    }
    if values[incumbent] >= values[best] {
        incumbent
    } else {
        best
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SweepOutcome {
    pub changes: usize,
    pub evaluations: usize,
}

/// One pass over the free steps in a fresh random order. Every visited step is set to its
/// best lattice position; `fidelity` carries the current protocol's fidelity in and out,
/// and one entry per visit is appended to `record`.
pub fn sweep(
    state: &mut AscentState<'_>,
    free_steps: &[usize],
    fidelity: &mut f64,
    rng: &mut impl Rng,
    record: &mut Vec<f64>,
) -> Result<SweepOutcome> {
    let mut order = free_steps.to_vec();
    order.shuffle(rng);
    let mut outcome = SweepOutcome {
        changes: 0,
        evaluations: 0,
    };
    for w in order {
        let values = state.local_fidelities(w)?;
        outcome.evaluations += values.len();
        let current = state.protocol().indices()[w];
        let best = choose(&values, current);
        // Compare against the carried value so recorded fidelities never decrease by
        // round-off.
        if best != current && values[best] > *fidelity {
            state.set_step(w, best)?;
            *fidelity = values[best];
            outcome.changes += 1;
        }
        record.push(*fidelity);
    }
    Ok(outcome)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    FixedPoint,
    Tolerance,
    MaxSweeps,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationTrace {
    pub seed: u64,
    #[serde(rename = "N")]
    pub steps: usize,
    #[serde(rename = "M")]
    pub lattice_len: usize,
    #[serde(rename = "T")]
    pub duration: f64,
    pub rng: String,
    /// Fidelity of the random starting protocol.
    pub initial_fidelity: f64,
    /// Current fidelity after every visited step.
    pub fidelities: Vec<f64>,
    /// Offsets into `fidelities` at which each sweep ends.
    pub sweep_bounds: Vec<usize>,
    /// Changes made in each sweep.
    pub sweep_changes: Vec<usize>,
    pub final_protocol: Vec<usize>,
    pub final_fidelity: f64,
    pub updates: usize,
    pub evaluations: usize,
    pub converged: bool,
    pub stop_reason: StopReason,
}

impl OptimizationTrace {
    pub fn sweeps(&self) -> usize {
        self.sweep_bounds.len()
    }

    pub fn is_monotone(&self) -> bool {
        std::iter::once(&self.initial_fidelity)
            .chain(&self.fidelities)
            .collect::<Vec<_>>()
            .windows(2)
            .all(|w| w[1] >= w[0])
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("trace serializes")
    }
}

/// Random initial protocol with i.i.d. uniform indices, honoring pinned ends.
pub fn random_protocol(
    cfg: &OptimizerConfig,
    bank: &UnitaryBank,
    rng: &mut impl Rng,
) -> Result<DiscreteProtocol> {
    let m = bank.lattice().len();
    let mut indices: Vec<usize> = (0..cfg.steps).map(|_| rng.gen_range(0..m)).collect();
    if let Some((first, last)) = cfg.pinned_ends {
        indices[0] = first;
        indices[cfg.steps - 1] = last;
    }
    DiscreteProtocol::new(indices, bank.lattice().clone())
}

/// Sweeps from a seeded random protocol until a sweep changes nothing, the sweep gain
/// falls to `tolerance`, or `max_sweeps` is reached.
pub fn optimize(
    cfg: &OptimizerConfig,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    phi: &WaveFunction,
) -> Result<OptimizationTrace> {
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let start = random_protocol(cfg, bank, &mut rng)?;
    optimize_from(cfg, start, &mut rng, bank, psi0, phi)
}

pub fn optimize_from(
    cfg: &OptimizerConfig,
    start: DiscreteProtocol,
    rng: &mut impl Rng,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    phi: &WaveFunction,
) -> Result<OptimizationTrace> {
    cfg.validate(bank.lattice().len())?;
    if start.len() != cfg.steps {
        return Err(Error::Contract(format!(
            "start protocol has {} steps, config expects {}",
            start.len(),
            cfg.steps
        )));
    }
    let free: Vec<usize> = match cfg.pinned_ends {
        Some(_) => (1..cfg.steps - 1).collect(),
        None => (0..cfg.steps).collect(),
    };
    let mut state = AscentState::new(start, bank, psi0, phi)?;
    let initial_fidelity = state.fidelity()?;
    let mut fidelity = initial_fidelity;
    let mut fidelities = Vec::new();
    let mut sweep_bounds = Vec::new();
    let mut sweep_changes = Vec::new();
    let mut updates = 0;
    let mut evaluations = 0;
    let mut stop_reason = StopReason::MaxSweeps;
    for _ in 0..cfg.max_sweeps {
        let before = fidelity;
        let outcome = sweep(&mut state, &free, &mut fidelity, rng, &mut fidelities)?;
        sweep_bounds.push(fidelities.len());
        sweep_changes.push(outcome.changes);
        updates += outcome.changes;
        evaluations += outcome.evaluations;
        if outcome.changes == 0 {
            stop_reason = StopReason::FixedPoint;
            break;
        }
        if cfg.tolerance > 0.0 && fidelity - before <= cfg.tolerance {
            stop_reason = StopReason::Tolerance;
            break;
        }
    }
    let final_protocol = state.into_protocol();
    Ok(OptimizationTrace {
        seed: cfg.seed,
        steps: cfg.steps,
        lattice_len: bank.lattice().len(),
        duration: bank.dt() * cfg.steps as f64,
        rng: RNG_ALGORITHM.to_string(),
        initial_fidelity,
        fidelities,
        sweep_bounds,
        sweep_changes,
        final_protocol: final_protocol.indices().to_vec(),
        final_fidelity: fidelity,
        updates,
        evaluations,
        converged: stop_reason == StopReason::FixedPoint,
        stop_reason,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnsembleSummary {
    pub runs: usize,
    pub converged: usize,
    pub min_fidelity: f64,
    pub max_fidelity: f64,
    pub median_fidelity: f64,
    /// `(max - min) / max` of the final fidelities.
    pub relative_spread: f64,
}

impl EnsembleSummary {
    pub fn from_traces(traces: &[OptimizationTrace]) -> Self {
        let mut finals: Vec<f64> = traces.iter().map(|t| t.final_fidelity).collect();
        finals.sort_by(f64::total_cmp);
        let n = finals.len();
        let median = if n == 0 {
            f64::NAN
        } else if n % 2 == 1 {
            finals[n / 2]
        } else {
            0.5 * (finals[n / 2 - 1] + finals[n / 2])
        };
        let min = finals.first().copied().unwrap_or(f64::NAN);
        let max = finals.last().copied().unwrap_or(f64::NAN);
        Self {
            runs: n,
            converged: traces.iter().filter(|t| t.converged).count(),
            min_fidelity: min,
            max_fidelity: max,
            median_fidelity: median,
            relative_spread: (max - min) / max,
        }
    }
}

/// Independent runs with seeds `template.seed + i`, in parallel over seeds.
pub fn run_ensemble(
    n_seeds: usize,
    template: &OptimizerConfig,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    phi: &WaveFunction,
) -> Result<(Vec<OptimizationTrace>, EnsembleSummary)> {
    if n_seeds == 0 {
        return Err(Error::Config("ensemble needs at least one seed".into()));
    }
    template.validate(bank.lattice().len())?;
    let traces = (0..n_seeds as u64)
        .into_par_iter()
        .map(|i| {
            let cfg = OptimizerConfig {
                seed: template.seed.wrapping_add(i),
                ..template.clone()
            };
            optimize(&cfg, bank, psi0, phi)
        })
        .collect::<Result<Vec<_>>>()?;
    let summary = EnsembleSummary::from_traces(&traces);
    Ok((traces, summary))
}

pub fn summary_csv(traces: &[OptimizationTrace]) -> String {
    let mut out = String::from("seed,final_fidelity,sweeps,updates\n");
    for t in traces {
        let _ = writeln!(
            out,
            "{},{},{},{}",
            t.seed,
            t.final_fidelity,
            t.sweeps(),
            t.updates
        );
    }
    out
}

/// Full re-evolution fidelity of `dp`, the reference the incremental path must match.
pub fn evolve_fidelity(
    dp: &DiscreteProtocol,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    phi: &WaveFunction,
) -> Result<f64> {
    Ok(evolve(dp, bank, psi0, Some(phi), None)?
        .fidelity
        .expect("target supplied"))
}

/// Local fidelities at step `w` by re-evolving the whole protocol once per candidate.
pub fn brute_force_local_fidelities(
    dp: &DiscreteProtocol,
    w: usize,
    bank: &UnitaryBank,
    psi0: &WaveFunction,
    phi: &WaveFunction,
) -> Result<Vec<f64>> {
    (0..bank.lattice().len())
        .map(|k| {
            let mut trial = dp.clone();
            trial.set(w, k);
            evolve_fidelity(&trial, bank, psi0, phi)
        })
        .collect()
}
