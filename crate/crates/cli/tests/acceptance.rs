//! Acceptance run: one PASS/FAIL/FLAG line per criterion.
//!
//! Failing criteria are reported but do not fail the process unless
//! `ACCEPTANCE_STRICT=1` is set.

use std::io::Write;
use std::sync::{Arc, OnceLock};
use std::time::Instant;

use num_complex::Complex64;
use qmoves_core::optimizer::{
    brute_force_local_fidelities, run_ensemble, AscentState, OptimizerConfig,
};
use qmoves_core::propagation::{
    boundary_states, fidelity_curve, DiscreteProtocol, PositionLattice, SpectralStore,
    StateConvention, StepRule, UnitaryBank,
};
use qmoves_core::protocol::{
    cd_correct_single, classical_speed_limit, default_metric_table, geodesic_protocol,
    transport_cubic, ReferenceFamily, DEFAULT_RAMP_FRACTION,
};
use qmoves_core::schrodinger::spectral_decomposition;
use qmoves_core::tunneling::{
    fit_decay, max_tunnel_distance, reference_kappa, transfer_time, tunnel_curve,
};
use qmoves_core::{PhysicsConfig, ProtocolKind, WaveFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

#[derive(Clone, Copy, PartialEq)]
enum Verdict {
    Pass,
    Fail,
    Flag,
}

struct Outcome {
    verdict: Verdict,
    detail: String,
}

type Criterion = (&'static str, fn() -> Outcome);

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome {
        verdict: if pass { Verdict::Pass } else { Verdict::Fail },
        detail,
    }
}

fn store() -> &'static Arc<SpectralStore> {
    static STORE: OnceLock<Arc<SpectralStore>> = OnceLock::new();
    STORE.get_or_init(|| {
        Arc::new(
            SpectralStore::new(
                &PhysicsConfig::default(),
                &PositionLattice::standard(),
                None,
            )
            .unwrap(),
        )
    })
}

fn speed_limit() -> Outcome {
    let cfg = PhysicsConfig::default();
    let at = |a: f64| {
        let c = PhysicsConfig {
            moving_amplitude: a,
            ..cfg.clone()
        };
        classical_speed_limit(&c, 1.1).unwrap().t_csl
    };
    let (t160, t130) = (at(160.0), at(130.0));
    let pass = (t160 - 0.092).abs() <= 0.001 && (t130 - 0.102).abs() <= 0.001;
    outcome(
        pass,
        format!("T_CSL(A=160) = {t160:.4}, T_CSL(A=130) = {t130:.4}"),
    )
}

fn harmonic_consistency() -> Outcome {
    let mut worst: f64 = 0.0;
    for i in 0..=100 {
        let a = 100.0 + i as f64;
        let cfg = PhysicsConfig {
            moving_amplitude: a,
            ..PhysicsConfig::default()
        };
        let r = classical_speed_limit(&cfg, 1.1).unwrap();
        worst = worst.max((r.t_csl - r.t_csl_harmonic).abs() / r.t_csl);
    }
    outcome(
        worst < 0.02,
        format!(
            "max relative gap over A in [100, 200] = {:.3}%",
            100.0 * worst
        ),
    )
}

fn fig3() -> Outcome {
    let cfg = PhysicsConfig::default();
    let t_csl = classical_speed_limit(&cfg, cfg.transport_distance())
        .unwrap()
        .t_csl;
    let family = ReferenceFamily::new(&cfg).unwrap();
    let ratios: Vec<f64> = (0..21).map(|i| 0.4 + 0.1 * i as f64).collect();
    let durations: Vec<f64> = ratios.iter().map(|r| r * t_csl).collect();
    let curve = fidelity_curve(
        |t| family.protocol(ProtocolKind::CdDouble, t),
        store(),
        StepRule::default(),
        &durations,
        StateConvention::JointGround,
    )
    .unwrap();
    let f: Vec<f64> = curve.iter().map(|p| p.fidelity).collect();
    let at = |r: f64| f[ratios.iter().position(|&x| (x - r).abs() < 1e-9).unwrap()];
    let crossing = (1..f.len())
        .find(|&i| f[i - 1] < 0.5 && f[i] >= 0.5)
        .map(|i| {
            let w = (0.5 - f[i - 1]) / (f[i] - f[i - 1]);
            ratios[i - 1] + w * (ratios[i] - ratios[i - 1])
        });
    let cross_ok = crossing.is_some_and(|r| (0.8..=1.3).contains(&r));
    let low_ok = at(0.5) < 0.2;
    let high_ok = at(1.5) > 0.8;
    let curve_text: Vec<String> = f.iter().map(|v| format!("{v:.3}")).collect();
    outcome(
        cross_ok && low_ok && high_ok,
        format!(
            "T*/T_CSL = {} [{}], F(0.5) = {:.3} [{}], F(1.5) = {:.3} [{}]; F(0.4..2.4) = {}",
            crossing.map_or("none".into(), |r| format!("{r:.3}")),
            tag(cross_ok),
            at(0.5),
            tag(low_ok),
            at(1.5),
            tag(high_ok),
            curve_text.join(" ")
        ),
    )
}

fn tag(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "miss"
    }
}

fn metric_shape() -> Outcome {
    let cfg = PhysicsConfig::default();
    let table = default_metric_table(&cfg).unwrap();
    let (xs, gs) = (table.positions(), table.values());
    let far = xs
        .iter()
        .zip(gs)
        .filter(|(x, _)| x.abs() > 0.9)
        .map(|(_, g)| (g - 1.0).abs())
        .fold(0.0, f64::max);
    // Runs of samples clearly below one; round-off around 1 on the plateau is ignored.
    let below: Vec<bool> = gs.iter().map(|&g| g < 0.99).collect();
    let runs = below.windows(2).filter(|w| !w[0] && w[1]).count() + usize::from(below[0]);
    let (lo, hi) = (cfg.x0_end.min(cfg.x0_start), cfg.x0_end.max(cfg.x0_start));
    let (peak_x, peak) = xs
        .iter()
        .zip(gs)
        .filter(|(x, _)| **x > lo && **x < hi)
        .fold(
            (f64::NAN, 0.0),
            |acc, (&x, &g)| if g > acc.1 { (x, g) } else { acc },
        );
    let shoulder = table.g(lo).max(table.g(hi));
    let pass = far < 0.05 && runs == 1 && peak > 1.5 * shoulder;
    outcome(
        pass,
        format!(
            "max |g-1| for |x0|>0.9 = {far:.2e}; {runs} contiguous region(s) with g < 1 (min g = {:.3}); peak g({peak_x:.2}) = {peak:.3} vs shoulder {shoulder:.3}",
            gs.iter().cloned().fold(f64::INFINITY, f64::min)
        ),
    )
}

fn geodesic_first_integral() -> Outcome {
    let cfg = PhysicsConfig::default();
    let table = default_metric_table(&cfg).unwrap();
    let mut worst: f64 = 0.0;
    for duration in [0.1, 0.15] {
        let p = geodesic_protocol(&table, duration, &cfg, DEFAULT_RAMP_FRACTION).unwrap();
        let v = p.velocities();
        let n = p.len();
        let margin = (DEFAULT_RAMP_FRACTION * (n - 1) as f64).ceil() as usize + 2;
        let w: Vec<f64> = (margin..n - margin)
            .map(|i| table.sqrt_g(p.positions()[i]) * v[i])
            .collect();
        let mean = w.iter().sum::<f64>() / w.len() as f64;
        worst = worst.max(
            w.iter()
                .map(|x| (x - mean).abs() / mean.abs())
                .fold(0.0, f64::max),
        );
    }
    outcome(
        worst < 0.01,
        format!(
            "max relative deviation of sqrt(g) dx0/dt over the interior = {:.3}%",
            100.0 * worst
        ),
    )
}

fn random_wave(cfg: &PhysicsConfig, rng: &mut impl Rng) -> WaveFunction {
    let amps = (0..cfg.grid_points)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    WaveFunction::new(cfg.grid(), amps).unwrap()
}

fn optimizer_oracle() -> Outcome {
    let cfg = PhysicsConfig {
        grid_points: 64,
        ..PhysicsConfig::default()
    };
    let mut rng = ChaCha20Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    let mut checks = 0;
    for _ in 0..50 {
        let n = rng.gen_range(1..=6);
        let m = rng.gen_range(2..=8);
        let lattice = PositionLattice::centered(-1.0, 1.0, m).unwrap();
        let store = Arc::new(SpectralStore::new(&cfg, &lattice, None).unwrap());
        let bank = UnitaryBank::new(store, rng.gen_range(0.001..0.02)).unwrap();
        let (psi0, phi) = if rng.gen_bool(0.5) {
            (random_wave(&cfg, &mut rng), random_wave(&cfg, &mut rng))
        } else {
            boundary_states(&cfg, StateConvention::JointGround).unwrap()
        };
        let indices = (0..n).map(|_| rng.gen_range(0..m)).collect();
        let dp = DiscreteProtocol::new(indices, lattice).unwrap();
        let mut state = AscentState::new(dp, &bank, &psi0, &phi).unwrap();
        for _ in 0..2 * n {
            let w = rng.gen_range(0..n);
            let fast = state.local_fidelities(w).unwrap();
            let slow =
                brute_force_local_fidelities(state.protocol(), w, &bank, &psi0, &phi).unwrap();
            worst = fast
                .iter()
                .zip(&slow)
                .map(|(a, b)| (a - b).abs())
                .fold(worst, f64::max);
            checks += 1;
            state
                .set_step(rng.gen_range(0..n), rng.gen_range(0..m))
                .unwrap();
        }
    }
    outcome(
        worst < 1e-10,
        format!(
            "50 instances, {checks} step queries, max |incremental - brute force| = {worst:.2e}"
        ),
    )
}

fn optimizer_ensemble() -> Vec<(String, Outcome)> {
    let cfg = PhysicsConfig::default();
    let template = OptimizerConfig {
        steps: 40,
        ..OptimizerConfig::default()
    };
    let bank = UnitaryBank::new(Arc::clone(store()), 0.1 / 40.0).unwrap();
    let (psi0, phi) = boundary_states(&cfg, StateConvention::JointGround).unwrap();
    let (traces, summary) = run_ensemble(100, &template, &bank, &psi0, &phi).unwrap();
    let monotone = traces.iter().filter(|t| t.is_monotone()).count();
    let fast = traces
        .iter()
        .filter(|t| t.converged && t.sweeps() <= 30)
        .count();
    let slowest = traces.iter().map(|t| t.sweeps()).max().unwrap_or(0);
    let level_ok = (summary.median_fidelity - 0.53).abs() <= 0.1;
    vec![
        (
            "Optimizer ensemble (a) monotone traces".into(),
            outcome(
                monotone == 100,
                format!("{monotone}/100 traces non-decreasing"),
            ),
        ),
        (
            "Optimizer ensemble (b) convergence within 30 sweeps".into(),
            outcome(
                fast >= 90,
                format!("{fast}/100 converged within 30 sweeps; slowest took {slowest}"),
            ),
        ),
        (
            "Optimizer ensemble (c) relative spread <= 3%".into(),
            outcome(
                summary.relative_spread <= 0.03,
                format!(
                    "final F in [{:.4}, {:.4}], spread {:.2}%",
                    summary.min_fidelity,
                    summary.max_fidelity,
                    100.0 * summary.relative_spread
                ),
            ),
        ),
        (
            "Optimizer ensemble (d) fidelity level vs 0.53".into(),
            Outcome {
                verdict: if level_ok {
                    Verdict::Pass
                } else {
                    Verdict::Flag
                },
                detail: format!(
                    "median final F = {:.4} (reference level 0.53, flag outside +-0.1)",
                    summary.median_fidelity
                ),
            },
        ),
    ]
}

fn step_propagators() -> Outcome {
    let cfg = PhysicsConfig::default();
    let dt = 0.0025;
    let bank = UnitaryBank::new(Arc::clone(store()), dt).unwrap();
    let dx = cfg.grid().dx();
    let mut rng = ChaCha20Rng::seed_from_u64(7);
    let mut psi = random_wave(&cfg, &mut rng).into_amplitudes();
    for _ in 0..1000 {
        psi = bank
            .step(rng.gen_range(0..bank.lattice().len()), &psi)
            .unwrap();
    }
    let drift = (psi.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx - 1.0).abs();
    let k = 37;
    let spec = spectral_decomposition(bank.lattice().position(k), &cfg, cfg.grid_points).unwrap();
    let mut phase_err: f64 = 0.0;
    for n in 0..cfg.grid_points {
        let state = spec.state(n).into_amplitudes();
        let stepped = bank.step(k, &state).unwrap();
        let phase = Complex64::from_polar(1.0, -spec.energies()[n] * dt / cfg.hbar);
        let err = stepped
            .iter()
            .zip(&state)
            .map(|(s, a)| (s - a * phase).norm())
            .fold(0.0, f64::max);
        phase_err = phase_err.max(err * dx.sqrt());
    }
    outcome(
        drift < 1e-9 && phase_err < 1e-10,
        format!("norm drift after 1000 steps = {drift:.2e}; max eigenstate phase error over {} states = {phase_err:.2e}", cfg.grid_points),
    )
}

fn tunneling() -> Outcome {
    let cfg = PhysicsConfig::default();
    let sigma = cfg.width;
    let fit_ds: Vec<f64> = (0..17)
        .map(|i| 4.0 * sigma + 4.0 * sigma * i as f64 / 16.0)
        .collect();
    let fit = fit_decay(
        &tunnel_curve(&cfg, &fit_ds).unwrap(),
        4.0 * sigma,
        8.0 * sigma,
    )
    .unwrap();
    let kappa_ref = reference_kappa(&cfg).unwrap();
    let kappa_ok = (fit.kappa - kappa_ref).abs() / kappa_ref <= 0.05;
    let t_csl = classical_speed_limit(&cfg, cfg.transport_distance())
        .unwrap()
        .t_csl;
    let ds: Vec<f64> = (0..81).map(|i| i as f64 / 80.0).collect();
    let reach = max_tunnel_distance(&tunnel_curve(&cfg, &ds).unwrap(), t_csl).unwrap();
    let reach_ok = (0.2..=0.4).contains(&reach);
    let t3 = transfer_time(&cfg, 3.0 * sigma).unwrap();
    let t3_ok = (0.1..=0.3).contains(&t3);
    outcome(
        kappa_ok && reach_ok && t3_ok,
        format!(
            "kappa = {:.3} vs {kappa_ref:.3} [{}]; max distance within T_CSL = {reach:.3} [{}]; transfer time at 3 sigma = {t3:.3} [{}]",
            fit.kappa,
            tag(kappa_ok),
            tag(reach_ok),
            tag(t3_ok)
        ),
    )
}

fn cd_single_endpoint() -> Outcome {
    let cfg = PhysicsConfig::default();
    let p = cd_correct_single(&transport_cubic(&cfg, 0.1).unwrap(), &cfg).unwrap();
    outcome(
        (p.start() - 0.4855).abs() <= 0.001,
        format!("corrected start = {:.5}", p.start()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("Speed limit", speed_limit),
        ("Harmonic consistency", harmonic_consistency),
        ("CD single-tweezer endpoint", cd_single_endpoint),
        ("Optimizer oracle equivalence", optimizer_oracle),
        ("Exact step propagators", step_propagators),
        ("Metric shape", metric_shape),
        ("Geodesic first integral", geodesic_first_integral),
        ("Tunneling", tunneling),
        ("Fidelity curve (cd_double)", fig3),
    ];
    let mut failures = 0;
    let mut report = |name: &str, o: Outcome, secs: f64| {
        let label = match o.verdict {
            Verdict::Pass => "PASS",
            Verdict::Fail => {
                failures += 1;
                "FAIL"
            }
            Verdict::Flag => "FLAG",
        };
        println!("{label}  {name}: {} ({secs:.1}s)", o.detail);
        let _ = std::io::stdout().flush();
    };
    for (name, run) in criteria {
        let clock = Instant::now();
        let o = run();
        report(name, o, clock.elapsed().as_secs_f64());
    }
    let clock = Instant::now();
    let ensemble = optimizer_ensemble();
    let secs = clock.elapsed().as_secs_f64();
    for (name, o) in ensemble {
        report(&name, o, secs);
    }
    println!("acceptance: {failures} failing criterion line(s)");
    if failures > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some_and(|v| v == "1") {
        std::process::exit(1);
    }
}
