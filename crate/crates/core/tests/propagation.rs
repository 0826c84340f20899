use std::sync::Arc;

use num_complex::Complex64;
use qmoves_core::propagation::{
    boundary_states, build_bank, evolve, fidelity, fidelity_curve, frame_bins, quantize_protocol,
    DiscreteProtocol, PositionLattice, SpectralStore, StateConvention, StepRule, UnitaryBank,
    FRAME_POINTS,
};
use qmoves_core::protocol::transport_cubic;
use qmoves_core::schrodinger::spectral_decomposition;
use qmoves_core::{Error, PhysicsConfig, Protocol, ProtocolKind, WaveFunction};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn small_config() -> PhysicsConfig {
    PhysicsConfig {
        grid_points: 128,
        ..PhysicsConfig::default()
    }
}

fn small_lattice() -> PositionLattice {
    PositionLattice::centered(-1.0, 1.0, 8).unwrap()
}

fn small_bank(dt: f64) -> UnitaryBank {
    let store = Arc::new(SpectralStore::new(&small_config(), &small_lattice(), None).unwrap());
    UnitaryBank::new(store, dt).unwrap()
}

fn random_state(n: usize, seed: u64) -> Vec<Complex64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let grid = small_config().grid();
    let amps = (0..n)
        .map(|_| Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)))
        .collect();
    WaveFunction::new(grid, amps).unwrap().into_amplitudes()
}

fn max_diff(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

fn norm(amps: &[Complex64], dx: f64) -> f64 {
    amps.iter().map(|a| a.norm_sqr()).sum::<f64>() * dx
}

#[test]
fn zero_time_step_is_identity() {
    let bank = small_bank(0.0);
    let psi = random_state(128, 1);
    for k in [0, 3, 7] {
        assert!(max_diff(&bank.step(k, &psi).unwrap(), &psi) < 1e-8);
    }
}

#[test]
fn step_then_inverse_returns_input() {
    let bank = small_bank(0.01);
    let psi = random_state(128, 2);
    for k in 0..8 {
        let back = bank.step_back(k, &bank.step(k, &psi).unwrap()).unwrap();
        assert!(max_diff(&back, &psi) < 1e-10);
    }
}

#[test]
fn two_half_steps_equal_one_step() {
    let bank = small_bank(0.004);
    let half = bank.with_dt(0.002).unwrap();
    let psi = random_state(128, 3);
    for k in [1, 5] {
        let full = bank.step(k, &psi).unwrap();
        let twice = half.step(k, &half.step(k, &psi).unwrap()).unwrap();
        assert!(max_diff(&full, &twice) < 1e-10);
    }
}

#[test]
fn eigenstates_acquire_analytic_phases() {
    let cfg = small_config();
    let lattice = small_lattice();
    let dt = 0.0025;
    let bank = small_bank(dt);
    let k = 6;
    let spec = spectral_decomposition(lattice.position(k), &cfg, cfg.grid_points).unwrap();
    for n in 0..cfg.grid_points {
        let state = spec.state(n).into_amplitudes();
        let stepped = bank.step(k, &state).unwrap();
        let phase = Complex64::from_polar(1.0, -spec.energies()[n] * dt);
        let expected: Vec<Complex64> = state.iter().map(|a| a * phase).collect();
        assert!(
            max_diff(&stepped, &expected) * cfg.grid().dx().sqrt() < 1e-10,
            "state {n}"
        );
    }
}

#[test]
fn thousand_random_steps_preserve_norm() {
    let bank = small_bank(0.003);
    let dx = bank.grid().dx();
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let mut psi = random_state(128, 5);
    for _ in 0..1000 {
        psi = bank.step(rng.gen_range(0..8), &psi).unwrap();
    }
    assert!((norm(&psi, dx) - 1.0).abs() < 1e-9);
}

#[test]
fn stationary_state_keeps_its_density() {
    let cfg = small_config();
    let lattice = small_lattice();
    let bank = small_bank(0.002);
    let k = 2;
    let spec = spectral_decomposition(lattice.position(k), &cfg, 3).unwrap();
    let psi0 = spec.state(0);
    let dp = DiscreteProtocol::constant(k, 100, lattice).unwrap();
    let result = evolve(&dp, &bank, &psi0, Some(&psi0), None).unwrap();
    let before = psi0.density();
    let after = result.final_state.density();
    let worst = before
        .iter()
        .zip(&after)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    assert!(worst < 1e-8);
    assert!((result.fidelity.unwrap() - 1.0).abs() < 1e-10);
    assert!((result.final_state.norm_squared() - 1.0).abs() < 1e-9);
}

#[test]
fn forward_then_reverse_with_conjugate_phases_is_identity() {
    let bank = small_bank(0.003);
    let mut rng = ChaCha20Rng::seed_from_u64(6);
    let indices: Vec<usize> = (0..60).map(|_| rng.gen_range(0..8)).collect();
    let dp = DiscreteProtocol::new(indices, small_lattice()).unwrap();
    let psi0 = WaveFunction::new(small_config().grid(), random_state(128, 7)).unwrap();
    let forward = evolve(&dp, &bank, &psi0, None, None).unwrap();
    let mut amps = forward.final_state.into_amplitudes();
    for &k in dp.reversed().indices() {
        amps = bank.step_back(k, &amps).unwrap();
    }
    assert!(max_diff(&amps, psi0.amplitudes()) < 1e-8);
}

#[test]
fn fidelity_basic_properties() {
    let grid = small_config().grid();
    let psi = WaveFunction::new(grid.clone(), random_state(128, 8)).unwrap();
    assert!((fidelity(&psi, &psi).unwrap() - 1.0).abs() < 1e-12);
    let rotated = psi.scaled(Complex64::from_polar(1.0, 0.73));
    let phi = WaveFunction::new(grid.clone(), random_state(128, 9)).unwrap();
    let f = fidelity(&psi, &phi).unwrap();
    assert!((fidelity(&rotated, &phi).unwrap() - f).abs() < 1e-12);
    // Disjoint supports are orthogonal.
    let left: Vec<f64> = (0..128).map(|i| if i < 64 { 1.0 } else { 0.0 }).collect();
    let right: Vec<f64> = (0..128).map(|i| if i >= 64 { 1.0 } else { 0.0 }).collect();
    let a = WaveFunction::from_real(grid.clone(), &left).unwrap();
    let b = WaveFunction::from_real(grid, &right).unwrap();
    assert!(fidelity(&a, &b).unwrap() < 1e-12);
}

#[test]
fn quantization_examples() {
    let lattice = PositionLattice::standard();
    let at_point = Protocol::constant(0.1, lattice.position(40), ProtocolKind::Human).unwrap();
    let dp = quantize_protocol(&at_point, &lattice, 17).unwrap();
    assert!(dp.indices().iter().all(|&k| k == 40));

    let ramp = Protocol::from_fn(1.0, 3, ProtocolKind::Human, |t| -1.0 + 2.0 * t).unwrap();
    let dp = quantize_protocol(&ramp, &lattice, lattice.len()).unwrap();
    for w in dp.indices().windows(2) {
        assert!(w[1] >= w[0] && w[1] - w[0] <= 2);
    }

    let wavy =
        Protocol::from_fn(0.3, 501, ProtocolKind::Human, |t| 0.8 * (20.0 * t).sin()).unwrap();
    let steps = 37;
    let dp = quantize_protocol(&wavy, &lattice, steps).unwrap();
    let dt = 0.3 / steps as f64;
    for (i, x) in dp.positions().iter().enumerate() {
        let sample = wavy.position_at((i as f64 + 0.5) * dt);
        assert!((x - sample).abs() <= 0.5 * lattice.spacing() + 1e-15);
    }

    let outside = Protocol::constant(0.1, 1.2, ProtocolKind::Human).unwrap();
    assert!(matches!(
        quantize_protocol(&outside, &lattice, 10),
        Err(Error::Domain(_))
    ));
}

#[test]
fn quantization_ties_follow_previous_step() {
    let lattice = PositionLattice::new(0.0, 0.5, 3).unwrap();
    let times = vec![0.0, 0.5, 1.5, 2.5, 3.0];
    // Step midpoints at t = 0.5, 1.5, 2.5; 0.25 and 0.75 are exact ties.
    let p = Protocol::new(
        times.clone(),
        vec![0.5, 0.5, 0.25, 0.75, 0.75],
        ProtocolKind::Human,
    )
    .unwrap();
    assert_eq!(
        quantize_protocol(&p, &lattice, 3).unwrap().indices(),
        &[1, 1, 1]
    );
    let p = Protocol::new(times, vec![0.0, 0.0, 0.25, 0.75, 0.75], ProtocolKind::Human).unwrap();
    assert_eq!(
        quantize_protocol(&p, &lattice, 3).unwrap().indices(),
        &[0, 0, 1]
    );
}

#[test]
fn frames_are_normalized_densities() {
    let cfg = small_config();
    let bank = small_bank(0.002);
    let (psi0, phi) = boundary_states(&cfg, StateConvention::JointGround).unwrap();
    let dp =
        DiscreteProtocol::new((0..50).map(|i| 7 - i * 8 / 50).collect(), small_lattice()).unwrap();
    let result = evolve(&dp, &bank, &psi0, Some(&phi), Some(7)).unwrap();
    // t = 0, every 7th step, and the final step.
    assert_eq!(result.frames.len(), 1 + 7 + 1);
    assert_eq!(result.frames.last().unwrap().t, 50.0 * 0.002);
    let dx = cfg.grid().dx();
    let bins = frame_bins(cfg.grid_points, FRAME_POINTS);
    for frame in &result.frames {
        assert!(frame.density.iter().all(|&d| d >= 0.0));
        let total: f64 = frame
            .density
            .iter()
            .zip(&bins)
            .map(|(d, r)| d * r.len() as f64 * dx)
            .sum();
        assert!((total - 1.0).abs() < 1e-8);
    }
    let f = result.fidelity.unwrap();
    assert!((0.0..=1.0 + 1e-12).contains(&f));
}

#[test]
fn default_frames_have_160_points() {
    let bins = frame_bins(512, FRAME_POINTS);
    assert_eq!(bins.len(), 160);
    assert_eq!(bins.first().unwrap().start, 0);
    assert_eq!(bins.last().unwrap().end, 512);
    for w in bins.windows(2) {
        assert_eq!(w[0].end, w[1].start);
    }
}

#[test]
fn mismatched_inputs_are_rejected() {
    let bank = small_bank(0.002);
    let other =
        DiscreteProtocol::constant(0, 5, PositionLattice::centered(-1.0, 1.0, 9).unwrap()).unwrap();
    let psi0 = WaveFunction::new(small_config().grid(), random_state(128, 10)).unwrap();
    assert!(matches!(
        evolve(&other, &bank, &psi0, None, None),
        Err(Error::Contract(_))
    ));
    assert!(matches!(
        bank.step(8, psi0.amplitudes()),
        Err(Error::Contract(_))
    ));
    assert!(matches!(
        bank.step(0, &psi0.amplitudes()[..10]),
        Err(Error::Contract(_))
    ));
}

#[test]
fn memory_budget_is_enforced() {
    let err = build_bank(
        &PhysicsConfig::default(),
        &PositionLattice::standard(),
        0.1,
        40,
        false,
        Some(1 << 20),
    );
    match err {
        Err(Error::Resource(msg)) => assert!(msg.contains("1048576")),
        other => panic!("expected resource error, got {other:?}"),
    }
}

#[test]
fn lazy_store_builds_only_what_is_used() {
    let bank = build_bank(&small_config(), &small_lattice(), 0.1, 40, false, None).unwrap();
    assert_eq!(bank.store().built(), 0);
    bank.step(3, &random_state(128, 11)).unwrap();
    assert_eq!(bank.store().built(), 1);
    bank.store().build_all().unwrap();
    assert_eq!(bank.store().built(), 8);
}

#[test]
fn fidelity_curve_is_deterministic() {
    let cfg = small_config();
    let store = Arc::new(SpectralStore::new(&cfg, &small_lattice(), None).unwrap());
    let durations = [0.05, 0.2, 0.2];
    let curve = fidelity_curve(
        |t| transport_cubic(&cfg, t),
        &store,
        StepRule::Fixed(20),
        &durations,
        StateConvention::JointGround,
    )
    .unwrap();
    assert_eq!(curve.len(), 3);
    assert_eq!(curve[1].fidelity.to_bits(), curve[2].fidelity.to_bits());
    assert!(curve.iter().all(|p| p.protocol_kind == ProtocolKind::Cubic));
    assert!(fidelity_curve(
        |t| transport_cubic(&cfg, t),
        &store,
        StepRule::Fixed(20),
        &[0.2, 0.1],
        StateConvention::JointGround
    )
    .is_err());
}

#[test]
fn step_rule_defaults() {
    let rule = StepRule::default();
    assert_eq!(rule.steps(0.05), 40);
    assert_eq!(rule.steps(0.1), 40);
    assert_eq!(rule.steps(0.2), 80);
    assert_eq!(StepRule::Fixed(7).steps(1.0), 7);
}

#[test]
fn static_well_convention_starts_in_the_static_tweezer() {
    let cfg = small_config();
    let (psi0, _) = boundary_states(&cfg, StateConvention::StaticWell).unwrap();
    let grid = cfg.grid();
    let mean: f64 = psi0
        .density()
        .iter()
        .enumerate()
        .map(|(i, n)| n * grid.x(i) * grid.dx())
        .sum();
    assert!(mean.abs() < 1e-6);
    let (joint, _) = boundary_states(&cfg, StateConvention::JointGround).unwrap();
    let mean: f64 = joint
        .density()
        .iter()
        .enumerate()
        .map(|(i, n)| n * grid.x(i) * grid.dx())
        .sum();
    assert!((mean - cfg.x0_start).abs() < 0.05);
}

#[test]
fn truncated_overlaps_match_direct_propagation() {
    let cfg = PhysicsConfig {
        grid_points: 256,
        ..PhysicsConfig::default()
    };
    let lattice = PositionLattice::centered(-1.0, 1.0, 6).unwrap();
    let store = Arc::new(SpectralStore::new(&cfg, &lattice, None).unwrap());
    let bank = UnitaryBank::new(store, 0.004).unwrap();
    let (psi, phi) = boundary_states(&cfg, StateConvention::JointGround).unwrap();
    // Move psi a little so that it has excited components.
    let psi = bank
        .step(1, &bank.step(4, psi.amplitudes()).unwrap())
        .unwrap();
    let overlaps = bank.local_overlaps(&psi, phi.amplitudes()).unwrap();
    let grid = cfg.grid();
    for (k, o) in overlaps.iter().enumerate() {
        let stepped = WaveFunction::new(grid.clone(), bank.step(k, &psi).unwrap()).unwrap();
        let direct = phi.inner(&stepped).unwrap();
        assert!((o - direct).norm() < 1e-12, "k={k}: {o} vs {direct}");
    }
}
