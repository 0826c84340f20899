//! Subcommands, one per experiment, and the dispatcher that maps failures to exit codes.

use std::ffi::OsString;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use qmoves_core::optimizer::{run_ensemble, summary_csv, OptimizerConfig, RNG_ALGORITHM};
use qmoves_core::propagation::{curve_to_csv, fidelity_curve, StepRule};
use qmoves_core::protocol::{
    build_metric_table, cd_correct_double, cd_correct_single, classical_speed_limit,
    geodesic_protocol, transport_cubic, Interpolation, MetricTable, ReferenceFamily,
    DEFAULT_METRIC_SAMPLES, DEFAULT_RAMP_FRACTION,
};
use qmoves_core::schrodinger::{density_and_cdf, spectral_decomposition};
use qmoves_core::tunneling::{
    fit_decay, max_tunnel_distance, reference_kappa, transfer_time, tunnel_curve,
};
use qmoves_core::{Protocol, ProtocolKind};
use serde::Serialize;
use serde_json::json;

use crate::config::{resolve, set, PhysicsFlags, RunConfig};
use crate::error::{CliError, CliResult, EXIT_CONFIG};
use crate::lab::{Endpoints, Lab};
use crate::manifest::{state_dir, Run};
use crate::service::{router, serve, AppState};

#[derive(Debug, Parser)]
#[command(
    name = "qmoves",
    version,
    about = "Optical tweezer transport experiments"
)]
pub struct Cli {
    /// JSON config file; flags override it.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Parent directory for run directories (default: <state dir>/runs).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// State directory (default: $QMOVES_STATE_DIR, else ./qmoves-state).
    #[arg(long, global = true)]
    pub state_dir: Option<PathBuf>,
    #[command(flatten)]
    pub physics: PhysicsFlags,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CdKind {
    Single,
    Double,
}

#[derive(Debug, Clone, Serialize, Subcommand)]
#[serde(rename_all = "kebab-case")]
pub enum Command {
    /// Classical speed limit for a transport distance.
    SpeedLimit {
        /// Transport distance (default: |x0_start - x0_end|).
        #[arg(long = "L")]
        distance: Option<f64>,
    },
    /// Lowest eigenstates of the two-tweezer Hamiltonian.
    GroundState {
        /// Moving tweezer position (default: x0_start).
        #[arg(long, allow_hyphen_values = true)]
        x0: Option<f64>,
        #[arg(long, default_value_t = 1)]
        states: usize,
    },
    /// Sample the adiabatic metric g(x0).
    Metric {
        #[arg(long, default_value_t = -1.0, allow_hyphen_values = true)]
        lo: f64,
        #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
        hi: f64,
        #[arg(long, default_value_t = DEFAULT_METRIC_SAMPLES)]
        samples: usize,
    },
    /// Geodesic transport protocol.
    Geodesic {
        #[arg(long = "T")]
        duration: f64,
        #[arg(long, default_value_t = DEFAULT_RAMP_FRACTION)]
        ramp_fraction: f64,
        /// Metric table CSV from `metric`; sampled afresh when absent.
        #[arg(long)]
        metric: Option<PathBuf>,
    },
    /// Counter-diabatic protocol: single corrects the cubic ramp, double the geodesic.
    Cd {
        #[arg(long, value_enum)]
        kind: CdKind,
        #[arg(long = "T")]
        duration: f64,
        #[arg(long, default_value_t = DEFAULT_RAMP_FRACTION)]
        ramp_fraction: f64,
        #[arg(long)]
        metric: Option<PathBuf>,
    },
    /// Evolve a protocol file and report its fidelity.
    Simulate {
        #[arg(long)]
        protocol: PathBuf,
        /// Step count (default: the configured step rule).
        #[arg(long = "N")]
        steps: Option<usize>,
        #[arg(long, value_enum, default_value_t = Endpoints::Transport)]
        endpoints: Endpoints,
        /// Also write density frames.
        #[arg(long)]
        frames: bool,
    },
    /// Fidelity against duration for one protocol family.
    FidelityCurve {
        #[arg(long, default_value_t = ProtocolKind::CdDouble)]
        kind: ProtocolKind,
        /// First duration, in units of the speed limit.
        #[arg(long, default_value_t = 0.4)]
        from: f64,
        #[arg(long, default_value_t = 2.4)]
        to: f64,
        #[arg(long, default_value_t = 0.1)]
        step: f64,
        /// Absolute durations, replacing from/to/step.
        #[arg(long, value_delimiter = ',')]
        durations: Option<Vec<f64>>,
        /// Fixed step count for every duration.
        #[arg(long = "N")]
        steps: Option<usize>,
    },
    /// Stochastic local ascent over an ensemble of seeds.
    Optimize {
        #[arg(long = "T")]
        duration: f64,
        #[arg(long = "N")]
        steps: Option<usize>,
        #[arg(long, default_value_t = 1)]
        seeds: usize,
        /// First seed; run i uses seed + i.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        max_sweeps: Option<usize>,
        #[arg(long)]
        tolerance: Option<f64>,
        /// Hold the first and last steps at the lattice points nearest the endpoints.
        #[arg(long)]
        pin_ends: bool,
    },
    /// Tunnel splitting against well separation.
    Tunnel {
        #[arg(long, default_value_t = 0.0)]
        d_min: f64,
        #[arg(long, default_value_t = 1.0)]
        d_max: f64,
        #[arg(long, default_value_t = 81)]
        count: usize,
        /// Transfer-time budget (default: the speed limit).
        #[arg(long)]
        budget: Option<f64>,
    },
    /// HTTP API and static UI.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long)]
        static_dir: Option<PathBuf>,
        #[arg(long)]
        max_concurrent: Option<usize>,
        /// Step bank cache budget in MiB.
        #[arg(long)]
        bank_cache_mb: Option<usize>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::SpeedLimit { .. } => "speed-limit",
            Command::GroundState { .. } => "ground-state",
            Command::Metric { .. } => "metric",
            Command::Geodesic { .. } => "geodesic",
            Command::Cd { .. } => "cd",
            Command::Simulate { .. } => "simulate",
            Command::FidelityCurve { .. } => "fidelity-curve",
            Command::Optimize { .. } => "optimize",
            Command::Tunnel { .. } => "tunnel",
            Command::Serve { .. } => "serve",
        }
    }

    /// Folds command flags that shadow config entries into `cfg`.
    fn apply(&self, cfg: &mut RunConfig) {
        match self {
            Command::Optimize {
                steps,
                seed,
                max_sweeps,
                tolerance,
                ..
            } => {
                let o = &mut cfg.optimizer;
                set(&mut o.steps, *steps);
                set(&mut o.seed, *seed);
                set(&mut o.max_sweeps, *max_sweeps);
                set(&mut o.tolerance, *tolerance);
            }
            Command::FidelityCurve { steps: Some(n), .. } => cfg.step_rule = StepRule::Fixed(*n),
            Command::Serve {
                max_concurrent,
                bank_cache_mb,
                ..
            } => {
                set(&mut cfg.service.max_concurrent, *max_concurrent);
                set(
                    &mut cfg.service.bank_cache_bytes,
                    bank_cache_mb.map(|mb| mb << 20),
                );
            }
            _ => {}
        }
    }
}

/// Parses `argv`, runs the command and returns the process exit code.
pub fn dispatch<I, T>(argv: I, out: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { 0 };
        }
    };
    match execute(cli, out) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut cfg = resolve(cli.config.as_deref(), &cli.physics)?;
    cli.command.apply(&mut cfg);
    cfg.validate()?;
    let state = state_dir(cli.state_dir.as_deref());
    let parent = cli.out.clone().unwrap_or_else(|| state.join("runs"));
    let args = json!({ "command": &cli.command, "config_file": &cli.config, "physics_flags": &cli.physics });
    let mut run = Run::create(&parent, cli.command.name(), &cfg, args)?;
    if let Some(path) = &cli.config {
        run.input(path);
    }
    let result = run_command(&cli.command, &cfg, &state, &mut run, out);
    let manifest = run.finish(result.as_ref().map(|_| ()))?;
    let _ = writeln!(out, "manifest: {}", manifest.display());
    result
}

fn say(out: &mut dyn Write, text: impl AsRef<str>) -> CliResult<()> {
    out.write_all(text.as_ref().as_bytes())
        .and_then(|()| out.flush())
        .map_err(|e| CliError::io("stdout", e))
}

fn load_table(path: Option<&Path>, cfg: &RunConfig, run: &mut Run) -> CliResult<MetricTable> {
    match path {
        Some(path) => {
            run.input(path);
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
            Ok(MetricTable::from_csv(&text, Interpolation::Cubic)?)
        }
        None => Ok(qmoves_core::protocol::default_metric_table(&cfg.physics)?),
    }
}

fn protocol_summary(p: &Protocol) -> String {
    format!(
        "{}: T = {}, x0(0) = {:.4}, x0(T) = {:.4}, range [{:.4}, {:.4}], {} samples\n",
        p.kind(),
        p.duration(),
        p.start(),
        p.end(),
        p.min_position(),
        p.max_position(),
        p.len()
    )
}

fn run_command(
    command: &Command,
    cfg: &RunConfig,
    state: &Path,
    run: &mut Run,
    out: &mut dyn Write,
) -> CliResult<()> {
    let physics = &cfg.physics;
    match command {
        Command::SpeedLimit { distance } => {
            let distance = distance.unwrap_or_else(|| physics.transport_distance());
            let report = classical_speed_limit(physics, distance)?;
            run.write_json(
                "speed_limit.json",
                &json!({ "L": distance, "report": report }),
            )?;
            say(
                out,
                format!(
                    "T_CSL = {:.3}\nT_CSL (harmonic) = {:.3}\nomega = {:.4}\nmax acceleration = {:.2}\n",
                    report.t_csl, report.t_csl_harmonic, report.omega, report.max_acceleration
                ),
            )
        }
        Command::GroundState { x0, states } => {
            let x0 = x0.unwrap_or(physics.x0_start);
            let spec = spectral_decomposition(x0, physics, (*states).max(1))?;
            let psi = spec.state(0);
            let (density, cdf) = density_and_cdf(&psi);
            let mut csv = String::from("x,psi,density,cdf\n");
            for (i, x) in psi.grid().points().enumerate() {
                let _ = writeln!(
                    csv,
                    "{x},{},{},{}",
                    psi.amplitudes()[i].re,
                    density[i],
                    cdf[i]
                );
            }
            run.write("ground_state.csv", csv)?;
            run.write_json(
                "energies.json",
                &json!({ "x0": x0, "energies": spec.energies() }),
            )?;
            let mut text = String::new();
            for (n, e) in spec.energies().iter().enumerate() {
                let _ = writeln!(text, "E{n} = {e:.6}");
            }
            say(out, text)
        }
        Command::Metric { lo, hi, samples } => {
            let table = build_metric_table(physics, *lo, *hi, *samples)?;
            let path = run.dir().join("metric.csv");
            table.save_csv(&path)?;
            run.output(&path);
            let g = table.values();
            let (min, max) = g
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| {
                    (a.min(v), b.max(v))
                });
            say(
                out,
                format!(
                    "{} samples on [{lo}, {hi}]: g in [{min:.4}, {max:.4}]\n",
                    g.len()
                ),
            )
        }
        Command::Geodesic {
            duration,
            ramp_fraction,
            metric,
        } => {
            let table = load_table(metric.as_deref(), cfg, run)?;
            let p = geodesic_protocol(&table, *duration, physics, *ramp_fraction)?;
            p.save(&run.dir().join("geodesic.json"))?;
            run.output(&run.dir().join("geodesic.json"));
            say(out, protocol_summary(&p))
        }
        Command::Cd {
            kind,
            duration,
            ramp_fraction,
            metric,
        } => {
            let (p, name) = match kind {
                CdKind::Single => (
                    cd_correct_single(&transport_cubic(physics, *duration)?, physics)?,
                    "cd_single.json",
                ),
                CdKind::Double => {
                    let table = load_table(metric.as_deref(), cfg, run)?;
                    let base = geodesic_protocol(&table, *duration, physics, *ramp_fraction)?;
                    (cd_correct_double(&base, &table, physics)?, "cd_double.json")
                }
            };
            let path = run.dir().join(name);
            p.save(&path)?;
            run.output(&path);
            say(out, protocol_summary(&p))
        }
        Command::Simulate {
            protocol,
            steps,
            endpoints,
            frames,
        } => {
            run.input(protocol);
            let p = Protocol::load(protocol).map_err(|e| match e {
                qmoves_core::Error::Io(io) => {
                    CliError::Config(format!("cannot read {}: {io}", protocol.display()))
                }
                other => other.into(),
            })?;
            let lab = Lab::new(cfg.clone())?;
            let sim = lab.simulate(&p, *steps, *endpoints, *frames)?;
            run.write_json("simulation.json", &sim)?;
            say(
                out,
                format!(
                    "F = {:.6}\nN = {}\nfidelity = {:e}\n",
                    sim.fidelity, sim.steps, sim.fidelity
                ),
            )
        }
        Command::FidelityCurve {
            kind,
            from,
            to,
            step,
            durations,
            ..
        } => {
            let t_csl = classical_speed_limit(physics, physics.transport_distance())?.t_csl;
            let durations = match durations {
                Some(d) => d.clone(),
                None => {
                    if !(*step > 0.0 && to >= from) {
                        return Err(CliError::Config("need step > 0 and to >= from".into()));
                    }
                    let n = ((to - from) / step + 1e-9).floor() as usize + 1;
                    (0..n).map(|i| t_csl * (from + step * i as f64)).collect()
                }
            };
            let lab = Lab::new(cfg.clone())?;
            let family = ReferenceFamily::new(physics)?;
            let points = fidelity_curve(
                |t| family.protocol(*kind, t),
                lab.store(),
                cfg.step_rule,
                &durations,
                cfg.convention,
            )?;
            run.write("curve.csv", curve_to_csv(&points))?;
            let mut text = format!("T_CSL = {t_csl:.4}\n     T  T/T_CSL       F\n");
            for p in &points {
                let _ = writeln!(
                    text,
                    "{:.4}  {:7.3}  {:.4}",
                    p.duration,
                    p.duration / t_csl,
                    p.fidelity
                );
            }
            say(out, text)
        }
        Command::Optimize {
            duration,
            seeds,
            pin_ends,
            ..
        } => {
            let lab = Lab::new(cfg.clone())?;
            let mut template: OptimizerConfig = cfg.optimizer.clone();
            if *pin_ends {
                let first = lab.lattice().nearest(physics.x0_start, None)?;
                let last = lab.lattice().nearest(physics.x0_end, None)?;
                template.pinned_ends = Some((first, last));
            }
            let bank = lab.bank(*duration, template.steps)?;
            let (psi0, phi) = lab.transport_states()?;
            let (traces, summary) = run_ensemble(*seeds, &template, &bank, psi0, phi)?;
            run.rng(RNG_ALGORITHM);
            for t in &traces {
                run.rng(format!("seed={}", t.seed));
                run.write_json(&format!("trace_{:04}.json", t.seed), &t.to_json())?;
            }
            run.write("summary.csv", summary_csv(&traces))?;
            run.write_json("summary.json", &summary)?;
            say(
                out,
                format!(
                    "{} runs, {} converged; F in [{:.4}, {:.4}], median {:.4}, relative spread {:.2}%\n",
                    summary.runs,
                    summary.converged,
                    summary.min_fidelity,
                    summary.max_fidelity,
                    summary.median_fidelity,
                    100.0 * summary.relative_spread
                ),
            )
        }
        Command::Tunnel {
            d_min,
            d_max,
            count,
            budget,
        } => {
            if *count < 2 || !(d_max > d_min) {
                return Err(CliError::Config("need count >= 2 and d_max > d_min".into()));
            }
            let ds: Vec<f64> = (0..*count)
                .map(|i| d_min + (d_max - d_min) * i as f64 / (count - 1) as f64)
                .collect();
            let curve = tunnel_curve(physics, &ds)?;
            let sigma = physics.width;
            let fit = fit_decay(&curve, 4.0 * sigma, 8.0 * sigma)?;
            let kappa_ref = reference_kappa(physics)?;
            let budget = match budget {
                Some(b) => *b,
                None => classical_speed_limit(physics, physics.transport_distance())?.t_csl,
            };
            let d_max_tunnel = max_tunnel_distance(&curve, budget).ok();
            let t3 = transfer_time(physics, 3.0 * sigma)?;
            run.write("tunnel.csv", curve.to_csv())?;
            run.write_json(
                "tunnel.json",
                &json!({
                    "fit": fit,
                    "reference_kappa": kappa_ref,
                    "budget": budget,
                    "max_tunnel_distance": d_max_tunnel,
                    "transfer_time_3sigma": t3,
                }),
            )?;
            let reach = d_max_tunnel.map_or("none".to_owned(), |d| format!("{d:.4}"));
            say(
                out,
                format!(
                    "kappa = {:.3} (reference {kappa_ref:.3}, R^2 = {:.4})\nmax tunnel distance within {budget:.4} = {reach}\ntransfer time at 3 sigma = {t3:.4}\n",
                    fit.kappa, fit.r_squared
                ),
            )
        }
        Command::Serve {
            port,
            host,
            static_dir,
            ..
        } => {
            let lab = Lab::new(cfg.clone())?;
            let app_state = AppState::new(lab, state)?;
            run.output(app_state.scores().path());
            let app = router(app_state, static_dir.as_deref());
            let runtime = tokio::runtime::Runtime::new().map_err(|e| CliError::io("runtime", e))?;
            runtime.block_on(async {
                let addr = format!("{host}:{port}");
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| CliError::Config(format!("cannot bind {addr}: {e}")))?;
                run.set_status("serving");
                run.checkpoint()?;
                say(
                    out,
                    format!(
                        "listening on http://{}\n",
                        listener.local_addr().map_err(|e| CliError::io(&addr, e))?
                    ),
                )?;
                serve(listener, app)
                    .await
                    .map_err(|e| CliError::io(&addr, e))
            })
        }
    }
}
