//! Command-line interface for the LEO ISAC workbench.
//!
//! Exit codes: 0 success, 2 configuration error, 3 infeasible instance,
//! 4 numerical failure.

use clap::{Parser, Subcommand};
use leoisac_core::beamform::{
    evaluate_solution, solve_comm_centric, solve_sensing_centric, zfbf_baseline, ObjectiveMode,
    SolveReport,
};
use leoisac_core::error::Error as CoreError;
use leoisac_core::geometry::{build_walker_delta, sub_satellite_point};
use leoisac_core::harness::config::ExperimentConfig;
use leoisac_core::harness::io::{write_results, RunManifest};
use leoisac_core::harness::{run_montecarlo, sweep as run_sweep};
use leoisac_core::localization::pso_locate;
use leoisac_core::rng::{stream, Domain};
use leoisac_core::scene::SceneSnapshot;
use leoisac_core::signal_model::{synthesize_received, BeamformingSolution, SymbolBlock};
use nalgebra::DVector;
use num_complex::Complex64;
use serde_json::json;
use std::path::{Path, PathBuf};

#[derive(Parser)]
#[command(
    name = "leoisac",
    version,
    about = "Cooperative communication and location sensing workbench for LEO constellations"
)]
struct Cli {
    /// Experiment configuration (TOML). Missing keys fall back to the
    /// documented simulation-table defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Master seed override.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output file or directory, command dependent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,

    /// Worker thread count for Monte Carlo trials (0 = library default).
    #[arg(long, global = true)]
    workers: Option<usize>,

    /// Restore the full 1000-trial Monte Carlo scale.
    #[arg(long, global = true)]
    paper_scale: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Dump the constellation snapshot as CSV (plane, slot, x_km, y_km, z_km).
    Constellation,
    /// Evaluate the CRB of a stored beamforming solution.
    Crb {
        /// Solution JSON produced by `optimize`.
        #[arg(long)]
        solution: PathBuf,
    },
    /// Run one localization instance and print the estimate as JSON.
    Locate {
        /// Search box side (km), overriding the config.
        #[arg(long)]
        box_km: Option<f64>,
        /// Particle count override.
        #[arg(long)]
        particles: Option<usize>,
        /// Iteration count override.
        #[arg(long)]
        iters: Option<usize>,
        /// Skip the observation noise.
        #[arg(long)]
        noiseless: bool,
        /// Solution JSON to transmit with; defaults to the zero-forcing
        /// baseline.
        #[arg(long)]
        solution: Option<PathBuf>,
    },
    /// Joint beamforming/waveform design; writes the solution as JSON.
    Optimize {
        /// Objective: "sensing" or "comm".
        #[arg(long)]
        mode: Option<String>,
        /// Required per-UE rate (bps/Hz).
        #[arg(long)]
        eta: Option<f64>,
        /// CRB-trace cap (m^2) for comm mode.
        #[arg(long)]
        eta_crb: Option<f64>,
        /// Per-satellite power budget (dBm).
        #[arg(long)]
        pmax_dbm: Option<f64>,
    },
    /// Parameter sweep over the configured axis.
    Sweep,
    /// Monte Carlo localization run at the configured point.
    Montecarlo,
}

fn main() {
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("error: {err}");
            match err.downcast_ref::<CoreError>() {
                Some(CoreError::Config(_)) => 2,
                Some(CoreError::Infeasible(_)) => 3,
                Some(_) => 4,
                None => 4,
            }
        }
    };
    std::process::exit(code);
}

fn load_config(cli: &Cli) -> anyhow::Result<ExperimentConfig> {
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))?;
            ExperimentConfig::from_toml_str(&text)?
        }
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg.master_seed = seed;
    }
    if let Some(workers) = cli.workers {
        cfg.workers = workers;
    }
    if cli.paper_scale {
        cfg.num_trials = 1000;
    }
    Ok(cfg)
}

fn run(cli: Cli) -> anyhow::Result<()> {
    match &cli.command {
        Command::Constellation => cmd_constellation(&cli),
        Command::Crb { solution } => cmd_crb(&cli, solution),
        Command::Locate {
            box_km,
            particles,
            iters,
            noiseless,
            solution,
        } => cmd_locate(&cli, *box_km, *particles, *iters, *noiseless, solution.as_deref()),
        Command::Optimize {
            mode,
            eta,
            eta_crb,
            pmax_dbm,
        } => cmd_optimize(&cli, mode.as_deref(), *eta, *eta_crb, *pmax_dbm),
        Command::Sweep => cmd_table(&cli, true),
        Command::Montecarlo => cmd_table(&cli, false),
    }
}

fn emit(out: &Option<PathBuf>, default_name: &str, content: &str) -> anyhow::Result<()> {
    match out {
        None => {
            use std::io::Write;
            // Tolerate closed pipes (e.g. `| head`).
            let stdout = std::io::stdout();
            let _ = writeln!(stdout.lock(), "{content}");
            Ok(())
        }
        Some(path) => {
            let target = if path.is_dir() {
                path.join(default_name)
            } else {
                path.clone()
            };
            if let Some(parent) = target.parent() {
                if !parent.as_os_str().is_empty() {
                    std::fs::create_dir_all(parent)?;
                }
            }
            std::fs::write(&target, content)?;
            eprintln!("wrote {}", target.display());
            Ok(())
        }
    }
}

fn cmd_constellation(cli: &Cli) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let sats = build_walker_delta(&cfg.constellation_config())?;
    let mut out = String::from("plane,slot,x_km,y_km,z_km\n");
    for s in &sats {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            s.plane, s.slot, s.position_ecef_km.x, s.position_ecef_km.y, s.position_ecef_km.z
        ));
    }
    emit(&cli.out, "constellation.csv", out.trim_end())
}

fn complex_vec_json(v: &DVector<Complex64>) -> serde_json::Value {
    json!(v.iter().map(|c| vec![c.re, c.im]).collect::<Vec<_>>())
}

fn complex_vec_from_json(value: &serde_json::Value) -> anyhow::Result<DVector<Complex64>> {
    let arr = value
        .as_array()
        .ok_or_else(|| CoreError::Config("solution vector is not an array".to_string()))?;
    let mut data = Vec::with_capacity(arr.len());
    for pair in arr {
        let p = pair
            .as_array()
            .filter(|p| p.len() == 2)
            .ok_or_else(|| CoreError::Config("expected [re, im] pairs".to_string()))?;
        data.push(Complex64::new(
            p[0].as_f64().unwrap_or(f64::NAN),
            p[1].as_f64().unwrap_or(f64::NAN),
        ));
    }
    Ok(DVector::from_vec(data))
}

fn solution_to_json(
    sol: &BeamformingSolution,
    trace: &[f64],
    rcrb_m: f64,
    rates: &[f64],
) -> serde_json::Value {
    json!({
        "w_tilde": sol.w_tilde.iter().map(complex_vec_json).collect::<Vec<_>>(),
        "r_tilde": complex_vec_json(&sol.r_tilde),
        "trace": trace,
        "rcrb_m": rcrb_m,
        "rates_bps_hz": rates,
    })
}

fn solution_from_file(path: &Path) -> anyhow::Result<BeamformingSolution> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CoreError::Config(format!("cannot read {}: {e}", path.display())))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CoreError::Config(format!("solution parse error: {e}")))?;
    let w = value
        .get("w_tilde")
        .and_then(|v| v.as_array())
        .ok_or_else(|| CoreError::Config("solution missing w_tilde".to_string()))?;
    let mut w_tilde = Vec::with_capacity(w.len());
    for col in w {
        w_tilde.push(complex_vec_from_json(col)?);
    }
    let r_tilde = complex_vec_from_json(
        value
            .get("r_tilde")
            .ok_or_else(|| CoreError::Config("solution missing r_tilde".to_string()))?,
    )?;
    Ok(BeamformingSolution { w_tilde, r_tilde })
}

fn scene_for(cfg: &ExperimentConfig) -> anyhow::Result<SceneSnapshot> {
    Ok(cfg.build_scene(0)?)
}

fn cmd_crb(cli: &Cli, solution: &Path) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let scene = scene_for(&cfg)?;
    let sol = solution_from_file(solution)?;
    if sol.nk() != scene.nk() || sol.num_ues() != scene.m() {
        return Err(CoreError::Config(format!(
            "solution dimensions ({} x {}) do not match the scene ({} x {})",
            sol.nk(),
            sol.num_ues(),
            scene.nk(),
            scene.m()
        ))
        .into());
    }
    let metrics = evaluate_solution(&scene, &sol)?;
    let out = json!({
        "trace_crb_km2": metrics.trace_crb_km2,
        "rcrb_m": metrics.rcrb_m,
        "per_axis_crb": metrics.per_axis_crb_km2,
        "regularized": metrics.crb_regularized,
    });
    emit(&cli.out, "crb.json", &serde_json::to_string_pretty(&out)?)
}

fn cmd_locate(
    cli: &Cli,
    box_km: Option<f64>,
    particles: Option<usize>,
    iters: Option<usize>,
    noiseless: bool,
    solution: Option<&Path>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(cli)?;
    if let Some(b) = box_km {
        cfg.pso.box_side_km = b;
    }
    if let Some(p) = particles {
        cfg.pso.num_particles = p;
    }
    if let Some(n) = iters {
        cfg.pso.max_iters = n;
    }
    let scene = scene_for(&cfg)?;
    let sol = match solution {
        Some(path) => solution_from_file(path)?,
        None => zfbf_baseline(&scene, cfg.optimizer.eta_rate_bps_hz)?,
    };

    let mut sym_rng = stream(cfg.master_seed, Domain::Symbols, 0);
    let s = SymbolBlock::draw_qpsk(scene.m(), &mut sym_rng);
    let mut noise_rng = stream(cfg.master_seed, Domain::Noise, 0);
    let obs = synthesize_received(
        &scene,
        &sol,
        &s,
        scene.target.reflection_coeff,
        &mut noise_rng,
        noiseless,
    );

    let center = sub_satellite_point(
        &scene.group.central_sat.position_ecef_km,
        cfg.constellation.earth_radius_km,
    );
    let pso_cfg = cfg.pso_config(center);
    let mut pso_rng = stream(cfg.master_seed, Domain::Pso, 0);
    let result = pso_locate(&obs, &scene, &sol, &s, &pso_cfg, &mut pso_rng)?;
    let err_m = (result.p_hat - scene.target.position_ecef_km).norm() * 1e3;
    let out = json!({
        "p_hat": [result.p_hat.x, result.p_hat.y, result.p_hat.z],
        "rmse_vs_truth": err_m,
        "fitness_trace": result.fitness_trace,
        "alpha_hat": [result.alpha_hat.re, result.alpha_hat.im],
    });
    emit(&cli.out, "locate.json", &serde_json::to_string_pretty(&out)?)
}

fn cmd_optimize(
    cli: &Cli,
    mode: Option<&str>,
    eta: Option<f64>,
    eta_crb: Option<f64>,
    pmax_dbm: Option<f64>,
) -> anyhow::Result<()> {
    let mut cfg = load_config(cli)?;
    if let Some(m) = mode {
        cfg.optimizer.objective_mode = m.to_string();
    }
    if let Some(e) = eta {
        cfg.optimizer.eta_rate_bps_hz = e;
    }
    if let Some(e) = eta_crb {
        cfg.optimizer.eta_crb_m2 = Some(e);
    }
    if let Some(p) = pmax_dbm {
        cfg.optimizer.p_max_dbm = p;
    }
    let opt_cfg = cfg.optimizer.to_config()?;
    let scene = scene_for(&cfg)?;
    let report: SolveReport = match opt_cfg.objective_mode {
        ObjectiveMode::SensingCentric => solve_sensing_centric(&scene, &opt_cfg)?,
        ObjectiveMode::CommCentric => solve_comm_centric(&scene, &opt_cfg)?,
    };
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    let metrics = evaluate_solution(&scene, &report.solution)?;
    let trace: Vec<f64> = report.iterations.iter().map(|i| i.objective).collect();
    let mut out = solution_to_json(&report.solution, &trace, metrics.rcrb_m, &metrics.rates_bps_hz);
    if let Some(u) = report.upsilon {
        out["upsilon"] = json!(u);
    }
    emit(&cli.out, "solution.json", &serde_json::to_string_pretty(&out)?)
}

fn cmd_table(cli: &Cli, is_sweep: bool) -> anyhow::Result<()> {
    let cfg = load_config(cli)?;
    let (table, manifest): (_, RunManifest) = if is_sweep {
        run_sweep(&cfg)?
    } else {
        run_montecarlo(&cfg)?
    };
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("results"));
    write_results(&table, &manifest, &dir)?;
    eprintln!(
        "wrote {} and {}",
        dir.join("results.csv").display(),
        dir.join("manifest.json").display()
    );
    for w in &manifest.warnings {
        eprintln!("warning: {w}");
    }
    Ok(())
}
