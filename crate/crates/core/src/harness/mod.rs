//! Seeded Monte Carlo experiments, parameter sweeps and persistence.
//!
//! A run is reproducible from `(config, master_seed)` alone: every random
//! quantity draws from a stream keyed by domain and trial index, so trial
//! order and worker count never change the aggregates. Sweep points reuse
//! the same trial streams (common random numbers across the axis).

pub mod config;
pub mod io;

use crate::beamform::{
    evaluate_solution, solve_comm_centric, solve_sensing_centric, zfbf_baseline, ObjectiveMode,
    SolveReport,
};
use crate::error::{Error, Result};
use crate::geometry::sub_satellite_point;
use crate::localization::pso_locate;
use crate::rng::{stream, Domain};
use crate::scene::SceneSnapshot;
use crate::signal_model::{synthesize_received, BeamformingSolution, SymbolBlock};
use config::{ExperimentConfig, SolutionSource};
use io::{ResultTable, RunManifest};
use rayon::prelude::*;

#[derive(Debug, Clone)]
struct TrialOutcome {
    error_km: f64,
    min_rate: f64,
    mean_rate: f64,
}

/// Mean and sample standard deviation.
fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn solve_for_config(
    cfg: &ExperimentConfig,
    scene: &SceneSnapshot,
) -> Result<(BeamformingSolution, usize, Vec<String>)> {
    match cfg.montecarlo.solution {
        SolutionSource::Zfbf => {
            let sol = zfbf_baseline(scene, cfg.optimizer.eta_rate_bps_hz)?;
            Ok((sol, 0, Vec::new()))
        }
        SolutionSource::Optimize => {
            let opt_cfg = cfg.optimizer.to_config()?;
            let report: SolveReport = match opt_cfg.objective_mode {
                ObjectiveMode::SensingCentric => solve_sensing_centric(scene, &opt_cfg)?,
                ObjectiveMode::CommCentric => solve_comm_centric(scene, &opt_cfg)?,
            };
            Ok((report.solution, report.iterations.len(), report.warnings))
        }
    }
}

fn rates_of(scene: &SceneSnapshot, sol: &BeamformingSolution) -> Result<(f64, f64)> {
    let mut min_rate = f64::INFINITY;
    let mut sum = 0.0;
    for i in 0..scene.m() {
        let r = crate::signal_model::ue_rate(sol, &scene.channels, i, scene.sigma_ue_w)?;
        min_rate = min_rate.min(r);
        sum += r;
    }
    Ok((min_rate, sum / scene.m() as f64))
}

fn run_trials(
    cfg: &ExperimentConfig,
    scene: &SceneSnapshot,
    solution: &BeamformingSolution,
) -> Result<(Vec<TrialOutcome>, usize, Vec<String>)> {
    let master = cfg.master_seed;
    let alpha = scene.target.reflection_coeff;
    let box_center = sub_satellite_point(
        &scene.group.central_sat.position_ecef_km,
        cfg.constellation.earth_radius_km,
    );
    let pso_cfg = cfg.pso_config(box_center);
    pso_cfg.validate()?;

    let one_trial = |trial: usize| -> std::result::Result<TrialOutcome, String> {
        let t = trial as u64;
        let sym_idx = if cfg.redraw.symbols { t } else { 0 };
        let mut sym_rng = stream(master, Domain::Symbols, sym_idx);
        let s = SymbolBlock::draw_qpsk(scene.m(), &mut sym_rng);

        let noise_idx = if cfg.redraw.noise { t } else { 0 };
        let mut noise_rng = stream(master, Domain::Noise, noise_idx);
        let obs = synthesize_received(
            scene,
            solution,
            &s,
            alpha,
            &mut noise_rng,
            cfg.montecarlo.noiseless,
        );

        let mut pso_rng = stream(master, Domain::Pso, t);
        let loc = pso_locate(&obs, scene, solution, &s, &pso_cfg, &mut pso_rng)
            .map_err(|e| format!("trial {trial}: {e}"))?;
        let error_km = (loc.p_hat - scene.target.position_ecef_km).norm();

        // Rate metrics on the trial's channel realization when NLOS redraws
        // are enabled; the sensing path depends only on the frozen geometry.
        let (min_rate, mean_rate) = if scene.m() == 0 {
            (f64::NAN, f64::NAN)
        } else if cfg.redraw.nlos {
            let scene_t = cfg
                .build_scene(t + 1)
                .map_err(|e| format!("trial {trial}: {e}"))?;
            rates_of(&scene_t, solution).map_err(|e| format!("trial {trial}: {e}"))?
        } else {
            rates_of(scene, solution).map_err(|e| format!("trial {trial}: {e}"))?
        };
        Ok(TrialOutcome {
            error_km,
            min_rate,
            mean_rate,
        })
    };

    let results: Vec<std::result::Result<TrialOutcome, String>> = if cfg.workers == 1 {
        (0..cfg.num_trials).map(one_trial).collect()
    } else if cfg.workers == 0 {
        (0..cfg.num_trials).into_par_iter().map(one_trial).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
        pool.install(|| (0..cfg.num_trials).into_par_iter().map(one_trial).collect())
    };

    let mut outcomes = Vec::with_capacity(cfg.num_trials);
    let mut warnings = Vec::new();
    let mut failed = 0usize;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(msg) => {
                failed += 1;
                warnings.push(msg);
            }
        }
    }
    if failed * 2 > cfg.num_trials {
        return Err(Error::Numerical(format!(
            "{failed}/{} trials failed; aborting",
            cfg.num_trials
        )));
    }
    Ok((outcomes, failed, warnings))
}

/// Run one experiment point: build the scene, obtain the beamforming
/// solution, evaluate the closed-form metrics and optionally run
/// localization trials.
fn run_point(
    cfg: &ExperimentConfig,
    label: &str,
    with_trials: bool,
    table: &mut ResultTable,
    manifest: &mut RunManifest,
) -> Result<()> {
    let scene = cfg.build_scene(0)?;
    manifest.warnings.extend(scene.warnings.iter().cloned());

    let (solution, iterations, solve_warnings) = solve_for_config(cfg, &scene)?;
    manifest
        .warnings
        .extend(solve_warnings.iter().map(|w| format!("[{label}] {w}")));

    let metrics = evaluate_solution(&scene, &solution)?;
    table.push(label, "rcrb_m", metrics.rcrb_m, 0.0, 1);
    table.push(label, "iterations", iterations as f64, 0.0, 1);

    if with_trials {
        let (outcomes, failed, trial_warnings) = run_trials(cfg, &scene, &solution)?;
        manifest.failed_trials += failed;
        manifest
            .warnings
            .extend(trial_warnings.iter().map(|w| format!("[{label}] {w}")));

        let errors_m: Vec<f64> = outcomes.iter().map(|o| o.error_km * 1e3).collect();
        let rmse_m = (errors_m.iter().map(|e| e * e).sum::<f64>() / errors_m.len() as f64).sqrt();
        let (_, err_std) = mean_std(&errors_m);
        table.push(label, "rmse_m", rmse_m, err_std, errors_m.len() as u64);

        if scene.m() > 0 {
            let minr: Vec<f64> = outcomes.iter().map(|o| o.min_rate).collect();
            let meanr: Vec<f64> = outcomes.iter().map(|o| o.mean_rate).collect();
            let (m1, s1) = mean_std(&minr);
            let (m2, s2) = mean_std(&meanr);
            table.push(label, "min_rate", m1, s1, minr.len() as u64);
            table.push(label, "mean_rate", m2, s2, meanr.len() as u64);
        }
    } else if scene.m() > 0 {
        table.push(label, "min_rate", metrics.min_rate_bps_hz, 0.0, 1);
        let mean_rate =
            metrics.rates_bps_hz.iter().sum::<f64>() / metrics.rates_bps_hz.len() as f64;
        table.push(label, "mean_rate", mean_rate, 0.0, 1);
    }
    Ok(())
}

/// Monte Carlo run at the configured operating point.
pub fn run_montecarlo(cfg: &ExperimentConfig) -> Result<(ResultTable, RunManifest)> {
    cfg.validate()?;
    let start = std::time::Instant::now();
    let mut table = ResultTable::default();
    let mut manifest = RunManifest::new(cfg);
    run_point(cfg, "-", true, &mut table, &mut manifest)?;
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    Ok((table, manifest))
}

/// Parameter sweep over the configured axis; each point reuses the same
/// trial sub-seeds so points are directly comparable.
pub fn sweep(cfg: &ExperimentConfig) -> Result<(ResultTable, RunManifest)> {
    cfg.validate()?;
    let axis = cfg
        .sweep
        .axis
        .ok_or_else(|| Error::Config("sweep.axis is required for a sweep run".into()))?;
    if cfg.sweep.values.is_empty() {
        return Err(Error::Config("sweep.values must be non-empty".into()));
    }
    let start = std::time::Instant::now();
    let mut table = ResultTable::default();
    let mut manifest = RunManifest::new(cfg);
    for value in &cfg.sweep.values {
        let point_cfg = cfg.with_sweep_value(axis, value)?;
        let label = value.to_string();
        match run_point(
            &point_cfg,
            &label,
            cfg.sweep.with_rmse,
            &mut table,
            &mut manifest,
        ) {
            Ok(()) => {}
            Err(Error::Infeasible(msg)) => {
                // Infeasible points are recorded, not fatal for the sweep.
                manifest
                    .warnings
                    .push(format!("[{label}] infeasible point skipped: {msg}"));
            }
            Err(e) => return Err(e),
        }
    }
    manifest.wall_time_s = start.elapsed().as_secs_f64();
    Ok((table, manifest))
}
