// Scratch diagnostics for preset operating points.
use leoisac_core::beamform::*;
use leoisac_core::harness::config::{ExperimentConfig, SweepAxis, SweepValue};

fn main() {
    let preset = std::env::args().nth(1).unwrap_or_else(|| "fig6".into());
    let text = std::fs::read_to_string(format!("presets/{preset}.toml")).unwrap();
    let base = ExperimentConfig::from_toml_str(&text).unwrap();
    let values: Vec<f64> = std::env::args()
        .skip(2)
        .map(|a| a.parse().unwrap())
        .collect();
    let values = if values.is_empty() {
        vec![20.0, 30.0, 40.0]
    } else {
        values
    };
    for pmax in values {
        let cfg = base
            .with_sweep_value(SweepAxis::PmaxDbm, &SweepValue::Number(pmax))
            .unwrap();
        let scene = cfg.build_scene(0).unwrap();
        let zf = zfbf_baseline(&scene, cfg.optimizer.eta_rate_bps_hz).unwrap();
        let zfm = evaluate_solution(&scene, &zf).unwrap();
        print!("pmax={pmax}: zfbf rcrb={:.4e} ", zfm.rcrb_m);
        match solve_sensing_centric(&scene, &cfg.optimizer.to_config().unwrap()) {
            Ok(rep) => {
                let m = evaluate_solution(&scene, &rep.solution).unwrap();
                println!(
                    "opt rcrb={:.4e} iters={} res={:.2e} conv={} warns={:?}",
                    m.rcrb_m,
                    rep.iterations.len(),
                    rep.iterations.last().unwrap().penalty_residual,
                    rep.converged,
                    rep.warnings
                );
            }
            Err(e) => println!("FAILED: {e}"),
        }
    }
}
