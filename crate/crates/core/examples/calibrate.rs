// Calibration probe: measures trend behavior of the shipped presets and the
// acceptance operating points before freezing tolerances.
use leoisac_core::harness::config::{ExperimentConfig, SweepAxis, SweepValue};
use leoisac_core::harness::{run_montecarlo, sweep};
use std::time::Instant;

fn load(name: &str) -> ExperimentConfig {
    let text = std::fs::read_to_string(format!("presets/{name}.toml")).unwrap();
    ExperimentConfig::from_toml_str(&text).unwrap()
}

fn main() {
    let which = std::env::args().nth(1).unwrap_or_else(|| "all".into());

    if which == "fig6" || which == "all" {
        let cfg = load("fig6");
        let t0 = Instant::now();
        let (table, m) = sweep(&cfg).unwrap();
        println!("fig6 ({:.1?}):", t0.elapsed());
        for r in table.metric("rcrb_m") {
            println!("  pmax={} rcrb_m={:.4e}", r.sweep_value, r.mean);
        }
        for w in &m.warnings { println!("  warn: {w}"); }
    }
    if which == "fig5" || which == "all" {
        let cfg = load("fig5");
        let t0 = Instant::now();
        let (table, m) = sweep(&cfg).unwrap();
        println!("fig5 ({:.1?}):", t0.elapsed());
        for r in table.metric("rcrb_m") {
            println!("  eta={} rcrb_m={:.4e}", r.sweep_value, r.mean);
        }
        for w in &m.warnings { println!("  warn: {w}"); }
    }
    if which == "fig4" || which == "all" {
        let cfg = load("fig4");
        let t0 = Instant::now();
        let (table, m) = sweep(&cfg).unwrap();
        println!("fig4 ({:.1?}):", t0.elapsed());
        for r in table.metric("rcrb_m") {
            println!("  type={} rcrb_m={:.4e}", r.sweep_value, r.mean);
        }
        for w in &m.warnings { println!("  warn: {w}"); }
    }
    if which == "fig7" || which == "all" {
        let mut cfg = load("fig7");
        cfg.num_trials = 40;
        let t0 = Instant::now();
        let (table, m) = sweep(&cfg).unwrap();
        println!("fig7 trunc-40 ({:.1?}):", t0.elapsed());
        let rcrb = table.metric("rcrb_m");
        let rmse = table.metric("rmse_m");
        for (rc, rm) in rcrb.iter().zip(rmse.iter()) {
            println!("  pmax={} rcrb={:.4e} rmse={:.4e} ratio={:.4}",
                rc.sweep_value, rc.mean, rm.mean, rm.mean / rc.mean);
        }
        for w in m.warnings.iter().take(5) { println!("  warn: {w}"); }
    }
    if which == "fig9" || which == "all" {
        let mut cfg = load("fig9");
        cfg.num_trials = 40;
        let t0 = Instant::now();
        let (table, m) = sweep(&cfg).unwrap();
        println!("fig9 trunc-40 ({:.1?}):", t0.elapsed());
        let rcrb = table.metric("rcrb_m");
        let rmse = table.metric("rmse_m");
        for (rc, rm) in rcrb.iter().zip(rmse.iter()) {
            println!("  n#={} rcrb={:.4e} rmse={:.4e}", rc.sweep_value, rc.mean, rm.mean);
        }
        for w in m.warnings.iter().take(5) { println!("  warn: {w}"); }
    }
    if which == "default" || which == "all" {
        let mut cfg = load("default");
        cfg.num_trials = 10;
        let t0 = Instant::now();
        let (table, m) = run_montecarlo(&cfg).unwrap();
        println!("default mc-10 ({:.1?}):", t0.elapsed());
        for r in &table.rows {
            println!("  {} = {:.4e} (std {:.2e}, n {})", r.metric, r.mean, r.std, r.n);
        }
        for w in m.warnings.iter().take(3) { println!("  warn: {w}"); }
    }
    let _ = (SweepAxis::Eta, SweepValue::Number(0.0));
}
