//! Projected gradient ascent over the RIS phases at uniform power.

use ris_mimo::alternating::initial_phases;
use ris_mimo::channel::build_statistics;
use ris_mimo::config::ScenarioConfig;
use ris_mimo::phase::{optimize_phases, phase_gradient, PhaseOptions};
use ris_mimo::rate::TransmitCovariance;

fn main() -> ris_mimo::error::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.dims.l = 32;
    let stats = build_statistics(&cfg)?;
    let q = TransmitCovariance::uniform(stats.dims.n, stats.power_budget)?;
    let theta0 = initial_phases(stats.dims.l, cfg.mc.seed, 0);
    let g = phase_gradient(&stats, &q, &theta0)?;
    println!("initial max |dR/dv| = {:.3e}", g.max_abs());
    let out = optimize_phases(&stats, &q, &theta0, None, &PhaseOptions::default())?;
    println!(
        "{} iterations: {:.6} -> {:.6} nats",
        out.iterations,
        out.rate_trace[0],
        out.rate()
    );
    let g = phase_gradient(&stats, &q, &out.theta)?;
    println!(
        "final max |dR/dtheta| = {:.3e}",
        g.angle_derivative().iter().fold(0.0f64, |m, d| m.max(d.abs()))
    );
    Ok(())
}
