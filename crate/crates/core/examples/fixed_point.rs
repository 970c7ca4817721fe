//! Solves the six coupled scalar equations at uniform power and random phases.

use ris_mimo::alternating::initial_phases;
use ris_mimo::channel::build_statistics;
use ris_mimo::config::ScenarioConfig;
use ris_mimo::large_system::{solve_fixed_point_with, FixedPointOptions};
use ris_mimo::rate::{apply_replacements, TransmitCovariance};

fn main() -> ris_mimo::error::Result<()> {
    let stats = build_statistics(&ScenarioConfig::default())?;
    let q = TransmitCovariance::uniform(stats.dims.n, stats.power_budget)?;
    let eff = apply_replacements(&stats, &q, &initial_phases(stats.dims.l, 1, 0))?;
    for (label, opts) in [
        ("anderson", FixedPointOptions::default()),
        ("damped 0.5", FixedPointOptions::damped(0.5)),
    ] {
        let sol = solve_fixed_point_with(&eff, None, &opts)?;
        println!(
            "{label:>10}: {} iterations, residual {:.1e}, converged {}",
            sol.iterations, sol.residual, sol.converged
        );
        println!("            {:?}", sol.scalars);
    }
    Ok(())
}
