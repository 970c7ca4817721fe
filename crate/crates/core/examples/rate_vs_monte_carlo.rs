//! Large-system rate against the simulated ergodic rate over a power grid.

use std::f64::consts::LN_2;

use ris_mimo::alternating::initial_phases;
use ris_mimo::channel::build_statistics;
use ris_mimo::config::ScenarioConfig;
use ris_mimo::rate::{deterministic_rate, monte_carlo_rate, TransmitCovariance};

fn main() -> ris_mimo::error::Result<()> {
    println!("P [dBm]  analytic  monte-carlo  stderr  (bits/s/Hz)");
    for p in [0.0, 5.0, 10.0, 15.0, 20.0] {
        let mut cfg = ScenarioConfig::default();
        cfg.power.p_dbm = p;
        let stats = build_statistics(&cfg)?;
        let q = TransmitCovariance::uniform(stats.dims.n, stats.power_budget)?;
        let theta = initial_phases(stats.dims.l, cfg.mc.seed, 0);
        let analytic = deterministic_rate(&stats, &q, &theta)?;
        let mc = monte_carlo_rate(&stats, &q, &theta, 1000, cfg.mc.seed)?;
        println!(
            "{p:7.1}  {:8.3}  {:11.3}  {:6.3}",
            analytic.bits(),
            mc.bits(),
            mc.stderr_nats().unwrap_or(0.0) / LN_2
        );
    }
    Ok(())
}
