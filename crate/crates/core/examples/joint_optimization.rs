//! Alternating design of `Q` and the phases, with the usual baselines.

use ris_mimo::alternating::{optimize_joint, JointOptions};
use ris_mimo::channel::build_statistics;
use ris_mimo::config::ScenarioConfig;
use ris_mimo::experiment::{run_scheme, Scheme};

fn main() -> ris_mimo::error::Result<()> {
    let cfg = ScenarioConfig::default();
    let stats = build_statistics(&cfg)?;
    let opts = JointOptions {
        seed: cfg.mc.seed,
        ..JointOptions::default()
    };
    let joint = optimize_joint(&stats, &opts)?;
    println!(
        "joint: {:.4} bits/s/Hz, {} outer iterations, best of {} restarts is #{}",
        joint.bits(),
        joint.outer_iterations,
        joint.restart_rates.len(),
        joint.restart
    );
    for scheme in [Scheme::UniformRandom, Scheme::NoRis] {
        let p = run_scheme(&cfg, scheme, cfg.mc.seed, 0, &opts)?;
        println!(
            "{scheme}: {:.4} bits/s/Hz",
            p.rate_analytic_nats.unwrap() / std::f64::consts::LN_2
        );
    }
    Ok(())
}
