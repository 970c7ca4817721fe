//! Waterfilling on a diagonal `F`, then the covariance design for fixed phases.

use ris_mimo::alternating::initial_phases;
use ris_mimo::channel::build_statistics;
use ris_mimo::config::ScenarioConfig;
use ris_mimo::covariance::{optimize_covariance, waterfill, CovarianceOptions};
use ris_mimo::linalg::from_real_diagonal;

fn main() -> ris_mimo::error::Result<()> {
    let wf = waterfill(&from_real_diagonal(&[2.0, 0.5]), 2.0)?;
    println!("F = diag(2, 0.5), budget 2: mu = {:.6}, powers {:?}", wf.mu, wf.power);

    let stats = build_statistics(&ScenarioConfig::default())?;
    let theta = initial_phases(stats.dims.l, 1, 0);
    let out = optimize_covariance(&stats, &theta, None, None, &CovarianceOptions::default())?;
    let eig = out.q.psd().eigen();
    println!("rate trace (nats): {:?}", out.rate_trace);
    println!("eigenvalues of Q: {:?}", eig.values);
    Ok(())
}
