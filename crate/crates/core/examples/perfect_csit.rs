//! Rate when `Q` and the phases are designed per channel realization.

use ris_mimo::alternating::{optimize_joint, perfect_csit_rate, JointOptions};
use ris_mimo::channel::build_statistics;
use ris_mimo::config::ScenarioConfig;

fn main() -> ris_mimo::error::Result<()> {
    let stats = build_statistics(&ScenarioConfig::default())?;
    let opts = JointOptions::default();
    let statistical = optimize_joint(&stats, &opts)?;
    let csit = perfect_csit_rate(&stats, 200, 1, &opts)?;
    println!("statistical CSIT: {:.4} bits/s/Hz", statistical.bits());
    println!("perfect CSIT:     {:.4} bits/s/Hz (200 draws)", csit.bits());
    Ok(())
}
