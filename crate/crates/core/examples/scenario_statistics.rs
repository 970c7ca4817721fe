//! Builds the reference scenario and prints link gains and trace checks.

use ris_mimo::channel::{build_statistics, normalization_errors, path_loss_db};
use ris_mimo::config::ScenarioConfig;

fn main() -> ris_mimo::error::Result<()> {
    let cfg = ScenarioConfig::default();
    let stats = build_statistics(&cfg)?;
    for (name, link) in ["BS-user", "BS-RIS", "RIS-user"].iter().zip(stats.links()) {
        println!(
            "{name:>9}: gain {:.3} dB, kappa {}, LoS power {:.3e}, tr T {:.3e}",
            10.0 * link.gain.log10(),
            link.kappa,
            link.los_power(),
            link.t.trace()
        );
    }
    println!("path loss at 40 m: {:.4} dB", path_loss_db(40.0, 5.0, 5.0)?);
    let worst = normalization_errors(&stats).into_iter().fold(0.0, f64::max);
    println!("largest normalization error: {worst:.1e}");
    println!(
        "noise {:.3e} W, budget tr Q <= {:.3e} W",
        stats.noise_power, stats.power_budget
    );
    Ok(())
}
