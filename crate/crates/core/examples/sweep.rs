//! RIS-position sweep written to a temporary directory, then printed.

use ris_mimo::config::ScenarioConfig;
use ris_mimo::experiment::{cmd_sweep, RunContext, Scheme, SweepSpec};

fn main() -> ris_mimo::error::Result<()> {
    let mut cfg = ScenarioConfig::default();
    cfg.dims.l = 32;
    let out = std::env::temp_dir().join("ris-mimo-sweep-example");
    let ctx = RunContext::new(cfg, None, Some(0), out.clone());
    let spec = SweepSpec::parse(
        "ris_position_m=10,25,40,55,70",
        vec![Scheme::Optimized, Scheme::UniformRandom],
        0,
    )?;
    cmd_sweep(&ctx, &spec)?;
    print!("{}", std::fs::read_to_string(out.join("sweep.csv"))?);
    Ok(())
}
