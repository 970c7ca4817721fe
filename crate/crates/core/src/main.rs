use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use ris_mimo::config::ScenarioConfig;
use ris_mimo::error::Result;
use ris_mimo::experiment::{
    cmd_optimize, cmd_rate, cmd_sweep, cmd_validate, exit_code, RunContext, Scheme, SweepSpec, EXIT_CONFIG, EXIT_OK,
    EXIT_VALIDATION,
};

/// Ergodic rate analysis and statistical-CSIT design for RIS-assisted MIMO.
#[derive(Parser)]
#[command(version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario TOML; the reference scenario when omitted.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides `mc.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Monte-Carlo trials, overriding `mc.trials`; 0 skips Monte Carlo.
    #[arg(long, global = true)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Analytic and Monte-Carlo rate of one scheme.
    Rate {
        #[arg(long, default_value = "uniform_random")]
        scheme: String,
    },
    /// Joint covariance and phase design; writes Q, theta and the trace.
    Optimize,
    /// Rates of several schemes over a parameter grid.
    Sweep {
        /// `power_dbm=...`, `ris_elements=...` or `ris_position_m=...`
        #[arg(long)]
        sweep: String,
        /// Comma-separated schemes.
        #[arg(long, default_value = "optimized,uniform_random,no_ris")]
        scheme: String,
    },
    /// Internal consistency checks.
    Validate,
}

fn run(cli: Cli) -> Result<i32> {
    let c = &cli.common;
    let config = match &c.config {
        Some(path) => ScenarioConfig::load(path)?,
        None => ScenarioConfig::default(),
    };
    let ctx = RunContext::new(config, c.seed, c.trials, c.out.clone());
    match &cli.command {
        Command::Rate { scheme } => {
            let row = cmd_rate(&ctx, scheme.parse()?)?;
            println!(
                "{}: analytic {} bits/s/Hz, mc {} bits/s/Hz",
                row.scheme,
                fmt_opt(row.rate_analytic_bits),
                fmt_opt(row.rate_mc_bits)
            );
        }
        Command::Optimize => {
            let (_, summary) = cmd_optimize(&ctx)?;
            println!(
                "rate {:.6} bits/s/Hz after {} outer iterations (restart {})",
                summary.rate_bits, summary.outer_iterations, summary.restart
            );
        }
        Command::Sweep { sweep, scheme } => {
            let schemes = scheme
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<Result<Vec<Scheme>>>()?;
            let spec = SweepSpec::parse(sweep, schemes, ctx.trials)?;
            let rows = cmd_sweep(&ctx, &spec)?;
            let failed = rows.iter().filter(|r| r.status != "ok").count();
            println!(
                "{} rows written to {}",
                rows.len(),
                ctx.out_dir.join("sweep.csv").display()
            );
            if failed > 0 {
                eprintln!("{failed} points failed");
                return Ok(ris_mimo::experiment::EXIT_NUMERICAL);
            }
        }
        Command::Validate => {
            let report = cmd_validate(&ctx)?;
            for check in &report.checks {
                println!("{}", check.line());
            }
            if !report.passed {
                return Ok(EXIT_VALIDATION);
            }
        }
    }
    Ok(EXIT_OK)
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.6}"))
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(w) = cli.common.workers {
        if w == 0 {
            eprintln!("error: --workers must be at least 1");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        pool = pool.num_threads(w);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let code = pool.install(|| match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    });
    ExitCode::from(code as u8)
}
