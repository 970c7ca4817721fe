//! The experiment driver behind the `ris-mimo` binary: single-point rates,
//! joint optimization with persisted artifacts, parameter sweeps and the
//! cross-check suite.

mod io;
mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::mpsc;
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::alternating::{initial_phases, optimize_joint, perfect_csit_rate, JointOptions, JointResult};
use crate::channel::{build_statistics, SystemStatistics};
use crate::config::ScenarioConfig;
use crate::covariance::optimize_covariance;
use crate::error::{Error, Result};
use crate::rate::{evaluate, monte_carlo_rate, PhaseVector, TransmitCovariance};

pub use io::{read_matrix, write_matrix, write_vector};
pub use validate::{run_checks, Check, ValidationReport};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;
pub const EXIT_VALIDATION: i32 = 4;

/// Exit code for a failed command.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } => EXIT_CONFIG,
        _ => EXIT_NUMERICAL,
    }
}

fn cli_error(key: &str, reason: impl Into<String>) -> Error {
    Error::Config {
        key: key.to_string(),
        reason: reason.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Scheme {
    /// Joint design of `Q` and the phases from statistics.
    Optimized,
    /// Uniform `Q`, random phases.
    UniformRandom,
    /// Waterfilled `Q` with the RIS removed.
    NoRis,
    /// `Q` and phases designed per channel realization, averaged.
    PerfectCsitMc,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [
        Scheme::Optimized,
        Scheme::UniformRandom,
        Scheme::NoRis,
        Scheme::PerfectCsitMc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Scheme::Optimized => "optimized",
            Scheme::UniformRandom => "uniform_random",
            Scheme::NoRis => "no_ris",
            Scheme::PerfectCsitMc => "perfect_csit_mc",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scheme::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| cli_error("--scheme", format!("unknown scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepVar {
    PowerDbm,
    RisElements,
    /// Abscissa of the RIS, meters.
    RisPositionM,
}

impl SweepVar {
    pub fn name(self) -> &'static str {
        match self {
            SweepVar::PowerDbm => "power_dbm",
            SweepVar::RisElements => "ris_elements",
            SweepVar::RisPositionM => "ris_position_m",
        }
    }

    pub fn unit(self) -> &'static str {
        match self {
            SweepVar::PowerDbm => "dBm",
            SweepVar::RisElements => "elements",
            SweepVar::RisPositionM => "m",
        }
    }

    /// `cfg` with this variable set to `value`.
    pub fn apply(self, cfg: &ScenarioConfig, value: f64) -> Result<ScenarioConfig> {
        let mut out = *cfg;
        match self {
            SweepVar::PowerDbm => out.power.p_dbm = value,
            SweepVar::RisElements => {
                if !(value >= 1.0 && value.fract() == 0.0) {
                    return Err(cli_error(
                        "--sweep",
                        format!("ris_elements must be a positive integer, got {value}"),
                    ));
                }
                out.dims.l = value as usize;
            }
            SweepVar::RisPositionM => out.geometry.ris[0] = value,
        }
        out.validate()?;
        Ok(out)
    }
}

impl FromStr for SweepVar {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [SweepVar::PowerDbm, SweepVar::RisElements, SweepVar::RisPositionM]
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| cli_error("--sweep", format!("unknown sweep variable `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub variable: SweepVar,
    pub values: Vec<f64>,
    pub schemes: Vec<Scheme>,
    pub mc_trials: usize,
}

impl SweepSpec {
    /// Parses `var=v1,v2,...`.
    pub fn parse(arg: &str, schemes: Vec<Scheme>, mc_trials: usize) -> Result<Self> {
        let (var, list) = arg
            .split_once('=')
            .ok_or_else(|| cli_error("--sweep", "expected <var>=<v1,v2,...>"))?;
        let values = list
            .split(',')
            .map(|v| {
                v.trim()
                    .parse::<f64>()
                    .map_err(|_| cli_error("--sweep", format!("`{v}` is not a number")))
            })
            .collect::<Result<Vec<f64>>>()?;
        let spec = SweepSpec {
            variable: var.trim().parse()?,
            values,
            schemes,
            mc_trials,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.values.is_empty() {
            return Err(cli_error("--sweep", "no values"));
        }
        if !self.values.windows(2).all(|w| w[0] < w[1]) {
            return Err(cli_error("--sweep", "values must be strictly increasing"));
        }
        if self.schemes.is_empty() {
            return Err(cli_error("--scheme", "no schemes"));
        }
        Ok(())
    }
}

/// One CSV line.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_var: String,
    pub sweep_value: f64,
    pub scheme: String,
    pub rate_analytic_bits: Option<f64>,
    pub rate_mc_bits: Option<f64>,
    pub rate_mc_stderr: Option<f64>,
    pub outer_iters: usize,
    pub fp_iters_total: usize,
    pub wall_ms: u64,
    pub status: String,
}

pub const CSV_HEADER: &str =
    "sweep_var,sweep_value,scheme,rate_analytic_bits,rate_mc_bits,rate_mc_stderr,outer_iters,fp_iters_total,wall_ms,status";

/// Settings shared by every command.
#[derive(Debug, Clone)]
pub struct RunContext {
    pub config: ScenarioConfig,
    pub seed: u64,
    pub trials: usize,
    pub out_dir: PathBuf,
}

impl RunContext {
    /// Seed and trial count default to the config's `mc` section.
    pub fn new(config: ScenarioConfig, seed: Option<u64>, trials: Option<usize>, out_dir: PathBuf) -> Self {
        RunContext {
            seed: seed.unwrap_or(config.mc.seed),
            trials: trials.unwrap_or(config.mc.trials),
            config,
            out_dir,
        }
    }

    pub fn joint_options(&self) -> JointOptions {
        let o = &self.config.optimizer;
        let mut opts = JointOptions {
            seed: self.seed,
            restarts: o.restarts,
            max_outer: o.max_outer,
            ..JointOptions::default()
        }
        .with_epsilon(o.epsilon);
        opts.phase.initial_step = o.phase_step;
        opts
    }
}

/// Result of one scheme at one scenario.
#[derive(Debug, Clone)]
pub struct PointOutcome {
    pub rate_analytic_nats: Option<f64>,
    pub rate_mc_nats: Option<(f64, f64)>,
    pub outer_iters: usize,
    pub fp_iters: usize,
    pub q: Option<TransmitCovariance>,
    pub theta: Option<PhaseVector>,
    pub joint: Option<JointResult>,
}

/// Statistics with the config's link switches already applied.
pub fn scenario_statistics(cfg: &ScenarioConfig) -> Result<SystemStatistics> {
    build_statistics(cfg)
}

/// Evaluates one scheme. `trials = 0` skips the Monte-Carlo column.
pub fn run_scheme(
    cfg: &ScenarioConfig,
    scheme: Scheme,
    seed: u64,
    trials: usize,
    opts: &JointOptions,
) -> Result<PointOutcome> {
    let stats = scenario_statistics(cfg)?;
    let n = stats.dims.n;
    let l = stats.dims.l;
    let mc = |s: &SystemStatistics, q: &TransmitCovariance, t: &PhaseVector| -> Result<Option<(f64, f64)>> {
        if trials == 0 {
            return Ok(None);
        }
        let r = monte_carlo_rate(s, q, t, trials, seed)?;
        Ok(Some((r.nats, r.stderr_nats().unwrap_or(0.0))))
    };
    match scheme {
        Scheme::Optimized => {
            let joint = optimize_joint(&stats, opts)?;
            Ok(PointOutcome {
                rate_analytic_nats: Some(joint.rate()),
                rate_mc_nats: mc(&stats, &joint.q, &joint.theta)?,
                outer_iters: joint.outer_iterations,
                fp_iters: joint.fp_iterations,
                q: Some(joint.q.clone()),
                theta: Some(joint.theta.clone()),
                joint: Some(joint),
            })
        }
        Scheme::UniformRandom => {
            let q = TransmitCovariance::uniform(n, stats.power_budget)?;
            let theta = initial_phases(l, seed, 0);
            let ev = evaluate(&stats, &q, &theta, None, &opts.covariance.fixed_point)?;
            Ok(PointOutcome {
                rate_analytic_nats: Some(ev.nats),
                rate_mc_nats: mc(&stats, &q, &theta)?,
                outer_iters: 0,
                fp_iters: ev.fixed_point.iterations,
                q: Some(q),
                theta: Some(theta),
                joint: None,
            })
        }
        Scheme::NoRis => {
            let bare = stats.without_ris();
            let theta = PhaseVector::zeros(l);
            let cov = optimize_covariance(&bare, &theta, None, None, &opts.covariance)?;
            Ok(PointOutcome {
                rate_analytic_nats: Some(cov.rate()),
                rate_mc_nats: mc(&bare, &cov.q, &theta)?,
                outer_iters: cov.iterations,
                fp_iters: cov.fp_iterations,
                q: Some(cov.q.clone()),
                theta: None,
                joint: None,
            })
        }
        Scheme::PerfectCsitMc => {
            let r = perfect_csit_rate(&stats, trials.max(1), seed, opts)?;
            Ok(PointOutcome {
                rate_analytic_nats: None,
                rate_mc_nats: Some((r.nats, r.stderr_nats().unwrap_or(0.0))),
                outer_iters: 0,
                fp_iters: 0,
                q: None,
                theta: None,
                joint: None,
            })
        }
    }
}

fn bits(nats: f64) -> f64 {
    nats / std::f64::consts::LN_2
}

fn row_from(var: &str, value: f64, scheme: Scheme, started: Instant, outcome: Result<PointOutcome>) -> ResultRow {
    let wall_ms = started.elapsed().as_millis() as u64;
    match outcome {
        Ok(p) => ResultRow {
            sweep_var: var.to_string(),
            sweep_value: value,
            scheme: scheme.to_string(),
            rate_analytic_bits: p.rate_analytic_nats.map(bits),
            rate_mc_bits: p.rate_mc_nats.map(|(m, _)| bits(m)),
            rate_mc_stderr: p.rate_mc_nats.map(|(_, s)| bits(s)),
            outer_iters: p.outer_iters,
            fp_iters_total: p.fp_iters,
            wall_ms,
            status: "ok".to_string(),
        },
        Err(e) => ResultRow {
            sweep_var: var.to_string(),
            sweep_value: value,
            scheme: scheme.to_string(),
            rate_analytic_bits: None,
            rate_mc_bits: None,
            rate_mc_stderr: None,
            outer_iters: 0,
            fp_iters_total: 0,
            wall_ms,
            status: format!("error: {e}"),
        },
    }
}

fn ensure_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid("json", e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

/// `rate`: analytic and Monte-Carlo rate for one scheme (uniform `Q` and
/// random phases by default). Writes `rate.csv` and `rate.json`.
pub fn cmd_rate(ctx: &RunContext, scheme: Scheme) -> Result<ResultRow> {
    let started = Instant::now();
    // `rate` keeps the covariance uniform for the RIS-free baseline.
    let out = match scheme {
        Scheme::NoRis => rate_no_ris_uniform(ctx),
        _ => run_scheme(&ctx.config, scheme, ctx.seed, ctx.trials, &ctx.joint_options()),
    }?;
    let row = row_from("none", 0.0, scheme, started, Ok(out));
    ensure_dir(&ctx.out_dir)?;
    io::write_rows(&ctx.out_dir.join("rate.csv"), std::slice::from_ref(&row))?;
    write_json(&ctx.out_dir.join("rate.json"), &row)?;
    Ok(row)
}

fn rate_no_ris_uniform(ctx: &RunContext) -> Result<PointOutcome> {
    let stats = scenario_statistics(&ctx.config)?.without_ris();
    let q = TransmitCovariance::uniform(stats.dims.n, stats.power_budget)?;
    let theta = PhaseVector::zeros(stats.dims.l);
    let ev = evaluate(&stats, &q, &theta, None, &ctx.joint_options().covariance.fixed_point)?;
    let mc = if ctx.trials > 0 {
        let r = monte_carlo_rate(&stats, &q, &theta, ctx.trials, ctx.seed)?;
        Some((r.nats, r.stderr_nats().unwrap_or(0.0)))
    } else {
        None
    };
    Ok(PointOutcome {
        rate_analytic_nats: Some(ev.nats),
        rate_mc_nats: mc,
        outer_iters: 0,
        fp_iters: ev.fixed_point.iterations,
        q: Some(q),
        theta: None,
        joint: None,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct OptimizeSummary {
    pub rate_bits: f64,
    pub rate_nats: f64,
    pub outer_iterations: usize,
    pub converged: bool,
    pub fp_iterations: usize,
    pub restart: usize,
    pub restart_rates_bits: Vec<f64>,
    /// False when the RIS is switched off and the phases have no effect.
    pub theta_relevant: bool,
    pub seed: u64,
}

/// `optimize`: joint design, persisting `Q`, its eigendecomposition, the
/// phases and the rate trace.
pub fn cmd_optimize(ctx: &RunContext) -> Result<(JointResult, OptimizeSummary)> {
    let stats = scenario_statistics(&ctx.config)?;
    let joint = optimize_joint(&stats, &ctx.joint_options())?;
    let dir = &ctx.out_dir;
    ensure_dir(dir)?;
    io::write_matrix(&dir.join("q.txt"), joint.q.matrix())?;
    let eig = joint.q.psd().eigen();
    io::write_vector(&dir.join("q_eigenvalues.txt"), &eig.values)?;
    io::write_matrix(&dir.join("q_eigenvectors.txt"), &eig.vectors)?;
    io::write_vector(&dir.join("theta.txt"), joint.theta.angles())?;
    io::write_trace(&dir.join("trace.csv"), &joint.rate_trace)?;
    let summary = OptimizeSummary {
        rate_bits: joint.bits(),
        rate_nats: joint.rate(),
        outer_iterations: joint.outer_iterations,
        converged: joint.converged,
        fp_iterations: joint.fp_iterations,
        restart: joint.restart,
        restart_rates_bits: joint.restart_rates.iter().map(|&r| bits(r)).collect(),
        theta_relevant: stats.has_ris_link(),
        seed: ctx.seed,
    };
    write_json(&dir.join("optimize.json"), &summary)?;
    Ok((joint, summary))
}

#[derive(Debug, Serialize)]
struct SweepMeta<'a> {
    sweep_var: &'a str,
    sweep_unit: &'a str,
    values: &'a [f64],
    schemes: Vec<&'a str>,
    rate_unit: &'a str,
    mc_trials: usize,
    seed: u64,
    columns: Vec<&'a str>,
    csv: &'a str,
}

/// `sweep`: every scheme at every sweep value. Points run concurrently;
/// rows reach `sweep.csv` in sweep order as soon as all earlier rows are
/// done. A failing point is recorded in its `status` column.
pub fn cmd_sweep(ctx: &RunContext, spec: &SweepSpec) -> Result<Vec<ResultRow>> {
    spec.validate()?;
    let configs = spec
        .values
        .iter()
        .map(|&v| spec.variable.apply(&ctx.config, v))
        .collect::<Result<Vec<_>>>()?;
    ensure_dir(&ctx.out_dir)?;
    let csv_path = ctx.out_dir.join("sweep.csv");
    let mut writer = io::RowWriter::create(&csv_path)?;
    let opts = ctx.joint_options();
    let jobs: Vec<(usize, f64, Scheme)> = spec
        .values
        .iter()
        .enumerate()
        .flat_map(|(i, &v)| spec.schemes.iter().map(move |&s| (i, v, s)))
        .collect();
    let var = spec.variable.name();
    let (tx, rx) = mpsc::channel::<(usize, ResultRow)>();
    let total = jobs.len();
    let (rows, write_err) = std::thread::scope(|scope| {
        // Rows are written on a plain thread so the rayon workers stay busy.
        let consumer = scope.spawn(move || {
            let mut rows = Vec::with_capacity(total);
            let mut write_err = None;
            let mut pending = BTreeMap::new();
            for (j, row) in rx.iter() {
                pending.insert(j, row);
                while let Some(row) = pending.remove(&rows.len()) {
                    if write_err.is_none() {
                        if let Err(e) = writer.write(&row) {
                            write_err = Some(e);
                        }
                    }
                    rows.push(row);
                }
            }
            (rows, write_err)
        });
        jobs.par_iter().enumerate().for_each_with(tx, |tx, (j, &(i, v, s))| {
            let started = Instant::now();
            let out = run_scheme(&configs[i], s, ctx.seed, spec.mc_trials, &opts);
            if let Err(e) = &out {
                log::warn!("{var}={v} {s}: {e}");
            }
            let _ = tx.send((j, row_from(var, v, s, started, out)));
        });
        consumer.join().expect("sweep writer panicked")
    });
    if let Some(e) = write_err {
        return Err(e);
    }
    let meta = SweepMeta {
        sweep_var: var,
        sweep_unit: spec.variable.unit(),
        values: &spec.values,
        schemes: spec.schemes.iter().map(|s| s.name()).collect(),
        rate_unit: "bits/s/Hz",
        mc_trials: spec.mc_trials,
        seed: ctx.seed,
        columns: CSV_HEADER.split(',').collect(),
        csv: "sweep.csv",
    };
    write_json(&ctx.out_dir.join("sweep.json"), &meta)?;
    Ok(rows)
}

/// `validate`: the cross-check suite; writes `validate.json`.
pub fn cmd_validate(ctx: &RunContext) -> Result<ValidationReport> {
    let report = run_checks(&ctx.config, ctx.seed, ctx.trials)?;
    ensure_dir(&ctx.out_dir)?;
    write_json(&ctx.out_dir.join("validate.json"), &report)?;
    Ok(report)
}
