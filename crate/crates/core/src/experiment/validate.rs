//! Internal consistency checks on one scenario, all at uniform `Q` and the
//! first restart's random phases.

use serde::Serialize;

use crate::alternating::initial_phases;
use crate::channel::{build_statistics, normalization_errors};
use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::large_system::{
    asymptotic_rate, rate_no_direct, rate_no_ris, rate_rayleigh, solve_fixed_point, stieltjes_monte_carlo,
    stieltjes_product,
};
use crate::linalg::Complex64;
use crate::phase::{finite_difference_gradient, gradient_from_f, gradient_reference};
use crate::rate::{apply_replacements, deterministic_rate, evaluate, monte_carlo_rate, TransmitCovariance};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    Skip,
}

#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub status: CheckStatus,
    /// The measured discrepancy.
    pub value: f64,
    pub tolerance: f64,
    pub detail: String,
}

impl Check {
    fn compare(name: &'static str, value: f64, tolerance: f64, detail: String) -> Self {
        let status = if value < tolerance {
            CheckStatus::Pass
        } else {
            CheckStatus::Fail
        };
        Check {
            name,
            status,
            value,
            tolerance,
            detail,
        }
    }

    fn failed(name: &'static str, tolerance: f64, detail: String) -> Self {
        Check {
            name,
            status: CheckStatus::Fail,
            value: f64::NAN,
            tolerance,
            detail,
        }
    }

    fn skipped(name: &'static str, tolerance: f64) -> Self {
        Check {
            name,
            status: CheckStatus::Skip,
            value: f64::NAN,
            tolerance,
            detail: "no Monte-Carlo trials requested".to_string(),
        }
    }

    pub fn line(&self) -> String {
        let tag = match self.status {
            CheckStatus::Pass => "PASS",
            CheckStatus::Fail => "FAIL",
            CheckStatus::Skip => "SKIP",
        };
        format!(
            "{tag} {:<20} value={:.3e} tol={:.1e} {}",
            self.name, self.value, self.tolerance, self.detail
        )
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ValidationReport {
    pub passed: bool,
    pub seed: u64,
    pub trials: usize,
    pub checks: Vec<Check>,
}

fn abs_diff(name: &'static str, a: &Result<f64>, b: &Result<f64>, tol: f64) -> Check {
    match (a, b) {
        (Ok(a), Ok(b)) => Check::compare(name, (a - b).abs(), tol, format!("{a:.12e} vs {b:.12e}")),
        (Err(e), _) | (_, Err(e)) => Check::failed(name, tol, e.to_string()),
    }
}

fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
    let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let err = a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max);
    if scale == 0.0 {
        err
    } else {
        err / scale
    }
}

/// Runs every check; `trials = 0` skips the two Monte-Carlo comparisons.
pub fn run_checks(cfg: &ScenarioConfig, seed: u64, trials: usize) -> Result<ValidationReport> {
    let stats = build_statistics(cfg)?;
    let q = TransmitCovariance::uniform(stats.dims.n, stats.power_budget)?;
    let theta = initial_phases(stats.dims.l, seed, 0);
    let eff = apply_replacements(&stats, &q, &theta)?;
    let mut checks = Vec::new();

    let norm = normalization_errors(&stats).into_iter().fold(0.0, f64::max);
    checks.push(Check::compare(
        "normalization",
        norm,
        1e-8,
        "max relative trace error".into(),
    ));

    checks.push(match solve_fixed_point(&eff) {
        Ok(sol) if sol.converged => Check::compare(
            "fixed_point",
            sol.residual,
            1e-10,
            format!("{} iterations", sol.iterations),
        ),
        Ok(sol) => Check::failed(
            "fixed_point",
            1e-10,
            format!("not converged, residual {:e}", sol.residual),
        ),
        Err(e) => Check::failed("fixed_point", 1e-10, e.to_string()),
    });

    let full = |s: &_| asymptotic_rate(s).map(|r| r.nats);
    let bare = eff.without_ris();
    checks.push(abs_diff(
        "reduction_no_ris",
        &full(&bare),
        &rate_no_ris(&bare).map(|r| r.nats),
        1e-10,
    ));
    let hop = eff.without_direct();
    checks.push(abs_diff(
        "reduction_no_direct",
        &full(&hop),
        &rate_no_direct(&hop).map(|r| r.nats),
        1e-10,
    ));
    let ray = eff.rayleigh();
    checks.push(abs_diff(
        "reduction_rayleigh",
        &full(&ray),
        &rate_rayleigh(&ray).map(|r| r.nats),
        1e-10,
    ));

    let analytic = deterministic_rate(&stats, &q, &theta).map(|r| r.nats);
    checks.push(abs_diff("dual_path", &analytic, &full(&eff), 1e-9));

    match evaluate(&stats, &q, &theta, None, &Default::default()) {
        Ok(ev) => {
            let grads = gradient_from_f(&stats, &q, &ev.f).and_then(|p| {
                // Rates of tens of nats make roundoff dominate below h ~ 1e-4.
                let fd = finite_difference_gradient(&stats, &q, &theta, &ev.fixed_point.scalars, 1e-3)?;
                let reference = gradient_reference(&stats, &q, &ev.f)?;
                Ok((p, fd, reference))
            });
            match grads {
                Ok((p, fd, reference)) => {
                    checks.push(Check::compare(
                        "gradient_fd",
                        max_rel(&p, &fd),
                        1e-5,
                        "vs central differences".into(),
                    ));
                    checks.push(Check::compare(
                        "gradient_reference",
                        max_rel(&p, &reference),
                        1e-9,
                        "vs elementwise form".into(),
                    ));
                }
                Err(e) => {
                    checks.push(Check::failed("gradient_fd", 1e-5, e.to_string()));
                    checks.push(Check::failed("gradient_reference", 1e-9, e.to_string()));
                }
            }
        }
        Err(e) => {
            checks.push(Check::failed("gradient_fd", 1e-5, e.to_string()));
            checks.push(Check::failed("gradient_reference", 1e-9, e.to_string()));
        }
    }

    if trials == 0 {
        checks.push(Check::skipped("stieltjes_mc", 0.02));
        checks.push(Check::skipped("analytic_vs_mc", 0.02));
    } else {
        // Zero-mean links at the scenario's noise-to-power ratio.
        let omega = stats.noise_power / cfg.transmit_power_watts();
        let ray = stats.rayleigh();
        let st = stieltjes_product(&ray.bs_ris, &ray.ris_user, omega).and_then(|de| {
            let (mc, _) = stieltjes_monte_carlo(&ray.bs_ris, &ray.ris_user, omega, 200, seed)?;
            Ok((de, mc))
        });
        checks.push(match st {
            Ok((de, mc)) => Check::compare(
                "stieltjes_mc",
                (de - mc).abs() / mc,
                0.02,
                format!("omega={omega:.3e} analytic={de:.6e} mc={mc:.6e}"),
            ),
            Err(e) => Check::failed("stieltjes_mc", 0.02, e.to_string()),
        });

        let mc = monte_carlo_rate(&stats, &q, &theta, trials, seed);
        checks.push(match (analytic, mc) {
            (Ok(a), Ok(m)) => {
                let se = m.stderr_nats().unwrap_or(0.0);
                let tol = (0.02 * m.nats).max(3.0 * se);
                Check::compare(
                    "analytic_vs_mc",
                    (a - m.nats).abs(),
                    tol,
                    format!("analytic={a:.6} mc={:.6} stderr={se:.2e} nats", m.nats),
                )
            }
            (Err(e), _) | (_, Err(e)) => Check::failed("analytic_vs_mc", 0.02, e.to_string()),
        });
    }

    Ok(ValidationReport {
        passed: checks.iter().all(|c| c.status != CheckStatus::Fail),
        seed,
        trials,
        checks,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reference_scenario_passes_without_mc() {
        let report = run_checks(&ScenarioConfig::default(), 1, 0).unwrap();
        for c in &report.checks {
            assert_ne!(c.status, CheckStatus::Fail, "{}", c.line());
        }
        assert!(report.passed);
    }

    #[test]
    fn scaled_receive_trace_fails_normalization() {
        let mut cfg = ScenarioConfig::default();
        cfg.faults.receive_trace_scale = 1.5;
        let report = run_checks(&cfg, 1, 0).unwrap();
        assert!(!report.passed);
        let norm = report.checks.iter().find(|c| c.name == "normalization").unwrap();
        assert_eq!(norm.status, CheckStatus::Fail);
    }
}
