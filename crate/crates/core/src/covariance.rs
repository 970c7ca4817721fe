//! Transmit covariance design for fixed phases: waterfilling over the
//! eigenmodes of `F`, iterated until the rate settles.

use crate::channel::SystemStatistics;
use crate::error::{Error, Result};
use crate::large_system::{FixedPointOptions, Scalars};
use crate::linalg::{eigh_symmetrized, ensure_hermitian, CMatrix, HermitianPsd};
use crate::rate::{evaluate, PhaseVector, RateEvaluation, TransmitCovariance};

/// Eigenvalues below this fraction of the largest are treated as zero.
pub const EIGEN_FLOOR: f64 = 1e-12;

#[derive(Debug, Clone)]
pub struct WaterfillingResult {
    pub q: TransmitCovariance,
    /// Water level `mu`, with power `(1/mu - 1/lambda)^+` on each mode.
    /// Infinite for degenerate input.
    pub mu: f64,
    /// Eigenvalues of `F`, descending.
    pub eigenvalues: Vec<f64>,
    /// Power on each mode, aligned with `eigenvalues`.
    pub power: Vec<f64>,
    pub active_count: usize,
    /// `F` had no positive eigenvalue; `Q` is the uniform allocation.
    pub degenerate: bool,
}

/// Maximizes `log det(I + F Q)` over `tr Q <= budget`.
pub fn waterfill(f: &CMatrix, budget: f64) -> Result<WaterfillingResult> {
    if !(budget > 0.0 && budget.is_finite()) {
        return Err(Error::invalid("budget", "must be finite and > 0"));
    }
    ensure_hermitian(f)?;
    let n = f.nrows();
    let eig = eigh_symmetrized(f);
    let order: Vec<usize> = (0..n).rev().collect();
    let lambda: Vec<f64> = order.iter().map(|&i| eig.values[i]).collect();
    let lmax = lambda.first().copied().unwrap_or(0.0);
    if !(lmax > 0.0) {
        return Ok(WaterfillingResult {
            q: TransmitCovariance::uniform(n, budget)?,
            mu: f64::INFINITY,
            eigenvalues: lambda,
            power: vec![budget / n as f64; n],
            active_count: 0,
            degenerate: true,
        });
    }
    let positive = lambda.iter().take_while(|&&l| l > EIGEN_FLOOR * lmax).count();
    let mut level = 0.0;
    let mut active = 0;
    // Largest active set whose weakest mode still gets positive power.
    let prefix: Vec<f64> = lambda[..positive]
        .iter()
        .scan(0.0, |acc, &l| {
            *acc += 1.0 / l;
            Some(*acc)
        })
        .collect();
    for m in (1..=positive).rev() {
        level = (budget + prefix[m - 1]) / m as f64;
        if level - 1.0 / lambda[m - 1] > 0.0 {
            active = m;
            break;
        }
    }
    debug_assert!(active > 0, "one active mode always carries the whole budget");
    let power: Vec<f64> = (0..n)
        .map(|k| if k < active { level - 1.0 / lambda[k] } else { 0.0 })
        .collect();
    let mut scaled = eig.vectors.clone();
    for (k, &i) in order.iter().enumerate() {
        let s = power[k];
        for r in 0..n {
            scaled[(r, i)] *= s;
        }
    }
    let q = scaled * eig.vectors.adjoint();
    Ok(WaterfillingResult {
        q: TransmitCovariance::new(HermitianPsd::clamped(&q)?, budget)?,
        mu: 1.0 / level,
        eigenvalues: lambda,
        power,
        active_count: active,
        degenerate: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceOptions {
    /// Stop once the rate changes by less than this (nats).
    pub epsilon: f64,
    pub max_iterations: usize,
    /// Halvings of the step toward the waterfilling solution before giving up.
    pub max_halvings: usize,
    pub fixed_point: FixedPointOptions,
}

impl Default for CovarianceOptions {
    fn default() -> Self {
        CovarianceOptions {
            epsilon: 1e-5,
            max_iterations: 200,
            max_halvings: 20,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CovarianceOutcome {
    pub q: TransmitCovariance,
    /// Rate (nats) at the initial covariance followed by every accepted step.
    pub rate_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub fp_iterations: usize,
    pub evaluation: RateEvaluation,
}

impl CovarianceOutcome {
    pub fn rate(&self) -> f64 {
        self.evaluation.nats
    }

    pub fn scalars(&self) -> Scalars {
        self.evaluation.fixed_point.scalars
    }
}

/// Alternates fixed point, `F` assembly and waterfilling for fixed `theta`.
///
/// Each step moves from `Q` toward the waterfilling solution of `F(Q)`; the
/// step is halved until the rate does not decrease, so the trace is monotone.
/// Without `q_init` the iteration starts from the uniform allocation of
/// `stats.power_budget`.
pub fn optimize_covariance(
    stats: &SystemStatistics,
    theta: &PhaseVector,
    q_init: Option<&TransmitCovariance>,
    warm: Option<&Scalars>,
    opts: &CovarianceOptions,
) -> Result<CovarianceOutcome> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be > 0"));
    }
    let budget = stats.power_budget;
    let mut q = match q_init {
        Some(q) => q.clone(),
        None => TransmitCovariance::uniform(stats.dims.n, budget)?,
    };
    let mut ev = evaluate(stats, &q, theta, warm, &opts.fixed_point)?;
    let mut fp_iterations = ev.fixed_point.iterations;
    let mut trace = vec![ev.nats];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let target = waterfill(&ev.f.f, budget)?.q;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = if step == 1.0 {
                target.clone()
            } else {
                q.blend(&target, step)?
            };
            let next = evaluate(
                stats,
                &candidate,
                theta,
                Some(&ev.fixed_point.scalars),
                &opts.fixed_point,
            )?;
            fp_iterations += next.fixed_point.iterations;
            if next.nats >= ev.nats {
                accepted = Some((candidate, next));
                break;
            }
            step *= 0.5;
        }
        let Some((candidate, next)) = accepted else {
            converged = true;
            break;
        };
        let delta = next.nats - ev.nats;
        q = candidate;
        ev = next;
        trace.push(ev.nats);
        if delta < opts.epsilon {
            converged = true;
            break;
        }
    }
    Ok(CovarianceOutcome {
        q,
        rate_trace: trace,
        iterations,
        converged,
        fp_iterations,
        evaluation: ev,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_statistics;
    use crate::config::ScenarioConfig;
    use crate::large_system::test_instances::random_stats;
    use crate::linalg::test_util::{random_hpd, random_matrix, rng};
    use crate::linalg::{cplx, frobenius, from_real_diagonal, identity, max_abs};
    use crate::rate::deterministic_rate;
    use proptest::prelude::*;

    #[test]
    fn uniform_for_scaled_identity() {
        let wf = waterfill(&(identity(4) * cplx(3.0, 0.0)), 8.0).unwrap();
        assert!(max_abs(&(wf.q.matrix() - identity(4) * cplx(2.0, 0.0))) < 1e-12);
        assert_eq!(wf.active_count, 4);
    }

    #[test]
    fn two_mode_hand_solution() {
        let wf = waterfill(&from_real_diagonal(&[2.0, 0.5]), 2.0).unwrap();
        assert!((wf.mu - 4.0 / 9.0).abs() < 1e-12);
        assert!((wf.power[0] - 1.75).abs() < 1e-12 && (wf.power[1] - 0.25).abs() < 1e-12);
        assert!((wf.q.matrix()[(0, 0)].re - 1.75).abs() < 1e-12);
    }

    #[test]
    fn weak_mode_left_dark() {
        let wf = waterfill(&from_real_diagonal(&[10.0, 0.01]), 0.05).unwrap();
        assert_eq!(wf.active_count, 1);
        assert!((wf.power[0] - 0.05).abs() < 1e-15 && wf.power[1] == 0.0);
    }

    #[test]
    fn zero_f_is_degenerate() {
        let wf = waterfill(&CMatrix::zeros(3, 3), 3.0).unwrap();
        assert!(wf.degenerate);
        assert!(max_abs(&(wf.q.matrix() - identity(3))) < 1e-15);
    }

    #[test]
    fn rejects_non_hermitian() {
        let mut f = identity(2);
        f[(0, 1)] = cplx(1.0, 0.0);
        assert!(waterfill(&f, 1.0).is_err());
    }

    fn check_kkt(f: &CMatrix, budget: f64) {
        let wf = waterfill(f, budget).unwrap();
        assert!((wf.q.trace() - budget).abs() < 1e-8 * budget);
        for (k, (&l, &p)) in wf.eigenvalues.iter().zip(&wf.power).enumerate() {
            if p > 0.0 {
                assert!((1.0 / (p + 1.0 / l) - wf.mu).abs() < 1e-10 * wf.mu.max(1.0), "mode {k}");
            } else {
                assert!(l <= wf.mu * (1.0 + 1e-12), "mode {k}: {l} > {}", wf.mu);
            }
        }
        let qf = wf.q.matrix() * f;
        let comm = frobenius(&(&qf - qf.adjoint()));
        assert!(comm < 1e-8 * frobenius(f) * frobenius(wf.q.matrix()));
    }

    #[test]
    fn kkt_on_random_spectra() {
        let mut r = rng(61);
        for i in 0..50 {
            let n = 2 + i % 6;
            // Rank-deficient half of the time.
            let b = random_matrix(&mut r, n, if i % 2 == 0 { n } else { 1 + n / 2 });
            let f = &b * b.adjoint();
            check_kkt(&crate::linalg::symmetrize(&f), 0.1 + (i as f64) * 0.3);
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]

        #[test]
        fn active_set_ordering_survives_scaling(seed in 0u64..10_000, budget in 0.01f64..10.0) {
            let mut r = rng(seed);
            let f = random_hpd(&mut r, 5);
            let base = waterfill(&f, budget).unwrap();
            for c in [0.1, 10.0] {
                let wf = waterfill(&(&f * cplx(c, 0.0)), budget).unwrap();
                // The powered modes are always the strongest ones.
                prop_assert!(wf.power.windows(2).all(|w| w[0] >= w[1] - 1e-12));
                prop_assert!(base.power.windows(2).all(|w| w[0] >= w[1] - 1e-12));
                prop_assert!(wf.active_count >= 1);
            }
        }

        #[test]
        fn kkt_property(seed in 0u64..10_000, budget in 0.01f64..100.0) {
            let mut r = rng(seed);
            let f = random_hpd(&mut r, 4);
            check_kkt(&f, budget);
        }
    }

    #[test]
    fn isotropic_statistics_keep_uniform_power() {
        let mut s = crate::large_system::test_instances::null_stats(3, 2, 3);
        s.direct.r = HermitianPsd::identity(3);
        s.direct.t = HermitianPsd::identity(3);
        s.bs_ris.r = HermitianPsd::identity(2);
        s.bs_ris.t = HermitianPsd::identity(3);
        s.ris_user.r = HermitianPsd::identity(3);
        s.ris_user.t = HermitianPsd::identity(2);
        s.power_budget = 3.0;
        let out = optimize_covariance(&s, &PhaseVector::zeros(2), None, None, &CovarianceOptions::default()).unwrap();
        assert!(out.converged && out.iterations <= 3, "{}", out.iterations);
        assert!(max_abs(&(out.q.matrix() - identity(3))) < 1e-8);
    }

    #[test]
    fn never_worse_than_uniform_on_reference() {
        let s = build_statistics(&ScenarioConfig::default()).unwrap();
        let theta = PhaseVector::random(8, &mut rng(5));
        let uniform = deterministic_rate(&s, &TransmitCovariance::uniform(8, s.power_budget).unwrap(), &theta)
            .unwrap()
            .nats;
        let out = optimize_covariance(&s, &theta, None, None, &CovarianceOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.rate() >= uniform - 1e-9);
        assert!(out.rate_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
        assert!((out.q.trace() - s.power_budget).abs() < 1e-8 * s.power_budget);
    }

    #[test]
    fn rayleigh_without_direct_link_aligns_with_t1() {
        let mut r = rng(62);
        let s = random_stats(&mut r, 4, 3, 3).without_direct().rayleigh();
        let out = optimize_covariance(
            &s,
            &PhaseVector::random(3, &mut r),
            None,
            None,
            &CovarianceOptions::default(),
        )
        .unwrap();
        let t1 = s.bs_ris.t.matrix();
        let qt = out.q.matrix() * t1;
        let comm = frobenius(&(&qt - qt.adjoint()));
        assert!(comm < 1e-8 * frobenius(t1) * frobenius(out.q.matrix()), "{comm}");
    }

    #[test]
    fn trace_is_monotone_on_random_instances() {
        let mut r = rng(63);
        for _ in 0..4 {
            let s = random_stats(&mut r, 4, 4, 3);
            let out = optimize_covariance(
                &s,
                &PhaseVector::random(4, &mut r),
                None,
                None,
                &CovarianceOptions::default(),
            )
            .unwrap();
            assert!(out.rate_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
        }
    }
}
