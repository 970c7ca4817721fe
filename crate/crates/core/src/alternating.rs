//! Joint design of `Q` and the RIS phases by alternating the two inner
//! solvers, with optional random restarts of the phases.

use rayon::prelude::*;

use crate::channel::{ChannelSampler, SystemStatistics};
use crate::covariance::{optimize_covariance, waterfill, CovarianceOptions};
use crate::error::{Error, Result};
use crate::large_system::{FixedPointOptions, Scalars};
use crate::linalg::{cplx, identity, logdet_real, scale_cols, CMatrix};
use crate::phase::{optimize_phases, perfect_csit_gradient, projected_step, PhaseOptions};
use crate::rate::{evaluate, monte_carlo_mean, trial_rng, PhaseVector, RateDetail, RateResult, TransmitCovariance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointOptions {
    pub seed: u64,
    /// Independent random phase initializations; the best run is kept.
    pub restarts: usize,
    /// Stop once an outer iteration changes the rate by less than this (nats).
    pub epsilon: f64,
    pub max_outer: usize,
    pub phase: PhaseOptions,
    pub covariance: CovarianceOptions,
}

impl Default for JointOptions {
    fn default() -> Self {
        JointOptions {
            seed: 0,
            restarts: 3,
            epsilon: 1e-5,
            max_outer: 100,
            phase: PhaseOptions::default(),
            covariance: CovarianceOptions::default(),
        }
    }
}

impl JointOptions {
    /// Uses one tolerance for the outer loop and both inner loops.
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self.phase.epsilon = epsilon;
        self.covariance.epsilon = epsilon;
        self
    }

    pub fn with_fixed_point(mut self, fp: FixedPointOptions) -> Self {
        self.phase.fixed_point = fp;
        self.covariance.fixed_point = fp;
        self
    }
}

#[derive(Debug, Clone)]
pub struct JointResult {
    pub q: TransmitCovariance,
    pub theta: PhaseVector,
    pub outer_iterations: usize,
    /// Rate (nats) at the initial point, then after each outer iteration.
    pub rate_trace: Vec<f64>,
    pub converged: bool,
    pub fp_iterations: usize,
    pub scalars: Scalars,
    /// Which restart produced this result.
    pub restart: usize,
    /// Final rate of every restart, in restart order.
    pub restart_rates: Vec<f64>,
}

impl JointResult {
    pub fn rate(&self) -> f64 {
        *self.rate_trace.last().expect("trace holds the initial rate")
    }

    pub fn bits(&self) -> f64 {
        self.rate() / std::f64::consts::LN_2
    }
}

/// Initial phases of restart `index`.
pub fn initial_phases(l: usize, seed: u64, index: usize) -> PhaseVector {
    PhaseVector::random(l, &mut trial_rng(seed, index as u64))
}

/// One alternating run from `theta0` and the uniform covariance.
pub fn alternate_from(stats: &SystemStatistics, theta0: &PhaseVector, opts: &JointOptions) -> Result<JointResult> {
    if !(opts.epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be > 0"));
    }
    let mut q = TransmitCovariance::uniform(stats.dims.n, stats.power_budget)?;
    let mut theta = theta0.clone();
    let ev = evaluate(stats, &q, &theta, None, &opts.covariance.fixed_point)?;
    let mut scalars = ev.fixed_point.scalars;
    let mut fp_iterations = ev.fixed_point.iterations;
    let mut trace = vec![ev.nats];
    let mut converged = false;
    let mut outer = 0;
    while outer < opts.max_outer {
        outer += 1;
        let ph = optimize_phases(stats, &q, &theta, Some(&scalars), &opts.phase)?;
        fp_iterations += ph.fp_iterations;
        let cov = optimize_covariance(stats, &ph.theta, Some(&q), Some(&ph.scalars()), &opts.covariance)?;
        fp_iterations += cov.fp_iterations;
        theta = ph.theta;
        q = cov.q.clone();
        scalars = cov.scalars();
        let prev = *trace.last().expect("nonempty");
        trace.push(cov.rate());
        if (cov.rate() - prev).abs() < opts.epsilon {
            converged = true;
            break;
        }
    }
    Ok(JointResult {
        q,
        theta,
        outer_iterations: outer,
        rate_trace: trace,
        converged,
        fp_iterations,
        scalars,
        restart: 0,
        restart_rates: Vec::new(),
    })
}

/// Alternates phase ascent (fixed `Q`) and covariance design (fixed phases)
/// from `opts.restarts` random phase initializations, concurrently, keeping
/// the best final rate. Ties go to the lowest restart index.
pub fn optimize_joint(stats: &SystemStatistics, opts: &JointOptions) -> Result<JointResult> {
    let restarts = opts.restarts.max(1);
    let runs: Vec<JointResult> = (0..restarts)
        .into_par_iter()
        .map(|i| alternate_from(stats, &initial_phases(stats.dims.l, opts.seed, i), opts))
        .collect::<Result<_>>()?;
    let rates: Vec<f64> = runs.iter().map(JointResult::rate).collect();
    let mut best = 0;
    for (i, &r) in rates.iter().enumerate() {
        if r > rates[best] {
            best = i;
        }
    }
    let mut out = runs.into_iter().nth(best).expect("at least one restart");
    out.restart = best;
    out.restart_rates = rates;
    Ok(out)
}

/// Best rate for one known channel triple: waterfilling for `Q` alternated
/// with projected gradient ascent on the phases.
pub fn optimize_known_channel(
    channels: &[CMatrix; 3],
    theta0: &PhaseVector,
    budget: f64,
    noise_power: f64,
    opts: &JointOptions,
) -> Result<f64> {
    let [h0, h1, h2] = channels;
    let n = h0.ncols();
    let rate = |q: &TransmitCovariance, t: &PhaseVector| -> Result<(f64, CMatrix)> {
        let a = h0 + scale_cols(h2, &t.phasors()) * h1;
        let f = crate::linalg::symmetrize(&(a.adjoint() * a * cplx(1.0 / noise_power, 0.0)));
        Ok((logdet_real(&(identity(n) + &f * q.matrix()), "I + F Q")?, f))
    };
    let mut theta = theta0.clone();
    let mut q = TransmitCovariance::uniform(n, budget)?;
    let (mut current, mut f) = rate(&q, &theta)?;
    q = waterfill(&f, budget)?.q;
    for _ in 0..opts.max_outer {
        let start = rate(&q, &theta)?.0;
        // Phase ascent for the current covariance.
        let mut step = opts.phase.initial_step;
        let mut value = start;
        for _ in 0..opts.phase.max_iterations {
            let p = perfect_csit_gradient(h0, h1, h2, &q, &theta, noise_power)?;
            let max = p.iter().map(|z| z.norm()).fold(0.0, f64::max);
            if max < opts.phase.gradient_floor {
                break;
            }
            let dir: Vec<_> = p.iter().map(|z| z.conj() / max).collect();
            let mut accepted = None;
            for _ in 0..=opts.phase.max_halvings {
                let cand = projected_step(&theta, &dir, step);
                let r = rate(&q, &cand)?.0;
                if r >= value {
                    accepted = Some((cand, r));
                    break;
                }
                step *= 0.5;
            }
            let Some((cand, r)) = accepted else { break };
            let delta = r - value;
            theta = cand;
            value = r;
            step = (step * 2.0).min(opts.phase.max_step);
            if delta < opts.phase.epsilon {
                break;
            }
        }
        f = rate(&q, &theta)?.1;
        q = waterfill(&f, budget)?.q;
        let next = rate(&q, &theta)?.0;
        let done = (next - current).abs() < opts.epsilon;
        current = next;
        if done {
            break;
        }
    }
    Ok(current)
}

/// Ergodic rate when `Q` and the phases are designed for every channel
/// realization (instantaneous CSI at the transmitter).
pub fn perfect_csit_rate(
    stats: &SystemStatistics,
    trials: usize,
    seed: u64,
    opts: &JointOptions,
) -> Result<RateResult> {
    let sampler = ChannelSampler::new(stats);
    let l = stats.dims.l;
    let (mean, stderr) = monte_carlo_mean(trials, seed, |rng| {
        let channels = sampler.sample(rng);
        let theta0 = PhaseVector::random(l, rng);
        optimize_known_channel(&channels, &theta0, stats.power_budget, stats.noise_power, opts)
    })?;
    Ok(RateResult {
        nats: mean,
        detail: RateDetail::MonteCarlo {
            stderr_nats: stderr,
            trials,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::build_statistics;
    use crate::config::ScenarioConfig;
    use crate::large_system::rate_no_ris;
    use crate::large_system::test_instances::random_stats;
    use crate::linalg::max_abs;
    use crate::linalg::test_util::rng;
    use crate::rate::{apply_replacements, deterministic_rate, monte_carlo_rate};

    #[test]
    fn no_ris_gives_single_hop_waterfilling() {
        let s = random_stats(&mut rng(81), 3, 4, 3).without_ris();
        let opts = JointOptions::default().with_epsilon(1e-12);
        let out = optimize_joint(&s, &opts).unwrap();
        assert!(out.converged && out.outer_iterations <= 2, "{}", out.outer_iterations);
        let alone = optimize_covariance(&s, &PhaseVector::zeros(4), None, None, &opts.covariance).unwrap();
        assert!(
            max_abs(&(out.q.matrix() - alone.q.matrix())) < 1e-5,
            "{}",
            max_abs(&(out.q.matrix() - alone.q.matrix()))
        );
        assert!((out.rate() - alone.rate()).abs() < 1e-10);
        let reduced = rate_no_ris(&apply_replacements(&s, &out.q, &out.theta).unwrap()).unwrap();
        assert!((reduced.nats - out.rate()).abs() < 1e-9);
    }

    #[test]
    fn deterministic_and_monotone() {
        let s = random_stats(&mut rng(82), 3, 4, 3);
        let opts = JointOptions {
            seed: 9,
            ..JointOptions::default()
        };
        let a = optimize_joint(&s, &opts).unwrap();
        let b = optimize_joint(&s, &opts).unwrap();
        assert_eq!(a.rate_trace.len(), b.rate_trace.len());
        for (x, y) in a.rate_trace.iter().zip(&b.rate_trace) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
        assert!(a.rate_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
        assert_eq!(a.restart_rates.len(), 3);
        assert!(a.restart_rates.iter().all(|&r| r <= a.rate()));
    }

    #[test]
    fn final_point_is_stationary_for_both_solvers() {
        let s = random_stats(&mut rng(83), 3, 4, 3);
        let out = optimize_joint(&s, &JointOptions::default()).unwrap();
        let ph = optimize_phases(&s, &out.q, &out.theta, None, &PhaseOptions::default()).unwrap();
        let cov = optimize_covariance(&s, &out.theta, Some(&out.q), None, &CovarianceOptions::default()).unwrap();
        assert!((ph.rate() - out.rate()).abs() < 1e-5 * 10.0);
        assert!((cov.rate() - out.rate()).abs() < 1e-5 * 10.0);
    }

    #[test]
    fn reference_beats_baselines() {
        let s = build_statistics(&ScenarioConfig::default()).unwrap();
        let out = optimize_joint(&s, &JointOptions::default()).unwrap();
        assert!(out.converged && out.outer_iterations <= 50, "{}", out.outer_iterations);
        let theta = initial_phases(8, 0, 0);
        let uniform = deterministic_rate(&s, &TransmitCovariance::uniform(8, s.power_budget).unwrap(), &theta)
            .unwrap()
            .nats;
        let q_only = optimize_covariance(&s, &theta, None, None, &CovarianceOptions::default())
            .unwrap()
            .rate();
        assert!(
            out.rate() > q_only && q_only > uniform,
            "{} {q_only} {uniform}",
            out.rate()
        );
    }

    #[test]
    fn known_channel_optimum_beats_uniform() {
        let s = random_stats(&mut rng(84), 3, 4, 3);
        let mut r = rng(85);
        let channels = ChannelSampler::new(&s).sample(&mut r);
        let theta = PhaseVector::random(4, &mut r);
        let best = optimize_known_channel(&channels, &theta, 3.0, s.noise_power, &JointOptions::default()).unwrap();
        let [h0, h1, h2] = &channels;
        let a = h0 + scale_cols(h2, &theta.phasors()) * h1;
        let uniform = logdet_real(
            &(identity(3) + a.adjoint() * a * cplx(1.0 / s.noise_power, 0.0)),
            "I + F Q",
        )
        .unwrap();
        assert!(best >= uniform);
        let stat = monte_carlo_rate(&s, &TransmitCovariance::uniform(3, 3.0).unwrap(), &theta, 50, 1).unwrap();
        let csit = perfect_csit_rate(&s, 50, 1, &JointOptions::default()).unwrap();
        assert!(csit.nats > stat.nats);
    }
}
