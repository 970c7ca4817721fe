//! RIS phase design for fixed `Q`: the analytic gradient of the rate with
//! respect to the phasors and projected gradient ascent on the unit circle.
//!
//! The gradient treats the fixed-point scalars as constants. That is exact at
//! a solution because the rate is stationary in all six scalars there.
//!
//! `p_l` is the derivative with respect to `v_l = exp(j theta_l)` taken with
//! `conj(v_l) = 1 / v_l`, so `dR/dtheta_l = j v_l p_l` (real). The ascent
//! direction on the circle is `conj(p)`.

use crate::channel::SystemStatistics;
use crate::error::{Error, Result};
use crate::large_system::{FixedPointOptions, Scalars};
use crate::linalg::{cplx, diag_of_product, identity, scale_cols, scale_rows, CMatrix, Complex64, Lu};
use crate::rate::{
    assemble_f, evaluate, rate_with_scalars, FMatrices, PhaseVector, RateEvaluation, TransmitCovariance,
};

/// `p_l = dR/dv_l` at `at`.
#[derive(Debug, Clone)]
pub struct PhaseGradient {
    pub p: Vec<Complex64>,
    pub at: PhaseVector,
}

impl PhaseGradient {
    /// `dR/dtheta_l = Re(j v_l p_l)`.
    pub fn angle_derivative(&self) -> Vec<f64> {
        self.p
            .iter()
            .zip(self.at.phasors())
            .map(|(p, v)| (cplx(0.0, 1.0) * v * p).re)
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        self.p.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Ascent direction in the phasor domain.
    pub fn ascent_direction(&self) -> Vec<Complex64> {
        self.p.iter().map(|z| z.conj()).collect()
    }
}

/// Solves the fixed point at `(Q, theta)` and returns the gradient there.
pub fn phase_gradient(stats: &SystemStatistics, q: &TransmitCovariance, theta: &PhaseVector) -> Result<PhaseGradient> {
    let ev = evaluate(stats, q, theta, None, &FixedPointOptions::default())?;
    Ok(PhaseGradient {
        p: gradient_from_f(stats, q, &ev.f)?,
        at: theta.clone(),
    })
}

/// `Q (I + F Q)^{-1}`.
fn q_w(q: &TransmitCovariance, f: &CMatrix) -> Result<CMatrix> {
    let n = f.nrows();
    let lu = Lu::new(&(identity(n) + f * q.matrix()), "I + F Q")?;
    Ok(q.matrix() * lu.inverse())
}

/// The gradient at the point described by `fm`, with every shared factor
/// formed once. All per-element traces reduce to diagonals of a handful of
/// `L x L` products.
pub fn gradient_from_f(stats: &SystemStatistics, q: &TransmitCovariance, fm: &FMatrices) -> Result<Vec<Complex64>> {
    let e = fm.scalars.clamped();
    let (e0, e1) = (cplx(e.e0, 0.0), cplx(e.e1, 0.0));
    let (h0, h1, h2) = (&stats.direct.los, &stats.bs_ris.los, &stats.ris_user.los);
    let (r0, r1) = (stats.direct.r.matrix(), stats.bs_ris.r.matrix());
    let th = &fm.theta;
    let th_conj: Vec<Complex64> = th.iter().map(|z| z.conj()).collect();
    let v: Vec<Complex64> = th.iter().map(|z| z.conj() * z.conj()).collect();
    let (m, f1i, p2i) = (&fm.m, &fm.f1_inv, &fm.phi2_inv);
    let f1ih = f1i.adjoint();
    let d = q_w(q, &fm.f)?;

    let r1f1i = r1 * f1i;
    let f1ih_r1 = &f1ih * r1;
    // R1 F1^{-1} Theta^H
    let r1f1i_thh = scale_cols(&r1f1i, &th_conj);
    let h2h_p2i = h2.adjoint() * p2i;
    let p2i_h2 = p2i * h2;
    let r0g = r0 * &fm.g;
    let ctil = &r0g * e0;
    let s = &ctil * &fm.right * &d;
    let u = &d * &fm.left * &ctil;
    let h1h_f1i = h1.adjoint() * f1i;
    let d_h1h_f1i = &d * &h1h_f1i;
    let f1ih_h1 = &f1ih * h1;
    let h0_d = h0 * &d;

    // Arguments of the F3 functional.
    let h0_d_h1h_f1i = h0 * &d_h1h_f1i;
    let s_h1h_f1i = &s * &h1h_f1i;
    let f1ih_h1_d_h0h = &f1ih_h1 * h0_d.adjoint();
    let f1ih_h1_u = &f1ih_h1 * &u;
    let m_th_h1 = scale_cols(m, th) * h1;
    let mut z3 = &r1f1i * e1 + h1 * &d_h1h_f1i;
    z3 -= &r1f1i_thh * (&m_th_h1 * &d_h1h_f1i) * e1;
    z3 -= &r1f1i_thh * (&h2h_p2i * &h0_d_h1h_f1i) * e1;
    z3 -= scale_cols(&(&f1ih_h1_d_h0h * &p2i_h2), th) * &f1ih_r1 * e1;
    z3 += &r1f1i_thh * (&h2h_p2i * &s_h1h_f1i) * e1;
    z3 += scale_cols(&(&f1ih_h1_u * &p2i_h2), th) * &f1ih_r1 * e1;

    // Arguments of the F4 functional.
    let y4 = &r0g * e0 + &h0_d * h0.adjoint() - &s * h0.adjoint() - h0 * &u
        + &r0g * (&fm.right * &d * &fm.left) * &r0g * (e0 * e0);

    // F4 traces: e1 [v diag(W' Theta R1 F1^{-1}) - diag(R1 F1^{-1} Theta^H W')
    //               + e1 f3(R1 F1^{-1} Theta^H W' Theta R1 F1^{-1})]
    let w = &h2h_p2i * &y4 * &p2i_h2;
    let w_th = scale_cols(&w, th);
    z3 += &r1f1i_thh * &w_th * &r1f1i * (e1 * e1);
    let a = diag_of_product(&w_th, &r1f1i);
    let b = diag_of_product(&r1f1i_thh, &w);

    // F3 traces: diag(Z Theta^H M) - v diag(M Theta Z)
    let th_h_m = scale_rows(&th_conj, m);
    let m_th = scale_cols(m, th);
    let c3 = diag_of_product(&z3, &th_h_m);
    let d3 = diag_of_product(&m_th, &z3);

    // Terms carrying E_ll directly.
    let x1 = diag_of_product(&h2h_p2i, &h0_d_h1h_f1i);
    let x2 = diag_of_product(&f1ih_h1_d_h0h, &p2i_h2);
    let x3 = diag_of_product(&h2h_p2i, &s_h1h_f1i);
    let x4 = diag_of_product(&f1ih_h1_u, &p2i_h2);

    let l = th.len();
    let p: Vec<Complex64> = (0..l)
        .map(|k| c3[k] - v[k] * d3[k] + e1 * (v[k] * a[k] - b[k]) - v[k] * x1[k] + x2[k] + v[k] * x3[k] - x4[k])
        .collect();
    if p.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::invalid("phase gradient", "non-finite entries"));
    }
    Ok(p)
}

fn selector(l: usize, k: usize) -> CMatrix {
    let mut e = CMatrix::zeros(l, l);
    e[(k, k)] = cplx(1.0, 0.0);
    e
}

/// Element-by-element transcription of the gradient with explicit selector
/// matrices. `O(L^4)`; kept as a reference for [`gradient_from_f`].
pub fn gradient_reference(stats: &SystemStatistics, q: &TransmitCovariance, fm: &FMatrices) -> Result<Vec<Complex64>> {
    let e = fm.scalars.clamped();
    let (e0, e1) = (cplx(e.e0, 0.0), cplx(e.e1, 0.0));
    let (h0, h1, h2) = (&stats.direct.los, &stats.bs_ris.los, &stats.ris_user.los);
    let (r0, r1) = (stats.direct.r.matrix(), stats.bs_ris.r.matrix());
    let l = fm.theta.len();
    let th = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(fm.theta.clone()));
    let thh = th.adjoint();
    let (m, f1i, p2i, f2, g) = (&fm.m, &fm.f1_inv, &fm.phi2_inv, &fm.f2, &fm.g);
    let f1ih = f1i.adjoint();
    let qw = q_w(q, &fm.f)?;
    let left = h0.adjoint() * f2 + h1.adjoint() * f1i * &thh * h2.adjoint() * p2i;
    let right = f2 * h0 + p2i * h2 * &th * &f1ih * h1;
    let mut p = Vec::with_capacity(l);
    for k in 0..l {
        let el = selector(l, k);
        let vm2 = fm.theta[k].powi(-2);
        let f3 = &thh * m * &el - &el * m * &th * vm2;
        let f4 = p2i
            * h2
            * (&th * r1 * f1i * &el * vm2 - &el * r1 * f1i * &thh + &th * r1 * f1i * &f3 * r1 * f1i * &thh * e1)
            * h2.adjoint()
            * p2i
            * e1;
        let dleft = h0.adjoint() * &f4
            - h1.adjoint() * f1i * &f3 * r1 * f1i * &thh * h2.adjoint() * p2i * e1
            - h1.adjoint() * f1i * &el * h2.adjoint() * p2i * vm2;
        let dright = &f4 * h0 - p2i * h2 * &th * &f1ih * r1 * &f3 * &f1ih * h1 * e1 + p2i * h2 * &el * &f1ih * h1;
        let df = -(h1.adjoint() * f1i * &f3 * r1 * f1i * &thh * m * &th * h1) * e1
            + h1.adjoint() * f1i * &f3 * h1
            + h0.adjoint() * &f4 * h0
            - h1.adjoint() * f1i * &f3 * r1 * f1i * &thh * h2.adjoint() * p2i * h0 * e1
            - h1.adjoint() * f1i * &el * h2.adjoint() * p2i * h0 * vm2
            - h0.adjoint() * p2i * h2 * &th * &f1ih * r1 * &f3 * &f1ih * h1 * e1
            + h0.adjoint() * p2i * h2 * &el * &f1ih * h1
            - &dleft * (r0 * g * e0) * &right
            - &left * (r0 * g * e0) * &dright
            + &left * r0 * g * &f4 * r0 * g * &right * (e0 * e0);
        p.push((f1i * &f3 * r1).trace() * e1 + (g * &f4 * r0).trace() * e0 + (&qw * df).trace());
    }
    Ok(p)
}

/// The gradient of `log det(I + F Q)` with `F = A^H A / sigma^2`,
/// `A = H0 + H2 Theta H1`, for given (deterministic) channels.
pub fn perfect_csit_gradient(
    h0: &CMatrix,
    h1: &CMatrix,
    h2: &CMatrix,
    q: &TransmitCovariance,
    theta: &PhaseVector,
    noise_power: f64,
) -> Result<Vec<Complex64>> {
    let th = theta.phasors();
    let a = h0 + scale_cols(h2, &th) * h1;
    let f = a.adjoint() * &a * cplx(1.0 / noise_power, 0.0);
    let d = q_w(q, &f)?;
    let x = diag_of_product(&(h1 * &d), &(a.adjoint() * h2));
    let y = diag_of_product(&(h2.adjoint() * &a), &(&d * h1.adjoint()));
    Ok(th
        .iter()
        .zip(x.iter().zip(&y))
        .map(|(t, (x, y))| (x - t.conj() * t.conj() * y) / noise_power)
        .collect())
}

/// Reduced gradient when the direct link is absent, element by element.
pub fn no_direct_gradient(stats: &SystemStatistics, q: &TransmitCovariance, fm: &FMatrices) -> Result<Vec<Complex64>> {
    let e1 = cplx(fm.scalars.clamped().e1, 0.0);
    let (h1, r1) = (&stats.bs_ris.los, stats.bs_ris.r.matrix());
    let l = fm.theta.len();
    let th = CMatrix::from_diagonal(&nalgebra::DVector::from_vec(fm.theta.clone()));
    let thh = th.adjoint();
    let (m, f1i) = (&fm.m, &fm.f1_inv);
    let qw = q_w(q, &fm.f)?;
    Ok((0..l)
        .map(|k| {
            let el = selector(l, k);
            let f3 = &thh * m * &el - &el * m * &th * fm.theta[k].powi(-2);
            let inner =
                -(h1.adjoint() * f1i * &f3 * r1 * f1i * &thh * m * &th * h1) * e1 + h1.adjoint() * f1i * &f3 * h1;
            (&qw * inner).trace() + (f1i * &f3 * r1).trace() * e1
        })
        .collect())
}

/// Rate at `(Q, theta)` with the scalars held at `scalars`.
pub fn frozen_rate(
    stats: &SystemStatistics,
    q: &TransmitCovariance,
    theta: &PhaseVector,
    scalars: &Scalars,
) -> Result<f64> {
    Ok(rate_with_scalars(stats, q, &assemble_f(stats, theta, scalars)?)?.0)
}

/// Central differences in `theta_l` with frozen scalars, mapped to the
/// phasor derivative through `dv/dtheta = j v`.
pub fn finite_difference_gradient(
    stats: &SystemStatistics,
    q: &TransmitCovariance,
    theta: &PhaseVector,
    scalars: &Scalars,
    h: f64,
) -> Result<Vec<Complex64>> {
    let angles = theta.angles();
    let ph = theta.phasors();
    (0..angles.len())
        .map(|k| {
            let mut plus = angles.to_vec();
            let mut minus = angles.to_vec();
            plus[k] += h;
            minus[k] -= h;
            let d = (frozen_rate(stats, q, &PhaseVector::new(plus), scalars)?
                - frozen_rate(stats, q, &PhaseVector::new(minus), scalars)?)
                / (2.0 * h);
            Ok(cplx(d, 0.0) / (cplx(0.0, 1.0) * ph[k]))
        })
        .collect()
}

/// `arg(v_l + step * d_l)`; entries that land on zero keep their angle.
pub fn projected_step(theta: &PhaseVector, direction: &[Complex64], step: f64) -> PhaseVector {
    let angles = theta
        .phasors()
        .iter()
        .zip(direction)
        .zip(theta.angles())
        .map(|((v, d), &old)| {
            let z = v + d * step;
            if z.norm() == 0.0 {
                old
            } else {
                z.arg()
            }
        })
        .collect();
    PhaseVector::new(angles)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhaseOptions {
    /// Largest phasor displacement of the first step.
    pub initial_step: f64,
    pub max_step: f64,
    /// Stop once the rate changes by less than this (nats).
    pub epsilon: f64,
    pub max_iterations: usize,
    pub max_halvings: usize,
    /// Gradients below this are treated as zero.
    pub gradient_floor: f64,
    pub fixed_point: FixedPointOptions,
}

impl Default for PhaseOptions {
    fn default() -> Self {
        PhaseOptions {
            initial_step: 0.1,
            max_step: 1.0,
            epsilon: 1e-5,
            max_iterations: 500,
            max_halvings: 20,
            gradient_floor: 1e-10,
            fixed_point: FixedPointOptions::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct PhaseOutcome {
    pub theta: PhaseVector,
    /// Rate (nats) at `theta_init` followed by every accepted step.
    pub rate_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
    pub fp_iterations: usize,
    pub evaluation: RateEvaluation,
}

impl PhaseOutcome {
    pub fn rate(&self) -> f64 {
        self.evaluation.nats
    }

    pub fn scalars(&self) -> Scalars {
        self.evaluation.fixed_point.scalars
    }
}

/// Projected gradient ascent over the phases for fixed `Q`.
///
/// The step is measured in phasor units for the largest gradient entry, i.e.
/// `Delta = step / max_l |p_l|`, so `initial_step` does not depend on the
/// scale of the rate. A step that lowers the rate is retried with half the
/// step size; after an accepted step the size doubles again, up to `max_step`.
pub fn optimize_phases(
    stats: &SystemStatistics,
    q: &TransmitCovariance,
    theta_init: &PhaseVector,
    warm: Option<&Scalars>,
    opts: &PhaseOptions,
) -> Result<PhaseOutcome> {
    if !(opts.initial_step > 0.0) {
        return Err(Error::invalid("initial_step", "must be > 0"));
    }
    if !(opts.max_step >= opts.initial_step) {
        return Err(Error::invalid("max_step", "must be >= initial_step"));
    }
    if !(opts.epsilon > 0.0) {
        return Err(Error::invalid("epsilon", "must be > 0"));
    }
    let mut theta = theta_init.clone();
    let mut ev = evaluate(stats, q, &theta, warm, &opts.fixed_point)?;
    let mut fp_iterations = ev.fixed_point.iterations;
    let mut trace = vec![ev.nats];
    let mut step = opts.initial_step;
    let mut converged = false;
    let mut iterations = 0;

    while iterations < opts.max_iterations {
        iterations += 1;
        let grad = PhaseGradient {
            p: gradient_from_f(stats, q, &ev.f)?,
            at: theta.clone(),
        };
        if grad.max_abs() < opts.gradient_floor {
            converged = true;
            break;
        }
        let scale = 1.0 / grad.max_abs();
        let dir: Vec<Complex64> = grad.ascent_direction().iter().map(|z| z * scale).collect();
        let mut accepted = None;
        for _ in 0..=opts.max_halvings {
            let candidate = projected_step(&theta, &dir, step);
            let next = evaluate(stats, q, &candidate, Some(&ev.fixed_point.scalars), &opts.fixed_point)?;
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
        theta = candidate;
        ev = next;
        trace.push(ev.nats);
        step = (step * 2.0).min(opts.max_step);
        if delta < opts.epsilon {
            converged = true;
            break;
        }
    }
    Ok(PhaseOutcome {
        theta,
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
    use crate::linalg::test_util::{random_hpd, rng};
    use crate::linalg::{frobenius, HermitianPsd};
    use crate::rate::deterministic_rate;
    use rand::Rng;
    use std::f64::consts::PI;

    fn random_q(r: &mut impl Rng, n: usize) -> TransmitCovariance {
        let q = HermitianPsd::new(random_hpd(r, n))
            .unwrap()
            .with_trace(n as f64)
            .unwrap();
        TransmitCovariance::new(q, n as f64).unwrap()
    }

    fn max_rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let scale = b.iter().map(|z| z.norm()).fold(0.0, f64::max);
        a.iter().zip(b).map(|(x, y)| (x - y).norm()).fold(0.0, f64::max) / scale
    }

    #[test]
    fn fast_gradient_matches_reference() {
        let mut r = rng(71);
        for (n, l, k) in [(3, 4, 2), (4, 5, 3), (2, 3, 4)] {
            let s = random_stats(&mut r, n, l, k);
            let q = random_q(&mut r, n);
            let theta = PhaseVector::random(l, &mut r);
            let ev = evaluate(&s, &q, &theta, None, &FixedPointOptions::default()).unwrap();
            let fast = gradient_from_f(&s, &q, &ev.f).unwrap();
            let slow = gradient_reference(&s, &q, &ev.f).unwrap();
            assert!(max_rel(&fast, &slow) < 1e-11, "{fast:?}\n{slow:?}");
        }
    }

    #[test]
    fn gradient_matches_frozen_finite_differences() {
        let mut r = rng(72);
        let s = random_stats(&mut r, 4, 4, 4);
        for _ in 0..5 {
            let q = random_q(&mut r, 4);
            let theta = PhaseVector::random(4, &mut r);
            let ev = evaluate(&s, &q, &theta, None, &FixedPointOptions::default()).unwrap();
            let p = gradient_from_f(&s, &q, &ev.f).unwrap();
            let fd = finite_difference_gradient(&s, &q, &theta, &ev.fixed_point.scalars, 1e-5).unwrap();
            assert!(max_rel(&p, &fd) < 1e-5, "{}", max_rel(&p, &fd));
            // dR/dtheta is real.
            let g = PhaseGradient { p, at: theta };
            for (z, d) in g.p.iter().zip(g.at.phasors()) {
                assert!((cplx(0.0, 1.0) * d * z).im.abs() < 1e-9 * g.max_abs());
            }
        }
    }

    #[test]
    fn frozen_and_resolved_differences_agree() {
        // Stationarity in the scalars makes the envelope treatment exact.
        let mut r = rng(73);
        let s = random_stats(&mut r, 3, 4, 3);
        let q = random_q(&mut r, 3);
        let theta = PhaseVector::random(4, &mut r);
        let g = phase_gradient(&s, &q, &theta).unwrap().angle_derivative();
        let h = 1e-5;
        for k in 0..4 {
            let mut plus = theta.angles().to_vec();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let full = (deterministic_rate(&s, &q, &PhaseVector::new(plus)).unwrap().nats
                - deterministic_rate(&s, &q, &PhaseVector::new(minus)).unwrap().nats)
                / (2.0 * h);
            assert!((full - g[k]).abs() < 1e-6 * g.iter().map(|x| x.abs()).fold(0.0, f64::max));
        }
    }

    #[test]
    fn phase_independent_instance_has_zero_gradient() {
        let mut r = rng(74);
        let mut s = random_stats(&mut r, 3, 4, 3);
        s.bs_ris.los.fill(cplx(0.0, 0.0));
        s.ris_user.los.fill(cplx(0.0, 0.0));
        s.ris_user.t = HermitianPsd::identity(4).scaled(0.7);
        let q = random_q(&mut r, 3);
        let theta = PhaseVector::random(4, &mut r);
        let g = phase_gradient(&s, &q, &theta).unwrap();
        assert!(g.max_abs() < 1e-12, "{}", g.max_abs());
        let out = optimize_phases(&s, &q, &theta, None, &PhaseOptions::default()).unwrap();
        assert_eq!(out.iterations, 1);
        assert_eq!(out.theta, theta);
    }

    #[test]
    fn no_direct_reduction() {
        let mut r = rng(75);
        for _ in 0..3 {
            let s = random_stats(&mut r, 3, 4, 3).without_direct();
            let q = random_q(&mut r, 3);
            let theta = PhaseVector::random(4, &mut r);
            let ev = evaluate(&s, &q, &theta, None, &FixedPointOptions::default()).unwrap();
            let full = gradient_from_f(&s, &q, &ev.f).unwrap();
            let reduced = no_direct_gradient(&s, &q, &ev.f).unwrap();
            let diff = full
                .iter()
                .zip(&reduced)
                .map(|(a, b)| (a - b).norm())
                .fold(0.0, f64::max);
            assert!(diff < 1e-10, "{diff}");
            // Rotating every phase together leaves the rate unchanged.
            let g = PhaseGradient { p: full, at: theta }.angle_derivative();
            let total: f64 = g.iter().sum();
            assert!(
                total.abs() < 1e-8 * g.iter().map(|x| x.abs()).sum::<f64>().max(1.0),
                "{total}"
            );
        }
    }

    #[test]
    fn perfect_csit_limit() {
        let mut r = rng(76);
        let mut s = random_stats(&mut r, 4, 4, 4);
        for link in [&mut s.direct, &mut s.bs_ris, &mut s.ris_user] {
            let ratio = link.t.trace() / frobenius(&link.los).powi(2);
            link.t = link.t.scaled(1e-6 / ratio);
        }
        let q = random_q(&mut r, 4);
        let theta = PhaseVector::random(4, &mut r);
        let p = phase_gradient(&s, &q, &theta).unwrap().p;
        let exact =
            perfect_csit_gradient(&s.direct.los, &s.bs_ris.los, &s.ris_user.los, &q, &theta, s.noise_power).unwrap();
        assert!(max_rel(&p, &exact) < 1e-3, "{}", max_rel(&p, &exact));
    }

    #[test]
    fn perfect_csit_gradient_matches_differences() {
        let mut r = rng(77);
        let s = random_stats(&mut r, 3, 4, 2);
        let q = random_q(&mut r, 3);
        let theta = PhaseVector::random(4, &mut r);
        let rate = |t: &PhaseVector| {
            let a = &s.direct.los + scale_cols(&s.ris_user.los, &t.phasors()) * &s.bs_ris.los;
            let f = a.adjoint() * a * cplx(1.0 / s.noise_power, 0.0);
            crate::linalg::logdet_real(&(identity(3) + f * q.matrix()), "I + F Q").unwrap()
        };
        let p =
            perfect_csit_gradient(&s.direct.los, &s.bs_ris.los, &s.ris_user.los, &q, &theta, s.noise_power).unwrap();
        let h = 1e-6;
        for k in 0..4 {
            let mut plus = theta.angles().to_vec();
            let mut minus = plus.clone();
            plus[k] += h;
            minus[k] -= h;
            let d = (rate(&PhaseVector::new(plus)) - rate(&PhaseVector::new(minus))) / (2.0 * h);
            let want = cplx(d, 0.0) / (cplx(0.0, 1.0) * theta.phasors()[k]);
            assert!((p[k] - want).norm() < 1e-6 * want.norm().max(1.0));
        }
    }

    #[test]
    fn projected_step_examples() {
        let theta = PhaseVector::zeros(1);
        assert_eq!(projected_step(&theta, &[cplx(0.0, 0.0)], 1.0), theta);
        let a = projected_step(&theta, &[cplx(0.0, 1.0)], 1.0).angles()[0];
        assert!((a - PI / 4.0).abs() < 1e-15);
        let b = projected_step(&theta, &[cplx(-2.0, 0.0)], 1.0).angles()[0];
        assert!((b - PI).abs() < 1e-15);
        let theta = PhaseVector::new(vec![0.7]);
        let back = projected_step(&theta, &[-theta.phasors()[0]], 1.0);
        assert_eq!(back.angles()[0], theta.angles()[0]);
    }

    #[test]
    fn ascent_is_monotone_on_reference() {
        let s = build_statistics(&ScenarioConfig::default()).unwrap();
        let q = TransmitCovariance::uniform(8, s.power_budget).unwrap();
        let theta = PhaseVector::random(8, &mut rng(78));
        let out = optimize_phases(&s, &q, &theta, None, &PhaseOptions::default()).unwrap();
        assert!(out.converged);
        assert!(out.rate_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
        assert!(out.rate() > out.rate_trace[0]);
        for z in out.theta.phasors() {
            assert!((z.norm() - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn local_optimum_competes_with_random_search() {
        let mut r = rng(79);
        let s = random_stats(&mut r, 3, 4, 3);
        let q = random_q(&mut r, 3);
        let opts = FixedPointOptions::default();
        let mut best = f64::NEG_INFINITY;
        let mut warm = None;
        let mut best_theta = PhaseVector::zeros(4);
        for _ in 0..10_000 {
            let t = PhaseVector::random(4, &mut r);
            let ev = evaluate(&s, &q, &t, warm.as_ref(), &opts).unwrap();
            warm = Some(ev.fixed_point.scalars);
            if ev.nats > best {
                best = ev.nats;
                best_theta = t;
            }
        }
        // 16-point grid over the first two elements around the random best.
        for i in 0..16 {
            for j in 0..16 {
                let mut a = best_theta.angles().to_vec();
                a[0] = 2.0 * PI * i as f64 / 16.0;
                a[1] = 2.0 * PI * j as f64 / 16.0;
                let ev = evaluate(&s, &q, &PhaseVector::new(a), warm.as_ref(), &opts).unwrap();
                best = best.max(ev.nats);
            }
        }
        let popts = PhaseOptions {
            epsilon: 1e-9,
            ..PhaseOptions::default()
        };
        let found = (0..3)
            .map(|_| {
                optimize_phases(&s, &q, &PhaseVector::random(4, &mut r), None, &popts)
                    .unwrap()
                    .rate()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        assert!(found >= best - 1e-3, "{found} vs {best}");
    }
}
