//! Closed forms for the degenerate configurations, each with its own reduced
//! system of equations. They share nothing with the six-scalar evaluator
//! beyond the iteration engine, so agreement between the two is a genuine
//! cross-check.

use crate::channel::{LinkSampler, LinkStatistics, SystemStatistics};
use crate::error::{Error, Result};
use crate::linalg::{cplx, hermitian_inv_sqrt, identity, inverse, logdet_hpd, logdet_real, CMatrix};
use crate::rate::{RateDetail, RateResult};

use super::{iterate, FixedPointOptions, FixedPointSolution, Scalars};

fn tr_re(a: &CMatrix, b: &CMatrix) -> f64 {
    crate::linalg::trace_of_product(a, b).re
}

fn finish(names: &[&str], terms: Vec<f64>, scalars: Scalars, out: &super::IterationOutcome) -> Result<RateResult> {
    let sol = FixedPointSolution {
        scalars,
        iterations: out.iterations,
        residual: out.residual,
        converged: out.converged,
        residual_trace: out.residual_trace.clone(),
    };
    sol.ensure_converged()?;
    Ok(RateResult {
        nats: terms.iter().sum(),
        detail: RateDetail::Analytic {
            terms: names.iter().map(|s| s.to_string()).zip(terms).collect(),
            fixed_point: Box::new(sol),
        },
    })
}

/// Single-hop Rician rate from link 0 alone (links 1 and 2 ignored).
pub fn rate_no_ris(stats: &SystemStatistics) -> Result<RateResult> {
    stats.validate()?;
    let (n, k) = (stats.dims.n, stats.dims.k);
    let (r0, t0, h0) = (stats.direct.r.matrix(), stats.direct.t.matrix(), &stats.direct.los);
    let sigma2 = stats.noise_power;
    let c = |x: f64| cplx(x, 0.0);
    let a_mat = |e0: f64, te0: f64| -> Result<CMatrix> {
        let inner = inverse(&(identity(k) * c(sigma2) + r0 * c(e0)), "sigma^2 I + e0 R0")?;
        Ok(identity(n) + t0 * c(te0) + h0.adjoint() * inner * h0)
    };
    let out = iterate(&[1.0, 1.0], &FixedPointOptions::default(), |x| {
        let (e0, te0) = (x[0], x[1]);
        let a = inverse(&a_mat(e0, te0)?, "no-RIS transmit matrix")?;
        let inner = inverse(&(identity(n) + t0 * c(te0)), "I + e~0 T0")?;
        let b = identity(k) * c(sigma2) + r0 * c(e0) + h0 * inner * h0.adjoint();
        let b = inverse(&b, "no-RIS receive matrix")?;
        Ok(vec![tr_re(&a, t0) / n as f64, tr_re(&b, r0) / n as f64])
    })?;
    let (e0, te0) = (out.values[0], out.values[1]);
    let terms = vec![
        logdet_hpd(&(identity(k) + r0 * c(e0 / sigma2)))?,
        logdet_hpd(&a_mat(e0, te0)?)?,
        -(n as f64) * e0 * te0,
    ];
    let scalars = Scalars {
        e0,
        te0,
        ..Default::default()
    };
    finish(
        &["logdet(I + e0/sigma^2 R0)", "logdet(I + e~0 T0 + ...)", "-N e0 e~0"],
        terms,
        scalars,
        &out,
    )
}

/// Matrices of the two-hop system for given `(e1, e2, e~1, e~2)`.
struct TwoHop {
    phi1: CMatrix,
    phi1_inv: CMatrix,
    phi2_inv: CMatrix,
    psi2: CMatrix,
    g: CMatrix,
    pi: CMatrix,
}

fn two_hop(link1: &LinkStatistics, link2: &LinkStatistics, noise: f64, x: &[f64]) -> Result<TwoHop> {
    let (e1, e2, te1, te2) = (x[0].max(0.0), x[1].max(0.0), x[2].max(0.0), x[3].max(0.0));
    let (n, l, k) = (link1.t.dim(), link1.r.dim(), link2.r.dim());
    let c = |v: f64| cplx(v, 0.0);
    let (r1, t1, h1) = (link1.r.matrix(), link1.t.matrix(), &link1.los);
    let (r2, t2, h2) = (link2.r.matrix(), link2.t.matrix(), &link2.los);
    let phi2_inv = inverse(&(identity(k) * c(noise) + r2 * c(e2)), "Phi2")?;
    let psi2 = h2.adjoint() * &phi2_inv * h2 + t2 * c(te2);
    let phi1 = identity(l) + &psi2 * r1 * c(e1);
    let phi1_inv = inverse(&phi1, "Phi1")?;
    let g = identity(n) + h1.adjoint() * &phi1_inv * &psi2 * h1 + t1 * c(te1);
    let g_isqrt = hermitian_inv_sqrt(&crate::linalg::symmetrize(&g))?;
    let pi = phi1_inv.adjoint() * h1 * g_isqrt;
    Ok(TwoHop {
        phi1,
        phi1_inv,
        phi2_inv,
        psi2,
        g,
        pi,
    })
}

fn solve_two_hop(link1: &LinkStatistics, link2: &LinkStatistics, noise: f64) -> Result<super::IterationOutcome> {
    let (n, l) = (link1.t.dim() as f64, link1.r.dim() as f64);
    let (r1, t1) = (link1.r.matrix(), link1.t.matrix());
    let (r2, t2, h2) = (link2.r.matrix(), link2.t.matrix(), &link2.los);
    let c = |v: f64| cplx(v, 0.0);
    iterate(&[1.0; 4], &FixedPointOptions::default(), |x| {
        let m = two_hop(link1, link2, noise, x)?;
        let e1 = x[0].max(0.0);
        let g_inv = inverse(&m.g, "I + H1^H Phi1^-1 Psi2 H1 + e~1 T1")?;
        let pp = &m.pi * m.pi.adjoint();
        let b1 = r1 * &m.phi1_inv * c(e1);
        let p2h2 = &m.phi2_inv * h2;
        Ok(vec![
            tr_re(&g_inv, t1) / n,
            tr_re(&(&b1 + &pp), t2) / l,
            tr_re(&(&m.phi1_inv * &m.psi2 - &m.psi2 * &pp * &m.psi2), r1) / n,
            tr_re(
                &(&m.phi2_inv - &p2h2 * &b1 * h2.adjoint() * &m.phi2_inv - &p2h2 * &pp * p2h2.adjoint()),
                r2,
            ) / l,
        ])
    })
}

/// Two-hop (RIS-only) rate from links 1 and 2 (link 0 ignored).
pub fn rate_no_direct(stats: &SystemStatistics) -> Result<RateResult> {
    stats.validate()?;
    let (link1, link2) = (&stats.bs_ris, &stats.ris_user);
    let sigma2 = stats.noise_power;
    let out = solve_two_hop(link1, link2, sigma2)?;
    let x = &out.values;
    let m = two_hop(link1, link2, sigma2, x)?;
    let (n, l, k) = (stats.dims.n as f64, stats.dims.l as f64, stats.dims.k);
    let r2 = link2.r.matrix();
    let terms = vec![
        logdet_hpd(&(identity(k) + r2 * cplx(x[1] / sigma2, 0.0)))?,
        logdet_real(&m.phi1, "I + e1 Psi2 R1")?,
        logdet_hpd(&crate::linalg::symmetrize(&m.g))?,
        -n * x[0] * x[2],
        -l * x[1] * x[3],
    ];
    let scalars = Scalars {
        e1: x[0],
        e2: x[1],
        te1: x[2],
        te2: x[3],
        ..Default::default()
    };
    finish(
        &[
            "logdet(I + e2/sigma^2 R2)",
            "logdet(I + e1 Psi2 R1)",
            "logdet(I + H1^H Phi1^-1 Psi2 H1 + e~1 T1)",
            "-N e1 e~1",
            "-L e2 e~2",
        ],
        terms,
        scalars,
        &out,
    )
}

/// Rayleigh-fading rate (all LoS components must be zero).
pub fn rate_rayleigh(stats: &SystemStatistics) -> Result<RateResult> {
    stats.validate()?;
    if stats.links().iter().any(|s| s.los_power() > 0.0) {
        return Err(Error::invalid(
            "stats",
            "Rayleigh closed form needs all LoS components zero",
        ));
    }
    let (n, l, k) = (stats.dims.n, stats.dims.l, stats.dims.k);
    let (nf, lf) = (n as f64, l as f64);
    let (r0, t0) = (stats.direct.r.matrix(), stats.direct.t.matrix());
    let (r1, t1) = (stats.bs_ris.r.matrix(), stats.bs_ris.t.matrix());
    let (r2, t2) = (stats.ris_user.r.matrix(), stats.ris_user.t.matrix());
    let sigma2 = stats.noise_power;
    let c = |v: f64| cplx(v, 0.0);
    let t2r1 = t2 * r1;
    let tx = |x: &[f64]| identity(n) + t0 * c(x[3]) + t1 * c(lf / nf * x[2] * x[4]);
    let rx = |x: &[f64]| identity(k) * c(sigma2) + r0 * c(x[0]) + r2 * c(x[1] * x[2]);
    let out = iterate(&[1.0; 5], &FixedPointOptions::default(), |x| {
        let x: Vec<f64> = x.iter().map(|v| v.max(0.0)).collect();
        let a = inverse(&tx(&x), "Rayleigh transmit matrix")?;
        let b = inverse(&rx(&x), "Rayleigh receive matrix")?;
        let ris = inverse(&(identity(l) + &t2r1 * c(x[1] * x[4])), "I + e1 e~2 T2 R1")?;
        Ok(vec![
            tr_re(&a, t0) / nf,
            tr_re(&a, t1) / nf,
            tr_re(&ris, &t2r1) / lf,
            tr_re(&b, r0) / nf,
            tr_re(&b, r2) / lf,
        ])
    })?;
    let x = &out.values;
    let (e0, e1, e2, te0, te2) = (x[0], x[1], x[2], x[3], x[4]);
    let inner = inverse(&(identity(k) * c(sigma2) + r2 * c(e1 * e2)), "sigma^2 I + e1 e2 R2")?;
    let terms = vec![
        logdet_hpd(&(identity(k) + r2 * c(e1 * e2 / sigma2)))?,
        logdet_real(&(identity(k) + inner * r0 * c(e0)), "I + e0 (...)^-1 R0")?,
        logdet_real(&(identity(l) + &t2r1 * c(e1 * te2)), "I + e1 e~2 T2 R1")?,
        logdet_hpd(&crate::linalg::symmetrize(&tx(x)))?,
        -nf * e0 * te0,
        -2.0 * lf * e1 * e2 * te2,
    ];
    let scalars = Scalars {
        e0,
        e1,
        e2,
        te0,
        te1: lf / nf * e2 * te2,
        te2,
    };
    finish(
        &[
            "logdet(I + e1 e2/sigma^2 R2)",
            "logdet(I + e0 (sigma^2 I + e1 e2 R2)^-1 R0)",
            "logdet(I + e1 e~2 T2 R1)",
            "logdet(I + e~0 T0 + L/N e2 e~2 T1)",
            "-N e0 e~0",
            "-2L e1 e2 e~2",
        ],
        terms,
        scalars,
        &out,
    )
}

/// Deterministic equivalent of `E{(1/K) tr(B + omega I)^-1}` with
/// `B = H2 H1 H1^H H2^H`, `H1` and `H2` drawn from `link1` and `link2`.
/// The closed form holds for zero-mean links; the LoS parts are ignored.
pub fn stieltjes_product(link1: &LinkStatistics, link2: &LinkStatistics, omega: f64) -> Result<f64> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", "must be > 0"));
    }
    let (l, k) = (link1.r.dim(), link2.r.dim());
    if link2.t.dim() != l || link1.los.nrows() != l || link2.los.ncols() != l {
        return Err(Error::dims("stieltjes_product", format!("L = {l}"), link2.t.dim()));
    }
    let out = solve_two_hop(link1, link2, omega)?;
    if !out.converged {
        return Err(Error::NotConverged {
            iterations: out.iterations,
            residual: out.residual,
        });
    }
    let r2 = link2.r.matrix();
    let phi2 = r2 * cplx(out.values[1], 0.0) + identity(k) * cplx(omega, 0.0);
    Ok(inverse(&phi2, "e2 R2 + omega I")?.trace().re / k as f64)
}

/// Monte-Carlo average of `(1/K) tr(B + omega I)^-1` over `trials` draws.
pub fn stieltjes_monte_carlo(
    link1: &LinkStatistics,
    link2: &LinkStatistics,
    omega: f64,
    trials: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    if !(omega > 0.0) {
        return Err(Error::invalid("omega", "must be > 0"));
    }
    let (s1, s2) = (LinkSampler::new(link1), LinkSampler::new(link2));
    let k = link2.r.dim();
    crate::rate::monte_carlo_mean(trials, seed, |rng| {
        let h = s2.sample(rng) * s1.sample(rng);
        let b = &h * h.adjoint();
        let eig = crate::linalg::eigh_symmetrized(&b);
        Ok(eig.values.iter().map(|&x| 1.0 / (x.max(0.0) + omega)).sum::<f64>() / k as f64)
    })
}
