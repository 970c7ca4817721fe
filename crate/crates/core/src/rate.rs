//! Rates as functions of the optimization variables: the covariance `Q` and
//! the RIS phases `theta`.
//!
//! [`apply_replacements`] folds `(Q, Theta)` into the statistics so the
//! large-system solver sees an ordinary channel; [`assemble_f`] and
//! [`rate_with_scalars`] give the same rate through the `F` matrix that the
//! optimizers need. [`monte_carlo_rate`] is the ground-truth oracle.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::channel::{ChannelSampler, SystemStatistics};
use crate::error::{Error, Result};
use crate::large_system::{solve_fixed_point_with, FixedPointOptions, FixedPointSolution, Scalars};
use crate::linalg::{
    cplx, identity, logdet_hpd, max_abs, max_asymmetry, scale_cols, scale_rows, symmetrize, CMatrix, Complex64,
    HermitianPsd, Lu,
};

/// Transmit covariance with its power budget.
#[derive(Debug, Clone, PartialEq)]
pub struct TransmitCovariance {
    q: HermitianPsd,
    budget: f64,
}

impl TransmitCovariance {
    pub fn new(q: HermitianPsd, budget: f64) -> Result<Self> {
        if !(budget > 0.0) {
            return Err(Error::invalid("budget", "must be > 0"));
        }
        let tr = q.trace();
        if tr > budget * (1.0 + 1e-10) {
            return Err(Error::invalid("Q", format!("trace {tr:e} exceeds budget {budget:e}")));
        }
        Ok(TransmitCovariance { q, budget })
    }

    /// `(budget / N) I_N`.
    pub fn uniform(n: usize, budget: f64) -> Result<Self> {
        TransmitCovariance::new(HermitianPsd::identity(n).scaled(budget / n as f64), budget)
    }

    pub fn matrix(&self) -> &CMatrix {
        self.q.matrix()
    }

    pub fn psd(&self) -> &HermitianPsd {
        &self.q
    }

    pub fn budget(&self) -> f64 {
        self.budget
    }

    pub fn dim(&self) -> usize {
        self.q.dim()
    }

    pub fn trace(&self) -> f64 {
        self.q.trace()
    }

    /// `(1 - s) self + s other`, a feasible point for `s` in `[0, 1]`.
    pub fn blend(&self, other: &TransmitCovariance, s: f64) -> Result<Self> {
        let m = self.matrix() * cplx(1.0 - s, 0.0) + other.matrix() * cplx(s, 0.0);
        TransmitCovariance::new(HermitianPsd::clamped(&m)?, self.budget.max(other.budget))
    }
}

/// RIS phases `theta_l` in `[0, 2 pi)`; the phasors `exp(j theta_l)` have unit
/// modulus by construction.
#[derive(Debug, Clone, PartialEq)]
pub struct PhaseVector {
    theta: Vec<f64>,
}

impl PhaseVector {
    pub fn new(theta: Vec<f64>) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        PhaseVector {
            theta: theta.into_iter().map(|t| t.rem_euclid(two_pi)).collect(),
        }
    }

    pub fn zeros(l: usize) -> Self {
        PhaseVector { theta: vec![0.0; l] }
    }

    /// Independent phases uniform on `[0, 2 pi)`.
    pub fn random<R: rand::Rng + ?Sized>(l: usize, rng: &mut R) -> Self {
        let two_pi = 2.0 * std::f64::consts::PI;
        PhaseVector::new((0..l).map(|_| rng.random::<f64>() * two_pi).collect())
    }

    pub fn angles(&self) -> &[f64] {
        &self.theta
    }

    pub fn len(&self) -> usize {
        self.theta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.theta.is_empty()
    }

    pub fn phasors(&self) -> Vec<Complex64> {
        self.theta.iter().map(|&t| Complex64::from_polar(1.0, t)).collect()
    }

    /// `Theta = diag(exp(j theta))`.
    pub fn matrix(&self) -> CMatrix {
        CMatrix::from_diagonal(&nalgebra::DVector::from_vec(self.phasors()))
    }

    /// Same phases rotated by a common angle.
    pub fn rotated(&self, c: f64) -> Self {
        PhaseVector::new(self.theta.iter().map(|t| t + c).collect())
    }
}

#[derive(Debug, Clone)]
pub enum RateDetail {
    Analytic {
        terms: Vec<(String, f64)>,
        fixed_point: Box<FixedPointSolution>,
    },
    MonteCarlo {
        stderr_nats: f64,
        trials: usize,
    },
}

/// A rate in nats per channel use, with its provenance.
#[derive(Debug, Clone)]
pub struct RateResult {
    pub nats: f64,
    pub detail: RateDetail,
}

impl RateResult {
    pub fn bits(&self) -> f64 {
        self.nats / std::f64::consts::LN_2
    }

    pub fn stderr_nats(&self) -> Option<f64> {
        match self.detail {
            RateDetail::MonteCarlo { stderr_nats, .. } => Some(stderr_nats),
            RateDetail::Analytic { .. } => None,
        }
    }

    pub fn stderr_bits(&self) -> Option<f64> {
        self.stderr_nats().map(|s| s / std::f64::consts::LN_2)
    }

    pub fn fixed_point(&self) -> Option<&FixedPointSolution> {
        match &self.detail {
            RateDetail::Analytic { fixed_point, .. } => Some(fixed_point),
            RateDetail::MonteCarlo { .. } => None,
        }
    }
}

fn check_variables(stats: &SystemStatistics, q: &TransmitCovariance, theta: &PhaseVector) -> Result<()> {
    if q.dim() != stats.dims.n {
        return Err(Error::dims("Q", stats.dims.n, q.dim()));
    }
    if theta.len() != stats.dims.l {
        return Err(Error::dims("theta", stats.dims.l, theta.len()));
    }
    Ok(())
}

/// Effective statistics: `T0 <- Q^1/2 T0 Q^1/2`, `Hbar0 <- Hbar0 Q^1/2`, the
/// same for link 1, and `T2 <- Theta^H T2 Theta`, `Hbar2 <- Hbar2 Theta`.
pub fn apply_replacements(
    stats: &SystemStatistics,
    q: &TransmitCovariance,
    theta: &PhaseVector,
) -> Result<SystemStatistics> {
    check_variables(stats, q, theta)?;
    let qh = q.psd().sqrt();
    let ph = theta.phasors();
    let ph_conj: Vec<Complex64> = ph.iter().map(|z| z.conj()).collect();
    let mut out = stats.clone();
    out.direct.t = HermitianPsd::clamped(&(&qh * stats.direct.t.matrix() * &qh))?;
    out.direct.los = &stats.direct.los * &qh;
    out.bs_ris.t = HermitianPsd::clamped(&(&qh * stats.bs_ris.t.matrix() * &qh))?;
    out.bs_ris.los = &stats.bs_ris.los * &qh;
    let t2 = scale_cols(&scale_rows(&ph_conj, stats.ris_user.t.matrix()), &ph);
    out.ris_user.t = HermitianPsd::clamped(&t2)?;
    out.ris_user.los = scale_cols(&stats.ris_user.los, &ph);
    Ok(out)
}

/// `F` and the intermediate factors shared with the phase gradient.
#[derive(Debug, Clone)]
pub struct FMatrices {
    /// `N x N`, Hermitian (symmetrized after assembly).
    pub f: CMatrix,
    /// `I_L + e1 Theta^H M Theta R1`.
    pub f1: CMatrix,
    pub f1_inv: CMatrix,
    /// `Phi2^{-1} (I - e1 Hbar2 Theta R1 F1^{-1} Theta^H Hbar2^H Phi2^{-1})`.
    pub f2: CMatrix,
    pub phi2: CMatrix,
    pub phi2_inv: CMatrix,
    /// `M = Hbar2^H Phi2^{-1} Hbar2 + e~2 T2`.
    pub m: CMatrix,
    /// `(I_K + e0 F2 R0)^{-1}`.
    pub g: CMatrix,
    /// `Hbar0^H F2 + Hbar1^H F1^{-1} Theta^H Hbar2^H Phi2^{-1}` (`N x K`).
    pub left: CMatrix,
    /// `F2 Hbar0 + Phi2^{-1} Hbar2 Theta F1^{-H} Hbar1` (`K x N`).
    pub right: CMatrix,
    pub scalars: Scalars,
    pub theta: Vec<Complex64>,
    /// `log det F1`, `log det(I + e0 F2 R0)`.
    logdets: [f64; 2],
}

fn real_logdet(z: Complex64, what: &str) -> Result<f64> {
    if z.im.abs() > 1e-8 {
        return Err(Error::ComplexLogDet {
            what: what.to_string(),
            imag: z.im,
        });
    }
    Ok(z.re)
}

/// Builds `F` from the original statistics, the phases and the scalars of the
/// effective system.
pub fn assemble_f(stats: &SystemStatistics, theta: &PhaseVector, e: &Scalars) -> Result<FMatrices> {
    if theta.len() != stats.dims.l {
        return Err(Error::dims("theta", stats.dims.l, theta.len()));
    }
    let Scalars {
        e0,
        e1,
        e2,
        te0,
        te1,
        te2,
    } = e.clamped();
    let (l, k) = (stats.dims.l, stats.dims.k);
    let c = |x: f64| cplx(x, 0.0);
    let (r0, r1, r2) = (
        stats.direct.r.matrix(),
        stats.bs_ris.r.matrix(),
        stats.ris_user.r.matrix(),
    );
    let (t0, t1, t2) = (
        stats.direct.t.matrix(),
        stats.bs_ris.t.matrix(),
        stats.ris_user.t.matrix(),
    );
    let (h0, h1, h2) = (&stats.direct.los, &stats.bs_ris.los, &stats.ris_user.los);
    let th = theta.phasors();
    let th_conj: Vec<Complex64> = th.iter().map(|z| z.conj()).collect();

    let phi2 = identity(k) * c(stats.noise_power) + r2 * c(e2);
    let phi2_inv = Lu::new(&phi2, "Phi2")?.inverse();
    let m = h2.adjoint() * &phi2_inv * h2 + t2 * c(te2);
    // Theta^H M Theta
    let m_rot = scale_cols(&scale_rows(&th_conj, &m), &th);
    let f1 = identity(l) + &m_rot * r1 * c(e1);
    let lu1 = Lu::new(&f1, "F1 = I + e1 Theta^H M Theta R1")?;
    let f1_inv = lu1.inverse();
    let h2_th = scale_cols(h2, &th);
    let p2_h2th = &phi2_inv * &h2_th;
    let f2 = &phi2_inv - &p2_h2th * (r1 * &f1_inv) * p2_h2th.adjoint() * c(e1);
    let gm = identity(k) + &f2 * r0 * c(e0);
    let lu_g = Lu::new(&gm, "I + e0 F2 R0")?;
    let g = lu_g.inverse();

    let h1h_f1i = h1.adjoint() * &f1_inv;
    let f1ih_h1 = f1_inv.adjoint() * h1;
    let left = h0.adjoint() * &f2 + &h1h_f1i * p2_h2th.adjoint();
    let right = &f2 * h0 + &p2_h2th * &f1ih_h1;
    let f = &h1h_f1i * (&m_rot * h1)
        + h0.adjoint() * (&f2 * h0)
        + &h1h_f1i * (p2_h2th.adjoint() * h0)
        + h0.adjoint() * (&p2_h2th * &f1ih_h1)
        + t0 * c(te0)
        + t1 * c(te1)
        - &left * (r0 * &g * c(e0)) * &right;
    let asym = max_asymmetry(&f);
    let scale = max_abs(&f);
    if asym > 1e-9 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotHermitian {
            max_asymmetry: asym,
            tolerance: 1e-9 * scale,
        });
    }
    let logdets = [
        real_logdet(lu1.logdet(), "F1")?,
        real_logdet(lu_g.logdet(), "I + e0 F2 R0")?,
    ];
    Ok(FMatrices {
        f: symmetrize(&f),
        f1,
        f1_inv,
        f2,
        phi2,
        phi2_inv,
        m,
        g,
        left,
        right,
        scalars: *e,
        theta: th,
        logdets,
    })
}

/// The rate through `F` at given scalars, with its seven terms.
pub fn rate_with_scalars(stats: &SystemStatistics, q: &TransmitCovariance, fm: &FMatrices) -> Result<(f64, [f64; 7])> {
    let e = fm.scalars.clamped();
    let (n, l, k) = (stats.dims.n, stats.dims.l, stats.dims.k);
    let r2 = stats.ris_user.r.matrix();
    let nf = n as f64;
    let terms = [
        logdet_hpd(&(identity(k) + r2 * cplx(e.e2 / stats.noise_power, 0.0)))?,
        fm.logdets[0],
        fm.logdets[1],
        real_logdet(
            Lu::new(&(identity(n) + &fm.f * q.matrix()), "I + F Q")?.logdet(),
            "I + F Q",
        )?,
        -nf * e.e0 * e.te0,
        -nf * e.e1 * e.te1,
        -(l as f64) * e.e2 * e.te2,
    ];
    Ok((terms.iter().sum(), terms))
}

/// Everything known at one `(Q, theta)`: the solved scalars, `F` and the rate.
#[derive(Debug, Clone)]
pub struct RateEvaluation {
    pub nats: f64,
    pub terms: [f64; 7],
    pub fixed_point: FixedPointSolution,
    pub f: FMatrices,
}

/// Solves the scalars on the effective statistics (optionally warm-started)
/// and evaluates the rate through `F`.
pub fn evaluate(
    stats: &SystemStatistics,
    q: &TransmitCovariance,
    theta: &PhaseVector,
    warm: Option<&Scalars>,
    opts: &FixedPointOptions,
) -> Result<RateEvaluation> {
    let eff = apply_replacements(stats, q, theta)?;
    let mut sol = solve_fixed_point_with(&eff, warm, opts)?;
    if !sol.converged && warm.is_some() {
        sol = solve_fixed_point_with(&eff, None, opts)?;
    }
    sol.ensure_converged()?;
    let f = assemble_f(stats, theta, &sol.scalars)?;
    let (nats, terms) = rate_with_scalars(stats, q, &f)?;
    Ok(RateEvaluation {
        nats,
        terms,
        fixed_point: sol,
        f,
    })
}

/// The large-system rate at `(Q, theta)` via `F`.
pub fn deterministic_rate(stats: &SystemStatistics, q: &TransmitCovariance, theta: &PhaseVector) -> Result<RateResult> {
    let ev = evaluate(stats, q, theta, None, &FixedPointOptions::default())?;
    Ok(RateResult {
        nats: ev.nats,
        detail: RateDetail::Analytic {
            terms: crate::large_system::RATE_TERMS
                .iter()
                .map(|s| s.to_string())
                .zip(ev.terms)
                .collect(),
            fixed_point: Box::new(ev.fixed_point),
        },
    })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Default, Clone, Copy)]
pub(crate) struct CompensatedSum {
    sum: f64,
    c: f64,
}

impl CompensatedSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.c += (self.sum - t) + x;
        } else {
            self.c += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.c
    }
}

/// The random stream of trial `index` under `seed`.
pub fn trial_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Mean and standard error of `sample` over `trials` independent streams.
/// Trials run on the current rayon pool; the result does not depend on the
/// number of workers.
pub fn monte_carlo_mean<F>(trials: usize, seed: u64, sample: F) -> Result<(f64, f64)>
where
    F: Fn(&mut ChaCha8Rng) -> Result<f64> + Sync,
{
    if trials == 0 {
        return Err(Error::invalid("trials", "must be at least 1"));
    }
    let values: Vec<f64> = (0..trials as u64)
        .into_par_iter()
        .map(|i| sample(&mut trial_rng(seed, i)))
        .collect::<Result<_>>()?;
    let mut acc = CompensatedSum::default();
    values.iter().for_each(|&v| acc.add(v));
    let mean = acc.value() / trials as f64;
    if trials == 1 {
        return Ok((mean, 0.0));
    }
    let mut sq = CompensatedSum::default();
    values.iter().for_each(|&v| sq.add((v - mean) * (v - mean)));
    let var = sq.value() / (trials - 1) as f64;
    Ok((mean, (var / trials as f64).sqrt()))
}

/// Ergodic rate `E log det(I + H Q H^H / sigma^2)` with
/// `H = H0 + H2 Theta H1`, averaged over `trials` channel draws.
pub fn monte_carlo_rate(
    stats: &SystemStatistics,
    q: &TransmitCovariance,
    theta: &PhaseVector,
    trials: usize,
    seed: u64,
) -> Result<RateResult> {
    check_variables(stats, q, theta)?;
    let sampler = ChannelSampler::new(stats);
    let qh = q.psd().sqrt();
    let th = theta.phasors();
    let k = stats.dims.k;
    let inv_noise = cplx(1.0 / stats.noise_power, 0.0);
    let (mean, stderr) = monte_carlo_mean(trials, seed, |rng| {
        let [h0, h1, h2] = sampler.sample(rng);
        let hq = (h0 + scale_cols(&h2, &th) * h1) * &qh;
        logdet_hpd(&(identity(k) + &hq * hq.adjoint() * inv_noise))
    })?;
    Ok(RateResult {
        nats: mean,
        detail: RateDetail::MonteCarlo {
            stderr_nats: stderr,
            trials,
        },
    })
}
