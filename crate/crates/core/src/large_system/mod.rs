//! Deterministic equivalent of the ergodic rate: the six coupled scalar
//! equations, the rate expression built on them, and the closed-form
//! special cases (no RIS, no direct link, Rayleigh fading, Stieltjes
//! transform of the product channel).
//!
//! All functions here take *effective* statistics, i.e. with the transmit
//! covariance and phase matrix already folded in (see
//! [`crate::rate::apply_replacements`]).

mod auxiliary;
mod engine;
mod reductions;

pub use auxiliary::{assemble_auxiliary, fixed_point_residual, AuxiliaryMatrices};
pub use engine::{FixedPointOptions, IterationOutcome};
pub use reductions::{rate_no_direct, rate_no_ris, rate_rayleigh, stieltjes_monte_carlo, stieltjes_product};

pub(crate) use engine::iterate;

use crate::channel::SystemStatistics;
use crate::error::{Error, Result};
use crate::linalg::{cplx, identity, trace_of_product, CMatrix, Lu};
use crate::rate::{RateDetail, RateResult};

/// The fixed-point unknowns `{e0, e1, e2, e~0, e~1, e~2}`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Scalars {
    pub e0: f64,
    pub e1: f64,
    pub e2: f64,
    pub te0: f64,
    pub te1: f64,
    pub te2: f64,
}

impl Scalars {
    pub const ONES: Scalars = Scalars {
        e0: 1.0,
        e1: 1.0,
        e2: 1.0,
        te0: 1.0,
        te1: 1.0,
        te2: 1.0,
    };

    pub fn to_array(&self) -> [f64; 6] {
        [self.e0, self.e1, self.e2, self.te0, self.te1, self.te2]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Scalars {
            e0: a[0],
            e1: a[1],
            e2: a[2],
            te0: a[3],
            te1: a[4],
            te2: a[5],
        }
    }

    /// Roundoff negatives clamped to zero.
    pub fn clamped(&self) -> Self {
        Scalars::from_array(self.to_array().map(|v| v.max(0.0)))
    }
}

#[derive(Debug, Clone)]
pub struct FixedPointSolution {
    pub scalars: Scalars,
    pub iterations: usize,
    /// Largest componentwise relative residual at the returned point.
    pub residual: f64,
    pub converged: bool,
    pub residual_trace: Vec<f64>,
}

impl FixedPointSolution {
    pub fn ensure_converged(&self) -> Result<()> {
        if self.converged {
            Ok(())
        } else {
            Err(Error::NotConverged {
                iterations: self.iterations,
                residual: self.residual,
            })
        }
    }

    /// The auxiliary matrices at the solution, built literally (with matrix
    /// square roots). Intended for inspection and cross-checks.
    pub fn auxiliary(&self, stats: &SystemStatistics) -> Result<AuxiliaryMatrices> {
        assemble_auxiliary(&self.scalars, stats)
    }
}

/// Right-hand sides of the six equations together with the log-determinant
/// terms of the rate, evaluated without matrix square roots.
///
/// Every `Pi Pi^H` product collapses to a product of the inner factors:
/// `(I + Omega)^{-1/2}` squares to `(I + Omega)^{-1}`, and
/// `(e0 R0 Phi0^{-1})^{1/2}` squares to `e0 R0 Phi0^{-1}`, both Hermitian.
pub(crate) struct Prop1System<'a> {
    s: &'a SystemStatistics,
    h0h: CMatrix,
    h1h: CMatrix,
    h2h: CMatrix,
    h2r1: CMatrix,
    t2r1: CMatrix,
    h2h1: CMatrix,
    t2h1: CMatrix,
}

pub(crate) struct Prop1Evaluation {
    pub rhs: [f64; 6],
    /// `log det` of `I + e2/sigma^2 R2`, `Phi1`, `Phi0`, `I + Omega`.
    pub logdets: [f64; 4],
}

impl<'a> Prop1System<'a> {
    pub fn new(s: &'a SystemStatistics) -> Self {
        let (h0, h1, h2) = (&s.direct.los, &s.bs_ris.los, &s.ris_user.los);
        let (r1, t2) = (s.bs_ris.r.matrix(), s.ris_user.t.matrix());
        Prop1System {
            s,
            h0h: h0.adjoint(),
            h1h: h1.adjoint(),
            h2h: h2.adjoint(),
            h2r1: h2 * r1,
            t2r1: t2 * r1,
            h2h1: h2 * h1,
            t2h1: t2 * h1,
        }
    }

    pub fn rhs(&self, e: &Scalars) -> Result<[f64; 6]> {
        Ok(self.evaluate(e, false)?.rhs)
    }

    pub fn evaluate(&self, e: &Scalars, with_logdets: bool) -> Result<Prop1Evaluation> {
        let s = self.s;
        let Scalars {
            e0,
            e1,
            e2,
            te0,
            te1,
            te2,
        } = e.clamped();
        let (n, l, k) = (s.dims.n, s.dims.l, s.dims.k);
        let c = |x: f64| cplx(x, 0.0);
        let (r0, r1, r2) = (s.direct.r.matrix(), s.bs_ris.r.matrix(), s.ris_user.r.matrix());
        let (t0, t1, t2) = (s.direct.t.matrix(), s.bs_ris.t.matrix(), s.ris_user.t.matrix());
        let (h0, h1, h2) = (&s.direct.los, &s.bs_ris.los, &s.ris_user.los);
        let sigma2 = s.noise_power;

        let phi2 = identity(k) * c(sigma2) + r2 * c(e2);
        let lu2 = Lu::new(&phi2, "Phi2 = sigma^2 I + e2 R2")?;
        let p2i = lu2.inverse();
        let p2i_h2 = &p2i * h2;
        // Psi2 R1 and Psi2 H1 from precomputed products (Psi2 = H2^H Phi2^-1 H2 + e~2 T2).
        let psi2r1 = &self.h2h * (&p2i * &self.h2r1) + &self.t2r1 * c(te2);
        let psi2_h1 = &self.h2h * (&p2i * &self.h2h1) + &self.t2h1 * c(te2);
        let phi1 = identity(l) + &psi2r1 * c(e1);
        let lu1 = Lu::new(&phi1, "Phi1 = I + e1 Psi2 R1")?;
        let p1i = lu1.inverse();
        // y = Phi1^-1 H2^H Phi2^-1
        let y = &p1i * p2i_h2.adjoint();
        let psi1 = &p2i - (&p2i * (&self.h2r1 * &y)) * c(e1);
        let phi0 = identity(k) + (&psi1 * r0) * c(e0);
        let lu0 = Lu::new(&phi0, "Phi0 = I + e0 Psi1 R0")?;
        let p0i = lu0.inverse();
        let p1ih_h1 = p1i.adjoint() * h1;
        let psi0 = &psi1 * h0 + &p2i_h2 * &p1ih_h1;
        let xi0 = h0 - r0 * (&p0i * &psi0) * c(e0);
        let omega = &self.h1h * (&p1i * &psi2_h1)
            + psi0.adjoint() * &xi0
            + &self.h0h * (&p2i_h2 * &p1ih_h1)
            + t0 * c(te0)
            + t1 * c(te1);
        let i_omega = identity(n) + &omega;
        let lu_om = Lu::new(&i_omega, "I + Omega")?;
        let omi = lu_om.inverse();

        // e0 R0 Phi0^-1, Hermitian PSD.
        let b0 = r0 * &p0i * c(e0);
        let quad = |z: &CMatrix, m: &CMatrix| trace_of_product(&(z * &omi), &(z.adjoint() * m)).re;

        let rhs_e0 = trace_of_product(&omi, t0).re / n as f64;
        let rhs_e1 = trace_of_product(&omi, t1).re / n as f64;

        let ry = r1 * &y;
        let x21 = &p1ih_h1 - r1 * (&y * &xi0) * c(e1);
        let rhs_e2 = (e1 * trace_of_product(&p1i, &self.t2r1).re
            + e1 * e1 * trace_of_product(&b0, &(ry.adjoint() * (t2 * &ry))).re
            + quad(&x21, t2))
            / l as f64;

        let z01 = &p0i * &psi0;
        let rhs_te0 = (trace_of_product(&(&p0i * &psi1), r0).re - quad(&z01, r0)) / n as f64;

        let pi11_r1 = trace_of_product(&b0, &(y.adjoint() * (r1 * &y))).re;
        let z12 = &p1i * (&psi2_h1 + p2i_h2.adjoint() * &xi0);
        let rhs_te1 = (trace_of_product(&p1i, &psi2r1).re - pi11_r1 - quad(&z12, r1)) / n as f64;

        let pi31 = &p2i * (&self.h2r1 * &y) * c(e1);
        let pi32 = &psi1 * &b0 * psi1.adjoint();
        let z33 = &p2i_h2 * &p1ih_h1 + &psi1 * &xi0;
        let rhs_te2 = (trace_of_product(&p2i, r2).re
            - trace_of_product(&pi31, r2).re
            - trace_of_product(&pi32, r2).re
            - quad(&z33, r2))
            / l as f64;

        let logdets = if with_logdets {
            let real = |z: crate::linalg::Complex64, what: &str| -> Result<f64> {
                if z.im.abs() > 1e-8 {
                    Err(Error::ComplexLogDet {
                        what: what.to_string(),
                        imag: z.im,
                    })
                } else {
                    Ok(z.re)
                }
            };
            [
                real(lu2.logdet(), "Phi2")? - k as f64 * sigma2.ln(),
                real(lu1.logdet(), "I + e1 Psi2 R1")?,
                real(lu0.logdet(), "I + e0 Psi1 R0")?,
                real(lu_om.logdet(), "I + Omega")?,
            ]
        } else {
            [0.0; 4]
        };
        Ok(Prop1Evaluation {
            rhs: [rhs_e0, rhs_e1, rhs_e2, rhs_te0, rhs_te1, rhs_te2],
            logdets,
        })
    }
}

/// Solves the six equations from `e_i = e~_i = 1` with default options.
pub fn solve_fixed_point(stats: &SystemStatistics) -> Result<FixedPointSolution> {
    solve_fixed_point_with(stats, None, &FixedPointOptions::default())
}

/// Solves the six equations, optionally warm-started. A non-converged result
/// is returned as such (flag and residual set), never as an error.
pub fn solve_fixed_point_with(
    stats: &SystemStatistics,
    init: Option<&Scalars>,
    opts: &FixedPointOptions,
) -> Result<FixedPointSolution> {
    stats.validate()?;
    let system = Prop1System::new(stats);
    let start = init.copied().unwrap_or(Scalars::ONES).to_array();
    let out = iterate(&start, opts, |x| {
        let e = Scalars::from_array(x.try_into().expect("six scalars"));
        Ok(system.rhs(&e)?.to_vec())
    })?;
    Ok(FixedPointSolution {
        scalars: Scalars::from_array(out.values.try_into().expect("six scalars")).clamped(),
        iterations: out.iterations,
        residual: out.residual,
        converged: out.converged,
        residual_trace: out.residual_trace,
    })
}

/// Labels of the seven rate terms, in evaluation order.
pub const RATE_TERMS: [&str; 7] = [
    "logdet(I + e2/sigma^2 R2)",
    "logdet(I + e1 Psi2 R1)",
    "logdet(I + e0 Psi1 R0)",
    "logdet(I + Omega)",
    "-N e0 e~0",
    "-N e1 e~1",
    "-L e2 e~2",
];

/// The rate expression evaluated at given scalars.
pub fn rate_at(stats: &SystemStatistics, e: &Scalars) -> Result<(f64, [f64; 7])> {
    let ev = Prop1System::new(stats).evaluate(e, true)?;
    let (n, l) = (stats.dims.n as f64, stats.dims.l as f64);
    let terms = [
        ev.logdets[0],
        ev.logdets[1],
        ev.logdets[2],
        ev.logdets[3],
        -n * e.e0 * e.te0,
        -n * e.e1 * e.te1,
        -l * e.e2 * e.te2,
    ];
    Ok((terms.iter().sum(), terms))
}

/// Large-system rate in nats with its seven-term breakdown. Refuses a
/// non-converged fixed point.
pub fn asymptotic_rate(stats: &SystemStatistics) -> Result<RateResult> {
    asymptotic_rate_with(stats, None, &FixedPointOptions::default())
}

pub fn asymptotic_rate_with(
    stats: &SystemStatistics,
    init: Option<&Scalars>,
    opts: &FixedPointOptions,
) -> Result<RateResult> {
    let sol = solve_fixed_point_with(stats, init, opts)?;
    sol.ensure_converged()?;
    let (nats, terms) = rate_at(stats, &sol.scalars)?;
    Ok(RateResult {
        nats,
        detail: RateDetail::Analytic {
            terms: RATE_TERMS.iter().map(|s| s.to_string()).zip(terms).collect(),
            fixed_point: Box::new(sol),
        },
    })
}

#[cfg(test)]
pub(crate) mod test_instances {
    use crate::channel::{LinkStatistics, SystemDims, SystemStatistics};
    use crate::linalg::test_util::{random_hpd, random_matrix};
    use crate::linalg::{cplx, CMatrix, HermitianPsd};
    use rand::Rng;

    fn hpd_with_trace(rng: &mut impl Rng, n: usize, trace: f64) -> HermitianPsd {
        HermitianPsd::new(random_hpd(rng, n))
            .unwrap()
            .with_trace(trace)
            .unwrap()
    }

    fn link(rng: &mut impl Rng, rx: usize, tx: usize, t_scale: f64, los_scale: f64) -> LinkStatistics {
        LinkStatistics {
            r: hpd_with_trace(rng, rx, rx as f64),
            t: hpd_with_trace(rng, tx, t_scale * tx as f64),
            los: random_matrix(rng, rx, tx) * cplx(los_scale, 0.0),
            kappa: 1.0,
            gain: 1.0,
        }
    }

    /// Unit-scale random statistics with all links active.
    pub fn random_stats(rng: &mut impl Rng, n: usize, l: usize, k: usize) -> SystemStatistics {
        SystemStatistics::new(
            SystemDims::new(n, l, k).unwrap(),
            link(rng, k, n, 0.7, 0.4),
            link(rng, l, n, 1.3, 0.5),
            link(rng, k, l, 0.5, 0.6),
            0.3,
            n as f64,
        )
        .unwrap()
    }

    /// Every matrix zero, including the receive correlations.
    pub fn null_stats(n: usize, l: usize, k: usize) -> SystemStatistics {
        let z = |rx: usize, tx: usize| LinkStatistics {
            r: HermitianPsd::zeros(rx),
            t: HermitianPsd::zeros(tx),
            los: CMatrix::zeros(rx, tx),
            kappa: 0.0,
            gain: 0.0,
        };
        SystemStatistics::new(SystemDims::new(n, l, k).unwrap(), z(k, n), z(l, n), z(k, l), 1.0, 1.0).unwrap()
    }
}
