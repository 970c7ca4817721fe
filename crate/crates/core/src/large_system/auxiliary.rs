//! Straight-line construction of the auxiliary matrices and the six
//! right-hand sides, kept deliberately close to the printed formulas. The
//! solver uses the square-root-free evaluation in the parent module; this
//! version is the cross-check.

use crate::channel::SystemStatistics;
use crate::error::{Error, Result};
use crate::linalg::{cplx, eigh_symmetrized, identity, inverse, max_abs, max_asymmetry, CMatrix};

use super::Scalars;

#[derive(Debug, Clone)]
pub struct AuxiliaryMatrices {
    pub phi0: CMatrix,
    pub phi1: CMatrix,
    pub phi2: CMatrix,
    pub psi0: CMatrix,
    pub psi1: CMatrix,
    pub psi2: CMatrix,
    pub xi0: CMatrix,
    pub omega: CMatrix,
    pub pi01: CMatrix,
    pub pi11: CMatrix,
    pub pi12: CMatrix,
    pub pi21: CMatrix,
    pub pi31: CMatrix,
    pub pi32: CMatrix,
    pub pi33: CMatrix,
}

/// Matrices that are Hermitian in exact arithmetic are accepted up to this
/// relative asymmetry before taking roots.
const ROOT_ASYMMETRY_TOL: f64 = 1e-8;

fn hermitian_power(a: &CMatrix, what: &str, power: f64) -> Result<CMatrix> {
    let asym = max_asymmetry(a);
    let scale = max_abs(a);
    if asym > ROOT_ASYMMETRY_TOL * scale {
        return Err(Error::NotHermitian {
            max_asymmetry: asym,
            tolerance: ROOT_ASYMMETRY_TOL * scale,
        });
    }
    let eig = eigh_symmetrized(a);
    if power < 0.0 && !(eig.min() > 0.0) {
        return Err(Error::Singular {
            what: what.to_string(),
            pivot_ratio: eig.min() / eig.max().abs().max(f64::MIN_POSITIVE),
        });
    }
    Ok(eig.map(|v| v.max(0.0).powf(power)))
}

pub fn assemble_auxiliary(e: &Scalars, s: &SystemStatistics) -> Result<AuxiliaryMatrices> {
    s.validate()?;
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

    let phi2 = identity(k) * c(s.noise_power) + r2 * c(e2);
    let phi2_inv = inverse(&phi2, "Phi2")?;
    let psi2 = h2.adjoint() * &phi2_inv * h2 + t2 * c(te2);
    let phi1 = identity(l) + &psi2 * r1 * c(e1);
    let phi1_inv = inverse(&phi1, "Phi1")?;
    let psi1 = &phi2_inv * (identity(k) - h2 * r1 * &phi1_inv * h2.adjoint() * &phi2_inv * c(e1));
    let phi0 = identity(k) + &psi1 * r0 * c(e0);
    let phi0_inv = inverse(&phi0, "Phi0")?;
    let psi0 = &psi1 * h0 + &phi2_inv * h2 * phi1_inv.adjoint() * h1;
    let xi0 = h0 - r0 * &phi0_inv * &psi0 * c(e0);
    let omega = h1.adjoint() * &phi1_inv * &psi2 * h1
        + psi0.adjoint() * &xi0
        + h0.adjoint() * &phi2_inv * h2 * phi1_inv.adjoint() * h1
        + t0 * c(te0)
        + t1 * c(te1);

    let w = hermitian_power(&(identity(n) + &omega), "I + Omega", -0.5)?;
    let a0 = hermitian_power(&(r0 * &phi0_inv * c(e0)), "e0 R0 Phi0^-1", 0.5)?;
    let a1 = hermitian_power(&(r1 * &phi1_inv * c(e1)), "e1 R1 Phi1^-1", 0.5)?;

    let pi01 = &phi0_inv * &psi0 * &w;
    let pi11 = &phi1_inv * h2.adjoint() * &phi2_inv * &a0;
    let pi12 = &phi1_inv * (&psi2 * h1 + h2.adjoint() * &phi2_inv * &xi0) * &w;
    let pi21 = (phi1_inv.adjoint() * h1 - r1 * &phi1_inv * h2.adjoint() * &phi2_inv * &xi0 * c(e1)) * &w;
    let pi31 = &phi2_inv * h2 * &a1;
    let pi32 = &psi1 * &a0;
    let pi33 = (&phi2_inv * h2 * phi1_inv.adjoint() * h1 + &psi1 * &xi0) * &w;

    Ok(AuxiliaryMatrices {
        phi0,
        phi1,
        phi2,
        psi0,
        psi1,
        psi2,
        xi0,
        omega,
        pi01,
        pi11,
        pi12,
        pi21,
        pi31,
        pi32,
        pi33,
    })
}

/// `rhs_k - e_k` for the six equations, evaluated term by term.
pub fn fixed_point_residual(e: &Scalars, s: &SystemStatistics, a: &AuxiliaryMatrices) -> Result<[f64; 6]> {
    let (n, l) = (s.dims.n as f64, s.dims.l as f64);
    let (r0, r1, r2) = (s.direct.r.matrix(), s.bs_ris.r.matrix(), s.ris_user.r.matrix());
    let (t0, t1, t2) = (s.direct.t.matrix(), s.bs_ris.t.matrix(), s.ris_user.t.matrix());
    let Scalars { e1, .. } = e.clamped();
    let c = |x: f64| cplx(x, 0.0);
    let pp = |x: &CMatrix| x * x.adjoint();
    let tr = |m: CMatrix| m.trace().re;

    let omega_inv = inverse(&(identity(s.dims.n) + &a.omega), "I + Omega")?;
    let phi0_inv = inverse(&a.phi0, "Phi0")?;
    let phi1_inv = inverse(&a.phi1, "Phi1")?;
    let phi2_inv = inverse(&a.phi2, "Phi2")?;

    let rhs = [
        tr(&omega_inv * t0) / n,
        tr(&omega_inv * t1) / n,
        tr((r1 * &phi1_inv * c(e1) + r1 * pp(&a.pi11) * r1 * c(e1 * e1) + pp(&a.pi21)) * t2) / l,
        tr((&phi0_inv * &a.psi1 - pp(&a.pi01)) * r0) / n,
        tr((&phi1_inv * &a.psi2 - pp(&a.pi11) - pp(&a.pi12)) * r1) / n,
        tr((phi2_inv - pp(&a.pi31) - pp(&a.pi32) - pp(&a.pi33)) * r2) / l,
    ];
    let e = e.to_array();
    Ok(std::array::from_fn(|i| rhs[i] - e[i]))
}

#[cfg(test)]
mod tests {
    use super::super::test_instances::*;
    use super::*;
    use crate::linalg::test_util::rng;
    use crate::linalg::HermitianPsd;

    #[test]
    fn zero_point() {
        let s = null_stats(3, 4, 2);
        let a = assemble_auxiliary(&Scalars::default(), &s).unwrap();
        assert!(max_abs(&(a.phi0 - identity(2))) == 0.0);
        assert!(max_abs(&(a.phi1 - identity(4))) == 0.0);
        assert!(max_abs(&(a.phi2 - identity(2))) == 0.0);
        assert_eq!(max_abs(&a.omega), 0.0);
        for pi in [&a.pi01, &a.pi11, &a.pi12, &a.pi21, &a.pi31, &a.pi32, &a.pi33] {
            assert_eq!(max_abs(pi), 0.0);
        }
    }

    #[test]
    fn single_active_scalar() {
        let mut s = null_stats(3, 3, 3);
        s.ris_user.r = HermitianPsd::identity(3).scaled(2.0);
        s.noise_power = 0.5;
        let e = Scalars {
            e2: 0.25,
            ..Default::default()
        };
        let a = assemble_auxiliary(&e, &s).unwrap();
        assert!(max_abs(&(a.phi2 - identity(3) * cplx(1.0, 0.0))) < 1e-15);
        assert_eq!(max_abs(&a.psi2), 0.0);
        assert_eq!(max_abs(&a.omega), 0.0);
    }

    /// Independent transcription: every product expanded step by step in a
    /// different association order, roots via explicit eigenvectors.
    #[test]
    fn matches_second_transcription() {
        let s = random_stats(&mut rng(21), 3, 3, 3);
        let e = Scalars {
            e0: 0.4,
            e1: 0.6,
            e2: 0.3,
            te0: 0.8,
            te1: 0.5,
            te2: 0.9,
        };
        let a = assemble_auxiliary(&e, &s).unwrap();
        let c = |x: f64| cplx(x, 0.0);
        let i3 = identity(3);
        let (r0, r1, r2) = (s.direct.r.matrix(), s.bs_ris.r.matrix(), s.ris_user.r.matrix());
        let (t0, t1, t2) = (s.direct.t.matrix(), s.bs_ris.t.matrix(), s.ris_user.t.matrix());
        let (h0, h1, h2) = (&s.direct.los, &s.bs_ris.los, &s.ris_user.los);
        let inv = |m: &CMatrix| m.clone().try_inverse().unwrap();
        let root = |m: &CMatrix, p: f64| {
            let eig = ((m + m.adjoint()) * c(0.5)).symmetric_eigen();
            let d = CMatrix::from_diagonal(&eig.eigenvalues.map(|v| c(v.max(0.0).powf(p))));
            &eig.eigenvectors * d * eig.eigenvectors.adjoint()
        };
        let p2 = &i3 * c(s.noise_power) + r2 * c(e.e2);
        let p2i = inv(&p2);
        let psi2 = h2.adjoint() * (&p2i * h2) + t2 * c(e.te2);
        let p1 = &i3 + (&psi2 * r1) * c(e.e1);
        let p1i = inv(&p1);
        let psi1 = &p2i - &p2i * h2 * (r1 * (&p1i * (h2.adjoint() * &p2i))) * c(e.e1);
        let p0 = &i3 + &psi1 * (r0 * c(e.e0));
        let p0i = inv(&p0);
        let psi0 = &psi1 * h0 + &p2i * (h2 * (p1i.adjoint() * h1));
        let xi0 = h0 - (r0 * &p0i) * (&psi0 * c(e.e0));
        let om = h1.adjoint() * (&p1i * (&psi2 * h1))
            + psi0.adjoint() * &xi0
            + h0.adjoint() * (&p2i * (h2 * (p1i.adjoint() * h1)))
            + t0 * c(e.te0)
            + t1 * c(e.te1);
        let w = root(&(&i3 + &om), -0.5);
        let a0 = root(&(r0 * &p0i * c(e.e0)), 0.5);
        let a1 = root(&(r1 * &p1i * c(e.e1)), 0.5);
        let expected = [
            (&a.phi0, p0.clone()),
            (&a.phi1, p1.clone()),
            (&a.phi2, p2.clone()),
            (&a.psi0, psi0.clone()),
            (&a.psi1, psi1.clone()),
            (&a.psi2, psi2.clone()),
            (&a.xi0, xi0.clone()),
            (&a.omega, om.clone()),
            (&a.pi01, &p0i * &psi0 * &w),
            (&a.pi11, &p1i * h2.adjoint() * &p2i * &a0),
            (&a.pi12, &p1i * (&psi2 * h1 + h2.adjoint() * &p2i * &xi0) * &w),
            (
                &a.pi21,
                (p1i.adjoint() * h1 - r1 * &p1i * h2.adjoint() * &p2i * &xi0 * c(e.e1)) * &w,
            ),
            (&a.pi31, &p2i * h2 * &a1),
            (&a.pi32, &psi1 * &a0),
            (&a.pi33, (&p2i * h2 * p1i.adjoint() * h1 + &psi1 * &xi0) * &w),
        ];
        for (i, (got, want)) in expected.iter().enumerate() {
            let err = max_abs(&(*got - want));
            assert!(err < 1e-12 * (1.0 + max_abs(want)), "matrix {i}: {err}");
        }
    }

    #[test]
    fn omega_and_root_arguments_are_hermitian() {
        let s = random_stats(&mut rng(22), 4, 5, 3);
        let e = Scalars {
            e0: 0.2,
            e1: 0.9,
            e2: 0.5,
            te0: 1.4,
            te1: 0.3,
            te2: 0.7,
        };
        let a = assemble_auxiliary(&e, &s).unwrap();
        assert!(max_asymmetry(&a.omega) < 1e-12 * max_abs(&a.omega));
        let phi0_inv = inverse(&a.phi0, "Phi0").unwrap();
        let b0 = s.direct.r.matrix() * phi0_inv;
        assert!(max_asymmetry(&b0) < 1e-12 * max_abs(&b0));
    }
}
