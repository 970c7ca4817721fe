//! Dense complex matrix primitives.
//!
//! Everything in the crate is expressed with [`CMatrix`] (a dense `nalgebra`
//! matrix of `Complex<f64>`). Hermitian square roots, inverse square roots and
//! log-determinants go through a Hermitian eigendecomposition so that
//! semidefinite inputs carrying roundoff-sized negative eigenvalues can be
//! clamped instead of rejected. Non-Hermitian systems are handled with a
//! partially pivoted LU factorization.

use nalgebra::{Complex, DMatrix};

use crate::error::{Error, Result};

pub type Complex64 = Complex<f64>;
pub type CMatrix = DMatrix<Complex64>;

/// Entry-mismatch tolerance for Hermitian checks, relative to the largest entry.
pub const HERMITIAN_TOL: f64 = 1e-12;
/// Allowed negative eigenvalue, relative to the largest one, before a matrix
/// stops counting as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// Pivot ratio below which an LU factorization is declared singular.
pub const SINGULAR_PIVOT_RATIO: f64 = 1e-14;

#[inline]
pub fn cplx(re: f64, im: f64) -> Complex64 {
    Complex::new(re, im)
}

pub fn identity(n: usize) -> CMatrix {
    CMatrix::identity(n, n)
}

pub fn zeros(rows: usize, cols: usize) -> CMatrix {
    CMatrix::zeros(rows, cols)
}

pub fn from_real_diagonal(values: &[f64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { cplx(values[i], 0.0) } else { cplx(0.0, 0.0) })
}

pub fn from_diagonal(values: &[Complex64]) -> CMatrix {
    let n = values.len();
    CMatrix::from_fn(n, n, |i, j| if i == j { values[i] } else { cplx(0.0, 0.0) })
}

pub fn max_abs(a: &CMatrix) -> f64 {
    a.iter().fold(0.0_f64, |m, z| m.max(z.norm()))
}

pub fn is_finite(a: &CMatrix) -> bool {
    a.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Largest entrywise mismatch `|a_ij - conj(a_ji)|`.
pub fn max_asymmetry(a: &CMatrix) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    worst
}

fn ensure_square(a: &CMatrix, what: &str) -> Result<()> {
    if a.nrows() != a.ncols() {
        return Err(Error::dims(
            what,
            "square matrix",
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    Ok(())
}

/// Rejects matrices whose entries differ from their conjugate-transpose
/// counterparts by more than [`HERMITIAN_TOL`] times the largest entry.
pub fn ensure_hermitian(a: &CMatrix) -> Result<()> {
    ensure_square(a, "Hermitian check")?;
    let tolerance = HERMITIAN_TOL * max_abs(a);
    let max_asymmetry = max_asymmetry(a);
    if max_asymmetry > tolerance {
        return Err(Error::NotHermitian {
            max_asymmetry,
            tolerance,
        });
    }
    Ok(())
}

/// `(A + A^H) / 2`.
pub fn symmetrize(a: &CMatrix) -> CMatrix {
    (a + a.adjoint()) * cplx(0.5, 0.0)
}

/// Eigendecomposition `A = V diag(values) V^H` of a Hermitian matrix, with
/// eigenvalues sorted ascending.
#[derive(Debug, Clone)]
pub struct HermitianEigen {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl HermitianEigen {
    pub fn min(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    pub fn max(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Rebuilds `V diag(f(values)) V^H`.
    pub fn map(&self, f: impl Fn(f64) -> f64) -> CMatrix {
        let n = self.values.len();
        let mut scaled = self.vectors.clone();
        for (j, &v) in self.values.iter().enumerate() {
            let s = f(v);
            for i in 0..n {
                scaled[(i, j)] *= s;
            }
        }
        scaled * self.vectors.adjoint()
    }
}

pub fn hermitian_eigen(a: &CMatrix) -> Result<HermitianEigen> {
    ensure_hermitian(a)?;
    Ok(eigh_symmetrized(a))
}

/// Eigendecomposition of the Hermitian part of `a`; no symmetry check.
pub(crate) fn eigh_symmetrized(a: &CMatrix) -> HermitianEigen {
    let eig = symmetrize(a).symmetric_eigen();
    let mut order: Vec<usize> = (0..eig.eigenvalues.len()).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = CMatrix::from_fn(a.nrows(), a.nrows(), |r, c| eig.eigenvectors[(r, order[c])]);
    HermitianEigen { values, vectors }
}

/// Principal square root of a Hermitian positive semidefinite matrix.
/// Negative eigenvalues within [`PSD_TOL`] of zero are clamped.
pub fn hermitian_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eigen(a)?;
    ensure_psd_spectrum(&eig)?;
    Ok(eig.map(|v| v.max(0.0).sqrt()))
}

/// `A^{-1/2}` for a Hermitian positive definite matrix.
pub fn hermitian_inv_sqrt(a: &CMatrix) -> Result<CMatrix> {
    let eig = hermitian_eigen(a)?;
    ensure_pd_spectrum(&eig)?;
    Ok(eig.map(|v| 1.0 / v.sqrt()))
}

/// Projects the Hermitian part of `a` onto the PSD cone by zeroing negative
/// eigenvalues.
pub fn clamp_psd(a: &CMatrix) -> CMatrix {
    eigh_symmetrized(a).map(|v| v.max(0.0))
}

fn ensure_psd_spectrum(eig: &HermitianEigen) -> Result<()> {
    let (min, max) = (eig.min(), eig.max());
    if min < -PSD_TOL * max.abs().max(f64::MIN_POSITIVE) {
        return Err(Error::NotPositiveSemidefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

fn ensure_pd_spectrum(eig: &HermitianEigen) -> Result<()> {
    let (min, max) = (eig.min(), eig.max());
    if !(min > PSD_TOL * max.abs()) || max <= 0.0 {
        return Err(Error::NotPositiveDefinite {
            min_eigenvalue: min,
            max_eigenvalue: max,
        });
    }
    Ok(())
}

/// `log det A` for Hermitian positive definite `A`, as the sum of log
/// eigenvalues.
pub fn logdet_hpd(a: &CMatrix) -> Result<f64> {
    let eig = hermitian_eigen(a)?;
    ensure_pd_spectrum(&eig)?;
    Ok(eig.values.iter().map(|v| v.ln()).sum())
}

/// LU factorization with a singularity check on the pivots.
pub struct Lu {
    lu: nalgebra::linalg::LU<Complex64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl Lu {
    pub fn new(a: &CMatrix, what: &str) -> Result<Self> {
        ensure_square(a, what)?;
        let lu = a.clone().lu();
        let u = lu.u();
        let (mut lo, mut hi) = (f64::INFINITY, 0.0_f64);
        for i in 0..u.nrows() {
            let p = u[(i, i)].norm();
            lo = lo.min(p);
            hi = hi.max(p);
        }
        let pivot_ratio = if hi > 0.0 { lo / hi } else { 0.0 };
        if !(pivot_ratio >= SINGULAR_PIVOT_RATIO) {
            return Err(Error::Singular {
                what: what.to_string(),
                pivot_ratio,
            });
        }
        Ok(Lu { lu })
    }

    pub fn solve(&self, b: &CMatrix) -> CMatrix {
        self.lu.solve(b).expect("pivots checked at factorization")
    }

    pub fn inverse(&self) -> CMatrix {
        self.lu.try_inverse().expect("pivots checked at factorization")
    }

    /// Complex log-determinant with the imaginary part wrapped to (-pi, pi].
    pub fn logdet(&self) -> Complex64 {
        let u = self.lu.u();
        let mut acc = cplx(0.0, 0.0);
        for i in 0..u.nrows() {
            acc += u[(i, i)].ln();
        }
        if self.lu.p().determinant::<f64>() < 0.0 {
            acc += cplx(0.0, std::f64::consts::PI);
        }
        acc.im = wrap_angle(acc.im);
        acc
    }
}

fn wrap_angle(x: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut y = x.rem_euclid(two_pi);
    if y > std::f64::consts::PI {
        y -= two_pi;
    }
    y
}

/// Solves `A X = B`.
pub fn solve_general(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    solve_named(a, b, "linear system")
}

/// Solves `A^H X = B`.
pub fn solve_adjoint(a: &CMatrix, b: &CMatrix) -> Result<CMatrix> {
    solve_named(&a.adjoint(), b, "adjoint linear system")
}

pub(crate) fn solve_named(a: &CMatrix, b: &CMatrix, what: &str) -> Result<CMatrix> {
    if a.nrows() != b.nrows() {
        return Err(Error::dims(what, a.nrows(), b.nrows()));
    }
    Ok(Lu::new(a, what)?.solve(b))
}

pub fn inverse(a: &CMatrix, what: &str) -> Result<CMatrix> {
    Ok(Lu::new(a, what)?.inverse())
}

/// Complex `log det A` of a general square matrix via LU.
pub fn logdet_general(a: &CMatrix, what: &str) -> Result<Complex64> {
    Ok(Lu::new(a, what)?.logdet())
}

/// `log det A` for a matrix whose determinant is real and positive in exact
/// arithmetic; the imaginary part of the LU route must stay below `1e-8`.
pub fn logdet_real(a: &CMatrix, what: &str) -> Result<f64> {
    let z = logdet_general(a, what)?;
    if z.im.abs() > 1e-8 {
        return Err(Error::ComplexLogDet {
            what: what.to_string(),
            imag: z.im,
        });
    }
    Ok(z.re)
}

/// `tr(A B)` without forming the product.
pub fn trace_of_product(a: &CMatrix, b: &CMatrix) -> Complex64 {
    debug_assert_eq!(a.ncols(), b.nrows());
    debug_assert_eq!(a.nrows(), b.ncols());
    let mut acc = cplx(0.0, 0.0);
    for i in 0..a.nrows() {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Diagonal of `A B` without forming the product.
pub fn diag_of_product(a: &CMatrix, b: &CMatrix) -> Vec<Complex64> {
    debug_assert_eq!(a.ncols(), b.nrows());
    (0..a.nrows())
        .map(|i| {
            let mut acc = cplx(0.0, 0.0);
            for k in 0..a.ncols() {
                acc += a[(i, k)] * b[(k, i)];
            }
            acc
        })
        .collect()
}

pub fn trace_re(a: &CMatrix) -> f64 {
    a.trace().re
}

pub fn frobenius(a: &CMatrix) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `diag(d) * A`.
pub fn scale_rows(d: &[Complex64], a: &CMatrix) -> CMatrix {
    debug_assert_eq!(d.len(), a.nrows());
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| d[i] * a[(i, j)])
}

/// `A * diag(d)`.
pub fn scale_cols(a: &CMatrix, d: &[Complex64]) -> CMatrix {
    debug_assert_eq!(d.len(), a.ncols());
    CMatrix::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// A Hermitian positive semidefinite matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianPsd(CMatrix);

impl HermitianPsd {
    /// Validates symmetry and the spectrum, then stores the exact Hermitian
    /// part.
    pub fn new(a: CMatrix) -> Result<Self> {
        if !is_finite(&a) {
            return Err(Error::invalid("matrix", "non-finite entry"));
        }
        let eig = hermitian_eigen(&a)?;
        ensure_psd_spectrum(&eig)?;
        Ok(HermitianPsd(symmetrize(&a)))
    }

    /// Accepts any square matrix and projects its Hermitian part onto the PSD
    /// cone.
    pub fn clamped(a: &CMatrix) -> Result<Self> {
        ensure_square(a, "PSD projection")?;
        if !is_finite(a) {
            return Err(Error::invalid("matrix", "non-finite entry"));
        }
        Ok(HermitianPsd(symmetrize(&clamp_psd(a))))
    }

    pub fn zeros(n: usize) -> Self {
        HermitianPsd(zeros(n, n))
    }

    pub fn identity(n: usize) -> Self {
        HermitianPsd(identity(n))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn trace(&self) -> f64 {
        trace_re(&self.0)
    }

    pub fn scaled(&self, c: f64) -> Self {
        assert!(c >= 0.0, "PSD matrices may only be scaled by c >= 0");
        HermitianPsd(&self.0 * cplx(c, 0.0))
    }

    /// Rescales so that the trace equals `target` (zero matrix if `target` is 0).
    pub fn with_trace(&self, target: f64) -> Result<Self> {
        if target == 0.0 {
            return Ok(Self::zeros(self.dim()));
        }
        let tr = self.trace();
        if !(tr > 0.0) {
            return Err(Error::invalid("trace", "cannot rescale a matrix with zero trace"));
        }
        Ok(self.scaled(target / tr))
    }

    pub fn sqrt(&self) -> CMatrix {
        eigh_symmetrized(&self.0).map(|v| v.max(0.0).sqrt())
    }

    pub fn eigen(&self) -> HermitianEigen {
        eigh_symmetrized(&self.0)
    }
}

impl AsRef<CMatrix> for HermitianPsd {
    fn as_ref(&self) -> &CMatrix {
        &self.0
    }
}
