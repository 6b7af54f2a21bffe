//! Small dense Hermitian linear algebra.
//!
//! Matrices here are tiny (the antenna count, usually at most a handful), so
//! the routines favour clarity over blocking. Eigendecomposition is delegated
//! to `nalgebra`; the PSD test used on the ellipsoid hot path is a hand-rolled
//! shifted Cholesky that never allocates.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Dense complex matrix, used for energy covariances and `H̄` matrices.
pub type CMat = DMatrix<Complex64>;
/// Dense complex column vector.
pub type CVec = DVector<Complex64>;

/// Relative asymmetry tolerance accepted by the Hermitian routines.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// Largest absolute entry.
pub fn max_abs(a: &CMat) -> f64 {
    a.iter().fold(0.0_f64, |acc, z| acc.max(z.norm()))
}

/// `max |A - A^H|` divided by `max(1, max |A|)`.
pub fn hermitian_asymmetry(a: &CMat) -> f64 {
    let n = a.nrows();
    if a.ncols() != n {
        return f64::INFINITY;
    }
    let mut worst = 0.0_f64;
    for r in 0..n {
        for c in r..n {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst / max_abs(a).max(1.0)
}

pub fn ensure_hermitian(a: &CMat) -> Result<()> {
    let asym = hermitian_asymmetry(a);
    if asym > HERMITIAN_TOL {
        return Err(Error::NotHermitian(asym));
    }
    Ok(())
}

/// Eigenvalues (ascending) and the matching orthonormal eigenvectors as columns.
pub fn eigh(a: &CMat) -> Result<(Vec<f64>, CMat)> {
    ensure_hermitian(a)?;
    let n = a.nrows();
    let eig = nalgebra::SymmetricEigen::new(a.clone());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[x].total_cmp(&eig.eigenvalues[y]));
    let values = order.iter().map(|&j| eig.eigenvalues[j]).collect();
    let mut vectors = CMat::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a Hermitian matrix with a unit eigenvector.
pub fn min_eig_hermitian(a: &CMat) -> Result<(f64, CVec)> {
    if a.nrows() == 0 {
        return Err(Error::Shape("empty matrix".into()));
    }
    let (values, vectors) = eigh(a)?;
    let v = vectors.column(0).into_owned();
    let norm = v.norm();
    Ok((values[0], v / Complex64::new(norm, 0.0)))
}

/// `x^H A x`, real part (exact for Hermitian `A`).
pub fn quad_form(a: &CMat, x: &[Complex64]) -> f64 {
    let n = x.len();
    let mut acc = 0.0;
    for r in 0..n {
        let mut row = Complex64::new(0.0, 0.0);
        for c in 0..n {
            row += a[(r, c)] * x[c];
        }
        acc += (x[r].conj() * row).re;
    }
    acc
}

pub fn norm_sqr(x: &[Complex64]) -> f64 {
    x.iter().map(|z| z.norm_sqr()).sum()
}

/// `|x^H y|^2`.
pub fn inner_abs_sqr(x: &[Complex64], y: &[Complex64]) -> f64 {
    x.iter()
        .zip(y)
        .fold(Complex64::new(0.0, 0.0), |acc, (a, b)| acc + a.conj() * b)
        .norm_sqr()
}

/// Real part of the trace.
pub fn trace_re(a: &CMat) -> f64 {
    (0..a.nrows()).map(|i| a[(i, i)].re).sum()
}

/// `h h^H`.
pub fn outer(h: &[Complex64]) -> CMat {
    let n = h.len();
    CMat::from_fn(n, n, |r, c| h[r] * h[c].conj())
}

/// In-place Cholesky of `A + shift·I` on a row-major buffer; returns false on
/// a nonpositive pivot. `buf` is overwritten.
pub fn cholesky_in_place(buf: &mut [Complex64], n: usize, shift: f64) -> bool {
    for i in 0..n {
        buf[i * n + i] += shift;
    }
    for j in 0..n {
        let mut d = buf[j * n + j].re;
        for k in 0..j {
            d -= buf[j * n + k].norm_sqr();
        }
        if d <= 0.0 || !d.is_finite() {
            return false;
        }
        let d = d.sqrt();
        buf[j * n + j] = Complex64::new(d, 0.0);
        for i in (j + 1)..n {
            let mut s = buf[i * n + j];
            for k in 0..j {
                s -= buf[i * n + k] * buf[j * n + k].conj();
            }
            buf[i * n + j] = s / d;
        }
    }
    true
}

/// True when `A + shift·I` admits a Cholesky factorisation, i.e. the smallest
/// eigenvalue of `A` exceeds `-shift` (up to rounding).
pub fn is_psd_shifted(a: &CMat, shift: f64) -> bool {
    let n = a.nrows();
    let mut buf: Vec<Complex64> = Vec::with_capacity(n * n);
    for r in 0..n {
        for c in 0..n {
            buf.push(a[(r, c)]);
        }
    }
    cholesky_in_place(&mut buf, n, shift)
}
