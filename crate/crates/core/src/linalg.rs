//! Thin dense linear-algebra layer over `faer`.
//!
//! Everything downstream works with [`CMat`] and plain `Vec<c64>` vectors.

use crate::error::{Error, Result};
use faer::{Mat, MatRef, Side};

pub use faer::c64;

pub type CMat = Mat<c64>;

pub const ZERO: c64 = c64 { re: 0.0, im: 0.0 };
pub const ONE: c64 = c64 { re: 1.0, im: 0.0 };
pub const I: c64 = c64 { re: 0.0, im: 1.0 };

/// `exp(i t)`.
#[inline]
pub fn cis(t: f64) -> c64 {
    let (s, c) = t.sin_cos();
    c64::new(c, s)
}

pub fn zeros(r: usize, c: usize) -> CMat {
    Mat::zeros(r, c)
}

pub fn identity(n: usize) -> CMat {
    Mat::identity(n, n)
}

pub fn diag_real(d: &[f64]) -> CMat {
    Mat::from_fn(d.len(), d.len(), |i, j| if i == j { c64::new(d[i], 0.0) } else { ZERO })
}

pub fn adjoint(a: MatRef<'_, c64>) -> CMat {
    a.adjoint().to_owned()
}

pub fn matmul(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> CMat {
    a * b
}

pub fn scale(a: MatRef<'_, c64>, s: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn matvec(a: MatRef<'_, c64>, x: &[c64]) -> Vec<c64> {
    let mut y = vec![ZERO; a.nrows()];
    for j in 0..a.ncols() {
        let xj = x[j];
        if xj == ZERO {
            continue;
        }
        let col = a.col(j);
        for (i, yi) in y.iter_mut().enumerate() {
            *yi += col[i] * xj;
        }
    }
    y
}

/// Largest absolute entry.
pub fn max_abs(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn fro_norm(a: MatRef<'_, c64>) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

/// Spectral norm (largest singular value).
pub fn op_norm(a: MatRef<'_, c64>) -> f64 {
    if a.nrows() == 0 || a.ncols() == 0 {
        return 0.0;
    }
    match a.singular_values() {
        Ok(s) => s.first().copied().unwrap_or(0.0),
        Err(_) => fro_norm(a),
    }
}

/// Spectral norm of a Hermitian matrix (largest |eigenvalue|).
pub fn herm_norm(a: MatRef<'_, c64>) -> f64 {
    eigvalsh(a).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

pub fn singular_values(a: MatRef<'_, c64>) -> Vec<f64> {
    if a.nrows() == 0 || a.ncols() == 0 {
        return Vec::new();
    }
    a.singular_values().unwrap_or_default()
}

pub fn min_singular_value(a: MatRef<'_, c64>) -> f64 {
    singular_values(a).last().copied().unwrap_or(0.0)
}

/// `max |a - a^*|`.
pub fn herm_defect(a: MatRef<'_, c64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    m
}

/// `(a + a^*) / 2`.
pub fn hermitize(a: MatRef<'_, c64>) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// Ascending eigenvalues and orthonormal eigenvectors (columns) of a Hermitian matrix.
pub fn eigh(a: MatRef<'_, c64>) -> (Vec<f64>, CMat) {
    let n = a.nrows();
    if n == 0 {
        return (Vec::new(), zeros(0, 0));
    }
    let h = hermitize(a);
    let eig = h
        .self_adjoint_eigen(Side::Lower)
        .expect("hermitian eigensolver failed");
    let s = eig.S();
    let u = eig.U();
    let mut idx: Vec<usize> = (0..n).collect();
    let vals: Vec<f64> = (0..n).map(|i| s[i].re).collect();
    idx.sort_by(|&i, &j| vals[i].total_cmp(&vals[j]));
    let sorted: Vec<f64> = idx.iter().map(|&i| vals[i]).collect();
    let vecs = Mat::from_fn(n, n, |i, j| u[(i, idx[j])]);
    (sorted, vecs)
}

pub fn eigvalsh(a: MatRef<'_, c64>) -> Vec<f64> {
    if a.nrows() == 0 {
        return Vec::new();
    }
    let h = hermitize(a);
    let mut v = h
        .self_adjoint_eigenvalues(Side::Lower)
        .expect("hermitian eigensolver failed");
    v.sort_by(f64::total_cmp);
    v
}

/// `V diag(f(λ)) V^*` from a precomputed eigendecomposition.
pub fn from_eig(vals: &[f64], vecs: MatRef<'_, c64>, f: impl Fn(f64) -> c64) -> CMat {
    let n = vecs.nrows();
    let fv: Vec<c64> = vals.iter().map(|&l| f(l)).collect();
    let scaled = Mat::from_fn(n, vals.len(), |i, j| vecs[(i, j)] * fv[j]);
    &scaled * vecs.adjoint()
}

/// Functional calculus `f(A)` for Hermitian `A`.
pub fn herm_fn(a: MatRef<'_, c64>, f: impl Fn(f64) -> c64) -> CMat {
    let (vals, vecs) = eigh(a);
    from_eig(&vals, vecs.as_ref(), f)
}

/// Solve `a x = b` by partial-pivoting LU; fails when the result is not finite
/// or the residual is not small.
pub fn solve(a: MatRef<'_, c64>, b: MatRef<'_, c64>) -> Result<CMat> {
    if a.nrows() != a.ncols() || a.nrows() != b.nrows() {
        return Err(Error::ShapeMismatch(format!(
            "solve with {}x{} and {}x{}",
            a.nrows(),
            a.ncols(),
            b.nrows(),
            b.ncols()
        )));
    }
    if a.nrows() == 0 {
        return Ok(zeros(0, b.ncols()));
    }
    use faer::prelude::Solve;
    let lu = a.partial_piv_lu();
    let x = lu.solve(b);
    for j in 0..x.ncols() {
        for i in 0..x.nrows() {
            if !x[(i, j)].re.is_finite() || !x[(i, j)].im.is_finite() {
                return Err(Error::Linalg("singular system".into()));
            }
        }
    }
    let r = &(a * &x) - b;
    let scale_ = (max_abs(a) * max_abs(x.as_ref())).max(max_abs(b)).max(1e-300);
    if max_abs(r.as_ref()) > 1e-6 * scale_ {
        return Err(Error::Linalg("ill-conditioned system".into()));
    }
    Ok(x)
}

pub fn inverse(a: MatRef<'_, c64>) -> Result<CMat> {
    solve(a, identity(a.nrows()).as_ref())
}

/// Orthonormal basis of the range of a Hermitian projection (eigenvalues above 1/2)
/// and of its complement.
pub fn projection_bases(p: MatRef<'_, c64>) -> (CMat, CMat) {
    let (vals, vecs) = eigh(p);
    let n = vals.len();
    let split = vals.iter().position(|&v| v > 0.5).unwrap_or(n);
    let range = Mat::from_fn(vecs.nrows(), n - split, |i, j| vecs[(i, split + j)]);
    let kernel = Mat::from_fn(vecs.nrows(), split, |i, j| vecs[(i, j)]);
    (range, kernel)
}

pub fn inner(a: &[c64], b: &[c64]) -> c64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn norm(a: &[c64]) -> f64 {
    a.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
}

pub fn axpy(y: &mut [c64], a: c64, x: &[c64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

pub fn sub(a: &[c64], b: &[c64]) -> Vec<c64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

pub fn is_finite(a: MatRef<'_, c64>) -> bool {
    (0..a.ncols()).all(|j| (0..a.nrows()).all(|i| a[(i, j)].re.is_finite() && a[(i, j)].im.is_finite()))
}

/// Pin faer to single-threaded kernels so results do not depend on the thread pool.
pub fn pin_sequential() {
    faer::set_global_parallelism(faer::Par::Seq);
}
