//! Feshbach–Schur reduction, the perturbed band projection, spectral windows and
//! the Helffer–Sjöstrand functional calculus.

use crate::bloch::{eigenprojection_riesz, IsolatedFamily};
use crate::error::{Error, Result};
use crate::lattice::{DenseOperator, SectorLayout};
use crate::linalg::{self, c64, CMat, ONE, ZERO};
use crate::model::{real_space_hamiltonian, HoppingTable};
use crate::phases::GaussLegendre;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Spectral projection of the Peierls-substituted `h_perp` inside `|z| < E_0 / 2`.
pub fn perturbed_band_projection(h_perp: &HoppingTable, layout: &Arc<SectorLayout>, e0: f64) -> Result<DenseOperator> {
    if !(e0 > 0.0) {
        return Err(Error::InvalidModel(format!("the spectrum must lie above zero, got E_0 = {e0}")));
    }
    let hp = real_space_hamiltonian(h_perp, layout)?;
    let r = 0.5 * e0;
    let eig = hp.eigh();
    let tol = 1e-6 * r.max(1.0);
    for (vals, _) in &eig {
        if let Some(&l) = vals.iter().find(|l| (l.abs() - r).abs() < tol) {
            return Err(Error::SpectrumOnContour { eigenvalue: l, radius: r });
        }
    }
    let blocks = eig
        .par_iter()
        .map(|(vals, vecs)| linalg::from_eig(vals, vecs.as_ref(), |l| if l.abs() < r { ONE } else { ZERO }))
        .collect();
    Ok(DenseOperator::from_blocks(layout.clone(), blocks))
}

/// Contour route on `|z| = E_0 / 2` (cross-check of the eigendecomposition route).
pub fn perturbed_band_projection_contour(h_perp: &HoppingTable, layout: &Arc<SectorLayout>, e0: f64, nodes: usize) -> Result<DenseOperator> {
    let hp = real_space_hamiltonian(h_perp, layout)?;
    let r = 0.5 * e0;
    let blocks = hp
        .blocks()
        .par_iter()
        .map(|b| {
            eigenprojection_riesz(b, 0.0, r, nodes, 1e-6 * r.max(1.0)).map_err(|e| match e {
                Error::EigenvalueOnContour { eigenvalue, .. } => Error::SpectrumOnContour { eigenvalue, radius: r },
                other => other,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(DenseOperator::from_blocks(layout.clone(), blocks))
}

/// `P H P`.
pub fn effective_hamiltonian(p: &DenseOperator, h: &DenseOperator) -> DenseOperator {
    p.mul(h).mul(p)
}

/// Block decomposition of `(H - z)^{-1}` along `P`, in the coordinates of
/// orthonormal bases of `ran P` and `ran (1 - P)`.
#[derive(Clone, Debug)]
pub struct SchurDecomposition {
    pub z: c64,
    pub range_basis: CMat,
    pub complement_basis: CMat,
    /// `(P (H - z) P - P H R_perp H P)^{-1}` on `ran P`.
    pub rtilde: CMat,
    /// `((1 - P)(H - z)(1 - P))^{-1}` on `ran (1 - P)`.
    pub rperp: CMat,
    /// `P H R_perp H P` on `ran P`.
    pub feshbach: CMat,
    /// Assembled full resolvent.
    pub full: CMat,
    /// `|(H - z) full - 1|`.
    pub identity_defect: f64,
    pub coupling_norm: f64,
    pub rperp_norm: f64,
    pub feshbach_norm: f64,
}

fn shifted(a: &CMat, z: c64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| if i == j { a[(i, j)] - z } else { a[(i, j)] })
}

pub fn schur_resolvent(h: &CMat, p: &CMat, z: c64) -> Result<SchurDecomposition> {
    let (v, w) = linalg::projection_bases(p.as_ref());
    let a = v.adjoint() * (h * &v);
    let b = v.adjoint() * (h * &w);
    let c = w.adjoint() * (h * &v);
    let d = w.adjoint() * (h * &w);
    let rperp = linalg::inverse(shifted(&d, z).as_ref()).map_err(|_| Error::SingularBlock("(1 - P)(H - z)(1 - P)".into()))?;
    let feshbach = &b * &(&rperp * &c);
    let s = &shifted(&a, z) - &feshbach;
    let rtilde = linalg::inverse(s.as_ref()).map_err(|_| Error::SingularBlock("Schur complement on ran P".into()))?;
    let rb = &rtilde * &(&b * &rperp);
    let cr = &rperp * &(&c * &rtilde);
    let dd = &rperp + &(&cr * &(&b * &rperp));
    let full = &(&(&(&v * &rtilde) * v.adjoint()) - &(&(&v * &rb) * w.adjoint()))
        + &(&(&(&w * &dd) * w.adjoint()) - &(&(&w * &cr) * v.adjoint()));
    let n = h.nrows();
    let identity_defect = linalg::max_abs((&(&shifted(h, z) * &full) - &linalg::identity(n)).as_ref());
    Ok(SchurDecomposition {
        z,
        coupling_norm: linalg::op_norm(c.as_ref()),
        rperp_norm: linalg::op_norm(rperp.as_ref()),
        feshbach_norm: linalg::op_norm(feshbach.as_ref()),
        range_basis: v,
        complement_basis: w,
        rtilde,
        rperp,
        feshbach,
        full,
        identity_defect,
    })
}

/// `max_k |P H R_perp(lambda) H P|` over the sectors of a covariant operator, real `lambda`.
pub fn feshbach_norm(h: &DenseOperator, p: &DenseOperator, lambda: f64) -> Result<f64> {
    let norms = h
        .blocks()
        .par_iter()
        .zip(p.blocks())
        .map(|(hb, pb)| {
            let (v, w) = linalg::projection_bases(pb.as_ref());
            let b = v.adjoint() * (hb * &w);
            let d = w.adjoint() * (hb * &w);
            let x = linalg::solve(shifted(&d, c64::new(lambda, 0.0)).as_ref(), b.adjoint().to_owned().as_ref())
                .map_err(|_| Error::SingularBlock("(1 - P)(H - lambda)(1 - P)".into()))?;
            Ok(linalg::op_norm((&b * &x).as_ref()))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.into_iter().fold(0.0, f64::max))
}

/// `|(1 - P) H P|` over the sectors.
pub fn coupling_norm(h: &DenseOperator, p: &DenseOperator) -> f64 {
    p.complement().mul(h).mul(p).op_norm()
}

/// `(a, b)` with margin `delta`; `J^delta = (a + 2 delta, b - 2 delta)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralWindow {
    pub a: f64,
    pub b: f64,
    pub delta: f64,
}

impl SpectralWindow {
    pub fn new(a: f64, b: f64, delta: f64) -> Result<Self> {
        if !(a < b) || !(delta > 0.0) || a + 2.0 * delta >= b - 2.0 * delta {
            return Err(Error::InvalidArgument(format!("empty window ({a}, {b}) with delta {delta}")));
        }
        Ok(Self { a, b, delta })
    }

    /// Edges from the family's neighbours, `delta = d_0 / 8` unless given. An
    /// infinite `d_0` is replaced by the width of the finite edges.
    pub fn from_family(f: &IsolatedFamily, delta: Option<f64>) -> Result<Self> {
        let (a, b) = f.finite_edges();
        let d0 = if f.d0.is_finite() { f.d0 } else { b - a };
        Self::new(a, b, delta.unwrap_or(d0 / 8.0))
    }

    pub fn j_delta(&self) -> (f64, f64) {
        (self.a + 2.0 * self.delta, self.b - 2.0 * self.delta)
    }

    /// Closed middle half of `J^delta`.
    pub fn middle_half(&self) -> (f64, f64) {
        let (lo, hi) = self.j_delta();
        let q = 0.25 * (hi - lo);
        (lo + q, hi - q)
    }

    pub fn midpoint(&self) -> f64 {
        let (lo, hi) = self.j_delta();
        0.5 * (lo + hi)
    }
}

/// Per-run Schur spectrum report.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct SchurReport {
    pub window: (f64, f64),
    pub t_grid: Vec<f64>,
    /// Smallest singular value of the reduced operator minus `t`.
    pub singular_values: Vec<f64>,
    /// Eigenvalues of `H` in the window and the reduced singular value at each.
    pub eigenvalues: Vec<(f64, f64)>,
    /// Grid roots of the singular-value function.
    pub roots: Vec<f64>,
    /// `(eigenvalue, nearest root)` pairs.
    pub matching: Vec<(f64, f64)>,
    /// Floor of the smallest singular value of `(1 - P)(H - t)(1 - P)` on the window.
    pub complement_floor: f64,
    pub passed: bool,
}

fn reduced_smin(a: &CMat, b: &CMat, c: &CMat, d: &CMat, t: f64) -> Result<(f64, f64)> {
    let z = c64::new(t, 0.0);
    let ds = shifted(d, z);
    let floor = linalg::min_singular_value(ds.as_ref());
    let x = linalg::solve(ds.as_ref(), c.as_ref()).map_err(|_| Error::ConditionTwoFails(floor))?;
    let s = &shifted(a, z) - &(b * &x);
    Ok((linalg::min_singular_value(s.as_ref()), floor))
}

/// Check `J cap sigma(H) = J cap {t : t in sigma(P H P - P H R_perp(t) H P)}`.
pub fn schur_spectrum_check(h: &CMat, p: &CMat, window: (f64, f64), n_grid: usize) -> Result<SchurReport> {
    let (v, w) = linalg::projection_bases(p.as_ref());
    let a = v.adjoint() * (h * &v);
    let b = v.adjoint() * (h * &w);
    let c = w.adjoint() * (h * &v);
    let d = w.adjoint() * (h * &w);
    let (lo, hi) = window;
    let step = (hi - lo) / (n_grid.max(2) - 1) as f64;
    let t_grid: Vec<f64> = (0..n_grid.max(2)).map(|i| lo + step * i as f64).collect();
    let vals = t_grid
        .par_iter()
        .map(|&t| reduced_smin(&a, &b, &c, &d, t))
        .collect::<Result<Vec<_>>>()?;
    let eigs: Vec<f64> = linalg::eigvalsh(h.as_ref()).into_iter().filter(|&l| l >= lo && l <= hi).collect();
    let at_eigs = eigs.iter().map(|&t| reduced_smin(&a, &b, &c, &d, t)).collect::<Result<Vec<_>>>()?;
    let floor = vals.iter().chain(&at_eigs).map(|x| x.1).fold(f64::INFINITY, f64::min);
    if floor < 1e-8 {
        return Err(Error::ConditionTwoFails(floor));
    }
    let sv: Vec<f64> = vals.iter().map(|x| x.0).collect();
    let mut roots = Vec::new();
    for i in 0..sv.len() {
        let left = if i > 0 { sv[i - 1] } else { f64::INFINITY };
        let right = if i + 1 < sv.len() { sv[i + 1] } else { f64::INFINITY };
        if sv[i] <= left && sv[i] <= right && sv[i] < 2.0 * step {
            roots.push(t_grid[i]);
        }
    }
    let nearest = |x: f64, set: &[f64]| set.iter().map(|&y| (y - x).abs()).fold(f64::INFINITY, f64::min);
    let matching: Vec<(f64, f64)> = eigs
        .iter()
        .map(|&e| {
            let r = roots.iter().copied().min_by(|x, y| (x - e).abs().total_cmp(&(y - e).abs())).unwrap_or(f64::NAN);
            (e, r)
        })
        .collect();
    let eig_ok = at_eigs.iter().all(|x| x.0 < 1e-6);
    let forward = eigs.iter().all(|&e| nearest(e, &roots) <= 2.0 * step);
    let backward = roots.iter().all(|&r| nearest(r, &eigs) <= 2.0 * step);
    Ok(SchurReport {
        window,
        t_grid,
        singular_values: sv,
        eigenvalues: eigs.iter().zip(&at_eigs).map(|(&e, x)| (e, x.0)).collect(),
        roots,
        matching,
        complement_floor: floor,
        passed: eig_ok && forward && backward,
    })
}

/// A real function with derivatives and compact support.
pub trait SmoothFunction: Sync {
    /// `k`-th derivative at `x`.
    fn deriv(&self, x: f64, k: usize) -> f64;
    fn support(&self) -> (f64, f64);
    fn value(&self, x: f64) -> f64 {
        self.deriv(x, 0)
    }
    /// Points where the function is only finitely smooth.
    fn breaks(&self) -> Vec<f64> {
        let (a, b) = self.support();
        vec![a, b]
    }
}

/// Zero function.
pub struct ZeroFunction;

impl SmoothFunction for ZeroFunction {
    fn deriv(&self, _: f64, _: usize) -> f64 {
        0.0
    }
    fn support(&self) -> (f64, f64) {
        (0.0, 0.0)
    }
}

/// Polynomial with coefficients in increasing degree.
#[derive(Clone, Debug)]
struct Poly(Vec<f64>);

impl Poly {
    fn eval(&self, t: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, &c| acc * t + c)
    }

    fn derivative(&self) -> Poly {
        Poly(self.0.iter().enumerate().skip(1).map(|(i, &c)| c * i as f64).collect())
    }
}

fn binom(n: u64, k: u64) -> f64 {
    (1..=k).fold(1.0, |acc, i| acc * (n + 1 - i) as f64 / i as f64)
}

/// Smoothstep of order `n`: `0` at `t <= 0`, `1` at `t >= 1`, `C^n` at both ends.
fn smoothstep(n: u64) -> Poly {
    let mut c = vec![0.0; (2 * n + 2) as usize];
    for k in 0..=n {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        c[(n + 1 + k) as usize] = sign * binom(n + k, k) * binom(2 * n + 1, n - k);
    }
    Poly(c)
}

/// `1` on `[a, b]`, `0` outside `[a - ramp, b + ramp]`, with `C^5` polynomial ramps.
#[derive(Clone, Debug)]
pub struct PlateauBump {
    pub a: f64,
    pub b: f64,
    pub ramp: f64,
    derivs: Vec<Poly>,
}

impl PlateauBump {
    pub fn new(a: f64, b: f64, ramp: f64) -> Self {
        assert!(a <= b && ramp > 0.0);
        let mut derivs = vec![smoothstep(5)];
        for k in 0..8 {
            let d = derivs[k].derivative();
            derivs.push(d);
        }
        Self { a, b, ramp, derivs }
    }
}

impl SmoothFunction for PlateauBump {
    fn deriv(&self, x: f64, k: usize) -> f64 {
        let r = self.ramp;
        if x <= self.a - r || x >= self.b + r {
            return 0.0;
        }
        if x >= self.a && x <= self.b {
            return if k == 0 { 1.0 } else { 0.0 };
        }
        if k >= self.derivs.len() {
            return 0.0;
        }
        if x < self.a {
            self.derivs[k].eval((x - self.a + r) / r) / r.powi(k as i32)
        } else {
            let s = if k % 2 == 0 { 1.0 } else { -1.0 };
            s * self.derivs[k].eval((self.b + r - x) / r) / r.powi(k as i32)
        }
    }

    fn support(&self) -> (f64, f64) {
        (self.a - self.ramp, self.b + self.ramp)
    }

    fn breaks(&self) -> Vec<f64> {
        vec![self.a - self.ramp, self.a, self.b, self.b + self.ramp]
    }
}

/// `C^2` cutoff: `1` on `|y| <= 1`, `0` on `|y| >= 2`, and its derivative.
fn cutoff(y: f64) -> (f64, f64) {
    let t = 2.0 - y.abs();
    if t <= 0.0 {
        (0.0, 0.0)
    } else if t >= 1.0 {
        (1.0, 0.0)
    } else {
        let s = t * t * t * (10.0 - 15.0 * t + 6.0 * t * t);
        let ds = 30.0 * t * t * (1.0 - t) * (1.0 - t);
        (s, -y.signum() * ds)
    }
}

/// `d/dz-bar` of the order-`n` almost-analytic extension of `f`.
fn dbar_extension(f: &dyn SmoothFunction, n: usize, x: f64, y: f64) -> c64 {
    let (chi, dchi) = cutoff(y);
    let iy = c64::new(0.0, y);
    let mut pow = ONE;
    let mut fact = 1.0;
    let mut sum = ZERO;
    for k in 0..=n {
        if k > 0 {
            pow *= iy;
            fact *= k as f64;
        }
        sum += pow * (f.deriv(x, k) / fact);
    }
    let top = pow * (f.deriv(x, n + 1) / fact);
    0.5 * (top * chi + c64::new(0.0, 1.0) * sum * dchi)
}

fn graded_breaks(lo: f64, hi: f64, focus: f64, levels: usize, extra: &[f64]) -> Vec<f64> {
    let mut pts = vec![lo, hi];
    pts.extend(extra.iter().copied().filter(|&p| p > lo && p < hi));
    if focus > lo && focus < hi {
        pts.push(focus);
        let span = (hi - lo).max(1e-300);
        for j in 0..levels {
            let h = span * 0.5f64.powi(j as i32 + 1);
            for p in [focus - h, focus + h] {
                if p > lo && p < hi {
                    pts.push(p);
                }
            }
        }
    }
    pts.sort_by(f64::total_cmp);
    pts.dedup_by(|a, b| (*a - *b).abs() < 1e-15);
    pts
}

/// Scalar Helffer–Sjöstrand integral `(1/pi) int dbar f~(z) / (lambda - z) dx dy`.
pub fn hs_scalar(f: &dyn SmoothFunction, n: usize, lambda: f64) -> f64 {
    let (a, b) = f.support();
    if !(b > a) {
        return 0.0;
    }
    let gl = GaussLegendre::new(16);
    let mut kinks = Vec::new();
    for w in f.breaks().windows(2) {
        kinks.extend((0..8).map(|j| w[0] + (w[1] - w[0]) * j as f64 / 8.0));
    }
    let xb = graded_breaks(a, b, lambda, 30, &kinks);
    let yb = graded_breaks(-2.0, 2.0, 0.0, 30, &[-1.0, 1.0]);
    let mut total = ZERO;
    for xs in xb.windows(2) {
        for ys in yb.windows(2) {
            let (hx, hy) = (xs[1] - xs[0], ys[1] - ys[0]);
            for (tx, wx) in gl.nodes.iter().zip(&gl.weights) {
                let x = xs[0] + hx * tx;
                for (ty, wy) in gl.nodes.iter().zip(&gl.weights) {
                    let y = ys[0] + hy * ty;
                    let z = c64::new(x, y);
                    total += dbar_extension(f, n, x, y) / (c64::new(lambda, 0.0) - z) * (wx * wy * hx * hy);
                }
            }
        }
    }
    total.re / std::f64::consts::PI
}

/// `f(H)` through the Helffer–Sjöstrand formula, evaluated per eigenvalue.
pub fn hs_function_of_matrix(h: &CMat, f: &dyn SmoothFunction, n: usize) -> CMat {
    let (vals, vecs) = linalg::eigh(h.as_ref());
    let fv: Vec<f64> = vals.par_iter().map(|&l| hs_scalar(f, n, l)).collect();
    let d = vals.len();
    let scaled = Mat::from_fn(vecs.nrows(), d, |i, j| vecs[(i, j)] * fv[j]);
    &scaled * vecs.adjoint()
}

/// `|P f(H) - f(H)|`, with `f(H)` by spectral calculus; `supp f` must lie in `J^delta`.
pub fn band_window_estimate(p: &DenseOperator, h: &DenseOperator, f: &dyn SmoothFunction, window: &SpectralWindow) -> Result<f64> {
    let (lo, hi) = f.support();
    let (wl, wh) = window.j_delta();
    if hi > lo && (lo < wl || hi > wh) {
        return Err(Error::SupportViolation { lo, hi, window_lo: wl, window_hi: wh });
    }
    let fh = h.herm_fn(|l| c64::new(f.value(l), 0.0));
    Ok(p.mul(&fh).sub(&fh).op_norm())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn smoothstep_has_flat_ends() {
        let s = smoothstep(5);
        assert!((s.eval(1.0) - 1.0).abs() < 1e-12 && s.eval(0.0).abs() < 1e-15);
        let mut d = s.derivative();
        for _ in 1..=5 {
            assert!(d.eval(0.0).abs() < 1e-9 && d.eval(1.0).abs() < 1e-9);
            d = d.derivative();
        }
    }

    #[test]
    fn plateau_derivatives_match_differences() {
        let f = PlateauBump::new(0.0, 1.0, 0.5);
        for &x in &[-0.4, -0.2, 1.1, 1.37] {
            for k in 0..3 {
                let h = 1e-5;
                let fd = (f.deriv(x + h, k) - f.deriv(x - h, k)) / (2.0 * h);
                assert!((fd - f.deriv(x, k + 1)).abs() < 1e-4 * (1.0 + fd.abs()), "x={x} k={k}");
            }
        }
    }
}
