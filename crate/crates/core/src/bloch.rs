//! Band structure on the Brillouin grid, isolated families, family projections
//! and Chern numbers.

use crate::error::{Error, Result};
use crate::linalg::{self, c64, cis, CMat, ZERO};
use crate::model::{HoppingTable, ReciprocalGrid};
use crate::sequence::BlockSequence;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Clone, Debug)]
pub struct BandStructure {
    pub grid: ReciprocalGrid,
    /// Ascending eigenvalues per grid point.
    pub eigenvalues: Vec<Vec<f64>>,
    /// Eigenvectors (columns) per grid point.
    pub eigenvectors: Vec<CMat>,
    /// Fibers, kept for the family Hamiltonian.
    pub fibers: Vec<CMat>,
}

pub fn compute_bands(h: &HoppingTable, grid: &ReciprocalGrid) -> BandStructure {
    let per: Vec<(Vec<f64>, CMat, CMat)> = (0..grid.len())
        .into_par_iter()
        .map(|i| {
            let f = h.fiber(&grid.theta(i));
            let (v, u) = linalg::eigh(f.as_ref());
            (v, u, f)
        })
        .collect();
    let mut eigenvalues = Vec::with_capacity(per.len());
    let mut eigenvectors = Vec::with_capacity(per.len());
    let mut fibers = Vec::with_capacity(per.len());
    for (v, u, f) in per {
        eigenvalues.push(v);
        eigenvectors.push(u);
        fibers.push(f);
    }
    BandStructure { grid: *grid, eigenvalues, eigenvectors, fibers }
}

impl BandStructure {
    pub fn orbitals(&self) -> usize {
        self.eigenvalues[0].len()
    }

    /// Max residual `|H v - lambda v| / |H|` over all pairs.
    pub fn residual(&self) -> f64 {
        let mut worst = 0.0f64;
        for ((f, vals), vecs) in self.fibers.iter().zip(&self.eigenvalues).zip(&self.eigenvectors) {
            let hv = f * vecs;
            let scale = linalg::op_norm(f.as_ref()).max(1e-300);
            for (j, l) in vals.iter().enumerate() {
                let r: f64 = (0..hv.nrows()).map(|i| (hv[(i, j)] - vecs[(i, j)] * *l).norm_sqr()).sum();
                worst = worst.max(r.sqrt() / scale);
            }
        }
        worst
    }

    /// Band CSV: `theta_1..theta_d, lambda_1..lambda_M`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let d = self.grid.dim;
        let m = self.orbitals();
        let head: Vec<String> = (1..=d).map(|i| format!("theta_{i}")).chain((1..=m).map(|i| format!("lambda_{i}"))).collect();
        writeln!(w, "{}", head.join(","))?;
        for (i, vals) in self.eigenvalues.iter().enumerate() {
            let row: Vec<String> = self.grid.theta(i).iter().chain(vals).map(|v| format!("{v:.15e}")).collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Indices and gap data of an isolated family of bands `k0 ..= k0 + n` (1-based).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IsolatedFamily {
    pub k0: usize,
    #[serde(rename = "N")]
    pub n: usize,
    /// `sup lambda_{k0-1}`; `-inf` (serialized as null) when `k0 = 1`.
    #[serde(rename = "E_minus", with = "infinite_as_null")]
    pub e_minus: f64,
    /// `inf lambda_{k0+N+1}`; `+inf` (null) when the family contains the top band.
    #[serde(rename = "E_plus", with = "infinite_as_null")]
    pub e_plus: f64,
    #[serde(with = "infinite_as_null")]
    pub d0: f64,
    pub g_local: f64,
    /// Range of the family itself.
    pub family_min: f64,
    pub family_max: f64,
}

mod infinite_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::INFINITY))
    }
}

impl IsolatedFamily {
    pub fn rank(&self) -> usize {
        self.n + 1
    }

    /// Finite stand-ins for the edges: an infinite edge is replaced by the
    /// family's own extreme value, where the spectrum ends anyway.
    pub fn finite_edges(&self) -> (f64, f64) {
        let lo = if self.e_minus.is_finite() { self.e_minus } else { self.family_min };
        let hi = if self.e_plus.is_finite() { self.e_plus } else { self.family_max };
        (lo, hi)
    }
}

pub fn detect_isolated_family(bands: &BandStructure, k0: usize, n: usize, gap_tol: f64) -> Result<IsolatedFamily> {
    let m = bands.orbitals();
    if k0 < 1 || k0 + n > m {
        return Err(Error::InvalidArgument(format!("family k0={k0}, N={n} out of range for {m} bands")));
    }
    let lo = k0 - 1;
    let hi = k0 - 1 + n;
    let mut e_minus = f64::NEG_INFINITY;
    let mut e_plus = f64::INFINITY;
    let mut g_local = f64::INFINITY;
    let mut worst = 0;
    let mut family_min = f64::INFINITY;
    let mut family_max = f64::NEG_INFINITY;
    for (i, l) in bands.eigenvalues.iter().enumerate() {
        family_min = family_min.min(l[lo]);
        family_max = family_max.max(l[hi]);
        let mut g = f64::INFINITY;
        if lo > 0 {
            e_minus = e_minus.max(l[lo - 1]);
            g = g.min(l[lo] - l[lo - 1]);
        }
        if hi + 1 < m {
            e_plus = e_plus.min(l[hi + 1]);
            g = g.min(l[hi + 1] - l[hi]);
        }
        if g < g_local {
            g_local = g;
            worst = i;
        }
    }
    if g_local <= gap_tol {
        return Err(Error::NotIsolated {
            theta: bands.grid.theta(worst),
            reason: format!("local gap {g_local:e} <= {gap_tol:e}"),
        });
    }
    if e_minus >= e_plus {
        let i = bands
            .eigenvalues
            .iter()
            .position(|l| lo > 0 && l[lo - 1] == e_minus)
            .unwrap_or(0);
        return Err(Error::NotIsolated {
            theta: bands.grid.theta(i),
            reason: format!("E_minus = {e_minus} >= E_plus = {e_plus}"),
        });
    }
    Ok(IsolatedFamily {
        k0,
        n,
        e_minus,
        e_plus,
        d0: e_plus - e_minus,
        g_local,
        family_min,
        family_max,
    })
}

/// Riesz projection `-(2 pi i)^{-1} \oint (H - z)^{-1} dz` on the circle
/// `|z - center| = radius` by the trapezoidal rule.
pub fn eigenprojection_riesz(h: &CMat, center: f64, radius: f64, n_nodes: usize, dist_tol: f64) -> Result<CMat> {
    for l in linalg::eigvalsh(h.as_ref()) {
        let dist = ((l - center).abs() - radius).abs();
        if dist < dist_tol {
            return Err(Error::EigenvalueOnContour { eigenvalue: l, distance: dist });
        }
    }
    let n = h.nrows();
    let mut p = linalg::zeros(n, n);
    for j in 0..n_nodes {
        let w = cis(2.0 * PI * (j as f64 + 0.5) / n_nodes as f64);
        let z = c64::new(center, 0.0) + w * radius;
        let a = Mat::from_fn(n, n, |r, s| if r == s { h[(r, s)] - z } else { h[(r, s)] });
        let res = linalg::inverse(a.as_ref())?;
        let f = w * (-radius / n_nodes as f64);
        p += linalg::scale(res.as_ref(), f);
    }
    Ok(p)
}

/// Sum of `v v^*` over the eigenvector columns `cols` of `vecs`.
pub fn spectral_sum(vecs: &CMat, cols: std::ops::Range<usize>) -> CMat {
    let v = Mat::from_fn(vecs.nrows(), cols.len(), |i, j| vecs[(i, cols.start + j)]);
    &v * v.adjoint()
}

/// Family projection `P(theta)` and family Hamiltonian `P H P` on the grid.
#[derive(Clone, Debug)]
pub struct ProjectionField {
    pub grid: ReciprocalGrid,
    pub rank: usize,
    pub proj: Vec<CMat>,
    pub hb: Vec<CMat>,
    /// Max disagreement between the spectral-sum and contour routes.
    pub riesz_agreement: f64,
}

pub fn band_projection_field(bands: &BandStructure, family: &IsolatedFamily) -> Result<ProjectionField> {
    let m = bands.orbitals();
    let lo = family.k0 - 1;
    let hi = lo + family.n;
    let per: Vec<Result<(CMat, CMat, f64)>> = (0..bands.grid.len())
        .into_par_iter()
        .map(|i| {
            let l = &bands.eigenvalues[i];
            let p = spectral_sum(&bands.eigenvectors[i], lo..hi + 1);
            let mut gap = f64::INFINITY;
            if lo > 0 {
                gap = gap.min(l[lo] - l[lo - 1]);
            }
            if hi + 1 < m {
                gap = gap.min(l[hi + 1] - l[hi]);
            }
            if !gap.is_finite() {
                gap = 2.0;
            }
            let center = 0.5 * (l[lo] + l[hi]);
            let radius = 0.5 * (l[hi] - l[lo]) + 0.5 * gap;
            let pr = eigenprojection_riesz(&bands.fibers[i], center, radius, 64, 1e-6)?;
            let agree = linalg::max_abs((&pr - &p).as_ref());
            let hb = &(&p * &bands.fibers[i]) * &p;
            Ok((p, hb, agree))
        })
        .collect();
    let mut proj = Vec::with_capacity(per.len());
    let mut hb = Vec::with_capacity(per.len());
    let mut agreement = 0.0f64;
    for r in per {
        let (p, h, a) = r?;
        proj.push(p);
        hb.push(h);
        agreement = agreement.max(a);
    }
    Ok(ProjectionField { grid: bands.grid, rank: family.rank(), proj, hb, riesz_agreement: agreement })
}

impl ProjectionField {
    /// Max of `|P^2 - P|`, `|P - P^*|` and `|tr P - rank|` over the grid.
    pub fn defects(&self) -> (f64, f64, f64) {
        let mut idem = 0.0f64;
        let mut herm = 0.0f64;
        let mut tr = 0.0f64;
        for p in &self.proj {
            idem = idem.max(linalg::max_abs((&(p * p) - p).as_ref()));
            herm = herm.max(linalg::herm_defect(p.as_ref()));
            let t: f64 = (0..p.nrows()).map(|i| p[(i, i)].re).sum();
            tr = tr.max((t - self.rank as f64).abs());
        }
        (idem, herm, tr)
    }

    /// Fourier coefficients of the projection field (decay diagnostic).
    pub fn projection_coefficients(&self, radius: usize) -> Result<BlockSequence> {
        self.grid.coefficients(&self.proj, radius)
    }
}

/// Plaquette-product Chern number. Orientation: `C = (2 pi)^{-1} sum F` with
/// `F = arg(U_1(t) U_2(t + e_1) conj(U_1(t + e_2)) conj(U_2(t)))` and link
/// variables `U_mu(t) = det(V(t)^* V(t + e_mu))`.
pub fn chern_number(field: &ProjectionField) -> Result<i64> {
    if field.grid.dim != 2 {
        return Err(Error::NotTwoDimensional);
    }
    let bases: Vec<CMat> = field.proj.par_iter().map(|p| linalg::projection_bases(p.as_ref()).0).collect();
    let link = |a: usize, b: usize| -> c64 {
        let o = bases[a].adjoint() * &bases[b];
        let d = determinant(&o);
        if d.norm() == 0.0 {
            c64::new(1.0, 0.0)
        } else {
            d / d.norm()
        }
    };
    let g = &field.grid;
    let total: f64 = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let j = g.index(i);
            let e1 = g.flat([j[0] + 1, j[1]]);
            let e2 = g.flat([j[0], j[1] + 1]);
            let e12 = g.flat([j[0] + 1, j[1] + 1]);
            let w = link(i, e1) * link(e1, e12) * link(e2, e12).conj() * link(i, e2).conj();
            w.arg()
        })
        .sum();
    Ok((total / (2.0 * PI)).round() as i64)
}

/// Determinant by Gaussian elimination with partial pivoting (small matrices).
pub fn determinant(a: &CMat) -> c64 {
    let n = a.nrows();
    let mut m = a.clone();
    let mut det = c64::new(1.0, 0.0);
    for k in 0..n {
        let p = (k..n).max_by(|&x, &y| m[(x, k)].norm().total_cmp(&m[(y, k)].norm())).unwrap();
        if m[(p, k)].norm() == 0.0 {
            return ZERO;
        }
        if p != k {
            for j in 0..n {
                let t = m[(k, j)];
                m[(k, j)] = m[(p, j)];
                m[(p, j)] = t;
            }
            det = -det;
        }
        det *= m[(k, k)];
        for i in (k + 1)..n {
            let f = m[(i, k)] / m[(k, k)];
            for j in k..n {
                let t = m[(k, j)];
                m[(i, j)] -= f * t;
            }
        }
    }
    det
}

/// Fourier kernel of the family Hamiltonian, `K(gamma) = n_k^{-d} sum e^{i theta gamma} H_B(theta)`.
pub fn band_kernel(field: &ProjectionField, radius: usize) -> Result<BlockSequence> {
    field.grid.coefficients(&field.hb, radius)
}

/// JSON family report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FamilyReport {
    #[serde(flatten)]
    pub family: IsolatedFamily,
    pub chern: Option<i64>,
}
