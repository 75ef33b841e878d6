//! Finite boxes, magnetic-periodic wrapping and the supercell sector decomposition.
//!
//! A magnetic-periodic box holds quasi-periodic functions, `f = chi(a) T_a f` for
//! `a` in `L Z^2`, where `T_a f(x) = Lambda(x, a) f(x - a)` and
//! `chi(a) = (-1)^(n a_1 a_2 / (L_1 L_2))` with `n = flux L_1 L_2 / 2 pi`.
//! Kernel operators `K(x, y)` are folded onto the box with these phases.
//!
//! Operators commuting with the Zak translations by a supercell `s` are stored as
//! one dense block per joint eigenspace ("sector") of those translations. The whole
//! box as a single sector is the plain dense matrix.

use crate::error::{Error, Result};
use crate::linalg::{self, c64, cis, CMat, ONE, ZERO};
use crate::phases::MagneticSetup;
use faer::Mat;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

/// Lattice point; the second component is zero in one dimension.
pub type Site = [i64; 2];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Open,
    MagneticPeriodic,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct LatticeBox {
    pub dim: usize,
    pub sides: [usize; 2],
    pub boundary: Boundary,
}

impl LatticeBox {
    /// Cube of side `l` in dimension `dim`.
    pub fn new(dim: usize, l: usize, boundary: Boundary) -> Self {
        assert!(dim == 1 || dim == 2, "only d = 1, 2 boxes are supported");
        let sides = if dim == 1 { [l, 1] } else { [l, l] };
        Self { dim, sides, boundary }
    }

    pub fn periodic(dim: usize, l: usize) -> Self {
        Self::new(dim, l, Boundary::MagneticPeriodic)
    }

    pub fn open(dim: usize, l: usize) -> Self {
        Self::new(dim, l, Boundary::Open)
    }

    pub fn volume(&self) -> usize {
        self.sides[0] * self.sides[1]
    }

    pub fn is_periodic(&self) -> bool {
        self.boundary == Boundary::MagneticPeriodic
    }

    /// Lexicographic enumeration, last axis fastest.
    pub fn site(&self, i: usize) -> Site {
        [(i / self.sides[1]) as i64, (i % self.sides[1]) as i64]
    }

    pub fn index(&self, s: Site) -> usize {
        s[0] as usize * self.sides[1] + s[1] as usize
    }

    pub fn contains(&self, s: Site) -> bool {
        (0..2).all(|i| s[i] >= 0 && s[i] < self.sides[i] as i64)
    }

    pub fn center(&self) -> Site {
        [(self.sides[0] / 2) as i64, (self.sides[1] / 2) as i64]
    }

    /// Representative of `v` modulo the box periods in `[-L/2, L/2)`.
    pub fn min_image(&self, v: Site) -> Site {
        let mut out = v;
        for i in 0..2 {
            let l = self.sides[i] as i64;
            let mut r = v[i].rem_euclid(l);
            if 2 * r >= l {
                r -= l;
            }
            out[i] = r;
        }
        out
    }

    pub fn sites(&self) -> impl Iterator<Item = Site> + '_ {
        (0..self.volume()).map(move |i| self.site(i))
    }
}

pub fn point(dim: usize, s: Site) -> Vec<f64> {
    s[..dim].iter().map(|&v| v as f64).collect()
}

fn add(a: Site, b: Site) -> Site {
    [a[0] + b[0], a[1] + b[1]]
}

fn sub(a: Site, b: Site) -> Site {
    [a[0] - b[0], a[1] - b[1]]
}

/// A box together with the field; knows every phase needed on the box.
#[derive(Clone, Debug)]
pub struct Geometry {
    pub lbox: LatticeBox,
    pub setup: MagneticSetup,
    flux: f64,
    n_flux: i64,
}

impl Geometry {
    pub fn new(lbox: LatticeBox, setup: MagneticSetup) -> Result<Self> {
        if setup.dim() != lbox.dim {
            return Err(Error::ShapeMismatch(format!(
                "field dimension {} on a {}-dimensional box",
                setup.dim(),
                lbox.dim
            )));
        }
        let flux = setup.flux();
        let mut n_flux = 0;
        if lbox.is_periodic() {
            for axis in 0..lbox.dim {
                let r = flux * lbox.sides[axis] as f64 / (2.0 * PI);
                if (r - r.round()).abs() > 1e-9 {
                    return Err(Error::IncommensurateFlux(format!(
                        "flux {flux} times side {} is not a multiple of 2 pi",
                        lbox.sides[axis]
                    )));
                }
            }
            let total = flux * lbox.volume() as f64 / (2.0 * PI);
            n_flux = total.round() as i64;
            if setup.has_fluct() {
                let per = setup
                    .fluct
                    .lattice_period(lbox.dim, lbox.sides[0].max(lbox.sides[1]))
                    .ok_or_else(|| Error::IncommensurateFlux("fluctuation potential is not lattice periodic".into()))?;
                for axis in 0..lbox.dim {
                    if lbox.sides[axis] % per[axis] != 0 {
                        return Err(Error::IncommensurateFlux(format!(
                            "fluctuation period {} does not divide side {}",
                            per[axis], lbox.sides[axis]
                        )));
                    }
                }
            }
        }
        Ok(Self { lbox, setup, flux, n_flux })
    }

    pub fn dim(&self) -> usize {
        self.lbox.dim
    }

    pub fn flux(&self) -> f64 {
        self.flux
    }

    /// Constant-field phase between lattice points.
    pub fn lam_const(&self, x: Site, y: Site) -> c64 {
        if self.flux == 0.0 {
            return ONE;
        }
        cis(-0.5 * self.flux * (x[0] * y[1] - x[1] * y[0]) as f64)
    }

    pub fn lam_fluct(&self, x: Site, y: Site) -> c64 {
        if !self.setup.has_fluct() {
            return ONE;
        }
        let d = self.dim();
        self.setup.lambda_fluct(&point(d, x), &point(d, y))
    }

    pub fn lam(&self, x: Site, y: Site) -> c64 {
        self.lam_const(x, y) * self.lam_fluct(x, y)
    }

    fn chi(&self, a: Site) -> f64 {
        let k0 = a[0] / self.lbox.sides[0] as i64;
        let k1 = a[1] / self.lbox.sides[1] as i64;
        if (self.n_flux * k0 * k1).rem_euclid(2) == 0 {
            1.0
        } else {
            -1.0
        }
    }

    /// Box index `w` and phase `p` with `f(y) = p f(w)` for quasi-periodic `f`;
    /// `None` outside an open box.
    pub fn wrap(&self, y: Site) -> Option<(usize, c64)> {
        let lb = &self.lbox;
        if lb.contains(y) {
            return Some((lb.index(y), ONE));
        }
        if !lb.is_periodic() {
            return None;
        }
        let w = [y[0].rem_euclid(lb.sides[0] as i64), y[1].rem_euclid(lb.sides[1] as i64)];
        let a = sub(y, w);
        Some((lb.index(w), self.lam_const(w, a) * self.chi(a)))
    }

    /// Zak translation `(T_a f)(x) = Lambda(x, a) f(x - a)` of a box vector with
    /// `m` orbitals per site.
    pub fn zak(&self, a: Site, f: &[c64], m: usize) -> Vec<c64> {
        let lb = &self.lbox;
        let mut out = vec![ZERO; f.len()];
        for i in 0..lb.volume() {
            let x = lb.site(i);
            if let Some((j, ph)) = self.wrap(sub(x, a)) {
                let p = self.lam_const(x, a) * ph;
                for o in 0..m {
                    out[i * m + o] = p * f[j * m + o];
                }
            }
        }
        out
    }

    /// Multiplication by `x -> Lambda~(x, alpha)`, with `x` taken as the periodic
    /// image nearest to `alpha`.
    pub fn fluct_multiply(&self, alpha: Site, f: &[c64], m: usize) -> Vec<c64> {
        if !self.setup.has_fluct() {
            return f.to_vec();
        }
        let lb = &self.lbox;
        let mut out = f.to_vec();
        for i in 0..lb.volume() {
            let x = add(alpha, lb.min_image(sub(lb.site(i), alpha)));
            let p = self.lam_fluct(x, alpha);
            for o in 0..m {
                out[i * m + o] *= p;
            }
        }
        out
    }

    /// Smallest supercell whose Zak translations commute with each other and with
    /// every operator built from this field (balanced shape preferred).
    pub fn supercell(&self) -> [usize; 2] {
        let lb = &self.lbox;
        if !lb.is_periodic() {
            return lb.sides;
        }
        let per = if self.setup.has_fluct() {
            self.setup
                .fluct
                .lattice_period(lb.dim, lb.sides[0].max(lb.sides[1]))
                .map(|p| if p.len() == 1 { [p[0], 1] } else { [p[0], p[1]] })
                .unwrap_or(lb.sides)
        } else {
            [1, 1]
        };
        let divisors = |l: usize, p: usize| (1..=l).filter(move |d| l % d == 0 && d % p == 0);
        let mut best = lb.sides;
        for s0 in divisors(lb.sides[0], per[0]) {
            for s1 in divisors(lb.sides[1], per[1]) {
                let r = self.flux * (s0 * s1) as f64 / (2.0 * PI);
                if (r - r.round()).abs() > 1e-9 {
                    continue;
                }
                let key = |s: [usize; 2]| (s[0] * s[1], s[0].max(s[1]));
                if key([s0, s1]) < key(best) {
                    best = [s0, s1];
                }
            }
        }
        best
    }
}

/// Sector structure of box vectors with `orbitals` components per site.
pub struct SectorLayout {
    pub geom: Geometry,
    pub orbitals: usize,
    pub s: [usize; 2],
    pub nsec: [usize; 2],
    cell: Vec<Site>,
    phases: Vec<c64>,
    fft_fwd: [Arc<dyn Fft<f64>>; 2],
    fft_inv: [Arc<dyn Fft<f64>>; 2],
}

impl std::fmt::Debug for SectorLayout {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SectorLayout")
            .field("box", &self.geom.lbox)
            .field("orbitals", &self.orbitals)
            .field("s", &self.s)
            .finish()
    }
}

impl SectorLayout {
    /// Layout with the smallest admissible supercell.
    pub fn new(geom: Geometry, orbitals: usize) -> Arc<Self> {
        let s = geom.supercell();
        Self::with_supercell(geom, orbitals, s)
    }

    /// Single sector: the plain dense representation.
    pub fn dense(geom: Geometry, orbitals: usize) -> Arc<Self> {
        let s = geom.lbox.sides;
        Self::with_supercell(geom, orbitals, s)
    }

    pub fn with_supercell(geom: Geometry, orbitals: usize, s: [usize; 2]) -> Arc<Self> {
        let lb = geom.lbox.clone();
        assert!(lb.sides[0] % s[0] == 0 && lb.sides[1] % s[1] == 0, "supercell must tile the box");
        let nsec = [lb.sides[0] / s[0], lb.sides[1] / s[1]];
        let cell: Vec<Site> = (0..s[0] * s[1])
            .map(|i| [(i / s[1]) as i64, (i % s[1]) as i64])
            .collect();
        let k = nsec[0] * nsec[1];
        let mut phases = Vec::with_capacity(k * cell.len());
        for nf in 0..k {
            let alpha = [((nf / nsec[1]) * s[0]) as i64, 0];
            let beta = [0, ((nf % nsec[1]) * s[1]) as i64];
            let pre = geom.lam_const(beta, alpha);
            for &r in &cell {
                phases.push(pre * geom.lam_const(r, add(alpha, beta)));
            }
        }
        let mut planner = FftPlanner::new();
        let fft_fwd = [planner.plan_fft_forward(nsec[0]), planner.plan_fft_forward(nsec[1])];
        let fft_inv = [planner.plan_fft_inverse(nsec[0]), planner.plan_fft_inverse(nsec[1])];
        Arc::new(Self { geom, orbitals, s, nsec, cell, phases, fft_fwd, fft_inv })
    }

    /// Same sector structure for a different number of components per site.
    pub fn with_orbitals(&self, orbitals: usize) -> Arc<Self> {
        Self::with_supercell(self.geom.clone(), orbitals, self.s)
    }

    pub fn lbox(&self) -> &LatticeBox {
        &self.geom.lbox
    }

    pub fn n_sectors(&self) -> usize {
        self.nsec[0] * self.nsec[1]
    }

    pub fn cell(&self) -> &[Site] {
        &self.cell
    }

    pub fn block_dim(&self) -> usize {
        self.cell.len() * self.orbitals
    }

    /// Full dimension `volume * orbitals`.
    pub fn dim(&self) -> usize {
        self.geom.lbox.volume() * self.orbitals
    }

    /// Sector momenta `(k_0, k_1)` of sector `k`.
    pub fn momentum(&self, k: usize) -> [f64; 2] {
        [
            2.0 * PI * (k / self.nsec[1]) as f64 / self.nsec[0] as f64,
            2.0 * PI * (k % self.nsec[1]) as f64 / self.nsec[1] as f64,
        ]
    }

    /// Translation index `n` of the supercell copy holding box site `x`, with the
    /// cell index of its reference site.
    pub fn split(&self, x: Site) -> (usize, usize) {
        let n = [x[0] as usize / self.s[0], x[1] as usize / self.s[1]];
        let r = [x[0] as usize % self.s[0], x[1] as usize % self.s[1]];
        (n[0] * self.nsec[1] + n[1], r[0] * self.s[1] + r[1])
    }

    pub fn box_index(&self, nf: usize, ci: usize) -> usize {
        let r = self.cell[ci];
        let x = [
            r[0] + ((nf / self.nsec[1]) * self.s[0]) as i64,
            r[1] + ((nf % self.nsec[1]) * self.s[1]) as i64,
        ];
        self.geom.lbox.index(x)
    }

    /// Phase relating `T_{s n}` (as the product of axis translations) applied to
    /// the delta at cell site `ci`.
    pub fn cell_phase(&self, nf: usize, ci: usize) -> c64 {
        self.phases[nf * self.cell.len() + ci]
    }

    /// In-place 2D DFT over the translation index, `sign = +1` for `e^{+i k n}`.
    pub fn dft(&self, data: &mut [c64], stride: usize, sign: i32) {
        let (n0, n1) = (self.nsec[0], self.nsec[1]);
        let plans = if sign > 0 { &self.fft_inv } else { &self.fft_fwd };
        let mut buf = vec![ZERO; n0.max(n1)];
        for comp in 0..stride {
            if n1 > 1 {
                for a in 0..n0 {
                    for b in 0..n1 {
                        buf[b] = data[(a * n1 + b) * stride + comp];
                    }
                    plans[1].process(&mut buf[..n1]);
                    for b in 0..n1 {
                        data[(a * n1 + b) * stride + comp] = buf[b];
                    }
                }
            }
            if n0 > 1 {
                for b in 0..n1 {
                    for a in 0..n0 {
                        buf[a] = data[(a * n1 + b) * stride + comp];
                    }
                    plans[0].process(&mut buf[..n0]);
                    for a in 0..n0 {
                        data[(a * n1 + b) * stride + comp] = buf[a];
                    }
                }
            }
        }
    }

    /// Coordinates of a box vector in the sector bases, sector-major.
    pub fn fold(&self, v: &[c64]) -> Vec<c64> {
        let m = self.orbitals;
        let bd = self.block_dim();
        let k = self.n_sectors();
        assert_eq!(v.len(), self.dim(), "vector length does not match layout");
        let mut data = vec![ZERO; k * bd];
        for nf in 0..k {
            for ci in 0..self.cell.len() {
                let ph = self.cell_phase(nf, ci).conj();
                let xi = self.box_index(nf, ci);
                for o in 0..m {
                    data[nf * bd + ci * m + o] = ph * v[xi * m + o];
                }
            }
        }
        self.dft(&mut data, bd, 1);
        let norm = 1.0 / (k as f64).sqrt();
        data.iter_mut().for_each(|z| *z *= norm);
        data
    }

    pub fn unfold(&self, w: &[c64]) -> Vec<c64> {
        let m = self.orbitals;
        let bd = self.block_dim();
        let k = self.n_sectors();
        assert_eq!(w.len(), k * bd, "folded vector length does not match layout");
        let mut data = w.to_vec();
        self.dft(&mut data, bd, -1);
        let norm = 1.0 / (k as f64).sqrt();
        let mut v = vec![ZERO; self.dim()];
        for nf in 0..k {
            for ci in 0..self.cell.len() {
                let ph = self.cell_phase(nf, ci) * norm;
                let xi = self.box_index(nf, ci);
                for o in 0..m {
                    v[xi * m + o] = ph * data[nf * bd + ci * m + o];
                }
            }
        }
        v
    }

    pub fn same_structure(&self, other: &SectorLayout) -> bool {
        self.orbitals == other.orbitals && self.s == other.s && self.geom.lbox == other.geom.lbox
    }
}

/// Operator on box vectors commuting with the supercell Zak translations, stored
/// as one block per sector.
#[derive(Clone, Debug)]
pub struct DenseOperator {
    layout: Arc<SectorLayout>,
    blocks: Vec<CMat>,
}

impl DenseOperator {
    pub fn from_blocks(layout: Arc<SectorLayout>, blocks: Vec<CMat>) -> Self {
        assert_eq!(blocks.len(), layout.n_sectors());
        Self { layout, blocks }
    }

    pub fn identity(layout: &Arc<SectorLayout>) -> Self {
        let bd = layout.block_dim();
        Self::from_blocks(layout.clone(), (0..layout.n_sectors()).map(|_| linalg::identity(bd)).collect())
    }

    pub fn zero(layout: &Arc<SectorLayout>) -> Self {
        let bd = layout.block_dim();
        Self::from_blocks(layout.clone(), (0..layout.n_sectors()).map(|_| linalg::zeros(bd, bd)).collect())
    }

    /// Assemble a kernel operator `(A f)(x) = sum_gamma K(x, x - gamma) f(x - gamma)`
    /// on the box. `entry(x, y, out)` writes the `m x m` block `K(x, y)` row-major.
    pub fn from_kernel<F>(layout: &Arc<SectorLayout>, offsets: &[Site], entry: F) -> Self
    where
        F: Fn(Site, Site, &mut [c64]) + Sync,
    {
        let geom = &layout.geom;
        let m = layout.orbitals;
        let cols: Vec<Vec<c64>> = layout
            .cell
            .par_iter()
            .map(|&rp| {
                let mut col = vec![ZERO; m * layout.dim()];
                let mut buf = vec![ZERO; m * m];
                for &g in offsets {
                    let xt = add(rp, g);
                    let Some((xi, _)) = geom.wrap(xt) else { continue };
                    let xb = geom.lbox.site(xi);
                    let b = sub(xb, xt);
                    let ph = if b == [0, 0] { ONE } else { geom.wrap(add(rp, b)).unwrap().1 };
                    buf.iter_mut().for_each(|z| *z = ZERO);
                    entry(xb, add(rp, b), &mut buf);
                    for mp in 0..m {
                        let c = &mut col[mp * layout.dim()..(mp + 1) * layout.dim()];
                        for o in 0..m {
                            c[xi * m + o] += buf[o * m + mp] * ph;
                        }
                    }
                }
                col
            })
            .collect();
        let mut flat = Vec::with_capacity(layout.block_dim());
        for col in cols {
            for mp in 0..m {
                flat.push(col[mp * layout.dim()..(mp + 1) * layout.dim()].to_vec());
            }
        }
        Self::from_reference_columns(layout, &flat)
    }

    /// Build from the images of the deltas at the reference cell, ordered
    /// `(cell site, orbital)`.
    pub fn from_reference_columns(layout: &Arc<SectorLayout>, cols: &[Vec<c64>]) -> Self {
        let bd = layout.block_dim();
        let k = layout.n_sectors();
        assert_eq!(cols.len(), bd);
        let folded: Vec<Vec<c64>> = cols.par_iter().map(|c| layout.fold(c)).collect();
        let sk = (k as f64).sqrt();
        let blocks = (0..k)
            .map(|kk| Mat::from_fn(bd, bd, |i, j| folded[j][kk * bd + i] * sk))
            .collect();
        Self::from_blocks(layout.clone(), blocks)
    }

    /// Build a covariant operator from its action on vectors.
    pub fn from_action(layout: &Arc<SectorLayout>, action: impl Fn(&[c64]) -> Vec<c64> + Sync) -> Self {
        let m = layout.orbitals;
        let cols: Vec<Vec<c64>> = (0..layout.block_dim())
            .into_par_iter()
            .map(|j| {
                let ci = j / m;
                let mut e = vec![ZERO; layout.dim()];
                e[layout.geom.lbox.index(layout.cell[ci]) * m + j % m] = ONE;
                action(&e)
            })
            .collect();
        Self::from_reference_columns(layout, &cols)
    }

    /// `sum_alpha T_alpha v v^* T_alpha^*` over all box translates, summed over
    /// the generating vectors `gens` given for the cell translates.
    pub fn from_cell_generators(layout: &Arc<SectorLayout>, gens: &[Vec<c64>]) -> Self {
        let bd = layout.block_dim();
        let k = layout.n_sectors();
        let folded: Vec<Vec<c64>> = gens.par_iter().map(|g| layout.fold(g)).collect();
        let kf = k as f64;
        let blocks = (0..k)
            .into_par_iter()
            .map(|kk| {
                let g = Mat::from_fn(bd, folded.len(), |i, j| folded[j][kk * bd + i]);
                linalg::scale((&g * g.adjoint()).as_ref(), c64::new(kf, 0.0))
            })
            .collect();
        Self::from_blocks(layout.clone(), blocks)
    }

    pub fn layout(&self) -> &Arc<SectorLayout> {
        &self.layout
    }

    pub fn blocks(&self) -> &[CMat] {
        &self.blocks
    }

    pub fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn check(&self, other: &Self) {
        assert!(self.layout.same_structure(&other.layout), "operators live on different layouts");
    }

    fn zip(&self, other: &Self, f: impl Fn(&CMat, &CMat) -> CMat + Sync) -> Self {
        self.check(other);
        let blocks = self.blocks.par_iter().zip(&other.blocks).map(|(a, b)| f(a, b)).collect();
        Self::from_blocks(self.layout.clone(), blocks)
    }

    pub fn map_blocks(&self, f: impl Fn(&CMat) -> CMat + Sync) -> Self {
        Self::from_blocks(self.layout.clone(), self.blocks.par_iter().map(&f).collect())
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a - b)
    }

    pub fn mul(&self, other: &Self) -> Self {
        self.zip(other, |a, b| a * b)
    }

    pub fn scale(&self, s: c64) -> Self {
        self.map_blocks(|a| linalg::scale(a.as_ref(), s))
    }

    pub fn adjoint(&self) -> Self {
        self.map_blocks(|a| linalg::adjoint(a.as_ref()))
    }

    /// `1 - self`.
    pub fn complement(&self) -> Self {
        Self::identity(&self.layout).sub(self)
    }

    pub fn apply(&self, v: &[c64]) -> Vec<c64> {
        let w = self.apply_folded(&self.layout.fold(v));
        self.layout.unfold(&w)
    }

    pub fn apply_folded(&self, w: &[c64]) -> Vec<c64> {
        let bd = self.layout.block_dim();
        let mut out = vec![ZERO; w.len()];
        out.par_chunks_mut(bd.max(1))
            .zip(self.blocks.par_iter())
            .enumerate()
            .for_each(|(k, (o, b))| o.copy_from_slice(&linalg::matvec(b.as_ref(), &w[k * bd..(k + 1) * bd])));
        out
    }

    /// Per-sector Hermitian eigendecompositions.
    pub fn eigh(&self) -> Vec<(Vec<f64>, CMat)> {
        self.blocks.par_iter().map(|b| linalg::eigh(b.as_ref())).collect()
    }

    /// All eigenvalues (Hermitian operators), ascending.
    pub fn eigenvalues(&self) -> Vec<f64> {
        let mut v: Vec<f64> = self.blocks.par_iter().flat_map(|b| linalg::eigvalsh(b.as_ref())).collect();
        v.sort_by(f64::total_cmp);
        v
    }

    /// Functional calculus for Hermitian operators.
    pub fn herm_fn(&self, f: impl Fn(f64) -> c64 + Sync) -> Self {
        self.map_blocks(|b| linalg::herm_fn(b.as_ref(), &f))
    }

    /// Spectral projection onto eigenvalues selected by `keep`.
    pub fn spectral_projection(&self, keep: impl Fn(f64) -> bool + Sync) -> Self {
        self.herm_fn(|l| if keep(l) { ONE } else { ZERO })
    }

    pub fn op_norm(&self) -> f64 {
        self.blocks.par_iter().map(|b| linalg::op_norm(b.as_ref())).reduce(|| 0.0, f64::max)
    }

    pub fn herm_defect(&self) -> f64 {
        self.blocks.iter().map(|b| linalg::herm_defect(b.as_ref())).fold(0.0, f64::max)
    }

    /// `|U^* U - 1|` in operator norm.
    pub fn unitarity_defect(&self) -> f64 {
        let u = self.adjoint().mul(self).sub(&Self::identity(&self.layout));
        u.op_norm()
    }

    /// `|A^2 - A|` in operator norm.
    pub fn idempotency_defect(&self) -> f64 {
        self.mul(self).sub(self).op_norm()
    }

    pub fn trace(&self) -> c64 {
        self.blocks.iter().map(|b| (0..b.nrows()).map(|i| b[(i, i)]).sum::<c64>()).sum()
    }

    /// Full matrix on box sites; intended for small boxes.
    pub fn to_matrix(&self) -> CMat {
        let n = self.dim();
        let cols: Vec<Vec<c64>> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut e = vec![ZERO; n];
                e[j] = ONE;
                self.apply(&e)
            })
            .collect();
        Mat::from_fn(n, n, |i, j| cols[j][i])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom(l: usize, flux: f64) -> Geometry {
        Geometry::new(LatticeBox::periodic(2, l), MagneticSetup::planar_flux(flux)).unwrap()
    }

    #[test]
    fn fold_unfold_roundtrip_and_isometry() {
        let g = geom(8, 2.0 * PI / 4.0);
        let layout = SectorLayout::new(g, 2);
        assert_eq!(layout.s[0] * layout.s[1], 4);
        let v: Vec<c64> = (0..layout.dim()).map(|i| c64::new((i as f64).sin(), (i as f64 * 0.37).cos())).collect();
        let w = layout.fold(&v);
        assert!((linalg::norm(&w) - linalg::norm(&v)).abs() < 1e-12);
        let back = layout.unfold(&w);
        assert!(linalg::norm(&linalg::sub(&back, &v)) < 1e-12);
    }

    #[test]
    fn wrap_is_consistent_for_odd_flux_quanta() {
        let g = geom(3, 2.0 * PI / 3.0);
        // f(y + a) = chi(a) Lambda(y, a) f(y) composes consistently.
        let y = [-2, 4];
        let (w1, p1) = g.wrap(y).unwrap();
        let (w2, p2) = g.wrap([y[0] + 3, y[1] - 3]).unwrap();
        assert_eq!(w1, w2);
        let (_, p3) = g.wrap([1, 1]).unwrap();
        assert!((p3 - ONE).norm() < 1e-15);
        assert!((p1.norm() - 1.0).abs() < 1e-14 && (p2.norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn supercell_is_minimal() {
        assert_eq!(geom(64, 2.0 * PI / 64.0).supercell(), [8, 8]);
        assert_eq!(geom(12, 2.0 * PI / 4.0).supercell(), [2, 2]);
        assert_eq!(geom(9, 2.0 * PI / 3.0).supercell(), [1, 3]);
        assert_eq!(geom(6, 0.0).supercell(), [1, 1]);
    }
}
