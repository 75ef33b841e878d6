//! Parseval tight-frames for an isolated family: seeds, frame bounds,
//! inverse-square-root normalisation, Wannier functions, coordinate maps and the
//! unperturbed effective hoppings.
//!
//! DFT normalisation: forward `n_k^{-d} sum_theta e^{+i theta gamma}`, inverse
//! `sum_gamma e^{-i theta gamma}`.

use crate::bloch::ProjectionField;
use crate::error::{Error, Result};
use crate::lattice::{DenseOperator, Geometry, SectorLayout, Site};
use crate::linalg::{self, c64, CMat, ONE, ZERO};
use crate::model::ReciprocalGrid;
use crate::sequence::{sup_radius, BlockSequence};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::io::Write;
use std::sync::Arc;


/// Tolerances of the frame search.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameConfig {
    /// Smallest admissible frame lower bound.
    pub a_min: f64,
    /// Largest admissible jump `|psi(theta) - psi(theta')|` between grid neighbours.
    pub jump_max: f64,
}

impl Default for FrameConfig {
    fn default() -> Self {
        Self { a_min: 1e-3, jump_max: 0.75 }
    }
}

/// Constant seed vectors: the standard basis first, then seeded random vectors.
/// With `rng_seed` every vector is random.
pub fn seed_vectors(m: usize, nb: usize, rng_seed: Option<u64>) -> Vec<Vec<c64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed.unwrap_or(0));
    (0..nb)
        .map(|p| {
            if rng_seed.is_none() && p < m {
                let mut e = vec![ZERO; m];
                e[p] = ONE;
                e
            } else {
                let v: Vec<c64> = (0..m).map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
                let n = linalg::norm(&v);
                v.into_iter().map(|z| z / n).collect()
            }
        })
        .collect()
}

/// Candidate sections `phi_p(theta) = P(theta) v_p`, stored as `M x n_B` per point.
#[derive(Clone, Debug)]
pub struct Candidates {
    pub grid: ReciprocalGrid,
    pub sections: Vec<CMat>,
}

pub fn seed_candidates(field: &ProjectionField, seeds: &[Vec<c64>]) -> Result<Candidates> {
    if seeds.len() < field.rank {
        return Err(Error::InvalidArgument(format!(
            "n_B = {} is below the family rank {}",
            seeds.len(),
            field.rank
        )));
    }
    let m = field.proj[0].nrows();
    let v = Mat::from_fn(m, seeds.len(), |i, j| seeds[j][i]);
    let sections = field.proj.par_iter().map(|p| p * &v).collect();
    Ok(Candidates { grid: field.grid, sections })
}

/// Smallest eigenvalue of `S = sum_p phi_p phi_p^*` on the range of `P`, with the
/// grid point where it is attained.
pub fn frame_lower_bound(cands: &Candidates, field: &ProjectionField) -> (f64, usize) {
    cands
        .sections
        .par_iter()
        .zip(&field.proj)
        .map(|(phi, p)| {
            let (v, _) = linalg::projection_bases(p.as_ref());
            let s = v.adjoint() * phi;
            let gram = &s * s.adjoint();
            linalg::eigvalsh(gram.as_ref()).first().copied().unwrap_or(0.0).max(0.0)
        })
        .enumerate()
        .map(|(i, a)| (a, i))
        .reduce(|| (f64::INFINITY, 0), |a, b| if b.0 < a.0 { b } else { a })
}

/// Parseval frame field `psi_p(theta)`, stored as `M x n_B` per point.
#[derive(Clone, Debug)]
pub struct FrameField {
    pub grid: ReciprocalGrid,
    pub nb: usize,
    pub sections: Vec<CMat>,
    pub lower_bound: f64,
    /// Max neighbour jump and the smoothness constant `jump / mesh`.
    pub max_jump: f64,
    pub smoothness: f64,
}

/// `psi = S^{-1/2}|_range phi` pointwise.
pub fn parsevalize(cands: &Candidates, field: &ProjectionField, cfg: &FrameConfig) -> Result<FrameField> {
    let nb = cands.sections[0].ncols();
    let (a, worst) = frame_lower_bound(cands, field);
    if a < cfg.a_min {
        return Err(Error::FrameDeficient {
            theta: cands.grid.theta(worst),
            bound: a,
            jump: f64::NAN,
            suggested_nb: nb + 1,
        });
    }
    let sections: Vec<CMat> = cands
        .sections
        .par_iter()
        .zip(&field.proj)
        .map(|(phi, p)| {
            let (v, _) = linalg::projection_bases(p.as_ref());
            let s = v.adjoint() * phi;
            let gram = &s * s.adjoint();
            let inv_sqrt = linalg::herm_fn(gram.as_ref(), |l| c64::new(l.powf(-0.5), 0.0));
            &v * (&inv_sqrt * &s)
        })
        .collect();
    let g = cands.grid;
    let (jump, at) = (0..g.len())
        .into_par_iter()
        .map(|i| {
            let j = g
                .forward_neighbours(i)
                .into_iter()
                .map(|k| {
                    let d = &sections[k] - &sections[i];
                    (0..nb)
                        .map(|p| (0..d.nrows()).map(|r| d[(r, p)].norm_sqr()).sum::<f64>().sqrt())
                        .fold(0.0, f64::max)
                })
                .fold(0.0, f64::max);
            (j, i)
        })
        .reduce(|| (0.0, 0), |a, b| if b.0 > a.0 { b } else { a });
    if jump > cfg.jump_max {
        return Err(Error::FrameDeficient { theta: g.theta(at), bound: a, jump, suggested_nb: nb + 1 });
    }
    Ok(FrameField { grid: g, nb, sections, lower_bound: a, max_jump: jump, smoothness: jump / g.mesh() })
}

/// Outcome of the `n_B` search.
#[derive(Clone, Debug)]
pub struct FrameSearch {
    pub frame: FrameField,
    pub attempts: Vec<(usize, String)>,
    /// Set when the search went past `N + 1 + ceil(d / 2)`.
    pub beyond_bound: bool,
}

/// Start at `nb_start` and add seeds while the frame is deficient, up to
/// `N + 1 + ceil(d/2) + 2`.
pub fn search_frame(field: &ProjectionField, nb_start: usize, rng_seed: Option<u64>, cfg: &FrameConfig) -> Result<FrameSearch> {
    let d = field.grid.dim;
    let bound = field.rank + d.div_ceil(2);
    let cap = bound + 2;
    let m = field.proj[0].nrows();
    let mut attempts = Vec::new();
    let mut last = None;
    for nb in nb_start.max(field.rank)..=cap {
        let seeds = seed_vectors(m, nb, rng_seed);
        let cands = seed_candidates(field, &seeds)?;
        match parsevalize(&cands, field, cfg) {
            Ok(frame) => {
                return Ok(FrameSearch { frame, attempts, beyond_bound: nb > bound });
            }
            Err(e @ Error::FrameDeficient { .. }) => {
                attempts.push((nb, e.to_string()));
                last = Some(e);
            }
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::InvalidArgument("empty n_B range".into())))
}

impl FrameField {
    /// `max |sum_p psi_p psi_p^* - P|` over the grid.
    pub fn parseval_defect(&self, field: &ProjectionField) -> f64 {
        self.sections
            .par_iter()
            .zip(&field.proj)
            .map(|(s, p)| linalg::max_abs((&(s * s.adjoint()) - p).as_ref()))
            .reduce(|| 0.0, f64::max)
    }

    /// `max |(1 - P) psi_p|` over the grid.
    pub fn range_defect(&self, field: &ProjectionField) -> f64 {
        self.sections
            .par_iter()
            .zip(&field.proj)
            .map(|(s, p)| linalg::max_abs((s - &(p * s)).as_ref()))
            .reduce(|| 0.0, f64::max)
    }

    /// Unperturbed effective hoppings `m_gamma` from `m(theta) = psi^* H_B psi`.
    pub fn effective_hoppings(&self, field: &ProjectionField, radius: usize) -> Result<BlockSequence> {
        let vals: Vec<CMat> = self.sections.par_iter().zip(&field.hb).map(|(s, h)| s.adjoint() * (h * s)).collect();
        self.grid.coefficients(&vals, radius)
    }

    /// Reciprocal-space matrix representation of a fiber field `T(theta)`.
    pub fn matrix_rep_fibers(&self, fibers: &[CMat], radius: usize) -> Result<BlockSequence> {
        let vals: Vec<CMat> = self.sections.par_iter().zip(fibers).map(|(s, t)| s.adjoint() * (t * s)).collect();
        self.grid.coefficients(&vals, radius)
    }

    /// JSON checkpoint layout.
    pub fn to_json(&self) -> serde_json::Value {
        let secs: Vec<Vec<[f64; 2]>> = self.sections.iter().map(crate::sequence::encode_block).collect();
        serde_json::json!({
            "dimension": self.grid.dim,
            "n_k": self.grid.n_k,
            "n_B": self.nb,
            "orbitals": self.sections[0].nrows(),
            "lower_bound": self.lower_bound,
            "smoothness": self.smoothness,
            "sections": secs,
        })
    }
}

pub fn effective_hoppings_unperturbed(frame: &FrameField, field: &ProjectionField, radius: usize) -> Result<BlockSequence> {
    frame.effective_hoppings(field, radius)
}

/// Real-space frame functions `psi_p(gamma, m)`.
#[derive(Clone, Debug)]
pub struct WannierFrame {
    pub dim: usize,
    pub orbitals: usize,
    pub nb: usize,
    pub n_k: usize,
    /// `M x n_B` value per lattice vector.
    pub values: BTreeMap<Site, CMat>,
    /// Largest value norm on the outermost kept shell.
    pub tail: f64,
}

/// Wannier functions on `|gamma|_inf <= l_w`.
pub fn to_wannier(frame: &FrameField, l_w: usize) -> Result<WannierFrame> {
    let g = frame.grid;
    if 2 * l_w >= g.n_k {
        return Err(Error::AliasRisk { radius: l_w, n_k: g.n_k });
    }
    let cells = g.forward_dft(&frame.sections);
    let r = l_w as i64;
    let mut values = BTreeMap::new();
    let r1 = if g.dim == 2 { r } else { 0 };
    for a in -r..=r {
        for b in -r1..=r1 {
            values.insert([a, b], cells[g.cell_index([a, b])].clone());
        }
    }
    Ok(finish_wannier(frame, values))
}

/// Wannier functions on one full period `[-n_k/2, n_k/2)^d` (no truncation).
pub fn to_wannier_cell(frame: &FrameField) -> WannierFrame {
    let g = frame.grid;
    let cells = g.forward_dft(&frame.sections);
    let values = (0..g.len()).map(|i| (g.gamma_of(i), cells[i].clone())).collect();
    finish_wannier(frame, values)
}

fn finish_wannier(frame: &FrameField, values: BTreeMap<Site, CMat>) -> WannierFrame {
    let m = frame.sections[0].nrows();
    let mut w = WannierFrame { dim: frame.grid.dim, orbitals: m, nb: frame.nb, n_k: frame.grid.n_k, values, tail: 0.0 };
    let prof = w.decay_profile();
    w.tail = prof.last().copied().unwrap_or(0.0);
    w
}

impl WannierFrame {
    pub fn radius(&self) -> usize {
        self.values.keys().map(|&g| sup_radius(g)).max().unwrap_or(0)
    }

    /// `r -> max_{|gamma|_inf = r, p} |psi_p(gamma, .)|`.
    pub fn decay_profile(&self) -> Vec<f64> {
        let mut prof = vec![0.0f64; self.radius() + 1];
        for (g, v) in &self.values {
            for p in 0..self.nb {
                let n: f64 = (0..v.nrows()).map(|i| v[(i, p)].norm_sqr()).sum::<f64>().sqrt();
                let r = sup_radius(*g);
                prof[r] = prof[r].max(n);
            }
        }
        prof
    }

    /// `sum_{gamma, m} |psi_p(gamma, m)|^2` per frame index.
    pub fn norms_sq(&self) -> Vec<f64> {
        (0..self.nb)
            .map(|p| self.values.values().map(|v| (0..v.nrows()).map(|i| v[(i, p)].norm_sqr()).sum::<f64>()).sum())
            .collect()
    }

    /// Function `p` as a box vector centred at the origin (quasi-periodic image on
    /// magnetic-periodic boxes).
    pub fn embed(&self, geom: &Geometry, p: usize) -> Result<Vec<c64>> {
        let lb = &geom.lbox;
        let m = self.orbitals;
        let mut out = vec![ZERO; lb.volume() * m];
        let mut seen = vec![false; lb.volume()];
        for (g, v) in &self.values {
            match geom.wrap(*g) {
                Some((i, ph)) => {
                    if seen[i] {
                        return Err(Error::PaddingInsufficient(format!(
                            "frame support of radius {} does not fit in box of sides {:?}",
                            self.radius(),
                            lb.sides
                        )));
                    }
                    seen[i] = true;
                    for o in 0..m {
                        out[i * m + o] = ph.conj() * v[(o, p)];
                    }
                }
                None => continue,
            }
        }
        Ok(out)
    }

    /// CSV rows `gamma..., p, m, re, im`.
    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        let head: Vec<String> = (1..=self.dim).map(|i| format!("gamma_{i}")).chain(["p", "m", "re", "im"].map(String::from)).collect();
        writeln!(w, "{}", head.join(","))?;
        for (g, v) in &self.values {
            for p in 0..self.nb {
                for o in 0..self.orbitals {
                    let gs: Vec<String> = g[..self.dim].iter().map(|x| x.to_string()).collect();
                    writeln!(w, "{},{},{},{:.15e},{:.15e}", gs.join(","), p + 1, o + 1, v[(o, p)].re, v[(o, p)].im)?;
                }
            }
        }
        Ok(())
    }
}

/// A frame `{psi_{alpha, p}}` over all box sites that is covariant under the
/// supercell Zak translations: `psi_{r + s n, p} = ph(r, n) T_{s n} psi_{r, p}`.
/// Coefficient vectors are indexed `alpha * n_B + p` and are quasi-periodic in
/// `alpha` exactly like box functions.
#[derive(Clone, Debug)]
pub struct CovariantFrame {
    pub layout: Arc<SectorLayout>,
    pub coef_layout: Arc<SectorLayout>,
    pub nb: usize,
    /// Elements at the reference cell, index `cell * n_B + p`.
    pub generators: Vec<Vec<c64>>,
    folded: Vec<Vec<c64>>,
    /// `ph(r, n)`, index `n * cell + r`.
    phases: Vec<c64>,
}

impl CovariantFrame {
    pub fn new(layout: &Arc<SectorLayout>, nb: usize, generators: Vec<Vec<c64>>) -> Self {
        let cell = layout.cell().len();
        assert_eq!(generators.len(), cell * nb);
        let folded = generators.par_iter().map(|g| layout.fold(g)).collect();
        let geom = &layout.geom;
        let s = layout.s;
        let mut phases = Vec::with_capacity(layout.n_sectors() * cell);
        for nf in 0..layout.n_sectors() {
            let a = [((nf / layout.nsec[1]) * s[0]) as i64, 0];
            let b = [0, ((nf % layout.nsec[1]) * s[1]) as i64];
            let sn = [a[0], b[1]];
            let pre = geom.lam_const(b, a).conj();
            for &r in layout.cell() {
                phases.push(pre * geom.lam_const(r, sn).conj());
            }
        }
        let coef_layout = layout.with_orbitals(nb);
        Self { layout: layout.clone(), coef_layout, nb, generators, folded, phases }
    }

    /// Frame `{T_alpha v_p}` (times `Lambda~_alpha` when the field fluctuates).
    pub fn translates(layout: &Arc<SectorLayout>, vectors: &[Vec<c64>]) -> Self {
        let geom = &layout.geom;
        let m = layout.orbitals;
        let nb = vectors.len();
        let gens = layout
            .cell()
            .par_iter()
            .flat_map_iter(|&r| vectors.iter().map(move |v| geom.fluct_multiply(r, &geom.zak(r, v, m), m)))
            .collect();
        Self::new(layout, nb, gens)
    }

    fn dims(&self) -> (usize, usize, usize) {
        (self.layout.n_sectors(), self.layout.block_dim(), self.layout.cell().len())
    }

    /// `C f = {<psi_{alpha,p}, f>}`.
    pub fn analysis(&self, f: &[c64]) -> Vec<c64> {
        let (k, bd, cell) = self.dims();
        let nb = self.nb;
        let ff = self.layout.fold(f);
        let width = cell * nb;
        let mut data = vec![ZERO; k * width];
        data.par_chunks_mut(width).enumerate().for_each(|(kk, row)| {
            let fk = &ff[kk * bd..(kk + 1) * bd];
            for (j, g) in self.folded.iter().enumerate() {
                row[j] = linalg::inner(&g[kk * bd..(kk + 1) * bd], fk);
            }
        });
        self.coef_layout.dft(&mut data, width, -1);
        let mut out = vec![ZERO; self.layout.lbox().volume() * nb];
        for nf in 0..k {
            for ci in 0..cell {
                let alpha = self.coef_layout.box_index(nf, ci);
                let ph = self.phases[nf * cell + ci].conj();
                for p in 0..nb {
                    out[alpha * nb + p] = ph * data[nf * width + ci * nb + p];
                }
            }
        }
        out
    }

    /// `C^* c = sum c_{alpha,p} psi_{alpha,p}`.
    pub fn synthesis(&self, c: &[c64]) -> Vec<c64> {
        let (k, bd, cell) = self.dims();
        let nb = self.nb;
        let width = cell * nb;
        let mut data = vec![ZERO; k * width];
        for nf in 0..k {
            for ci in 0..cell {
                let alpha = self.coef_layout.box_index(nf, ci);
                let ph = self.phases[nf * cell + ci];
                for p in 0..nb {
                    data[nf * width + ci * nb + p] = ph * c[alpha * nb + p];
                }
            }
        }
        self.coef_layout.dft(&mut data, width, 1);
        let mut out = vec![ZERO; k * bd];
        out.par_chunks_mut(bd).enumerate().for_each(|(kk, o)| {
            for (j, g) in self.folded.iter().enumerate() {
                let w = data[kk * width + j];
                if w != ZERO {
                    linalg::axpy(o, w, &g[kk * bd..(kk + 1) * bd]);
                }
            }
        });
        self.layout.unfold(&out)
    }

    /// The element `psi_{alpha, p}` as a box vector.
    pub fn element(&self, alpha: usize, p: usize) -> Vec<c64> {
        let mut c = vec![ZERO; self.layout.lbox().volume() * self.nb];
        c[alpha * self.nb + p] = ONE;
        self.synthesis(&c)
    }

    /// `sum_{alpha,p} psi psi^*`.
    pub fn frame_operator(&self) -> DenseOperator {
        DenseOperator::from_cell_generators(&self.layout, &self.generators)
    }

    /// Apply a covariant operator to every element.
    pub fn transform(&self, op: &DenseOperator) -> Self {
        let gens = self.generators.par_iter().map(|g| op.apply(g)).collect();
        Self::new(&self.layout, self.nb, gens)
    }
}

/// Real-space matrix representation `m_gamma = <tau_gamma psi_p, T psi_q>` of a
/// translation-invariant operator on a periodic box at zero field.
pub fn matrix_rep(frame: &CovariantFrame, t: &DenseOperator, radius: usize) -> Result<BlockSequence> {
    let geom = &frame.layout.geom;
    if geom.flux() != 0.0 || frame.layout.s != [1, 1] || !geom.lbox.is_periodic() {
        return Err(Error::NotTranslationInvariant(geom.flux().abs()));
    }
    let lb = geom.lbox.clone();
    let nb = frame.nb;
    let coeffs: Vec<Vec<c64>> = (0..nb).map(|q| frame.analysis(&t.apply(&frame.element(0, q)))).collect();
    let mut blocks = BTreeMap::new();
    let r = radius as i64;
    let r1 = if lb.dim == 2 { r } else { 0 };
    for a in -r..=r {
        for b in -r1..=r1 {
            let (i, _) = geom.wrap([a, b]).unwrap();
            blocks.insert([a, b], Mat::from_fn(nb, nb, |p, q| coeffs[q][i * nb + p]));
        }
    }
    let mut s = BlockSequence::from_blocks(lb.dim, nb, blocks);
    s.radius = radius;
    s.tail = s.shell_norm(radius);
    Ok(s)
}
