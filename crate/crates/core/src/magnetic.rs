//! Magnetic frames: Zak translations, the frame kernel `P~`, its near-one
//! projection `Q`, the `Theta` operator, Sz.-Nagy intertwiners, the dressed
//! effective matrix and the twisted algebra of matrix sequences.

use crate::error::{Error, Result};
use crate::frames::{CovariantFrame, WannierFrame};
use crate::lattice::{point, DenseOperator, Geometry, SectorLayout, Site};
use crate::linalg::{self, c64, CMat, ONE, ZERO};
use crate::model::{quantize_sequence, HoppingTable};
use crate::phases::MagneticSetup;
use crate::reduction::perturbed_band_projection;
use crate::sequence::BlockSequence;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashSet};
use std::f64::consts::PI;
use std::sync::Arc;

/// `(T_gamma f)(x) = Lambda(x, gamma) f(x - gamma)`.
pub fn zak_translate(geom: &Geometry, gamma: Site, f: &[c64], orbitals: usize) -> Vec<c64> {
    geom.zak(gamma, f, orbitals)
}

/// Frame `{Lambda~_alpha T_alpha psi_p}` of box translates of embedded Wannier
/// functions; its frame operator is `P~`.
pub fn translated_frame(w: &WannierFrame, layout: &Arc<SectorLayout>) -> Result<CovariantFrame> {
    let vecs = (0..w.nb).map(|p| w.embed(&layout.geom, p)).collect::<Result<Vec<_>>>()?;
    Ok(CovariantFrame::translates(layout, &vecs))
}

/// `P~ = sum_alpha T_alpha psi_p (T_alpha psi_p)^*`.
pub fn frame_kernel(w: &WannierFrame, layout: &Arc<SectorLayout>) -> Result<DenseOperator> {
    Ok(translated_frame(w, layout)?.frame_operator())
}

fn check_dichotomy(vals: &[f64]) -> Result<()> {
    match vals.iter().find(|&&l| (0.25..=0.75).contains(&l)) {
        Some(&l) => Err(Error::NoSpectralDichotomy(l)),
        None => Ok(()),
    }
}

pub fn projection_near_one_matrix(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = linalg::eigh(a.as_ref());
    check_dichotomy(&vals)?;
    Ok(linalg::from_eig(&vals, vecs.as_ref(), |l| if l > 0.5 { ONE } else { ZERO }))
}

/// `f(P~)` with `f = lambda^{-1/2}` on the upper cluster and `0` on the lower one.
pub fn theta_matrix(a: &CMat) -> Result<CMat> {
    let (vals, vecs) = linalg::eigh(a.as_ref());
    check_dichotomy(&vals)?;
    Ok(linalg::from_eig(&vals, vecs.as_ref(), |l| if l > 0.5 { c64::new(l.powf(-0.5), 0.0) } else { ZERO }))
}

/// `-(2 pi i)^{-1} oint z^{-1/2} (A - z)^{-1} dz` on `|z - 1| = 1/2`, trapezoid rule.
pub fn theta_matrix_contour(a: &CMat, nodes: usize) -> Result<CMat> {
    check_dichotomy(&linalg::eigvalsh(a.as_ref()))?;
    let n = a.nrows();
    let mut out = linalg::zeros(n, n);
    for j in 0..nodes {
        let phi = 2.0 * PI * (j as f64 + 0.5) / nodes as f64;
        let e = linalg::cis(phi);
        let z = ONE + 0.5 * e;
        let shifted = Mat::from_fn(n, n, |r, c| if r == c { a[(r, c)] - z } else { a[(r, c)] });
        let res = linalg::inverse(shifted.as_ref())?;
        let w = -0.5 / nodes as f64 * e * z.sqrt().inv();
        out += linalg::scale(res.as_ref(), w);
    }
    Ok(out)
}

fn try_map(op: &DenseOperator, f: impl Fn(&CMat) -> Result<CMat> + Sync) -> Result<DenseOperator> {
    let blocks = op.blocks().par_iter().map(&f).collect::<Result<Vec<_>>>()?;
    Ok(DenseOperator::from_blocks(op.layout().clone(), blocks))
}

/// Spectral projection of `P~` on its eigenvalues near one.
pub fn spectral_projection_near_one(ptilde: &DenseOperator) -> Result<DenseOperator> {
    try_map(ptilde, projection_near_one_matrix)
}

pub fn theta_operator(ptilde: &DenseOperator) -> Result<DenseOperator> {
    try_map(ptilde, theta_matrix)
}

pub fn theta_operator_contour(ptilde: &DenseOperator, nodes: usize) -> Result<DenseOperator> {
    try_map(ptilde, |b| theta_matrix_contour(b, nodes))
}

/// `U = (1 - (P - Q)^2)^{-1/2} [P Q + (1 - P)(1 - Q)]`, so that `P U = U Q`.
pub fn nagy_matrix(p: &CMat, q: &CMat) -> Result<CMat> {
    let n = p.nrows();
    let d = p - q;
    let dn = linalg::op_norm(d.as_ref());
    if dn >= 1.0 - 1e-12 {
        return Err(Error::ProjectionsTooFar(dn));
    }
    let id = linalg::identity(n);
    let x = &id - &(&d * &d);
    let x = linalg::herm_fn(x.as_ref(), |l| c64::new(l.powf(-0.5), 0.0));
    let pc = &id - p;
    let qc = &id - q;
    Ok(&x * &(&(p * q) + &(&pc * &qc)))
}

/// Intertwiner with its distance from the identity.
pub fn nagy_intertwiner(p: &DenseOperator, q: &DenseOperator) -> Result<(DenseOperator, f64)> {
    let dn = p.sub(q).op_norm();
    if dn >= 1.0 - 1e-12 {
        return Err(Error::ProjectionsTooFar(dn));
    }
    let blocks = p
        .blocks()
        .par_iter()
        .zip(q.blocks())
        .map(|(a, b)| nagy_matrix(a, b))
        .collect::<Result<Vec<_>>>()?;
    let u = DenseOperator::from_blocks(p.layout().clone(), blocks);
    let rem = u.sub(&DenseOperator::identity(p.layout())).op_norm();
    Ok((u, rem))
}

/// Which stages were applied to the translated frame.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub ptilde: bool,
    pub q: bool,
    pub theta: bool,
    pub u: bool,
    pub w: bool,
}

/// Diagnostics of one dressing stage.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub ptilde_idem: f64,
    pub ptilde_minus_q: f64,
    pub p_minus_q: f64,
    /// `max(|Theta P~ Theta - Q|, |Theta^2 P~ - Q|)`.
    pub theta_chain: f64,
    /// `|sum Theta phi (Theta phi)^* - Q|`.
    pub parseval_q: f64,
    pub unitarity: f64,
    pub intertwining: f64,
    pub u_minus_one: f64,
}

/// Frame for `P^{eps,c}_B` with the dressing history.
#[derive(Clone, Debug)]
pub struct MagneticFrame {
    pub frame: CovariantFrame,
    pub projection: DenseOperator,
    pub setup: MagneticSetup,
    pub provenance: Provenance,
    /// Stage at `c = 0`, then (if the field fluctuates) the stage at `c`.
    pub stages: Vec<StageReport>,
    /// `|sum psi psi^* - P^{eps,c}_B|`.
    pub parseval_p: f64,
}

impl MagneticFrame {
    pub fn layout(&self) -> &Arc<SectorLayout> {
        &self.frame.layout
    }
}

struct Stage {
    frame: CovariantFrame,
    p: DenseOperator,
    report: StageReport,
}

fn dress(frame0: &CovariantFrame, h_perp: &HoppingTable, e0: f64) -> Result<Stage> {
    let layout = frame0.layout.clone();
    let ptilde = frame0.frame_operator();
    let q = spectral_projection_near_one(&ptilde)?;
    let theta = theta_operator(&ptilde)?;
    let p = perturbed_band_projection(h_perp, &layout, e0)?;
    let (u, u_minus_one) = nagy_intertwiner(&p, &q)?;
    let tq = theta.mul(&ptilde).mul(&theta).sub(&q).op_norm();
    let t2 = theta.mul(&theta).mul(&ptilde).sub(&q).op_norm();
    let mid = frame0.transform(&theta);
    let parseval_q = mid.frame_operator().sub(&q).op_norm();
    let frame = mid.transform(&u);
    let report = StageReport {
        ptilde_idem: ptilde.idempotency_defect(),
        ptilde_minus_q: ptilde.sub(&q).op_norm(),
        p_minus_q: p.sub(&q).op_norm(),
        theta_chain: tq.max(t2),
        parseval_q,
        unitarity: u.unitarity_defect(),
        intertwining: p.mul(&u).sub(&u.mul(&q)).op_norm(),
        u_minus_one,
    };
    Ok(Stage { frame, p, report })
}

/// Magnetic Parseval frame for `P^{eps,c}_B` on the layout's box.
///
/// At `c = 0`: `psi_{alpha,p} = U Theta T_alpha psi_p`. With a fluctuating field the
/// `c = 0` result `psi~_p` is translated again with `Lambda~_alpha T_alpha` and
/// dressed by `W Theta^{eps,c}`.
pub fn build_magnetic_frame(w: &WannierFrame, h_perp: &HoppingTable, layout: &Arc<SectorLayout>, e0: f64) -> Result<MagneticFrame> {
    let geom = &layout.geom;
    if !geom.lbox.is_periodic() {
        return Err(Error::InvalidArgument("magnetic frames need a magnetic-periodic box".into()));
    }
    let setup = geom.setup.clone();
    let fluct = setup.has_fluct();
    let layout0 = if fluct {
        let g0 = Geometry::new(geom.lbox.clone(), setup.constant_part())?;
        SectorLayout::with_supercell(g0, layout.orbitals, layout.s)
    } else {
        layout.clone()
    };
    let base = translated_frame(w, &layout0)?;
    let st0 = dress(&base, h_perp, e0)?;
    let mut prov = Provenance { ptilde: true, q: true, theta: true, u: true, w: false };
    let mut stages = vec![st0.report];
    let last = if fluct {
        let origin = layout0.cell().iter().position(|&r| r == [0, 0]).unwrap();
        let gens: Vec<Vec<c64>> = (0..w.nb).map(|p| st0.frame.generators[origin * w.nb + p].clone()).collect();
        let base_c = CovariantFrame::translates(layout, &gens);
        let st = dress(&base_c, h_perp, e0)?;
        prov.w = true;
        stages.push(st.report);
        st
    } else {
        st0
    };
    let parseval_p = last.frame.frame_operator().sub(&last.p).op_norm();
    Ok(MagneticFrame { frame: last.frame, projection: last.p, setup, provenance: prov, stages, parseval_p })
}

/// Deviation of matrix elements from the `Lambda(alpha, beta) m_{alpha - beta}` form.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub max_violation: f64,
    pub checked_columns: usize,
}

/// Offsets `gamma` covering one period of the box, `[-L/2, L/2)` per axis.
pub fn period_offsets(geom: &Geometry) -> Vec<Site> {
    let lb = &geom.lbox;
    let range = |l: usize| -(l as i64 / 2)..(l as i64 - l as i64 / 2);
    let r1 = if lb.dim == 2 { range(lb.sides[1]) } else { 0..1 };
    range(lb.sides[0]).flat_map(|a| r1.clone().map(move |b| [a, b])).collect()
}

fn column_coeffs(mf: &MagneticFrame, h: &DenseOperator, beta: Site) -> Vec<Vec<c64>> {
    let f = &mf.frame;
    let bi = f.layout.lbox().index(beta);
    (0..f.nb).into_par_iter().map(|q| f.analysis(&h.apply(&f.element(bi, q)))).collect()
}

/// Phase-stripped matrix elements `m_gamma = conj(Lambda(beta + gamma, beta))
/// <psi_{beta+gamma}, H psi_beta>` at the box centre `beta`, for one full period
/// of `gamma`, plus the structure check at further reference columns.
pub fn effective_matrix(mf: &MagneticFrame, h: &DenseOperator) -> Result<(BlockSequence, StructureReport)> {
    let geom = &mf.frame.layout.geom;
    let lb = &geom.lbox;
    let nb = mf.frame.nb;
    let beta = lb.center();
    let offsets = period_offsets(geom);
    let coef = column_coeffs(mf, h, beta);
    let at = |cf: &[Vec<c64>], y: Site, p: usize, q: usize| -> c64 {
        let (i, ph) = geom.wrap(y).expect("periodic box");
        ph * cf[q][i * nb + p]
    };
    let add = |a: Site, b: Site| [a[0] + b[0], a[1] + b[1]];
    let mut blocks = BTreeMap::new();
    for &g in &offsets {
        let a = add(beta, g);
        let ph = geom.lam(a, beta).conj();
        blocks.insert(g, Mat::from_fn(nb, nb, |p, q| ph * at(&coef, a, p, q)));
    }
    let m = BlockSequence::from_blocks(lb.dim, nb, blocks);
    let shifts: [Site; 3] = if lb.dim == 2 { [[1, 0], [0, 1], [3, -2]] } else { [[1, 0], [2, 0], [-3, 0]] };
    let mut viol = 0.0f64;
    for s in shifts {
        let b2 = geom_wrap_site(geom, add(beta, s));
        let cf = column_coeffs(mf, h, b2);
        for &g in &offsets {
            let a = add(b2, g);
            let lam = geom.lam(a, b2);
            let blk = &m.blocks[&g];
            for p in 0..nb {
                for q in 0..nb {
                    viol = viol.max((at(&cf, a, p, q) - lam * blk[(p, q)]).norm());
                }
            }
        }
    }
    let report = StructureReport { max_violation: viol, checked_columns: shifts.len() };
    if !mf.setup.has_fluct() && viol > 1e-6 {
        return Err(Error::StructureViolation(viol));
    }
    Ok((m, report))
}

fn geom_wrap_site(geom: &Geometry, y: Site) -> Site {
    let lb = &geom.lbox;
    [y[0].rem_euclid(lb.sides[0] as i64), y[1].rem_euclid(lb.sides[1] as i64)]
}

/// `Op^{eps,c}(m)` on the box, with `m` as its symbol.
#[derive(Clone, Debug)]
pub struct EffectiveMagneticOperator {
    pub hoppings: BlockSequence,
    pub setup: MagneticSetup,
    pub op: DenseOperator,
}

impl EffectiveMagneticOperator {
    pub fn spectrum(&self) -> Vec<f64> {
        self.op.eigenvalues()
    }
}

/// Kernel `Lambda^{eps,c}(alpha, beta) m_{alpha - beta}` on a layout with `n_B`
/// components per site. On a periodic box no two offsets may coincide modulo
/// the box.
pub fn magnetic_quantize(m: &BlockSequence, layout: &Arc<SectorLayout>) -> Result<EffectiveMagneticOperator> {
    if layout.orbitals != m.n {
        return Err(Error::ShapeMismatch(format!("{} x {} blocks on a layout with {} components", m.n, m.n, layout.orbitals)));
    }
    let geom = &layout.geom;
    if geom.lbox.is_periodic() {
        let mut seen = HashSet::new();
        for g in m.offsets() {
            let (i, _) = geom.wrap(g).unwrap();
            if !seen.insert(i) {
                return Err(Error::PaddingInsufficient(format!(
                    "hopping range {} wraps onto itself in box of sides {:?}",
                    m.radius, geom.lbox.sides
                )));
            }
        }
    }
    Ok(EffectiveMagneticOperator { hoppings: m.clone(), setup: geom.setup.clone(), op: quantize_sequence(m, layout) })
}

/// `(S T)_alpha = sum_gamma Lambda(gamma, alpha) S_gamma T_{alpha - gamma}` with the
/// constant-field phase.
pub fn twisted_product(s: &BlockSequence, t: &BlockSequence, setup: &MagneticSetup) -> Result<BlockSequence> {
    if s.n != t.n || s.dim != t.dim {
        return Err(Error::ShapeMismatch(format!("block sizes {} and {}", s.n, t.n)));
    }
    let d = s.dim;
    let mut out: BTreeMap<Site, CMat> = BTreeMap::new();
    for (g, a) in &s.blocks {
        for (h, b) in &t.blocks {
            let alpha = [g[0] + h[0], g[1] + h[1]];
            let ph = setup.lambda_const(&point(d, *g), &point(d, alpha));
            let prod = linalg::scale((a * b).as_ref(), ph);
            out.entry(alpha).and_modify(|x| *x += &prod).or_insert(prod);
        }
    }
    Ok(BlockSequence::from_blocks(d, s.n, out))
}

/// Per-run JSON report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct PipelineReport {
    pub eps: f64,
    pub c: f64,
    pub flux: [i64; 2],
    pub norms: PipelineNorms,
    #[serde(rename = "nB")]
    pub nb: usize,
    pub chern: Option<i64>,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct PipelineNorms {
    pub ptilde_idem: f64,
    pub p_minus_q: f64,
    pub structure_violation: f64,
}
