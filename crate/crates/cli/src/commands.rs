//! Subcommand bodies. Each one fills a `Summary` and writes its artifacts.

use crate::config::{ConfigError, RunConfig};
use crate::report::{Artifacts, Summary};
use bandframe::bloch::{band_projection_field, chern_number, compute_bands, detect_isolated_family, BandStructure, FamilyReport, IsolatedFamily, ProjectionField};
use bandframe::frames::{search_frame, to_wannier_cell, FrameConfig, FrameField};
use bandframe::lattice::{Geometry, LatticeBox, SectorLayout};
use bandframe::linalg::{self, c64, CMat};
use bandframe::magnetic::{nagy_matrix, theta_matrix};
use bandframe::model::{HoppingTable, ReciprocalGrid};
use bandframe::phases::{ConstantField, MagneticSetup};
use bandframe::pipeline::{dynamics_errors, magnetic_point, prepare, window_state, MagneticPoint, PipelineConfig, Prepared};
use bandframe::reduction::{hs_function_of_matrix, schur_resolvent, schur_spectrum_check, PlateauBump, SmoothFunction};
use bandframe::validate::{butterfly_oracle_deviation, butterfly_sweep, write_butterfly_csv, HarperSymbol, ScalingReport};
use bandframe::{BlockSequence, Error};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(#[from] ConfigError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("numerical invariant violated: {0}")]
    Numerical(#[from] Error),
    #[error("resource bound exceeded: {0}")]
    Resource(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Numerical(Error::Io(_)) => 1,
            CliError::Numerical(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}

type Res<T> = std::result::Result<T, CliError>;

pub struct Ctx {
    pub cfg: RunConfig,
    pub model: HoppingTable,
    pub art: Artifacts,
    pub s: Summary,
}

fn cfg_err(key: &str, message: impl Into<String>) -> CliError {
    CliError::Config(ConfigError { key: key.into(), message: message.into() })
}

impl Ctx {
    fn n_k(&self) -> usize {
        self.cfg.grid.n_k.unwrap_or(self.cfg.lattice_box.l)
    }

    fn frame_cfg(&self) -> FrameConfig {
        FrameConfig { a_min: self.cfg.frame.a_min, jump_max: self.cfg.frame.jump_max }
    }

    fn check_grid(&self) -> Res<()> {
        let pts = self.n_k().checked_pow(self.model.dim as u32).unwrap_or(usize::MAX);
        if pts > self.cfg.limits.max_grid {
            return Err(CliError::Resource(format!("grid has {pts} points, limits.max_grid is {}", self.cfg.limits.max_grid)));
        }
        Ok(())
    }

    /// Box checks shared by every subcommand that builds a magnetic operator.
    fn check_box(&self) -> Res<()> {
        if self.model.dim != 2 {
            return Err(cfg_err("model", "magnetic subcommands need a two-dimensional model"));
        }
        let l = self.cfg.lattice_box.l;
        if self.n_k() != l {
            return Err(cfg_err("grid.n_k", format!("magnetic runs use n_k = box.L = {l}, got {}", self.n_k())));
        }
        let dim = l * l * self.model.orbitals;
        if dim > self.cfg.limits.max_dim {
            return Err(CliError::Resource(format!("box dimension L^d M = {dim} exceeds limits.max_dim = {}", self.cfg.limits.max_dim)));
        }
        self.check_grid()
    }

    fn pipeline_cfg(&self) -> PipelineConfig {
        let c = &self.cfg;
        PipelineConfig {
            model: self.model.clone(),
            k0: c.family.k0,
            n: c.family.n,
            l: c.lattice_box.l,
            nb_start: c.frame.nb_start.unwrap_or(c.family.n + 1),
            rng_seed: c.frame.seed,
            frame: self.frame_cfg(),
            gap_tol: c.family.gap_tol,
            delta: c.window.delta,
        }
    }

    fn setup(&self, eps: f64) -> Res<MagneticSetup> {
        let m = &self.cfg.magnetic;
        Ok(MagneticSetup::new(ConstantField::planar(m.b), self.cfg.fluctuation(), eps, m.c)?)
    }

    fn json(&mut self, name: &str, v: &impl Serialize) -> Res<()> {
        Ok(self.art.json(name, v)?)
    }
}

struct FamilyStage {
    bands: BandStructure,
    family: IsolatedFamily,
    field: ProjectionField,
}

fn family_stage(ctx: &mut Ctx) -> Res<FamilyStage> {
    ctx.check_grid()?;
    let grid = ReciprocalGrid::new(ctx.model.dim, ctx.n_k())?;
    let bands = compute_bands(&ctx.model, &grid);
    ctx.s.at_most("band eigen-residual", bands.residual(), 1e-10);
    let e0 = bands.eigenvalues.iter().map(|l| l[0]).fold(f64::INFINITY, f64::min);
    ctx.s.set("E_0", e0);
    if !(e0 > 0.0) {
        return Err(Error::InvalidModel(format!("spectrum must be bounded below by a positive E_0, got {e0}")).into());
    }
    let f = &ctx.cfg.family;
    let family = detect_isolated_family(&bands, f.k0, f.n, f.gap_tol)?;
    let field = band_projection_field(&bands, &family)?;
    ctx.s.at_most("spectral-sum and contour projections agree", field.riesz_agreement, 1e-8);
    let chern = if ctx.model.dim == 2 { Some(chern_number(&field)?) } else { None };
    ctx.s.set("chern", chern);
    ctx.art.write_with("bands.csv", |mut w| bands.write_csv(&mut w))?;
    ctx.json("family.json", &FamilyReport { family: family.clone(), chern })?;
    Ok(FamilyStage { bands, family, field })
}

pub fn bands(ctx: &mut Ctx) -> Res<()> {
    let st = family_stage(ctx)?;
    ctx.s.set("rank", st.family.rank());
    ctx.s.set("g_local", st.family.g_local);
    Ok(())
}

fn frame_stage(ctx: &mut Ctx, st: &FamilyStage) -> Res<FrameField> {
    let start = ctx.cfg.frame.nb_start.unwrap_or(st.family.rank());
    let search = search_frame(&st.field, start, ctx.cfg.frame.seed, &ctx.frame_cfg())?;
    let frame = search.frame;
    if let Some((nb, why)) = search.attempts.last() {
        ctx.s.warn(format!("frame search escalated from n_B = {start} to n_B = {} ({} failed: {why})", frame.nb, nb));
    }
    if search.beyond_bound {
        ctx.s.warn(format!("n_B = {} exceeds N + 1 + ceil(d/2)", frame.nb));
    }
    ctx.s.at_most("Parseval defect of the frame field", frame.parseval_defect(&st.field), 1e-10);
    ctx.s.at_most("frame field stays in the family range", frame.range_defect(&st.field), 1e-10);
    ctx.s.at_least("frame lower bound", frame.lower_bound, ctx.cfg.frame.a_min);
    ctx.s.at_most("max neighbour jump of the frame", frame.max_jump, ctx.cfg.frame.jump_max);
    ctx.s.set("nB", frame.nb);
    ctx.json("frame.json", &frame.to_json())?;
    Ok(frame)
}

pub fn frame(ctx: &mut Ctx) -> Res<()> {
    let st = family_stage(ctx)?;
    frame_stage(ctx, &st)?;
    Ok(())
}

#[derive(Serialize)]
struct Decay {
    radius: usize,
    profile: Vec<f64>,
    norms_sq: Vec<f64>,
}

pub fn wannier(ctx: &mut Ctx) -> Res<()> {
    let st = family_stage(ctx)?;
    let frame = frame_stage(ctx, &st)?;
    let w = to_wannier_cell(&frame);
    let norms = w.norms_sq();
    let total: f64 = norms.iter().sum();
    ctx.s.at_most("sum of Wannier norms equals the band rank", (total - st.family.rank() as f64).abs(), 1e-8);
    ctx.art.write_with("wannier.csv", |mut o| w.write_csv(&mut o))?;
    ctx.json("decay.json", &Decay { radius: w.radius(), profile: w.decay_profile(), norms_sq: norms })?;
    Ok(())
}

/// Largest deviation of the top `rank` eigenvalues of `m0(theta)` from the
/// family bands over the grid, and the size of what the truncation dropped:
/// at most `8 (r + 1)` blocks, each no larger than the outermost kept shell.
fn m0_band_deviation(m0: &BlockSequence, st_bands: &BandStructure, family: &IsolatedFamily) -> (f64, f64) {
    let grid = st_bands.grid;
    let shells = if m0.dim == 2 { 8 * (m0.radius + 1) } else { 2 };
    let dropped = shells as f64 * m0.tail;
    let rank = family.rank();
    let dev = (0..grid.len())
        .map(|i| {
            let th = grid.theta(i);
            let mut f = linalg::zeros(m0.n, m0.n);
            for (g, b) in &m0.blocks {
                let ph: f64 = (0..m0.dim).map(|a| th[a] * g[a] as f64).sum();
                f += linalg::scale(b.as_ref(), linalg::cis(-ph));
            }
            let ev = linalg::eigvalsh(f.as_ref());
            let want = &st_bands.eigenvalues[i][family.k0 - 1..family.k0 - 1 + rank];
            ev[ev.len() - rank..].iter().zip(want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)
        })
        .fold(0.0, f64::max);
    (dev, dropped)
}

fn certify_m0(s: &mut Summary, m0: &BlockSequence, bands: &BandStructure, family: &IsolatedFamily) {
    s.at_most("m0 is self-adjoint", m0.self_adjoint_defect(), 1e-10);
    let (dev, dropped) = m0_band_deviation(m0, bands, family);
    s.set("m0_tail", m0.tail);
    s.at_most("m0 reproduces the family bands up to its truncation", dev, 1e-10 + dropped);
}

fn prepared(ctx: &mut Ctx) -> Res<Prepared> {
    ctx.check_box()?;
    let prep = prepare(&ctx.pipeline_cfg())?;
    let start = ctx.cfg.frame.nb_start.unwrap_or(prep.family.rank());
    if prep.search.frame.nb > start && !ctx.s.warnings.iter().any(|w| w.starts_with("frame search escalated")) {
        ctx.s.warn(format!("frame search escalated from n_B = {start} to n_B = {}", prep.search.frame.nb));
    }
    ctx.s.set("E_0", prep.e0);
    ctx.s.set("chern", prep.chern);
    ctx.s.set("nB", prep.search.frame.nb);
    ctx.s.set("window", (prep.window.a, prep.window.b, prep.window.delta));
    Ok(prep)
}

fn is_dichotomy_loss(e: &Error) -> bool {
    matches!(e, Error::NoSpectralDichotomy(_) | Error::ProjectionsTooFar(_))
}

/// One magnetic point per `eps`; points where the frame dichotomy is lost are
/// skipped with a warning and recorded.
fn points(ctx: &mut Ctx, prep: &Prepared) -> Res<Vec<(usize, f64, MagneticPoint)>> {
    let eps: Vec<f64> = ctx.cfg.eps_list().to_vec();
    let mut out = Vec::new();
    let mut lost = Vec::new();
    let mut last_err = None;
    for (i, &e) in eps.iter().enumerate() {
        match magnetic_point(prep, ctx.setup(e)?) {
            Ok(pt) => out.push((i, e, pt)),
            Err(err) if is_dichotomy_loss(&err) => {
                ctx.s.warn(format!("eps = {e}: {err}; point skipped"));
                lost.push(e);
                last_err = Some(err);
            }
            Err(err) => return Err(err.into()),
        }
    }
    ctx.s.set("dichotomy_lost_at", &lost);
    if out.is_empty() {
        if let Some(e) = last_err {
            return Err(e.into());
        }
        return Err(cfg_err("magnetic.eps_list", "no field strengths to run"));
    }
    Ok(out)
}

fn certify_point(s: &mut Summary, e: f64, c: f64, pt: &MagneticPoint) {
    s.at_most(&format!("eps {e:.6}: magnetic frame is Parseval for P"), pt.mframe.parseval_p, 1e-8);
    if c == 0.0 {
        s.at_most(&format!("eps {e:.6}: effective matrix has the phase structure"), pt.structure.max_violation, 1e-6);
    }
}

pub fn effective(ctx: &mut Ctx) -> Res<()> {
    let prep = prepared(ctx)?;
    certify_m0(&mut ctx.s, &prep.m0, &prep.bands, &prep.family);
    ctx.json("m0.json", &prep.m0.to_file())?;
    let c = ctx.cfg.magnetic.c;
    let pts = points(ctx, &prep)?;
    let mut reports = Vec::new();
    for (i, e, pt) in &pts {
        certify_point(&mut ctx.s, *e, c, pt);
        let op = pt.effective_operator()?;
        ctx.s.at_most(&format!("eps {e:.6}: effective operator is self-adjoint"), op.herm_defect(), 1e-10);
        ctx.json(&format!("m_eps_{i}.json"), &pt.m_eps.to_file())?;
        reports.push(pt.report(prep.chern));
    }
    ctx.json("reports.json", &reports)?;
    Ok(())
}

/// Drop blocks with norm below `tol`.
fn prune(m: &BlockSequence, tol: f64) -> BlockSequence {
    let blocks = m.blocks.iter().filter(|(_, b)| linalg::op_norm(b.as_ref()) >= tol).map(|(g, b)| (*g, b.clone())).collect();
    BlockSequence::from_blocks(m.dim, m.n, blocks)
}

/// Smallest radius beyond which every shell of `m` is below `tol`.
fn tail_radius(m: &BlockSequence, tol: f64) -> usize {
    (0..=m.radius).rev().find(|&r| m.shell_norm(r) >= tol).unwrap_or(0)
}

fn gcd(a: usize, b: usize) -> usize {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

pub fn butterfly(ctx: &mut Ctx) -> Res<()> {
    let prep = prepared(ctx)?;
    let b = ctx.cfg.butterfly.clone();
    let r = tail_radius(&prep.m0, b.tail_tol);
    let m = prune(&prep.m0.truncate(r), b.tail_tol);
    ctx.s.set("symbol_radius", r);
    let harper = HarperSymbol::from_sequence(&m).is_some();
    let mut rows = Vec::new();
    let mut boxes = Vec::new();
    for q in 1..=b.q_max {
        let base = b.min_l.max(2 * r + 2);
        let mut l = base.div_ceil(q) * q;
        if l % 2 == 1 {
            l += q;
        }
        let dim = l * l * m.n;
        if dim > ctx.cfg.limits.max_dim {
            return Err(CliError::Resource(format!("butterfly box for q = {q} has dimension {dim}, limits.max_dim is {}", ctx.cfg.limits.max_dim)));
        }
        let fluxes: Vec<(i64, usize)> = (0..q).filter(|&p| gcd(p, q) == 1).map(|p| (p as i64, q)).collect();
        let part = butterfly_sweep(&m, &fluxes, l)?;
        if harper {
            for ((p, q), dev) in butterfly_oracle_deviation(&m, &part, l)? {
                ctx.s.at_most(&format!("flux {p}/{q}: spectrum matches the Harper oracle"), dev, 1e-8);
            }
        }
        boxes.push((q, l));
        rows.extend(part);
    }
    if !harper {
        ctx.s.warn("no closed-form oracle for this symbol; spectra are reported without comparison".into());
    }
    ctx.s.set("boxes", &boxes);
    ctx.art.write_with("butterfly.csv", |mut w| write_butterfly_csv(&rows, &mut w))?;
    Ok(())
}

pub fn compare(ctx: &mut Ctx) -> Res<()> {
    let prep = prepared(ctx)?;
    let j = prep.window.middle_half();
    let c = ctx.cfg.magnetic.c;
    let pts = points(ctx, &prep)?;
    let (mut eps, mut dist) = (Vec::new(), Vec::new());
    for (_, e, pt) in &pts {
        certify_point(&mut ctx.s, *e, c, pt);
        eps.push(*e);
        dist.push(pt.hausdorff(j)?);
    }
    let rep = ScalingReport::new("hausdorff", "eps", eps, dist, &ctx.s.fingerprint);
    ctx.s.set("window_J", j);
    ctx.s.set("slope", rep.slope());
    ctx.s.set("fit", rep.fit);
    ctx.art.write_with("hausdorff.csv", |mut w| rep.write_csv(&mut w))?;
    ctx.json("scaling.json", &rep)?;
    Ok(())
}

#[derive(Serialize)]
struct SchurRow {
    eps: f64,
    feshbach: f64,
    roots: Vec<f64>,
    eigenvalues: Vec<(f64, f64)>,
    complement_floor: f64,
}

pub fn schur(ctx: &mut Ctx) -> Res<()> {
    let prep = prepared(ctx)?;
    let jd = prep.window.j_delta();
    let lambda = prep.window.midpoint();
    let c = ctx.cfg.magnetic.c;
    let n_grid = ctx.cfg.schur.n_grid;
    let pts = points(ctx, &prep)?;
    let mut rows = Vec::new();
    for (_, e, pt) in &pts {
        certify_point(&mut ctx.s, *e, c, pt);
        let rep = schur_spectrum_check(&pt.h.blocks()[0], &pt.mframe.projection.blocks()[0], jd, n_grid)?;
        ctx.s.check(&format!("eps {e:.6}: Schur roots match the spectrum of H in the window"), rep.passed);
        rows.push(SchurRow { eps: *e, feshbach: pt.feshbach(lambda)?, roots: rep.roots, eigenvalues: rep.eigenvalues, complement_floor: rep.complement_floor });
    }
    ctx.art.write_with("feshbach.csv", |w| {
        writeln!(w, "eps,feshbach_norm")?;
        for r in &rows {
            writeln!(w, "{:.15e},{:.15e}", r.eps, r.feshbach)?;
        }
        Ok(())
    })?;
    ctx.json("schur.json", &rows)?;
    Ok(())
}

pub fn evolve(ctx: &mut Ctx) -> Res<()> {
    let prep = prepared(ctx)?;
    let j = prep.window.middle_half();
    let c = ctx.cfg.magnetic.c;
    let ev = ctx.cfg.evolve.clone();
    let pts = points(ctx, &prep)?;
    let mut tables = Vec::new();
    for (_, e, pt) in &pts {
        certify_point(&mut ctx.s, *e, c, pt);
        let v = window_state(&pt.h, j, ev.seed)?;
        let t = dynamics_errors(pt, &v, &ev.times)?;
        ctx.s.at_most(&format!("eps {e:.6}: frame reconstruction of P v"), t.reconstruction, 1e-10);
        tables.push((*e, t));
    }
    ctx.art.write_with("dynamics.csv", |w| {
        writeln!(w, "t,eps,error")?;
        for (e, t) in &tables {
            for (time, err) in t.times.iter().zip(&t.errors) {
                writeln!(w, "{time:.15e},{e:.15e},{err:.15e}")?;
            }
        }
        Ok(())
    })?;
    let leak: Vec<(f64, f64)> = tables.iter().map(|(e, t)| (*e, t.leakage)).collect();
    ctx.s.set("leakage", leak);
    Ok(())
}

fn rand_herm(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = Mat::from_fn(n, n, |_, _| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    linalg::hermitize(a.as_ref())
}

fn rand_projection(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMat {
    let (_, v) = linalg::eigh(rand_herm(rng, n).as_ref());
    let b = v.subcols(0, rank).to_owned();
    &b * b.adjoint()
}

/// Model-independent algebra checks on small random matrices.
fn algebra_checks(s: &mut Summary, seed: u64) -> Res<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 12;
    let h = rand_herm(&mut rng, n);
    let p = rand_projection(&mut rng, n, 4);
    let sr = schur_resolvent(&h, &p, c64::new(0.1, 0.7))?;
    s.at_most("Schur complement inverts the resolvent", sr.identity_defect, 1e-10);

    let k = rand_herm(&mut rng, n);
    let u = linalg::herm_fn(k.as_ref(), |l| linalg::cis(0.2 * l));
    let q = &u * &p * u.adjoint();
    let w = nagy_matrix(&p, &q)?;
    let inter = &p * &w - &w * &q;
    let unit = w.adjoint() * &w - linalg::identity(n);
    s.at_most("Nagy unitary intertwines P and Q", linalg::op_norm(inter.as_ref()), 1e-10);
    s.at_most("Nagy intertwiner is unitary", linalg::op_norm(unit.as_ref()), 1e-10);

    let pt = &p + linalg::scale(linalg::hermitize((&k * 0.01).as_ref()).as_ref(), c64::new(1.0, 0.0));
    let th = theta_matrix(&pt)?;
    let (vals, vecs) = linalg::eigh(pt.as_ref());
    let qq = linalg::from_eig(&vals, vecs.as_ref(), |l| c64::new(if l > 0.5 { 1.0 } else { 0.0 }, 0.0));
    let chain = &th * &pt * &th - &qq;
    s.at_most("Theta P~ Theta equals the projection near one", linalg::op_norm(chain.as_ref()), 1e-10);

    let f = PlateauBump::new(-0.2, 0.2, 0.3);
    let hs = hs_function_of_matrix(&h, &f, 3);
    let exact = linalg::herm_fn(h.as_ref(), |l| c64::new(f.value(l), 0.0));
    s.at_most("almost-analytic calculus matches the spectral calculus", linalg::op_norm((&hs - &exact).as_ref()), 1e-8);
    Ok(())
}

/// Phase cocycle and sector folding on the configured box.
fn box_checks(ctx: &mut Ctx, seed: u64) -> Res<()> {
    let l = ctx.cfg.lattice_box.l;
    let eps = ctx.cfg.eps_list().first().copied().unwrap_or(0.0);
    let geom = Geometry::new(LatticeBox::periodic(2, l), ctx.setup(eps)?)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut site = || [rng.gen_range(-(l as i64)..l as i64), rng.gen_range(-(l as i64)..l as i64)];
    let mut worst: f64 = 0.0;
    for _ in 0..64 {
        let (x, y, z) = (site(), site(), site());
        let lhs = geom.lam_const(x, y) * geom.lam_const(y, z) * geom.lam_const(z, x);
        let rhs = geom.setup.flux_phase_const(&pt(x), &pt(y), &pt(z));
        worst = worst.max((lhs - rhs).norm());
    }
    ctx.s.at_most("magnetic phase cocycle", worst, 1e-12);
    let layout = SectorLayout::new(geom, ctx.model.orbitals);
    let v: Vec<c64> = (0..layout.dim()).map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let back = layout.unfold(&layout.fold(&v));
    let iso = (linalg::norm(&layout.fold(&v)) - linalg::norm(&v)).abs();
    ctx.s.at_most("sector fold is unitary", iso.max(linalg::norm(&linalg::sub(&back, &v))), 1e-12);
    Ok(())
}

fn pt(x: [i64; 2]) -> Vec<f64> {
    vec![x[0] as f64, x[1] as f64]
}

pub fn selftest(ctx: &mut Ctx) -> Res<()> {
    let seed = ctx.cfg.frame.seed.unwrap_or(7);
    algebra_checks(&mut ctx.s, seed)?;
    let st = family_stage(ctx)?;
    let frame = frame_stage(ctx, &st)?;
    let w = to_wannier_cell(&frame);
    let total: f64 = w.norms_sq().iter().sum();
    ctx.s.at_most("sum of Wannier norms equals the band rank", (total - st.family.rank() as f64).abs(), 1e-8);
    let radius = (ctx.n_k() / 2).saturating_sub(1);
    let m0 = frame.effective_hoppings(&st.field, radius)?;
    certify_m0(&mut ctx.s, &m0, &st.bands, &st.family);
    if ctx.model.dim != 2 {
        ctx.s.set("magnetic_checks", "skipped for a one-dimensional model");
        return Ok(());
    }
    box_checks(ctx, seed)?;
    let prep = prepared(ctx)?;
    let c = ctx.cfg.magnetic.c;
    let e = ctx.cfg.eps_list().first().copied().unwrap_or(0.0);
    let pt = magnetic_point(&prep, ctx.setup(e)?)?;
    certify_point(&mut ctx.s, e, c, &pt);
    let op = pt.effective_operator()?;
    ctx.s.at_most(&format!("eps {e:.6}: effective operator is self-adjoint"), op.herm_defect(), 1e-10);
    let st0 = pt.mframe.stages[0];
    ctx.s.at_most(&format!("eps {e:.6}: Nagy unitary intertwines P and Q"), st0.intertwining, 1e-10);
    ctx.s.at_most(&format!("eps {e:.6}: Theta chain"), st0.theta_chain, 1e-10);
    Ok(())
}
