//! End-to-end runs: unperturbed frame data once per model, then one magnetic
//! point per field setup, and the comparisons built on top.

use crate::bloch::{band_kernel, band_projection_field, chern_number, compute_bands, detect_isolated_family, BandStructure, IsolatedFamily, ProjectionField};
use crate::error::{Error, Result};
use crate::frames::{search_frame, to_wannier_cell, FrameConfig, FrameSearch, WannierFrame};
use crate::lattice::{DenseOperator, Geometry, LatticeBox, SectorLayout};
use crate::linalg::{self, c64};
use crate::magnetic::{build_magnetic_frame, effective_matrix, magnetic_quantize, MagneticFrame, PipelineNorms, PipelineReport, StructureReport};
use crate::model::{kernel_split, real_space_hamiltonian, HoppingTable, ReciprocalGrid};
use crate::phases::{rational_flux, FluctuationPotential, FluctuationTerm, MagneticSetup};
use crate::reduction::{feshbach_norm, SpectralWindow};
use crate::sequence::BlockSequence;
use crate::validate::{hausdorff_in_window, Propagator, SpectrumSet, SpectrumSource};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

#[derive(Clone, Debug)]
pub struct PipelineConfig {
    pub model: HoppingTable,
    pub k0: usize,
    pub n: usize,
    /// Box side; also the number of grid points per axis.
    pub l: usize,
    pub nb_start: usize,
    pub rng_seed: Option<u64>,
    pub frame: FrameConfig,
    pub gap_tol: f64,
    pub delta: Option<f64>,
}

impl PipelineConfig {
    pub fn new(model: HoppingTable, l: usize) -> Self {
        Self { model, k0: 1, n: 0, l, nb_start: 1, rng_seed: None, frame: FrameConfig::default(), gap_tol: 1e-6, delta: None }
    }
}

/// Everything that does not depend on the field.
#[derive(Clone, Debug)]
pub struct Prepared {
    pub cfg: PipelineConfig,
    pub grid: ReciprocalGrid,
    pub bands: BandStructure,
    pub family: IsolatedFamily,
    pub field: ProjectionField,
    pub search: FrameSearch,
    pub chern: Option<i64>,
    /// Wannier functions over one full period.
    pub wannier: WannierFrame,
    /// Unperturbed effective hoppings up to `L/2 - 1`.
    pub m0: BlockSequence,
    pub h_b: HoppingTable,
    pub h_perp: HoppingTable,
    /// Bottom of the spectrum.
    pub e0: f64,
    pub window: SpectralWindow,
}

pub fn prepare(cfg: &PipelineConfig) -> Result<Prepared> {
    let h = &cfg.model;
    let grid = ReciprocalGrid::new(h.dim, cfg.l)?;
    let bands = compute_bands(h, &grid);
    let e0 = bands.eigenvalues.iter().map(|l| l[0]).fold(f64::INFINITY, f64::min);
    if !(e0 > 0.0) {
        return Err(Error::InvalidModel(format!("spectrum must be bounded below by a positive E_0, got {e0}; raise the shift")));
    }
    let family = detect_isolated_family(&bands, cfg.k0, cfg.n, cfg.gap_tol)?;
    let field = band_projection_field(&bands, &family)?;
    let chern = if h.dim == 2 { Some(chern_number(&field)?) } else { None };
    let search = search_frame(&field, cfg.nb_start, cfg.rng_seed, &cfg.frame)?;
    let wannier = to_wannier_cell(&search.frame);
    let radius = cfg.l / 2 - 1;
    let m0 = search.frame.effective_hoppings(&field, radius)?;
    let kernel = band_kernel(&field, radius)?;
    let (h_b, h_perp) = kernel_split(h, &kernel)?;
    let window = SpectralWindow::from_family(&family, cfg.delta)?;
    Ok(Prepared { cfg: cfg.clone(), grid, bands, family, field, search, chern, wannier, m0, h_b, h_perp, e0, window })
}

/// The fixed fluctuation potential used for `c != 0` studies:
/// `A(x) = a (sin(2 pi x_2 / 8), sin(2 pi x_1 / 8))`, period 8, not a gradient.
pub fn standard_fluctuation(a: f64) -> FluctuationPotential {
    sine_fluctuation(a, 8)
}

/// `A(x) = a (sin(2 pi x_2 / n), sin(2 pi x_1 / n))`.
pub fn sine_fluctuation(a: f64, period: usize) -> FluctuationPotential {
    let k = 2.0 * PI / period as f64;
    FluctuationPotential {
        constant: vec![0.0, 0.0],
        terms: vec![
            FluctuationTerm { wavevector: vec![0.0, k], cos_amp: vec![0.0, 0.0], sin_amp: vec![a, 0.0] },
            FluctuationTerm { wavevector: vec![k, 0.0], cos_amp: vec![0.0, 0.0], sin_amp: vec![0.0, a] },
        ],
    }
}

/// Setup with flux per plaquette `eps * b` for `b = 1`.
pub fn setup_for(flux: f64, fluct: Option<&FluctuationPotential>, c: f64) -> Result<MagneticSetup> {
    let base = MagneticSetup::planar_flux(flux);
    match fluct {
        Some(f) if c != 0.0 => MagneticSetup::new(base.constant.clone(), f.clone(), flux, c),
        _ => Ok(base),
    }
}

/// One field setup carried through the whole construction.
#[derive(Clone, Debug)]
pub struct MagneticPoint {
    pub setup: MagneticSetup,
    pub layout: Arc<SectorLayout>,
    pub h: DenseOperator,
    pub mframe: MagneticFrame,
    /// Dressed effective hoppings over one full period.
    pub m_eps: BlockSequence,
    pub structure: StructureReport,
}

pub fn magnetic_point(prep: &Prepared, setup: MagneticSetup) -> Result<MagneticPoint> {
    let geom = Geometry::new(LatticeBox::periodic(prep.cfg.model.dim, prep.cfg.l), setup.clone())?;
    let layout = SectorLayout::new(geom, prep.cfg.model.orbitals);
    let h = real_space_hamiltonian(&prep.cfg.model, &layout)?;
    let mframe = build_magnetic_frame(&prep.wannier, &prep.h_perp, &layout, prep.e0)?;
    let (m_eps, structure) = effective_matrix(&mframe, &h)?;
    Ok(MagneticPoint { setup, layout, h, mframe, m_eps, structure })
}

impl MagneticPoint {
    pub fn effective_operator(&self) -> Result<DenseOperator> {
        Ok(magnetic_quantize(&self.m_eps, &self.mframe.frame.coef_layout)?.op)
    }

    /// `|P H R_perp(lambda) H P|`.
    pub fn feshbach(&self, lambda: f64) -> Result<f64> {
        feshbach_norm(&self.h, &self.mframe.projection, lambda)
    }

    /// `sup_gamma <gamma>^2 |m^eps_gamma - m0_gamma|` over the range of `m0`.
    pub fn dressing(&self, m0: &BlockSequence) -> f64 {
        self.m_eps.truncate(m0.radius).weighted_distance(m0, 1)
    }

    pub fn hausdorff(&self, window: (f64, f64)) -> Result<f64> {
        let full = SpectrumSet::new(self.h.eigenvalues(), SpectrumSource::Full)?;
        let eff = SpectrumSet::new(self.effective_operator()?.eigenvalues(), SpectrumSource::Effective)?;
        hausdorff_in_window(&full, &eff, window)
    }

    pub fn report(&self, chern: Option<i64>) -> PipelineReport {
        let st = self.mframe.stages.last().copied().unwrap_or_default();
        let flux = rational_flux(self.setup.flux(), 4096).map(|(p, q)| [p, q as i64]).unwrap_or([0, 0]);
        PipelineReport {
            eps: self.setup.eps,
            c: self.setup.c,
            flux,
            norms: PipelineNorms { ptilde_idem: st.ptilde_idem, p_minus_q: st.p_minus_q, structure_violation: self.structure.max_violation },
            nb: self.mframe.frame.nb,
            chern,
        }
    }
}

/// Normalized `E_J(H) x` for a seeded random `x`.
pub fn window_state(h: &DenseOperator, window: (f64, f64), seed: u64) -> Result<Vec<c64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x: Vec<c64> = (0..h.dim()).map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
    let e = h.spectral_projection(|l| l >= window.0 && l <= window.1);
    let v = e.apply(&x);
    let n = linalg::norm(&v);
    if n == 0.0 {
        return Err(Error::InvalidArgument(format!("no spectrum of H in [{}, {}]", window.0, window.1)));
    }
    Ok(v.into_iter().map(|z| z / n).collect())
}

/// Error table of the frame-lifted effective evolution.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsTable {
    pub times: Vec<f64>,
    pub errors: Vec<f64>,
    /// `|C^* C P v - P v|`.
    pub reconstruction: f64,
    /// `|(1 - P) v|`.
    pub leakage: f64,
}

/// `|e^{-itH} v - C^* e^{-it Op(m)} C P v|` over `times`.
pub fn dynamics_errors(pt: &MagneticPoint, v: &[c64], times: &[f64]) -> Result<DynamicsTable> {
    let f = &pt.mframe.frame;
    let pv = pt.mframe.projection.apply(v);
    let c0 = f.analysis(&pv);
    let rec = linalg::norm(&linalg::sub(&f.synthesis(&c0), &pv));
    let leakage = linalg::norm(&linalg::sub(v, &pv));
    let full = Propagator::new(&pt.h);
    let eff = Propagator::new(&pt.effective_operator()?);
    let errors = times
        .iter()
        .map(|&t| {
            let a = full.evolve(v, t);
            let b = f.synthesis(&eff.evolve(&c0, t));
            linalg::norm(&linalg::sub(&a, &b))
        })
        .collect();
    Ok(DynamicsTable { times: times.to_vec(), errors, reconstruction: rec, leakage })
}
