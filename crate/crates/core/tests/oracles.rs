use bandframe::bloch::{band_projection_field, compute_bands, detect_isolated_family};
use bandframe::error::Error;
use bandframe::frames::{parsevalize, seed_candidates, seed_vectors, FrameConfig};
use bandframe::lattice::{Geometry, LatticeBox, SectorLayout};
use bandframe::linalg::{self, c64};
use bandframe::magnetic::{nagy_matrix, theta_matrix};
use bandframe::model::{chain1d, qwz, ReciprocalGrid};
use bandframe::phases::MagneticSetup;
use bandframe::pipeline::{prepare, PipelineConfig};
use bandframe::reduction::{hs_function_of_matrix, perturbed_band_projection, perturbed_band_projection_contour, schur_resolvent, PlateauBump, SmoothFunction};
use faer::Mat;
use std::f64::consts::PI;

#[test]
fn qwz_bands_match_closed_form() {
    let grid = ReciprocalGrid::new(2, 16).unwrap();
    let bands = compute_bands(&qwz(-1.0, 5.0), &grid);
    for i in 0..grid.len() {
        let t = grid.theta(i);
        let d = (t[0].sin().powi(2) + t[1].sin().powi(2) + (-1.0 + t[0].cos() + t[1].cos()).powi(2)).sqrt();
        let e = &bands.eigenvalues[i];
        assert!((e[0] - (5.0 - d)).abs() < 1e-12 && (e[1] - (5.0 + d)).abs() < 1e-12, "theta {t:?}");
    }
    assert!(bands.residual() < 1e-13);
}

#[test]
fn chain_band_is_a_cosine() {
    let grid = ReciprocalGrid::new(1, 12).unwrap();
    let bands = compute_bands(&chain1d(3.0), &grid);
    for i in 0..grid.len() {
        let t = grid.theta(i)[0];
        assert!((bands.eigenvalues[i][0] - (3.0 + 2.0 * t.cos())).abs() < 1e-13);
    }
}

#[test]
fn unshifted_qwz_is_rejected() {
    let cfg = PipelineConfig::new(qwz(-1.0, 3.0), 8);
    assert!(matches!(prepare(&cfg), Err(Error::InvalidModel(_))));
}

#[test]
fn single_seed_frames_are_deficient() {
    let bands = compute_bands(&qwz(-1.0, 5.0), &ReciprocalGrid::new(2, 32).unwrap());
    let fam = detect_isolated_family(&bands, 1, 0, 1e-6).unwrap();
    let field = band_projection_field(&bands, &fam).unwrap();
    for seed in [1u64, 2, 3, 4, 5] {
        let cands = seed_candidates(&field, &seed_vectors(2, 1, Some(seed))).unwrap();
        let r = parsevalize(&cands, &field, &FrameConfig::default());
        assert!(matches!(r, Err(Error::FrameDeficient { .. })), "seed {seed}");
    }
}

#[test]
fn scalar_schur_complement() {
    let (a, d, b, z) = (1.0, -0.5, c64::new(0.3, 0.4), c64::new(0.2, 0.7));
    let h = Mat::from_fn(2, 2, |i, j| match (i, j) {
        (0, 0) => c64::new(a, 0.0),
        (1, 1) => c64::new(d, 0.0),
        (0, 1) => b,
        _ => b.conj(),
    });
    let p = Mat::from_fn(2, 2, |i, j| c64::new(if i == 0 && j == 0 { 1.0 } else { 0.0 }, 0.0));
    let s = schur_resolvent(&h, &p, z).unwrap();
    // |b|^2 = 0.25
    let want = c64::new(1.0, 0.0) / (a - z - 0.25 / (d - z));
    assert!((s.rtilde[(0, 0)] - want).norm() < 1e-12);
    assert!((s.feshbach[(0, 0)] - 0.25 / (d - z)).norm() < 1e-12);
}

#[test]
fn nagy_rotates_lines() {
    let th: f64 = 0.3;
    let (c, s) = (th.cos(), th.sin());
    let p = Mat::from_fn(2, 2, |i, j| c64::new(if i == 0 && j == 0 { 1.0 } else { 0.0 }, 0.0));
    let v = [c, s];
    let q = Mat::from_fn(2, 2, |i, j| c64::new(v[i] * v[j], 0.0));
    let u = nagy_matrix(&p, &q).unwrap();
    let want = [[c, s], [-s, c]];
    for i in 0..2 {
        for j in 0..2 {
            assert!((u[(i, j)] - c64::new(want[i][j], 0.0)).norm() < 1e-12);
        }
    }
}

#[test]
fn theta_of_diagonal() {
    let t = theta_matrix(&linalg::diag_real(&[0.98, 0.02])).unwrap();
    assert!((t[(0, 0)].re - 0.98f64.powf(-0.5)).abs() < 1e-14);
    assert!(t[(1, 1)].norm() < 1e-14 && t[(0, 1)].norm() < 1e-14);
    let mid = theta_matrix(&linalg::diag_real(&[0.98, 0.5]));
    assert!(matches!(mid, Err(Error::NoSpectralDichotomy(_))));
}

#[test]
fn hs_reproduces_bump_values() {
    let f = PlateauBump::new(0.5, 1.2, 0.4);
    let d = [0.0, 1.0, 2.0];
    let got = hs_function_of_matrix(&linalg::diag_real(&d), &f, 2);
    for (i, &l) in d.iter().enumerate() {
        assert!((got[(i, i)].re - f.value(l)).abs() < 1e-8, "lambda {l}");
    }
    let edge = hs_function_of_matrix(&linalg::diag_real(&[0.3]), &f, 3);
    assert!((edge[(0, 0)].re - f.value(0.3)).abs() < 1e-8);
}

#[test]
fn perturbed_projection_has_band_rank() {
    let prep = prepare(&PipelineConfig::new(qwz(-1.0, 5.0), 8)).unwrap();
    let geom = Geometry::new(LatticeBox::periodic(2, 8), MagneticSetup::planar_flux(0.0)).unwrap();
    let layout = SectorLayout::new(geom, 2);
    let p = perturbed_band_projection(&prep.h_perp, &layout, prep.e0).unwrap();
    assert!((p.trace().re - 64.0).abs() < 1e-8);
    assert!(p.idempotency_defect() < 1e-10 && p.herm_defect() < 1e-12);
}

// A Chern band gains C states per flux quantum through the torus.
#[test]
fn band_rank_shifts_by_chern_times_flux_quanta() {
    let l = 32;
    let prep = prepare(&PipelineConfig::new(qwz(-1.0, 5.0), l)).unwrap();
    let c = prep.chern.unwrap() as f64;
    for k in 1..=2 {
        let geom = Geometry::new(LatticeBox::periodic(2, l), MagneticSetup::planar_flux(2.0 * PI * k as f64 / l as f64)).unwrap();
        let layout = SectorLayout::new(geom, 2);
        let p = perturbed_band_projection(&prep.h_perp, &layout, prep.e0).unwrap();
        let quanta = (k * l) as f64;
        assert!((p.trace().re - ((l * l) as f64 + c * quanta)).abs() < 1e-8, "k={k}");
        assert!(p.idempotency_defect() < 1e-10);
        let pc = perturbed_band_projection_contour(&prep.h_perp, &layout, prep.e0, 128).unwrap();
        assert!(p.sub(&pc).op_norm() < 1e-8);
    }
}
