use bandframe::lattice::{Geometry, LatticeBox, SectorLayout, Site};
use bandframe::linalg::{self, c64, CMat};
use bandframe::magnetic::{magnetic_quantize, nagy_matrix, projection_near_one_matrix, theta_matrix, theta_matrix_contour};
use bandframe::phases::MagneticSetup;
use bandframe::reduction::schur_resolvent;
use bandframe::sequence::BlockSequence;
use bandframe::validate::{evolve, hausdorff_in_window, SpectrumSet, SpectrumSource};
use faer::Mat;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
}

fn rand_herm(rng: &mut ChaCha8Rng, n: usize) -> CMat {
    let a = Mat::from_fn(n, n, |_, _| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    linalg::hermitize(a.as_ref())
}

fn rand_projection(rng: &mut ChaCha8Rng, n: usize, rank: usize) -> CMat {
    let (_, v) = linalg::eigh(rand_herm(rng, n).as_ref());
    let q = v.subcols(0, rank).to_owned();
    &q * q.adjoint()
}

fn geom(l: usize, p: i64, q: usize) -> Geometry {
    Geometry::new(LatticeBox::periodic(2, l), MagneticSetup::planar_flux(2.0 * PI * p as f64 / q as f64)).unwrap()
}

fn site() -> impl Strategy<Value = Site> {
    [-40i64..40, -40i64..40]
}

/// Box side 12 and a flux `2 pi p / q` it is commensurate with.
fn flux() -> impl Strategy<Value = (i64, usize)> {
    (prop::sample::select(vec![1usize, 2, 3, 4, 6, 12]), 0i64..12).prop_map(|(q, p)| (p % q as i64, q))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn peierls_phase_is_a_cocycle((p, q) in flux(), a in site(), b in site(), c in site()) {
        let g = geom(12, p, q);
        let ab = [a[0] + b[0], a[1] + b[1]];
        let bc = [b[0] + c[0], b[1] + c[1]];
        let lhs = g.lam(a, b) * g.lam(ab, c);
        let rhs = g.lam(a, bc) * g.lam(b, c);
        prop_assert!((lhs - rhs).norm() < 1e-12);
        prop_assert!((g.lam(a, b) * g.lam(b, a) - c64::new(1.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn zak_translations_compose_projectively((p, q) in flux(), a in site(), b in site(), seed in any::<u64>()) {
        let g = geom(12, p, q);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = rand_vec(&mut rng, 144);
        let ab = [a[0] + b[0], a[1] + b[1]];
        let lhs = g.zak(a, &g.zak(b, &f, 1), 1);
        let rhs: Vec<c64> = g.zak(ab, &f, 1).into_iter().map(|z| z * g.lam(b, a)).collect();
        prop_assert!(linalg::norm(&linalg::sub(&lhs, &rhs)) < 1e-11);
        prop_assert!((linalg::norm(&g.zak(a, &f, 1)) - linalg::norm(&f)).abs() < 1e-11);
    }

    #[test]
    fn stokes_phase_is_the_enclosed_flux(x in prop::array::uniform2(-20.0f64..20.0), y in prop::array::uniform2(-20.0f64..20.0), z in prop::array::uniform2(-20.0f64..20.0), phi in 0.0f64..6.0) {
        let s = MagneticSetup::planar_flux(phi);
        let area = 0.5 * ((y[0] - x[0]) * (z[1] - x[1]) - (y[1] - x[1]) * (z[0] - x[0]));
        let want = linalg::cis(-phi * area);
        prop_assert!((s.flux_phase(&x, &y, &z) - want).norm() < 1e-10);
    }

    #[test]
    fn fold_is_unitary((p, q) in flux(), orbitals in 1usize..3, seed in any::<u64>()) {
        let layout = SectorLayout::new(geom(12, p, q), orbitals);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let v = rand_vec(&mut rng, layout.dim());
        let w = layout.fold(&v);
        prop_assert!((linalg::norm(&w) - linalg::norm(&v)).abs() < 1e-11);
        prop_assert!(linalg::norm(&linalg::sub(&layout.unfold(&w), &v)) < 1e-11);
    }

    #[test]
    fn quantized_self_adjoint_symbol_is_hermitian((p, q) in flux(), n in 1usize..3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut blocks: BTreeMap<Site, CMat> = BTreeMap::new();
        for a in -2i64..=2 {
            for b in -2i64..=2 {
                if blocks.contains_key(&[a, b]) {
                    continue;
                }
                let x = Mat::from_fn(n, n, |_, _| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
                if a == 0 && b == 0 {
                    blocks.insert([0, 0], linalg::hermitize(x.as_ref()));
                } else {
                    blocks.insert([-a, -b], x.adjoint().to_owned());
                    blocks.insert([a, b], x);
                }
            }
        }
        let m = BlockSequence::from_blocks(2, n, blocks);
        prop_assert!(m.self_adjoint_defect() < 1e-14);
        let layout = SectorLayout::new(geom(12, p, q), n);
        let op = magnetic_quantize(&m, &layout).unwrap().op;
        prop_assert!(op.herm_defect() < 1e-12);
    }

    #[test]
    fn schur_blocks_invert_the_resolvent(n in 4usize..14, rank_frac in 0.1f64..0.9, re in -2.0f64..2.0, im in 0.1f64..2.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rand_herm(&mut rng, n);
        let rank = ((n as f64 * rank_frac) as usize).clamp(1, n - 1);
        let p = rand_projection(&mut rng, n, rank);
        let s = schur_resolvent(&h, &p, c64::new(re, im)).unwrap();
        prop_assert!(s.identity_defect < 1e-10);
        prop_assert_eq!(s.range_basis.ncols(), rank);
    }

    #[test]
    fn nagy_unitary_intertwines(n in 3usize..10, t in 0.0f64..0.3, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let rank = 1 + n / 3;
        let p = rand_projection(&mut rng, n, rank);
        let k = rand_herm(&mut rng, n);
        let u = linalg::herm_fn(k.as_ref(), |l| linalg::cis(t * l));
        let q = &(&u * &p) * u.adjoint();
        let w = nagy_matrix(&p, &q).unwrap();
        prop_assert!(linalg::max_abs((&(&p * &w) - &(&w * &q)).as_ref()) < 1e-10);
        let id = linalg::identity(n);
        prop_assert!(linalg::max_abs((&(w.adjoint() * &w) - &id).as_ref()) < 1e-10);
    }

    #[test]
    fn theta_normalizes_the_almost_projection(n in 3usize..10, noise in 0.0f64..0.1, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let p = rand_projection(&mut rng, n, 1 + n / 2);
        let e = rand_herm(&mut rng, n);
        let pt = &p + &linalg::scale(e.as_ref(), c64::new(noise / (1.0 + linalg::op_norm(e.as_ref())), 0.0));
        let theta = theta_matrix(&pt).unwrap();
        let q = projection_near_one_matrix(&pt).unwrap();
        let chain = &(&theta * &pt) * &theta;
        prop_assert!(linalg::max_abs((&chain - &q).as_ref()) < 1e-10);
        let contour = theta_matrix_contour(&pt, 256).unwrap();
        prop_assert!(linalg::max_abs((&contour - &theta).as_ref()) < 1e-8);
    }

    #[test]
    fn evolution_is_a_unitary_group(n in 2usize..10, s in -3.0f64..3.0, t in -3.0f64..3.0, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = rand_herm(&mut rng, n);
        let v = rand_vec(&mut rng, n);
        let two = evolve(&h, &evolve(&h, &v, s), t);
        let one = evolve(&h, &v, s + t);
        prop_assert!(linalg::norm(&linalg::sub(&two, &one)) < 1e-11);
        prop_assert!((linalg::norm(&one) - linalg::norm(&v)).abs() < 1e-11);
    }

    #[test]
    fn hausdorff_is_symmetric(a in prop::collection::vec(-3.0f64..3.0, 1..20), b in prop::collection::vec(-3.0f64..3.0, 1..20), lo in -3.0f64..0.0, w in 0.5f64..3.0) {
        let sa = SpectrumSet::new(a, SpectrumSource::Full).unwrap();
        let sb = SpectrumSet::new(b, SpectrumSource::Effective).unwrap();
        let win = (lo, lo + w);
        let ab = hausdorff_in_window(&sa, &sb, win);
        let ba = hausdorff_in_window(&sb, &sa, win);
        match (ab, ba) {
            (Ok(x), Ok(y)) => prop_assert_eq!(x, y),
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "asymmetric outcome"),
        }
        prop_assert_eq!(hausdorff_in_window(&sa, &sa, win).unwrap(), 0.0);
    }
}
