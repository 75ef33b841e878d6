use bandframe::frames::CovariantFrame;
use bandframe::lattice::{Geometry, LatticeBox, SectorLayout};
use bandframe::linalg::{self, c64};
use bandframe::magnetic::{magnetic_quantize, twisted_product};
use bandframe::model::{harper, qwz, real_space_hamiltonian};
use bandframe::phases::MagneticSetup;
use bandframe::sequence::BlockSequence;
use bandframe::validate::{harper_oracle, sorted_distance, HarperSymbol};
use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::collections::BTreeMap;
use std::f64::consts::PI;

fn rand_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<c64> {
    (0..n).map(|_| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect()
}

fn rand_seq(rng: &mut ChaCha8Rng, n: usize, r: i64) -> BlockSequence {
    let mut blocks = BTreeMap::new();
    for a in -r..=r {
        for b in -r..=r {
            blocks.insert([a, b], Mat::from_fn(n, n, |_, _| c64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)));
        }
    }
    BlockSequence::from_blocks(2, n, blocks)
}

fn geom(l: usize, flux: f64) -> Geometry {
    Geometry::new(LatticeBox::periodic(2, l), MagneticSetup::planar_flux(flux)).unwrap()
}

#[test]
fn sector_and_dense_layouts_agree() {
    let g = geom(8, 2.0 * PI / 4.0);
    let h = qwz(-1.0, 5.0);
    let a = real_space_hamiltonian(&h, &SectorLayout::new(g.clone(), 2)).unwrap().to_matrix();
    let b = real_space_hamiltonian(&h, &SectorLayout::dense(g, 2)).unwrap().to_matrix();
    assert!(linalg::max_abs((&a - &b).as_ref()) < 1e-12);
    assert!(linalg::herm_defect(a.as_ref()) < 1e-12);
}

#[test]
fn harper_spectrum_matches_bloch_oracle() {
    let s = HarperSymbol { e0: 0.3, t1: 1.0, t2: 1.0 };
    let m = s.to_sequence();
    for &(p, q, l) in &[(1i64, 3usize, 12usize), (1, 5, 10), (2, 5, 15), (1, 2, 8), (1, 1, 6), (1, 3, 9), (1, 5, 15)] {
        let layout = SectorLayout::new(geom(l, 2.0 * PI * p as f64 / q as f64), 1);
        let got = magnetic_quantize(&m, &layout).unwrap().spectrum();
        let want = harper_oracle(&s, p, q, l).unwrap();
        let d = sorted_distance(&got, &want);
        assert!(d < 1e-8, "p={p} q={q} L={l}: {d}");
    }
    let _ = harper(1.0, 5.0);
}

#[test]
fn covariant_translates_are_zak_translates() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for &(l, k) in &[(8usize, 1.0), (12, 3.0), (6, 1.0)] {
        let g = geom(l, 2.0 * PI * k / l as f64);
        let layout = SectorLayout::new(g.clone(), 2);
        let v = vec![rand_vec(&mut rng, layout.dim()), rand_vec(&mut rng, layout.dim())];
        let f = CovariantFrame::translates(&layout, &v);
        for alpha in [0usize, 5, 17, layout.lbox().volume() - 1] {
            let a = layout.lbox().site(alpha);
            for p in 0..2 {
                let want = g.zak(a, &v[p], 2);
                let got = f.element(alpha, p);
                assert!(linalg::norm(&linalg::sub(&want, &got)) < 1e-10, "L={l} alpha={a:?}");
            }
        }
        let x = rand_vec(&mut rng, layout.dim());
        let c = f.analysis(&x);
        for alpha in [3usize, 11] {
            let a = layout.lbox().site(alpha);
            for p in 0..2 {
                let want = linalg::inner(&g.zak(a, &v[p], 2), &x);
                assert!((want - c[alpha * 2 + p]).norm() < 1e-10);
            }
        }
        let y = rand_vec(&mut rng, layout.lbox().volume() * 2);
        let lhs = linalg::inner(&y, &c);
        let rhs = linalg::inner(&f.synthesis(&y), &x);
        assert!((lhs - rhs).norm() < 1e-9);
    }
}

#[test]
fn twisted_product_is_homomorphism() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let s = rand_seq(&mut rng, 2, 1);
    let t = rand_seq(&mut rng, 2, 1);
    let flux = 2.0 * PI / 8.0;
    let st = twisted_product(&s, &t, &MagneticSetup::planar_flux(flux)).unwrap();
    let layout = SectorLayout::new(geom(16, flux), 2);
    let a = magnetic_quantize(&s, &layout).unwrap().op;
    let b = magnetic_quantize(&t, &layout).unwrap().op;
    let ab = magnetic_quantize(&st, &layout).unwrap().op;
    assert!(a.mul(&b).sub(&ab).op_norm() < 1e-10);
}
