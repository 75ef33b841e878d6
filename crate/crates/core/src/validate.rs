//! Spectral comparisons, scaling fits, Hofstadter sweeps and time evolution.

use crate::error::{Error, Result};
use crate::lattice::{DenseOperator, Geometry, LatticeBox, SectorLayout};
use crate::linalg::{self, c64, CMat, ZERO};
use crate::magnetic::magnetic_quantize;
use crate::phases::MagneticSetup;
use crate::sequence::BlockSequence;
use faer::Mat;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::f64::consts::PI;
use std::io::Write;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SpectrumSource {
    Full,
    Effective,
    Oracle,
}

/// Sorted finite eigenvalues with their origin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectrumSet {
    pub values: Vec<f64>,
    pub window: Option<(f64, f64)>,
    pub source: SpectrumSource,
}

impl SpectrumSet {
    pub fn new(mut values: Vec<f64>, source: SpectrumSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidArgument("spectrum contains non-finite values".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self { values, window: None, source })
    }

    pub fn in_window(&self, (lo, hi): (f64, f64)) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().copied().filter(move |&v| v >= lo && v <= hi)
    }

    /// Distance from `x` to the whole set.
    pub fn distance(&self, x: f64) -> f64 {
        let i = self.values.partition_point(|&v| v < x);
        let mut d = f64::INFINITY;
        if i < self.values.len() {
            d = d.min(self.values[i] - x);
        }
        if i > 0 {
            d = d.min(x - self.values[i - 1]);
        }
        d
    }
}

/// `max(sup_{a in S1 cap J} dist(a, S2), sup_{b in S2 cap J} dist(b, S1))`.
pub fn hausdorff_in_window(s1: &SpectrumSet, s2: &SpectrumSet, window: (f64, f64)) -> Result<f64> {
    let a: Vec<f64> = s1.in_window(window).collect();
    let b: Vec<f64> = s2.in_window(window).collect();
    match (a.is_empty(), b.is_empty()) {
        (true, true) => return Ok(0.0),
        (true, false) | (false, true) => return Err(Error::OneSideEmpty),
        _ => {}
    }
    let d1 = a.iter().map(|&x| s2.distance(x)).fold(0.0, f64::max);
    let d2 = b.iter().map(|&x| s1.distance(x)).fold(0.0, f64::max);
    Ok(d1.max(d2))
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
}

pub fn fit_loglog(x: &[f64], y: &[f64]) -> Result<LogLogFit> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::InvalidArgument("a fit needs at least two matching points".into()));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0)) {
        return Err(Error::InvalidArgument("log-log fit needs positive data".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(a, b)| (b - intercept - slope * a).powi(2)).sum();
    Ok(LogLogFit { slope, intercept, residual: (rss / n).sqrt() })
}

/// Metric values against a parameter, with a slope claim when there are enough
/// points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingReport {
    pub metric: String,
    pub parameter: String,
    pub params: Vec<f64>,
    pub values: Vec<f64>,
    pub fit: Option<LogLogFit>,
    pub fingerprint: String,
}

impl ScalingReport {
    pub fn new(metric: &str, parameter: &str, params: Vec<f64>, values: Vec<f64>, fingerprint: &str) -> Self {
        let fit = if params.len() >= 4 { fit_loglog(&params, &values).ok() } else { None };
        Self { metric: metric.into(), parameter: parameter.into(), params, values, fit, fingerprint: fingerprint.into() }
    }

    pub fn slope(&self) -> Option<f64> {
        self.fit.map(|f| f.slope)
    }

    pub fn write_csv(&self, w: &mut impl Write) -> std::io::Result<()> {
        writeln!(w, "{},{}", self.parameter, self.metric)?;
        for (p, v) in self.params.iter().zip(&self.values) {
            writeln!(w, "{p:.15e},{v:.15e}")?;
        }
        Ok(())
    }
}

/// SHA-256 of a canonical serialization, hex encoded.
pub fn fingerprint(canonical: &str) -> String {
    let d = Sha256::digest(canonical.as_bytes());
    d.iter().map(|b| format!("{b:02x}")).collect()
}

/// Nearest-neighbour single-band symbol `m_0 = e0`, `m_{+-e_1} = t1`, `m_{+-e_2} = t2`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HarperSymbol {
    pub e0: f64,
    pub t1: f64,
    pub t2: f64,
}

impl HarperSymbol {
    /// Recognise the symbol; `None` for anything with longer range, complex or
    /// asymmetric entries.
    pub fn from_sequence(m: &BlockSequence) -> Option<Self> {
        if m.n != 1 || m.dim != 2 {
            return None;
        }
        let get = |g: [i64; 2]| m.get(g).map(|b| b[(0, 0)]).unwrap_or(ZERO);
        for (g, b) in &m.blocks {
            let nn = matches!(g, [0, 0] | [1, 0] | [-1, 0] | [0, 1] | [0, -1]);
            if !nn && b[(0, 0)].norm() > 0.0 {
                return None;
            }
        }
        let real = |z: c64| if z.im.abs() < 1e-14 { Some(z.re) } else { None };
        let t1 = real(get([1, 0]))?;
        let t2 = real(get([0, 1]))?;
        if (real(get([-1, 0]))? - t1).abs() > 1e-14 || (real(get([0, -1]))? - t2).abs() > 1e-14 {
            return None;
        }
        Some(Self { e0: real(get([0, 0]))?, t1, t2 })
    }

    pub fn to_sequence(&self) -> BlockSequence {
        let mut blocks = std::collections::BTreeMap::new();
        let one = |v: f64| Mat::from_fn(1, 1, |_, _| c64::new(v, 0.0));
        blocks.insert([0, 0], one(self.e0));
        for g in [[1, 0], [-1, 0]] {
            blocks.insert(g, one(self.t1));
        }
        for g in [[0, 1], [0, -1]] {
            blocks.insert(g, one(self.t2));
        }
        BlockSequence::from_blocks(2, 1, blocks)
    }
}

/// The `q x q` magnetic Bloch matrix of the Harper operator at flux `2 pi p / q`.
pub fn harper_bloch_matrix(s: &HarperSymbol, p: i64, q: usize, k1: f64, k2: f64) -> CMat {
    let phi = 2.0 * PI * p as f64 / q as f64;
    let mut h = linalg::zeros(q, q);
    for j in 0..q {
        h[(j, j)] += c64::new(s.e0 + 2.0 * s.t2 * (phi * j as f64 - k1).cos(), 0.0);
        if j + 1 < q {
            h[(j, j + 1)] += c64::new(s.t1, 0.0);
            h[(j + 1, j)] += c64::new(s.t1, 0.0);
        }
    }
    h[(q - 1, 0)] += linalg::cis(-k2) * s.t1;
    h[(0, q - 1)] += linalg::cis(k2) * s.t1;
    h
}

/// Union of the magnetic Bloch spectra over the momenta of an `L x L` torus.
pub fn harper_oracle(s: &HarperSymbol, p: i64, q: usize, l: usize) -> Result<Vec<f64>> {
    if l % q != 0 {
        return Err(Error::IncommensurateFlux(format!("q = {q} does not divide L = {l}")));
    }
    let mut out: Vec<f64> = (0..l)
        .into_par_iter()
        .flat_map_iter(|j1| {
            (0..l / q).flat_map(move |j2| {
                let k1 = 2.0 * PI * j1 as f64 / l as f64;
                let k2 = 2.0 * PI * (j2 * q) as f64 / l as f64;
                linalg::eigvalsh(harper_bloch_matrix(s, p, q, k1, k2).as_ref())
            })
        })
        .collect();
    out.sort_by(f64::total_cmp);
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ButterflyRow {
    pub p: i64,
    pub q: usize,
    pub eigenvalue: f64,
}

/// Spectra of `Op(m)` at fluxes `2 pi p / q` on a magnetic-periodic `L x L` box.
pub fn butterfly_sweep(m: &BlockSequence, fluxes: &[(i64, usize)], l: usize) -> Result<Vec<ButterflyRow>> {
    let per = fluxes
        .par_iter()
        .map(|&(p, q)| {
            let flux = 2.0 * PI * p as f64 / q as f64;
            let geom = Geometry::new(LatticeBox::periodic(m.dim, l), MagneticSetup::planar_flux(flux))?;
            let layout = SectorLayout::new(geom, m.n);
            let op = magnetic_quantize(m, &layout)?;
            Ok(op.spectrum().into_iter().map(|e| ButterflyRow { p, q, eigenvalue: e }).collect::<Vec<_>>())
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(per.into_iter().flatten().collect())
}

/// Largest sorted-list difference between the sweep and the Harper oracle, per flux.
pub fn butterfly_oracle_deviation(m: &BlockSequence, rows: &[ButterflyRow], l: usize) -> Result<Vec<((i64, usize), f64)>> {
    let s = HarperSymbol::from_sequence(m)
        .ok_or_else(|| Error::InvalidArgument("oracle applies to real nearest-neighbour single-band symbols".into()))?;
    let mut keys: Vec<(i64, usize)> = rows.iter().map(|r| (r.p, r.q)).collect();
    keys.dedup();
    keys.into_iter()
        .map(|(p, q)| {
            let mut got: Vec<f64> = rows.iter().filter(|r| r.p == p && r.q == q).map(|r| r.eigenvalue).collect();
            got.sort_by(f64::total_cmp);
            let want = harper_oracle(&s, p, q, l)?;
            if got.len() != want.len() {
                return Ok(((p, q), f64::INFINITY));
            }
            Ok(((p, q), got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)))
        })
        .collect()
}

pub fn write_butterfly_csv(rows: &[ButterflyRow], w: &mut impl Write) -> std::io::Result<()> {
    writeln!(w, "flux_p,flux_q,eigenvalue")?;
    for r in rows {
        writeln!(w, "{},{},{:.15e}", r.p, r.q, r.eigenvalue)?;
    }
    Ok(())
}

/// `e^{-i t H}` for a Hermitian covariant operator, diagonalized once.
#[derive(Clone, Debug)]
pub struct Propagator {
    op: DenseOperator,
    eig: Vec<(Vec<f64>, CMat)>,
}

impl Propagator {
    pub fn new(h: &DenseOperator) -> Self {
        Self { op: h.clone(), eig: h.eigh() }
    }

    pub fn evolve(&self, v: &[c64], t: f64) -> Vec<c64> {
        let layout = self.op.layout();
        let bd = layout.block_dim();
        let w = layout.fold(v);
        let mut out = vec![ZERO; w.len()];
        out.par_chunks_mut(bd.max(1)).zip(self.eig.par_iter()).enumerate().for_each(|(k, (o, (vals, vecs)))| {
            let x = &w[k * bd..(k + 1) * bd];
            let coef: Vec<c64> = (0..vals.len())
                .map(|j| {
                    let c: c64 = (0..bd).map(|i| vecs[(i, j)].conj() * x[i]).sum();
                    c * linalg::cis(-t * vals[j])
                })
                .collect();
            for i in 0..bd {
                o[i] = (0..vals.len()).map(|j| vecs[(i, j)] * coef[j]).sum();
            }
        });
        layout.unfold(&out)
    }
}

/// `e^{-i t H} v` for a dense Hermitian matrix.
pub fn evolve(h: &CMat, v: &[c64], t: f64) -> Vec<c64> {
    let (vals, vecs) = linalg::eigh(h.as_ref());
    let u = linalg::from_eig(&vals, vecs.as_ref(), |l| linalg::cis(-t * l));
    linalg::matvec(u.as_ref(), v)
}

/// Max of the sorted spectra difference (same cardinality) or `inf`.
pub fn sorted_distance(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hausdorff_arithmetic() {
        let a = SpectrumSet::new(vec![1.0, 2.0], SpectrumSource::Full).unwrap();
        let b = SpectrumSet::new(vec![1.1, 2.3], SpectrumSource::Effective).unwrap();
        assert!((hausdorff_in_window(&a, &b, (0.0, 3.0)).unwrap() - 0.3).abs() < 1e-12);
        assert_eq!(hausdorff_in_window(&a, &a, (0.0, 3.0)).unwrap(), 0.0);
        assert!(matches!(hausdorff_in_window(&a, &b, (2.1, 2.2)), Ok(0.0)));
        assert!(matches!(hausdorff_in_window(&a, &b, (2.2, 2.5)), Err(Error::OneSideEmpty)));
    }

    #[test]
    fn loglog_fit_recovers_power() {
        let x = [0.1, 0.2, 0.3, 0.4];
        let y: Vec<f64> = x.iter().map(|v: &f64| 3.0 * v.powi(2)).collect();
        let f = fit_loglog(&x, &y).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.residual < 1e-12);
    }
}
