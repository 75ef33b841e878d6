//! Periodic hopping Hamiltonians, their Bloch fibers and Peierls-substituted box
//! operators.
//!
//! Pairing: `H(theta) = sum_gamma e^{-i <theta, gamma>} h_gamma` with
//! `theta in [0, 2 pi)^d`.

use crate::error::{Error, Result};
use crate::lattice::{DenseOperator, SectorLayout, Site};
use crate::linalg::{self, c64, cis, CMat, ZERO};
use crate::sequence::{decode_block, encode_block, parse_gamma, BlockSequence};
use faer::Mat;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::Arc;

const SELF_ADJOINT_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq)]
pub struct HoppingTable {
    pub dim: usize,
    pub orbitals: usize,
    /// Blocks without the energy shift.
    pub blocks: BTreeMap<Site, CMat>,
    pub shift: f64,
}

impl HoppingTable {
    /// Validated table; rejects `h_{-gamma} != h_gamma^*` naming the offending `gamma`.
    pub fn new(dim: usize, orbitals: usize, blocks: BTreeMap<Site, CMat>, shift: f64) -> Result<Self> {
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidModel(format!("dimension {dim} not supported")));
        }
        for (g, b) in &blocks {
            if b.nrows() != orbitals || b.ncols() != orbitals {
                return Err(Error::InvalidModel(format!("block at gamma {:?} is not {orbitals}x{orbitals}", &g[..dim])));
            }
            if dim == 1 && g[1] != 0 {
                return Err(Error::InvalidModel(format!("gamma {g:?} in a one-dimensional model")));
            }
        }
        let zero = linalg::zeros(orbitals, orbitals);
        for (g, b) in &blocks {
            let partner = blocks.get(&[-g[0], -g[1]]).unwrap_or(&zero);
            let defect = linalg::max_abs((b - partner.adjoint()).as_ref());
            if defect > SELF_ADJOINT_TOL {
                return Err(Error::InvalidModel(format!(
                    "hopping table is not self-adjoint at gamma {:?} (defect {defect:e})",
                    &g[..dim]
                )));
            }
        }
        Ok(Self { dim, orbitals, blocks, shift })
    }

    /// Block `h_gamma` including the shift on `gamma = 0`.
    pub fn block(&self, g: Site) -> CMat {
        let mut b = self.blocks.get(&g).cloned().unwrap_or_else(|| linalg::zeros(self.orbitals, self.orbitals));
        if g == [0, 0] {
            for i in 0..self.orbitals {
                b[(i, i)] += c64::new(self.shift, 0.0);
            }
        }
        b
    }

    /// Support including the origin.
    pub fn offsets(&self) -> Vec<Site> {
        let mut o: Vec<Site> = self.blocks.keys().copied().collect();
        if !self.blocks.contains_key(&[0, 0]) {
            o.push([0, 0]);
        }
        o.sort();
        o
    }

    pub fn hop_radius(&self) -> usize {
        self.blocks.keys().map(|&g| crate::sequence::sup_radius(g)).max().unwrap_or(0)
    }

    pub fn with_shift(&self, shift: f64) -> Self {
        Self { shift, ..self.clone() }
    }

    /// Complex conjugate model `h_gamma -> conj(h_gamma)`.
    pub fn conjugate(&self) -> Self {
        let blocks = self
            .blocks
            .iter()
            .map(|(g, b)| (*g, Mat::from_fn(b.nrows(), b.ncols(), |i, j| b[(i, j)].conj())))
            .collect();
        Self { blocks, ..self.clone() }
    }

    /// Bloch fiber at `theta`.
    pub fn fiber(&self, theta: &[f64]) -> CMat {
        let m = self.orbitals;
        let mut h = linalg::zeros(m, m);
        for (g, b) in &self.blocks {
            let ph: f64 = (0..self.dim).map(|i| theta[i] * g[i] as f64).sum();
            let e = cis(-ph);
            for i in 0..m {
                for j in 0..m {
                    h[(i, j)] += e * b[(i, j)];
                }
            }
        }
        for i in 0..m {
            h[(i, i)] += c64::new(self.shift, 0.0);
        }
        h
    }

    /// `sum_gamma |gamma| |h_gamma|`, a Lipschitz bound for the bands.
    pub fn lipschitz(&self) -> f64 {
        self.blocks
            .iter()
            .map(|(g, b)| ((g[0] * g[0] + g[1] * g[1]) as f64).sqrt() * linalg::op_norm(b.as_ref()))
            .sum()
    }

    /// Smallest fiber eigenvalue over the grid (must be positive after the shift).
    pub fn min_energy(&self, grid: &ReciprocalGrid) -> f64 {
        (0..grid.len())
            .map(|i| linalg::eigvalsh(self.fiber(&grid.theta(i)).as_ref())[0])
            .fold(f64::INFINITY, f64::min)
    }

    pub fn to_file(&self) -> ModelFile {
        ModelFile {
            dimension: self.dim,
            orbitals: self.orbitals,
            shift: self.shift,
            hoppings: self
                .blocks
                .iter()
                .map(|(g, b)| HoppingFile { gamma: g[..self.dim].to_vec(), block: encode_block(b) })
                .collect(),
        }
    }

    pub fn from_file(f: &ModelFile) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for h in &f.hoppings {
            let g = parse_gamma(&h.gamma, f.dimension).map_err(|e| Error::InvalidModel(e.to_string()))?;
            let b = decode_block(&h.block, f.orbitals)
                .map_err(|e| Error::InvalidModel(format!("gamma {:?}: {e}", h.gamma)))?;
            if blocks.insert(g, b).is_some() {
                return Err(Error::InvalidModel(format!("duplicate gamma {:?}", h.gamma)));
            }
        }
        Self::new(f.dimension, f.orbitals, blocks, f.shift)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let f: ModelFile = serde_json::from_str(&text)?;
        Self::from_file(&f)
    }

    /// The table as a block sequence (shift included in the origin block).
    pub fn to_sequence(&self) -> BlockSequence {
        let blocks = self.offsets().into_iter().map(|g| (g, self.block(g))).collect();
        BlockSequence::from_blocks(self.dim, self.orbitals, blocks)
    }
}

/// Model definition file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelFile {
    pub dimension: usize,
    pub orbitals: usize,
    #[serde(default)]
    pub shift: f64,
    pub hoppings: Vec<HoppingFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoppingFile {
    pub gamma: Vec<i64>,
    /// Row-major entries as `[re, im]` pairs.
    pub block: Vec<[f64; 2]>,
}

fn mat2(a: [[c64; 2]; 2]) -> CMat {
    Mat::from_fn(2, 2, |i, j| a[i][j])
}

fn c(re: f64, im: f64) -> c64 {
    c64::new(re, im)
}

/// Nearest-neighbour chain `h_{+-1} = 1`.
pub fn chain1d(shift: f64) -> HoppingTable {
    let mut b = BTreeMap::new();
    b.insert([1, 0], linalg::identity(1));
    b.insert([-1, 0], linalg::identity(1));
    HoppingTable::new(1, 1, b, shift).unwrap()
}

/// Qi-Wu-Zhang model: `h_0 = u sigma_z`, `h_{+-e1} = (sigma_z -+ i sigma_x)/2`,
/// `h_{+-e2} = (sigma_z -+ i sigma_y)/2`.
pub fn qwz(u: f64, shift: f64) -> HoppingTable {
    let z = ZERO;
    let mut b = BTreeMap::new();
    b.insert([0, 0], mat2([[c(u, 0.0), z], [z, c(-u, 0.0)]]));
    // (sigma_z - i sigma_x) / 2 and its adjoint
    b.insert([1, 0], mat2([[c(0.5, 0.0), c(0.0, -0.5)], [c(0.0, -0.5), c(-0.5, 0.0)]]));
    b.insert([-1, 0], mat2([[c(0.5, 0.0), c(0.0, 0.5)], [c(0.0, 0.5), c(-0.5, 0.0)]]));
    // (sigma_z - i sigma_y) / 2 and its adjoint
    b.insert([0, 1], mat2([[c(0.5, 0.0), c(-0.5, 0.0)], [c(0.5, 0.0), c(-0.5, 0.0)]]));
    b.insert([0, -1], mat2([[c(0.5, 0.0), c(0.5, 0.0)], [c(-0.5, 0.0), c(-0.5, 0.0)]]));
    HoppingTable::new(2, 2, b, shift).unwrap()
}

/// Square-lattice nearest-neighbour model with hopping `t`.
pub fn harper(t: f64, shift: f64) -> HoppingTable {
    let mut b = BTreeMap::new();
    for g in [[1, 0], [-1, 0], [0, 1], [0, -1]] {
        b.insert(g, linalg::scale(linalg::identity(1).as_ref(), c(t, 0.0)));
    }
    HoppingTable::new(2, 1, b, shift).unwrap()
}

/// Two QWZ layers with opposite Chern numbers (the second is the complex
/// conjugate), coupled on-site by `coupling`. Orbital order: layer-major.
pub fn fourband(u: f64, coupling: f64, shift: f64) -> HoppingTable {
    let a = qwz(u, 0.0);
    let ac = a.conjugate();
    let mut b = BTreeMap::new();
    for g in a.offsets() {
        let x = a.block(g);
        let y = ac.block(g);
        let mut m = linalg::zeros(4, 4);
        for i in 0..2 {
            for j in 0..2 {
                m[(i, j)] = x[(i, j)];
                m[(i + 2, j + 2)] = y[(i, j)];
            }
        }
        if g == [0, 0] {
            for i in 0..2 {
                m[(i, i + 2)] = c(coupling, 0.0);
                m[(i + 2, i)] = c(coupling, 0.0);
            }
        }
        b.insert(g, m);
    }
    HoppingTable::new(2, 4, b, shift).unwrap()
}

/// Built-in model by name with its default parameters.
pub fn builtin(name: &str) -> Option<HoppingTable> {
    match name {
        "chain1d" => Some(chain1d(3.0)),
        "qwz" => Some(qwz(-1.0, 5.0)),
        "harper" => Some(harper(1.0, 5.0)),
        "fourband" => Some(fourband(-1.0, 0.3, 5.0)),
        _ => None,
    }
}

pub const BUILTIN_MODELS: [&str; 4] = ["chain1d", "qwz", "harper", "fourband"];

/// Uniform grid on the Brillouin torus, `theta_j = 2 pi j / n_k` per axis.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReciprocalGrid {
    pub dim: usize,
    pub n_k: usize,
}

impl ReciprocalGrid {
    pub fn new(dim: usize, n_k: usize) -> Result<Self> {
        if n_k < 4 || n_k % 2 != 0 {
            return Err(Error::InvalidArgument(format!("n_k = {n_k} must be even and at least 4")));
        }
        if dim != 1 && dim != 2 {
            return Err(Error::InvalidArgument(format!("dimension {dim} not supported")));
        }
        Ok(Self { dim, n_k })
    }

    pub fn len(&self) -> usize {
        self.n_k.pow(self.dim as u32)
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn mesh(&self) -> f64 {
        2.0 * PI / self.n_k as f64
    }

    /// Multi-index of point `i` (last axis fastest).
    pub fn index(&self, i: usize) -> [usize; 2] {
        if self.dim == 1 {
            [i, 0]
        } else {
            [i / self.n_k, i % self.n_k]
        }
    }

    pub fn flat(&self, j: [usize; 2]) -> usize {
        if self.dim == 1 {
            j[0] % self.n_k
        } else {
            (j[0] % self.n_k) * self.n_k + j[1] % self.n_k
        }
    }

    pub fn theta(&self, i: usize) -> Vec<f64> {
        let j = self.index(i);
        (0..self.dim).map(|a| self.mesh() * j[a] as f64).collect()
    }

    /// Grid neighbours of point `i` in the positive axis directions.
    pub fn forward_neighbours(&self, i: usize) -> Vec<usize> {
        let j = self.index(i);
        (0..self.dim)
            .map(|a| {
                let mut k = j;
                k[a] = (k[a] + 1) % self.n_k;
                self.flat(k)
            })
            .collect()
    }

    /// Lattice vector stored at cell index `i` of a DFT output, in `[-n_k/2, n_k/2)`.
    pub fn gamma_of(&self, i: usize) -> Site {
        let j = self.index(i);
        let h = self.n_k as i64;
        let f = |v: usize| {
            let v = v as i64;
            if 2 * v >= h {
                v - h
            } else {
                v
            }
        };
        if self.dim == 1 {
            [f(j[0]), 0]
        } else {
            [f(j[0]), f(j[1])]
        }
    }

    pub fn cell_index(&self, g: Site) -> usize {
        let h = self.n_k as i64;
        let j = [g[0].rem_euclid(h) as usize, g[1].rem_euclid(h) as usize];
        self.flat(j)
    }

    /// `K(gamma) = n_k^{-d} sum_theta e^{i <theta, gamma>} V(theta)` for all
    /// `gamma` in one period; the result is indexed like the grid (`gamma mod n_k`).
    pub fn forward_dft(&self, values: &[CMat]) -> Vec<CMat> {
        assert_eq!(values.len(), self.len());
        let (r, cdim) = (values[0].nrows(), values[0].ncols());
        let n = self.n_k;
        let mut planner = FftPlanner::new();
        let plan = planner.plan_fft_inverse(n);
        let mut out: Vec<CMat> = values.to_vec();
        let norm = 1.0 / self.len() as f64;
        let mut buf = vec![ZERO; n];
        for a in 0..r {
            for b in 0..cdim {
                if self.dim == 1 {
                    for t in 0..n {
                        buf[t] = out[t][(a, b)];
                    }
                    plan.process(&mut buf);
                    for t in 0..n {
                        out[t][(a, b)] = buf[t] * norm;
                    }
                } else {
                    for x in 0..n {
                        for y in 0..n {
                            buf[y] = out[x * n + y][(a, b)];
                        }
                        plan.process(&mut buf);
                        for y in 0..n {
                            out[x * n + y][(a, b)] = buf[y];
                        }
                    }
                    for y in 0..n {
                        for x in 0..n {
                            buf[x] = out[x * n + y][(a, b)];
                        }
                        plan.process(&mut buf);
                        for x in 0..n {
                            out[x * n + y][(a, b)] = buf[x] * norm;
                        }
                    }
                }
            }
        }
        out
    }

    /// Fourier coefficients of a grid field truncated to `|gamma|_inf <= radius`.
    pub fn coefficients(&self, values: &[CMat], radius: usize) -> Result<BlockSequence> {
        if 2 * radius >= self.n_k {
            return Err(Error::AliasRisk { radius, n_k: self.n_k });
        }
        let cells = self.forward_dft(values);
        let r = radius as i64;
        let mut blocks = BTreeMap::new();
        let range2 = if self.dim == 2 { -r..=r } else { 0..=0 };
        for g0 in -r..=r {
            for g1 in range2.clone() {
                blocks.insert([g0, g1], cells[self.cell_index([g0, g1])].clone());
            }
        }
        let n = values[0].nrows();
        let mut s = BlockSequence::from_blocks(self.dim, n, blocks);
        s.radius = radius;
        s.tail = s.shell_norm(radius);
        Ok(s)
    }
}

/// Peierls-substituted box operator with kernel
/// `Lambda(x, y) Lambda~(x, y) h_{x - y}`.
pub fn real_space_hamiltonian(h: &HoppingTable, layout: &Arc<SectorLayout>) -> Result<DenseOperator> {
    if layout.orbitals != h.orbitals || layout.geom.dim() != h.dim {
        return Err(Error::ShapeMismatch(format!(
            "table with {} orbitals in d={} on a layout with {} orbitals in d={}",
            h.orbitals,
            h.dim,
            layout.orbitals,
            layout.geom.dim()
        )));
    }
    Ok(quantize_sequence(&h.to_sequence(), layout))
}

/// Box operator with kernel `Lambda^{eps,c}(x, y) m_{x - y}` for any block sequence.
pub fn quantize_sequence(m: &BlockSequence, layout: &Arc<SectorLayout>) -> DenseOperator {
    let n = m.n;
    let geom = &layout.geom;
    let offsets = m.offsets();
    DenseOperator::from_kernel(layout, &offsets, |x, y, out| {
        let g = [x[0] - y[0], x[1] - y[1]];
        if let Some(b) = m.get(g) {
            let ph = geom.lam(x, y);
            for i in 0..n {
                for j in 0..n {
                    out[i * n + j] = ph * b[(i, j)];
                }
            }
        }
    })
}

/// Split `h` into the family part given by `family_kernel` and the rest.
pub fn kernel_split(h: &HoppingTable, family_kernel: &BlockSequence) -> Result<(HoppingTable, HoppingTable)> {
    if family_kernel.n != h.orbitals || family_kernel.dim != h.dim {
        return Err(Error::ShapeMismatch(format!(
            "kernel blocks {}x{} (d={}) against table with {} orbitals (d={})",
            family_kernel.n, family_kernel.n, family_kernel.dim, h.orbitals, h.dim
        )));
    }
    let hb = HoppingTable::new(h.dim, h.orbitals, family_kernel.blocks.clone(), 0.0)
        .or_else(|_| {
            // Floating-point asymmetry of a numerically computed kernel: symmetrize.
            let mut blocks = BTreeMap::new();
            for (g, b) in &family_kernel.blocks {
                let zero = linalg::zeros(h.orbitals, h.orbitals);
                let p = family_kernel.blocks.get(&[-g[0], -g[1]]).unwrap_or(&zero);
                blocks.insert(*g, linalg::scale((b + p.adjoint()).as_ref(), c(0.5, 0.0)));
            }
            HoppingTable::new(h.dim, h.orbitals, blocks, 0.0)
        })?;
    let mut rest = BTreeMap::new();
    let keys: std::collections::BTreeSet<Site> = h.offsets().into_iter().chain(hb.blocks.keys().copied()).collect();
    for g in keys {
        let a = h.block(g);
        let b = hb.block(g);
        let d = &a - &b;
        if linalg::max_abs(d.as_ref()) > 0.0 {
            rest.insert(g, d);
        }
    }
    let perp = HoppingTable::new(h.dim, h.orbitals, rest, 0.0)?;
    Ok((hb, perp))
}
