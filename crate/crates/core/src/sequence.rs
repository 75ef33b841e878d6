//! Finitely supported matrix-valued sequences over the lattice.

use crate::error::{Error, Result};
use crate::lattice::Site;
use crate::linalg::{self, c64, CMat};
use faer::Mat;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Clone, Debug, PartialEq)]
pub struct BlockSequence {
    pub dim: usize,
    pub n: usize,
    pub blocks: BTreeMap<Site, CMat>,
    /// Truncation radius in the sup norm.
    pub radius: usize,
    /// Largest block norm on the outer shell, a truncation certificate.
    pub tail: f64,
}

/// `<gamma>^2 = 1 + |gamma|^2`.
pub fn japanese_sq(g: Site) -> f64 {
    1.0 + (g[0] * g[0] + g[1] * g[1]) as f64
}

pub fn sup_radius(g: Site) -> usize {
    g[0].unsigned_abs().max(g[1].unsigned_abs()) as usize
}

impl BlockSequence {
    pub fn zero(dim: usize, n: usize) -> Self {
        Self { dim, n, blocks: BTreeMap::new(), radius: 0, tail: 0.0 }
    }

    /// `delta_{gamma, 0} * 1`.
    pub fn identity(dim: usize, n: usize) -> Self {
        let mut s = Self::zero(dim, n);
        s.blocks.insert([0, 0], linalg::identity(n));
        s
    }

    pub fn from_blocks(dim: usize, n: usize, blocks: BTreeMap<Site, CMat>) -> Self {
        let radius = blocks.keys().map(|&g| sup_radius(g)).max().unwrap_or(0);
        let mut s = Self { dim, n, blocks, radius, tail: 0.0 };
        s.tail = s.shell_norm(radius);
        s
    }

    pub fn get(&self, g: Site) -> Option<&CMat> {
        self.blocks.get(&g)
    }

    pub fn offsets(&self) -> Vec<Site> {
        self.blocks.keys().copied().collect()
    }

    /// Largest block norm with `|gamma|_inf = r`.
    pub fn shell_norm(&self, r: usize) -> f64 {
        self.blocks
            .iter()
            .filter(|(g, _)| sup_radius(**g) == r)
            .map(|(_, b)| linalg::op_norm(b.as_ref()))
            .fold(0.0, f64::max)
    }

    pub fn truncate(&self, radius: usize) -> Self {
        let blocks = self
            .blocks
            .iter()
            .filter(|(g, _)| sup_radius(**g) <= radius)
            .map(|(g, b)| (*g, b.clone()))
            .collect();
        let mut s = Self::from_blocks(self.dim, self.n, blocks);
        s.radius = radius;
        s.tail = s.shell_norm(radius);
        s
    }

    /// `max_gamma |m_{-gamma} - m_gamma^*|`.
    pub fn self_adjoint_defect(&self) -> f64 {
        let zero = linalg::zeros(self.n, self.n);
        let mut d = 0.0f64;
        for (g, b) in &self.blocks {
            let other = self.blocks.get(&[-g[0], -g[1]]).unwrap_or(&zero);
            d = d.max(linalg::max_abs((b - other.adjoint()).as_ref()));
        }
        d
    }

    /// `sup_gamma <gamma>^(2 power) |a_gamma - b_gamma|` (operator norm).
    pub fn weighted_distance(&self, other: &Self, power: i32) -> f64 {
        let zero = linalg::zeros(self.n, self.n);
        let keys: std::collections::BTreeSet<Site> = self.blocks.keys().chain(other.blocks.keys()).copied().collect();
        keys.into_iter()
            .map(|g| {
                let a = self.blocks.get(&g).unwrap_or(&zero);
                let b = other.blocks.get(&g).unwrap_or(&zero);
                japanese_sq(g).powi(power) * linalg::op_norm((a - b).as_ref())
            })
            .fold(0.0, f64::max)
    }

    pub fn scale(&self, s: c64) -> Self {
        let blocks = self.blocks.iter().map(|(g, b)| (*g, linalg::scale(b.as_ref(), s))).collect();
        Self { blocks, ..self.clone() }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.n != other.n {
            return Err(Error::ShapeMismatch(format!("block sizes {} and {}", self.n, other.n)));
        }
        let mut blocks = self.blocks.clone();
        for (g, b) in &other.blocks {
            blocks
                .entry(*g)
                .and_modify(|a| *a = &*a + b)
                .or_insert_with(|| b.clone());
        }
        Ok(Self::from_blocks(self.dim, self.n, blocks))
    }

    pub fn to_file(&self) -> SequenceFile {
        SequenceFile {
            dimension: self.dim,
            block_size: self.n,
            radius: self.radius,
            tail: self.tail,
            blocks: self
                .blocks
                .iter()
                .map(|(g, b)| EntryFile { gamma: g[..self.dim].to_vec(), block: encode_block(b) })
                .collect(),
        }
    }

    pub fn from_file(f: &SequenceFile) -> Result<Self> {
        let mut blocks = BTreeMap::new();
        for e in &f.blocks {
            blocks.insert(parse_gamma(&e.gamma, f.dimension)?, decode_block(&e.block, f.block_size)?);
        }
        let mut s = Self::from_blocks(f.dimension, f.block_size, blocks);
        s.radius = f.radius;
        s.tail = f.tail;
        Ok(s)
    }
}

/// JSON layout of a block sequence.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceFile {
    pub dimension: usize,
    pub block_size: usize,
    pub radius: usize,
    pub tail: f64,
    pub blocks: Vec<EntryFile>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EntryFile {
    pub gamma: Vec<i64>,
    /// Row-major entries as `[re, im]` pairs.
    pub block: Vec<[f64; 2]>,
}

pub fn encode_block(b: &CMat) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(b.nrows() * b.ncols());
    for i in 0..b.nrows() {
        for j in 0..b.ncols() {
            out.push([b[(i, j)].re, b[(i, j)].im]);
        }
    }
    out
}

pub fn decode_block(e: &[[f64; 2]], n: usize) -> Result<CMat> {
    if e.len() != n * n {
        return Err(Error::ShapeMismatch(format!("block has {} entries, expected {}", e.len(), n * n)));
    }
    Ok(Mat::from_fn(n, n, |i, j| c64::new(e[i * n + j][0], e[i * n + j][1])))
}

pub fn parse_gamma(g: &[i64], dim: usize) -> Result<Site> {
    match (dim, g) {
        (1, [a]) => Ok([*a, 0]),
        (2, [a, b]) => Ok([*a, *b]),
        _ => Err(Error::ShapeMismatch(format!("lattice vector {g:?} in dimension {dim}"))),
    }
}
