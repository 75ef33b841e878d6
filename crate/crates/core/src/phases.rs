//! Magnetic phase factors.
//!
//! Conventions: unit lattice spacing, unit cell area 1, flux per plaquette `eps * b`.
//! `lambda_const(x, y) = exp(-(i eps / 2) sum_kj B_kj x_k y_j)` and
//! `lambda_fluct(x, y) = exp(-i c eps \int_[x,y] A)` with the segment parametrised
//! by `t in [0, 1]`.

use crate::error::{Error, Result};
use crate::linalg::{c64, cis};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Constant field `B`, an antisymmetric `d x d` matrix stored row-major.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConstantField {
    pub dim: usize,
    pub matrix: Vec<f64>,
}

impl ConstantField {
    pub fn zero(dim: usize) -> Self {
        Self { dim, matrix: vec![0.0; dim * dim] }
    }

    /// Planar field with `B_12 = b`.
    pub fn planar(b: f64) -> Self {
        Self { dim: 2, matrix: vec![0.0, b, -b, 0.0] }
    }

    pub fn new(dim: usize, matrix: Vec<f64>) -> Result<Self> {
        if matrix.len() != dim * dim {
            return Err(Error::ShapeMismatch(format!(
                "field matrix has {} entries, expected {}",
                matrix.len(),
                dim * dim
            )));
        }
        for k in 0..dim {
            for j in 0..dim {
                if matrix[k * dim + j] != -matrix[j * dim + k] {
                    return Err(Error::InvalidArgument(format!(
                        "field matrix not antisymmetric at ({k},{j})"
                    )));
                }
            }
        }
        Ok(Self { dim, matrix })
    }

    /// `B_12` for planar fields, zero otherwise.
    pub fn b(&self) -> f64 {
        if self.dim == 2 {
            self.matrix[1]
        } else {
            0.0
        }
    }

    fn pairing(&self, x: &[f64], y: &[f64]) -> f64 {
        let d = self.dim;
        let mut s = 0.0;
        for k in 0..d {
            for j in 0..d {
                s += self.matrix[k * d + j] * x[k] * y[j];
            }
        }
        s
    }
}

/// One harmonic `cos_amp * cos(k.x) + sin_amp * sin(k.x)` of the vector potential.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FluctuationTerm {
    pub wavevector: Vec<f64>,
    pub cos_amp: Vec<f64>,
    pub sin_amp: Vec<f64>,
}

/// Bounded trigonometric-polynomial vector potential.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FluctuationPotential {
    #[serde(default)]
    pub constant: Vec<f64>,
    #[serde(default)]
    pub terms: Vec<FluctuationTerm>,
}

impl FluctuationPotential {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn constant(a: Vec<f64>) -> Self {
        Self { constant: a, terms: Vec::new() }
    }

    pub fn is_zero(&self) -> bool {
        self.constant.iter().all(|&a| a == 0.0)
            && self
                .terms
                .iter()
                .all(|t| t.cos_amp.iter().chain(&t.sin_amp).all(|&a| a == 0.0))
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if !self.constant.is_empty() && self.constant.len() != dim {
            return Err(Error::ShapeMismatch("fluctuation constant has wrong dimension".into()));
        }
        for t in &self.terms {
            if t.wavevector.len() != dim || t.cos_amp.len() != dim || t.sin_amp.len() != dim {
                return Err(Error::ShapeMismatch("fluctuation term has wrong dimension".into()));
            }
        }
        Ok(())
    }

    pub fn eval(&self, x: &[f64]) -> Vec<f64> {
        let d = x.len();
        let mut a = vec![0.0; d];
        for (i, c) in self.constant.iter().enumerate() {
            a[i] += c;
        }
        for t in &self.terms {
            let ph: f64 = t.wavevector.iter().zip(x).map(|(k, xi)| k * xi).sum();
            let (s, c) = ph.sin_cos();
            for i in 0..d {
                a[i] += t.cos_amp[i] * c + t.sin_amp[i] * s;
            }
        }
        a
    }

    /// Magnetic field `dA_2/dx_1 - dA_1/dx_2` (planar only).
    pub fn curl(&self, x: &[f64]) -> f64 {
        let mut b = 0.0;
        for t in &self.terms {
            let ph = t.wavevector[0] * x[0] + t.wavevector[1] * x[1];
            let (s, c) = ph.sin_cos();
            // d/dx_j [a cos + b sin] = k_j (-a sin + b cos)
            let d = |i: usize, j: usize| t.wavevector[j] * (-t.cos_amp[i] * s + t.sin_amp[i] * c);
            b += d(1, 0) - d(0, 1);
        }
        b
    }

    /// `\int_[x,y] A` by Gauss-Legendre quadrature.
    pub fn line_integral(&self, x: &[f64], y: &[f64], rule: &GaussLegendre) -> f64 {
        let d = x.len();
        let dx: Vec<f64> = (0..d).map(|i| y[i] - x[i]).collect();
        let mut s: f64 = self.constant.iter().zip(&dx).map(|(a, v)| a * v).sum();
        if self.terms.is_empty() {
            return s;
        }
        let mut p = vec![0.0; d];
        for (t_node, w) in rule.nodes.iter().zip(&rule.weights) {
            for i in 0..d {
                p[i] = x[i] + t_node * dx[i];
            }
            let mut f = 0.0;
            for t in &self.terms {
                let ph: f64 = t.wavevector.iter().zip(&p).map(|(k, xi)| k * xi).sum();
                let (sn, cs) = ph.sin_cos();
                for i in 0..d {
                    f += (t.cos_amp[i] * cs + t.sin_amp[i] * sn) * dx[i];
                }
            }
            s += w * f;
        }
        s
    }

    /// Smallest period per axis along which every harmonic is periodic, if any
    /// within `max_period`. The constant part never breaks periodicity.
    pub fn lattice_period(&self, dim: usize, max_period: usize) -> Option<Vec<usize>> {
        let mut out = vec![1usize; dim];
        for (axis, slot) in out.iter_mut().enumerate() {
            let ok = (1..=max_period).find(|&p| {
                self.terms.iter().all(|t| {
                    let r = t.wavevector[axis] * p as f64 / (2.0 * PI);
                    (r - r.round()).abs() < 1e-9
                })
            });
            *slot = ok?;
        }
        Some(out)
    }

    pub fn sum(&self, other: &Self) -> Self {
        let n = self.constant.len().max(other.constant.len());
        let mut constant = vec![0.0; n];
        for (i, c) in self.constant.iter().enumerate() {
            constant[i] += c;
        }
        for (i, c) in other.constant.iter().enumerate() {
            constant[i] += c;
        }
        let mut terms = self.terms.clone();
        terms.extend(other.terms.iter().cloned());
        Self { constant, terms }
    }
}

/// Scalar trigonometric polynomial `g(x) = sum_j a_j cos(k_j.x) + b_j sin(k_j.x)`,
/// used to build pure-gauge potentials `grad g`.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScalarTrig {
    pub terms: Vec<(Vec<f64>, f64, f64)>,
}

impl ScalarTrig {
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|(k, a, b)| {
                let ph: f64 = k.iter().zip(x).map(|(ki, xi)| ki * xi).sum();
                a * ph.cos() + b * ph.sin()
            })
            .sum()
    }

    pub fn gradient(&self) -> FluctuationPotential {
        let terms = self
            .terms
            .iter()
            .map(|(k, a, b)| FluctuationTerm {
                wavevector: k.clone(),
                cos_amp: k.iter().map(|ki| b * ki).collect(),
                sin_amp: k.iter().map(|ki| -a * ki).collect(),
            })
            .collect();
        FluctuationPotential { constant: Vec::new(), terms }
    }
}

/// Gauss-Legendre rule on `[0, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1, "quadrature order must be positive");
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n {
            // Newton iteration from the Chebyshev-like initial guess.
            let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (mut p0, mut p1) = (1.0, z);
                for k in 2..=n {
                    let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
                    p0 = p1;
                    p1 = p2;
                }
                let pn = if n == 1 { z } else { p1 };
                let pm = if n == 1 { 1.0 } else { p0 };
                dp = n as f64 * (z * pn - pm) / (z * z - 1.0);
                let dz = pn / dp;
                z -= dz;
                if dz.abs() < 1e-16 {
                    break;
                }
            }
            nodes[i] = 0.5 * (1.0 - z);
            weights[i] = 1.0 / ((1.0 - z * z) * dp * dp);
        }
        Self { nodes, weights }
    }
}

/// The field data of a run: constant part, fluctuation, `eps`, coupling `c`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MagneticSetup {
    pub constant: ConstantField,
    #[serde(default)]
    pub fluct: FluctuationPotential,
    pub eps: f64,
    #[serde(default)]
    pub c: f64,
    #[serde(default = "default_quad_order")]
    pub quad_order: usize,
    #[serde(skip, default)]
    rule: Option<GaussLegendre>,
}

fn default_quad_order() -> usize {
    16
}

impl MagneticSetup {
    pub fn new(constant: ConstantField, fluct: FluctuationPotential, eps: f64, c: f64) -> Result<Self> {
        if !(eps >= 0.0) || !eps.is_finite() {
            return Err(Error::InvalidArgument(format!("eps must be >= 0, got {eps}")));
        }
        if !(0.0..=1.0).contains(&c) {
            return Err(Error::InvalidArgument(format!("c must lie in [0, 1], got {c}")));
        }
        fluct.validate(constant.dim)?;
        let quad_order = default_quad_order();
        Ok(Self { constant, fluct, eps, c, quad_order, rule: Some(GaussLegendre::new(quad_order)) })
    }

    /// No field at all.
    pub fn zero(dim: usize) -> Self {
        Self::new(ConstantField::zero(dim), FluctuationPotential::zero(), 0.0, 0.0).unwrap()
    }

    /// Planar constant field with flux per plaquette `flux = eps * b`, `b = 1`.
    pub fn planar_flux(flux: f64) -> Self {
        Self::new(ConstantField::planar(1.0), FluctuationPotential::zero(), flux, 0.0).unwrap()
    }

    pub fn with_quad_order(mut self, n: usize) -> Self {
        self.quad_order = n;
        self.rule = Some(GaussLegendre::new(n));
        self
    }

    pub fn with_eps(&self, eps: f64) -> Self {
        let mut s = self.clone();
        s.eps = eps;
        s
    }

    pub fn with_c(&self, c: f64) -> Self {
        let mut s = self.clone();
        s.c = c;
        s
    }

    /// Drop the fluctuation (`c = 0`).
    pub fn constant_part(&self) -> Self {
        self.with_c(0.0)
    }

    pub fn dim(&self) -> usize {
        self.constant.dim
    }

    /// Flux per plaquette `eps * b` (planar), zero otherwise.
    pub fn flux(&self) -> f64 {
        self.eps * self.constant.b()
    }

    pub fn has_fluct(&self) -> bool {
        self.c != 0.0 && self.eps != 0.0 && !self.fluct.is_zero()
    }

    fn rule(&self) -> std::borrow::Cow<'_, GaussLegendre> {
        match &self.rule {
            Some(r) if r.nodes.len() == self.quad_order => std::borrow::Cow::Borrowed(r),
            _ => std::borrow::Cow::Owned(GaussLegendre::new(self.quad_order)),
        }
    }

    /// Constant-field Peierls phase.
    pub fn lambda_const(&self, x: &[f64], y: &[f64]) -> c64 {
        cis(-0.5 * self.eps * self.constant.pairing(x, y))
    }

    /// Fluctuation phase along the straight segment from `x` to `y`.
    pub fn lambda_fluct(&self, x: &[f64], y: &[f64]) -> c64 {
        if !self.has_fluct() || x == y {
            return c64::new(1.0, 0.0);
        }
        cis(-self.c * self.eps * self.fluct.line_integral(x, y, &self.rule()))
    }

    pub fn lambda(&self, x: &[f64], y: &[f64]) -> c64 {
        self.lambda_const(x, y) * self.lambda_fluct(x, y)
    }

    /// `Lambda(x,y) Lambda(y,z) Lambda(z,x)` including the fluctuation.
    pub fn flux_phase(&self, x: &[f64], y: &[f64], z: &[f64]) -> c64 {
        self.lambda(x, y) * self.lambda(y, z) * self.lambda(z, x)
    }

    /// Closed form of the constant-field part: `exp(-i eps <B, area bivector>)`.
    pub fn flux_phase_const(&self, x: &[f64], y: &[f64], z: &[f64]) -> c64 {
        let d = self.dim();
        let u: Vec<f64> = (0..d).map(|i| y[i] - x[i]).collect();
        let v: Vec<f64> = (0..d).map(|i| z[i] - x[i]).collect();
        let mut s = 0.0;
        for k in 0..d {
            for j in (k + 1)..d {
                s += self.constant.matrix[k * d + j] * 0.5 * (u[k] * v[j] - u[j] * v[k]);
            }
        }
        cis(-self.eps * s)
    }
}

/// `p / q` in lowest terms with `flux = 2 pi p / q`, if `flux` is commensurate
/// with denominator at most `max_q`.
pub fn rational_flux(flux: f64, max_q: usize) -> Option<(i64, usize)> {
    let r = flux / (2.0 * PI);
    (1..=max_q).find_map(|q| {
        let p = r * q as f64;
        ((p - p.round()).abs() < 1e-9).then(|| (p.round() as i64, q))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gauss_legendre_integrates_polynomials() {
        let r = GaussLegendre::new(8);
        let s: f64 = r.nodes.iter().zip(&r.weights).map(|(x, w)| w * x.powi(15)).sum();
        assert!((s - 1.0 / 16.0).abs() < 1e-14);
        assert!((r.weights.iter().sum::<f64>() - 1.0).abs() < 1e-14);
        let one = GaussLegendre::new(1);
        assert!((one.nodes[0] - 0.5).abs() < 1e-15 && (one.weights[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rational_flux_detects_denominator() {
        assert_eq!(rational_flux(2.0 * PI * 3.0 / 8.0, 64), Some((3, 8)));
        assert_eq!(rational_flux(0.0, 64), Some((0, 1)));
        assert_eq!(rational_flux(1.0, 16), None);
    }

    #[test]
    fn fluctuation_period() {
        let f = FluctuationPotential {
            constant: vec![],
            terms: vec![FluctuationTerm {
                wavevector: vec![0.0, 2.0 * PI / 8.0],
                cos_amp: vec![0.0, 0.0],
                sin_amp: vec![0.5, 0.0],
            }],
        };
        assert_eq!(f.lattice_period(2, 64), Some(vec![1, 8]));
    }
}
