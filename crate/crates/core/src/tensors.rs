//! Symmetric second-order tensors in dimension 2 or 3 and the isotropic
//! Hooke operator.
//!
//! Components are stored in Voigt order with unscaled off-diagonal entries:
//! `[xx, yy, zz, yz, xz, xy]` for `n = 3` and `[xx, yy, xy]` for `n = 2`.
//! Every inner product weights off-diagonal entries by two, so `a.dot(&b)`
//! is the Frobenius product of the full matrices.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

/// Component labels in storage order for `n = 2`.
pub const LABELS_2D: [&str; 3] = ["xx", "yy", "xy"];
/// Component labels in storage order for `n = 3`.
pub const LABELS_3D: [&str; 6] = ["xx", "yy", "zz", "yz", "xz", "xy"];

/// Number of independent components of a symmetric `dim x dim` tensor.
pub const fn n_components(dim: usize) -> usize {
    dim * (dim + 1) / 2
}

/// Storage labels for the given dimension.
pub fn component_labels(dim: usize) -> &'static [&'static str] {
    match dim {
        2 => &LABELS_2D,
        3 => &LABELS_3D,
        _ => panic!("unsupported tensor dimension {dim}"),
    }
}

/// Storage index of entry `(i, j)`.
pub fn storage_index(dim: usize, i: usize, j: usize) -> usize {
    let (i, j) = if i <= j { (i, j) } else { (j, i) };
    if i == j {
        return i;
    }
    match (dim, i, j) {
        (2, 0, 1) => 2,
        (3, 1, 2) => 3,
        (3, 0, 2) => 4,
        (3, 0, 1) => 5,
        _ => panic!("index ({i}, {j}) out of range for dimension {dim}"),
    }
}

/// Inner-product weight of a storage slot: 1 on the diagonal, 2 off it.
#[inline]
pub fn component_weight(dim: usize, slot: usize) -> f64 {
    if slot < dim {
        1.0
    } else {
        2.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SymTensor {
    dim: usize,
    c: [f64; 6],
}

impl SymTensor {
    pub fn zeros(dim: usize) -> Self {
        assert!(dim == 2 || dim == 3, "unsupported tensor dimension {dim}");
        Self { dim, c: [0.0; 6] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            t.c[i] = 1.0;
        }
        t
    }

    /// Builds a tensor from its storage components.
    ///
    /// Panics if `comps.len()` differs from `n_components(dim)`.
    pub fn from_voigt(dim: usize, comps: &[f64]) -> Self {
        let mut t = Self::zeros(dim);
        assert_eq!(
            comps.len(),
            n_components(dim),
            "expected {} components for dimension {dim}",
            n_components(dim)
        );
        t.c[..comps.len()].copy_from_slice(comps);
        t
    }

    pub fn diag(values: &[f64]) -> Self {
        let mut t = Self::zeros(values.len());
        t.c[..values.len()].copy_from_slice(values);
        t
    }

    /// Unit tensor in a single storage slot (the strain produced by a unit
    /// value of that engineering component).
    pub fn unit(dim: usize, slot: usize) -> Self {
        let mut t = Self::zeros(dim);
        t.c[slot] = 1.0;
        t
    }

    /// Symmetric part of a full matrix; only the leading `dim x dim` block is read.
    pub fn from_matrix(dim: usize, m: &[[f64; 3]; 3]) -> Self {
        let mut t = Self::zeros(dim);
        for i in 0..dim {
            for j in i..dim {
                t.c[storage_index(dim, i, j)] = 0.5 * (m[i][j] + m[j][i]);
            }
        }
        t
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        let mut m = [[0.0; 3]; 3];
        for i in 0..self.dim {
            for j in 0..self.dim {
                m[i][j] = self.c[storage_index(self.dim, i, j)];
            }
        }
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn voigt(&self) -> &[f64] {
        &self.c[..n_components(self.dim)]
    }

    #[inline]
    pub fn get(&self, slot: usize) -> f64 {
        self.c[slot]
    }

    #[inline]
    pub fn set(&mut self, slot: usize, value: f64) {
        self.c[slot] = value;
    }

    #[inline]
    pub fn entry(&self, i: usize, j: usize) -> f64 {
        self.c[storage_index(self.dim, i, j)]
    }

    pub fn trace(&self) -> f64 {
        self.c[..self.dim].iter().sum()
    }

    /// `tr(xi) / n`.
    pub fn mean(&self) -> f64 {
        self.trace() / self.dim as f64
    }

    pub fn deviator(&self) -> Self {
        let m = self.mean();
        let mut d = *self;
        for i in 0..self.dim {
            d.c[i] -= m;
        }
        d
    }

    /// Orthogonal decomposition `xi = mean * Id + dev` with `tr(dev) = 0`.
    pub fn split(&self) -> (f64, Self) {
        (self.mean(), self.deviator())
    }

    /// Frobenius inner product of the full matrices.
    pub fn dot(&self, other: &Self) -> f64 {
        debug_assert_eq!(self.dim, other.dim);
        let n = self.dim;
        let mut s = 0.0;
        for k in 0..n_components(n) {
            s += component_weight(n, k) * self.c[k] * other.c[k];
        }
        s
    }

    pub fn norm_squared(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_squared().sqrt()
    }

    pub fn is_finite(&self) -> bool {
        self.voigt().iter().all(|v| v.is_finite())
    }

    pub fn scale(&self, s: f64) -> Self {
        *self * s
    }
}

impl Add for SymTensor {
    type Output = Self;
    fn add(mut self, rhs: Self) -> Self {
        self += rhs;
        self
    }
}

impl AddAssign for SymTensor {
    fn add_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        for k in 0..6 {
            self.c[k] += rhs.c[k];
        }
    }
}

impl Sub for SymTensor {
    type Output = Self;
    fn sub(mut self, rhs: Self) -> Self {
        self -= rhs;
        self
    }
}

impl SubAssign for SymTensor {
    fn sub_assign(&mut self, rhs: Self) {
        debug_assert_eq!(self.dim, rhs.dim);
        for k in 0..6 {
            self.c[k] -= rhs.c[k];
        }
    }
}

impl Mul<f64> for SymTensor {
    type Output = Self;
    fn mul(mut self, s: f64) -> Self {
        for v in self.c.iter_mut() {
            *v *= s;
        }
        self
    }
}

impl Mul<SymTensor> for f64 {
    type Output = SymTensor;
    fn mul(self, t: SymTensor) -> SymTensor {
        t * self
    }
}

impl Neg for SymTensor {
    type Output = Self;
    fn neg(self) -> Self {
        self * -1.0
    }
}

/// Lamé parameters of the isotropic Hooke tensor `C e = lambda tr(e) Id + 2 mu e`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HookeParams {
    pub lambda: f64,
    pub mu: f64,
}

impl HookeParams {
    pub fn new(lambda: f64, mu: f64) -> Self {
        Self { lambda, mu }
    }

    /// Ellipticity in dimension `dim`: `mu > 0` and `lambda + 2 mu / n > 0`.
    pub fn is_elliptic(&self, dim: usize) -> bool {
        self.mu > 0.0 && self.lambda + 2.0 * self.mu / dim as f64 > 0.0
    }

    pub fn apply(&self, e: &SymTensor) -> SymTensor {
        let mut s = *e * (2.0 * self.mu);
        let lt = self.lambda * e.trace();
        for i in 0..e.dim() {
            s.c[i] += lt;
        }
        s
    }

    /// Density `1/2 C e : e`.
    pub fn energy_density(&self, e: &SymTensor) -> f64 {
        0.5 * self.apply(e).dot(e)
    }

    /// Bulk-like modulus acting on the mean part: `(C (m Id))_m = (n lambda + 2 mu) m`.
    pub fn volumetric_modulus(&self, dim: usize) -> f64 {
        dim as f64 * self.lambda + 2.0 * self.mu
    }

    /// Lower ellipticity constant `2 mu ∧ (n lambda + 2 mu)`.
    pub fn gamma1(&self, dim: usize) -> f64 {
        (2.0 * self.mu).min(self.volumetric_modulus(dim))
    }

    /// Upper ellipticity constant `2 mu ∨ (n lambda + 2 mu)`.
    pub fn gamma2(&self, dim: usize) -> f64 {
        (2.0 * self.mu).max(self.volumetric_modulus(dim))
    }
}

/// Free-function form of [`SymTensor::split`].
pub fn split(xi: &SymTensor) -> (f64, SymTensor) {
    xi.split()
}

/// Free-function form of [`HookeParams::apply`].
pub fn hooke_apply(e: &SymTensor, h: &HookeParams) -> SymTensor {
    h.apply(e)
}
