//! Damage laws and the bound-constrained damage subproblem.
//!
//! `α = 1` is the sound state and `α = 0` complete damage. The hardening
//! modulus is `c1(α) = c̄ ᾱ / (1 − ᾱ)` with `ᾱ = min(α, α_cap)`, and the
//! dissipation density is linear, `d(α) = w_d (1 − α)`.

use serde::{Deserialize, Serialize};

use crate::error::{SolverError, ValidationError};
use crate::mesh::Mesh;
use crate::tensors::SymTensor;

pub const DEFAULT_ALPHA_CAP: f64 = 1.0 - 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DamageLaw {
    pub c_bar: f64,
    pub w_d: f64,
    pub w_grad: f64,
    pub alpha_cap: f64,
    /// Constant added to the dissipation density; it shifts every energy by
    /// `offset |Ω|` and leaves all minimizers unchanged.
    #[serde(default)]
    pub d_offset: f64,
}

impl DamageLaw {
    pub fn new(c_bar: f64, w_d: f64, w_grad: f64) -> Self {
        Self {
            c_bar,
            w_d,
            w_grad,
            alpha_cap: DEFAULT_ALPHA_CAP,
            d_offset: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ValidationError> {
        let mut issues = Vec::new();
        if !(self.c_bar > 0.0 && self.c_bar.is_finite()) {
            issues.push(format!("material.c_bar: must be positive, got {}", self.c_bar));
        }
        if !(self.w_d > 0.0 && self.w_d.is_finite()) {
            issues.push(format!("material.w_d: must be positive, got {}", self.w_d));
        }
        if !(self.w_grad >= 0.0 && self.w_grad.is_finite()) {
            issues.push(format!("material.w_grad: must be nonnegative, got {}", self.w_grad));
        }
        if !(self.alpha_cap > 0.0 && self.alpha_cap < 1.0) {
            issues.push(format!(
                "material.alpha_cap: must lie in (0, 1), got {}",
                self.alpha_cap
            ));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ValidationError { issues })
        }
    }

    pub fn c1(&self, alpha: f64) -> f64 {
        let a = alpha.min(self.alpha_cap).max(0.0);
        self.c_bar * a / (1.0 - a)
    }

    pub fn c1_deriv(&self, alpha: f64) -> f64 {
        if alpha > self.alpha_cap {
            return 0.0;
        }
        let a = alpha.max(0.0);
        self.c_bar / ((1.0 - a) * (1.0 - a))
    }

    pub fn c1_second(&self, alpha: f64) -> f64 {
        if alpha > self.alpha_cap {
            return 0.0;
        }
        let a = alpha.max(0.0);
        2.0 * self.c_bar / ((1.0 - a) * (1.0 - a) * (1.0 - a))
    }

    pub fn dissipation_density(&self, alpha: f64) -> f64 {
        self.w_d * (1.0 - alpha) + self.d_offset
    }

    /// `D(α) = ∫ d(α) dx`, exact for P1 fields since `d` is affine.
    pub fn dissipation(&self, mesh: &Mesh, alpha: &[f64]) -> f64 {
        (0..mesh.n_elements())
            .map(|e| mesh.elements[e].measure * self.dissipation_density(mesh.element_mean(e, alpha)))
            .sum()
    }

    /// `w_grad ‖∇α‖²`.
    pub fn gradient_energy(&self, mesh: &Mesh, alpha: &[f64]) -> f64 {
        if self.w_grad == 0.0 {
            return 0.0;
        }
        self.w_grad * mesh.gradient_energy(alpha)
    }

    /// `∫ c1(α) p:p dx` with `c1` evaluated at element means of `α`.
    pub fn hardening_energy(&self, mesh: &Mesh, alpha: &[f64], p: &[SymTensor]) -> f64 {
        (0..mesh.n_elements())
            .map(|e| {
                mesh.elements[e].measure * self.c1(mesh.element_mean(e, alpha)) * p[e].norm_squared()
            })
            .sum()
    }

    /// Element hardening moduli for a nodal damage field.
    pub fn element_c1(&self, mesh: &Mesh, alpha: &[f64]) -> Vec<f64> {
        (0..mesh.n_elements())
            .map(|e| self.c1(mesh.element_mean(e, alpha)))
            .collect()
    }
}

/// Nodal damage values in `[0, 1]`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DamageField(Vec<f64>);

impl DamageField {
    pub fn new(values: Vec<f64>) -> Result<Self, ValidationError> {
        if let Some(v) = values.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(ValidationError::single(format!(
                "damage value {v} outside [0, 1]"
            )));
        }
        Ok(Self(values))
    }

    pub fn uniform(n: usize, value: f64) -> Result<Self, ValidationError> {
        Self::new(vec![value; n])
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }

    /// True when `self ≤ other` at every node.
    pub fn is_below(&self, other: &DamageField) -> bool {
        self.0.iter().zip(&other.0).all(|(a, b)| a <= b)
    }
}

/// The damage block of the incremental energy with the plastic strain frozen:
/// `J(α) = D(α) + w_grad ‖∇α‖² + ∫ c1(α) |p|²`.
pub struct AlphaObjective<'a> {
    mesh: &'a Mesh,
    law: &'a DamageLaw,
    p_sq: Vec<f64>,
}

impl<'a> AlphaObjective<'a> {
    pub fn new(mesh: &'a Mesh, law: &'a DamageLaw, p: &[SymTensor]) -> Self {
        Self {
            mesh,
            law,
            p_sq: p.iter().map(|q| q.norm_squared()).collect(),
        }
    }

    pub fn value(&self, alpha: &[f64]) -> f64 {
        let mut j = self.law.gradient_energy(self.mesh, alpha);
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let a = self.mesh.element_mean(e, alpha);
            j += el.measure * (self.law.dissipation_density(a) + self.law.c1(a) * self.p_sq[e]);
        }
        j
    }

    pub fn gradient(&self, alpha: &[f64]) -> Vec<f64> {
        let mut g = if self.law.w_grad > 0.0 {
            self.mesh
                .gradient_apply(alpha)
                .into_iter()
                .map(|v| 2.0 * self.law.w_grad * v)
                .collect()
        } else {
            vec![0.0; alpha.len()]
        };
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let a = self.mesh.element_mean(e, alpha);
            let share = el.measure / el.vertices.len() as f64;
            let d = share * (-self.law.w_d + self.law.c1_deriv(a) * self.p_sq[e]);
            for &v in &el.vertices {
                g[v] += d;
            }
        }
        g
    }

    /// Diagonal of the Hessian.
    pub fn hessian_diagonal(&self, alpha: &[f64]) -> Vec<f64> {
        let mut h = vec![0.0; alpha.len()];
        if self.law.w_grad > 0.0 {
            for (i, row) in self.mesh.gradient_rows().iter().enumerate() {
                if let Some(&(_, v)) = row.iter().find(|(j, _)| *j == i) {
                    h[i] += 2.0 * self.law.w_grad * v;
                }
            }
        }
        for (e, el) in self.mesh.elements.iter().enumerate() {
            let a = self.mesh.element_mean(e, alpha);
            let m = el.vertices.len() as f64;
            let d = el.measure / (m * m) * self.law.c1_second(a) * self.p_sq[e];
            for &v in &el.vertices {
                h[v] += d;
            }
        }
        h
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlphaSolverOptions {
    pub tol: f64,
    pub max_iters: usize,
}

impl Default for AlphaSolverOptions {
    fn default() -> Self {
        Self {
            tol: 1e-11,
            max_iters: 20_000,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AlphaStep {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    /// Scaled projected-gradient residual at the returned point.
    pub residual: f64,
}

fn project(x: f64, upper: f64) -> f64 {
    x.min(upper).max(0.0)
}

fn scaled_residual(x: &[f64], g: &[f64], diag: &[f64], upper: &[f64]) -> f64 {
    (0..x.len())
        .map(|i| (x[i] - project(x[i] - g[i] / diag[i], upper[i])).abs())
        .fold(0.0, f64::max)
}

fn diag_floor(law: &DamageLaw) -> f64 {
    1e-12 * (law.w_d + law.c_bar + law.w_grad)
}

/// Scaled projected-gradient residual of the damage block at `alpha`; zero
/// exactly at a minimizer over `0 ≤ α ≤ upper`.
pub fn alpha_residual(
    alpha: &[f64],
    upper: &[f64],
    p: &[SymTensor],
    mesh: &Mesh,
    law: &DamageLaw,
) -> f64 {
    let obj = AlphaObjective::new(mesh, law, p);
    let floor = diag_floor(law);
    let diag: Vec<f64> = obj
        .hessian_diagonal(alpha)
        .into_iter()
        .map(|d| d.max(floor))
        .collect();
    scaled_residual(alpha, &obj.gradient(alpha), &diag, upper)
}

/// Minimizes the damage objective over `0 ≤ α ≤ upper` starting from
/// `start`, by diagonally scaled projected gradient with Barzilai–Borwein
/// steps and a monotone Armijo line search.
pub fn alpha_step(
    start: &[f64],
    upper: &[f64],
    p: &[SymTensor],
    mesh: &Mesh,
    law: &DamageLaw,
    opts: &AlphaSolverOptions,
) -> Result<AlphaStep, SolverError> {
    let obj = AlphaObjective::new(mesh, law, p);
    let nv = start.len();
    let mut x: Vec<f64> = start.iter().zip(upper).map(|(&a, &u)| project(a, u)).collect();
    let mut fx = obj.value(&x);
    let mut g = obj.gradient(&x);
    let scale_floor = diag_floor(law);
    let mut diag: Vec<f64> = obj
        .hessian_diagonal(&x)
        .into_iter()
        .map(|d| d.max(scale_floor))
        .collect();
    let mut step = 1.0;

    let residual_of = |x: &[f64], g: &[f64], diag: &[f64]| scaled_residual(x, g, diag, upper);

    for it in 0..opts.max_iters {
        let res = residual_of(&x, &g, &diag);
        if !res.is_finite() || !fx.is_finite() {
            return Err(SolverError::NonFinite {
                context: "damage subproblem",
            });
        }
        if res <= opts.tol {
            return Ok(AlphaStep {
                alpha: x,
                objective: fx,
                iterations: it,
                residual: res,
            });
        }
        let mut s = step;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = (0..nv)
                .map(|i| project(x[i] - s * g[i] / diag[i], upper[i]))
                .collect();
            let decrease: f64 = (0..nv).map(|i| g[i] * (x[i] - trial[i])).sum();
            let ft = obj.value(&trial);
            let gt = obj.gradient(&trial);
            let armijo = ft <= fx - 1e-4 * decrease;
            // Close to the minimizer objective differences fall below
            // rounding; a smaller residual at an equal objective is progress.
            let flat = ft <= fx + 1e-14 * fx.abs().max(law.w_d * mesh.measure())
                && residual_of(&trial, &gt, &diag) < res;
            if armijo || flat {
                accepted = Some((trial, ft, gt));
                break;
            }
            s *= 0.5;
        }
        let Some((xn, fn_, gn)) = accepted else {
            return Err(SolverError::Damage {
                iterations: it,
                residual: res,
            });
        };
        // Barzilai–Borwein step in the diagonally scaled metric.
        let (mut sdds, mut sdy) = (0.0, 0.0);
        for i in 0..nv {
            let dx = xn[i] - x[i];
            sdds += dx * dx * diag[i];
            sdy += dx * (gn[i] - g[i]);
        }
        step = if sdy > 0.0 { (sdds / sdy).clamp(1e-6, 1e6) } else { 1.0 };
        x = xn;
        fx = fn_;
        g = gn;
        diag = obj
            .hessian_diagonal(&x)
            .into_iter()
            .map(|d| d.max(scale_floor))
            .collect();
    }
    Err(SolverError::Damage {
        iterations: opts.max_iters,
        residual: residual_of(&x, &g, &diag),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::mesh::{build_mesh, BoundaryTag, MeshShape, MeshSpec};

    fn point() -> Mesh {
        let tags: BTreeMap<String, BoundaryTag> = ["xx", "yy", "zz", "yz", "xz", "xy"]
            .iter()
            .map(|s| (s.to_string(), BoundaryTag::Dirichlet))
            .collect();
        build_mesh(&MeshSpec {
            shape: MeshShape::Point { dim: 3 },
            tags,
        })
        .unwrap()
    }

    fn segment(n: usize) -> Mesh {
        let tags: BTreeMap<String, BoundaryTag> = [
            ("left", BoundaryTag::Dirichlet),
            ("right", BoundaryTag::Dirichlet),
            ("yy", BoundaryTag::Neumann),
        ]
        .iter()
        .map(|(s, t)| (s.to_string(), *t))
        .collect();
        build_mesh(&MeshSpec {
            shape: MeshShape::Segment {
                n_elems: n,
                length: 1.0,
                dim: 2,
            },
            tags,
        })
        .unwrap()
    }

    fn p_uniform(dim: usize, mag: f64) -> SymTensor {
        SymTensor::identity(dim) * (mag / (dim as f64).sqrt())
    }

    #[test]
    fn c1_examples() {
        let law = DamageLaw::new(2.0, 1.0, 0.0);
        assert_eq!(law.c1(0.0), 0.0);
        assert!((law.c1(0.5) - 2.0).abs() < 1e-15);
        let unit = DamageLaw::new(1.0, 1.0, 0.0);
        assert!((unit.c1(unit.alpha_cap) - 1e6).abs() / 1e6 < 2e-6);
        assert_eq!(unit.c1(1.0), unit.c1(unit.alpha_cap));
        assert_eq!(unit.c1_deriv(1.0), 0.0);
    }

    #[test]
    fn c1_is_nondecreasing_with_consistent_derivative() {
        let law = DamageLaw::new(1.5, 1.0, 0.0);
        let mut prev = 0.0;
        for i in 1..1000 {
            let a = i as f64 / 1000.0 * 0.99;
            let c = law.c1(a);
            assert!(c >= prev);
            prev = c;
            let h = 1e-6;
            let fd = (law.c1(a + h) - law.c1(a - h)) / (2.0 * h);
            assert!((fd - law.c1_deriv(a)).abs() <= 1e-5 * law.c1_deriv(a));
            let fd2 = (law.c1_deriv(a + h) - law.c1_deriv(a - h)) / (2.0 * h);
            assert!((fd2 - law.c1_second(a)).abs() <= 1e-5 * law.c1_second(a));
        }
    }

    #[test]
    fn dissipation_examples() {
        let m = point();
        let law = DamageLaw::new(1.0, 4.0, 0.0);
        assert_eq!(law.dissipation(&m, &[1.0]), 0.0);
        assert!((law.dissipation(&m, &[0.0]) - 4.0).abs() < 1e-15);
        assert!((law.dissipation(&m, &[0.25]) - 3.0).abs() < 1e-15);
    }

    #[test]
    fn zero_plastic_strain_keeps_alpha() {
        let m = segment(6);
        let law = DamageLaw::new(1.0, 1.0, 0.1);
        let prev = vec![0.7; m.n_vertices()];
        let p = vec![SymTensor::zeros(2); m.n_elements()];
        let out = alpha_step(&prev, &prev, &p, &m, &law, &Default::default()).unwrap();
        for a in out.alpha {
            assert!((a - 0.7).abs() < 1e-14);
        }
    }

    #[test]
    fn point_closed_form() {
        let m = point();
        for &(c_bar, w_d, pm, prev) in &[
            (1.0, 1.0, 0.2, DEFAULT_ALPHA_CAP),
            (0.5, 2.0, 0.9, 0.95),
            (2.0, 0.5, 0.1, 0.3),
            (1.0, 1.0, 3.0, 0.8),
        ] {
            let law = DamageLaw::new(c_bar, w_d, 0.0);
            let p = vec![p_uniform(3, pm)];
            let out = alpha_step(&[prev], &[prev], &p, &m, &law, &Default::default()).unwrap();
            let expected = (1.0 - pm * (c_bar / w_d).sqrt()).clamp(0.0, prev);
            assert!(
                (out.alpha[0] - expected).abs() < 1e-9,
                "{} vs {expected}",
                out.alpha[0]
            );
        }
    }

    #[test]
    fn fully_damaged_node_stays() {
        let m = segment(4);
        let law = DamageLaw::new(1.0, 1.0, 0.05);
        let mut prev = vec![0.9; m.n_vertices()];
        prev[2] = 0.0;
        let p = vec![p_uniform(2, 0.1); m.n_elements()];
        let out = alpha_step(&prev, &prev, &p, &m, &law, &Default::default()).unwrap();
        assert_eq!(out.alpha[2], 0.0);
        assert!(out.alpha.iter().zip(&prev).all(|(a, b)| a <= b));
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let m = segment(8);
        let law = DamageLaw::new(0.8, 1.3, 0.02);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..10 {
            let p: Vec<SymTensor> = (0..m.n_elements())
                .map(|_| SymTensor::from_voigt(2, &[rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)]))
                .collect();
            let alpha: Vec<f64> = (0..m.n_vertices()).map(|_| rng.random_range(0.05..0.9)).collect();
            let obj = AlphaObjective::new(&m, &law, &p);
            let g = obj.gradient(&alpha);
            for i in 0..alpha.len() {
                let h = 1e-6;
                let mut ap = alpha.clone();
                let mut am = alpha.clone();
                ap[i] += h;
                am[i] -= h;
                let fd = (obj.value(&ap) - obj.value(&am)) / (2.0 * h);
                assert!((fd - g[i]).abs() <= 1e-5 * g[i].abs().max(1e-3));
            }
        }
    }

    #[test]
    fn minimizer_has_nonnegative_directional_derivatives() {
        let m = segment(10);
        let law = DamageLaw::new(0.5, 1.0, 0.01);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p: Vec<SymTensor> = (0..m.n_elements())
            .map(|e| p_uniform(2, 0.2 + 0.1 * (e as f64)))
            .collect();
        let upper = vec![0.9; m.n_vertices()];
        let out = alpha_step(&upper, &upper, &p, &m, &law, &Default::default()).unwrap();
        let obj = AlphaObjective::new(&m, &law, &p);
        let g = obj.gradient(&out.alpha);
        let scale: f64 = g.iter().map(|v| v.abs()).sum::<f64>() + 1.0;
        for _ in 0..1000 {
            let dd: f64 = (0..g.len())
                .map(|i| {
                    let b = if out.alpha[i] > 0.0 { -rng.random_range(0.0..1.0) } else { 0.0 };
                    g[i] * b
                })
                .sum();
            assert!(dd >= -1e-8 * scale);
        }
    }

    #[test]
    fn larger_plastic_strain_never_raises_alpha() {
        let m = segment(6);
        let law = DamageLaw::new(0.5, 1.0, 0.02);
        let upper = vec![0.95; m.n_vertices()];
        let base: Vec<SymTensor> = (0..m.n_elements()).map(|_| p_uniform(2, 0.3)).collect();
        let a0 = alpha_step(&upper, &upper, &base, &m, &law, &Default::default()).unwrap();
        for e in 0..m.n_elements() {
            let mut bigger = base.clone();
            bigger[e] = p_uniform(2, 0.6);
            let a1 = alpha_step(&upper, &upper, &bigger, &m, &law, &Default::default()).unwrap();
            for &v in &m.elements[e].vertices {
                assert!(a1.alpha[v] <= a0.alpha[v] + 1e-9);
            }
        }
    }
}
