//! Drucker–Prager constraint set `K = {σ : τ σ_m + |σ_D| − k ≤ 0}`, its
//! support function and the local incremental update.
//!
//! The support function has the closed form
//!
//! ```text
//! H(ξ) = (k/τ) tr ξ   if τ |ξ_D| ≤ tr ξ,
//!        +∞           otherwise,
//! ```
//!
//! obtained by maximizing `σ : ξ` first over the direction of `σ_D`, then
//! over `|σ_D|` and `σ_m` on the yield surface. Its domain is the
//! dilatancy cone: every admissible plastic increment has `tr δ ≥ τ |δ_D|`.

use serde::{Deserialize, Serialize};

use crate::error::SolverError;
use crate::tensors::{HookeParams, SymTensor};

/// Relative slack on the cone inequality `τ|ξ_D| ≤ tr ξ` absorbing rounding
/// in increments produced on the cone boundary.
pub const DOMAIN_RTOL: f64 = 1e-12;

/// Value of the support function: finite or `+∞`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Support {
    Finite(f64),
    Infinite,
}

impl Support {
    pub fn is_finite(&self) -> bool {
        matches!(self, Support::Finite(_))
    }

    pub fn finite(&self) -> Option<f64> {
        match *self {
            Support::Finite(v) => Some(v),
            Support::Infinite => None,
        }
    }

    /// `f64::INFINITY` for the infinite value.
    pub fn to_f64(&self) -> f64 {
        self.finite().unwrap_or(f64::INFINITY)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DruckerPrager {
    tau: f64,
    k: f64,
    dim: usize,
    r_h: f64,
}

impl DruckerPrager {
    /// Panics unless `tau > 0`, `k > 0` and `dim ∈ {2, 3}`; scenario input is
    /// validated before it gets here.
    pub fn new(tau: f64, k: f64, dim: usize) -> Self {
        assert!(tau > 0.0 && k > 0.0, "Drucker-Prager needs tau > 0 and k > 0");
        assert!(dim == 2 || dim == 3);
        let r_h = k / (tau * tau / dim as f64 + 1.0).sqrt();
        let dp = Self { tau, k, dim, r_h };
        // The maximizer of τξ_m + |ξ_D| on the unit sphere, scaled by r_H,
        // must land on the yield surface.
        let n = dim as f64;
        let mut dir = SymTensor::identity(dim) * (tau / n);
        dir.set(dim, 1.0 / 2f64.sqrt());
        let dir = dir * (1.0 / dir.norm());
        debug_assert!(dp.yield_value(&(dir * r_h)).abs() <= 1e-12 * k);
        dp
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `τ σ_m + |σ_D| − k`; nonpositive exactly on `K`.
    pub fn yield_value(&self, sigma: &SymTensor) -> f64 {
        let (m, d) = sigma.split();
        self.tau * m + d.norm() - self.k
    }

    pub fn contains(&self, sigma: &SymTensor, tol: f64) -> bool {
        self.yield_value(sigma) <= tol
    }

    /// `τ |ξ_D| − tr ξ`; nonpositive on `dom H`.
    pub fn cone_excess(&self, xi: &SymTensor) -> f64 {
        self.tau * xi.deviator().norm() - xi.trace()
    }

    pub fn in_domain(&self, xi: &SymTensor) -> bool {
        self.cone_excess(xi) <= DOMAIN_RTOL * xi.norm()
    }

    /// Support function `H(ξ) = sup_{σ ∈ K} σ : ξ`.
    pub fn support(&self, xi: &SymTensor) -> Support {
        if self.in_domain(xi) {
            Support::Finite((self.k / self.tau) * xi.trace().max(0.0))
        } else {
            Support::Infinite
        }
    }

    /// Radius of the largest centered ball inside `K`.
    pub fn inradius(&self) -> f64 {
        self.r_h
    }

    /// Nearest point of `K` in the Frobenius metric.
    ///
    /// In the plane `(x, y) = (√n σ_m, |σ_D|)` the set is the half-plane
    /// `(τ/√n) x + y ≤ k` cut by `y ≥ 0`; the deviatoric direction is kept.
    pub fn project(&self, sigma: &SymTensor) -> SymTensor {
        let f = self.yield_value(sigma);
        if f <= 0.0 {
            return *sigma;
        }
        let n = self.dim as f64;
        let (m, d) = sigma.split();
        let a = self.tau / n.sqrt();
        let y = d.norm();
        let x = n.sqrt() * m;
        let shift = f / (1.0 + a * a);
        let x_new = x - a * shift;
        let y_new = y - shift;
        let id = SymTensor::identity(self.dim);
        if y_new <= 0.0 || y == 0.0 {
            return id * (self.k / self.tau);
        }
        id * (x_new / n.sqrt()) + d * (y_new / y)
    }

    /// Objective of the local incremental problem at one material point:
    /// `½ C(ε−q):(ε−q) + c1 q:q + H(q − p_prev)`.
    pub fn local_incremental_energy(
        &self,
        q: &SymTensor,
        eps: &SymTensor,
        p_prev: &SymTensor,
        c1: f64,
        h: &HookeParams,
    ) -> Support {
        let e = *eps - *q;
        let smooth = h.energy_density(&e) + c1 * q.norm_squared();
        match self.support(&(*q - *p_prev)) {
            Support::Finite(v) => Support::Finite(smooth + v),
            Support::Infinite => Support::Infinite,
        }
    }

    /// Nudges `p_new` along the identity until the increment actually
    /// realized in floating point, `p_new − p_prev`, lies in `dom H`. On the
    /// cone boundary the exact increment has `tr δ = τ |δ_D|`, which rounding
    /// can break by an ulp either way.
    fn snap_increment(&self, p_prev: &SymTensor, p_new: &SymTensor) -> (SymTensor, SymTensor) {
        let id = SymTensor::identity(self.dim);
        let mut p = *p_new;
        for i in 0..16 {
            let delta = p - *p_prev;
            let excess = self.cone_excess(&delta);
            if excess <= 0.0 {
                return (p, delta);
            }
            let bump = excess.max(f64::EPSILON * p.norm()) * (1u32 << i) as f64;
            p += id * (bump / self.dim as f64);
        }
        (p, p - *p_prev)
    }

    /// Exact minimizer of [`Self::local_incremental_energy`] over `q`.
    ///
    /// With `A = σ − 2 c1 q` the optimality condition is `A ∈ ∂H(q − p_prev)`.
    /// Isotropy of `C` and the scalar hardening modulus freeze the
    /// deviatoric direction of the shifted trial stress, which leaves three
    /// cases: no flow, flow strictly inside the dilatancy cone (`A = (k/τ) Id`),
    /// and flow on the cone boundary, where the remaining scalar equation is
    /// linear in the deviatoric magnitude of the increment.
    pub fn return_map(
        &self,
        eps_trial: &SymTensor,
        p_prev: &SymTensor,
        c1: f64,
        h: &HookeParams,
    ) -> Result<LocalUpdate, SolverError> {
        debug_assert!(c1 >= 0.0);
        let n = self.dim as f64;
        let (tau, k) = (self.tau, self.k);
        let sigma_trial = h.apply(&(*eps_trial - *p_prev));
        let shifted_trial = sigma_trial - *p_prev * (2.0 * c1);
        if !shifted_trial.is_finite() {
            return Err(SolverError::NonFinite {
                context: "return mapping trial stress",
            });
        }
        let kb = h.volumetric_modulus(self.dim);
        let g1 = 2.0 * h.mu + 2.0 * c1;
        let k1 = kb + 2.0 * c1;

        let (delta, tangent) = if self.yield_value(&shifted_trial) <= 0.0 {
            (SymTensor::zeros(self.dim), Tangent::Elastic)
        } else {
            let (a_m, a_d) = shifted_trial.split();
            let r = a_d.norm();
            let delta_m = (a_m - k / tau) / k1;
            let delta_d = a_d * (1.0 / g1);
            // Interior candidate is valid iff τ|δ_D| ≤ n δ_m.
            if delta_m > 0.0 && tau * r / g1 <= n * delta_m {
                let delta = SymTensor::identity(self.dim) * delta_m + delta_d;
                (delta, Tangent::ConeInterior { kb, k1, g1 })
            } else {
                let gamma = g1 + k1 * tau * tau / n;
                let beta = (tau * a_m + r - k) / gamma;
                let dir = a_d * (1.0 / r);
                let delta = SymTensor::identity(self.dim) * (tau * beta / n) + dir * beta;
                (
                    delta,
                    Tangent::ConeBoundary {
                        kb,
                        tau,
                        gamma,
                        beta,
                        r,
                        dir,
                    },
                )
            }
        };

        let (p_new, delta) = self.snap_increment(p_prev, &(*p_prev + delta));
        let elastic = *eps_trial - p_new;
        let sigma = h.apply(&elastic);
        let shifted = sigma - p_new * (2.0 * c1);
        let regime = tangent.regime();
        if regime == Regime::ConeBoundary {
            // The shifted stress must sit on the yield surface.
            let residual = self.yield_value(&shifted);
            let scale = k + shifted_trial.norm();
            if !residual.is_finite() || residual.abs() > 1e-9 * scale {
                return Err(SolverError::ConeSolve { residual });
            }
        }
        let dissipation = match self.support(&delta) {
            Support::Finite(v) => v,
            Support::Infinite => {
                return Err(SolverError::ConeSolve {
                    residual: self.cone_excess(&delta),
                })
            }
        };
        let energy = h.energy_density(&elastic) + c1 * p_new.norm_squared() + dissipation;
        Ok(LocalUpdate {
            p_new,
            delta_p: delta,
            elastic,
            sigma,
            dissipation,
            energy,
            regime,
            c1,
            tangent,
            mu: h.mu,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Elastic,
    ConeInterior,
    ConeBoundary,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Tangent {
    Elastic,
    ConeInterior {
        kb: f64,
        k1: f64,
        g1: f64,
    },
    ConeBoundary {
        kb: f64,
        tau: f64,
        gamma: f64,
        beta: f64,
        r: f64,
        dir: SymTensor,
    },
}

impl Tangent {
    fn regime(&self) -> Regime {
        match self {
            Tangent::Elastic => Regime::Elastic,
            Tangent::ConeInterior { .. } => Regime::ConeInterior,
            Tangent::ConeBoundary { .. } => Regime::ConeBoundary,
        }
    }
}

/// Result of the local update at one material point.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LocalUpdate {
    pub p_new: SymTensor,
    pub delta_p: SymTensor,
    pub elastic: SymTensor,
    pub sigma: SymTensor,
    /// `H(delta_p)`.
    pub dissipation: f64,
    /// Minimal value of the local incremental energy.
    pub energy: f64,
    pub regime: Regime,
    pub c1: f64,
    tangent: Tangent,
    mu: f64,
}

impl LocalUpdate {
    /// Back-stress shifted stress `σ − 2 c1 p`, which must lie in `K`.
    pub fn shifted_stress(&self) -> SymTensor {
        self.sigma - self.p_new * (2.0 * self.c1)
    }

    /// `|H(δ) − (σ − 2 c1 p) : δ|`, the discrete flow-rule residual.
    pub fn flow_residual(&self) -> f64 {
        (self.dissipation - self.shifted_stress().dot(&self.delta_p)).abs()
    }

    /// Consistent tangent `dσ/dε` applied to a strain increment.
    pub fn tangent(&self, h: &HookeParams, d_eps: &SymTensor) -> SymTensor {
        let base = h.apply(d_eps);
        let dim = d_eps.dim();
        let n = dim as f64;
        let id = SymTensor::identity(dim);
        match self.tangent {
            Tangent::Elastic => base,
            Tangent::ConeInterior { kb, k1, g1 } => {
                let (dm, dd) = d_eps.split();
                base - id * (kb * kb * dm / k1) - dd * (4.0 * self.mu * self.mu / g1)
            }
            Tangent::ConeBoundary {
                kb,
                tau,
                gamma,
                beta,
                r,
                dir,
            } => {
                let tau_over_n = tau / n;
                let (dm, dd) = d_eps.split();
                let mu2 = 2.0 * self.mu;
                let proj = dir.dot(&dd);
                let d_beta = (tau * kb * dm + mu2 * proj) / gamma;
                let d_dir = (dd - dir * proj) * (mu2 / r);
                base - id * (kb * tau_over_n * d_beta) - dir * (mu2 * d_beta) - d_dir * (mu2 * beta)
            }
        }
    }
}
