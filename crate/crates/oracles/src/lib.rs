//! Brute-force reference computations for testing.
//!
//! Everything here works on full `3 × 3` matrices (the trailing row and
//! column stay zero in two dimensions) and is derived directly from the
//! definitions: suprema by sampling, minima by first-order iteration or grid
//! search. Nothing is shared with the library under test.

use rand::Rng;
use rand_distr::StandardNormal;

pub type Mat = [[f64; 3]; 3];

pub const ZERO: Mat = [[0.0; 3]; 3];

pub fn identity(n: usize) -> Mat {
    let mut m = ZERO;
    for (i, row) in m.iter_mut().enumerate().take(n) {
        row[i] = 1.0;
    }
    m
}

pub fn add(a: &Mat, b: &Mat) -> Mat {
    let mut m = ZERO;
    for i in 0..3 {
        for j in 0..3 {
            m[i][j] = a[i][j] + b[i][j];
        }
    }
    m
}

pub fn sub(a: &Mat, b: &Mat) -> Mat {
    add(a, &scale(b, -1.0))
}

pub fn scale(a: &Mat, s: f64) -> Mat {
    let mut m = *a;
    m.iter_mut().flatten().for_each(|x| *x *= s);
    m
}

/// Frobenius inner product.
pub fn dot(a: &Mat, b: &Mat) -> f64 {
    let mut s = 0.0;
    for i in 0..3 {
        for j in 0..3 {
            s += a[i][j] * b[i][j];
        }
    }
    s
}

pub fn norm(a: &Mat) -> f64 {
    dot(a, a).sqrt()
}

pub fn trace(a: &Mat) -> f64 {
    a[0][0] + a[1][1] + a[2][2]
}

pub fn deviator(a: &Mat, n: usize) -> Mat {
    sub(a, &scale(&identity(n), trace(a) / n as f64))
}

/// Isotropic Hooke law `λ tr(e) I + 2μ e` on `n × n` tensors.
pub fn hooke(e: &Mat, n: usize, lambda: f64, mu: f64) -> Mat {
    add(&scale(&identity(n), lambda * trace(e)), &scale(e, 2.0 * mu))
}

/// Symmetric `n × n` matrix with independent standard normal coordinates in
/// an orthonormal basis, hence rotation-invariant in distribution.
pub fn gaussian_sym<R: Rng>(rng: &mut R, n: usize) -> Mat {
    let mut m = ZERO;
    for i in 0..n {
        m[i][i] = rng.sample(StandardNormal);
        for j in 0..i {
            let v: f64 = rng.sample::<f64, _>(StandardNormal) / 2f64.sqrt();
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

/// Uniform sample of the unit sphere of symmetric `n × n` matrices.
pub fn unit_sym<R: Rng>(rng: &mut R, n: usize) -> Mat {
    let m = gaussian_sym(rng, n);
    scale(&m, 1.0 / norm(&m))
}

/// Uniform sample of the unit sphere of deviatoric `n × n` matrices.
pub fn unit_deviator<R: Rng>(rng: &mut R, n: usize) -> Mat {
    let d = deviator(&gaussian_sym(rng, n), n);
    scale(&d, 1.0 / norm(&d))
}

/// The Drucker–Prager set `{σ : τ σ_m + |σ_D| ≤ k}`.
#[derive(Clone, Copy, Debug)]
pub struct Cone {
    pub n: usize,
    pub tau: f64,
    pub k: f64,
}

impl Cone {
    pub fn yield_value(&self, s: &Mat) -> f64 {
        self.tau * trace(s) / self.n as f64 + norm(&deviator(s, self.n)) - self.k
    }

    /// Random points of the yield surface: `σ = σ_m I + r d` with `d` a unit
    /// deviator, `r` log-uniform over ten decades and `τ σ_m + r = k`.
    pub fn boundary_points<R: Rng>(&self, rng: &mut R, count: usize) -> Vec<Mat> {
        (0..count)
            .map(|_| {
                let r = self.k * 10f64.powf(rng.random_range(-7.0..3.0));
                let m = (self.k - r) / self.tau;
                add(&scale(&identity(self.n), m), &scale(&unit_deviator(rng, self.n), r))
            })
            .collect()
    }

    /// A random direction in `{ξ : τ |ξ_D| ≤ tr ξ}` of norm `size`.
    pub fn domain_point<R: Rng>(&self, rng: &mut R, size: f64) -> Mat {
        let d = unit_deviator(rng, self.n);
        let slack = rng.random_range(0.0..2.0_f64);
        let tr = self.tau * (1.0 + slack * slack);
        let xi = add(&scale(&identity(self.n), tr / self.n as f64), &d);
        scale(&xi, size / norm(&xi))
    }
}

/// `max_σ σ : ξ` over a set of sampled points.
pub fn sampled_support(xi: &Mat, points: &[Mat]) -> f64 {
    points.iter().map(|s| dot(s, xi)).fold(f64::NEG_INFINITY, f64::max)
}

/// Sampled maximum of `τ σ_m + |σ_D|` over the unit sphere.
pub fn sphere_max_gauge<R: Rng>(rng: &mut R, n: usize, tau: f64, samples: usize) -> f64 {
    let c = Cone { n, tau, k: 0.0 };
    (0..samples)
        .map(|_| c.yield_value(&unit_sym(rng, n)))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Sampled maximum of the yield function over the sphere of radius `radius`
/// centered at `rho`; by convexity this is the maximum over the ball.
pub fn ball_max_yield<R: Rng>(rng: &mut R, cone: &Cone, rho: &Mat, radius: f64, samples: usize) -> f64 {
    (0..samples)
        .map(|_| cone.yield_value(&add(rho, &scale(&unit_sym(rng, cone.n), radius))))
        .fold(f64::NEG_INFINITY, f64::max)
}

/// `½ C(ε−q):(ε−q) + c1 q:q + H(q − p_prev)` at one material point.
#[derive(Clone, Copy, Debug)]
pub struct LocalProblem {
    pub cone: Cone,
    pub lambda: f64,
    pub mu: f64,
    pub c1: f64,
    pub eps: Mat,
    pub p_prev: Mat,
}

/// Euclidean projection onto `{δ : τ |δ_D| ≤ tr δ}`, computed in the plane
/// spanned by the normalized identity and the deviator of the argument.
pub fn project_domain(delta: &Mat, n: usize, tau: f64) -> Mat {
    let nn = n as f64;
    let a = trace(delta) / nn.sqrt();
    let dev = deviator(delta, n);
    let y = norm(&dev);
    let c = nn.sqrt() / tau;
    if y <= c * a {
        return *delta;
    }
    if c * y <= -a {
        return ZERO;
    }
    let t = (a + c * y) / (1.0 + c * c);
    let unit_i = scale(&identity(n), 1.0 / nn.sqrt());
    add(&scale(&unit_i, t), &scale(&dev, c * t / y))
}

impl LocalProblem {
    /// The energy; `+∞` when `q − p_prev` leaves the dilatancy cone by more
    /// than `tol` in the cone inequality.
    pub fn energy(&self, q: &Mat, tol: f64) -> f64 {
        let n = self.cone.n;
        let delta = sub(q, &self.p_prev);
        let excess = self.cone.tau * norm(&deviator(&delta, n)) - trace(&delta);
        if excess > tol {
            return f64::INFINITY;
        }
        let e = sub(&self.eps, q);
        0.5 * dot(&hooke(&e, n, self.lambda, self.mu), &e)
            + self.c1 * dot(q, q)
            + self.cone.k / self.cone.tau * trace(&delta)
    }

    fn smooth_gradient(&self, delta: &Mat) -> Mat {
        let n = self.cone.n;
        let q = add(&self.p_prev, delta);
        let e = sub(&self.eps, &q);
        let g = sub(&scale(&q, 2.0 * self.c1), &hooke(&e, n, self.lambda, self.mu));
        add(&g, &scale(&identity(n), self.cone.k / self.cone.tau))
    }

    /// Minimizer by accelerated projected gradient with function-value
    /// restarts; returns `(q, energy)`.
    pub fn minimize(&self, max_iters: usize) -> (Mat, f64) {
        let n = self.cone.n;
        let lip = (2.0 * self.mu).max(n as f64 * self.lambda + 2.0 * self.mu) + 2.0 * self.c1;
        let step = 1.0 / lip;
        let (tau, nn) = (self.cone.tau, n);
        let f = |d: &Mat| self.energy(&add(&self.p_prev, d), f64::INFINITY);
        let mut x = ZERO;
        let mut y = ZERO;
        let mut theta = 1.0_f64;
        let mut fx = f(&x);
        for _ in 0..max_iters {
            let g = self.smooth_gradient(&y);
            let x_new = project_domain(&sub(&y, &scale(&g, step)), nn, tau);
            let f_new = f(&x_new);
            if f_new > fx {
                y = x;
                theta = 1.0;
                continue;
            }
            let theta_new = 0.5 * (1.0 + (1.0 + 4.0 * theta * theta).sqrt());
            let moved = norm(&sub(&x_new, &x));
            y = add(&x_new, &scale(&sub(&x_new, &x), (theta - 1.0) / theta_new));
            x = x_new;
            fx = f_new;
            theta = theta_new;
            if moved <= 1e-16 * (1.0 + norm(&x)) {
                break;
            }
        }
        (add(&self.p_prev, &x), fx)
    }
}

/// Grid minimizer of `w_d (1 − α) + c1(α) |p|²` over `[0, upper]` with
/// `c1(α) = c̄ min(α, cap) / (1 − min(α, cap))`.
pub fn alpha_grid_min(w_d: f64, c_bar: f64, cap: f64, p_norm: f64, upper: f64, resolution: f64) -> f64 {
    let j = |a: f64| {
        let ac = a.min(cap);
        w_d * (1.0 - a) + c_bar * ac / (1.0 - ac) * p_norm * p_norm
    };
    let steps = (upper / resolution).ceil() as usize;
    (0..=steps)
        .map(|i| (i as f64 * resolution).min(upper))
        .fold((f64::INFINITY, 0.0), |(best, arg), a| {
            let v = j(a);
            if v < best {
                (v, a)
            } else {
                (best, arg)
            }
        })
        .1
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn samplers_land_where_claimed() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let cone = Cone { n: 3, tau: 0.6, k: 1.0 };
        for s in cone.boundary_points(&mut rng, 100) {
            assert!(cone.yield_value(&s).abs() < 1e-9 * (1.0 + norm(&s)));
        }
        for _ in 0..100 {
            let xi = cone.domain_point(&mut rng, 2.0);
            assert!((norm(&xi) - 2.0).abs() < 1e-12);
            assert!(cone.tau * norm(&deviator(&xi, 3)) <= trace(&xi) + 1e-12);
        }
        let d = unit_deviator(&mut rng, 2);
        assert!(trace(&d).abs() < 1e-14 && d[2][2] == 0.0);
    }

    #[test]
    fn domain_projection_is_idempotent_and_nonexpansive() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for _ in 0..200 {
            let a = gaussian_sym(&mut rng, 3);
            let b = gaussian_sym(&mut rng, 3);
            let pa = project_domain(&a, 3, 0.6);
            let pb = project_domain(&b, 3, 0.6);
            assert!(norm(&sub(&project_domain(&pa, 3, 0.6), &pa)) < 1e-12);
            assert!(norm(&sub(&pa, &pb)) <= norm(&sub(&a, &b)) + 1e-12);
            // Variational inequality: (a − Pa) : (z − Pa) ≤ 0 for z in the cone.
            let z = project_domain(&gaussian_sym(&mut rng, 3), 3, 0.6);
            assert!(dot(&sub(&a, &pa), &sub(&z, &pa)) <= 1e-12);
        }
    }
}
