//! The incremental quasistatic driver.
//!
//! Each step minimizes
//!
//! ```text
//! Q(e) + D(α) + w_grad ‖∇α‖² + ∫ c1(α) p:p + 𝓗(p − p_prev) − ⟨𝓛(t), u⟩
//! ```
//!
//! over `0 ≤ α ≤ α_prev` and `(u, e, p)` with `Eu = e + p`, `u = w(t)` on the
//! Dirichlet boundary, by alternating minimization. With `α` frozen the
//! `(u, e, p)` block reduces to a convex function of `u` whose element-wise
//! minimization over `p` is the return mapping; it is minimized by Newton's
//! method with the consistent tangent. With `(u, e, p)` frozen the damage
//! block is a convex bound-constrained problem.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damage::{alpha_residual, alpha_step};
use crate::drucker_prager::{DruckerPrager, LocalUpdate, Support};
use crate::error::SolverError;
use crate::mesh::Mesh;
use crate::scenario::Problem;
use crate::tensors::SymTensor;

/// Element count above which element loops run in parallel.
const PARALLEL_THRESHOLD: usize = 256;

/// Energy components of one snapshot and the cumulative work integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    /// `½ ∫ C e : e`.
    pub q: f64,
    /// `∫ d(α)`.
    pub d: f64,
    /// `w_grad ‖∇α‖²`.
    pub grad: f64,
    /// `∫ c1(α) p : p`.
    pub qtilde: f64,
    /// `Σ 𝓗(p_i − p_{i−1})` up to this snapshot.
    pub vh_cum: f64,
    /// `∫₀ᵗ ⟨σ, Eẇ⟩`.
    pub work_sigma_cum: f64,
    /// `∫₀ᵗ ⟨𝓛̇, u⟩ + ⟨𝓛, ẇ⟩`.
    pub work_load_cum: f64,
    /// `⟨𝓛(t), u(t)⟩`.
    pub load_term: f64,
}

impl EnergyLedger {
    /// `Q + D + grad + Q̃ − ⟨𝓛, u⟩`, the functional compared in the stability condition.
    pub fn stability_functional(&self) -> f64 {
        self.q + self.d + self.grad + self.qtilde - self.load_term
    }

    /// Left-hand side of the energy balance: stability functional plus dissipation.
    pub fn balance_lhs(&self) -> f64 {
        self.stability_functional() + self.vh_cum
    }

    /// Right-hand side of the energy balance given the initial ledger.
    pub fn balance_rhs(&self, initial: &EnergyLedger) -> f64 {
        initial.stability_functional() + self.work_sigma_cum - self.work_load_cum
    }

    pub fn is_finite(&self) -> bool {
        [
            self.q,
            self.d,
            self.grad,
            self.qtilde,
            self.vh_cum,
            self.work_sigma_cum,
            self.work_load_cum,
            self.load_term,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepStats {
    pub sweeps: usize,
    pub newton_iterations: usize,
    pub alpha_iterations: usize,
    /// Incremental objective at the returned state.
    pub objective: f64,
    /// Incremental objective at the transported previous state.
    pub warm_start_objective: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSnapshot {
    pub t: f64,
    pub alpha: Vec<f64>,
    pub u: Vec<f64>,
    pub e: Vec<SymTensor>,
    pub p: Vec<SymTensor>,
    pub sigma: Vec<SymTensor>,
    pub energy: EnergyLedger,
    pub stats: StepStats,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Trajectory {
    pub scenario: String,
    pub snapshots: Vec<StateSnapshot>,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.t).collect()
    }

    pub fn len(&self) -> usize {
        self.snapshots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.snapshots.is_empty()
    }
}

/// A failed run with everything computed before the failure.
#[derive(Debug, Error)]
#[error("{error}")]
pub struct RunFailure {
    pub partial: Trajectory,
    #[source]
    pub error: SolverError,
}

/// Energy components of a state at time `t`; work integrals are left at zero.
pub fn total_energy(
    problem: &Problem,
    alpha: &[f64],
    u: &[f64],
    e: &[SymTensor],
    p: &[SymTensor],
    t: f64,
) -> EnergyLedger {
    let mesh = &problem.mesh;
    let q = mesh
        .elements
        .iter()
        .zip(e)
        .map(|(el, e)| el.measure * problem.hooke.energy_density(e))
        .sum();
    let load = problem.load(t);
    EnergyLedger {
        q,
        d: problem.law.dissipation(mesh, alpha),
        grad: problem.law.gradient_energy(mesh, alpha),
        qtilde: problem.law.hardening_energy(mesh, alpha, p),
        load_term: dot(&load, u),
        ..Default::default()
    }
}

/// `Σ_e |e| H(p_new − p_old)`; an increment outside the dissipation cone is
/// reported as an error carrying the element index.
pub fn dissipation_increment(
    p_new: &[SymTensor],
    p_old: &[SymTensor],
    mesh: &Mesh,
    dp: &DruckerPrager,
) -> Result<f64, SolverError> {
    let mut total = 0.0;
    for (i, el) in mesh.elements.iter().enumerate() {
        match dp.support(&(p_new[i] - p_old[i])) {
            Support::Finite(h) => total += el.measure * h,
            Support::Infinite => return Err(SolverError::OutsideCone { element: i }),
        }
    }
    Ok(total)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Result of the displacement block.
#[derive(Clone, Debug)]
pub struct UepResult {
    pub u: Vec<f64>,
    pub updates: Vec<LocalUpdate>,
    /// `Σ_e |e| ψ_e − ⟨𝓛, u⟩` with `ψ_e` the minimal local incremental energy.
    pub objective: f64,
    pub iterations: usize,
    pub grad_norm: f64,
}

impl UepResult {
    pub fn p(&self) -> Vec<SymTensor> {
        self.updates.iter().map(|l| l.p_new).collect()
    }
    pub fn e(&self) -> Vec<SymTensor> {
        self.updates.iter().map(|l| l.elastic).collect()
    }
    pub fn sigma(&self) -> Vec<SymTensor> {
        self.updates.iter().map(|l| l.sigma).collect()
    }
}

fn local_updates(
    problem: &Problem,
    u: &[f64],
    p_prev: &[SymTensor],
    c1: &[f64],
) -> Result<Vec<LocalUpdate>, SolverError> {
    let mesh = &problem.mesh;
    let update = |i: usize| {
        let eps = mesh.element_strain(&mesh.elements[i], u);
        problem.dp.return_map(&eps, &p_prev[i], c1[i], &problem.hooke)
    };
    if mesh.n_elements() >= PARALLEL_THRESHOLD {
        (0..mesh.n_elements()).into_par_iter().map(update).collect()
    } else {
        (0..mesh.n_elements()).map(update).collect()
    }
}

fn reduced_energy(mesh: &Mesh, updates: &[LocalUpdate], load: &[f64], u: &[f64]) -> f64 {
    let psi: f64 = mesh
        .elements
        .iter()
        .zip(updates)
        .map(|(el, l)| el.measure * l.energy)
        .sum();
    psi - dot(load, u)
}

/// Free-dof gradient of the reduced energy and its scale.
fn reduced_gradient(
    problem: &Problem,
    updates: &[LocalUpdate],
    load: &[f64],
) -> (Vec<f64>, f64) {
    let mesh = &problem.mesh;
    let mut g = vec![0.0; mesh.n_dofs()];
    let mut scale = vec![0.0; mesh.n_dofs()];
    for (el, l) in mesh.elements.iter().zip(updates) {
        for (dof, col) in &el.strain_columns {
            let v = el.measure * l.sigma.dot(col);
            g[*dof] += v;
            scale[*dof] += v.abs();
        }
    }
    let free = problem.constraint.free_dofs();
    let gf: Vec<f64> = free.iter().map(|&d| g[d] - load[d]).collect();
    let s = free
        .iter()
        .map(|&d| scale[d] + load[d].abs())
        .fold(0.0, f64::max);
    (gf, s)
}

fn tangent_matrix(problem: &Problem, updates: &[LocalUpdate]) -> DMatrix<f64> {
    let mesh = &problem.mesh;
    let free = problem.constraint.free_dofs();
    let mut index = vec![usize::MAX; mesh.n_dofs()];
    for (i, &d) in free.iter().enumerate() {
        index[d] = i;
    }
    let nf = free.len();
    let mut k = DMatrix::zeros(nf, nf);
    for (el, l) in mesh.elements.iter().zip(updates) {
        let cols: Vec<(usize, SymTensor)> = el
            .strain_columns
            .iter()
            .filter(|(d, _)| index[*d] != usize::MAX)
            .map(|(d, c)| (index[*d], *c))
            .collect();
        let images: Vec<SymTensor> = cols.iter().map(|(_, c)| l.tangent(&problem.hooke, c)).collect();
        for (ia, ca) in &cols {
            for ((jb, _), tb) in cols.iter().zip(&images) {
                k[(*ia, *jb)] += el.measure * ca.dot(tb);
            }
        }
    }
    k
}

fn solve_spd(k: DMatrix<f64>, rhs: &DVector<f64>) -> Option<DVector<f64>> {
    let max_diag = k.diagonal().iter().fold(0.0_f64, |m, v| m.max(v.abs())).max(1e-300);
    let mut shift = 0.0;
    for _ in 0..12 {
        let mut m = k.clone();
        if shift > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += shift;
            }
        }
        if let Some(ch) = m.cholesky() {
            let x = ch.solve(rhs);
            if x.iter().all(|v| v.is_finite()) {
                return Some(x);
            }
        }
        shift = if shift == 0.0 { 1e-12 * max_diag } else { shift * 100.0 };
    }
    None
}

/// Minimizes the `(u, e, p)` block for frozen element hardening moduli.
/// `u_start` must already carry the Dirichlet values.
pub fn uep_step(
    problem: &Problem,
    c1: &[f64],
    p_prev: &[SymTensor],
    u_start: &[f64],
    load: &[f64],
) -> Result<UepResult, SolverError> {
    let settings = &problem.scenario.solver;
    let free = problem.constraint.free_dofs().to_vec();
    let mut u = u_start.to_vec();
    let mut updates = local_updates(problem, &u, p_prev, c1)?;
    let mut j = reduced_energy(&problem.mesh, &updates, load, &u);
    let (mut g, mut scale) = reduced_gradient(problem, &updates, load);
    let norm = |g: &[f64]| g.iter().fold(0.0_f64, |m, v| m.max(v.abs()));

    for it in 0..=settings.newton_max_iters {
        let gn = norm(&g);
        if !gn.is_finite() || !j.is_finite() {
            return Err(SolverError::NonFinite {
                context: "displacement block",
            });
        }
        if free.is_empty() || gn <= settings.newton_tol * (1.0 + scale) {
            return Ok(UepResult {
                u,
                updates,
                objective: j,
                iterations: it,
                grad_norm: gn,
            });
        }
        if it == settings.newton_max_iters {
            break;
        }
        let k = tangent_matrix(problem, &updates);
        let rhs = DVector::from_iterator(g.len(), g.iter().map(|v| -v));
        let Some(d) = solve_spd(k, &rhs) else {
            return Err(SolverError::Displacement {
                iterations: it,
                grad_norm: gn,
            });
        };
        let slope: f64 = g.iter().zip(d.iter()).map(|(a, b)| a * b).sum();
        let mut s = 1.0;
        let mut accepted = false;
        for _ in 0..40 {
            let mut trial = u.clone();
            for (i, &dof) in free.iter().enumerate() {
                trial[dof] += s * d[i];
            }
            let upd = local_updates(problem, &trial, p_prev, c1)?;
            let jt = reduced_energy(&problem.mesh, &upd, load, &trial);
            let (gt, st) = reduced_gradient(problem, &upd, load);
            let armijo = jt <= j + 1e-4 * s * slope;
            // Near the minimum the energy decrease drowns in rounding; a
            // smaller gradient at an energy equal up to rounding is progress.
            let flat = jt <= j + 1e-14 * (j.abs() + 1.0 + scale) && norm(&gt) < gn;
            if armijo || flat {
                u = trial;
                updates = upd;
                j = jt;
                g = gt;
                scale = st;
                accepted = true;
                break;
            }
            s *= 0.5;
        }
        if !accepted {
            return Err(SolverError::Displacement {
                iterations: it,
                grad_norm: gn,
            });
        }
    }
    Err(SolverError::Displacement {
        iterations: settings.newton_max_iters,
        grad_norm: norm(&g),
    })
}

/// Full incremental objective, the `(u, e, p)` part given as its reduced value.
fn incremental_objective(problem: &Problem, alpha: &[f64], uep_objective: f64) -> f64 {
    uep_objective
        + problem.law.dissipation(&problem.mesh, alpha)
        + problem.law.gradient_energy(&problem.mesh, alpha)
}

struct AltMin {
    alpha: Vec<f64>,
    uep: UepResult,
    objective: f64,
    sweeps: usize,
    newton_iterations: usize,
    alpha_iterations: usize,
}

fn alternating_minimization(
    problem: &Problem,
    alpha_start: Vec<f64>,
    alpha_upper: &[f64],
    p_prev: &[SymTensor],
    u_start: &[f64],
    load: &[f64],
    scale: f64,
) -> Result<AltMin, SolverError> {
    let settings = &problem.scenario.solver;
    let mesh = &problem.mesh;
    let slack = 1e-12 * scale;
    let mut alpha = alpha_start;
    let mut u = u_start.to_vec();
    let mut last: Option<f64> = None;
    let (mut newton_iterations, mut alpha_iterations) = (0, 0);

    for sweep in 0..settings.max_sweeps {
        let c1 = problem.law.element_c1(mesh, &alpha);
        let uep = uep_step(problem, &c1, p_prev, &u, load)?;
        newton_iterations += uep.iterations;
        let obj = incremental_objective(problem, &alpha, uep.objective);
        if let Some(prev) = last {
            if obj > prev + slack {
                return Err(SolverError::NonMonotoneSweep {
                    sweep,
                    increase: obj - prev,
                });
            }
            // A small decrease alone is not enough: the sweeps contract
            // linearly, so the damage block must also be stationary.
            let stationary = alpha_residual(&alpha, alpha_upper, &uep.p(), mesh, &problem.law)
                <= 10.0 * settings.alpha_tol;
            if prev - obj <= settings.altmin_tol * (obj.abs() + scale) && stationary {
                return Ok(AltMin {
                    alpha,
                    uep,
                    objective: obj,
                    sweeps: sweep + 1,
                    newton_iterations,
                    alpha_iterations,
                });
            }
        }
        let p = uep.p();
        let step = alpha_step(&alpha, alpha_upper, &p, mesh, &problem.law, &settings.alpha_options())?;
        alpha_iterations += step.iterations;
        let obj_alpha = incremental_objective(problem, &step.alpha, uep.objective)
            + problem.law.hardening_energy(mesh, &step.alpha, &p)
            - problem.law.hardening_energy(mesh, &alpha, &p);
        if obj_alpha > obj + slack {
            return Err(SolverError::NonMonotoneSweep {
                sweep,
                increase: obj_alpha - obj,
            });
        }
        let unchanged = step.alpha == alpha;
        alpha = step.alpha;
        u = uep.u.clone();
        if unchanged {
            return Ok(AltMin {
                alpha,
                uep,
                objective: obj,
                sweeps: sweep + 1,
                newton_iterations,
                alpha_iterations,
            });
        }
        last = Some(obj_alpha);
    }
    Err(SolverError::NonMonotoneSweep {
        sweep: settings.max_sweeps,
        increase: f64::NAN,
    })
}

/// One step of the incremental scheme from `prev` to time `t`. The work
/// integrals of the ledger are filled in by [`run_evolution`].
pub fn incremental_step(
    problem: &Problem,
    prev: &StateSnapshot,
    t: f64,
    step: usize,
) -> Result<StateSnapshot, SolverError> {
    let mesh = &problem.mesh;
    let settings = &problem.scenario.solver;
    let lifting = problem.lifting(t);
    let load = problem.load(t);
    // Transported previous state: u_prev + (w_i − w_{i−1}), p and α unchanged.
    let mut u_warm = prev.u.clone();
    problem.constraint.impose(&mut u_warm, &lifting);
    let eps_warm = mesh.strain(&u_warm);
    let e_warm: Vec<SymTensor> = eps_warm.iter().zip(&prev.p).map(|(a, b)| *a - *b).collect();
    let warm = total_energy(problem, &prev.alpha, &u_warm, &e_warm, &prev.p, t);
    let warm_objective = warm.stability_functional();
    let scale = problem.energy_scale(&e_warm);

    let mut best = alternating_minimization(
        problem,
        prev.alpha.clone(),
        &prev.alpha,
        &prev.p,
        &u_warm,
        &load,
        scale,
    )?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed ^ (step as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    for _ in 0..settings.multi_start {
        let start: Vec<f64> = prev
            .alpha
            .iter()
            .map(|a| a * (1.0 - 0.5 * rng.random::<f64>()))
            .collect();
        let candidate =
            alternating_minimization(problem, start, &prev.alpha, &prev.p, &u_warm, &load, scale)?;
        if candidate.objective < best.objective {
            best = candidate;
        }
    }

    if best.objective > warm_objective + 1e-10 * scale {
        return Err(SolverError::WarmStartBeaten {
            objective: best.objective,
            warm_start: warm_objective,
        });
    }
    debug_assert!(best.alpha.iter().zip(&prev.alpha).all(|(a, b)| a <= b));
    debug_assert!(best.uep.updates.iter().all(|l| {
        let tol = 1e-8 * (problem.dp.k() + l.sigma.norm());
        problem.dp.yield_value(&l.shifted_stress()) <= tol
            && l.flow_residual() <= tol * (1.0 + l.delta_p.norm())
            && problem.dp.in_domain(&l.delta_p)
    }));

    let uep = best.uep;
    let (e, p, sigma) = (uep.e(), uep.p(), uep.sigma());
    let mut energy = total_energy(problem, &best.alpha, &uep.u, &e, &p, t);
    energy.vh_cum = prev.energy.vh_cum + dissipation_increment(&p, &prev.p, mesh, &problem.dp)?;
    Ok(StateSnapshot {
        t,
        alpha: best.alpha,
        u: uep.u,
        e,
        p,
        sigma,
        energy,
        stats: StepStats {
            sweeps: best.sweeps,
            newton_iterations: best.newton_iterations,
            alpha_iterations: best.alpha_iterations,
            objective: best.objective,
            warm_start_objective: warm_objective,
        },
    })
}

/// Fills the cumulative work integrals of `next` by the trapezoidal rule.
fn accumulate_work(problem: &Problem, prev: &StateSnapshot, next: &mut StateSnapshot) {
    let mesh = &problem.mesh;
    let dw: Vec<f64> = problem
        .lifting(next.t)
        .iter()
        .zip(problem.lifting(prev.t))
        .map(|(a, b)| a - b)
        .collect();
    let deps = mesh.strain(&dw);
    let work_sigma: f64 = mesh
        .elements
        .iter()
        .enumerate()
        .map(|(i, el)| el.measure * 0.5 * (prev.sigma[i] + next.sigma[i]).dot(&deps[i]))
        .sum();
    let (l0, l1) = (problem.load(prev.t), problem.load(next.t));
    let mut work_load = 0.0;
    for d in 0..l0.len() {
        work_load += (l1[d] - l0[d]) * 0.5 * (prev.u[d] + next.u[d]) + 0.5 * (l0[d] + l1[d]) * dw[d];
    }
    next.energy.work_sigma_cum = prev.energy.work_sigma_cum + work_sigma;
    next.energy.work_load_cum = prev.energy.work_load_cum + work_load;
}

/// The initial state: the incremental problem at `t = 0` started from the
/// prescribed damage and plastic strain.
pub fn initial_state(problem: &Problem) -> Result<StateSnapshot, SolverError> {
    let mesh = &problem.mesh;
    let t0 = problem.times()[0];
    let init = &problem.scenario.initial;
    let seed = StateSnapshot {
        t: t0,
        alpha: vec![init.alpha0; mesh.n_vertices()],
        u: problem.lifting(t0),
        e: vec![SymTensor::zeros(problem.dim()); mesh.n_elements()],
        p: vec![init.p0; mesh.n_elements()],
        sigma: vec![SymTensor::zeros(problem.dim()); mesh.n_elements()],
        energy: EnergyLedger::default(),
        stats: StepStats::default(),
    };
    let mut s = incremental_step(problem, &seed, t0, 0)?;
    s.energy.vh_cum = 0.0;
    Ok(s)
}

/// Runs the full time grid. `observer` sees every snapshot as soon as it is
/// computed; an observer error stops the run.
pub fn run_evolution<F>(problem: &Problem, mut observer: F) -> Result<Trajectory, RunFailure>
where
    F: FnMut(&StateSnapshot) -> Result<(), SolverError>,
{
    let mut traj = Trajectory {
        scenario: problem.scenario.name.clone(),
        snapshots: Vec::new(),
    };
    let fail = |traj: Trajectory, error| RunFailure {
        partial: traj,
        error,
    };
    let first = match initial_state(problem) {
        Ok(s) => s,
        Err(e) => {
            return Err(fail(
                traj,
                SolverError::Step {
                    step: 0,
                    t: problem.times()[0],
                    source: Box::new(e),
                },
            ))
        }
    };
    if let Err(e) = observer(&first) {
        traj.snapshots.push(first);
        return Err(fail(traj, e));
    }
    traj.snapshots.push(first);
    for (i, &t) in problem.times().iter().enumerate().skip(1) {
        let prev = traj.snapshots.last().unwrap();
        match incremental_step(problem, prev, t, i) {
            Ok(mut next) => {
                accumulate_work(problem, prev, &mut next);
                if !next.energy.is_finite() {
                    return Err(fail(
                        traj,
                        SolverError::NonFinite {
                            context: "energy ledger",
                        },
                    ));
                }
                let res = observer(&next);
                traj.snapshots.push(next);
                if let Err(e) = res {
                    return Err(fail(traj, e));
                }
            }
            Err(e) => {
                return Err(fail(
                    traj,
                    SolverError::Step {
                        step: i,
                        t,
                        source: Box::new(e),
                    },
                ))
            }
        }
    }
    Ok(traj)
}
