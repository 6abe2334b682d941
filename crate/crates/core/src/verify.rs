//! A-posteriori certification of computed trajectories.
//!
//! Four checks are provided: global stability against sampled competitors,
//! the two-sided energy balance, the discrete flow rule and the safe load
//! condition. Stability is certified by sampling, so a passing margin is a
//! necessary condition only; a failing one is a genuine counterexample.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::evolution::{dissipation_increment, total_energy, StateSnapshot, Trajectory};
use crate::scenario::Problem;
use crate::tensors::SymTensor;

/// Relative tolerance of the stability margin, scaled by `Q(e₀) + k|Ω|`.
pub const STABILITY_RTOL: f64 = 1e-8;
/// Relative tolerance of the energy balance, scaled like the stability margin.
pub const BALANCE_RTOL: f64 = 1e-8;
/// Relative tolerance of the constitutive residuals.
pub const FLOW_RTOL: f64 = 1e-8;
/// Relative tolerance of the safe load equilibrium.
pub const EQUILIBRIUM_RTOL: f64 = 1e-10;

const PARALLEL_SAMPLES: usize = 64;

/// Minimum of `E(competitor) + 𝓗(q − p) − E(snapshot)` over the samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StabilityRecord {
    pub margin: f64,
    /// Index of the sample realizing the margin; sample 0 is the snapshot itself.
    pub worst_sample: usize,
    pub n_samples: usize,
}

/// One competitor `(β, v, η, q)` with `η = Ev − q`.
#[derive(Clone, Debug, PartialEq)]
pub struct Competitor {
    pub beta: Vec<f64>,
    pub v: Vec<f64>,
    pub q: Vec<SymTensor>,
}

fn log_uniform(rng: &mut ChaCha8Rng, lo_exp: f64, hi_exp: f64) -> f64 {
    10f64.powf(rng.random_range(lo_exp..hi_exp))
}

fn random_tensor(rng: &mut ChaCha8Rng, dim: usize) -> SymTensor {
    let n = crate::tensors::n_components(dim);
    let comps: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    SymTensor::from_voigt(dim, &comps)
}

/// A unit-norm direction inside `dom H`: `τ |ξ_D| ≤ tr ξ`.
fn domain_direction(rng: &mut ChaCha8Rng, problem: &Problem) -> SymTensor {
    let dim = problem.dim();
    let tau = problem.dp.tau();
    let dev = if rng.random::<f64>() < 0.1 {
        SymTensor::zeros(dim)
    } else {
        let d = random_tensor(rng, dim).deviator();
        d * (1.0 / d.norm().max(f64::MIN_POSITIVE))
    };
    let tr = if dev.norm() == 0.0 {
        1.0
    } else {
        tau * dev.norm() * (1.0 + log_uniform(rng, -6.0, 0.5))
    };
    let xi = dev + SymTensor::identity(dim) * (tr / dim as f64);
    xi * (1.0 / xi.norm())
}

/// Smooth nodal bump in `[0, 1]`, or the constant one.
fn bump(rng: &mut ChaCha8Rng, problem: &Problem) -> Vec<f64> {
    let verts = &problem.mesh.vertices;
    if verts.len() == 1 || rng.random::<f64>() < 0.25 {
        return vec![1.0; verts.len()];
    }
    let (mut lo, mut hi) = ([f64::INFINITY; 2], [f64::NEG_INFINITY; 2]);
    for v in verts {
        for c in 0..2 {
            lo[c] = lo[c].min(v[c]);
            hi[c] = hi[c].max(v[c]);
        }
    }
    let diam = ((hi[0] - lo[0]).powi(2) + (hi[1] - lo[1]).powi(2)).sqrt();
    let center = [
        rng.random_range(lo[0]..=hi[0]),
        rng.random_range(lo[1]..=hi[1]),
    ];
    let h = diam / (verts.len() as f64).sqrt();
    let r = rng.random_range(h..=diam.max(h));
    verts
        .iter()
        .map(|v| {
            let d2 = (v[0] - center[0]).powi(2) + (v[1] - center[1]).powi(2);
            (-d2 / (r * r)).exp()
        })
        .collect()
}

/// Draws competitor `index` of the sequence defined by `seed`. Each index
/// has its own generator stream, so the sequence does not depend on the
/// order of evaluation.
pub fn sample_competitor(
    problem: &Problem,
    snapshot: &StateSnapshot,
    seed: u64,
    index: usize,
) -> Competitor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    let mesh = &problem.mesh;
    // Which blocks move: bit 0 damage, bit 1 displacement, bit 2 plastic strain.
    let blocks: u32 = rng.random_range(1..8);

    let mut beta = snapshot.alpha.clone();
    if blocks & 1 != 0 {
        let amp = if rng.random::<bool>() { 1.0 } else { log_uniform(&mut rng, -8.0, 0.0) };
        let b = bump(&mut rng, problem);
        for (x, w) in beta.iter_mut().zip(b) {
            *x = (*x * (1.0 - amp * w)).clamp(0.0, *x);
        }
    }

    let mut v = snapshot.u.clone();
    if blocks & 2 != 0 {
        let u_scale = snapshot
            .u
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.abs()))
            .max(problem.dp.k() / problem.hooke.volumetric_modulus(problem.dim()));
        let s = log_uniform(&mut rng, -8.0, 0.0) * u_scale * if rng.random::<bool>() { 1.0 } else { -1.0 };
        for &d in problem.constraint.free_dofs() {
            v[d] += s * rng.random_range(-1.0..1.0);
        }
    }

    let mut q = snapshot.p.clone();
    if blocks & 4 != 0 {
        let p_scale = snapshot
            .p
            .iter()
            .fold(0.0_f64, |m, x| m.max(x.norm()))
            .max(problem.dp.k() / problem.hooke.volumetric_modulus(problem.dim()));
        let a = log_uniform(&mut rng, -8.0, 0.0) * p_scale;
        if rng.random::<bool>() {
            let dir = domain_direction(&mut rng, problem);
            for qe in q.iter_mut() {
                *qe += dir * a;
            }
        } else {
            for qe in q.iter_mut() {
                let dir = domain_direction(&mut rng, problem);
                *qe += dir * (a * rng.random::<f64>());
            }
        }
    }
    debug_assert_eq!(q.len(), mesh.n_elements());
    Competitor { beta, v, q }
}

/// Energy of the snapshot in the stability comparison.
pub fn snapshot_energy(problem: &Problem, s: &StateSnapshot) -> f64 {
    total_energy(problem, &s.alpha, &s.u, &s.e, &s.p, s.t).stability_functional()
}

/// `E(competitor) + 𝓗(q − p) − E(snapshot)`; `+∞` if `q − p ∉ dom H`.
pub fn competitor_margin(problem: &Problem, s: &StateSnapshot, c: &Competitor) -> f64 {
    let eps = problem.mesh.strain(&c.v);
    let eta: Vec<SymTensor> = eps.iter().zip(&c.q).map(|(a, b)| *a - *b).collect();
    let energy = total_energy(problem, &c.beta, &c.v, &eta, &c.q, s.t).stability_functional();
    match dissipation_increment(&c.q, &s.p, &problem.mesh, &problem.dp) {
        Ok(h) => energy + h - snapshot_energy(problem, s),
        Err(_) => f64::INFINITY,
    }
}

/// Samples `n_samples` competitors, the first being the snapshot itself.
pub fn check_stability(
    problem: &Problem,
    snapshot: &StateSnapshot,
    n_samples: usize,
    seed: u64,
) -> StabilityRecord {
    let eval = |i: usize| -> (f64, usize) {
        if i == 0 {
            return (0.0, 0);
        }
        let c = sample_competitor(problem, snapshot, seed, i);
        (competitor_margin(problem, snapshot, &c), i)
    };
    let n = n_samples.max(1);
    let worst = if n >= PARALLEL_SAMPLES {
        (0..n)
            .into_par_iter()
            .map(eval)
            .reduce(|| (f64::INFINITY, usize::MAX), min_pair)
    } else {
        (0..n).map(eval).fold((f64::INFINITY, usize::MAX), min_pair)
    };
    StabilityRecord {
        margin: worst.0,
        worst_sample: worst.1,
        n_samples: n,
    }
}

fn min_pair(a: (f64, usize), b: (f64, usize)) -> (f64, usize) {
    if b.0 < a.0 || (b.0 == a.0 && b.1 < a.1) {
        b
    } else {
        a
    }
}

/// `Q(e₀) + k |Ω|` at the first snapshot.
pub fn energy_scale(problem: &Problem, trajectory: &Trajectory) -> f64 {
    match trajectory.snapshots.first() {
        Some(s) => problem.energy_scale(&s.e),
        None => problem.dp.k() * problem.mesh.measure(),
    }
}

/// Energy residual at one snapshot and the bound it is held to.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalanceRecord {
    pub t: f64,
    /// Left minus right side of the energy balance.
    pub residual: f64,
    /// Discretization slack `γ₂ max_j ‖EΔw_j‖ Σ_j ‖EΔw_j‖` up to this time.
    pub slack: f64,
    pub pass: bool,
}

/// `‖EΔw‖_{L²}` over every step of the trajectory's time grid.
fn lifting_increments(problem: &Problem, times: &[f64]) -> Vec<f64> {
    let mesh = &problem.mesh;
    times
        .windows(2)
        .map(|w| {
            let dw: Vec<f64> = problem
                .lifting(w[1])
                .iter()
                .zip(problem.lifting(w[0]))
                .map(|(a, b)| a - b)
                .collect();
            mesh.strain(&dw)
                .iter()
                .zip(&mesh.elements)
                .map(|(e, el)| el.measure * e.norm_squared())
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

/// Residual of the energy balance at every snapshot against `tol + δ̂`.
pub fn check_energy_balance(problem: &Problem, trajectory: &Trajectory, tol: f64) -> Vec<BalanceRecord> {
    let Some(first) = trajectory.snapshots.first() else {
        return Vec::new();
    };
    let gamma2 = problem.hooke.gamma2(problem.dim());
    let incs = lifting_increments(problem, &trajectory.times());
    let (mut max_inc, mut sum_inc) = (0.0_f64, 0.0);
    trajectory
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            if i > 0 {
                max_inc = max_inc.max(incs[i - 1]);
                sum_inc += incs[i - 1];
            }
            let residual = s.energy.balance_lhs() - s.energy.balance_rhs(&first.energy);
            let slack = gamma2 * max_inc * sum_inc;
            BalanceRecord {
                t: s.t,
                residual,
                slack,
                pass: residual.abs() <= tol + slack,
            }
        })
        .collect()
}

/// Element-wise maxima of the constitutive residuals over one step.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    /// `|H(δ) − (σ − 2c1 p) : δ|` with `δ = p − p_prev`.
    pub flow: f64,
    /// Positive part of the yield function at `σ − 2c1 p`.
    pub yield_excess: f64,
    /// Positive part of `τ |δ_D| − tr δ`.
    pub cone: f64,
    /// Scale the residuals are compared with.
    pub scale: f64,
}

impl FlowRecord {
    pub fn pass(&self) -> bool {
        let tol = FLOW_RTOL * self.scale;
        self.flow <= tol && self.yield_excess <= tol && self.cone <= tol
    }
}

/// Constitutive residuals of `next` with respect to the plastic strain
/// `p_prev` it was computed from.
pub fn check_flow_rule(problem: &Problem, p_prev: &[SymTensor], next: &StateSnapshot) -> FlowRecord {
    let mesh = &problem.mesh;
    let dp = &problem.dp;
    let c1 = problem.law.element_c1(mesh, &next.alpha);
    let mut r = FlowRecord::default();
    let (mut sig_max, mut delta_max) = (0.0_f64, 0.0_f64);
    for i in 0..mesh.n_elements() {
        let delta = next.p[i] - p_prev[i];
        let shifted = next.sigma[i] - next.p[i] * (2.0 * c1[i]);
        let h = (dp.k() / dp.tau()) * delta.trace();
        r.flow = r.flow.max((h - shifted.dot(&delta)).abs());
        r.yield_excess = r.yield_excess.max(dp.yield_value(&shifted).max(0.0));
        r.cone = r.cone.max(dp.cone_excess(&delta).max(0.0));
        sig_max = sig_max.max(shifted.norm());
        delta_max = delta_max.max(delta.norm());
    }
    if !(r.flow.is_finite() && r.yield_excess.is_finite() && r.cone.is_finite()) {
        r.flow = f64::MAX;
    }
    r.scale = (dp.k() + sig_max) * delta_max.max(1.0);
    r
}

/// Outcome of the safe load check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SafeLoadReport {
    /// `min_t k − (τ ρ_m + |ρ_D| + τ₀ √(τ²/n + 1))`; nonnegative iff every
    /// ball of radius `τ₀` around `ρ(t)` lies in `K`.
    pub inclusion_margin: f64,
    /// `max_t` of the free-dof misfit between the load vector and the
    /// internal force of `ρ(t)`.
    pub equilibrium_residual: f64,
    /// `max_t |ρ(t)|`.
    pub c_rho: f64,
    pub inclusion_pass: bool,
    pub equilibrium_pass: bool,
}

impl SafeLoadReport {
    pub fn pass(&self) -> bool {
        self.inclusion_pass && self.equilibrium_pass && self.c_rho.is_finite()
    }
}

/// Checks the scenario's safe load field, if any, on the time grid and the
/// load breakpoints.
pub fn check_safe_load(problem: &Problem) -> Option<SafeLoadReport> {
    let field = problem.scenario.safe_load.as_ref()?;
    let dim = problem.dim();
    let dp = &problem.dp;
    let mesh = &problem.mesh;
    let mut times = problem.times();
    times.extend(problem.scenario.loading.breakpoints());
    times.extend(field.rho.rows.iter().map(|r| r[0]));
    let horizon = problem.scenario.horizon;
    times.retain(|t| (0.0..=horizon).contains(t));

    let ball = field.tau0 * (dp.tau() * dp.tau() / dim as f64 + 1.0).sqrt();
    let mut report = SafeLoadReport {
        inclusion_margin: f64::INFINITY,
        equilibrium_residual: 0.0,
        c_rho: 0.0,
        inclusion_pass: true,
        equilibrium_pass: true,
    };
    let mut eq_scale = 0.0_f64;
    for t in times {
        let rho = field.stress(dim, t);
        let (m, d) = rho.split();
        report.inclusion_margin = report
            .inclusion_margin
            .min(dp.k() - (dp.tau() * m + d.norm() + ball));
        report.c_rho = report.c_rho.max(rho.norm());
        let internal = mesh.internal_force(&vec![rho; mesh.n_elements()]);
        let load = problem.load(t);
        for &dof in problem.constraint.free_dofs() {
            report.equilibrium_residual = report.equilibrium_residual.max((internal[dof] - load[dof]).abs());
            eq_scale = eq_scale.max(internal[dof].abs()).max(load[dof].abs());
        }
    }
    report.inclusion_pass = report.inclusion_margin >= -1e-12 * dp.k();
    report.equilibrium_pass =
        report.equilibrium_residual <= EQUILIBRIUM_RTOL * (eq_scale + dp.k() * mesh.measure());
    Some(report)
}

/// Settings of a full verification run.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub n_samples: usize,
    pub seed: u64,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        Self {
            n_samples: 1000,
            seed: 0,
        }
    }
}

/// Per-snapshot verification record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub stability_margin: f64,
    pub energy_residual: f64,
    pub energy_slack: f64,
    pub flow_rule_residual: f64,
    pub yield_residual: f64,
    pub cone_residual: f64,
    pub stability_pass: bool,
    pub energy_pass: bool,
    pub flow_pass: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub scenario: String,
    pub n_samples: usize,
    pub seed: u64,
    pub stability_tolerance: f64,
    pub energy_tolerance: f64,
    pub steps: Vec<StepRecord>,
    pub alpha_monotone: bool,
    pub safe_load: Option<SafeLoadReport>,
    pub stability_pass: bool,
    pub energy_pass: bool,
    pub flow_pass: bool,
    pub pass: bool,
}

/// Whether damage never increases, nodewise and exactly, starting from the
/// prescribed initial damage.
pub fn alpha_monotone(problem: &Problem, trajectory: &Trajectory) -> bool {
    let alpha0 = problem.scenario.initial.alpha0;
    let mut prev: Option<&[f64]> = None;
    for s in &trajectory.snapshots {
        let ok = match prev {
            None => s.alpha.iter().all(|&a| a <= alpha0),
            Some(p) => s.alpha.iter().zip(p).all(|(a, b)| a <= b),
        };
        if !ok {
            return false;
        }
        prev = Some(&s.alpha);
    }
    true
}

/// Runs every check on every snapshot.
pub fn verify_trajectory(problem: &Problem, trajectory: &Trajectory, opts: VerifyOptions) -> VerificationReport {
    let scale = energy_scale(problem, trajectory);
    let stab_tol = STABILITY_RTOL * scale;
    let energy_tol = BALANCE_RTOL * scale;
    let balance = check_energy_balance(problem, trajectory, energy_tol);
    let p0 = vec![problem.scenario.initial.p0; problem.mesh.n_elements()];
    let steps: Vec<StepRecord> = trajectory
        .snapshots
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let stab = check_stability(problem, s, opts.n_samples, opts.seed ^ i as u64);
            let p_prev = if i == 0 { &p0 } else { &trajectory.snapshots[i - 1].p };
            let flow = check_flow_rule(problem, p_prev, s);
            StepRecord {
                t: s.t,
                stability_margin: stab.margin,
                energy_residual: balance[i].residual,
                energy_slack: balance[i].slack,
                flow_rule_residual: flow.flow,
                yield_residual: flow.yield_excess,
                cone_residual: flow.cone,
                stability_pass: stab.margin >= -stab_tol,
                energy_pass: balance[i].pass,
                flow_pass: flow.pass(),
            }
        })
        .collect();
    let safe_load = check_safe_load(problem);
    let stability_pass = steps.iter().all(|s| s.stability_pass);
    let energy_pass = steps.iter().all(|s| s.energy_pass);
    let flow_pass = steps.iter().all(|s| s.flow_pass);
    let monotone = alpha_monotone(problem, trajectory);
    let pass = stability_pass
        && energy_pass
        && flow_pass
        && monotone
        && safe_load.is_none_or(|r| r.pass());
    VerificationReport {
        scenario: trajectory.scenario.clone(),
        n_samples: opts.n_samples,
        seed: opts.seed,
        stability_tolerance: stab_tol,
        energy_tolerance: energy_tol,
        steps,
        alpha_monotone: monotone,
        safe_load,
        stability_pass,
        energy_pass,
        flow_pass,
        pass,
    }
}

impl VerificationReport {
    /// Plain-text summary.
    pub fn to_text(&self) -> String {
        let verdict = |b: bool| if b { "PASS" } else { "FAIL" };
        let worst = |f: fn(&StepRecord) -> f64| self.steps.iter().map(f).fold(f64::NEG_INFINITY, f64::max);
        let min_margin = self
            .steps
            .iter()
            .map(|s| s.stability_margin)
            .fold(f64::INFINITY, f64::min);
        let mut out = String::new();
        out.push_str(&format!("scenario: {}\n", self.scenario));
        out.push_str(&format!("snapshots: {}\n", self.steps.len()));
        out.push_str(&format!(
            "stability: {} (min margin {:e}, tolerance {:e}, {} sampled competitors per snapshot, seed {})\n",
            verdict(self.stability_pass),
            min_margin,
            self.stability_tolerance,
            self.n_samples,
            self.seed
        ));
        out.push_str(&format!(
            "energy balance: {} (max |residual| {:e}, tolerance {:e} plus time-step slack)\n",
            verdict(self.energy_pass),
            worst(|s| s.energy_residual.abs()),
            self.energy_tolerance
        ));
        out.push_str(&format!(
            "flow rule: {} (flow {:e}, yield {:e}, cone {:e})\n",
            verdict(self.flow_pass),
            worst(|s| s.flow_rule_residual),
            worst(|s| s.yield_residual),
            worst(|s| s.cone_residual)
        ));
        out.push_str(&format!("damage irreversibility: {}\n", verdict(self.alpha_monotone)));
        match &self.safe_load {
            Some(r) => out.push_str(&format!(
                "safe load: {} (inclusion margin {:e}, equilibrium residual {:e}, C_rho {:e})\n",
                verdict(r.pass()),
                r.inclusion_margin,
                r.equilibrium_residual,
                r.c_rho
            )),
            None => out.push_str("safe load: not provided\n"),
        }
        out.push_str(
            "note: stability is tested against sampled competitors only; a pass is necessary, not sufficient, for global stability\n",
        );
        out.push_str(&format!("overall: {}\n", verdict(self.pass)));
        out
    }
}
