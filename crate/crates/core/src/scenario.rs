//! Scenario description and the assembled problem it defines.
//!
//! [`ScenarioFile`] mirrors the JSON document with every field optional so
//! that validation can report all missing or invalid entries at once;
//! [`Scenario`] is the validated form.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::damage::{AlphaSolverOptions, DamageLaw, DEFAULT_ALPHA_CAP};
use crate::drucker_prager::DruckerPrager;
use crate::error::ValidationError;
use crate::loading::{assemble_load, Constraint, DirichletData, LoadHistory, SafeLoadField, Table};
use crate::mesh::{build_mesh, BoundaryTag, Mesh, MeshKind, MeshShape, MeshSpec};
use crate::tensors::{n_components, HookeParams, SymTensor};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeshSection {
    pub kind: Option<MeshKind>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lengths: Option<Vec<f64>>,
    /// Tensor dimension `n` for point and segment meshes (default 3).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tensor_dim: Option<usize>,
    pub boundary_tags: Option<BTreeMap<String, BoundaryTag>>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialSection {
    pub lambda: Option<f64>,
    pub mu: Option<f64>,
    pub tau: Option<f64>,
    pub k: Option<f64>,
    pub c_bar: Option<f64>,
    pub w_d: Option<f64>,
    pub w_grad: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alpha_cap: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub d_offset: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadingSection {
    pub time_steps: Option<usize>,
    pub horizon: Option<f64>,
    #[serde(default)]
    pub w: BTreeMap<String, DirichletData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Table>,
    #[serde(default)]
    pub g: BTreeMap<String, Table>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialSection {
    pub alpha0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p0: Option<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSettings {
    /// Relative tolerance on the displacement-block gradient.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Tolerance on the scaled projected-gradient residual of the damage block.
    pub alpha_tol: f64,
    pub alpha_max_iters: usize,
    /// Relative decrease below which alternating minimization stops.
    pub altmin_tol: f64,
    pub max_sweeps: usize,
    /// Additional randomized damage warm starts per step.
    pub multi_start: usize,
    pub seed: u64,
}

impl Default for SolverSettings {
    fn default() -> Self {
        let alpha = AlphaSolverOptions::default();
        Self {
            newton_tol: 1e-12,
            newton_max_iters: 100,
            alpha_tol: alpha.tol,
            alpha_max_iters: alpha.max_iters,
            altmin_tol: 1e-10,
            max_sweeps: 200,
            multi_start: 0,
            seed: 0,
        }
    }
}

impl SolverSettings {
    pub fn alpha_options(&self) -> AlphaSolverOptions {
        AlphaSolverOptions {
            tol: self.alpha_tol,
            max_iters: self.alpha_max_iters,
        }
    }

    fn validate(&self, issues: &mut Vec<String>) {
        for (name, v) in [
            ("newton_tol", self.newton_tol),
            ("alpha_tol", self.alpha_tol),
            ("altmin_tol", self.altmin_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                issues.push(format!("solver.{name}: must be positive, got {v}"));
            }
        }
        for (name, v) in [
            ("newton_max_iters", self.newton_max_iters),
            ("alpha_max_iters", self.alpha_max_iters),
            ("max_sweeps", self.max_sweeps),
        ] {
            if v == 0 {
                issues.push(format!("solver.{name}: must be at least 1"));
            }
        }
    }
}

/// The JSON scenario document.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub mesh: Option<MeshSection>,
    pub material: Option<MaterialSection>,
    pub loading: Option<LoadingSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub safe_load: Option<SafeLoadField>,
    pub initial: Option<InitialSection>,
    #[serde(default)]
    pub solver: SolverSettings,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    pub hooke: HookeParams,
    pub tau: f64,
    pub k: f64,
    pub damage: DamageLaw,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Initial {
    pub alpha0: f64,
    pub p0: SymTensor,
}

/// A validated scenario.
#[derive(Clone, Debug, PartialEq)]
pub struct Scenario {
    pub name: String,
    pub mesh: MeshSpec,
    pub material: Material,
    pub loading: LoadHistory,
    pub time_steps: usize,
    pub horizon: f64,
    pub safe_load: Option<SafeLoadField>,
    pub initial: Initial,
    pub solver: SolverSettings,
}

fn require<T: Copy>(v: Option<T>, field: &str, issues: &mut Vec<String>) -> Option<T> {
    if v.is_none() {
        issues.push(format!("{field}: missing required field"));
    }
    v
}

fn positive(v: Option<f64>, field: &str, issues: &mut Vec<String>) -> f64 {
    match require(v, field, issues) {
        Some(x) if x > 0.0 && x.is_finite() => x,
        Some(x) => {
            issues.push(format!("{field}: must be positive, got {x}"));
            f64::NAN
        }
        None => f64::NAN,
    }
}

impl ScenarioFile {
    pub fn validate(&self) -> Result<Scenario, ValidationError> {
        let mut issues = Vec::new();
        let missing = |name: &str, issues: &mut Vec<String>| {
            issues.push(format!("{name}: missing required section"));
        };

        let mesh_spec = match &self.mesh {
            None => {
                missing("mesh", &mut issues);
                None
            }
            Some(m) => mesh_spec(m, &mut issues),
        };

        let material = match &self.material {
            None => {
                missing("material", &mut issues);
                None
            }
            Some(m) => Some(material(m, mesh_spec.as_ref().map(tensor_dim), &mut issues)),
        };

        let (time_steps, horizon, history) = match &self.loading {
            None => {
                missing("loading", &mut issues);
                (0, f64::NAN, LoadHistory::default())
            }
            Some(l) => {
                let steps = require(l.time_steps, "loading.time_steps", &mut issues).unwrap_or(0);
                if l.time_steps == Some(0) {
                    issues.push("loading.time_steps: must be at least 1".into());
                }
                let horizon = positive(l.horizon, "loading.horizon", &mut issues);
                let history = LoadHistory {
                    w: l.w.clone(),
                    f: l.f.clone(),
                    g: l.g.clone(),
                };
                (steps, horizon, history)
            }
        };

        let dim = mesh_spec.as_ref().map(tensor_dim);
        let initial = match &self.initial {
            None => {
                missing("initial", &mut issues);
                None
            }
            Some(i) => {
                let alpha0 = require(i.alpha0, "initial.alpha0", &mut issues).unwrap_or(f64::NAN);
                if i.alpha0.is_some() && !(0.0..=1.0).contains(&alpha0) {
                    issues.push(format!("initial.alpha0: must lie in [0, 1], got {alpha0}"));
                }
                let p0 = match (&i.p0, dim) {
                    (Some(v), Some(d)) if v.len() == n_components(d) => SymTensor::from_voigt(d, v),
                    (Some(v), Some(d)) => {
                        issues.push(format!(
                            "initial.p0: expected {} components, got {}",
                            n_components(d),
                            v.len()
                        ));
                        SymTensor::zeros(d)
                    }
                    (_, d) => SymTensor::zeros(d.unwrap_or(3)),
                };
                Some(Initial { alpha0, p0 })
            }
        };

        self.solver.validate(&mut issues);
        if let (Some(sl), Some(d)) = (&self.safe_load, dim) {
            sl.validate(d, &mut issues);
        }

        // Group-level checks need the mesh.
        if let Some(spec) = &mesh_spec {
            match build_mesh(spec) {
                Ok(mesh) => history.validate(&mesh, &mut issues),
                Err(e) => issues.extend(e.issues),
            }
        }

        if !issues.is_empty() {
            return Err(ValidationError { issues });
        }
        Ok(Scenario {
            name: self.name.clone().unwrap_or_else(|| "scenario".into()),
            mesh: mesh_spec.unwrap(),
            material: material.unwrap(),
            loading: history,
            time_steps,
            horizon,
            safe_load: self.safe_load.clone(),
            initial: initial.unwrap(),
            solver: self.solver,
        })
    }
}

fn tensor_dim(spec: &MeshSpec) -> usize {
    match spec.shape {
        MeshShape::Point { dim } | MeshShape::Segment { dim, .. } => dim,
        MeshShape::Rect { .. } => 2,
    }
}

fn mesh_spec(m: &MeshSection, issues: &mut Vec<String>) -> Option<MeshSpec> {
    let kind = require(m.kind, "mesh.kind", issues);
    let tags = match &m.boundary_tags {
        Some(t) => t.clone(),
        None => {
            issues.push("mesh.boundary_tags: missing required field".into());
            BTreeMap::new()
        }
    };
    let dims = m.dims.clone().unwrap_or_default();
    let lengths = m.lengths.clone().unwrap_or_default();
    let n = m.tensor_dim.unwrap_or(3);
    let shape = match kind? {
        MeshKind::Point => {
            if !dims.is_empty() || !lengths.is_empty() {
                issues.push("mesh.dims: a point mesh takes no dims or lengths".into());
            }
            MeshShape::Point { dim: n }
        }
        MeshKind::Segment => {
            if dims.len() != 1 || lengths.len() != 1 {
                issues.push("mesh.dims: a segment needs dims [n_elems] and lengths [L]".into());
                return None;
            }
            MeshShape::Segment {
                n_elems: dims[0],
                length: lengths[0],
                dim: n,
            }
        }
        MeshKind::Rect => {
            if dims.len() != 2 || lengths.len() != 2 {
                issues.push("mesh.dims: a rect needs dims [nx, ny] and lengths [lx, ly]".into());
                return None;
            }
            if m.tensor_dim.is_some_and(|d| d != 2) {
                issues.push("mesh.tensor_dim: rect meshes are two-dimensional".into());
            }
            MeshShape::Rect {
                nx: dims[0],
                ny: dims[1],
                lx: lengths[0],
                ly: lengths[1],
            }
        }
    };
    if !matches!(shape, MeshShape::Rect { .. }) && n != 2 && n != 3 {
        issues.push(format!("mesh.tensor_dim: must be 2 or 3, got {n}"));
        return None;
    }
    Some(MeshSpec { shape, tags })
}

fn material(m: &MaterialSection, dim: Option<usize>, issues: &mut Vec<String>) -> Material {
    let mu = positive(m.mu, "material.mu", issues);
    let lambda = require(m.lambda, "material.lambda", issues).unwrap_or(f64::NAN);
    let tau = positive(m.tau, "material.tau", issues);
    let k = positive(m.k, "material.k", issues);
    let c_bar = positive(m.c_bar, "material.c_bar", issues);
    let w_d = positive(m.w_d, "material.w_d", issues);
    let w_grad = require(m.w_grad, "material.w_grad", issues).unwrap_or(f64::NAN);
    if m.w_grad.is_some_and(|w| !(w >= 0.0 && w.is_finite())) {
        issues.push(format!("material.w_grad: must be nonnegative, got {w_grad}"));
    }
    if let (Some(l), Some(d)) = (m.lambda, dim) {
        if mu > 0.0 && !(l + 2.0 * mu / d as f64 > 0.0) {
            issues.push(format!(
                "material.lambda: lambda + 2 mu / n must be positive, got lambda = {l}"
            ));
        }
    }
    let alpha_cap = m.alpha_cap.unwrap_or(DEFAULT_ALPHA_CAP);
    if !(alpha_cap > 0.0 && alpha_cap < 1.0) {
        issues.push(format!("material.alpha_cap: must lie in (0, 1), got {alpha_cap}"));
    }
    let d_offset = m.d_offset.unwrap_or(0.0);
    if !d_offset.is_finite() {
        issues.push("material.d_offset: must be finite".into());
    }
    Material {
        hooke: HookeParams::new(lambda, mu),
        tau,
        k,
        damage: DamageLaw {
            c_bar,
            w_d,
            w_grad,
            alpha_cap,
            d_offset,
        },
    }
}

impl Scenario {
    pub fn tensor_dim(&self) -> usize {
        tensor_dim(&self.mesh)
    }

    /// The uniform time grid `t_i = i T / N`, `i = 0..=N`.
    pub fn times(&self) -> Vec<f64> {
        let n = self.time_steps;
        (0..=n)
            .map(|i| if i == n { self.horizon } else { self.horizon * i as f64 / n as f64 })
            .collect()
    }

    /// Back to the document form.
    pub fn to_file(&self) -> ScenarioFile {
        let (kind, dims, lengths, tensor_dim) = match self.mesh.shape {
            MeshShape::Point { dim } => (MeshKind::Point, None, None, Some(dim)),
            MeshShape::Segment {
                n_elems,
                length,
                dim,
            } => (MeshKind::Segment, Some(vec![n_elems]), Some(vec![length]), Some(dim)),
            MeshShape::Rect { nx, ny, lx, ly } => {
                (MeshKind::Rect, Some(vec![nx, ny]), Some(vec![lx, ly]), None)
            }
        };
        let m = &self.material;
        ScenarioFile {
            name: Some(self.name.clone()),
            mesh: Some(MeshSection {
                kind: Some(kind),
                dims,
                lengths,
                tensor_dim,
                boundary_tags: Some(self.mesh.tags.clone()),
            }),
            material: Some(MaterialSection {
                lambda: Some(m.hooke.lambda),
                mu: Some(m.hooke.mu),
                tau: Some(m.tau),
                k: Some(m.k),
                c_bar: Some(m.damage.c_bar),
                w_d: Some(m.damage.w_d),
                w_grad: Some(m.damage.w_grad),
                alpha_cap: Some(m.damage.alpha_cap),
                d_offset: (m.damage.d_offset != 0.0).then_some(m.damage.d_offset),
            }),
            loading: Some(LoadingSection {
                time_steps: Some(self.time_steps),
                horizon: Some(self.horizon),
                w: self.loading.w.clone(),
                f: self.loading.f.clone(),
                g: self.loading.g.clone(),
            }),
            safe_load: self.safe_load.clone(),
            initial: Some(InitialSection {
                alpha0: Some(self.initial.alpha0),
                p0: (self.initial.p0.norm() != 0.0).then(|| self.initial.p0.voigt().to_vec()),
            }),
            solver: self.solver,
        }
    }
}

/// Everything needed to evolve a scenario: the mesh, constitutive objects
/// and the constraint partition.
#[derive(Clone, Debug)]
pub struct Problem {
    pub scenario: Scenario,
    pub mesh: Mesh,
    pub hooke: HookeParams,
    pub dp: DruckerPrager,
    pub law: DamageLaw,
    pub constraint: Constraint,
}

impl Problem {
    pub fn new(scenario: Scenario) -> Result<Self, ValidationError> {
        let mesh = build_mesh(&scenario.mesh)?;
        let mut issues = Vec::new();
        scenario.loading.validate(&mesh, &mut issues);
        let dim = scenario.tensor_dim();
        let m = scenario.material;
        if !m.hooke.is_elliptic(dim) {
            issues.push("material: Hooke tensor is not elliptic".into());
        }
        if !(m.tau > 0.0 && m.k > 0.0) {
            issues.push("material: tau and k must be positive".into());
        }
        if let Err(e) = m.damage.validate() {
            issues.extend(e.issues);
        }
        if !issues.is_empty() {
            return Err(ValidationError { issues });
        }
        let constraint = Constraint::new(&mesh, &scenario.loading);
        Ok(Self {
            dp: DruckerPrager::new(m.tau, m.k, dim),
            hooke: m.hooke,
            law: m.damage,
            constraint,
            mesh,
            scenario,
        })
    }

    pub fn dim(&self) -> usize {
        self.mesh.tensor_dim
    }

    pub fn lifting(&self, t: f64) -> Vec<f64> {
        self.constraint.lifting(&self.scenario.loading, t)
    }

    pub fn load(&self, t: f64) -> Vec<f64> {
        assemble_load(t, &self.scenario.loading, &self.mesh)
    }

    pub fn times(&self) -> Vec<f64> {
        self.scenario.times()
    }

    /// `Q(e) + k |Ω|`, the scale used by scale-aware tolerances.
    pub fn energy_scale(&self, e: &[SymTensor]) -> f64 {
        let q: f64 = self
            .mesh
            .elements
            .iter()
            .zip(e)
            .map(|(el, e)| el.measure * self.hooke.energy_density(e))
            .sum();
        q + self.dp.k() * self.mesh.measure()
    }
}
