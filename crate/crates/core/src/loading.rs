//! Piecewise-linear loading histories, Dirichlet data and load assembly.
//!
//! Tables are lists of rows `[t, v_1, …, v_m]` with strictly increasing
//! times, interpolated linearly and held constant outside their range.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::mesh::{BoundaryTag, Mesh};
use crate::tensors::{component_weight, n_components, SymTensor};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Table {
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn constant(values: &[f64]) -> Self {
        let mut row = vec![0.0];
        row.extend_from_slice(values);
        Self { rows: vec![row] }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Self {
        Self { rows }
    }

    pub fn width(&self) -> usize {
        self.rows.first().map_or(0, |r| r.len().saturating_sub(1))
    }

    /// Records every structural problem under `field`.
    pub fn validate(&self, field: &str, width: usize, issues: &mut Vec<String>) {
        if self.rows.is_empty() {
            issues.push(format!("{field}: table has no rows"));
            return;
        }
        for (i, r) in self.rows.iter().enumerate() {
            if r.len() != width + 1 {
                issues.push(format!(
                    "{field}: row {i} has {} entries, expected {}",
                    r.len(),
                    width + 1
                ));
            }
            if r.iter().any(|v| !v.is_finite()) {
                issues.push(format!("{field}: row {i} has a non-finite entry"));
            }
        }
        if self.rows.windows(2).any(|w| !(w[0][0] < w[1][0])) {
            issues.push(format!("{field}: table times must be strictly increasing"));
        }
    }

    pub fn eval(&self, t: f64) -> Vec<f64> {
        let rows = &self.rows;
        let w = self.width();
        if rows.is_empty() {
            return Vec::new();
        }
        if t <= rows[0][0] {
            return rows[0][1..=w].to_vec();
        }
        let last = rows.last().unwrap();
        if t >= last[0] {
            return last[1..=w].to_vec();
        }
        let i = rows.partition_point(|r| r[0] <= t);
        let (a, b) = (&rows[i - 1], &rows[i]);
        let s = (t - a[0]) / (b[0] - a[0]);
        (1..=w).map(|j| a[j] + s * (b[j] - a[j])).collect()
    }
}

/// Prescribed displacement on a Dirichlet group: `w(x, t) = value(t) + G(t) x`
/// on the selected components. For strain-component groups the value is the
/// prescribed strain component.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DirichletData {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub components: Option<Vec<usize>>,
    pub values: Table,
    /// Row-major 2x2 displacement gradient, `rect` meshes only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gradient: Option<Table>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LoadHistory {
    #[serde(default)]
    pub w: BTreeMap<String, DirichletData>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub f: Option<Table>,
    #[serde(default)]
    pub g: BTreeMap<String, Table>,
}

impl LoadHistory {
    pub fn validate(&self, mesh: &Mesh, issues: &mut Vec<String>) {
        for (group, data) in &self.w {
            let field = format!("loading.w.{group}");
            match mesh.group_tag(group) {
                None => issues.push(format!("{field}: unknown boundary group")),
                Some(BoundaryTag::Neumann) => {
                    issues.push(format!("{field}: group is tagged neumann"))
                }
                Some(BoundaryTag::Dirichlet) => {}
            }
            let component_group = mesh.is_component_group(group);
            let comps = if component_group {
                if data.components.is_some() {
                    issues.push(format!("{field}.components: not allowed on a strain-component group"));
                }
                vec![0]
            } else {
                data.components
                    .clone()
                    .unwrap_or_else(|| (0..mesh.node_dofs()).collect())
            };
            if comps.is_empty() {
                issues.push(format!("{field}.components: empty component list"));
            }
            if comps.iter().any(|&c| c >= mesh.node_dofs().max(1)) {
                issues.push(format!("{field}.components: component index out of range"));
            }
            data.values.validate(&format!("{field}.values"), comps.len(), issues);
            if let Some(g) = &data.gradient {
                if mesh.node_dofs() != 2 || component_group {
                    issues.push(format!("{field}.gradient: only supported on rect meshes"));
                }
                g.validate(&format!("{field}.gradient"), 4, issues);
            }
        }
        if let Some(f) = &self.f {
            if mesh.node_dofs() == 0 {
                issues.push("loading.f: volume forces need a segment or rect mesh".into());
            } else {
                f.validate("loading.f", mesh.node_dofs(), issues);
            }
        }
        for (group, table) in &self.g {
            let field = format!("loading.g.{group}");
            match mesh.group_tag(group) {
                None => issues.push(format!("{field}: unknown boundary group")),
                Some(BoundaryTag::Dirichlet) => {
                    issues.push(format!("{field}: group is tagged dirichlet"))
                }
                Some(BoundaryTag::Neumann) => {}
            }
            let width = if mesh.is_component_group(group) {
                1
            } else {
                mesh.node_dofs()
            };
            table.validate(&field, width, issues);
        }
    }

    /// Sorted breakpoints of all tables.
    pub fn breakpoints(&self) -> Vec<f64> {
        let mut t: Vec<f64> = self
            .w
            .values()
            .flat_map(|d| {
                d.values
                    .rows
                    .iter()
                    .chain(d.gradient.iter().flat_map(|g| g.rows.iter()))
                    .map(|r| r[0])
            })
            .chain(self.f.iter().flat_map(|f| f.rows.iter().map(|r| r[0])))
            .chain(self.g.values().flat_map(|g| g.rows.iter().map(|r| r[0])))
            .collect();
        t.sort_by(f64::total_cmp);
        t.dedup();
        t
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Prescription {
    /// Vertex component: value index into the group table plus the position.
    Vertex {
        group: String,
        column: usize,
        component: usize,
        x: [f64; 2],
    },
    Component {
        group: String,
    },
    Zero,
}

/// Partition of the degrees of freedom into prescribed and free ones.
#[derive(Clone, Debug)]
pub struct Constraint {
    fixed: Vec<Option<usize>>,
    prescriptions: Vec<(usize, Prescription)>,
    free: Vec<usize>,
    n_dofs: usize,
}

impl Constraint {
    pub fn new(mesh: &Mesh, loads: &LoadHistory) -> Self {
        let mut map: BTreeMap<usize, Prescription> = BTreeMap::new();
        // Dirichlet facets without data are clamped on all components.
        for f in mesh.facets.iter().filter(|f| f.tag == BoundaryTag::Dirichlet) {
            let data = loads.w.get(&f.group);
            let comps: Vec<usize> = data
                .and_then(|d| d.components.clone())
                .unwrap_or_else(|| (0..mesh.node_dofs()).collect());
            for &v in &f.vertices {
                for (column, &c) in comps.iter().enumerate() {
                    let p = if data.is_some() {
                        Prescription::Vertex {
                            group: f.group.clone(),
                            column,
                            component: c,
                            x: mesh.vertices[v],
                        }
                    } else {
                        Prescription::Zero
                    };
                    map.insert(mesh.vertex_dof(v, c), p);
                }
            }
        }
        for c in mesh.component_dofs.iter().filter(|c| c.tag == BoundaryTag::Dirichlet) {
            let p = if loads.w.contains_key(&c.group) {
                Prescription::Component {
                    group: c.group.clone(),
                }
            } else {
                Prescription::Zero
            };
            map.insert(c.dof, p);
        }
        let n = mesh.n_dofs();
        let mut fixed = vec![None; n];
        let prescriptions: Vec<(usize, Prescription)> = map.into_iter().collect();
        for (i, (dof, _)) in prescriptions.iter().enumerate() {
            fixed[*dof] = Some(i);
        }
        let free = (0..n).filter(|&d| fixed[d].is_none()).collect();
        Self {
            fixed,
            prescriptions,
            free,
            n_dofs: n,
        }
    }

    pub fn free_dofs(&self) -> &[usize] {
        &self.free
    }

    pub fn is_fixed(&self, dof: usize) -> bool {
        self.fixed[dof].is_some()
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// The lifting `W(t)`: prescribed values on constrained dofs, zero elsewhere.
    pub fn lifting(&self, loads: &LoadHistory, t: f64) -> Vec<f64> {
        let mut w = vec![0.0; self.n_dofs];
        let mut cache: BTreeMap<&str, (Vec<f64>, Option<Vec<f64>>)> = BTreeMap::new();
        for (dof, p) in &self.prescriptions {
            w[*dof] = match p {
                Prescription::Zero => 0.0,
                Prescription::Component { group } => {
                    let (v, _) = cache
                        .entry(group.as_str())
                        .or_insert_with(|| eval_group(loads, group, t));
                    v[0]
                }
                Prescription::Vertex {
                    group,
                    column,
                    component,
                    x,
                } => {
                    let (v, g) = cache
                        .entry(group.as_str())
                        .or_insert_with(|| eval_group(loads, group, t));
                    let mut val = v[*column];
                    if let Some(g) = g {
                        val += g[2 * component] * x[0] + g[2 * component + 1] * x[1];
                    }
                    val
                }
            };
        }
        w
    }

    /// Full vector from free values and a lifting.
    pub fn expand(&self, free_values: &[f64], lifting: &[f64]) -> Vec<f64> {
        let mut u = lifting.to_vec();
        for (i, &d) in self.free.iter().enumerate() {
            u[d] = free_values[i];
        }
        u
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }

    /// Replaces the prescribed entries of `u` by those of `lifting`.
    pub fn impose(&self, u: &mut [f64], lifting: &[f64]) {
        for (dof, _) in &self.prescriptions {
            u[*dof] = lifting[*dof];
        }
    }
}

fn eval_group(loads: &LoadHistory, group: &str, t: f64) -> (Vec<f64>, Option<Vec<f64>>) {
    let d = &loads.w[group];
    (d.values.eval(t), d.gradient.as_ref().map(|g| g.eval(t)))
}

/// Discrete load `⟨𝓛(t), v⟩ = ∫ f·v + ∫_{∂_N} g·v` as a vector over all dofs.
/// Strain-component groups receive `|Ω| w_s g`, the work of a prescribed
/// stress component on the homogeneous strain dof.
pub fn assemble_load(t: f64, loads: &LoadHistory, mesh: &Mesh) -> Vec<f64> {
    let mut out = vec![0.0; mesh.n_dofs()];
    if let Some(f) = &loads.f {
        let fv = f.eval(t);
        for e in &mesh.elements {
            let share = e.measure / e.vertices.len() as f64;
            for &v in &e.vertices {
                for (c, fc) in fv.iter().enumerate() {
                    out[mesh.vertex_dof(v, c)] += share * fc;
                }
            }
        }
    }
    for (group, table) in &loads.g {
        let gv = table.eval(t);
        if let Some(c) = mesh.component_dofs.iter().find(|c| &c.group == group) {
            out[c.dof] += mesh.measure() * component_weight(mesh.tensor_dim, c.slot) * gv[0];
            continue;
        }
        for facet in mesh.facets.iter().filter(|f| &f.group == group) {
            let share = facet.measure / facet.vertices.len() as f64;
            for &v in &facet.vertices {
                for (c, gc) in gv.iter().enumerate() {
                    out[mesh.vertex_dof(v, c)] += share * gc;
                }
            }
        }
    }
    out
}

/// Statically admissible stress history, uniform in space, with its margin.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SafeLoadField {
    /// Rows `[t, ρ components in storage order]`.
    pub rho: Table,
    pub tau0: f64,
}

impl SafeLoadField {
    pub fn validate(&self, dim: usize, issues: &mut Vec<String>) {
        self.rho.validate("safe_load.rho", n_components(dim), issues);
        if !(self.tau0 > 0.0 && self.tau0.is_finite()) {
            issues.push(format!("safe_load.tau0: must be positive, got {}", self.tau0));
        }
    }

    pub fn stress(&self, dim: usize, t: f64) -> SymTensor {
        SymTensor::from_voigt(dim, &self.rho.eval(t))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_mesh, MeshShape, MeshSpec};

    fn rect(tags: &[(&str, BoundaryTag)]) -> Mesh {
        build_mesh(&MeshSpec {
            shape: MeshShape::Rect {
                nx: 3,
                ny: 2,
                lx: 1.0,
                ly: 1.0,
            },
            tags: tags.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        })
        .unwrap()
    }

    use BoundaryTag::{Dirichlet as D, Neumann as N};

    #[test]
    fn table_interpolation() {
        let t = Table::from_rows(vec![vec![0.0, 1.0, 0.0], vec![2.0, 3.0, -2.0]]);
        assert_eq!(t.eval(-1.0), vec![1.0, 0.0]);
        assert_eq!(t.eval(1.0), vec![2.0, -1.0]);
        assert_eq!(t.eval(5.0), vec![3.0, -2.0]);
        let mut issues = Vec::new();
        Table::from_rows(vec![vec![1.0, 0.0], vec![0.5, 1.0]]).validate("x", 1, &mut issues);
        assert!(issues[0].contains("increasing"));
    }

    #[test]
    fn zero_loads_assemble_to_zero() {
        let m = rect(&[("left", D), ("right", N), ("bottom", N), ("top", N)]);
        let f = assemble_load(0.3, &LoadHistory::default(), &m);
        assert!(f.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn constant_volume_force_sums_to_total() {
        let m = rect(&[("left", D), ("right", N), ("bottom", N), ("top", N)]);
        let loads = LoadHistory {
            f: Some(Table::constant(&[2.0, -0.5])),
            ..Default::default()
        };
        let f = assemble_load(0.0, &loads, &m);
        let sx: f64 = (0..m.n_vertices()).map(|v| f[m.vertex_dof(v, 0)]).sum();
        let sy: f64 = (0..m.n_vertices()).map(|v| f[m.vertex_dof(v, 1)]).sum();
        assert!((sx - 2.0).abs() < 1e-14 && (sy + 0.5).abs() < 1e-14);
    }

    #[test]
    fn edge_pressure_sums_to_resultant() {
        let m = rect(&[("left", D), ("right", N), ("bottom", N), ("top", N)]);
        let mut loads = LoadHistory::default();
        loads.g.insert("right".into(), Table::constant(&[-3.0, 0.0]));
        let f = assemble_load(0.0, &loads, &m);
        let sx: f64 = (0..m.n_vertices()).map(|v| f[m.vertex_dof(v, 0)]).sum();
        assert!((sx + 3.0).abs() < 1e-14);
        let mut unit = LoadHistory::default();
        unit.g.insert("right".into(), Table::constant(&[1.0, 0.0]));
        let f_unit = assemble_load(0.0, &unit, &m);
        let mut combined = LoadHistory::default();
        combined.g.insert("right".into(), Table::constant(&[0.5 * -3.0 + 1.5, 0.0]));
        let f_combined = assemble_load(0.0, &combined, &m);
        for i in 0..f.len() {
            assert!((f_combined[i] - (0.5 * f[i] + 1.5 * f_unit[i])).abs() < 1e-14);
        }
    }

    #[test]
    fn lifting_imposes_affine_data_exactly() {
        let m = rect(&[("left", D), ("right", D), ("bottom", D), ("top", D)]);
        let mut loads = LoadHistory::default();
        for g in ["left", "right", "bottom", "top"] {
            loads.w.insert(
                g.into(),
                DirichletData {
                    components: None,
                    values: Table::from_rows(vec![vec![0.0, 0.0, 0.0], vec![1.0, 0.1, -0.2]]),
                    gradient: Some(Table::from_rows(vec![
                        vec![0.0, 0.0, 0.0, 0.0, 0.0],
                        vec![1.0, 0.01, 0.02, -0.03, 0.04],
                    ])),
                },
            );
        }
        let con = Constraint::new(&m, &loads);
        let w = con.lifting(&loads, 0.5);
        for (v, x) in m.vertices.iter().enumerate() {
            let on_boundary = x[0] == 0.0 || x[1] == 0.0 || x[0] == 1.0 || x[1] == 1.0;
            let ex = 0.05 + 0.005 * x[0] + 0.01 * x[1];
            let ey = -0.1 - 0.015 * x[0] + 0.02 * x[1];
            if on_boundary {
                assert!((w[m.vertex_dof(v, 0)] - ex).abs() < 1e-15);
                assert!((w[m.vertex_dof(v, 1)] - ey).abs() < 1e-15);
            } else {
                assert!(!con.is_fixed(m.vertex_dof(v, 0)));
            }
        }
    }

    #[test]
    fn unknown_groups_are_reported_together() {
        let m = rect(&[("left", D), ("right", N), ("bottom", N), ("top", N)]);
        let mut loads = LoadHistory::default();
        loads.w.insert(
            "nowhere".into(),
            DirichletData {
                components: None,
                values: Table::constant(&[0.0, 0.0]),
                gradient: None,
            },
        );
        loads.g.insert("left".into(), Table::constant(&[1.0, 0.0]));
        let mut issues = Vec::new();
        loads.validate(&m, &mut issues);
        assert_eq!(issues.len(), 2);
    }
}
