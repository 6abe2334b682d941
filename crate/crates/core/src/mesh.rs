//! Meshes and finite-element spaces: vector P1 displacements, scalar P1
//! damage, element-wise constant strains.
//!
//! Three mesh kinds are supported. A `point` is a single homogeneously
//! deformed unit cell whose degrees of freedom are the strain components
//! themselves. A `segment` is a bar of unit cross-section along `x`, with
//! P1 nodal displacements in all `n` directions plus homogeneous lateral
//! strain components. A `rect` is a structured P1 triangulation in 2D.
//!
//! Strain-component dofs (all components for a point, the lateral ones for
//! a segment) carry a boundary tag just like facets: Dirichlet prescribes
//! the strain component, Neumann prescribes the conjugate stress.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::ValidationError;
use crate::tensors::{component_labels, n_components, storage_index, SymTensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryTag {
    Dirichlet,
    Neumann,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MeshKind {
    Point,
    Segment,
    Rect,
}

#[derive(Clone, Debug, PartialEq)]
pub enum MeshShape {
    Point { dim: usize },
    Segment { n_elems: usize, length: f64, dim: usize },
    Rect { nx: usize, ny: usize, lx: f64, ly: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct MeshSpec {
    pub shape: MeshShape,
    pub tags: BTreeMap<String, BoundaryTag>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Facet {
    pub vertices: Vec<usize>,
    pub group: String,
    pub tag: BoundaryTag,
    pub measure: f64,
}

/// A homogeneous strain component acting as a global degree of freedom.
#[derive(Clone, Debug, PartialEq)]
pub struct ComponentDof {
    pub group: String,
    pub slot: usize,
    pub dof: usize,
    pub tag: BoundaryTag,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Element {
    pub vertices: Vec<usize>,
    pub measure: f64,
    /// Strain produced by a unit value of each contributing dof.
    pub strain_columns: Vec<(usize, SymTensor)>,
}

#[derive(Clone, Debug)]
pub struct Mesh {
    pub kind: MeshKind,
    pub tensor_dim: usize,
    pub vertices: Vec<[f64; 2]>,
    pub elements: Vec<Element>,
    pub facets: Vec<Facet>,
    pub component_dofs: Vec<ComponentDof>,
    node_dofs: usize,
    n_dofs: usize,
    measure: f64,
    /// Rows of the P1 Laplacian `∫ ∇φ_i · ∇φ_j` on the vertex set.
    gradient_rows: Vec<Vec<(usize, f64)>>,
}

impl Mesh {
    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    /// Displacement components per vertex (0 for a point).
    pub fn node_dofs(&self) -> usize {
        self.node_dofs
    }

    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_elements(&self) -> usize {
        self.elements.len()
    }

    /// `|Ω|`.
    pub fn measure(&self) -> f64 {
        self.measure
    }

    pub fn vertex_dof(&self, vertex: usize, component: usize) -> usize {
        debug_assert!(component < self.node_dofs);
        vertex * self.node_dofs + component
    }

    /// Element-wise symmetric gradient of the discrete displacement.
    pub fn strain(&self, u: &[f64]) -> Vec<SymTensor> {
        self.elements.iter().map(|e| self.element_strain(e, u)).collect()
    }

    pub fn element_strain(&self, e: &Element, u: &[f64]) -> SymTensor {
        let mut eps = SymTensor::zeros(self.tensor_dim);
        for (dof, col) in &e.strain_columns {
            eps += *col * u[*dof];
        }
        eps
    }

    /// `Σ_e |e| σ_e : B_e`, the internal-force vector of an element stress field.
    pub fn internal_force(&self, stress: &[SymTensor]) -> Vec<f64> {
        let mut f = vec![0.0; self.n_dofs];
        for (e, s) in self.elements.iter().zip(stress) {
            for (dof, col) in &e.strain_columns {
                f[*dof] += e.measure * s.dot(col);
            }
        }
        f
    }

    /// Element mean of a nodal field.
    pub fn element_mean(&self, element: usize, nodal: &[f64]) -> f64 {
        let e = &self.elements[element];
        e.vertices.iter().map(|&v| nodal[v]).sum::<f64>() / e.vertices.len() as f64
    }

    pub fn gradient_rows(&self) -> &[Vec<(usize, f64)>] {
        &self.gradient_rows
    }

    /// `‖∇α‖²_{L²}` of a P1 field.
    pub fn gradient_energy(&self, alpha: &[f64]) -> f64 {
        let mut s = 0.0;
        for (i, row) in self.gradient_rows.iter().enumerate() {
            let mut r = 0.0;
            for &(j, v) in row {
                r += v * alpha[j];
            }
            s += alpha[i] * r;
        }
        s
    }

    /// `S α` with `S` the P1 Laplacian.
    pub fn gradient_apply(&self, alpha: &[f64]) -> Vec<f64> {
        self.gradient_rows
            .iter()
            .map(|row| row.iter().map(|&(j, v)| v * alpha[j]).sum())
            .collect()
    }

    /// Tag of a boundary group, facet or strain-component.
    pub fn group_tag(&self, group: &str) -> Option<BoundaryTag> {
        self.facets
            .iter()
            .find(|f| f.group == group)
            .map(|f| f.tag)
            .or_else(|| {
                self.component_dofs
                    .iter()
                    .find(|c| c.group == group)
                    .map(|c| c.tag)
            })
    }

    pub fn group_names(&self) -> Vec<String> {
        let mut names: Vec<String> = self.facets.iter().map(|f| f.group.clone()).collect();
        names.extend(self.component_dofs.iter().map(|c| c.group.clone()));
        names.dedup();
        let mut seen = Vec::new();
        for n in names {
            if !seen.contains(&n) {
                seen.push(n);
            }
        }
        seen
    }

    pub fn is_component_group(&self, group: &str) -> bool {
        self.component_dofs.iter().any(|c| c.group == group)
    }

    /// Vertices on the facets of a group, ascending.
    pub fn group_vertices(&self, group: &str) -> Vec<usize> {
        let mut v: Vec<usize> = self
            .facets
            .iter()
            .filter(|f| f.group == group)
            .flat_map(|f| f.vertices.iter().copied())
            .collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Centroid of an element in reference coordinates.
    pub fn element_centroid(&self, element: usize) -> [f64; 2] {
        let e = &self.elements[element];
        let mut c = [0.0; 2];
        for &v in &e.vertices {
            c[0] += self.vertices[v][0];
            c[1] += self.vertices[v][1];
        }
        let m = e.vertices.len() as f64;
        [c[0] / m, c[1] / m]
    }
}

/// Builds a mesh from its description and boundary tags.
pub fn build_mesh(spec: &MeshSpec) -> Result<Mesh, ValidationError> {
    let mut issues = Vec::new();
    let tag_of = |group: &str, issues: &mut Vec<String>| -> BoundaryTag {
        match spec.tags.get(group) {
            Some(t) => *t,
            None => {
                issues.push(format!("mesh.boundary_tags: boundary group '{group}' is untagged"));
                BoundaryTag::Neumann
            }
        }
    };

    let mesh = match spec.shape {
        MeshShape::Point { dim } => {
            if dim != 2 && dim != 3 {
                return Err(ValidationError::single(format!(
                    "mesh.dim: tensor dimension must be 2 or 3, got {dim}"
                )));
            }
            let labels = component_labels(dim);
            let mut component_dofs = Vec::new();
            let mut columns = Vec::new();
            for (slot, label) in labels.iter().enumerate() {
                let tag = tag_of(label, &mut issues);
                component_dofs.push(ComponentDof {
                    group: label.to_string(),
                    slot,
                    dof: slot,
                    tag,
                });
                columns.push((slot, SymTensor::unit(dim, slot)));
            }
            Mesh {
                kind: MeshKind::Point,
                tensor_dim: dim,
                vertices: vec![[0.0, 0.0]],
                elements: vec![Element {
                    vertices: vec![0],
                    measure: 1.0,
                    strain_columns: columns,
                }],
                facets: Vec::new(),
                component_dofs,
                node_dofs: 0,
                n_dofs: n_components(dim),
                measure: 1.0,
                gradient_rows: vec![Vec::new()],
            }
        }
        MeshShape::Segment {
            n_elems,
            length,
            dim,
        } => {
            if dim != 2 && dim != 3 {
                return Err(ValidationError::single(format!(
                    "mesh.dim: tensor dimension must be 2 or 3, got {dim}"
                )));
            }
            if n_elems == 0 {
                return Err(ValidationError::single("mesh.dims: segment needs at least one element"));
            }
            if !(length > 0.0) {
                return Err(ValidationError::single("mesh.lengths: segment length must be positive"));
            }
            let h = length / n_elems as f64;
            let vertices: Vec<[f64; 2]> = (0..=n_elems).map(|i| [i as f64 * h, 0.0]).collect();
            let node_dofs = dim;
            let n_nodal = vertices.len() * node_dofs;
            // Lateral strain components: all storage slots not involving x.
            let labels = component_labels(dim);
            let lateral: Vec<usize> = (0..n_components(dim))
                .filter(|&s| !involves_x(dim, s))
                .collect();
            let mut component_dofs = Vec::new();
            for (i, &slot) in lateral.iter().enumerate() {
                let tag = tag_of(labels[slot], &mut issues);
                component_dofs.push(ComponentDof {
                    group: labels[slot].to_string(),
                    slot,
                    dof: n_nodal + i,
                    tag,
                });
            }
            let mut elements = Vec::with_capacity(n_elems);
            for i in 0..n_elems {
                let (a, b) = (i, i + 1);
                let mut cols = Vec::new();
                for comp in 0..dim {
                    let slot = storage_index(dim, 0, comp);
                    // ε_{x,comp} = ∂_x u_comp / (1 or 2)
                    let w = if comp == 0 { 1.0 / h } else { 0.5 / h };
                    cols.push((a * node_dofs + comp, SymTensor::unit(dim, slot) * -w));
                    cols.push((b * node_dofs + comp, SymTensor::unit(dim, slot) * w));
                }
                for c in &component_dofs {
                    cols.push((c.dof, SymTensor::unit(dim, c.slot)));
                }
                elements.push(Element {
                    vertices: vec![a, b],
                    measure: h,
                    strain_columns: cols,
                });
            }
            let facets = vec![
                Facet {
                    vertices: vec![0],
                    group: "left".into(),
                    tag: tag_of("left", &mut issues),
                    measure: 1.0,
                },
                Facet {
                    vertices: vec![n_elems],
                    group: "right".into(),
                    tag: tag_of("right", &mut issues),
                    measure: 1.0,
                },
            ];
            let mut rows = vec![Vec::new(); vertices.len()];
            for i in 0..n_elems {
                add_entry(&mut rows, i, i, 1.0 / h);
                add_entry(&mut rows, i, i + 1, -1.0 / h);
                add_entry(&mut rows, i + 1, i, -1.0 / h);
                add_entry(&mut rows, i + 1, i + 1, 1.0 / h);
            }
            Mesh {
                kind: MeshKind::Segment,
                tensor_dim: dim,
                n_dofs: n_nodal + component_dofs.len(),
                vertices,
                elements,
                facets,
                component_dofs,
                node_dofs,
                measure: length,
                gradient_rows: rows,
            }
        }
        MeshShape::Rect { nx, ny, lx, ly } => {
            if nx == 0 || ny == 0 {
                return Err(ValidationError::single("mesh.dims: rect needs nx, ny >= 1"));
            }
            if !(lx > 0.0 && ly > 0.0) {
                return Err(ValidationError::single("mesh.lengths: rect lengths must be positive"));
            }
            let dim = 2;
            let (hx, hy) = (lx / nx as f64, ly / ny as f64);
            let idx = |i: usize, j: usize| j * (nx + 1) + i;
            let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
            for j in 0..=ny {
                for i in 0..=nx {
                    vertices.push([i as f64 * hx, j as f64 * hy]);
                }
            }
            let mut elements = Vec::with_capacity(2 * nx * ny);
            let mut rows = vec![Vec::new(); vertices.len()];
            for j in 0..ny {
                for i in 0..nx {
                    let (v00, v10, v01, v11) = (idx(i, j), idx(i + 1, j), idx(i, j + 1), idx(i + 1, j + 1));
                    for tri in [[v00, v10, v11], [v00, v11, v01]] {
                        let el = p1_triangle(&vertices, tri, &mut rows);
                        elements.push(el);
                    }
                }
            }
            let mut facets = Vec::new();
            let mut side = |group: &str, a: usize, b: usize, len: f64, issues: &mut Vec<String>| {
                facets.push(Facet {
                    vertices: vec![a, b],
                    group: group.to_string(),
                    tag: tag_of(group, issues),
                    measure: len,
                });
            };
            for i in 0..nx {
                side("bottom", idx(i, 0), idx(i + 1, 0), hx, &mut issues);
            }
            for j in 0..ny {
                side("right", idx(nx, j), idx(nx, j + 1), hy, &mut issues);
            }
            for i in 0..nx {
                side("top", idx(i, ny), idx(i + 1, ny), hx, &mut issues);
            }
            for j in 0..ny {
                side("left", idx(0, j), idx(0, j + 1), hy, &mut issues);
            }
            // One issue per missing group is enough.
            issues.dedup();
            Mesh {
                kind: MeshKind::Rect,
                tensor_dim: dim,
                n_dofs: vertices.len() * 2,
                vertices,
                elements,
                facets,
                component_dofs: Vec::new(),
                node_dofs: 2,
                measure: lx * ly,
                gradient_rows: rows,
            }
        }
    };

    issues.dedup();
    for name in spec.tags.keys() {
        if mesh.group_tag(name).is_none() {
            issues.push(format!("mesh.boundary_tags: unknown boundary group '{name}'"));
        }
    }
    if mesh.elements.iter().any(|e| !(e.measure > 0.0)) {
        issues.push("mesh: element with nonpositive measure".into());
    }
    let has_dirichlet = mesh.facets.iter().any(|f| f.tag == BoundaryTag::Dirichlet)
        || mesh
            .component_dofs
            .iter()
            .any(|c| c.tag == BoundaryTag::Dirichlet);
    if !has_dirichlet {
        issues.push("mesh.boundary_tags: the Dirichlet boundary must be nonempty".into());
    }
    if issues.is_empty() {
        Ok(mesh)
    } else {
        Err(ValidationError { issues })
    }
}

fn involves_x(dim: usize, slot: usize) -> bool {
    (0..dim).any(|c| storage_index(dim, 0, c) == slot)
}

fn add_entry(rows: &mut [Vec<(usize, f64)>], i: usize, j: usize, v: f64) {
    match rows[i].iter_mut().find(|(c, _)| *c == j) {
        Some(e) => e.1 += v,
        None => {
            rows[i].push((j, v));
            rows[i].sort_by_key(|e| e.0);
        }
    }
}

fn p1_triangle(vertices: &[[f64; 2]], tri: [usize; 3], rows: &mut [Vec<(usize, f64)>]) -> Element {
    let [a, b, c] = tri.map(|v| vertices[v]);
    let det = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
    let area = 0.5 * det;
    // Gradients of the barycentric basis functions.
    let grads = [
        [(b[1] - c[1]) / det, (c[0] - b[0]) / det],
        [(c[1] - a[1]) / det, (a[0] - c[0]) / det],
        [(a[1] - b[1]) / det, (b[0] - a[0]) / det],
    ];
    let mut cols = Vec::with_capacity(6);
    for (k, &v) in tri.iter().enumerate() {
        let [gx, gy] = grads[k];
        // u = φ e_x: ε = [[gx, gy/2], [gy/2, 0]]
        cols.push((2 * v, SymTensor::from_voigt(2, &[gx, 0.0, 0.5 * gy])));
        cols.push((2 * v + 1, SymTensor::from_voigt(2, &[0.0, gy, 0.5 * gx])));
    }
    for (k, &vi) in tri.iter().enumerate() {
        for (l, &vj) in tri.iter().enumerate() {
            let s = area * (grads[k][0] * grads[l][0] + grads[k][1] * grads[l][1]);
            add_entry(rows, vi, vj, s);
        }
    }
    Element {
        vertices: tri.to_vec(),
        measure: area,
        strain_columns: cols,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tags(pairs: &[(&str, BoundaryTag)]) -> BTreeMap<String, BoundaryTag> {
        pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
    }

    use BoundaryTag::{Dirichlet as D, Neumann as N};

    #[test]
    fn segment_counts() {
        let spec = MeshSpec {
            shape: MeshShape::Segment {
                n_elems: 4,
                length: 1.0,
                dim: 3,
            },
            tags: tags(&[("left", D), ("right", D), ("yy", N), ("zz", N), ("yz", N)]),
        };
        let m = build_mesh(&spec).unwrap();
        assert_eq!(m.n_vertices(), 5);
        assert_eq!(m.n_elements(), 4);
        assert_eq!(m.facets.len(), 2);
        assert_eq!(m.n_dofs(), 5 * 3 + 3);
        assert!((m.measure() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn rect_counts() {
        let spec = MeshSpec {
            shape: MeshShape::Rect {
                nx: 2,
                ny: 2,
                lx: 1.0,
                ly: 1.0,
            },
            tags: tags(&[("left", D), ("right", N), ("bottom", D), ("top", N)]),
        };
        let m = build_mesh(&spec).unwrap();
        assert_eq!(m.n_vertices(), 9);
        assert_eq!(m.n_elements(), 8);
        assert_eq!(m.facets.len(), 8);
        let total: f64 = m.elements.iter().map(|e| e.measure).sum();
        assert!((total - 1.0).abs() < 1e-14);
    }

    #[test]
    fn rect_errors() {
        let spec = MeshSpec {
            shape: MeshShape::Rect {
                nx: 0,
                ny: 1,
                lx: 1.0,
                ly: 1.0,
            },
            tags: tags(&[("left", D), ("right", N), ("bottom", D), ("top", N)]),
        };
        assert!(build_mesh(&spec).is_err());
        let untagged = MeshSpec {
            shape: MeshShape::Rect {
                nx: 1,
                ny: 1,
                lx: 1.0,
                ly: 1.0,
            },
            tags: tags(&[("left", D), ("right", N), ("bottom", D)]),
        };
        let err = build_mesh(&untagged).unwrap_err();
        assert!(err.mentions("top"));
        let no_dirichlet = MeshSpec {
            shape: MeshShape::Point { dim: 2 },
            tags: tags(&[("xx", N), ("yy", N), ("xy", N)]),
        };
        assert!(build_mesh(&no_dirichlet).unwrap_err().mentions("Dirichlet"));
    }

    #[test]
    fn strain_of_rigid_and_linear_fields() {
        let spec = MeshSpec {
            shape: MeshShape::Rect {
                nx: 3,
                ny: 2,
                lx: 1.5,
                ly: 1.0,
            },
            tags: tags(&[("left", D), ("right", N), ("bottom", N), ("top", N)]),
        };
        let m = build_mesh(&spec).unwrap();
        let field = |f: &dyn Fn([f64; 2]) -> [f64; 2]| -> Vec<f64> {
            m.vertices.iter().flat_map(|&x| f(x)).collect()
        };
        let translation = field(&|_| [0.3, -1.2]);
        let skew = field(&|x| [-0.7 * x[1], 0.7 * x[0]]);
        let identity = field(&|x| x);
        for e in m.strain(&translation).iter().chain(m.strain(&skew).iter()) {
            assert!(e.norm() < 1e-13);
        }
        for e in m.strain(&identity) {
            assert!((e - SymTensor::identity(2)).norm() < 1e-13);
        }
    }

    #[test]
    fn segment_strain_and_laplacian() {
        let spec = MeshSpec {
            shape: MeshShape::Segment {
                n_elems: 4,
                length: 2.0,
                dim: 2,
            },
            tags: tags(&[("left", D), ("right", N), ("yy", N)]),
        };
        let m = build_mesh(&spec).unwrap();
        let mut u = vec![0.0; m.n_dofs()];
        for (i, x) in m.vertices.iter().enumerate() {
            u[m.vertex_dof(i, 0)] = 0.5 * x[0];
            u[m.vertex_dof(i, 1)] = 0.2 * x[0];
        }
        u[m.component_dofs[0].dof] = -0.1;
        for e in m.strain(&u) {
            assert!((e - SymTensor::from_voigt(2, &[0.5, -0.1, 0.1])).norm() < 1e-14);
        }
        let alpha: Vec<f64> = m.vertices.iter().map(|x| 3.0 * x[0]).collect();
        assert!((m.gradient_energy(&alpha) - 9.0 * 2.0).abs() < 1e-12);
    }
}
