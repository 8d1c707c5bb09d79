use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{QuadratureRule, ScalarField};
use crate::linalg::SparseMatrix;
use crate::mesh::Mesh;

/// Marks a boundary vertex in [`DofMap::vertex_to_dof`].
pub const NO_DOF: usize = usize::MAX;

/// Numbering of the interior vertices, which carry the unknowns of the
/// homogeneous Dirichlet space.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DofMap {
    pub vertex_to_dof: Vec<usize>,
    pub dof_to_vertex: Vec<usize>,
}

impl DofMap {
    pub fn new(mesh: &Mesh) -> Self {
        let mut vertex_to_dof = vec![NO_DOF; mesh.n_vertices()];
        let mut dof_to_vertex = Vec::with_capacity(mesh.n_interior());
        for (v, slot) in vertex_to_dof.iter_mut().enumerate() {
            if !mesh.is_boundary(v) {
                *slot = dof_to_vertex.len();
                dof_to_vertex.push(v);
            }
        }
        Self {
            vertex_to_dof,
            dof_to_vertex,
        }
    }

    pub fn len(&self) -> usize {
        self.dof_to_vertex.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dof_to_vertex.is_empty()
    }
}

/// Mass and stiffness matrices on the interior unknowns of a mesh, together
/// with the per-element geometry needed for quadrature-based assembly.
#[derive(Clone, Debug)]
pub struct AssembledOperators {
    mesh: Arc<Mesh>,
    dofs: DofMap,
    element_dofs: Vec<usize>,
    volumes: Vec<f64>,
    /// Gradients of the barycentric coordinates, `(dim+1) * dim` per element.
    gradients: Vec<f64>,
    pattern: SparseMatrix,
    /// Mass matrix `(φ_j, φ_i)`.
    pub mass: SparseMatrix,
    /// Stiffness matrix `(∇φ_j, ∇φ_i)`.
    pub stiffness: SparseMatrix,
}

/// Inverse of the `d x d` matrix with the given rows, by cofactors.
fn invert_small(d: usize, rows: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut inv = [[0.0; 3]; 3];
    match d {
        1 => inv[0][0] = 1.0 / rows[0][0],
        2 => {
            let det = rows[0][0] * rows[1][1] - rows[0][1] * rows[1][0];
            inv[0][0] = rows[1][1] / det;
            inv[0][1] = -rows[0][1] / det;
            inv[1][0] = -rows[1][0] / det;
            inv[1][1] = rows[0][0] / det;
        }
        3 => {
            let m = rows;
            let det = crate::mesh::small_det(3, rows);
            for i in 0..3 {
                for j in 0..3 {
                    // inv[i][j] = cofactor(j, i) / det
                    let (r0, r1) = ((j + 1) % 3, (j + 2) % 3);
                    let (c0, c1) = ((i + 1) % 3, (i + 2) % 3);
                    inv[i][j] = (m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0]) / det;
                }
            }
        }
        _ => unreachable!("dimension {d} is not supported"),
    }
    inv
}

impl AssembledOperators {
    /// Assembles mass and stiffness for `mesh`.
    ///
    /// Fails with [`Error::EmptyInteriorSpace`] when the mesh has no interior
    /// vertex.
    pub fn new(mesh: Arc<Mesh>) -> Result<Self> {
        let dofs = DofMap::new(&mesh);
        if dofs.is_empty() {
            return Err(Error::EmptyInteriorSpace);
        }
        let d = mesh.dim();
        let k = d + 1;
        let n_el = mesh.n_elements();

        let mut element_dofs = Vec::with_capacity(n_el * k);
        let mut volumes = Vec::with_capacity(n_el);
        let mut gradients = Vec::with_capacity(n_el * k * d);
        let mut rows: Vec<Vec<usize>> = vec![Vec::new(); dofs.len()];
        for e in 0..n_el {
            let local: Vec<usize> = mesh.element(e).iter().map(|&v| dofs.vertex_to_dof[v]).collect();
            for &i in &local {
                if i == NO_DOF {
                    continue;
                }
                rows[i].extend(local.iter().copied().filter(|&j| j != NO_DOF));
            }
            element_dofs.extend_from_slice(&local);
            volumes.push(mesh.signed_volume(e));

            let inv = invert_small(d, &mesh.edge_rows(e));
            // ∇λ_{c+1} is column c of the inverse edge matrix; ∇λ_0 = −Σ ∇λ_c.
            let mut g0 = [0.0; 3];
            for c in 0..d {
                for a in 0..d {
                    g0[a] -= inv[a][c];
                }
            }
            gradients.extend_from_slice(&g0[..d]);
            for c in 0..d {
                for row in inv.iter().take(d) {
                    gradients.push(row[c]);
                }
            }
        }
        let pattern = SparseMatrix::symmetric_pattern(dofs.len(), rows);

        let mut ops = Self {
            mesh,
            dofs,
            element_dofs,
            volumes,
            gradients,
            mass: pattern.clone(),
            stiffness: pattern.clone(),
            pattern,
        };
        ops.mass = ops.assemble_local(|e, i, j| {
            let vol = ops.volumes[e];
            vol * if i == j { 2.0 } else { 1.0 } / ((k * (k + 1)) as f64)
        });
        ops.stiffness = ops.assemble_local(|e, i, j| {
            let gi = ops.gradient(e, i);
            let gj = ops.gradient(e, j);
            ops.volumes[e] * gi.iter().zip(gj).map(|(a, b)| a * b).sum::<f64>()
        });
        Ok(ops)
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn dofs(&self) -> &DofMap {
        &self.dofs
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn volume(&self, e: usize) -> f64 {
        self.volumes[e]
    }

    /// Gradient of the `i`-th barycentric coordinate on element `e`.
    pub fn gradient(&self, e: usize, i: usize) -> &[f64] {
        let d = self.mesh.dim();
        let start = (e * (d + 1) + i) * d;
        &self.gradients[start..start + d]
    }

    pub(crate) fn element_dofs(&self, e: usize) -> &[usize] {
        let k = self.mesh.dim() + 1;
        &self.element_dofs[e * k..(e + 1) * k]
    }

    /// Fills the shared pattern from a symmetric local-matrix callback.
    /// Each element contributes both triangles from one evaluation per pair,
    /// so the result is exactly symmetric.
    fn assemble_local(&self, local: impl Fn(usize, usize, usize) -> f64) -> SparseMatrix {
        let mut m = self.pattern.clone();
        let k = self.mesh.dim() + 1;
        for e in 0..self.mesh.n_elements() {
            let ed = self.element_dofs(e);
            for i in 0..k {
                if ed[i] == NO_DOF {
                    continue;
                }
                m.add_to(ed[i], ed[i], local(e, i, i));
                for j in i + 1..k {
                    if ed[j] == NO_DOF {
                        continue;
                    }
                    let v = local(e, i, j);
                    m.add_to(ed[i], ed[j], v);
                    m.add_to(ed[j], ed[i], v);
                }
            }
        }
        m
    }

    /// Physical coordinates of a barycentric point in element `e`.
    pub(crate) fn physical_point(&self, e: usize, bary: &[f64], out: &mut [f64]) {
        let d = self.mesh.dim();
        out[..d].fill(0.0);
        for (&v, &l) in self.mesh.element(e).iter().zip(bary) {
            for (o, x) in out.iter_mut().zip(self.mesh.vertex(v)) {
                *o += l * x;
            }
        }
    }

    /// Mass matrix weighted by `w`, `∫ w φ_i φ_j`, via quadrature.
    pub fn weighted_mass(&self, w: &ScalarField, quad: &QuadratureRule) -> Result<SparseMatrix> {
        require_degree(quad, 2)?;
        if w.is_zero() {
            return Ok(self.pattern.clone());
        }
        let d = self.mesh.dim();
        let mut x = [0.0; 3];
        let samples: Vec<f64> = (0..self.mesh.n_elements())
            .flat_map(|e| {
                quad.iter()
                    .map(|(p, _)| {
                        self.physical_point(e, p, &mut x);
                        w.value(&x[..d])
                    })
                    .collect::<Vec<_>>()
            })
            .collect();
        Ok(self.weighted_mass_from_samples(&samples, quad))
    }

    /// Mass matrix weighted by values given at every quadrature point of
    /// every element (element-major).
    pub(crate) fn weighted_mass_from_samples(&self, samples: &[f64], quad: &QuadratureRule) -> SparseMatrix {
        let nq = quad.len();
        self.assemble_local(|e, i, j| {
            let vol = self.volumes[e];
            quad.iter()
                .enumerate()
                .map(|(q, (p, wq))| wq * samples[e * nq + q] * p[i] * p[j])
                .sum::<f64>()
                * vol
        })
    }

    /// Load vector `b_i = ∫ f φ_i` on the interior unknowns.
    pub fn load_vector(&self, f: &ScalarField, quad: &QuadratureRule) -> Vec<f64> {
        let d = self.mesh.dim();
        let mut b = vec![0.0; self.n_dofs()];
        let mut x = [0.0; 3];
        for e in 0..self.mesh.n_elements() {
            let ed = self.element_dofs(e);
            let vol = self.volumes[e];
            for (p, wq) in quad.iter() {
                self.physical_point(e, p, &mut x);
                let fx = f.value(&x[..d]);
                for (i, &dof) in ed.iter().enumerate() {
                    if dof != NO_DOF {
                        b[dof] += vol * wq * fx * p[i];
                    }
                }
            }
        }
        b
    }

    /// Interpolated value of the interior vector `u` at a barycentric point.
    #[inline]
    pub(crate) fn value_at(&self, e: usize, u: &[f64], bary: &[f64]) -> f64 {
        self.element_dofs(e)
            .iter()
            .zip(bary)
            .filter(|(&dof, _)| dof != NO_DOF)
            .map(|(&dof, &l)| l * u[dof])
            .sum()
    }

    /// `b_i = ∫ u³ φ_i` for the P1 function with interior values `u`.
    pub fn cubic_load(&self, u: &[f64], quad: &QuadratureRule) -> Vec<f64> {
        let mut b = vec![0.0; self.n_dofs()];
        for e in 0..self.mesh.n_elements() {
            let ed = self.element_dofs(e);
            let vol = self.volumes[e];
            for (p, wq) in quad.iter() {
                let uq = self.value_at(e, u, p);
                let c = vol * wq * uq * uq * uq;
                for (i, &dof) in ed.iter().enumerate() {
                    if dof != NO_DOF {
                        b[dof] += c * p[i];
                    }
                }
            }
        }
        b
    }

    /// `∫ u⁴` for the P1 function with interior values `u`.
    pub fn quartic_integral(&self, u: &[f64], quad: &QuadratureRule) -> f64 {
        (0..self.mesh.n_elements())
            .map(|e| {
                self.volumes[e]
                    * quad
                        .iter()
                        .map(|(p, wq)| {
                            let uq = self.value_at(e, u, p);
                            wq * uq * uq * uq * uq
                        })
                        .sum::<f64>()
            })
            .sum()
    }

    /// Samples `u²` at every quadrature point (element-major), for weighted
    /// assembly of `∫ u² φ_i φ_j`.
    pub(crate) fn square_samples(&self, u: &[f64], quad: &QuadratureRule) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.mesh.n_elements() * quad.len());
        for e in 0..self.mesh.n_elements() {
            for (p, _) in quad.iter() {
                let uq = self.value_at(e, u, p);
                out.push(uq * uq);
            }
        }
        out
    }
}

pub(crate) fn require_degree(quad: &QuadratureRule, need: usize) -> Result<()> {
    if quad.exactness_degree() < need {
        return Err(Error::QuadratureDegree {
            have: quad.exactness_degree(),
            need,
        });
    }
    Ok(())
}

/// Interior-reduced P1 mass matrix of `mesh`.
pub fn assemble_mass(mesh: &Mesh) -> Result<SparseMatrix> {
    Ok(AssembledOperators::new(Arc::new(mesh.clone()))?.mass)
}

/// Interior-reduced P1 stiffness matrix of `mesh`.
pub fn assemble_stiffness(mesh: &Mesh) -> Result<SparseMatrix> {
    Ok(AssembledOperators::new(Arc::new(mesh.clone()))?.stiffness)
}

/// Mass matrix over all vertices, boundary included.
pub fn assemble_mass_unreduced(mesh: &Mesh) -> SparseMatrix {
    let k = mesh.dim() + 1;
    let mut triplets = Vec::with_capacity(mesh.n_elements() * k * k);
    for e in 0..mesh.n_elements() {
        let vol = mesh.signed_volume(e);
        for (i, &vi) in mesh.element(e).iter().enumerate() {
            for (j, &vj) in mesh.element(e).iter().enumerate() {
                let factor = if i == j { 2.0 } else { 1.0 };
                triplets.push((vi, vj, vol * factor / ((k * (k + 1)) as f64)));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), &triplets).expect("vertex indices are in range")
}

/// Stiffness matrix over all vertices, boundary included.
pub fn assemble_stiffness_unreduced(mesh: &Mesh) -> SparseMatrix {
    let d = mesh.dim();
    let mut triplets = Vec::new();
    for e in 0..mesh.n_elements() {
        let vol = mesh.signed_volume(e);
        let inv = invert_small(d, &mesh.edge_rows(e));
        let grad = |i: usize| -> [f64; 3] {
            let mut g = [0.0; 3];
            for a in 0..d {
                g[a] = if i == 0 {
                    -(0..d).map(|c| inv[a][c]).sum::<f64>()
                } else {
                    inv[a][i - 1]
                };
            }
            g
        };
        for (i, &vi) in mesh.element(e).iter().enumerate() {
            for (j, &vj) in mesh.element(e).iter().enumerate() {
                let (gi, gj) = (grad(i), grad(j));
                triplets.push((vi, vj, vol * (0..d).map(|a| gi[a] * gj[a]).sum::<f64>()));
            }
        }
    }
    SparseMatrix::from_triplets(mesh.n_vertices(), mesh.n_vertices(), &triplets).expect("vertex indices are in range")
}

/// `∫ w φ_i φ_j` on interior unknowns.
pub fn assemble_weighted_mass(
    ops: &AssembledOperators,
    w: &ScalarField,
    quad: &QuadratureRule,
) -> Result<SparseMatrix> {
    ops.weighted_mass(w, quad)
}

/// `∫ f φ_i` on interior unknowns.
pub fn load_vector(ops: &AssembledOperators, f: &ScalarField, quad: &QuadratureRule) -> Vec<f64> {
    ops.load_vector(f, quad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_uniform_mesh, BoxDomain};

    fn ops(dim: usize, n: usize) -> AssembledOperators {
        AssembledOperators::new(Arc::new(build_uniform_mesh(&BoxDomain::unit(dim).unwrap(), n))).unwrap()
    }

    #[test]
    fn interval_mass_and_stiffness_entries() {
        let m = assemble_mass(&build_uniform_mesh(&BoxDomain::unit(1).unwrap(), 2)).unwrap();
        assert_eq!(m.n_rows(), 1);
        assert!((m.get(0, 0) - 1.0 / 3.0).abs() < 1e-15);

        let a = ops(1, 4).stiffness;
        assert!((a.get(1, 1) - 8.0).abs() < 1e-12);
        assert!((a.get(1, 0) + 4.0).abs() < 1e-12);
        assert!((a.get(1, 2) + 4.0).abs() < 1e-12);
    }

    #[test]
    fn degenerate_mesh_has_no_interior() {
        let mesh = build_uniform_mesh(&BoxDomain::unit(1).unwrap(), 1);
        assert!(matches!(assemble_mass(&mesh), Err(Error::EmptyInteriorSpace)));
        assert!(matches!(assemble_stiffness(&mesh), Err(Error::EmptyInteriorSpace)));
    }

    #[test]
    fn unreduced_mass_partition_of_unity() {
        let domain = BoxDomain::new(vec![0.0, 0.0, -1.0], vec![2.0, 0.5, 1.0]).unwrap();
        for dim in 1..=3 {
            let d = BoxDomain::new(domain.lower()[..dim].to_vec(), domain.upper()[..dim].to_vec()).unwrap();
            let mesh = build_uniform_mesh(&d, 3);
            let m = assemble_mass_unreduced(&mesh);
            let total: f64 = m.values().iter().sum();
            assert!((total - d.volume()).abs() <= 1e-12 * d.volume());
        }
    }

    #[test]
    fn unreduced_stiffness_annihilates_constants() {
        for dim in 1..=3 {
            let mesh = build_uniform_mesh(&BoxDomain::unit(dim).unwrap(), 3);
            let a = assemble_stiffness_unreduced(&mesh);
            let ones = vec![1.0; mesh.n_vertices()];
            let row_sums = a.spmv(&ones).unwrap();
            assert!(row_sums.iter().all(|s| s.abs() < 1e-12));
        }
    }

    #[test]
    fn reduced_matrices_are_restrictions_and_exactly_symmetric() {
        for dim in 1..=3 {
            let o = ops(dim, 3);
            let full_m = assemble_mass_unreduced(o.mesh());
            let full_a = assemble_stiffness_unreduced(o.mesh());
            let map = &o.dofs().dof_to_vertex;
            for i in 0..o.n_dofs() {
                for j in 0..o.n_dofs() {
                    assert_eq!(o.mass.get(i, j), o.mass.get(j, i));
                    assert_eq!(o.stiffness.get(i, j), o.stiffness.get(j, i));
                    assert!((o.mass.get(i, j) - full_m.get(map[i], map[j])).abs() < 1e-15);
                    assert!((o.stiffness.get(i, j) - full_a.get(map[i], map[j])).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn weighted_mass_constant_and_zero() {
        for dim in 1..=3 {
            let o = ops(dim, 3);
            let quad = QuadratureRule::with_degree(dim, 2);
            let w1 = o.weighted_mass(&ScalarField::Constant(1.0), &quad).unwrap();
            for (a, b) in w1.values().iter().zip(o.mass.values()) {
                assert!((a - b).abs() < 1e-13);
            }
            let w0 = o.weighted_mass(&ScalarField::Zero, &quad).unwrap();
            assert!(w0.values().iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn weighted_mass_linear_weight() {
        // ∫ x φ² over [0,1] for the hat at 0.5 with h = 0.5:
        // 2∫_0^{1/2} x (2x)² dx ... by symmetry equals 0.5 · ∫ φ² = 0.5 / 3.
        let o = ops(1, 2);
        let quad = QuadratureRule::with_degree(1, 4);
        let w = ScalarField::custom("x", |x: &[f64]| x[0], None);
        let m = o.weighted_mass(&w, &quad).unwrap();
        assert!((m.get(0, 0) - 1.0 / 6.0).abs() < 1e-14);
    }

    #[test]
    fn low_degree_quadrature_rejected() {
        let o = ops(2, 2);
        let quad = QuadratureRule::with_degree(2, 1);
        assert!(matches!(
            o.weighted_mass(&ScalarField::Harmonic, &quad),
            Err(Error::QuadratureDegree { have: 1, need: 2 })
        ));
    }

    #[test]
    fn load_vector_basics() {
        let o = ops(1, 2);
        let quad = QuadratureRule::default_for(1);
        assert_eq!(o.load_vector(&ScalarField::Zero, &quad), vec![0.0]);
        assert!((o.load_vector(&ScalarField::Constant(1.0), &quad)[0] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn gradients_sum_to_zero_and_dual_to_edges() {
        let o = ops(3, 2);
        for e in 0..o.mesh().n_elements() {
            let mut sum = [0.0; 3];
            for i in 0..4 {
                for a in 0..3 {
                    sum[a] += o.gradient(e, i)[a];
                }
            }
            assert!(sum.iter().all(|s| s.abs() < 1e-12));
            let rows = o.mesh().edge_rows(e);
            for i in 1..4 {
                for (k, row) in rows.iter().enumerate() {
                    let dotp: f64 = (0..3).map(|a| o.gradient(e, i)[a] * row[a]).sum();
                    let expected = if k + 1 == i { 1.0 } else { 0.0 };
                    assert!((dotp - expected).abs() < 1e-12);
                }
            }
        }
    }
}
