use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::assembly::{require_degree, NO_DOF};
use crate::fem::{AssembledOperators, QuadratureRule, ScalarField};
use crate::linalg::{cg_solve_strict, CgOptions};
use crate::mesh::{Mesh, VertexEmbedding};

/// A continuous piecewise-linear function vanishing on the boundary,
/// stored by its value at every mesh vertex.
#[derive(Clone, Debug)]
pub struct FeFunction {
    mesh: Arc<Mesh>,
    coeffs: Vec<f64>,
}

fn same_mesh(a: &Arc<Mesh>, b: &Arc<Mesh>) -> bool {
    Arc::ptr_eq(a, b) || (a.domain() == b.domain() && a.subdivisions() == b.subdivisions())
}

impl FeFunction {
    /// Wraps per-vertex coefficients; boundary coefficients must be zero.
    pub fn new(mesh: Arc<Mesh>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != mesh.n_vertices() {
            return Err(Error::DimensionMismatch {
                expected: mesh.n_vertices(),
                found: coeffs.len(),
            });
        }
        if let Some(v) = (0..coeffs.len()).find(|&v| mesh.is_boundary(v) && coeffs[v] != 0.0) {
            return Err(Error::MeshMismatch(format!(
                "boundary vertex {v} carries nonzero coefficient {}",
                coeffs[v]
            )));
        }
        Ok(Self { mesh, coeffs })
    }

    pub fn zero(mesh: Arc<Mesh>) -> Self {
        let n = mesh.n_vertices();
        Self {
            mesh,
            coeffs: vec![0.0; n],
        }
    }

    /// Builds the function from its interior unknowns.
    pub fn from_dofs(ops: &AssembledOperators, dofs: &[f64]) -> Result<Self> {
        if dofs.len() != ops.n_dofs() {
            return Err(Error::DimensionMismatch {
                expected: ops.n_dofs(),
                found: dofs.len(),
            });
        }
        let mut coeffs = vec![0.0; ops.mesh().n_vertices()];
        for (&v, &x) in ops.dofs().dof_to_vertex.iter().zip(dofs) {
            coeffs[v] = x;
        }
        Ok(Self {
            mesh: ops.mesh().clone(),
            coeffs,
        })
    }

    /// Interior unknowns of this function with respect to `ops`.
    pub fn dofs(&self, ops: &AssembledOperators) -> Result<Vec<f64>> {
        if !same_mesh(&self.mesh, ops.mesh()) {
            return Err(Error::MeshMismatch(
                "function and operators live on different meshes".into(),
            ));
        }
        Ok(ops.dofs().dof_to_vertex.iter().map(|&v| self.coeffs[v]).collect())
    }

    pub fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// Point evaluation.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let (e, bary) = self.mesh.locate_point(x)?;
        Ok(self
            .mesh
            .element(e)
            .iter()
            .zip(&bary)
            .map(|(&v, &l)| l * self.coeffs[v])
            .sum())
    }

    /// Re-expresses this function on a mesh that refines its own, by
    /// evaluation at the fine vertices. Exact for nested meshes.
    pub fn prolongate(&self, fine: &Arc<Mesh>) -> Result<FeFunction> {
        if fine.domain() != self.mesh.domain() {
            return Err(Error::MeshMismatch("meshes cover different domains".into()));
        }
        let coeffs = (0..fine.n_vertices())
            .map(|v| {
                if fine.is_boundary(v) {
                    Ok(0.0)
                } else {
                    self.evaluate(fine.vertex(v))
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(FeFunction {
            mesh: fine.clone(),
            coeffs,
        })
    }
}

/// Norms of a finite element function.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Norms {
    pub l2: f64,
    pub h1_semi: f64,
    pub l4: f64,
    pub linf: f64,
}

pub fn norms(ops: &AssembledOperators, quad: &QuadratureRule, u: &FeFunction) -> Result<Norms> {
    require_degree(quad, 4)?;
    let x = u.dofs(ops)?;
    Ok(Norms {
        l2: ops.mass.quadratic_form(&x).max(0.0).sqrt(),
        h1_semi: ops.stiffness.quadratic_form(&x).max(0.0).sqrt(),
        l4: ops.quartic_integral(&x, quad).max(0.0).powf(0.25),
        linf: x.iter().fold(0.0f64, |m, v| m.max(v.abs())),
    })
}

/// Nodal interpolant: `f` at interior vertices, zero on the boundary.
pub fn interpolate_nodal(mesh: &Arc<Mesh>, f: &ScalarField) -> FeFunction {
    let coeffs = (0..mesh.n_vertices())
        .map(|v| {
            if mesh.is_boundary(v) {
                0.0
            } else {
                f.value(mesh.vertex(v))
            }
        })
        .collect();
    FeFunction {
        mesh: mesh.clone(),
        coeffs,
    }
}

/// Ritz projection: the `w_h` with `(∇w_h, ∇v_h) = (∇u, ∇v_h)` for all
/// discrete `v_h`, the right-hand side integrated with `quad`.
pub fn ritz_project(
    ops: &AssembledOperators,
    u: &ScalarField,
    quad: &QuadratureRule,
    cg: &CgOptions,
) -> Result<FeFunction> {
    require_degree(quad, 2)?;
    if !u.has_gradient() {
        return Err(Error::MissingGradient("ritz projection input"));
    }
    let mesh = ops.mesh();
    let d = mesh.dim();
    let mut rhs = vec![0.0; ops.n_dofs()];
    let mut x = [0.0; 3];
    let mut g = [0.0; 3];
    for e in 0..mesh.n_elements() {
        let ed = ops.element_dofs(e);
        let vol = ops.volume(e);
        for (p, wq) in quad.iter() {
            ops.physical_point(e, p, &mut x);
            u.gradient(&x[..d], &mut g)?;
            for (i, &dof) in ed.iter().enumerate() {
                if dof != NO_DOF {
                    let gi = ops.gradient(e, i);
                    rhs[dof] += vol * wq * (0..d).map(|a| g[a] * gi[a]).sum::<f64>();
                }
            }
        }
    }
    let (sol, _) = cg_solve_strict(&ops.stiffness, &rhs, vec![0.0; rhs.len()], cg)?;
    FeFunction::from_dofs(ops, &sol)
}

/// Discrete Laplacian: `y` with `(y, v_h) = −(∇u, ∇v_h)`, i.e. `M y = −A u`.
pub fn discrete_laplacian(ops: &AssembledOperators, u: &FeFunction, cg: &CgOptions) -> Result<FeFunction> {
    let x = u.dofs(ops)?;
    let rhs: Vec<f64> = ops.stiffness.spmv(&x)?.into_iter().map(|v| -v).collect();
    let (y, _) = cg_solve_strict(&ops.mass, &rhs, vec![0.0; rhs.len()], cg)?;
    FeFunction::from_dofs(ops, &y)
}

/// Errors between a solution and a reference on a (possibly finer) mesh.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CrossMeshError {
    pub e_l2: f64,
    /// Full H¹ norm, `sqrt(L²² + |·|²_{H¹})`.
    pub e_h1: f64,
}

/// Prolongs `coarse_u` onto the mesh of `fine_ref` and measures the
/// difference there. `embedding` maps the coarse vertices into the fine mesh
/// and is checked for consistency.
pub fn cross_mesh_error(
    coarse_u: &FeFunction,
    fine_ref: &FeFunction,
    embedding: &VertexEmbedding,
    fine_ops: &AssembledOperators,
) -> Result<CrossMeshError> {
    embedding.validate(coarse_u.mesh(), fine_ref.mesh())?;
    let prolonged = if same_mesh(coarse_u.mesh(), fine_ref.mesh()) {
        coarse_u.clone()
    } else {
        coarse_u.prolongate(fine_ref.mesh())?
    };
    let a = prolonged.dofs(fine_ops)?;
    let b = fine_ref.dofs(fine_ops)?;
    let diff: Vec<f64> = a.iter().zip(&b).map(|(p, q)| p - q).collect();
    let l2sq = fine_ops.mass.quadratic_form(&diff).max(0.0);
    let h1sq = fine_ops.stiffness.quadratic_form(&diff).max(0.0);
    Ok(CrossMeshError {
        e_l2: l2sq.sqrt(),
        e_h1: (l2sq + h1sq).sqrt(),
    })
}
