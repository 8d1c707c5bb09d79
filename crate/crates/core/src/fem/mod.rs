//! P1 finite elements on [`Mesh`](crate::mesh::Mesh)es: quadrature,
//! assembly of the mass, stiffness and weighted mass matrices, norms,
//! nodal interpolation, the Ritz projection and the discrete Laplacian.
//!
//! Unknowns live on interior vertices only (homogeneous Dirichlet data).
//! Nonlinear and weighted terms are integrated with a Grundmann–Möller rule
//! of degree 5, which is exact for the P1 quartics `|u_h|⁴` and `u_h³ v_h`.

mod assembly;
mod field;
mod function;
mod quadrature;

pub use assembly::{
    assemble_mass, assemble_mass_unreduced, assemble_stiffness, assemble_stiffness_unreduced, assemble_weighted_mass,
    load_vector, AssembledOperators, DofMap, NO_DOF,
};
pub use field::{CustomField, FieldKind, ScalarField, SineMode, UnitFrame};
pub use function::{
    cross_mesh_error, discrete_laplacian, interpolate_nodal, norms, ritz_project, CrossMeshError, FeFunction, Norms,
};
pub use quadrature::QuadratureRule;

pub(crate) use assembly::require_degree;
