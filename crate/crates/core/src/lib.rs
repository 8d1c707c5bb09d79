//! Ground states of the Gross–Pitaevskii eigenvalue problem by the
//! L²-normalized gradient flow.
//!
//! The flow `φ_t = Δφ − Vφ − β|φ|²φ + μ[φ]φ` is discretized with a
//! backward–forward Euler step (implicit Laplacian, explicit potential,
//! nonlinearity and chemical potential) followed by renormalization in L²,
//! and with continuous P1 finite elements on structured simplicial meshes
//! of axis-aligned boxes.
//!
//! Module map:
//!
//! - [`mesh`]: Kuhn/Freudenthal meshes in 1–3 dimensions, uniform refinement
//!   and point location.
//! - [`linalg`]: CSR matrices and preconditioned conjugate gradients.
//! - [`fem`]: quadrature, assembly, norms, Ritz projection, discrete Laplacian.
//! - [`flow`]: chemical potential, energy and the normalized time stepping.
//! - [`eigen`]: the linearized operator and its two smallest eigenpairs,
//!   plus exponential decay-rate fitting.
//! - [`driver`]: configuration, presets, convergence studies, the property
//!   check suite and CSV/JSON output.

#![allow(clippy::needless_range_loop)]

pub mod driver;
pub mod eigen;
pub mod error;
pub mod fem;
pub mod flow;
pub mod linalg;
pub mod mesh;

pub use eigen::{EigenOptions, EigenResult, TimeSeries};
pub use error::{Error, Result};
pub use fem::{AssembledOperators, FeFunction, QuadratureRule, ScalarField};
pub use flow::{FlowContext, FlowOptions, FlowState, FlowTrace, ProblemSpec, StopRule, TimeGrid};
pub use linalg::{CgOptions, Preconditioner, SolveReport, SparseMatrix};
pub use mesh::{BoxDomain, Mesh, VertexEmbedding};
