//! The L²-normalized gradient flow and its normalized implicit–explicit
//! discretization.
//!
//! One step from a normalized `φⁿ` solves
//!
//! ```text
//! ((φ̃ − φⁿ)/τ, v) + (∇φ̃, ∇v) = −(Vφⁿ, v) − β((φⁿ)³, v) + μ[φⁿ](φⁿ, v)   ∀ v ∈ S_h
//! ```
//!
//! for `φ̃` and sets `φⁿ⁺¹ = φ̃ / ‖φ̃‖`. In matrix form this is
//! `(M/τ + A) φ̃ = M φⁿ/τ − M_V φⁿ − β b(φⁿ) + μ M φⁿ`, where `M_V` is the
//! potential-weighted mass matrix and `b_i(φ) = ∫ φ³ φ_i`.
//!
//! The `+μ` sign keeps every discrete eigenvector of the linear problem a
//! fixed point of the step; [`MuSign::Minus`] exists only so that this can
//! be checked against the opposite sign.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::fem::{ritz_project, AssembledOperators, FeFunction, QuadratureRule, ScalarField};
use crate::linalg::{cg_solve_strict, CgOptions, SparseMatrix};
use crate::mesh::{BoxDomain, Mesh};

/// Norms at or below this are treated as zero.
pub const ZERO_NORM: f64 = 1e-14;

/// A Gross–Pitaevskii problem: domain, interaction strength, potential and
/// (unnormalized) initial datum.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub domain: BoxDomain,
    pub beta: f64,
    pub potential: ScalarField,
    pub initial: ScalarField,
}

impl ProblemSpec {
    pub fn new(domain: BoxDomain, beta: f64, potential: ScalarField, initial: ScalarField) -> Result<Self> {
        if !beta.is_finite() || beta < 0.0 {
            return Err(Error::Config(format!(
                "beta must be finite and non-negative, got {beta}"
            )));
        }
        Ok(Self {
            domain,
            beta,
            potential,
            initial,
        })
    }

    /// `V = 0`, `β = 0`, lowest sine mode as initial datum.
    pub fn linear(domain: BoxDomain) -> Self {
        let initial = ScalarField::sine_product(&domain);
        Self {
            domain,
            beta: 0.0,
            potential: ScalarField::Zero,
            initial,
        }
    }
}

/// Uniform partition of `[0, t_end]` with step `tau`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TimeGrid {
    pub tau: f64,
    pub t_end: f64,
    pub n_steps: usize,
}

impl TimeGrid {
    /// Requires `t_end` to be an integer multiple of `tau` (to 1e-12 relative).
    pub fn new(tau: f64, t_end: f64) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        if !(t_end.is_finite() && t_end >= tau) {
            return Err(Error::Config(format!("t_end {t_end} must be at least tau {tau}")));
        }
        let n_steps = (t_end / tau).round() as usize;
        if (n_steps as f64 * tau - t_end).abs() > 1e-12 * t_end {
            return Err(Error::Config(format!(
                "t_end {t_end} is not an integer multiple of tau {tau}"
            )));
        }
        Ok(Self { tau, t_end, n_steps })
    }

    /// A grid of exactly `n_steps` steps; `n_steps = 0` is allowed.
    pub fn steps(tau: f64, n_steps: usize) -> Result<Self> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        Ok(Self {
            tau,
            t_end: tau * n_steps as f64,
            n_steps,
        })
    }
}

/// When a flow run stops.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StopRule {
    /// Exactly `n_steps` steps.
    Horizon(TimeGrid),
    /// Until `‖φⁿ⁺¹ − φⁿ‖/τ ≤ residual_tol`, failing after `max_steps`.
    GroundState {
        tau: f64,
        residual_tol: f64,
        max_steps: usize,
    },
}

impl StopRule {
    pub fn tau(&self) -> f64 {
        match self {
            StopRule::Horizon(g) => g.tau,
            StopRule::GroundState { tau, .. } => *tau,
        }
    }
}

/// Sign of the chemical-potential term on the right-hand side.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum MuSign {
    #[default]
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlowOptions {
    pub cg: CgOptions,
    pub mu_sign: MuSign,
}

impl Default for FlowOptions {
    fn default() -> Self {
        Self {
            cg: CgOptions::with_tol(1e-10),
            mu_sign: MuSign::Plus,
        }
    }
}

/// A normalized iterate `φ_hⁿ` with its chemical potential and energy.
#[derive(Clone, Debug)]
pub struct FlowState {
    pub phi: FeFunction,
    pub step: usize,
    pub time: f64,
    pub mu: f64,
    pub energy: f64,
    dofs: Vec<f64>,
}

impl FlowState {
    /// Interior unknowns of `phi`.
    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }
}

/// One row per step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRow {
    pub step: usize,
    pub t: f64,
    pub mu: f64,
    pub energy: f64,
    /// `‖φⁿ⁺¹‖_{L²}`
    pub mass: f64,
    /// `‖φⁿ⁺¹ − φⁿ‖_{L²} / τ`
    pub residual: f64,
    /// `‖φ̃ⁿ⁺¹‖_{L²}`
    pub tilde_norm: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct FlowTrace {
    pub rows: Vec<TraceRow>,
}

impl FlowTrace {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn last(&self) -> Option<&TraceRow> {
        self.rows.last()
    }

    /// `g = ½‖φ_t‖²`, approximated by `½ residual²`.
    pub fn g(&self) -> Vec<f64> {
        self.rows.iter().map(|r| 0.5 * r.residual * r.residual).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepDiagnostics {
    pub tilde_norm: f64,
    pub residual: f64,
    pub cg_iterations: usize,
}

/// Everything needed to evaluate and advance the flow on one mesh.
#[derive(Clone, Debug)]
pub struct FlowContext {
    ops: Arc<AssembledOperators>,
    problem: ProblemSpec,
    quad: QuadratureRule,
    potential_mass: SparseMatrix,
    options: FlowOptions,
}

impl FlowContext {
    pub fn new(
        problem: ProblemSpec,
        ops: Arc<AssembledOperators>,
        quad: QuadratureRule,
        options: FlowOptions,
    ) -> Result<Self> {
        if ops.mesh().domain() != &problem.domain {
            return Err(Error::MeshMismatch("mesh and problem cover different domains".into()));
        }
        if quad.dim() != problem.domain.dim() {
            return Err(Error::DimensionMismatch {
                expected: problem.domain.dim(),
                found: quad.dim(),
            });
        }
        if quad.exactness_degree() < 4 {
            return Err(Error::QuadratureDegree {
                have: quad.exactness_degree(),
                need: 4,
            });
        }
        warn_if_negative_potential(&ops, &problem.potential, &quad);
        let potential_mass = ops.weighted_mass(&problem.potential, &quad)?;
        Ok(Self {
            ops,
            problem,
            quad,
            potential_mass,
            options,
        })
    }

    /// Assembles operators on `mesh` and uses the default quadrature and options.
    pub fn for_mesh(problem: ProblemSpec, mesh: Arc<Mesh>) -> Result<Self> {
        let quad = QuadratureRule::default_for(mesh.dim());
        let ops = Arc::new(AssembledOperators::new(mesh)?);
        Self::new(problem, ops, quad, FlowOptions::default())
    }

    pub fn ops(&self) -> &Arc<AssembledOperators> {
        &self.ops
    }

    pub fn problem(&self) -> &ProblemSpec {
        &self.problem
    }

    pub fn quadrature(&self) -> &QuadratureRule {
        &self.quad
    }

    pub fn options(&self) -> &FlowOptions {
        &self.options
    }

    pub fn set_options(&mut self, options: FlowOptions) {
        self.options = options;
    }

    /// The potential-weighted mass matrix `∫ V φ_i φ_j`.
    pub fn potential_mass(&self) -> &SparseMatrix {
        &self.potential_mass
    }

    /// `μ[φ] = (∫|∇φ|² + V φ² + β φ⁴) / ‖φ‖²` for interior values `x`.
    pub fn chemical_potential_dofs(&self, x: &[f64]) -> Result<f64> {
        let mass = self.ops.mass.quadratic_form(x);
        if mass.max(0.0).sqrt() <= ZERO_NORM {
            return Err(Error::ZeroState);
        }
        let quartic = if self.problem.beta == 0.0 {
            0.0
        } else {
            self.ops.quartic_integral(x, &self.quad)
        };
        Ok(
            (self.ops.stiffness.quadratic_form(x)
                + self.potential_mass.quadratic_form(x)
                + self.problem.beta * quartic)
                / mass,
        )
    }

    pub fn chemical_potential(&self, phi: &FeFunction) -> Result<f64> {
        self.chemical_potential_dofs(&phi.dofs(&self.ops)?)
    }

    /// `E(φ) = ∫ ½|∇φ|² + ½ V φ² + (β/4) φ⁴` for interior values `x`.
    pub fn energy_dofs(&self, x: &[f64]) -> f64 {
        let quartic = if self.problem.beta == 0.0 {
            0.0
        } else {
            self.ops.quartic_integral(x, &self.quad)
        };
        0.5 * self.ops.stiffness.quadratic_form(x)
            + 0.5 * self.potential_mass.quadratic_form(x)
            + 0.25 * self.problem.beta * quartic
    }

    pub fn energy(&self, phi: &FeFunction) -> Result<f64> {
        Ok(self.energy_dofs(&phi.dofs(&self.ops)?))
    }

    /// `‖x‖_{L²}` for interior values `x`.
    pub fn l2_norm(&self, x: &[f64]) -> f64 {
        self.ops.mass.quadratic_form(x).max(0.0).sqrt()
    }

    /// Normalizes `x` and wraps it as a state.
    pub fn state_from_dofs(&self, mut x: Vec<f64>, step: usize, time: f64) -> Result<FlowState> {
        let norm = self.l2_norm(&x);
        if norm <= ZERO_NORM {
            return Err(Error::ZeroState);
        }
        x.iter_mut().for_each(|v| *v /= norm);
        self.wrap(x, step, time)
    }

    fn wrap(&self, x: Vec<f64>, step: usize, time: f64) -> Result<FlowState> {
        let mu = self.chemical_potential_dofs(&x)?;
        let energy = self.energy_dofs(&x);
        Ok(FlowState {
            phi: FeFunction::from_dofs(&self.ops, &x)?,
            step,
            time,
            mu,
            energy,
            dofs: x,
        })
    }

    /// `φ_h⁰ = R_h φ₀ / ‖R_h φ₀‖`.
    pub fn initial_state(&self) -> Result<FlowState> {
        let projected = ritz_project(&self.ops, &self.problem.initial, &self.quad, &self.options.cg)?;
        self.state_from_dofs(projected.dofs(&self.ops)?, 0, 0.0)
    }

    /// Prepares repeated steps of size `tau`.
    pub fn stepper(&self, tau: f64) -> Result<Stepper<'_>> {
        if !(tau.is_finite() && tau > 0.0) {
            return Err(Error::Config(format!("tau must be positive, got {tau}")));
        }
        let system = self.ops.mass.linear_combination(1.0 / tau, &self.ops.stiffness, 1.0)?;
        Ok(Stepper { ctx: self, tau, system })
    }

    /// A single step; see [`Stepper::step`] for repeated use.
    pub fn flow_step(&self, state: &FlowState, tau: f64) -> Result<(FlowState, StepDiagnostics)> {
        self.stepper(tau)?.step(state)
    }

    /// Runs from the initial state.
    pub fn run(&self, stop: &StopRule) -> Result<(FlowState, FlowTrace)> {
        self.run_from(self.initial_state()?, stop, |_| {})
    }

    /// Runs from `initial`, calling `observer` on the initial state and after
    /// every step.
    pub fn run_from(
        &self,
        initial: FlowState,
        stop: &StopRule,
        mut observer: impl FnMut(&FlowState),
    ) -> Result<(FlowState, FlowTrace)> {
        let stepper = self.stepper(stop.tau())?;
        let mut trace = FlowTrace::default();
        let mut state = initial;
        observer(&state);
        match *stop {
            StopRule::Horizon(grid) => {
                for _ in 0..grid.n_steps {
                    let (next, diag) = stepper.step(&state)?;
                    trace.rows.push(self.trace_row(&next, &diag));
                    state = next;
                    observer(&state);
                }
                Ok((state, trace))
            }
            StopRule::GroundState {
                residual_tol,
                max_steps,
                ..
            } => {
                let mut residual = f64::INFINITY;
                while state.step < max_steps {
                    let (next, diag) = stepper.step(&state)?;
                    trace.rows.push(self.trace_row(&next, &diag));
                    residual = diag.residual;
                    state = next;
                    observer(&state);
                    if residual <= residual_tol {
                        return Ok((state, trace));
                    }
                }
                Err(Error::NotConverged {
                    steps: state.step,
                    residual,
                    trace: Box::new(trace),
                })
            }
        }
    }

    fn trace_row(&self, state: &FlowState, diag: &StepDiagnostics) -> TraceRow {
        TraceRow {
            step: state.step,
            t: state.time,
            mu: state.mu,
            energy: state.energy,
            mass: self.l2_norm(state.dofs()),
            residual: diag.residual,
            tilde_norm: diag.tilde_norm,
        }
    }
}

fn warn_if_negative_potential(ops: &AssembledOperators, v: &ScalarField, quad: &QuadratureRule) {
    let d = ops.mesh().dim();
    let mut x = [0.0; 3];
    for e in 0..ops.mesh().n_elements() {
        for (p, _) in quad.iter() {
            ops.physical_point(e, p, &mut x);
            let value = v.value(&x[..d]);
            if value < 0.0 {
                log::warn!("potential is negative ({value:e}) at {:?}", &x[..d]);
                return;
            }
        }
    }
}

/// The step of size `tau` with its system matrix `M/τ + A` assembled once.
pub struct Stepper<'a> {
    ctx: &'a FlowContext,
    tau: f64,
    system: SparseMatrix,
}

impl Stepper<'_> {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn step(&self, state: &FlowState) -> Result<(FlowState, StepDiagnostics)> {
        let ctx = self.ctx;
        let ops = &ctx.ops;
        let phi = state.dofs();
        let beta = ctx.problem.beta;

        let m_phi = ops.mass.spmv(phi)?;
        let v_phi = ctx.potential_mass.spmv(phi)?;
        let mu_term = match ctx.options.mu_sign {
            MuSign::Plus => state.mu,
            MuSign::Minus => -state.mu,
        };
        let mut rhs: Vec<f64> = m_phi
            .iter()
            .zip(&v_phi)
            .map(|(m, v)| m / self.tau - v + mu_term * m)
            .collect();
        if beta != 0.0 {
            for (r, c) in rhs.iter_mut().zip(ops.cubic_load(phi, &ctx.quad)) {
                *r -= beta * c;
            }
        }

        let (tilde, report) = cg_solve_strict(&self.system, &rhs, phi.to_vec(), &ctx.options.cg)?;
        let tilde_norm = ctx.l2_norm(&tilde);
        if !tilde_norm.is_finite() {
            return Err(Error::NonFiniteValue("flow step"));
        }
        if tilde_norm <= ZERO_NORM {
            return Err(Error::ZeroTilde { step: state.step });
        }
        let next: Vec<f64> = tilde.iter().map(|v| v / tilde_norm).collect();
        let diff: Vec<f64> = next.iter().zip(phi).map(|(a, b)| a - b).collect();
        let residual = ctx.l2_norm(&diff) / self.tau;
        let next_state = ctx.wrap(next, state.step + 1, state.time + self.tau)?;
        Ok((
            next_state,
            StepDiagnostics {
                tilde_norm,
                residual,
                cg_iterations: report.iterations,
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::{interpolate_nodal, SineMode};
    use crate::mesh::build_uniform_mesh;
    use std::f64::consts::PI;

    fn linear_1d(n: usize, beta: f64) -> FlowContext {
        let domain = BoxDomain::unit(1).unwrap();
        let mut problem = ProblemSpec::linear(domain.clone());
        problem.beta = beta;
        FlowContext::for_mesh(problem, Arc::new(build_uniform_mesh(&domain, n))).unwrap()
    }

    fn normalized_sine(ctx: &FlowContext) -> Vec<f64> {
        let u = interpolate_nodal(ctx.ops().mesh(), &ScalarField::sine_product(&ctx.problem().domain));
        let x = u.dofs(ctx.ops()).unwrap();
        let n = ctx.l2_norm(&x);
        x.into_iter().map(|v| v / n).collect()
    }

    #[test]
    fn time_grid_validation() {
        let g = TimeGrid::new(1.0 / 90.0, 1.0).unwrap();
        assert_eq!(g.n_steps, 90);
        assert!(TimeGrid::new(0.3, 1.0).is_err());
        assert!(TimeGrid::new(0.0, 1.0).is_err());
        assert!(TimeGrid::new(1.0, 0.5).is_err());
        assert_eq!(TimeGrid::steps(0.1, 0).unwrap().n_steps, 0);
    }

    #[test]
    fn negative_beta_rejected() {
        let d = BoxDomain::unit(1).unwrap();
        assert!(ProblemSpec::new(d, -1.0, ScalarField::Zero, ScalarField::Zero).is_err());
    }

    #[test]
    fn mu_and_energy_of_sine_linear() {
        let ctx = linear_1d(64, 0.0);
        let x = normalized_sine(&ctx);
        let mu = ctx.chemical_potential_dofs(&x).unwrap();
        assert!((mu - PI * PI).abs() < 0.005 * PI * PI);
        let e = ctx.energy_dofs(&x);
        assert!((e - PI * PI / 2.0).abs() < 0.005 * PI * PI / 2.0);
    }

    #[test]
    fn mu_and_energy_of_sine_with_interaction() {
        let ctx = linear_1d(64, 1.0);
        let x = normalized_sine(&ctx);
        let mu = ctx.chemical_potential_dofs(&x).unwrap();
        assert!((mu - (PI * PI + 1.5)).abs() < 0.01 * (PI * PI + 1.5));
        let e = ctx.energy_dofs(&x);
        assert!((e - (PI * PI / 2.0 + 0.375)).abs() < 0.01 * (PI * PI / 2.0 + 0.375));
    }

    #[test]
    fn mu_scaling_matches_direct_reevaluation() {
        let ctx = linear_1d(32, 3.0);
        let x = normalized_sine(&ctx);
        let c = 2.0;
        let scaled: Vec<f64> = x.iter().map(|v| c * v).collect();
        let ops = ctx.ops();
        let expected = (ops.stiffness.quadratic_form(&x)
            + ctx.potential_mass().quadratic_form(&x)
            + c * c * 3.0 * ops.quartic_integral(&x, ctx.quadrature()))
            / ops.mass.quadratic_form(&x);
        let mu = ctx.chemical_potential_dofs(&scaled).unwrap();
        assert!((mu - expected).abs() < 1e-12 * expected);
    }

    #[test]
    fn zero_state_errors() {
        let ctx = linear_1d(8, 1.0);
        assert!(matches!(ctx.chemical_potential_dofs(&[0.0; 7]), Err(Error::ZeroState)));
        assert_eq!(ctx.energy_dofs(&[0.0; 7]), 0.0);

        let domain = BoxDomain::unit(1).unwrap();
        let problem = ProblemSpec::new(domain.clone(), 0.0, ScalarField::Zero, ScalarField::Zero).unwrap();
        let ctx = FlowContext::for_mesh(problem, Arc::new(build_uniform_mesh(&domain, 8))).unwrap();
        assert!(matches!(ctx.initial_state(), Err(Error::ZeroState)));
    }

    #[test]
    fn initial_state_1d_is_normalized_interpolant() {
        let ctx = linear_1d(16, 0.0);
        let s = ctx.initial_state().unwrap();
        let expected = normalized_sine(&ctx);
        for (a, b) in s.dofs().iter().zip(&expected) {
            assert!((a - b).abs() < 1e-9);
        }
        assert!((ctx.l2_norm(s.dofs()) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_preserves_mass_for_arbitrary_state() {
        let domain = BoxDomain::unit(2).unwrap();
        let problem = ProblemSpec::new(
            domain.clone(),
            10.0,
            ScalarField::Harmonic,
            ScalarField::sine_series(
                &domain,
                vec![
                    SineMode {
                        amplitude: 1.0,
                        wavenumbers: vec![1, 1],
                    },
                    SineMode {
                        amplitude: 0.7,
                        wavenumbers: vec![2, 3],
                    },
                ],
            ),
        )
        .unwrap();
        let ctx = FlowContext::for_mesh(problem, Arc::new(build_uniform_mesh(&domain, 6))).unwrap();
        let s0 = ctx.initial_state().unwrap();
        for tau in [1e-3, 0.1, 10.0] {
            let (s1, diag) = ctx.flow_step(&s0, tau).unwrap();
            assert!((ctx.l2_norm(s1.dofs()) - 1.0).abs() < 1e-10);
            assert!(diag.tilde_norm > 0.0);
            assert_eq!(s1.step, 1);
        }
    }

    #[test]
    fn horizon_with_zero_steps_returns_initial_state() {
        let ctx = linear_1d(8, 0.0);
        let init = ctx.initial_state().unwrap();
        let (s, trace) = ctx
            .run_from(
                init.clone(),
                &StopRule::Horizon(TimeGrid::steps(0.1, 0).unwrap()),
                |_| {},
            )
            .unwrap();
        assert!(trace.is_empty());
        assert_eq!(s.dofs(), init.dofs());
    }

    #[test]
    fn ground_state_mode_reports_non_convergence() {
        let ctx = linear_1d(8, 0.0);
        let domain = BoxDomain::unit(1).unwrap();
        let mixed = ScalarField::sine_series(
            &domain,
            vec![
                SineMode {
                    amplitude: 1.0,
                    wavenumbers: vec![1],
                },
                SineMode {
                    amplitude: 1.0,
                    wavenumbers: vec![2],
                },
            ],
        );
        let mut problem = ctx.problem().clone();
        problem.initial = mixed;
        let ctx = FlowContext::for_mesh(problem, ctx.ops().mesh().clone()).unwrap();
        let stop = StopRule::GroundState {
            tau: 1e-3,
            residual_tol: 1e-12,
            max_steps: 5,
        };
        match ctx.run(&stop) {
            Err(Error::NotConverged { steps, trace, .. }) => {
                assert_eq!(steps, 5);
                assert_eq!(trace.len(), 5);
            }
            other => panic!("expected NotConverged, got {other:?}"),
        }
    }
}
