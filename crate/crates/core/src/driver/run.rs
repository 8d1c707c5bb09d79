use std::sync::Arc;
use std::time::Instant;

use serde::Serialize;

use super::config::RunConfig;
use crate::eigen::{linearized_operator, smallest_two, EigenOptions, EigenResult};
use crate::error::{Error, Result};
use crate::fem::AssembledOperators;
use crate::flow::{FlowContext, FlowOptions, FlowState, FlowTrace, StopRule};
use crate::mesh::{build_uniform_mesh, Mesh};

/// Scalar results of a flow run, as written to `summary.json`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunSummary {
    pub final_mu: f64,
    pub final_energy: f64,
    pub final_mass: f64,
    pub steps: usize,
    /// The stopping rule was met: horizon reached or residual below tolerance.
    pub converged: bool,
    pub wall_seconds: f64,
    pub config: RunConfig,
}

#[derive(Clone, Debug)]
pub struct RunResult {
    pub state: FlowState,
    pub trace: FlowTrace,
    pub summary: RunSummary,
}

/// Builds the mesh, operators and flow context described by `cfg` with
/// `n` subdivisions.
pub fn build_context(cfg: &RunConfig, n: usize) -> Result<FlowContext> {
    let mesh = Arc::new(build_uniform_mesh(&cfg.domain()?, n));
    context_on(cfg, mesh)
}

pub(crate) fn context_on(cfg: &RunConfig, mesh: Arc<Mesh>) -> Result<FlowContext> {
    let ops = Arc::new(AssembledOperators::new(mesh)?);
    FlowContext::new(
        cfg.problem()?,
        ops,
        cfg.quadrature(),
        FlowOptions {
            cg: cfg.cg_options(),
            ..FlowOptions::default()
        },
    )
}

fn warn_inverse_cfl(mesh: &Mesh, tau: f64) {
    let h4 = mesh.h().powi(4);
    if tau < h4 {
        log::warn!("tau = {tau:e} is below h^4 = {h4:e}");
    }
}

/// Runs the flow on `ctx` with step `tau` under the configured stopping rule.
///
/// A ground-state run that exhausts its step budget is returned with
/// `converged = false` rather than as an error.
pub fn run_on(cfg: &RunConfig, ctx: &FlowContext, tau: f64) -> Result<RunResult> {
    let start = Instant::now();
    let stop = cfg.stop_rule(tau)?;
    warn_inverse_cfl(ctx.ops().mesh(), tau);
    let initial = ctx.initial_state()?;
    let mut last: Option<FlowState> = None;
    let outcome = ctx.run_from(initial, &stop, |s| last = Some(s.clone()));
    let (state, trace, converged) = match outcome {
        Ok((state, trace)) => (state, trace, true),
        Err(Error::NotConverged { trace, residual, .. }) if matches!(stop, StopRule::GroundState { .. }) => {
            log::warn!("ground state not reached: residual {residual:e}");
            let state = last.ok_or(Error::ZeroState)?;
            (state, *trace, false)
        }
        Err(e) => return Err(e),
    };
    let summary = RunSummary {
        final_mu: state.mu,
        final_energy: state.energy,
        final_mass: ctx.l2_norm(state.dofs()),
        steps: state.step,
        converged,
        wall_seconds: start.elapsed().as_secs_f64(),
        config: cfg.clone(),
    };
    Ok(RunResult { state, trace, summary })
}

/// `gpgf run`: one flow run as configured.
pub fn run_config(cfg: &RunConfig) -> Result<RunResult> {
    cfg.validate()?;
    let ctx = build_context(cfg, cfg.n)?;
    run_on(cfg, &ctx, cfg.tau)
}

/// Spectrum of the operator linearized at a computed state.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EigsReport {
    pub lambda1: f64,
    pub lambda2: f64,
    pub gap: f64,
    pub residual1: f64,
    pub residual2: f64,
    pub degenerate: bool,
    /// `μ` of the state the operator was linearized at, when one was computed.
    pub mu: Option<f64>,
}

/// `gpgf eigs`: the two smallest eigenvalues of `−Δ + V + β|φ|²`.
///
/// For `β > 0` the flow is run first as configured and `φ` is its final
/// state; for `β = 0` the operator does not depend on `φ`.
pub fn eigs_config(cfg: &RunConfig) -> Result<(EigsReport, EigenResult)> {
    cfg.validate()?;
    let ctx = build_context(cfg, cfg.n)?;
    let ops = ctx.ops();
    let (phi, mu) = if cfg.beta > 0.0 {
        let r = run_on(cfg, &ctx, cfg.tau)?;
        (r.state.phi.clone(), Some(r.state.mu))
    } else {
        (crate::fem::FeFunction::zero(ops.mesh().clone()), None)
    };
    let l = linearized_operator(ops, cfg.beta, &ctx.problem().potential, &phi, ctx.quadrature())?;
    let eig = smallest_two(&l, &ops.mass, &EigenOptions::default())?;
    let report = EigsReport {
        lambda1: eig.lambda1,
        lambda2: eig.lambda2,
        gap: eig.gap(),
        residual1: eig.residual1,
        residual2: eig.residual2,
        degenerate: eig.degenerate,
        mu,
    };
    Ok((report, eig))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::config::preset;
    use std::f64::consts::PI;

    #[test]
    fn linear1d_run_reaches_ground_state() {
        let cfg = preset("linear1d").unwrap();
        let r = run_config(&cfg).unwrap();
        assert!(r.summary.converged);
        assert!((r.summary.final_mass - 1.0).abs() < 1e-10);
        assert!((r.summary.final_mu - PI * PI).abs() < 0.005 * PI * PI);
    }

    #[test]
    fn exhausted_budget_is_reported_not_raised() {
        let mut cfg = preset("linear1d").unwrap();
        cfg.initial = crate::driver::config::InitialSpec::Custom {
            modes: vec![
                crate::driver::config::ModeSpec {
                    amplitude: 1.0,
                    wavenumbers: vec![1],
                },
                crate::driver::config::ModeSpec {
                    amplitude: 1.0,
                    wavenumbers: vec![3],
                },
            ],
        };
        cfg.stop.as_mut().unwrap().max_steps = 3;
        let r = run_config(&cfg).unwrap();
        assert!(!r.summary.converged);
        assert_eq!(r.summary.steps, 3);
        assert_eq!(r.trace.len(), 3);
    }

    #[test]
    fn eigs_linear_1d() {
        let mut cfg = preset("linear1d").unwrap();
        cfg.mode = crate::driver::config::Mode::Eigs;
        let (report, _) = eigs_config(&cfg).unwrap();
        assert!((report.lambda1 - PI * PI).abs() < 0.005 * PI * PI);
        assert!((report.lambda2 - 4.0 * PI * PI).abs() < 0.005 * 4.0 * PI * PI);
        assert!(report.mu.is_none());
    }
}
