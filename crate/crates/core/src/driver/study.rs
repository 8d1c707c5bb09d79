use std::sync::Arc;

use rayon::prelude::*;
use serde::Serialize;

use super::config::RunConfig;
use super::run::{context_on, run_on};
use crate::error::{Error, Result};
use crate::fem::{cross_mesh_error, FeFunction};
use crate::mesh::{build_uniform_mesh, refine_uniform, Mesh, VertexEmbedding};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum StudyKind {
    Time,
    Space,
}

/// One study run and its errors against the reference solution.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub tau: f64,
    pub h: f64,
    pub e_l2: Option<f64>,
    pub order_l2: Option<f64>,
    pub e_h1: Option<f64>,
    pub order_h1: Option<f64>,
    /// Why the run failed, if it did.
    pub failure: Option<String>,
}

/// The reference solution's discretization parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Reference {
    pub tau: f64,
    pub h: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConvergenceRecord {
    pub kind: StudyKind,
    pub reference: Reference,
    /// Coarse to fine: by `tau`, then `h`, both descending.
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceRecord {
    pub fn orders_l2(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order_l2).collect()
    }

    pub fn orders_h1(&self) -> Vec<f64> {
        self.rows.iter().filter_map(|r| r.order_h1).collect()
    }

    pub fn failed(&self) -> bool {
        self.rows.iter().any(|r| r.failure.is_some())
    }
}

/// `log₂(coarse / fine)` for consecutive pairs; the first entry is `None`.
pub fn halving_orders(errors: &[Option<f64>]) -> Vec<Option<f64>> {
    let mut out = vec![None; errors.len()];
    for k in 1..errors.len() {
        if let (Some(c), Some(f)) = (errors[k - 1], errors[k]) {
            if c > 0.0 && f > 0.0 {
                out[k] = Some((c / f).log2());
            }
        }
    }
    out
}

fn assemble_record(kind: StudyKind, reference: Reference, mut rows: Vec<ConvergenceRow>) -> ConvergenceRecord {
    rows.sort_by(|a, b| b.tau.total_cmp(&a.tau).then(b.h.total_cmp(&a.h)));
    let l2: Vec<Option<f64>> = rows.iter().map(|r| r.e_l2).collect();
    let h1: Vec<Option<f64>> = rows.iter().map(|r| r.e_h1).collect();
    for (row, (o2, o1)) in rows
        .iter_mut()
        .zip(halving_orders(&l2).into_iter().zip(halving_orders(&h1)))
    {
        row.order_l2 = o2;
        row.order_h1 = o1;
    }
    ConvergenceRecord { kind, reference, rows }
}

fn failed_row(tau: f64, h: f64, e: &Error) -> ConvergenceRow {
    ConvergenceRow {
        tau,
        h,
        e_l2: None,
        order_l2: None,
        e_h1: None,
        order_h1: None,
        failure: Some(e.to_string()),
    }
}

/// Temporal study on one mesh: every `tau` in `taus` and `tau_ref` are run
/// to the configured horizon and compared at the final time.
pub fn converge_time(cfg: &RunConfig, taus: &[f64], tau_ref: f64) -> Result<ConvergenceRecord> {
    cfg.validate()?;
    if taus.is_empty() {
        return Err(Error::Config("tau list is empty".into()));
    }
    if taus.iter().any(|&t| !(t.is_finite() && t > 0.0 && tau_ref < t)) {
        return Err(Error::Config(format!(
            "tau_ref {tau_ref} must be below every study tau"
        )));
    }
    if cfg.t_end.is_none() {
        return Err(Error::Config("a temporal study needs t_end".into()));
    }
    let ctx = super::run::build_context(cfg, cfg.n)?;
    let h = ctx.ops().mesh().h();
    let reference = run_on(cfg, &ctx, tau_ref)?.state.phi;
    let identity = VertexEmbedding::identity(ctx.ops().mesh().n_vertices());

    let rows: Vec<ConvergenceRow> = taus
        .par_iter()
        .map(|&tau| {
            let outcome =
                run_on(cfg, &ctx, tau).and_then(|r| cross_mesh_error(&r.state.phi, &reference, &identity, ctx.ops()));
            match outcome {
                Ok(err) => ConvergenceRow {
                    tau,
                    h,
                    e_l2: Some(err.e_l2),
                    order_l2: None,
                    e_h1: Some(err.e_h1),
                    order_h1: None,
                    failure: None,
                },
                Err(e) => failed_row(tau, h, &e),
            }
        })
        .collect();
    Ok(assemble_record(StudyKind::Time, Reference { tau: tau_ref, h }, rows))
}

/// Spatial study at fixed `tau`: meshes `n, 2n, …, 2^{levels−1} n` against
/// the reference mesh `2^{levels} n`.
pub fn converge_space(cfg: &RunConfig, levels: usize, tau: f64) -> Result<ConvergenceRecord> {
    cfg.validate()?;
    if levels < 2 {
        return Err(Error::Config(format!(
            "a spatial study needs at least 2 levels, got {levels}"
        )));
    }
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::Config(format!("tau must be positive, got {tau}")));
    }
    cfg.stop_rule(tau)?;

    let mut meshes = vec![Arc::new(build_uniform_mesh(&cfg.domain()?, cfg.n))];
    let mut steps: Vec<VertexEmbedding> = Vec::new();
    for k in 0..levels {
        let (fine, emb) = refine_uniform(&meshes[k]);
        meshes.push(Arc::new(fine));
        steps.push(emb);
    }
    // Embedding of each study mesh into the reference mesh.
    let mut to_reference: Vec<VertexEmbedding> = Vec::with_capacity(levels);
    for k in 0..levels {
        let mut chained = steps[k].clone();
        for next in &steps[k + 1..] {
            chained = chained.then(next)?;
        }
        to_reference.push(chained);
    }

    let solve = |mesh: &Arc<Mesh>| -> Result<(FeFunction, Arc<crate::fem::AssembledOperators>)> {
        let ctx = context_on(cfg, mesh.clone())?;
        let state = run_on(cfg, &ctx, tau)?.state;
        Ok((state.phi, ctx.ops().clone()))
    };
    let reference_mesh = &meshes[levels];
    let (reference, reference_ops) = solve(reference_mesh)?;

    let rows: Vec<ConvergenceRow> = (0..levels)
        .into_par_iter()
        .map(|k| {
            let h = meshes[k].h();
            let outcome = solve(&meshes[k])
                .and_then(|(phi, _)| cross_mesh_error(&phi, &reference, &to_reference[k], &reference_ops));
            match outcome {
                Ok(err) => ConvergenceRow {
                    tau,
                    h,
                    e_l2: Some(err.e_l2),
                    order_l2: None,
                    e_h1: Some(err.e_h1),
                    order_h1: None,
                    failure: None,
                },
                Err(e) => failed_row(tau, h, &e),
            }
        })
        .collect();
    Ok(assemble_record(
        StudyKind::Space,
        Reference {
            tau,
            h: reference_mesh.h(),
        },
        rows,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::config::preset;

    #[test]
    fn orders_of_synthetic_sequences_are_exact() {
        for p in [1.0, 2.0, 0.5] {
            let errors: Vec<Option<f64>> = (0..5).map(|k| Some(3.0 * 2f64.powf(-p * k as f64))).collect();
            let orders = halving_orders(&errors);
            assert!(orders[0].is_none());
            for o in &orders[1..] {
                assert!((o.unwrap() - p).abs() < 1e-12);
            }
        }
        let gaps = halving_orders(&[Some(1.0), None, Some(0.25)]);
        assert_eq!(gaps, vec![None, None, None]);
    }

    #[test]
    fn linear_1d_time_study_is_first_order() {
        let mut cfg = preset("linear1d").unwrap();
        cfg.n = 32;
        cfg.stop = None;
        cfg.t_end = Some(0.1);
        cfg.initial = crate::driver::config::InitialSpec::Custom {
            modes: vec![
                crate::driver::config::ModeSpec {
                    amplitude: 1.0,
                    wavenumbers: vec![1],
                },
                crate::driver::config::ModeSpec {
                    amplitude: 0.5,
                    wavenumbers: vec![2],
                },
            ],
        };
        let rec = converge_time(&cfg, &[0.01, 0.005, 0.0025], 1e-4).unwrap();
        assert_eq!(rec.rows.len(), 3);
        assert!(rec.rows[0].order_l2.is_none());
        for o in rec.orders_l2() {
            assert!((o - 1.0).abs() <= 0.1, "order {o}");
        }
    }

    #[test]
    fn linear_1d_space_study_is_second_order() {
        let mut cfg = preset("linear1d").unwrap();
        cfg.n = 8;
        cfg.stop = None;
        cfg.t_end = Some(0.05);
        let rec = converge_space(&cfg, 3, 0.01).unwrap();
        assert_eq!(rec.rows.len(), 3);
        assert!(rec.rows.windows(2).all(|w| w[0].h > w[1].h));
        assert!((rec.reference.h - 1.0 / 64.0).abs() < 1e-15);
        for o in rec.orders_l2() {
            assert!((o - 2.0).abs() <= 0.2, "order {o}");
        }
    }

    #[test]
    fn rejects_bad_study_parameters() {
        let cfg = preset("example1").unwrap();
        assert!(converge_time(&cfg, &[0.1], 0.2).unwrap_err().is_config_error());
        assert!(converge_space(&cfg, 1, 0.1).unwrap_err().is_config_error());
    }
}
