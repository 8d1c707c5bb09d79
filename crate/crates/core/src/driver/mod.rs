//! Configuration, presets, single runs, convergence studies, the property
//! check suite and output files.

mod check;
mod config;
mod output;
mod run;
mod study;

pub use check::{
    check_suite, eigenvector_fixed_point, geometry_search, interpolation_excess, CheckEntry, CheckOptions, CheckReport,
    GeometryStats, GEOMETRY, INTERPOLATION, INVARIANTS, SIGN,
};
pub use config::{preset, InitialSpec, Mode, ModeSpec, PotentialSpec, RunConfig, StopSpec, PRESETS};
pub use output::{emit_outputs, summary_json, table_csv, trace_csv, Outputs, TABLE_HEADER, TRACE_HEADER};
pub use run::{build_context, eigs_config, run_config, run_on, EigsReport, RunResult, RunSummary};
pub use study::{
    converge_space, converge_time, halving_orders, ConvergenceRecord, ConvergenceRow, Reference, StudyKind,
};
