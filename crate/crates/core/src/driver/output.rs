use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::run::RunSummary;
use super::study::ConvergenceRecord;
use crate::error::Result;
use crate::flow::FlowTrace;

pub const TRACE_HEADER: &str = "step,t,mu,energy,mass,residual,tilde_norm";
pub const TABLE_HEADER: &str = "tau,h,e_l2,order_l2,e_h1,order_h1";

/// Whatever a command produced; absent parts are not written.
#[derive(Clone, Copy, Debug, Default)]
pub struct Outputs<'a> {
    pub trace: Option<&'a FlowTrace>,
    pub table: Option<&'a ConvergenceRecord>,
    pub summary: Option<&'a RunSummary>,
}

/// Seventeen significant digits.
fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

pub fn trace_csv(trace: &FlowTrace) -> String {
    let mut out = String::with_capacity(64 * (trace.len() + 1));
    out.push_str(TRACE_HEADER);
    out.push('\n');
    for r in &trace.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.step,
            num(r.t),
            num(r.mu),
            num(r.energy),
            num(r.mass),
            num(r.residual),
            num(r.tilde_norm)
        );
    }
    out
}

pub fn table_csv(record: &ConvergenceRecord) -> String {
    let mut out = String::from(TABLE_HEADER);
    out.push('\n');
    for r in &record.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            num(r.tau),
            num(r.h),
            opt(r.e_l2),
            opt(r.order_l2),
            opt(r.e_h1),
            opt(r.order_h1)
        );
    }
    out
}

pub fn summary_json(summary: &RunSummary) -> Result<String> {
    let mut text = serde_json::to_string_pretty(summary)?;
    text.push('\n');
    Ok(text)
}

/// Writes `trace.csv`, `table.csv` and `summary.json` into `dir`, creating
/// it if needed. Returns the paths written.
pub fn emit_outputs(outputs: &Outputs<'_>, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut written = Vec::new();
    let mut put = |name: &str, body: String| -> Result<()> {
        let path = dir.join(name);
        fs::write(&path, body)?;
        written.push(path);
        Ok(())
    };
    if let Some(trace) = outputs.trace {
        put("trace.csv", trace_csv(trace))?;
    }
    if let Some(table) = outputs.table {
        put("table.csv", table_csv(table))?;
    }
    if let Some(summary) = outputs.summary {
        put("summary.json", summary_json(summary)?)?;
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::driver::study::{halving_orders, ConvergenceRow, Reference, StudyKind};

    #[test]
    fn empty_trace_is_header_only() {
        let dir = tempfile::tempdir().unwrap();
        let trace = FlowTrace::default();
        emit_outputs(
            &Outputs {
                trace: Some(&trace),
                ..Outputs::default()
            },
            dir.path(),
        )
        .unwrap();
        let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
        assert_eq!(text, format!("{TRACE_HEADER}\n"));
        assert!(!dir.path().join("table.csv").exists());
    }

    #[test]
    fn table_rows_and_blank_first_orders() {
        let errs = [Some(0.1), Some(0.05), Some(0.025)];
        let orders = halving_orders(&errs);
        let rows = errs
            .iter()
            .zip(&orders)
            .enumerate()
            .map(|(k, (e, o))| ConvergenceRow {
                tau: 0.1 / 2f64.powi(k as i32),
                h: 0.5,
                e_l2: *e,
                order_l2: *o,
                e_h1: *e,
                order_h1: *o,
                failure: None,
            })
            .collect();
        let rec = ConvergenceRecord {
            kind: StudyKind::Time,
            reference: Reference { tau: 1e-3, h: 0.5 },
            rows,
        };
        let text = table_csv(&rec);
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], TABLE_HEADER);
        assert_eq!(lines.len(), 4);
        assert!(lines[1].ends_with(",,1.0000000000000001e-1,"));
        assert_eq!(lines[2].split(',').nth(3).unwrap(), "1.0000000000000000e0");
    }

    #[test]
    fn number_format_has_17_digits() {
        assert_eq!(num(1.0 / 3.0), "3.3333333333333331e-1");
        let back: f64 = num(0.1 + 0.2).parse().unwrap();
        assert_eq!(back, 0.1 + 0.2);
    }
}
