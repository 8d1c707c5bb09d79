use std::fs;
use std::path::Path;

use gpgf_core::driver::{
    converge_time, emit_outputs, preset, run_config, Outputs, RunConfig, PRESETS, TABLE_HEADER, TRACE_HEADER,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

fn small_example1() -> RunConfig {
    let mut cfg = preset("example1").unwrap();
    cfg.n = 4;
    cfg.t_end = Some(0.2);
    cfg
}

fn write_run(cfg: &RunConfig, dir: &Path) {
    let run = run_config(cfg).unwrap();
    emit_outputs(
        &Outputs {
            trace: Some(&run.trace),
            table: None,
            summary: Some(&run.summary),
        },
        dir,
    )
    .unwrap();
}

fn summary_without_clock(dir: &Path) -> Value {
    let mut v: Value = serde_json::from_str(&fs::read_to_string(dir.join("summary.json")).unwrap()).unwrap();
    v.as_object_mut().unwrap().remove("wall_seconds");
    v
}

#[test]
fn repeated_runs_write_identical_files() {
    let cfg = small_example1();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_run(&cfg, a.path());
    write_run(&cfg, b.path());
    assert_eq!(
        fs::read(a.path().join("trace.csv")).unwrap(),
        fs::read(b.path().join("trace.csv")).unwrap()
    );
    assert_eq!(summary_without_clock(a.path()), summary_without_clock(b.path()));
}

#[test]
fn summary_has_expected_keys_and_echoes_config() {
    let cfg = small_example1();
    let dir = tempfile::tempdir().unwrap();
    write_run(&cfg, dir.path());
    let v = summary_without_clock(dir.path());
    for key in ["final_mu", "final_energy", "final_mass", "steps", "converged", "config"] {
        assert!(v.get(key).is_some(), "missing {key}");
    }
    assert_eq!(v["steps"], 18);
    assert_eq!(v["converged"], true);
    assert!((v["final_mass"].as_f64().unwrap() - 1.0).abs() < 1e-12);
    let echoed = RunConfig::from_json(&v["config"].to_string()).unwrap();
    assert_eq!(echoed, cfg);
}

#[test]
fn trace_has_one_row_per_step() {
    let cfg = small_example1();
    let dir = tempfile::tempdir().unwrap();
    write_run(&cfg, dir.path());
    let text = fs::read_to_string(dir.path().join("trace.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], TRACE_HEADER);
    assert_eq!(lines.len(), 1 + 18);
    for (k, line) in lines[1..].iter().enumerate() {
        let cols: Vec<&str> = line.split(',').collect();
        assert_eq!(cols.len(), 7);
        assert_eq!(cols[0], (k + 1).to_string());
        assert!(cols[1..].iter().all(|c| c.parse::<f64>().unwrap().is_finite()));
    }
}

#[test]
fn table_has_one_row_per_tau() {
    let mut cfg = small_example1();
    cfg.n = 3;
    let taus = [0.05, 0.025, 0.0125, 0.00625];
    let rec = converge_time(&cfg, &taus, 1e-3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    emit_outputs(
        &Outputs {
            table: Some(&rec),
            ..Outputs::default()
        },
        dir.path(),
    )
    .unwrap();
    let text = fs::read_to_string(dir.path().join("table.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], TABLE_HEADER);
    assert_eq!(lines.len(), 1 + taus.len());
    assert_eq!(lines[1].split(',').nth(3), Some(""));
    for (line, tau) in lines[1..].iter().zip(taus) {
        assert_eq!(line.split(',').next().unwrap().parse::<f64>().unwrap(), tau);
    }
    assert!(!dir.path().join("trace.csv").exists());
}

#[test]
fn preset_fields_are_finite() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for name in PRESETS {
        let cfg = preset(name).unwrap();
        let domain = cfg.domain().unwrap();
        let v = cfg.potential_field();
        let u0 = cfg.initial_field(&domain);
        let mut x = vec![0.0; cfg.dim];
        for _ in 0..1_000_000 {
            for (a, xa) in x.iter_mut().enumerate() {
                *xa = rng.gen_range(domain.lower()[a]..=domain.upper()[a]);
            }
            assert!(v.value(&x).is_finite() && u0.value(&x).is_finite(), "{name} at {x:?}");
        }
    }
}

#[test]
fn presets_survive_json_round_trip() {
    for name in PRESETS {
        let cfg = preset(name).unwrap();
        assert_eq!(RunConfig::from_json(&cfg.to_json().unwrap()).unwrap(), cfg);
    }
}

#[test]
fn config_errors_are_classified() {
    let bad = [
        r#"{"dim": 4, "n": 4, "tau": 0.1, "t_end": 1, "beta": 1, "potential": "harmonic", "initial": "polynomial_bump", "mode": "run"}"#,
        r#"{"dim": 2, "n": 4, "tau": 0.1, "beta": 1, "potential": "harmonic", "initial": "polynomial_bump", "mode": "run"}"#,
        r#"{"dim": 2, "n": 4, "tau": 0.1, "t_end": 1, "beta": -1, "potential": "harmonic", "initial": "polynomial_bump", "mode": "run"}"#,
        r#"{"dim": 2, "n": 4, "tau": 0.1, "t_end": 1, "beta": 1, "potential": "harmonic", "initial": "polynomial_bump", "mode": "run", "extra": 0}"#,
    ];
    for text in bad {
        let err = RunConfig::from_json(text).and_then(|c| c.validate().and(c.problem().map(|_| ())));
        assert!(err.unwrap_err().is_config_error(), "{text}");
    }
}
