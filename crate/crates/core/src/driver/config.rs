use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fem::{QuadratureRule, ScalarField, SineMode};
use crate::flow::{ProblemSpec, StopRule, TimeGrid};
use crate::linalg::CgOptions;
use crate::mesh::BoxDomain;

/// What the CLI does with a configuration.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    #[default]
    Run,
    #[serde(alias = "converge-time")]
    ConvergeTime,
    #[serde(alias = "converge-space")]
    ConvergeSpace,
    Eigs,
    Check,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    Zero,
    Harmonic,
    Lattice,
    /// `Σ_k c_k |x|^{2k}`
    Custom {
        coefficients: Vec<f64>,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModeSpec {
    pub amplitude: f64,
    pub wavenumbers: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    PolynomialBump,
    SineProduct,
    /// A finite sine series on the box.
    Custom {
        modes: Vec<ModeSpec>,
    },
}

/// Ground-state stopping rule.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StopSpec {
    #[serde(default = "default_residual_tol")]
    pub residual_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps: usize,
}

fn default_residual_tol() -> f64 {
    1e-8
}

fn default_max_steps() -> usize {
    1_000_000
}

fn default_solver_tol() -> f64 {
    1e-10
}

fn default_quadrature_degree() -> usize {
    4
}

/// A complete run description, read from JSON.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    pub n: usize,
    pub tau: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_end: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stop: Option<StopSpec>,
    pub beta: f64,
    pub potential: PotentialSpec,
    pub initial: InitialSpec,
    #[serde(default = "default_solver_tol")]
    pub solver_tol: f64,
    #[serde(default = "default_quadrature_degree")]
    pub quadrature_degree: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub mode: Mode,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: impl AsRef<std::path::Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if !(1..=3).contains(&self.dim) {
            return bad(format!("dim must be 1, 2 or 3, got {}", self.dim));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.tau.is_finite() && self.tau > 0.0) {
            return bad(format!("tau must be positive and finite, got {}", self.tau));
        }
        if !(self.beta.is_finite() && self.beta >= 0.0) {
            return bad(format!("beta must be finite and non-negative, got {}", self.beta));
        }
        if !(self.solver_tol.is_finite() && self.solver_tol > 0.0) {
            return bad(format!("solver_tol must be positive, got {}", self.solver_tol));
        }
        if self.quadrature_degree < 4 {
            return bad(format!(
                "quadrature_degree must be at least 4, got {}",
                self.quadrature_degree
            ));
        }
        match (self.t_end, self.stop) {
            (Some(_), Some(_)) => return bad("give either t_end or stop, not both".into()),
            (None, None) if matches!(self.mode, Mode::Run | Mode::ConvergeTime | Mode::ConvergeSpace) => {
                return bad("t_end or stop is required".into())
            }
            (Some(t), None) => {
                TimeGrid::new(self.tau, t)?;
            }
            (None, Some(s)) => {
                if !(s.residual_tol.is_finite() && s.residual_tol > 0.0) {
                    return bad(format!("stop.residual_tol must be positive, got {}", s.residual_tol));
                }
            }
            (None, None) => {}
        }
        if let PotentialSpec::Custom { coefficients } = &self.potential {
            if coefficients.iter().any(|c| !c.is_finite()) {
                return bad("potential coefficients must be finite".into());
            }
        }
        if let InitialSpec::Custom { modes } = &self.initial {
            if modes.is_empty() {
                return bad("initial.custom.modes must not be empty".into());
            }
            for m in modes {
                if !m.amplitude.is_finite() || m.wavenumbers.len() != self.dim {
                    return bad(format!("invalid initial mode {m:?}"));
                }
            }
        }
        self.domain()?;
        Ok(())
    }

    pub fn domain(&self) -> Result<BoxDomain> {
        let lower = self.lower.clone().unwrap_or_else(|| vec![0.0; self.dim]);
        let upper = self.upper.clone().unwrap_or_else(|| vec![1.0; self.dim]);
        if lower.len() != self.dim || upper.len() != self.dim {
            return Err(Error::Config(format!("box bounds must have {} entries", self.dim)));
        }
        if lower.iter().chain(&upper).any(|v| !v.is_finite()) {
            return Err(Error::Config("box bounds must be finite".into()));
        }
        BoxDomain::new(lower, upper)
    }

    pub fn potential_field(&self) -> ScalarField {
        match &self.potential {
            PotentialSpec::Zero => ScalarField::Zero,
            PotentialSpec::Harmonic => ScalarField::Harmonic,
            PotentialSpec::Lattice => ScalarField::lattice(),
            PotentialSpec::Custom { coefficients } => ScalarField::RadialPolynomial(coefficients.clone()),
        }
    }

    pub fn initial_field(&self, domain: &BoxDomain) -> ScalarField {
        match &self.initial {
            InitialSpec::PolynomialBump => ScalarField::polynomial_bump(domain),
            InitialSpec::SineProduct => ScalarField::sine_product(domain),
            InitialSpec::Custom { modes } => ScalarField::sine_series(
                domain,
                modes
                    .iter()
                    .map(|m| SineMode {
                        amplitude: m.amplitude,
                        wavenumbers: m.wavenumbers.clone(),
                    })
                    .collect(),
            ),
        }
    }

    pub fn problem(&self) -> Result<ProblemSpec> {
        let domain = self.domain()?;
        let initial = self.initial_field(&domain);
        ProblemSpec::new(domain, self.beta, self.potential_field(), initial)
    }

    pub fn quadrature(&self) -> QuadratureRule {
        QuadratureRule::with_degree(self.dim, self.quadrature_degree)
    }

    pub fn cg_options(&self) -> CgOptions {
        CgOptions::with_tol(self.solver_tol)
    }

    /// The stopping rule at step size `tau`.
    pub fn stop_rule(&self, tau: f64) -> Result<StopRule> {
        match (self.t_end, self.stop) {
            (_, Some(s)) => Ok(StopRule::GroundState {
                tau,
                residual_tol: s.residual_tol,
                max_steps: s.max_steps,
            }),
            (Some(t), None) => Ok(StopRule::Horizon(TimeGrid::new(tau, t)?)),
            (None, None) => Err(Error::Config("t_end or stop is required".into())),
        }
    }
}

/// Built-in configurations.
pub fn preset(name: &str) -> Result<RunConfig> {
    let base = RunConfig {
        dim: 3,
        lower: None,
        upper: None,
        n: 8,
        tau: 1.0 / 90.0,
        t_end: Some(1.0),
        stop: None,
        beta: 10.0,
        potential: PotentialSpec::Harmonic,
        initial: InitialSpec::PolynomialBump,
        solver_tol: default_solver_tol(),
        quadrature_degree: default_quadrature_degree(),
        out_dir: None,
        mode: Mode::Run,
    };
    let cfg = match name {
        "example1" => base,
        "example2" => RunConfig {
            tau: 1.0 / 70.0,
            potential: PotentialSpec::Lattice,
            ..base
        },
        "linear1d" => RunConfig {
            dim: 1,
            n: 64,
            tau: 1e-3,
            t_end: None,
            stop: Some(StopSpec {
                residual_tol: default_residual_tol(),
                max_steps: 100_000,
            }),
            beta: 0.0,
            potential: PotentialSpec::Zero,
            initial: InitialSpec::SineProduct,
            ..base
        },
        "linear3d" => RunConfig {
            tau: 1e-2,
            beta: 0.0,
            potential: PotentialSpec::Zero,
            initial: InitialSpec::SineProduct,
            mode: Mode::Eigs,
            ..base
        },
        other => return Err(Error::UnknownPreset(other.to_string())),
    };
    Ok(cfg)
}

pub const PRESETS: [&str; 4] = ["example1", "example2", "linear1d", "linear3d"];

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fem::FieldKind;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let cfg = preset(name).unwrap();
            cfg.validate().unwrap();
            let back = RunConfig::from_json(&cfg.to_json().unwrap()).unwrap();
            assert_eq!(back, cfg);
        }
        assert!(matches!(preset("example3"), Err(Error::UnknownPreset(_))));
    }

    #[test]
    fn preset_contents() {
        let e1 = preset("example1").unwrap();
        assert_eq!(e1.beta, 10.0);
        assert_eq!(e1.potential, PotentialSpec::Harmonic);
        assert_eq!(e1.t_end, Some(1.0));
        let e2 = preset("example2").unwrap();
        let v = e2.potential_field();
        assert_eq!(v.kind(), FieldKind::Lattice);
        assert!((v.value(&[0.0, 0.0, 0.0]) - 20.0).abs() < 1e-15);
        let l1 = preset("linear1d").unwrap();
        assert_eq!((l1.dim, l1.beta), (1, 0.0));
        assert_eq!(l1.potential, PotentialSpec::Zero);
        assert_eq!(l1.initial, InitialSpec::SineProduct);
    }

    #[test]
    fn json_shape() {
        let text = r#"{
            "dim": 2, "n": 4, "tau": 0.01, "t_end": 0.1, "beta": 1.0,
            "potential": {"custom": {"coefficients": [0.0, 0.5]}},
            "initial": {"custom": {"modes": [{"amplitude": 1.0, "wavenumbers": [1, 2]}]}},
            "mode": "converge-time"
        }"#;
        let cfg = RunConfig::from_json(text).unwrap();
        assert_eq!(cfg.mode, Mode::ConvergeTime);
        assert_eq!(cfg.solver_tol, 1e-10);
        assert_eq!(cfg.domain().unwrap(), BoxDomain::unit(2).unwrap());
        assert_eq!(cfg.potential_field().value(&[1.0, 1.0]), 1.0);
    }

    #[test]
    fn rejects_bad_configs() {
        let ok = preset("example1").unwrap();
        let cases = [
            r#"{"dim": 3, "n": 8, "tau": 0.1, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product", "extra": 1}"#,
            r#"{"dim": 3, "n": 1, "tau": 0.1, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 3, "n": 8, "tau": -0.1, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 3, "n": 8, "tau": 0.3, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 3, "n": 8, "tau": 0.1, "beta": 1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 4, "n": 8, "tau": 0.1, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 1, "n": 8, "tau": 0.1, "t_end": 1.0, "beta": -1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 1, "n": 8, "tau": 0.1, "t_end": 1.0, "beta": 1.0, "potential": "cubic", "initial": "sine_product"}"#,
            r#"{"dim": 1, "lower": [1.0], "upper": [0.0], "n": 8, "tau": 0.1, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product"}"#,
            r#"{"dim": 1, "n": 8, "tau": 0.1, "t_end": 1.0, "beta": 1.0, "potential": "zero", "initial": "sine_product", "quadrature_degree": 2}"#,
        ];
        for text in cases {
            let err = RunConfig::from_json(text).unwrap_err();
            assert!(err.is_config_error(), "{text}: {err}");
        }
        assert!(ok.validate().is_ok());
    }
}
