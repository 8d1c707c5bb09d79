use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use crate::error::{Error, Result};
use crate::mesh::BoxDomain;

/// Which family a [`ScalarField`] belongs to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum FieldKind {
    Zero,
    Harmonic,
    Lattice,
    PolynomialBump,
    SineProduct,
    Custom,
}

/// One term `amplitude · ∏ sin(k_i π s_i)` of a sine series, where `s` are
/// the box coordinates rescaled to the unit box.
#[derive(Clone, Debug, PartialEq)]
pub struct SineMode {
    pub amplitude: f64,
    pub wavenumbers: Vec<usize>,
}

type ValueFn = dyn Fn(&[f64]) -> f64 + Send + Sync;
type GradientFn = dyn Fn(&[f64], &mut [f64]) + Send + Sync;

/// A user-supplied field.
#[derive(Clone)]
pub struct CustomField {
    pub name: String,
    pub value: Arc<ValueFn>,
    pub gradient: Option<Arc<GradientFn>>,
}

/// Affine map from a box to the unit box.
#[derive(Clone, Debug, PartialEq)]
pub struct UnitFrame {
    lower: Vec<f64>,
    extent: Vec<f64>,
}

impl UnitFrame {
    pub fn new(domain: &BoxDomain) -> Self {
        Self {
            lower: domain.lower().to_vec(),
            extent: (0..domain.dim()).map(|a| domain.extent(a)).collect(),
        }
    }

    fn s(&self, x: &[f64], a: usize) -> f64 {
        (x[a] - self.lower[a]) / self.extent[a]
    }
}

/// A pointwise real field on a box: potentials `V` and initial data `φ₀`.
#[derive(Clone)]
pub enum ScalarField {
    Zero,
    Constant(f64),
    /// `½|x|²`
    Harmonic,
    /// `½|x|² + offset + amplitude ∏ sin(2π x_i)`
    Lattice {
        offset: f64,
        amplitude: f64,
    },
    /// `amplitude ∏ s_i (1 − s_i)` in unit-box coordinates `s`.
    PolynomialBump {
        amplitude: f64,
        frame: UnitFrame,
    },
    /// Sum of sine products in unit-box coordinates.
    SineSeries {
        modes: Vec<SineMode>,
        frame: UnitFrame,
    },
    /// `Σ_k c_k |x|^{2k}`
    RadialPolynomial(Vec<f64>),
    Custom(CustomField),
}

impl fmt::Debug for ScalarField {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ScalarField::Zero => write!(f, "Zero"),
            ScalarField::Constant(c) => write!(f, "Constant({c})"),
            ScalarField::Harmonic => write!(f, "Harmonic"),
            ScalarField::Lattice { offset, amplitude } => {
                write!(f, "Lattice {{ offset: {offset}, amplitude: {amplitude} }}")
            }
            ScalarField::PolynomialBump { amplitude, .. } => write!(f, "PolynomialBump({amplitude})"),
            ScalarField::SineSeries { modes, .. } => write!(f, "SineSeries({modes:?})"),
            ScalarField::RadialPolynomial(c) => write!(f, "RadialPolynomial({c:?})"),
            ScalarField::Custom(c) => write!(f, "Custom({})", c.name),
        }
    }
}

impl ScalarField {
    /// The lattice potential `½|x|² + 20 + 20 ∏ sin(2π x_i)`.
    pub fn lattice() -> Self {
        ScalarField::Lattice {
            offset: 20.0,
            amplitude: 20.0,
        }
    }

    /// `∏ s_i (1 − s_i)` on `domain`, unnormalized.
    pub fn polynomial_bump(domain: &BoxDomain) -> Self {
        ScalarField::PolynomialBump {
            amplitude: 1.0,
            frame: UnitFrame::new(domain),
        }
    }

    /// `∏ sin(π s_i)` on `domain`: the lowest Dirichlet mode.
    pub fn sine_product(domain: &BoxDomain) -> Self {
        Self::sine_series(
            domain,
            vec![SineMode {
                amplitude: 1.0,
                wavenumbers: vec![1; domain.dim()],
            }],
        )
    }

    pub fn sine_series(domain: &BoxDomain, modes: Vec<SineMode>) -> Self {
        ScalarField::SineSeries {
            modes,
            frame: UnitFrame::new(domain),
        }
    }

    pub fn custom(
        name: impl Into<String>,
        value: impl Fn(&[f64]) -> f64 + Send + Sync + 'static,
        gradient: Option<Arc<GradientFn>>,
    ) -> Self {
        ScalarField::Custom(CustomField {
            name: name.into(),
            value: Arc::new(value),
            gradient,
        })
    }

    pub fn kind(&self) -> FieldKind {
        match self {
            ScalarField::Zero => FieldKind::Zero,
            ScalarField::Harmonic => FieldKind::Harmonic,
            ScalarField::Lattice { .. } => FieldKind::Lattice,
            ScalarField::PolynomialBump { .. } => FieldKind::PolynomialBump,
            ScalarField::SineSeries { .. } => FieldKind::SineProduct,
            ScalarField::Constant(_) | ScalarField::RadialPolynomial(_) | ScalarField::Custom(_) => FieldKind::Custom,
        }
    }

    pub fn is_zero(&self) -> bool {
        match self {
            ScalarField::Zero => true,
            ScalarField::Constant(c) => *c == 0.0,
            _ => false,
        }
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        match self {
            ScalarField::Zero => 0.0,
            ScalarField::Constant(c) => *c,
            ScalarField::Harmonic => 0.5 * x.iter().map(|v| v * v).sum::<f64>(),
            ScalarField::Lattice { offset, amplitude } => {
                0.5 * x.iter().map(|v| v * v).sum::<f64>()
                    + offset
                    + amplitude * x.iter().map(|v| (2.0 * PI * v).sin()).product::<f64>()
            }
            ScalarField::PolynomialBump { amplitude, frame } => {
                amplitude
                    * (0..x.len())
                        .map(|a| {
                            let s = frame.s(x, a);
                            s * (1.0 - s)
                        })
                        .product::<f64>()
            }
            ScalarField::SineSeries { modes, frame } => modes
                .iter()
                .map(|m| {
                    m.amplitude
                        * (0..x.len())
                            .map(|a| (m.wavenumbers[a] as f64 * PI * frame.s(x, a)).sin())
                            .product::<f64>()
                })
                .sum(),
            ScalarField::RadialPolynomial(c) => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                c.iter().rev().fold(0.0, |acc, ck| acc * r2 + ck)
            }
            ScalarField::Custom(c) => (c.value)(x),
        }
    }

    pub fn has_gradient(&self) -> bool {
        match self {
            ScalarField::Custom(c) => c.gradient.is_some(),
            _ => true,
        }
    }

    /// Writes `∇f(x)` into `out`.
    pub fn gradient(&self, x: &[f64], out: &mut [f64]) -> Result<()> {
        let d = x.len();
        match self {
            ScalarField::Zero | ScalarField::Constant(_) => out[..d].fill(0.0),
            ScalarField::Harmonic => out[..d].copy_from_slice(x),
            ScalarField::Lattice { amplitude, .. } => {
                for a in 0..d {
                    let mut term = amplitude * 2.0 * PI * (2.0 * PI * x[a]).cos();
                    for (b, xb) in x.iter().enumerate() {
                        if b != a {
                            term *= (2.0 * PI * xb).sin();
                        }
                    }
                    out[a] = x[a] + term;
                }
            }
            ScalarField::PolynomialBump { amplitude, frame } => {
                for a in 0..d {
                    let s = frame.s(x, a);
                    let mut g = amplitude * (1.0 - 2.0 * s) / frame.extent[a];
                    for b in (0..d).filter(|&b| b != a) {
                        let sb = frame.s(x, b);
                        g *= sb * (1.0 - sb);
                    }
                    out[a] = g;
                }
            }
            ScalarField::SineSeries { modes, frame } => {
                out[..d].fill(0.0);
                for m in modes {
                    for a in 0..d {
                        let k = m.wavenumbers[a] as f64 * PI;
                        let mut g = m.amplitude * k / frame.extent[a] * (k * frame.s(x, a)).cos();
                        for b in (0..d).filter(|&b| b != a) {
                            g *= (m.wavenumbers[b] as f64 * PI * frame.s(x, b)).sin();
                        }
                        out[a] += g;
                    }
                }
            }
            ScalarField::RadialPolynomial(c) => {
                let r2: f64 = x.iter().map(|v| v * v).sum();
                // d/dx_a Σ c_k r^{2k} = Σ 2k c_k r^{2(k-1)} x_a
                let dr = c
                    .iter()
                    .enumerate()
                    .skip(1)
                    .map(|(k, ck)| 2.0 * k as f64 * ck * r2.powi(k as i32 - 1))
                    .sum::<f64>();
                for a in 0..d {
                    out[a] = dr * x[a];
                }
            }
            ScalarField::Custom(c) => match &c.gradient {
                Some(g) => g(x, out),
                None => return Err(Error::MissingGradient("custom")),
            },
        }
        Ok(())
    }
}
