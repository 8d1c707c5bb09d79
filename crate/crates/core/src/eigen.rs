//! Smallest generalized eigenpairs of `(L, M)` and exponential decay-rate
//! fitting for flow traces.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::fem::{AssembledOperators, FeFunction, QuadratureRule, ScalarField};
use crate::flow::FlowTrace;
use crate::linalg::{cg_solve_strict, norm2, CgOptions, SparseMatrix};

/// Eigenvalue gaps at or below this mark a degenerate pair.
pub const DEGENERACY_GAP: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EigenOptions {
    /// Bound on the relative residual `‖Lv − λMv‖ / ‖Lv‖`.
    pub tol: f64,
    pub max_iter: usize,
    /// Columns carried by the block iteration.
    pub block: usize,
    /// Inner solves with `L`.
    pub cg: CgOptions,
    pub seed: u64,
}

impl Default for EigenOptions {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: 500,
            block: 8,
            cg: CgOptions::with_tol(1e-13),
            seed: 0x5eed,
        }
    }
}

/// The two smallest eigenpairs of `L v = λ M v` with `M`-orthonormal vectors.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenResult {
    pub lambda1: f64,
    pub lambda2: f64,
    pub vec1: Vec<f64>,
    pub vec2: Vec<f64>,
    pub residual1: f64,
    pub residual2: f64,
    pub iterations: usize,
    /// `λ₂ − λ₁ ≤ 1e-12`.
    pub degenerate: bool,
}

impl EigenResult {
    /// Eigenvectors as finite element functions on the operators' mesh.
    pub fn functions(&self, ops: &AssembledOperators) -> Result<(FeFunction, FeFunction)> {
        Ok((
            FeFunction::from_dofs(ops, &self.vec1)?,
            FeFunction::from_dofs(ops, &self.vec2)?,
        ))
    }

    pub fn gap(&self) -> f64 {
        self.lambda2 - self.lambda1
    }
}

/// `L = A + M_V + β M_{φ²}`, the operator `−Δ + V + β|φ|²` linearized at `phi`.
pub fn linearized_operator(
    ops: &AssembledOperators,
    beta: f64,
    potential: &ScalarField,
    phi: &FeFunction,
    quad: &QuadratureRule,
) -> Result<SparseMatrix> {
    let mut l = ops.stiffness.clone();
    if !potential.is_zero() {
        l = l.linear_combination(1.0, &ops.weighted_mass(potential, quad)?, 1.0)?;
    }
    if beta != 0.0 {
        crate::fem::require_degree(quad, 4)?;
        let x = phi.dofs(ops)?;
        let density = ops.weighted_mass_from_samples(&ops.square_samples(&x, quad), quad);
        l = l.linear_combination(1.0, &density, beta)?;
    }
    Ok(l)
}

/// Block inverse iteration with Rayleigh–Ritz for the two smallest
/// eigenpairs.
///
/// Each sweep solves `L Y = M X` column by column, `M`-orthonormalizes `Y`
/// and rotates it onto the Ritz vectors of the projected pencil; the Ritz
/// vectors are therefore mutually `M`-orthogonal, which deflates the first
/// pair from the second. The extra columns make clustered `λ₂, λ₃, …`
/// converge at the rate `λ₂ / λ_{p+1}` rather than `λ₂ / λ₃`.
pub fn smallest_two(l: &SparseMatrix, m: &SparseMatrix, opts: &EigenOptions) -> Result<EigenResult> {
    let n = l.n_rows();
    if m.n_rows() != n || l.n_cols() != n || m.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: m.n_rows(),
        });
    }
    if n < 2 {
        return Err(Error::DimensionMismatch { expected: 2, found: n });
    }
    let p = opts.block.clamp(2, n);
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    block = m_orthonormalize(m, block)?;

    let mut residuals = [f64::INFINITY; 2];
    for it in 0..=opts.max_iter {
        let (lambdas, ritz) = rayleigh_ritz(l, m, &block)?;
        for k in 0..2 {
            residuals[k] = relative_residual(l, m, &ritz[k], lambdas[k])?;
        }
        if residuals.iter().all(|r| *r <= opts.tol) {
            let degenerate = lambdas[1] - lambdas[0] <= DEGENERACY_GAP;
            if degenerate {
                log::warn!("degenerate eigenvalue pair: {} and {}", lambdas[0], lambdas[1]);
            }
            let mut ritz = ritz.into_iter();
            return Ok(EigenResult {
                lambda1: lambdas[0],
                lambda2: lambdas[1],
                vec1: ritz.next().unwrap_or_default(),
                vec2: ritz.next().unwrap_or_default(),
                residual1: residuals[0],
                residual2: residuals[1],
                iterations: it,
                degenerate,
            });
        }
        if it == opts.max_iter {
            break;
        }
        let mut next = Vec::with_capacity(p);
        for x in &ritz {
            let mx = m.spmv(x)?;
            let (y, _) = cg_solve_strict(l, &mx, x.clone(), &opts.cg)?;
            next.push(y);
        }
        block = m_orthonormalize(m, next)?;
    }
    Err(Error::SolverDiverged {
        iterations: opts.max_iter,
        residual: residuals[0].max(residuals[1]),
    })
}

fn relative_residual(l: &SparseMatrix, m: &SparseMatrix, x: &[f64], lambda: f64) -> Result<f64> {
    let lx = l.spmv(x)?;
    let mx = m.spmv(x)?;
    let r: Vec<f64> = lx.iter().zip(&mx).map(|(a, b)| a - lambda * b).collect();
    let scale = norm2(&lx);
    Ok(if scale > 0.0 { norm2(&r) / scale } else { norm2(&r) })
}

fn m_inner(m: &SparseMatrix, x: &[f64], y: &[f64]) -> Result<f64> {
    Ok(m.spmv(y)?.iter().zip(x).map(|(a, b)| a * b).sum())
}

/// Modified Gram–Schmidt in the `M` inner product, applied twice.
fn m_orthonormalize(m: &SparseMatrix, mut cols: Vec<Vec<f64>>) -> Result<Vec<Vec<f64>>> {
    for k in 0..cols.len() {
        for _ in 0..2 {
            for j in 0..k {
                let c = m_inner(m, &cols[k], &cols[j])?;
                let (head, tail) = cols.split_at_mut(k);
                tail[0].iter_mut().zip(&head[j]).for_each(|(a, b)| *a -= c * b);
            }
        }
        let norm = m.quadratic_form(&cols[k]).max(0.0).sqrt();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::NonFiniteValue("block inverse iteration"));
        }
        cols[k].iter_mut().for_each(|v| *v /= norm);
    }
    Ok(cols)
}

/// Ritz values (ascending) and vectors of `(L, M)` on the span of an
/// `M`-orthonormal block.
fn rayleigh_ritz(l: &SparseMatrix, m: &SparseMatrix, block: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<Vec<f64>>)> {
    let p = block.len();
    let lb: Vec<Vec<f64>> = block.iter().map(|x| l.spmv(x)).collect::<Result<_>>()?;
    let mut h = vec![vec![0.0; p]; p];
    for i in 0..p {
        for j in i..p {
            let v: f64 = block[i].iter().zip(&lb[j]).map(|(a, b)| a * b).sum();
            h[i][j] = v;
            h[j][i] = v;
        }
    }
    let (values, vectors) = jacobi_eigen(h);
    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let n = block[0].len();
    let ritz: Vec<Vec<f64>> = order
        .iter()
        .map(|&k| {
            let mut x = vec![0.0; n];
            for (j, col) in block.iter().enumerate() {
                let c = vectors[j][k];
                x.iter_mut().zip(col).for_each(|(a, b)| *a += c * b);
            }
            x
        })
        .collect();
    let ritz = m_orthonormalize(m, ritz)?;
    let values = order.iter().map(|&k| values[k]).collect();
    Ok((values, ritz))
}

/// Cyclic Jacobi for a small symmetric matrix; returns eigenvalues and the
/// eigenvector matrix (eigenvectors in columns).
fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
    let p = a.len();
    let mut v: Vec<Vec<f64>> = (0..p)
        .map(|i| (0..p).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    for _sweep in 0..100 {
        let off: f64 = (0..p)
            .flat_map(|i| (0..p).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        let diag: f64 = (0..p).map(|i| a[i][i] * a[i][i]).sum();
        if off <= 1e-32 * diag.max(f64::MIN_POSITIVE) {
            break;
        }
        for i in 0..p {
            for j in i + 1..p {
                if a[i][j] == 0.0 {
                    continue;
                }
                let theta = (a[j][j] - a[i][i]) / (2.0 * a[i][j]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..p {
                    let (aki, akj) = (a[k][i], a[k][j]);
                    a[k][i] = c * aki - s * akj;
                    a[k][j] = s * aki + c * akj;
                }
                for k in 0..p {
                    let (aik, ajk) = (a[i][k], a[j][k]);
                    a[i][k] = c * aik - s * ajk;
                    a[j][k] = s * aik + c * ajk;
                }
                for row in v.iter_mut() {
                    let (vki, vkj) = (row[i], row[j]);
                    row[i] = c * vki - s * vkj;
                    row[j] = s * vki + c * vkj;
                }
            }
        }
    }
    ((0..p).map(|i| a[i][i]).collect(), v)
}

/// A sampled scalar signal `values[k]` at times `t[k]`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct TimeSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
}

/// Which trace quantity a gap series is built from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GapColumn {
    Energy,
    Mu,
}

impl TimeSeries {
    pub fn new(t: Vec<f64>, values: Vec<f64>) -> Result<Self> {
        if t.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: t.len(),
                found: values.len(),
            });
        }
        Ok(Self { t, values })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    pub fn push(&mut self, t: f64, value: f64) {
        self.t.push(t);
        self.values.push(value);
    }

    /// `column − reference` per trace row.
    pub fn gap(trace: &FlowTrace, column: GapColumn, reference: f64) -> Self {
        let (t, values) = trace
            .rows
            .iter()
            .map(|r| {
                let v = match column {
                    GapColumn::Energy => r.energy,
                    GapColumn::Mu => r.mu,
                };
                (r.t, v - reference)
            })
            .unzip();
        Self { t, values }
    }
}

/// The default window: the last 60% of the sampled time span.
pub fn default_window(series: &TimeSeries) -> Option<(f64, f64)> {
    let first = *series.t.first()?;
    let last = *series.t.last()?;
    Some((first + 0.4 * (last - first), last))
}

pub const DEFAULT_FLOOR: f64 = 1e-11;

/// Rate `r` of a least-squares fit `value ≈ C e^{−r t}` over `window`,
/// ignoring samples at or below `floor`.
pub fn fit_decay_rate(series: &TimeSeries, window: Option<(f64, f64)>, floor: f64) -> Result<f64> {
    let (ta, tb) = match window.or_else(|| default_window(series)) {
        Some(w) => w,
        None => return Err(Error::InsufficientData { usable: 0 }),
    };
    let points: Vec<(f64, f64)> = series
        .t
        .iter()
        .zip(&series.values)
        .filter(|(t, v)| **t >= ta && **t <= tb && **v > floor && v.is_finite())
        .map(|(t, v)| (*t, v.ln()))
        .collect();
    if points.len() < 5 {
        return Err(Error::InsufficientData { usable: points.len() });
    }
    let k = points.len() as f64;
    let mean_t = points.iter().map(|p| p.0).sum::<f64>() / k;
    let mean_y = points.iter().map(|p| p.1).sum::<f64>() / k;
    let (mut stt, mut sty) = (0.0, 0.0);
    for (t, y) in &points {
        stt += (t - mean_t) * (t - mean_t);
        sty += (t - mean_t) * (y - mean_y);
    }
    if stt == 0.0 {
        return Err(Error::InsufficientData { usable: 1 });
    }
    Ok(-sty / stt)
}
