//! Sparse symmetric linear algebra.
//!
//! [`SparseMatrix`] is a plain CSR matrix whose products sum each row in
//! ascending column order, so identical inputs give bitwise identical
//! outputs. [`cg_solve`] is a (Jacobi) preconditioned conjugate gradient
//! method for the symmetric positive definite systems produced by assembly.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseMatrix {
    n_rows: usize,
    n_cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
    values: Vec<f64>,
    symmetric: bool,
}

impl SparseMatrix {
    /// Builds a matrix from `(row, col, value)` triplets; duplicates are summed.
    pub fn from_triplets(n_rows: usize, n_cols: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n_rows];
        for &(i, j, v) in triplets {
            if i >= n_rows {
                return Err(Error::DimensionMismatch {
                    expected: n_rows,
                    found: i + 1,
                });
            }
            if j >= n_cols {
                return Err(Error::DimensionMismatch {
                    expected: n_cols,
                    found: j + 1,
                });
            }
            rows[i].push((j, v));
        }
        let mut row_offsets = Vec::with_capacity(n_rows + 1);
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        row_offsets.push(0);
        for mut row in rows {
            row.sort_by_key(|&(j, _)| j);
            for (j, v) in row {
                if col_indices.len() > *row_offsets.last().unwrap() && *col_indices.last().unwrap() == j {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(j);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        let mut m = Self {
            n_rows,
            n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: false,
        };
        m.symmetric = m.check_symmetric(1e-14);
        Ok(m)
    }

    /// A zero-valued matrix with the given structurally symmetric pattern.
    /// `pattern[i]` lists the columns of row `i`; it is sorted and deduplicated.
    pub(crate) fn symmetric_pattern(n: usize, pattern: Vec<Vec<usize>>) -> Self {
        let mut row_offsets = Vec::with_capacity(n + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for mut row in pattern {
            row.sort_unstable();
            row.dedup();
            col_indices.extend(row);
            row_offsets.push(col_indices.len());
        }
        let nnz = col_indices.len();
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets,
            col_indices,
            values: vec![0.0; nnz],
            symmetric: true,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n).collect(),
            values: vec![1.0; n],
            symmetric: true,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn is_symmetric(&self) -> bool {
        self.symmetric
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_offsets[i]..self.row_offsets[i + 1];
        self.col_indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    fn position(&self, i: usize, j: usize) -> Option<usize> {
        let start = self.row_offsets[i];
        let end = self.row_offsets[i + 1];
        self.col_indices[start..end].binary_search(&j).ok().map(|k| start + k)
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.position(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to an entry that is present in the sparsity pattern.
    pub(crate) fn add_to(&mut self, i: usize, j: usize, v: f64) {
        let k = self
            .position(i, j)
            .unwrap_or_else(|| panic!("entry ({i}, {j}) is not in the sparsity pattern"));
        self.values[k] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n_rows.min(self.n_cols)).map(|i| self.get(i, i)).collect()
    }

    fn check_symmetric(&self, rel_tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        (0..self.n_rows).all(|i| {
            self.row(i).all(|(j, v)| match self.position(j, i) {
                Some(k) => (self.values[k] - v).abs() <= rel_tol * v.abs().max(self.values[k].abs()),
                None => false,
            })
        })
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_cols,
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.n_rows];
        self.spmv_into(x, &mut y);
        Ok(y)
    }

    /// `y = A x` without allocation; panics on length mismatch.
    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols);
        assert_eq!(y.len(), self.n_rows);
        for (i, yi) in y.iter_mut().enumerate() {
            let mut acc = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                acc += self.values[k] * x[self.col_indices[k]];
            }
            *yi = acc;
        }
    }

    /// `xᵀ A x`.
    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        for (i, xi) in x.iter().enumerate().take(self.n_rows) {
            let mut row = 0.0;
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                row += self.values[k] * x[self.col_indices[k]];
            }
            acc += xi * row;
        }
        acc
    }

    /// `alpha * self + beta * other` over the union of both patterns.
    pub fn linear_combination(&self, alpha: f64, other: &SparseMatrix, beta: f64) -> Result<SparseMatrix> {
        if self.n_rows != other.n_rows || self.n_cols != other.n_cols {
            return Err(Error::DimensionMismatch {
                expected: self.n_rows,
                found: other.n_rows,
            });
        }
        let mut row_offsets = Vec::with_capacity(self.n_rows + 1);
        let mut col_indices = Vec::with_capacity(self.nnz().max(other.nnz()));
        let mut values = Vec::with_capacity(self.nnz().max(other.nnz()));
        row_offsets.push(0);
        for i in 0..self.n_rows {
            let mut a = self.row(i).peekable();
            let mut b = other.row(i).peekable();
            loop {
                match (a.peek().copied(), b.peek().copied()) {
                    (Some((ja, va)), Some((jb, vb))) if ja == jb => {
                        col_indices.push(ja);
                        values.push(alpha * va + beta * vb);
                        a.next();
                        b.next();
                    }
                    (Some((ja, va)), Some((jb, _))) if ja < jb => {
                        col_indices.push(ja);
                        values.push(alpha * va);
                        a.next();
                    }
                    (_, Some((jb, vb))) => {
                        col_indices.push(jb);
                        values.push(beta * vb);
                        b.next();
                    }
                    (Some((ja, va)), None) => {
                        col_indices.push(ja);
                        values.push(alpha * va);
                        a.next();
                    }
                    (None, None) => break,
                }
            }
            row_offsets.push(col_indices.len());
        }
        Ok(SparseMatrix {
            n_rows: self.n_rows,
            n_cols: self.n_cols,
            row_offsets,
            col_indices,
            values,
            symmetric: self.symmetric && other.symmetric,
        })
    }

    pub fn scaled(&self, alpha: f64) -> SparseMatrix {
        let mut m = self.clone();
        m.values.iter_mut().for_each(|v| *v *= alpha);
        m
    }

    /// Row-major dense copy, for tests and small oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut dense = vec![vec![0.0; self.n_cols]; self.n_rows];
        for (i, row) in dense.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        dense
    }
}

pub fn dot(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| a * b).sum()
}

pub fn norm2(x: &[f64]) -> f64 {
    dot(x, x).sqrt()
}

/// `y += alpha * x`
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Preconditioner {
    None,
    #[default]
    Jacobi,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgOptions {
    /// Relative residual target `‖b − Ax‖₂ / ‖b‖₂`.
    pub tol: f64,
    pub max_iter: usize,
    pub precond: Preconditioner,
}

impl Default for CgOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 10_000,
            precond: Preconditioner::Jacobi,
        }
    }
}

impl CgOptions {
    pub fn with_tol(tol: f64) -> Self {
        Self { tol, ..Self::default() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolveReport {
    pub iterations: usize,
    /// Relative 2-norm of the true residual of the returned solution.
    pub final_residual: f64,
    pub converged: bool,
}

/// Solves `A x = b` from a zero initial guess.
pub fn cg_solve(a: &SparseMatrix, b: &[f64], opts: &CgOptions) -> Result<(Vec<f64>, SolveReport)> {
    cg_solve_from(a, b, vec![0.0; b.len()], opts)
}

/// Solves `A x = b` starting from `x0`.
///
/// Returns `converged = false` if `max_iter` is exhausted after reducing the
/// residual, and [`Error::SolverDiverged`] if the residual was not reduced at
/// all.
pub fn cg_solve_from(a: &SparseMatrix, b: &[f64], x0: Vec<f64>, opts: &CgOptions) -> Result<(Vec<f64>, SolveReport)> {
    let n = b.len();
    if a.n_rows() != n || a.n_cols() != n {
        return Err(Error::DimensionMismatch {
            expected: a.n_rows(),
            found: n,
        });
    }
    if x0.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            found: x0.len(),
        });
    }
    if b.iter().any(|v| !v.is_finite()) || x0.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFiniteValue("conjugate gradient input"));
    }
    let b_norm = norm2(b);
    if b_norm == 0.0 {
        return Ok((
            vec![0.0; n],
            SolveReport {
                iterations: 0,
                final_residual: 0.0,
                converged: true,
            },
        ));
    }

    let inv_diag: Vec<f64> = match opts.precond {
        Preconditioner::Jacobi => a
            .diagonal()
            .iter()
            .map(|&d| if d != 0.0 { 1.0 / d } else { 1.0 })
            .collect(),
        Preconditioner::None => vec![1.0; n],
    };

    let mut x = x0;
    let mut r = vec![0.0; n];
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut iterations = 0;

    let true_residual = |x: &[f64], r: &mut [f64]| {
        a.spmv_into(x, r);
        for (ri, bi) in r.iter_mut().zip(b) {
            *ri = bi - *ri;
        }
        norm2(r) / b_norm
    };
    let initial_residual = true_residual(&x, &mut r);
    let mut residual = initial_residual;

    // The recurrence residual can drift from the true one; restart from the
    // true residual until both agree or the budget is spent.
    while residual > opts.tol && iterations < opts.max_iter {
        for i in 0..n {
            z[i] = inv_diag[i] * r[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < opts.max_iter {
            a.spmv_into(&p, &mut q);
            let pq = dot(&p, &q);
            if !pq.is_finite() || !rz.is_finite() {
                return Err(Error::NonFiniteValue("conjugate gradient iteration"));
            }
            if pq <= 0.0 {
                break;
            }
            let alpha = rz / pq;
            axpy(alpha, &p, &mut x);
            axpy(-alpha, &q, &mut r);
            iterations += 1;
            if norm2(&r) / b_norm <= opts.tol {
                break;
            }
            for i in 0..n {
                z[i] = inv_diag[i] * r[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        let previous = residual;
        residual = true_residual(&x, &mut r);
        if !residual.is_finite() {
            return Err(Error::NonFiniteValue("conjugate gradient residual"));
        }
        if residual > opts.tol && residual >= previous {
            break;
        }
    }

    let converged = residual <= opts.tol;
    if !converged && residual >= initial_residual {
        return Err(Error::SolverDiverged { iterations, residual });
    }
    Ok((
        x,
        SolveReport {
            iterations,
            final_residual: residual,
            converged,
        },
    ))
}

/// Like [`cg_solve_from`] but treats a non-converged solve as an error.
pub(crate) fn cg_solve_strict(
    a: &SparseMatrix,
    b: &[f64],
    x0: Vec<f64>,
    opts: &CgOptions,
) -> Result<(Vec<f64>, SolveReport)> {
    let (x, report) = cg_solve_from(a, b, x0, opts)?;
    if !report.converged {
        return Err(Error::SolverDiverged {
            iterations: report.iterations,
            residual: report.final_residual,
        });
    }
    Ok((x, report))
}
