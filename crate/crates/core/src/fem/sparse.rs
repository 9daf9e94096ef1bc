//! Compressed sparse row operators and a Jacobi-preconditioned conjugate
//! gradient solver. All systems assembled in this crate are symmetric and,
//! after Dirichlet elimination, positive definite, so CG is the only linear
//! solver needed.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse matrix in CSR layout with an explicit symmetry flag.
#[derive(Clone, Debug)]
pub struct SparseOperator<T> {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<T>,
    pub symmetric: bool,
}

impl<T: Scalar> SparseOperator<T> {
    /// Build from (row, col, value) triplets; duplicate entries are summed.
    pub fn from_triplets(
        nrows: usize,
        ncols: usize,
        mut triplets: Vec<(usize, usize, T)>,
        symmetric: bool,
    ) -> Self {
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_ptr = vec![0usize; nrows + 1];
        let mut col_idx = Vec::with_capacity(triplets.len());
        let mut values = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            debug_assert!(r < nrows && c < ncols);
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_idx.push(c);
                values.push(v);
                row_ptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            row_ptr[r + 1] += row_ptr[r];
        }
        SparseOperator {
            nrows,
            ncols,
            row_ptr,
            col_idx,
            values,
            symmetric,
        }
    }

    pub fn identity(n: usize) -> Self {
        let triplets = (0..n).map(|i| (i, i, T::one())).collect();
        Self::from_triplets(n, n, triplets, true)
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> (&[usize], &[T]) {
        let lo = self.row_ptr[i];
        let hi = self.row_ptr[i + 1];
        (&self.col_idx[lo..hi], &self.values[lo..hi])
    }

    /// y = A x
    pub fn matvec(&self, x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(y.len(), self.nrows);
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut acc = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                acc += v * x[c];
            }
            y[i] = acc;
        }
    }

    pub fn apply(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.nrows];
        self.matvec(x, &mut y);
        y
    }

    /// x' A y
    pub fn bilinear(&self, x: &[T], y: &[T]) -> T {
        let mut acc = T::zero();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            let mut row_acc = T::zero();
            for (&c, &v) in cols.iter().zip(vals) {
                row_acc += v * y[c];
            }
            acc += x[i] * row_acc;
        }
        acc
    }

    pub fn quadratic_form(&self, x: &[T]) -> T {
        self.bilinear(x, x)
    }

    pub fn diag(&self) -> Vec<T> {
        let mut d = vec![T::zero(); self.nrows.min(self.ncols)];
        for i in 0..d.len() {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if c == i {
                    d[i] += v;
                }
            }
        }
        d
    }

    pub fn row_sums(&self) -> Vec<T> {
        (0..self.nrows)
            .map(|i| {
                let (_, vals) = self.row(i);
                vals.iter().copied().sum()
            })
            .collect()
    }

    /// max |a_ij - a_ji|, for symmetry checks in tests
    pub fn max_asymmetry(&self) -> T {
        let mut worst = T::zero();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                let (jcols, jvals) = self.row(j);
                let vt = jcols
                    .iter()
                    .position(|&c| c == i)
                    .map(|p| jvals[p])
                    .unwrap_or_else(T::zero);
                let d = (v - vt).abs();
                if d > worst {
                    worst = d;
                }
            }
        }
        worst
    }

    /// Linear combination `Σ coef_k op_k` over a shared sparsity union.
    pub fn linear_combination(terms: &[(T, &SparseOperator<T>)]) -> SparseOperator<T> {
        assert!(!terms.is_empty());
        let nrows = terms[0].1.nrows;
        let ncols = terms[0].1.ncols;
        let mut triplets = Vec::new();
        let mut symmetric = true;
        for &(coef, op) in terms {
            assert_eq!(op.nrows, nrows);
            assert_eq!(op.ncols, ncols);
            symmetric &= op.symmetric;
            for i in 0..nrows {
                let (cols, vals) = op.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    triplets.push((i, c, coef * v));
                }
            }
        }
        SparseOperator::from_triplets(nrows, ncols, triplets, symmetric)
    }

    /// Diagonal operator from a weight vector.
    pub fn from_diagonal(d: &[T]) -> SparseOperator<T> {
        let triplets = d.iter().enumerate().map(|(i, &v)| (i, i, v)).collect();
        SparseOperator::from_triplets(d.len(), d.len(), triplets, true)
    }

    /// Symmetric Dirichlet elimination: rows and columns of masked indices
    /// are zeroed and the diagonal set to one. Keeps the operator SPD.
    pub fn constrained(&self, mask: &[bool]) -> SparseOperator<T> {
        assert_eq!(mask.len(), self.nrows);
        assert_eq!(self.nrows, self.ncols);
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in 0..self.nrows {
            if mask[i] {
                triplets.push((i, i, T::one()));
                continue;
            }
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                if !mask[c] {
                    triplets.push((i, c, v));
                }
            }
        }
        SparseOperator::from_triplets(self.nrows, self.ncols, triplets, self.symmetric)
    }

    /// Coordinate-format text dump `i j value`, one entry per line.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.nrows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out.push_str(&format!("{i} {c} {v}\n"));
            }
        }
        out
    }
}

/// Iteration report of a converged CG solve.
#[derive(Clone, Copy, Debug)]
pub struct CgOutcome {
    pub iterations: usize,
    /// final residual relative to the right-hand side norm
    pub residual: f64,
}

fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// Jacobi-preconditioned conjugate gradients; `x` doubles as initial guess.
///
/// Stops once `‖rhs - op x‖ ≤ tol ‖rhs‖`. The operator must carry the
/// symmetric flag; a non-positive search-direction curvature aborts with a
/// precondition error since the method is undefined for indefinite systems.
pub fn cg_solve_into<T: Scalar>(
    op: &SparseOperator<T>,
    rhs: &[T],
    x: &mut [T],
    tol: T,
    max_iter: usize,
) -> Result<CgOutcome> {
    if !op.symmetric {
        return Err(Error::Precondition(
            "cg_solve requires a symmetric positive definite operator".into(),
        ));
    }
    if op.nrows() != op.ncols() || rhs.len() != op.nrows() || x.len() != op.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "cg_solve: operator {}x{}, rhs {}, x {}",
            op.nrows(),
            op.ncols(),
            rhs.len(),
            x.len()
        )));
    }
    let n = rhs.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == T::zero() {
        x.iter_mut().for_each(|v| *v = T::zero());
        return Ok(CgOutcome {
            iterations: 0,
            residual: 0.0,
        });
    }
    let inv_diag: Vec<T> = op
        .diag()
        .iter()
        .map(|&d| {
            if d != T::zero() {
                T::one() / d
            } else {
                T::one()
            }
        })
        .collect();

    let mut r = vec![T::zero(); n];
    op.matvec(x, &mut r);
    for i in 0..n {
        r[i] = rhs[i] - r[i];
    }
    let threshold = tol * rhs_norm;
    let mut res_norm = dot(&r, &r).sqrt();
    if res_norm <= threshold {
        return Ok(CgOutcome {
            iterations: 0,
            residual: (res_norm / rhs_norm).to_f64_lossy(),
        });
    }

    let mut z: Vec<T> = r.iter().zip(&inv_diag).map(|(&ri, &di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut q = vec![T::zero(); n];

    for iter in 1..=max_iter {
        op.matvec(&p, &mut q);
        let pq = dot(&p, &q);
        if pq <= T::zero() {
            return Err(Error::Precondition(
                "cg_solve: operator is not positive definite".into(),
            ));
        }
        let alpha = rz / pq;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * q[i];
        }
        res_norm = dot(&r, &r).sqrt();
        if res_norm <= threshold {
            return Ok(CgOutcome {
                iterations: iter,
                residual: (res_norm / rhs_norm).to_f64_lossy(),
            });
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::CgNoConvergence {
        iterations: max_iter,
        residual: (res_norm / rhs_norm).to_f64_lossy(),
    })
}

/// CG from a zero initial guess, returning the solution vector.
pub fn cg_solve<T: Scalar>(
    op: &SparseOperator<T>,
    rhs: &[T],
    tol: T,
    max_iter: usize,
) -> Result<Vec<T>> {
    let mut x = vec![T::zero(); rhs.len()];
    cg_solve_into(op, rhs, &mut x, tol, max_iter)?;
    Ok(x)
}
