//! Sparse symmetric eigensolver and SPD linear solves.

mod cg;
mod eigen;
mod skyline;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::SparseSymmetric;

pub use cg::pcg;
pub use eigen::{fix_sign, pattern_components, SIGN_TIE_RTOL, smallest_nonconstant_eigenpairs, BLOCK_PADDING, ENVELOPE_BUDGET, RELATIVE_SHIFT};
pub use skyline::{envelope_size, rcm_ordering, SkylineCholesky};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolverOptions {
    /// Absolute bound on `||M v - lambda v||`.
    pub tol: f64,
    pub max_iter: usize,
    pub seed: u64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            tol: 1e-8,
            max_iter: 5000,
            seed: 0,
        }
    }
}

/// Unit eigenvector orthogonal to the constant vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EigenPair {
    pub value: f64,
    pub vector: Vec<f64>,
    pub residual: f64,
}

/// Symmetric positive-definite system matrix.
#[derive(Debug, Clone, Copy)]
pub enum SpdMatrix<'a> {
    Sparse(&'a SparseSymmetric),
    Dense(&'a DMatrix<f64>),
}

impl SpdMatrix<'_> {
    pub fn n(&self) -> usize {
        match self {
            SpdMatrix::Sparse(a) => a.n(),
            SpdMatrix::Dense(a) => a.nrows(),
        }
    }
}

/// Solves `a x = b` to `||a x - b|| <= tol * ||b||`.
///
/// Sparse matrices use Jacobi-preconditioned conjugate gradients; dense
/// matrices use a Cholesky factorization followed by iterative refinement,
/// at most `max_iter` refinement steps.
pub fn solve_spd(a: SpdMatrix<'_>, b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>> {
    let n = a.n();
    if b.len() != n {
        return Err(Error::parameter(format!(
            "right-hand side has length {} for a {n}x{n} system",
            b.len()
        )));
    }
    if !(tol > 0.0) {
        return Err(Error::parameter(format!("tolerance must be positive, got {tol}")));
    }
    match a {
        SpdMatrix::Sparse(m) => pcg(|x, y| m.matvec_into(x, y), &m.diagonal(), b, tol, max_iter),
        SpdMatrix::Dense(m) => {
            if m.ncols() != n {
                return Err(Error::parameter("dense system matrix is not square"));
            }
            let rhs = DVector::from_column_slice(b);
            let bnorm = rhs.norm();
            if bnorm == 0.0 {
                return Ok(vec![0.0; n]);
            }
            let chol = m
                .clone()
                .cholesky()
                .ok_or_else(|| Error::NotPositiveDefinite("dense Cholesky factorization failed".into()))?;
            let mut x = chol.solve(&rhs);
            let mut residual = (&rhs - m * &x).norm();
            let mut steps = 0;
            while residual > tol * bnorm && steps < max_iter {
                let r = &rhs - m * &x;
                x += chol.solve(&r);
                let next = (&rhs - m * &x).norm();
                steps += 1;
                if next >= residual {
                    residual = residual.min(next);
                    break;
                }
                residual = next;
            }
            if residual > tol * bnorm {
                return Err(Error::NonConvergence {
                    solver: "dense Cholesky with refinement",
                    iterations: steps,
                    best_residual: residual,
                });
            }
            Ok(x.iter().copied().collect())
        }
    }
}
