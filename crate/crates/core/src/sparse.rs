//! Compressed sparse row storage and the symmetric operator type used for
//! Laplacians, deflation penalties and their sums.

use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::error::{Error, Result};

/// Matrix-vector products switch to row-parallel evaluation at this size.
const PARALLEL_ROWS: usize = 4096;

/// General sparse matrix in CSR form with sorted column indices per row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(nrows: usize, ncols: usize) -> Self {
        CsrMatrix {
            nrows,
            ncols,
            indptr: vec![0; nrows + 1],
            indices: Vec::new(),
            values: Vec::new(),
        }
    }

    /// Builds from `(row, col, value)` triplets; duplicates are summed in input order.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut order: Vec<usize> = (0..triplets.len()).collect();
        // stable: duplicates are accumulated in the order they were given
        order.sort_by_key(|&t| (triplets[t].0, triplets[t].1));
        let mut indptr = vec![0; nrows + 1];
        let mut indices = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for t in order {
            let (r, c, v) = triplets[t];
            assert!(r < nrows && c < ncols, "triplet ({r}, {c}) out of bounds");
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                indptr[r + 1] += 1;
                indices.push(c);
                values.push(v);
                last = Some((r, c));
            }
        }
        for r in 0..nrows {
            indptr[r + 1] += indptr[r];
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
    }

    /// Builds from per-row `(col, value)` lists, which must be sorted by column.
    pub fn from_sorted_rows(ncols: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        let nrows = rows.len();
        let mut indptr = Vec::with_capacity(nrows + 1);
        indptr.push(0);
        let nnz = rows.iter().map(Vec::len).sum();
        let mut indices = Vec::with_capacity(nnz);
        let mut values = Vec::with_capacity(nnz);
        for row in rows {
            debug_assert!(row.windows(2).all(|w| w[0].0 < w[1].0));
            for (c, v) in row {
                assert!(c < ncols);
                indices.push(c);
                values.push(v);
            }
            indptr.push(indices.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            indptr,
            indices,
            values,
        }
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

    pub fn row(&self, i: usize) -> (&[usize], &[f64]) {
        let (a, b) = (self.indptr[i], self.indptr[i + 1]);
        (&self.indices[a..b], &self.values[a..b])
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&j) {
            Ok(p) => vals[p],
            Err(_) => 0.0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.nrows).flat_map(move |i| {
            let (cols, vals) = self.row(i);
            cols.iter().zip(vals).map(move |(&j, &v)| (i, j, v))
        })
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.nrows];
        self.matvec_into(x, &mut y);
        y
    }

    /// Rows are reduced in a fixed order, so the result does not depend on
    /// the thread count.
    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        assert_eq!(x.len(), self.ncols);
        let row = |(i, yi): (usize, &mut f64)| {
            let (cols, vals) = self.row(i);
            *yi = cols.iter().zip(vals).map(|(&j, &v)| v * x[j]).sum();
        };
        if self.nrows >= PARALLEL_ROWS {
            y.par_iter_mut().enumerate().for_each(row);
        } else {
            y.iter_mut().enumerate().for_each(row);
        }
    }

    pub fn transpose(&self) -> CsrMatrix {
        let mut counts = vec![0usize; self.ncols + 1];
        for &c in &self.indices {
            counts[c + 1] += 1;
        }
        for c in 0..self.ncols {
            counts[c + 1] += counts[c];
        }
        let indptr = counts.clone();
        let mut next = counts;
        let mut indices = vec![0; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        for (i, j, v) in self.iter() {
            let p = next[j];
            indices[p] = i;
            values[p] = v;
            next[j] += 1;
        }
        CsrMatrix {
            nrows: self.ncols,
            ncols: self.nrows,
            indptr,
            indices,
            values,
        }
    }

    /// `A^T A`, exactly symmetric: entry (a, b) and (b, a) are summed over the
    /// same rows of `A` in the same order.
    pub fn gram(&self) -> CsrMatrix {
        let at = self.transpose();
        let n = self.ncols;
        let mut acc = vec![0.0; n];
        let mut mark = vec![usize::MAX; n];
        let mut touched = Vec::new();
        let mut rows = Vec::with_capacity(n);
        for a in 0..n {
            touched.clear();
            let (src_rows, src_vals) = at.row(a);
            for (&i, &via) in src_rows.iter().zip(src_vals) {
                let (cols, vals) = self.row(i);
                for (&b, &vib) in cols.iter().zip(vals) {
                    if mark[b] != a {
                        mark[b] = a;
                        acc[b] = 0.0;
                        touched.push(b);
                    }
                    acc[b] += via * vib;
                }
            }
            touched.sort_unstable();
            rows.push(touched.iter().map(|&b| (b, acc[b])).collect());
        }
        CsrMatrix::from_sorted_rows(n, rows)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.nrows, self.ncols);
        for (i, j, v) in self.iter() {
            m[(i, j)] += v;
        }
        m
    }

    fn scaled(&self, c: f64) -> CsrMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= c);
        out
    }

    /// `self + c * other`, merging sparsity patterns row by row.
    fn add_scaled(&self, other: &CsrMatrix, c: f64) -> CsrMatrix {
        assert_eq!((self.nrows, self.ncols), (other.nrows, other.ncols));
        let mut rows = Vec::with_capacity(self.nrows);
        for i in 0..self.nrows {
            let (ac, av) = self.row(i);
            let (bc, bv) = other.row(i);
            let mut row = Vec::with_capacity(ac.len() + bc.len());
            let (mut p, mut q) = (0, 0);
            while p < ac.len() || q < bc.len() {
                if q == bc.len() || (p < ac.len() && ac[p] < bc[q]) {
                    row.push((ac[p], av[p]));
                    p += 1;
                } else if p == ac.len() || bc[q] < ac[p] {
                    row.push((bc[q], c * bv[q]));
                    q += 1;
                } else {
                    row.push((ac[p], av[p] + c * bv[q]));
                    p += 1;
                    q += 1;
                }
            }
            rows.push(row);
        }
        CsrMatrix::from_sorted_rows(self.ncols, rows)
    }
}

/// Square sparse matrix with exact structural and numerical symmetry.
///
/// Both triangles are stored. The Frobenius norm is cached at construction.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSymmetric {
    csr: CsrMatrix,
    frobenius_norm: f64,
}

impl SparseSymmetric {
    /// Wraps a CSR matrix after checking that it equals its transpose exactly.
    pub fn from_csr(csr: CsrMatrix) -> Result<Self> {
        if csr.nrows != csr.ncols {
            return Err(Error::parameter(format!(
                "symmetric matrix must be square, got {}x{}",
                csr.nrows, csr.ncols
            )));
        }
        if csr.transpose() != csr {
            return Err(Error::parameter("matrix is not exactly symmetric"));
        }
        Ok(Self::from_csr_unchecked(csr))
    }

    pub(crate) fn from_csr_unchecked(csr: CsrMatrix) -> Self {
        let frobenius_norm = csr.frobenius_norm();
        SparseSymmetric {
            csr,
            frobenius_norm,
        }
    }

    /// Each off-diagonal triplet `(i, j, v)` is placed at both `(i, j)` and `(j, i)`.
    pub fn from_pair_triplets(n: usize, pairs: &[(usize, usize, f64)]) -> Self {
        let mut full = Vec::with_capacity(2 * pairs.len());
        for &(i, j, v) in pairs {
            full.push((i, j, v));
            if i != j {
                full.push((j, i, v));
            }
        }
        Self::from_csr_unchecked(CsrMatrix::from_triplets(n, n, &full))
    }

    pub fn from_dense(m: &DMatrix<f64>) -> Result<Self> {
        let n = m.nrows();
        let trip: Vec<_> = (0..n)
            .flat_map(|i| (0..m.ncols()).map(move |j| (i, j)))
            .filter(|&(i, j)| m[(i, j)] != 0.0)
            .map(|(i, j)| (i, j, m[(i, j)]))
            .collect();
        Self::from_csr(CsrMatrix::from_triplets(n, m.ncols(), &trip))
    }

    pub fn n(&self) -> usize {
        self.csr.nrows
    }

    pub fn csr(&self) -> &CsrMatrix {
        &self.csr
    }

    pub fn nnz(&self) -> usize {
        self.csr.nnz()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.csr.get(i, j)
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.frobenius_norm
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        self.csr.matvec(x)
    }

    pub fn matvec_into(&self, x: &[f64], y: &mut [f64]) {
        self.csr.matvec_into(x, y)
    }

    pub fn quadratic_form(&self, x: &[f64]) -> f64 {
        self.csr.iter().map(|(i, j, v)| x[i] * v * x[j]).sum()
    }

    pub fn row_sums(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.csr.row(i).1.iter().sum()).collect()
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n()).map(|i| self.csr.get(i, i)).collect()
    }

    pub fn scaled(&self, c: f64) -> SparseSymmetric {
        Self::from_csr_unchecked(self.csr.scaled(c))
    }

    /// `self + c * other`; symmetry is preserved entry by entry.
    pub fn add_scaled(&self, other: &SparseSymmetric, c: f64) -> SparseSymmetric {
        Self::from_csr_unchecked(self.csr.add_scaled(&other.csr, c))
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        self.csr.to_dense()
    }
}

impl CsrMatrix {
    /// `A^T A` as a [`SparseSymmetric`].
    pub fn gram_symmetric(&self) -> SparseSymmetric {
        SparseSymmetric::from_csr_unchecked(self.gram())
    }
}
