//! Reverse Cuthill-McKee ordering and envelope (skyline) Cholesky factorization.

use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::sparse::SparseSymmetric;

/// Reverse Cuthill-McKee permutation: `perm[new] = old`.
pub fn rcm_ordering(a: &SparseSymmetric) -> Vec<usize> {
    let n = a.n();
    let adj: Vec<Vec<usize>> = (0..n)
        .map(|i| a.csr().row(i).0.iter().copied().filter(|&j| j != i).collect())
        .collect();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    let mut level = vec![usize::MAX; n];

    let bfs_levels = |start: usize, level: &mut Vec<usize>, touched: &mut Vec<usize>| -> usize {
        for &t in touched.iter() {
            level[t] = usize::MAX;
        }
        touched.clear();
        let mut queue = VecDeque::from([start]);
        level[start] = 0;
        touched.push(start);
        let mut depth = 0;
        while let Some(u) = queue.pop_front() {
            depth = depth.max(level[u]);
            for &v in &adj[u] {
                if level[v] == usize::MAX {
                    level[v] = level[u] + 1;
                    touched.push(v);
                    queue.push_back(v);
                }
            }
        }
        depth
    };

    let mut by_degree: Vec<usize> = (0..n).collect();
    by_degree.sort_by_key(|&i| (degree[i], i));
    let mut touched = Vec::new();
    for &seed in &by_degree {
        if visited[seed] {
            continue;
        }
        // pseudo-peripheral start node
        let mut start = seed;
        let mut depth = bfs_levels(start, &mut level, &mut touched);
        for _ in 0..8 {
            let candidate = touched
                .iter()
                .copied()
                .filter(|&v| level[v] == depth)
                .min_by_key(|&v| (degree[v], v))
                .expect("last level is non-empty");
            let d = bfs_levels(candidate, &mut level, &mut touched);
            if d <= depth {
                break;
            }
            start = candidate;
            depth = d;
        }

        let mut queue = VecDeque::from([start]);
        visited[start] = true;
        let mut scratch = Vec::new();
        while let Some(u) = queue.pop_front() {
            order.push(u);
            scratch.clear();
            scratch.extend(adj[u].iter().copied().filter(|&v| !visited[v]));
            scratch.sort_by_key(|&v| (degree[v], v));
            for &v in &scratch {
                visited[v] = true;
                queue.push_back(v);
            }
        }
    }
    order.reverse();
    order
}

/// Number of stored entries of the lower envelope under `perm`.
pub fn envelope_size(a: &SparseSymmetric, perm: &[usize]) -> usize {
    let inv = inverse(perm);
    (0..a.n()).map(|r| r - first_column(a, perm, &inv, r) + 1).sum()
}

fn inverse(perm: &[usize]) -> Vec<usize> {
    let mut inv = vec![0; perm.len()];
    for (new, &old) in perm.iter().enumerate() {
        inv[old] = new;
    }
    inv
}

fn first_column(a: &SparseSymmetric, perm: &[usize], inv: &[usize], r: usize) -> usize {
    a.csr().row(perm[r]).0.iter().map(|&j| inv[j]).fold(r, usize::min)
}

/// Lower-triangular factor `L` with `P A P^T = L L^T`, stored row by row
/// from the first nonzero column to the diagonal.
#[derive(Debug, Clone)]
pub struct SkylineCholesky {
    perm: Vec<usize>,
    first: Vec<usize>,
    offset: Vec<usize>,
    data: Vec<f64>,
}

impl SkylineCholesky {
    /// Factors `a + shift * I` under the given ordering.
    pub fn factor(a: &SparseSymmetric, shift: f64, perm: Vec<usize>) -> Result<Self> {
        let n = a.n();
        let inv = inverse(&perm);
        let first: Vec<usize> = (0..n).map(|r| first_column(a, &perm, &inv, r)).collect();
        let mut offset = Vec::with_capacity(n + 1);
        offset.push(0);
        for r in 0..n {
            offset.push(offset[r] + r - first[r] + 1);
        }
        let mut data = vec![0.0; offset[n]];
        for r in 0..n {
            let base = offset[r] - first[r];
            let (cols, vals) = a.csr().row(perm[r]);
            for (&j, &v) in cols.iter().zip(vals) {
                let c = inv[j];
                if c <= r {
                    data[base + c] += v;
                }
            }
            data[base + r] += shift;
        }

        for r in 0..n {
            let fr = first[r];
            let (done, rest) = data.split_at_mut(offset[r]);
            let row = &mut rest[..r - fr + 1];
            for c in fr..r {
                let fc = first[c];
                let k0 = fr.max(fc);
                let crow = &done[offset[c]..offset[c + 1]];
                let lhs = &row[k0 - fr..c - fr];
                let rhs = &crow[k0 - fc..c - fc];
                let dot: f64 = lhs.iter().zip(rhs).map(|(x, y)| x * y).sum();
                row[c - fr] = (row[c - fr] - dot) / crow[c - fc];
            }
            let off: f64 = row[..r - fr].iter().map(|x| x * x).sum();
            let d = row[r - fr] - off;
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::NotPositiveDefinite(format!(
                    "pivot {d:.3e} at row {} of the envelope factorization",
                    perm[r]
                )));
            }
            row[r - fr] = d.sqrt();
        }
        Ok(SkylineCholesky {
            perm,
            first,
            offset,
            data,
        })
    }

    pub fn n(&self) -> usize {
        self.perm.len()
    }

    fn row(&self, r: usize) -> &[f64] {
        &self.data[self.offset[r]..self.offset[r + 1]]
    }

    /// Solves `(A + shift I) x = b`.
    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n();
        let mut y: Vec<f64> = self.perm.iter().map(|&i| b[i]).collect();
        for r in 0..n {
            let fr = self.first[r];
            let row = self.row(r);
            let dot: f64 = row[..r - fr].iter().zip(&y[fr..r]).map(|(l, v)| l * v).sum();
            y[r] = (y[r] - dot) / row[r - fr];
        }
        for r in (0..n).rev() {
            let fr = self.first[r];
            let row = self.row(r);
            y[r] /= row[r - fr];
            let xr = y[r];
            for (l, v) in row[..r - fr].iter().zip(&mut y[fr..r]) {
                *v -= l * xr;
            }
        }
        let mut x = vec![0.0; n];
        for (r, &i) in self.perm.iter().enumerate() {
            x[i] = y[r];
        }
        x
    }
}
