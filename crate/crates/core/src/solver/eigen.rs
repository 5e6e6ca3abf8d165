//! Block shift-invert subspace iteration with Rayleigh-Ritz extraction,
//! restricted to the complement of the constant vector.

use log::{debug, warn};
use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::cg::pcg;
use super::skyline::{envelope_size, rcm_ordering, SkylineCholesky};
use super::{EigenPair, SolverOptions};
use crate::error::{Error, Result};
use crate::sparse::SparseSymmetric;

/// Envelope factorizations larger than this many entries fall back to
/// iterative inner solves.
pub const ENVELOPE_BUDGET: usize = 25_000_000;
/// Shift relative to the largest diagonal entry.
pub const RELATIVE_SHIFT: f64 = 1e-6;
/// Extra block vectors beyond the requested count.
pub const BLOCK_PADDING: usize = 5;

enum Inverse<'a> {
    Direct(SkylineCholesky),
    Iterative {
        m: &'a SparseSymmetric,
        shift: f64,
        diag: Vec<f64>,
    },
}

impl Inverse<'_> {
    fn apply(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Inverse::Direct(f) => Ok(f.solve(x)),
            Inverse::Iterative { m, shift, diag } => pcg(
                |v, out| {
                    m.matvec_into(v, out);
                    for (o, vi) in out.iter_mut().zip(v) {
                        *o += shift * vi;
                    }
                },
                diag,
                x,
                1e-12,
                20 * m.n().max(100),
            ),
        }
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn remove_mean(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// Orthonormalizes `block` in place against the constant vector and itself
/// (classical Gram-Schmidt, applied twice). Columns that collapse are
/// replaced by fresh random vectors.
fn orthonormalize(block: &mut [Vec<f64>], rng: &mut ChaCha8Rng) {
    for j in 0..block.len() {
        let mut attempts = 0;
        loop {
            let before = dot(&block[j], &block[j]).sqrt();
            for _ in 0..2 {
                remove_mean(&mut block[j]);
                let (done, rest) = block.split_at_mut(j);
                let col = &mut rest[0];
                for q in done.iter() {
                    let c = dot(q, col);
                    for (x, y) in col.iter_mut().zip(q) {
                        *x -= c * y;
                    }
                }
            }
            let after = dot(&block[j], &block[j]).sqrt();
            if after > 1e-10 * before && after > 0.0 {
                for x in block[j].iter_mut() {
                    *x /= after;
                }
                break;
            }
            attempts += 1;
            assert!(attempts < 100, "cannot extend an orthonormal block");
            for x in block[j].iter_mut() {
                *x = rng.random_range(-1.0..1.0);
            }
        }
    }
}

/// Relative gap below which two magnitudes count as tied for the sign convention.
pub const SIGN_TIE_RTOL: f64 = 1e-9;

/// Largest-magnitude entry positive; among entries tied within
/// `SIGN_TIE_RTOL`, the lowest index decides.
pub fn fix_sign(v: &mut [f64]) {
    let max = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let Some(lead) = v.iter().position(|x| x.abs() >= max * (1.0 - SIGN_TIE_RTOL)) else {
        return;
    };
    if v[lead] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Number of connected components of the off-diagonal sparsity pattern.
pub fn pattern_components(m: &SparseSymmetric) -> usize {
    let n = m.n();
    let mut label = vec![false; n];
    let mut count = 0;
    let mut stack = Vec::new();
    for s in 0..n {
        if label[s] {
            continue;
        }
        count += 1;
        label[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for (&v, &w) in m.csr().row(u).0.iter().zip(m.csr().row(u).1) {
                if !label[v] && w != 0.0 {
                    label[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    count
}

fn finalize(m: &SparseSymmetric, mut v: Vec<f64>) -> EigenPair {
    remove_mean(&mut v);
    let norm = dot(&v, &v).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    fix_sign(&mut v);
    let mv = m.matvec(&v);
    let value = dot(&v, &mv).max(0.0);
    let residual = mv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - value * b).powi(2))
        .sum::<f64>()
        .sqrt();
    EigenPair {
        value,
        vector: v,
        residual,
    }
}

/// The `num` smallest eigenpairs of `m` on the orthogonal complement of the
/// constant vector, in ascending order.
///
/// Output is bit-for-bit deterministic for a given matrix and options: all
/// reductions run in a fixed order and parallelism is only across
/// independent block columns.
pub fn smallest_nonconstant_eigenpairs(
    m: &SparseSymmetric,
    num: usize,
    opts: &SolverOptions,
) -> Result<Vec<EigenPair>> {
    eigenpairs_with_budget(m, num, opts, ENVELOPE_BUDGET)
}

fn eigenpairs_with_budget(
    m: &SparseSymmetric,
    num: usize,
    opts: &SolverOptions,
    budget: usize,
) -> Result<Vec<EigenPair>> {
    let n = m.n();
    if num == 0 {
        return Err(Error::parameter("requested zero eigenpairs"));
    }
    if num >= n {
        return Err(Error::parameter(format!(
            "requested {num} non-constant eigenpairs of a {n}x{n} matrix"
        )));
    }
    if !(opts.tol > 0.0) {
        return Err(Error::parameter(format!("tolerance must be positive, got {}", opts.tol)));
    }
    if opts.max_iter == 0 {
        return Err(Error::parameter("max_iter must be at least 1"));
    }
    let components = pattern_components(m);
    if components > 1 {
        warn!("matrix pattern has {components} connected components; the spectrum has extra zero eigenvalues");
    }

    let p = (num + BLOCK_PADDING).min(n - 1);
    let max_diag = m.diagonal().iter().fold(0.0f64, |a, d| a.max(*d));
    let shift = if max_diag > 0.0 { RELATIVE_SHIFT * max_diag } else { 1.0 };

    let perm = rcm_ordering(m);
    let envelope = envelope_size(m, &perm);
    let inverse = if envelope <= budget {
        debug!("envelope factorization with {envelope} entries");
        Inverse::Direct(SkylineCholesky::factor(m, shift, perm)?)
    } else {
        debug!("envelope of {envelope} entries exceeds budget; using iterative inner solves");
        let diag = m.diagonal().iter().map(|d| d + shift).collect();
        Inverse::Iterative { m, shift, diag }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut block: Vec<Vec<f64>> = (0..p)
        .map(|_| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    orthonormalize(&mut block, &mut rng);

    let mut best_residual = f64::INFINITY;
    for iteration in 1..=opts.max_iter {
        let images: Vec<Vec<f64>> = block.par_iter().map(|q| m.matvec(q)).collect();
        let h = DMatrix::from_fn(p, p, |a, b| {
            0.5 * (dot(&block[a], &images[b]) + dot(&block[b], &images[a]))
        });
        let eig = SymmetricEigen::new(h);
        let mut order: Vec<usize> = (0..p).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]).then(a.cmp(&b)));
        let ritz: Vec<Vec<f64>> = order
            .iter()
            .map(|&c| {
                let mut x = vec![0.0; n];
                for (a, q) in block.iter().enumerate() {
                    let s = eig.eigenvectors[(a, c)];
                    for (xi, qi) in x.iter_mut().zip(q) {
                        *xi += s * qi;
                    }
                }
                x
            })
            .collect();

        let pairs: Vec<EigenPair> = ritz[..num].par_iter().map(|x| finalize(m, x.clone())).collect();
        let worst = pairs.iter().map(|e| e.residual).fold(0.0f64, f64::max);
        best_residual = best_residual.min(worst);
        if worst <= opts.tol {
            debug!("subspace iteration converged in {iteration} iterations (residual {worst:.2e})");
            return Ok(pairs);
        }
        if iteration == opts.max_iter {
            break;
        }

        let solved: Vec<Result<Vec<f64>>> = ritz.par_iter().map(|x| inverse.apply(x)).collect();
        block = solved.into_iter().collect::<Result<_>>()?;
        orthonormalize(&mut block, &mut rng);
    }
    Err(Error::NonConvergence {
        solver: "shift-invert subspace iteration",
        iterations: opts.max_iter,
        best_residual,
    })
}
