//! Jacobi-preconditioned conjugate gradients.

use crate::error::{Error, Result};

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solves `A x = b` for SPD `A` given as a matrix-vector product.
///
/// Stops when the true residual satisfies `||A x - b|| <= tol * ||b||`.
pub fn pcg<F>(apply: F, diag: &[f64], b: &[f64], tol: f64, max_iter: usize) -> Result<Vec<f64>>
where
    F: Fn(&[f64], &mut [f64]),
{
    let n = b.len();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(x);
    }
    let target = tol * bnorm;
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut ax = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z = vec![0.0; n];
    let mut p = vec![0.0; n];
    let mut q = vec![0.0; n];
    let mut best = bnorm;
    let mut iterations = 0;

    // outer restarts guard against drift of the recursive residual
    while iterations < max_iter {
        apply(&x, &mut ax);
        for i in 0..n {
            r[i] = b[i] - ax[i];
        }
        let true_res = norm(&r);
        best = best.min(true_res);
        if true_res <= target {
            return Ok(x);
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        p.copy_from_slice(&z);
        let mut rz = dot(&r, &z);
        while iterations < max_iter {
            iterations += 1;
            apply(&p, &mut q);
            let pq = dot(&p, &q);
            if !(pq > 0.0) {
                return Err(Error::NotPositiveDefinite(format!(
                    "conjugate gradients met curvature {pq:.3e}"
                )));
            }
            let alpha = rz / pq;
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            if norm(&r) <= 0.5 * target {
                break;
            }
            for i in 0..n {
                z[i] = r[i] * inv_diag[i];
            }
            let rz_next = dot(&r, &z);
            let beta = rz_next / rz;
            rz = rz_next;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
    }
    apply(&x, &mut ax);
    let final_res = norm(&b.iter().zip(&ax).map(|(u, v)| u - v).collect::<Vec<_>>());
    if final_res <= target {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        solver: "conjugate gradients",
        iterations,
        best_residual: best.min(final_res),
    })
}
