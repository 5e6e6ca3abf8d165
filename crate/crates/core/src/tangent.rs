//! Tangent Derivation Estimator: the sparse directional-derivative operator
//! induced by a coordinate function, its geometric refinements, and the
//! Frobenius-scaled deflation penalty `c * V^T V`.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::PointCloud;
use crate::error::{Error, Result};
use crate::graph::NeighborGraph;
use crate::sparse::{CsrMatrix, SparseSymmetric};

/// Centered sum of squares below `DEGENERACY_RTOL * max|phi|^2` marks a row degenerate.
pub const DEGENERACY_RTOL: f64 = 1e-12;
/// Singular values below this fraction of the largest are dropped by the projection.
pub const PROJECTION_RTOL: f64 = 1e-10;
/// Rows whose ambient image `row * Y~` is shorter than this cannot be rescaled.
pub const RESCALE_ATOL: f64 = 1e-14;

/// Which post-processing is applied to the raw estimator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Refinement {
    /// Raw regression rows.
    None,
    /// Project onto the neighbors' ambient span, then rescale to unit speed.
    ProjectRescale,
    /// Scale each row to unit Euclidean norm (for high-dimensional data).
    RowNormalize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldOptions {
    pub refinement: Refinement,
    /// Include the center point in its own regression neighborhood.
    pub include_self: bool,
}

impl Default for FieldOptions {
    fn default() -> Self {
        FieldOptions {
            refinement: Refinement::ProjectRescale,
            include_self: true,
        }
    }
}

/// Sparse n x n estimate of a vector field; row `i` is supported on the
/// closed neighborhood of `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorFieldOperator {
    matrix: CsrMatrix,
    degenerate_rows: Vec<usize>,
}

impl VectorFieldOperator {
    pub fn n(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &CsrMatrix {
        &self.matrix
    }

    /// Sorted indices of rows zeroed for numerical degeneracy.
    pub fn degenerate_rows(&self) -> &[usize] {
        &self.degenerate_rows
    }

    pub fn is_degenerate(&self, i: usize) -> bool {
        self.degenerate_rows.binary_search(&i).is_ok()
    }

    pub fn all_degenerate(&self) -> bool {
        self.degenerate_rows.len() == self.n()
    }

    /// `(V f)_i`, the estimated directional derivative of `f` at each sample.
    pub fn apply(&self, f: &[f64]) -> Vec<f64> {
        self.matrix.matvec(f)
    }

    /// Sparse triplets `i,j,value`.
    pub fn write_triplets_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "i,j,value")?;
            for (i, j, v) in self.matrix.iter() {
                writeln!(out, "{i},{j},{v:?}")?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    fn map_rows<F>(&self, f: F) -> VectorFieldOperator
    where
        F: Fn(usize, &[usize], &[f64]) -> Option<Vec<f64>> + Sync,
    {
        let n = self.n();
        let rows: Vec<(Vec<(usize, f64)>, bool)> = (0..n)
            .into_par_iter()
            .map(|i| {
                let (cols, vals) = self.matrix.row(i);
                if self.is_degenerate(i) {
                    return (cols.iter().map(|&j| (j, 0.0)).collect(), true);
                }
                match f(i, cols, vals) {
                    Some(new) => (cols.iter().copied().zip(new).collect(), false),
                    None => (cols.iter().map(|&j| (j, 0.0)).collect(), true),
                }
            })
            .collect();
        let degenerate_rows = rows
            .iter()
            .enumerate()
            .filter(|(_, r)| r.1)
            .map(|(i, _)| i)
            .collect();
        VectorFieldOperator {
            matrix: CsrMatrix::from_sorted_rows(n, rows.into_iter().map(|r| r.0).collect()),
            degenerate_rows,
        }
    }
}

/// Raw estimator with the center included in each neighborhood.
pub fn tde(phi: &[f64], g: &NeighborGraph) -> Result<VectorFieldOperator> {
    tde_with(phi, g, true)
}

/// Per-neighborhood simple linear regression on `phi`:
/// row `i` restricted to `A(i)` is `(phi_A - mean) / ||phi_A - mean||^2`.
pub fn tde_with(phi: &[f64], g: &NeighborGraph, include_self: bool) -> Result<VectorFieldOperator> {
    let n = g.n();
    if phi.len() != n {
        return Err(Error::parameter(format!(
            "coordinate has length {} but the graph has {n} nodes",
            phi.len()
        )));
    }
    if phi.iter().any(|v| !v.is_finite()) {
        return Err(Error::parameter("coordinate contains non-finite values"));
    }
    let scale = phi.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let threshold = DEGENERACY_RTOL * scale * scale;

    let rows: Vec<(Vec<(usize, f64)>, bool)> = (0..n)
        .into_par_iter()
        .map(|i| {
            let hood = if include_self {
                g.closed_neighborhood(i)
            } else {
                g.neighbors(i).to_vec()
            };
            if hood.is_empty() {
                return (Vec::new(), true);
            }
            let mean = hood.iter().map(|&j| phi[j]).sum::<f64>() / hood.len() as f64;
            let centered: Vec<f64> = hood.iter().map(|&j| phi[j] - mean).collect();
            let ss: f64 = centered.iter().map(|c| c * c).sum();
            if ss < threshold || ss == 0.0 {
                (hood.iter().map(|&j| (j, 0.0)).collect(), true)
            } else {
                (hood.iter().zip(&centered).map(|(&j, c)| (j, c / ss)).collect(), false)
            }
        })
        .collect();
    let degenerate_rows = rows
        .iter()
        .enumerate()
        .filter(|(_, r)| r.1)
        .map(|(i, _)| i)
        .collect();
    Ok(VectorFieldOperator {
        matrix: CsrMatrix::from_sorted_rows(n, rows.into_iter().map(|r| r.0).collect()),
        degenerate_rows,
    })
}

fn ambient_block(pc: &PointCloud, cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(cols.len(), pc.dim(), |a, b| pc.points[(cols[a], b)])
}

/// Projects each row onto the span of its neighbors' ambient coordinates.
///
/// The span is taken with an intercept: the neighbor block is centered on
/// its mean before the SVD, so the projected row stays orthogonal to the
/// constant vector while its action `row * (Y_J - 1 Y_i)` is unchanged.
pub fn refine_project(v: &VectorFieldOperator, pc: &PointCloud, g: &NeighborGraph) -> VectorFieldOperator {
    assert_eq!(pc.n(), g.n());
    v.map_rows(|_, cols, vals| {
        let mut block = ambient_block(pc, cols);
        for mut c in block.column_iter_mut() {
            let mean = c.mean();
            c.add_scalar_mut(-mean);
        }
        let svd = block.svd(true, false);
        let u = svd.u.expect("left singular vectors requested");
        let smax = svd.singular_values.iter().fold(0.0f64, |m, s| m.max(*s));
        if smax == 0.0 {
            return None;
        }
        let r = DVector::from_column_slice(vals);
        let mut out = DVector::zeros(vals.len());
        for (k, s) in svd.singular_values.iter().enumerate() {
            if *s > PROJECTION_RTOL * smax {
                let uk = u.column(k);
                out.axpy(uk.dot(&r), &uk, 1.0);
            }
        }
        if out.iter().all(|x| *x == 0.0) {
            return None;
        }
        Some(out.iter().copied().collect())
    })
}

/// Scales each row so that `||row * (Y_J - 1 Y_i)|| = 1`: the estimated
/// derivative along a unit-speed ambient chord is one.
pub fn refine_rescale(v: &VectorFieldOperator, pc: &PointCloud, g: &NeighborGraph) -> VectorFieldOperator {
    assert_eq!(pc.n(), g.n());
    v.map_rows(|i, cols, vals| {
        let image: f64 = (0..pc.dim())
            .map(|b| {
                let yi = pc.points[(i, b)];
                cols.iter()
                    .zip(vals)
                    .map(|(&j, r)| r * (pc.points[(j, b)] - yi))
                    .sum::<f64>()
                    .powi(2)
            })
            .sum::<f64>()
            .sqrt();
        if image < RESCALE_ATOL {
            None
        } else {
            Some(vals.iter().map(|r| r / image).collect())
        }
    })
}

/// Scales each non-degenerate row to unit Euclidean norm.
pub fn row_normalize(v: &VectorFieldOperator) -> VectorFieldOperator {
    v.map_rows(|_, _, vals| {
        let norm = vals.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm == 0.0 {
            None
        } else {
            Some(vals.iter().map(|x| x / norm).collect())
        }
    })
}

/// Raw estimator followed by the configured refinement.
pub fn estimate_field(
    phi: &[f64],
    pc: &PointCloud,
    g: &NeighborGraph,
    opts: &FieldOptions,
) -> Result<VectorFieldOperator> {
    let raw = tde_with(phi, g, opts.include_self)?;
    Ok(match opts.refinement {
        Refinement::None => raw,
        Refinement::ProjectRescale => refine_rescale(&refine_project(&raw, pc, g), pc, g),
        Refinement::RowNormalize => row_normalize(&raw),
    })
}

/// `c * V^T V` with `c` chosen so the penalty's Frobenius norm equals `||L||_F`.
pub fn penalty(v: &VectorFieldOperator, l: &SparseSymmetric) -> Result<SparseSymmetric> {
    if v.n() != l.n() {
        return Err(Error::parameter(format!(
            "vector field is {}x{} but the base operator is {}x{}",
            v.n(),
            v.n(),
            l.n(),
            l.n()
        )));
    }
    let gram = v.matrix().gram_symmetric();
    let norm = gram.frobenius_norm();
    if norm == 0.0 {
        return Err(Error::ZeroPenalty);
    }
    Ok(gram.scaled(l.frobenius_norm() / norm))
}
