//! The deflation loop, the Laplacian Eigenmaps baseline, and Vector Field
//! Inversion.

use std::io::Write;
use std::path::Path;

use log::warn;
use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datasets::PointCloud;
use crate::error::{Error, Result};
use crate::graph::{gaussian_kernel, GraphConstruction, NeighborGraph};
use crate::solver::{smallest_nonconstant_eigenpairs, solve_spd, SolverOptions, SpdMatrix};
use crate::sparse::SparseSymmetric;
use crate::tangent::{estimate_field, penalty, FieldOptions, VectorFieldOperator};

/// Default ridge is this fraction of `trace(K V^T V K) / n`.
pub const DEFAULT_RIDGE_FRACTION: f64 = 1e-3;
/// Relative residual required of the inversion solve.
pub const VFI_SOLVE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Baseline,
    Deflation,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeflationOptions {
    pub field: FieldOptions,
    pub solver: SolverOptions,
}

/// Everything needed to rerun the embedding step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub method: Method,
    pub m: usize,
    pub lambda: Option<f64>,
    pub field: Option<FieldOptions>,
    pub solver: SolverOptions,
    pub graph: Option<GraphConstruction>,
    pub bandwidth: Option<f64>,
    /// Ridge per coordinate when the coordinates were debiased.
    pub vfi_alphas: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub coords: Vec<Vec<f64>>,
    /// Eigenvalue of the operator each coordinate was taken from.
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    /// One field per coordinate for deflation; empty for the baseline.
    pub fields: Vec<VectorFieldOperator>,
    pub config: EmbeddingConfig,
    pub warnings: Vec<String>,
}

/// JSON sidecar written next to an embedding CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmbeddingSidecar {
    pub eigenvalues: Vec<f64>,
    pub residuals: Vec<f64>,
    pub degenerate_rows: Vec<usize>,
    pub config: EmbeddingConfig,
    pub warnings: Vec<String>,
}

fn check_lengths(l: &SparseSymmetric, pc: &PointCloud, g: &NeighborGraph) -> Result<()> {
    if l.n() != g.n() || pc.n() != g.n() {
        return Err(Error::parameter(format!(
            "size mismatch: operator {}, point cloud {}, graph {}",
            l.n(),
            pc.n(),
            g.n()
        )));
    }
    Ok(())
}

fn disconnected_warning(l: &SparseSymmetric) -> Option<String> {
    let c = crate::solver::pattern_components(l);
    (c > 1).then(|| {
        let msg = format!("graph has {c} connected components; zero eigenvalues beyond the constant are expected");
        warn!("{msg}");
        msg
    })
}

/// Laplacian Eigenmaps: the bottom `m` non-constant eigenvectors of `l`.
pub fn baseline_le(l: &SparseSymmetric, m: usize, solver: &SolverOptions) -> Result<Embedding> {
    if m == 0 {
        return Err(Error::parameter("target dimension must be at least 1"));
    }
    let pairs = smallest_nonconstant_eigenpairs(l, m, solver)?;
    Ok(Embedding {
        eigenvalues: pairs.iter().map(|p| p.value).collect(),
        residuals: pairs.iter().map(|p| p.residual).collect(),
        coords: pairs.into_iter().map(|p| p.vector).collect(),
        fields: Vec::new(),
        config: EmbeddingConfig {
            method: Method::Baseline,
            m,
            lambda: None,
            field: None,
            solver: *solver,
            graph: None,
            bandwidth: None,
            vfi_alphas: None,
        },
        warnings: disconnected_warning(l).into_iter().collect(),
    })
}

/// Manifold Deflation.
///
/// Coordinate `k` is the bottom non-constant eigenvector of
/// `M_k = L + lambda * sum_{j<k} P_j`, where `P_j` is the Frobenius-scaled
/// penalty of the refined field of coordinate `j`. With `lambda = 0` every
/// `M_k` equals `L`, and the coordinates are the baseline ones.
pub fn deflate_embed(
    l: &SparseSymmetric,
    pc: &PointCloud,
    g: &NeighborGraph,
    m: usize,
    lambda: f64,
    opts: &DeflationOptions,
) -> Result<Embedding> {
    check_lengths(l, pc, g)?;
    if m == 0 {
        return Err(Error::parameter("target dimension must be at least 1"));
    }
    if !(lambda >= 0.0 && lambda.is_finite()) {
        return Err(Error::parameter(format!("lambda must be finite and non-negative, got {lambda}")));
    }

    let mut coords = Vec::with_capacity(m);
    let mut eigenvalues = Vec::with_capacity(m);
    let mut residuals = Vec::with_capacity(m);
    if lambda == 0.0 {
        let base = baseline_le(l, m, &opts.solver)?;
        coords = base.coords;
        eigenvalues = base.eigenvalues;
        residuals = base.residuals;
    }

    let mut fields = Vec::with_capacity(m);
    let mut operator = l.clone();
    for k in 0..m {
        let coordinate = k + 1;
        if lambda > 0.0 {
            let pair = smallest_nonconstant_eigenpairs(&operator, 1, &opts.solver)
                .map_err(|e| Error::Coordinate {
                    coordinate,
                    source: Box::new(e),
                })?
                .remove(0);
            eigenvalues.push(pair.value);
            residuals.push(pair.residual);
            coords.push(pair.vector);
        }
        let field = estimate_field(&coords[k], pc, g, &opts.field)?;
        if field.all_degenerate() {
            return Err(Error::DegenerateField { coordinate });
        }
        if lambda > 0.0 && k + 1 < m {
            operator = operator.add_scaled(&penalty(&field, l)?, lambda);
        }
        fields.push(field);
    }

    let mut warnings: Vec<String> = disconnected_warning(l).into_iter().collect();
    for (k, f) in fields.iter().enumerate() {
        let d = f.degenerate_rows().len();
        if d > 0 {
            warnings.push(format!("field {} has {d} degenerate rows", k + 1));
        }
    }
    Ok(Embedding {
        coords,
        eigenvalues,
        residuals,
        fields,
        config: EmbeddingConfig {
            method: Method::Deflation,
            m,
            lambda: Some(lambda),
            field: Some(opts.field),
            solver: opts.solver,
            graph: Some(g.construction()),
            bandwidth: g.bandwidth(),
            vfi_alphas: None,
        },
        warnings,
    })
}

/// Dense Gaussian kernel `K_ij = exp(-|y_i - y_j|^2 / sigma^2)`.
pub fn kernel_matrix(pc: &PointCloud, sigma: f64) -> DMatrix<f64> {
    let n = pc.n();
    let rows: Vec<Vec<f64>> = (0..n).map(|i| pc.point(i)).collect();
    let mut k = DMatrix::zeros(n, n);
    k.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(j, col)| {
        for i in 0..n {
            let d2: f64 = rows[i].iter().zip(&rows[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            col[i] = gaussian_kernel(d2.sqrt(), sigma);
        }
    });
    k
}

/// `C C^T`, computed in parallel column blocks and symmetrized exactly.
fn outer_gram(c: &DMatrix<f64>) -> DMatrix<f64> {
    const BLOCK: usize = 64;
    let n = c.nrows();
    let starts: Vec<usize> = (0..n).step_by(BLOCK).collect();
    let blocks: Vec<DMatrix<f64>> = starts
        .par_iter()
        .map(|&s| {
            let w = BLOCK.min(n - s);
            c * c.rows(s, w).transpose()
        })
        .collect();
    let mut a = DMatrix::zeros(n, n);
    for (&s, b) in starts.iter().zip(&blocks) {
        a.columns_mut(s, b.ncols()).copy_from(b);
    }
    for j in 0..n {
        for i in 0..j {
            let avg = 0.5 * (a[(i, j)] + a[(j, i)]);
            a[(i, j)] = avg;
            a[(j, i)] = avg;
        }
    }
    a
}

/// Vector Field Inversion: kernel ridge regression of `V phi = 1`.
///
/// Returns `K (K V^T V K + alpha I)^{-1} K V^T 1`, mean-centered, with `K`
/// the Gaussian kernel at the graph bandwidth. `alpha = None` selects
/// `1e-3 * trace(K V^T V K) / n`. The ridge actually used is returned
/// alongside the coordinate.
pub fn vfi_debias_with_alpha(
    v: &VectorFieldOperator,
    pc: &PointCloud,
    g: &NeighborGraph,
    alpha: Option<f64>,
) -> Result<(Vec<f64>, f64)> {
    let n = g.n();
    if v.n() != n || pc.n() != n {
        return Err(Error::parameter(format!(
            "size mismatch: field {}, point cloud {}, graph {n}",
            v.n(),
            pc.n()
        )));
    }
    if let Some(a) = alpha {
        if !(a > 0.0 && a.is_finite()) {
            return Err(Error::parameter(format!(
                "ridge alpha must be positive; the unregularized inversion is ill-posed (got {a})"
            )));
        }
    }
    let sigma = g
        .bandwidth()
        .ok_or_else(|| Error::parameter("graph carries no Gaussian bandwidth for the inversion kernel"))?;
    let k = kernel_matrix(pc, sigma);

    // C = (V K)^T = K V^T; column i is sum_j V_ij K[:, j]
    let mut c = DMatrix::zeros(n, n);
    c.as_mut_slice().par_chunks_mut(n).enumerate().for_each(|(i, col)| {
        let (cols, vals) = v.matrix().row(i);
        for (&j, &w) in cols.iter().zip(vals) {
            for (x, kj) in col.iter_mut().zip(k.column(j).iter()) {
                *x += w * kj;
            }
        }
    });
    let rhs: Vec<f64> = (0..n).map(|r| c.row(r).iter().sum()).collect();
    let mut a = outer_gram(&c);
    drop(c);
    let alpha = alpha.unwrap_or_else(|| DEFAULT_RIDGE_FRACTION * a.trace() / n as f64);
    if !(alpha > 0.0) {
        return Err(Error::DegenerateField { coordinate: 0 });
    }
    for i in 0..n {
        a[(i, i)] += alpha;
    }
    let coef = solve_spd(SpdMatrix::Dense(&a), &rhs, VFI_SOLVE_TOL, 10)?;
    drop(a);
    let mut phi: Vec<f64> = (&k * nalgebra::DVector::from_vec(coef)).iter().copied().collect();
    let mean = phi.iter().sum::<f64>() / n as f64;
    for x in phi.iter_mut() {
        *x -= mean;
    }
    Ok((phi, alpha))
}

/// Vector Field Inversion of a single coordinate's field; see
/// [`vfi_debias_with_alpha`].
pub fn vfi_debias(
    v: &VectorFieldOperator,
    pc: &PointCloud,
    g: &NeighborGraph,
    alpha: Option<f64>,
) -> Result<Vec<f64>> {
    vfi_debias_with_alpha(v, pc, g, alpha).map(|r| r.0)
}

impl Embedding {
    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn n(&self) -> usize {
        self.coords.first().map_or(0, Vec::len)
    }

    /// Replaces every coordinate by its inversion, rescaled to unit norm.
    pub fn debiased(&self, pc: &PointCloud, g: &NeighborGraph, alpha: Option<f64>) -> Result<Embedding> {
        if self.fields.len() != self.coords.len() {
            return Err(Error::parameter("inversion needs one vector field per coordinate"));
        }
        let mut out = self.clone();
        let mut alphas = Vec::with_capacity(self.dim());
        for (k, field) in self.fields.iter().enumerate() {
            let (mut phi, a) = vfi_debias_with_alpha(field, pc, g, alpha).map_err(|e| match e {
                Error::DegenerateField { .. } => Error::DegenerateField { coordinate: k + 1 },
                other => Error::Coordinate {
                    coordinate: k + 1,
                    source: Box::new(other),
                },
            })?;
            let norm = phi.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                return Err(Error::DegenerateField { coordinate: k + 1 });
            }
            for x in phi.iter_mut() {
                *x /= norm;
            }
            out.coords[k] = phi;
            alphas.push(a);
        }
        out.config.vfi_alphas = Some(alphas);
        Ok(out)
    }

    pub fn sidecar(&self) -> EmbeddingSidecar {
        EmbeddingSidecar {
            eigenvalues: self.eigenvalues.clone(),
            residuals: self.residuals.clone(),
            degenerate_rows: self.fields.iter().map(|f| f.degenerate_rows().len()).collect(),
            config: self.config.clone(),
            warnings: self.warnings.clone(),
        }
    }

    /// CSV with header `coord_1..coord_m`, one row per sample.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = std::io::BufWriter::new(file);
        let header: Vec<String> = (1..=self.dim()).map(|k| format!("coord_{k}")).collect();
        let mut write = || -> std::io::Result<()> {
            writeln!(out, "{}", header.join(","))?;
            for i in 0..self.n() {
                let row: Vec<String> = self.coords.iter().map(|c| format!("{:?}", c[i])).collect();
                writeln!(out, "{}", row.join(","))?;
            }
            out.flush()
        };
        write().map_err(|e| Error::io(path, e))
    }

    pub fn write_sidecar(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(&self.sidecar())?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// Reads the columns of an embedding CSV written by [`Embedding::write_csv`].
pub fn load_embedding_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(file);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    for (k, name) in header.iter().enumerate() {
        if name != format!("coord_{}", k + 1) {
            return Err(Error::Parse {
                row: 0,
                message: format!("expected column coord_{}, found {name:?}", k + 1),
            });
        }
    }
    let mut cols = vec![Vec::new(); header.len()];
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::Parse {
            row: r + 1,
            message: e.to_string(),
        })?;
        for (k, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
                row: r + 1,
                message: format!("not a number: {field:?}"),
            })?;
            cols[k].push(v);
        }
    }
    Ok(cols)
}
