//! Scores embeddings against ground truth and analytic eigenfunctions.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use log::warn;
use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::datasets::{DatasetMeta, PointCloud};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::parameter(format!("length mismatch: {} vs {}", a.len(), b.len())));
    }
    if a.len() < 2 {
        return Err(Error::UndefinedCorrelation("fewer than two samples".into()));
    }
    Ok(())
}

fn centered(a: &[f64]) -> (Vec<f64>, f64) {
    let mean = a.iter().sum::<f64>() / a.len() as f64;
    let c: Vec<f64> = a.iter().map(|x| x - mean).collect();
    let ss = c.iter().map(|x| x * x).sum();
    (c, ss)
}

fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    let (ca, sa) = centered(a);
    let (cb, sb) = centered(b);
    if sa == 0.0 || sb == 0.0 {
        return Err(Error::UndefinedCorrelation("an input is constant".into()));
    }
    let cov: f64 = ca.iter().zip(&cb).map(|(x, y)| x * y).sum();
    Ok((cov / (sa.sqrt() * sb.sqrt())).clamp(-1.0, 1.0))
}

/// 1-based ranks; tied values share the average of their ranks.
pub fn ranks(a: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..a.len()).collect();
    idx.sort_by(|&i, &j| a[i].total_cmp(&a[j]));
    let mut out = vec![0.0; a.len()];
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && a[idx[end]] == a[idx[start]] {
            end += 1;
        }
        let avg = (start + end + 1) as f64 / 2.0;
        for &i in &idx[start..end] {
            out[i] = avg;
        }
        start = end;
    }
    out
}

/// Sample correlation; Spearman is Pearson on average ranks.
pub fn correlation(a: &[f64], b: &[f64], kind: CorrelationKind) -> Result<f64> {
    check_pair(a, b)?;
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::parameter("correlation inputs must be finite"));
    }
    match kind {
        CorrelationKind::Pearson => pearson(a, b),
        CorrelationKind::Spearman => pearson(&ranks(a), &ranks(b)),
    }
}

/// R^2 of the least-squares fit `y ~ a x + b`. A constant `y` is fit exactly (R^2 = 1).
pub fn linear_fit_r2(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    let (cx, sx) = centered(x);
    if sx == 0.0 {
        return Err(Error::UndefinedCorrelation("regressor is constant".into()));
    }
    let (cy, sy) = centered(y);
    if sy == 0.0 {
        return Ok(1.0);
    }
    let sxy: f64 = cx.iter().zip(&cy).map(|(a, b)| a * b).sum();
    Ok((sxy * sxy / (sx * sy)).clamp(0.0, 1.0))
}

/// One quantile bin of [`width_uniformity`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinSpan {
    pub long_min: f64,
    pub long_max: f64,
    pub count: usize,
    /// `|d coord / d long|` from the within-bin fit `coord ~ a + c long + d wide`.
    pub span: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WidthUniformity {
    /// Coefficient of variation of the per-bin spans.
    pub value: f64,
    pub bins: Vec<BinSpan>,
}

/// Evenness of the coordinate's rate of change along `truth_long`.
///
/// Points are split into `bins` equal-count quantile bins of `truth_long`.
/// In each bin the coordinate is fit as `a + c * long + d * wide` and the
/// span is `|c|`: how much coordinate range a unit of the long truth
/// coordinate covers. Returns the coefficient of variation (population
/// standard deviation over mean) of the spans; 0 means even strip widths.
/// Bins too small for the fit reduce the bin count, with a warning.
pub fn width_uniformity(
    coord: &[f64],
    truth_long: &[f64],
    truth_wide: &[f64],
    bins: usize,
) -> Result<WidthUniformity> {
    if bins < 5 {
        return Err(Error::parameter(format!("width uniformity needs at least 5 bins, got {bins}")));
    }
    let n = coord.len();
    if truth_long.len() != n || truth_wide.len() != n {
        return Err(Error::parameter("width uniformity inputs differ in length"));
    }
    let mut used = bins.min(n / 4);
    if used < bins {
        warn!("only {n} points; reducing width-uniformity bins from {bins} to {used}");
    }
    if used < 2 {
        return Err(Error::parameter(format!("too few points ({n}) for a width profile")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| truth_long[i].total_cmp(&truth_long[j]).then(i.cmp(&j)));

    loop {
        let mut spans = Vec::with_capacity(used);
        let mut ok = true;
        for b in 0..used {
            let idx = &order[b * n / used..(b + 1) * n / used];
            match bin_slope(idx, coord, truth_long, truth_wide) {
                Some(span) => spans.push(BinSpan {
                    long_min: truth_long[idx[0]],
                    long_max: truth_long[idx[idx.len() - 1]],
                    count: idx.len(),
                    span,
                }),
                None => {
                    ok = false;
                    break;
                }
            }
        }
        if ok {
            let mean = spans.iter().map(|s| s.span).sum::<f64>() / used as f64;
            if mean == 0.0 {
                return Err(Error::UndefinedCorrelation(
                    "coordinate does not vary along the long truth coordinate".into(),
                ));
            }
            let var = spans.iter().map(|s| (s.span - mean).powi(2)).sum::<f64>() / used as f64;
            return Ok(WidthUniformity {
                value: var.sqrt() / mean,
                bins: spans,
            });
        }
        if used <= 2 {
            return Err(Error::parameter("truth coordinates are degenerate within every bin"));
        }
        warn!("degenerate width-uniformity bin; reducing bins from {used} to {}", used - 1);
        used -= 1;
    }
}

fn bin_slope(idx: &[usize], coord: &[f64], long: &[f64], wide: &[f64]) -> Option<f64> {
    let m = idx.len() as f64;
    let mean = |v: &[f64]| idx.iter().map(|&i| v[i]).sum::<f64>() / m;
    let (ml, mw, mc) = (mean(long), mean(wide), mean(coord));
    let mut xtx = Matrix3::zeros();
    let mut xty = Vector3::zeros();
    for &i in idx {
        // centered design keeps the normal equations well scaled
        let row = Vector3::new(1.0, long[i] - ml, wide[i] - mw);
        xtx += row * row.transpose();
        xty += row * (coord[i] - mc);
    }
    let scale = xtx.diagonal().max();
    if xtx[(1, 1)] <= 1e-12 * scale || xtx[(2, 2)] <= 1e-12 * scale {
        return None;
    }
    let det = xtx.determinant();
    if det.abs() <= 1e-14 * xtx[(0, 0)] * xtx[(1, 1)] * xtx[(2, 2)] {
        return None;
    }
    let beta = xtx.lu().solve(&xty)?;
    Some(beta[1].abs())
}

/// `|Pearson(coord, cos(j * pi * x_axis / length_axis))|` on a box dataset;
/// `axis` is 1-based.
pub fn eigenfunction_match(coord: &[f64], pc: &PointCloud, mode: (usize, usize)) -> Result<f64> {
    let (j, axis) = mode;
    let truth = pc.truth.as_ref().ok_or(Error::MissingTruth)?;
    let DatasetMeta::Box { lengths } = pc.meta else {
        return Err(Error::parameter("eigenfunction matching needs a box dataset"));
    };
    if axis == 0 || axis > 3 || j == 0 {
        return Err(Error::parameter(format!("invalid mode ({j}, axis {axis})")));
    }
    let len = lengths[axis - 1];
    let f: Vec<f64> = truth
        .column(axis - 1)
        .iter()
        .map(|x| (j as f64 * PI * x / len).cos())
        .collect();
    Ok(correlation(coord, &f, CorrelationKind::Pearson)?.abs())
}

/// Mean over the two halves `split >= 0` and `split < 0` of
/// `|Spearman(coord, target)|` restricted to each half.
pub fn hemisphere_spearman(coord: &[f64], target: &[f64], split: &[f64]) -> Result<f64> {
    if coord.len() != target.len() || coord.len() != split.len() {
        return Err(Error::parameter("hemisphere inputs differ in length"));
    }
    let mut total = 0.0;
    for north in [true, false] {
        let idx: Vec<usize> = (0..coord.len()).filter(|&i| (split[i] >= 0.0) == north).collect();
        let a: Vec<f64> = idx.iter().map(|&i| coord[i]).collect();
        let b: Vec<f64> = idx.iter().map(|&i| target[i]).collect();
        total += correlation(&a, &b, CorrelationKind::Spearman)?.abs();
    }
    Ok(total / 2.0)
}

/// Points farther than `margin` from the boundary, or all points when the
/// dataset has no known boundary.
pub fn interior_mask(pc: &PointCloud, margin: f64) -> Vec<bool> {
    match pc.boundary_distances() {
        Some(d) => d.iter().map(|&x| x > margin).collect(),
        None => vec![true; pc.n()],
    }
}

/// Keeps entries whose mask bit is set.
pub fn select(v: &[f64], mask: &[bool]) -> Vec<f64> {
    v.iter().zip(mask).filter(|(_, m)| **m).map(|(x, _)| *x).collect()
}

/// Named metrics plus references to the inputs that produced them.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricReport {
    pub dataset: serde_json::Value,
    pub embedding: serde_json::Value,
    pub metrics: BTreeMap<String, f64>,
}

impl MetricReport {
    pub fn insert(&mut self, name: impl Into<String>, value: f64) {
        self.metrics.insert(name.into(), value);
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }
}
