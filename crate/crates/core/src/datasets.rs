//! Synthetic manifolds with ground truth, and CSV point cloud I/O.
//!
//! Every generator is a pure function of its arguments: the RNG is a
//! `ChaCha8Rng` seeded from the `seed` parameter, so identical parameters
//! always give bit-identical clouds.

use std::f64::consts::PI;
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Length of the S-curve's intrinsic rectangle.
pub const SCURVE_LENGTH: f64 = 3.0;
/// Width of the S-curve's intrinsic rectangle.
pub const SCURVE_WIDTH: f64 = 1.0;
/// Radius of each half-cylinder; a half turn of this radius has arc length 1.5.
pub const SCURVE_RADIUS: f64 = 1.5 / PI;

/// Axis-aligned rectangle in intrinsic `(s, w)` coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub s_min: f64,
    pub s_max: f64,
    pub w_min: f64,
    pub w_max: f64,
}

impl Rect {
    pub fn new(s_min: f64, s_max: f64, w_min: f64, w_max: f64) -> Self {
        Rect {
            s_min,
            s_max,
            w_min,
            w_max,
        }
    }

    /// Centered 0.9 x 0.4 hole, 12% of the S-curve's area.
    pub fn default_hole() -> Self {
        Rect::new(1.05, 1.95, 0.3, 0.7)
    }

    pub fn area(&self) -> f64 {
        (self.s_max - self.s_min) * (self.w_max - self.w_min)
    }

    pub fn contains(&self, s: f64, w: f64) -> bool {
        s >= self.s_min && s <= self.s_max && w >= self.w_min && w <= self.w_max
    }

    /// Euclidean distance from `(s, w)` to the rectangle (0 inside).
    pub fn distance(&self, s: f64, w: f64) -> f64 {
        let ds = (self.s_min - s).max(0.0).max(s - self.s_max);
        let dw = (self.w_min - w).max(0.0).max(w - self.w_max);
        ds.hypot(dw)
    }
}

/// Generator parameters carried alongside a cloud so runs are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetMeta {
    Scurve {
        requested: usize,
        hole: Option<Rect>,
        noise_halfwidth: f64,
    },
    Sphere {
        stretch_ns: f64,
        stretch_ew: f64,
    },
    Box {
        lengths: [f64; 3],
    },
    External,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PointCloud {
    /// n x d ambient coordinates.
    pub points: DMatrix<f64>,
    /// n x g intrinsic coordinates, used only for evaluation.
    pub truth: Option<DMatrix<f64>>,
    pub truth_names: Vec<String>,
    pub seed: u64,
    pub meta: DatasetMeta,
}

impl PointCloud {
    pub fn new(
        points: DMatrix<f64>,
        truth: Option<(DMatrix<f64>, Vec<String>)>,
        seed: u64,
        meta: DatasetMeta,
    ) -> Result<Self> {
        if points.nrows() == 0 || points.ncols() == 0 {
            return Err(Error::parameter("point cloud needs n >= 1 and d >= 1"));
        }
        if points.iter().any(|v| !v.is_finite()) {
            return Err(Error::parameter("point cloud contains non-finite entries"));
        }
        let (truth, truth_names) = match truth {
            Some((t, names)) => {
                if t.nrows() != points.nrows() {
                    return Err(Error::parameter(format!(
                        "truth has {} rows but the cloud has {} points",
                        t.nrows(),
                        points.nrows()
                    )));
                }
                if names.len() != t.ncols() {
                    return Err(Error::parameter("truth column names do not match truth width"));
                }
                if t.iter().any(|v| !v.is_finite()) {
                    return Err(Error::parameter("truth contains non-finite entries"));
                }
                (Some(t), names)
            }
            None => (None, Vec::new()),
        };
        Ok(PointCloud {
            points,
            truth,
            truth_names,
            seed,
            meta,
        })
    }

    pub fn n(&self) -> usize {
        self.points.nrows()
    }

    pub fn dim(&self) -> usize {
        self.points.ncols()
    }

    pub fn point(&self, i: usize) -> Vec<f64> {
        self.points.row(i).iter().copied().collect()
    }

    /// Truth column by index.
    pub fn truth_column(&self, j: usize) -> Result<Vec<f64>> {
        let t = self.truth.as_ref().ok_or(Error::MissingTruth)?;
        if j >= t.ncols() {
            return Err(Error::parameter(format!(
                "truth column {j} out of range (g = {})",
                t.ncols()
            )));
        }
        Ok(t.column(j).iter().copied().collect())
    }

    /// Distance of each sample to the manifold boundary, in intrinsic units.
    ///
    /// `None` for boundaryless or unknown manifolds.
    pub fn boundary_distances(&self) -> Option<Vec<f64>> {
        let t = self.truth.as_ref()?;
        match &self.meta {
            DatasetMeta::Scurve { hole, .. } => Some(
                (0..self.n())
                    .map(|i| {
                        let (s, w) = (t[(i, 0)], t[(i, 1)]);
                        let outer = s.min(SCURVE_LENGTH - s).min(w).min(SCURVE_WIDTH - w);
                        match hole {
                            Some(h) => outer.min(h.distance(s, w)),
                            None => outer,
                        }
                    })
                    .collect(),
            ),
            DatasetMeta::Box { lengths } => Some(
                (0..self.n())
                    .map(|i| {
                        (0..3)
                            .map(|a| t[(i, a)].min(lengths[a] - t[(i, a)]))
                            .fold(f64::INFINITY, f64::min)
                    })
                    .collect(),
            ),
            DatasetMeta::Sphere { .. } | DatasetMeta::External => None,
        }
    }
}

/// Isometric S-curve map from intrinsic `(s, w)` to R^3.
///
/// `s` in [0, 1.5] runs along one half-cylinder, `s` in (1.5, 3] along the
/// mirrored one; both have radius 1.5/pi, so the map has unit speed in `s`.
/// `w` runs along the cylinder axis (y).
pub fn scurve_point(s: f64, w: f64) -> [f64; 3] {
    let r = SCURVE_RADIUS;
    if s <= 1.5 {
        let theta = s / r;
        [-r * theta.sin(), w, r - r * theta.cos()]
    } else {
        let psi = (s - 1.5) / r;
        [r * psi.sin(), w, 3.0 * r - r * psi.cos()]
    }
}

/// Samples the S-curve, optionally with a rectangular hole and cube noise.
///
/// With a hole, rejection sampling continues until
/// `round(n * (1 - hole_area / 3))` points are retained, so the retained
/// count is deterministic in `n` and the hole.
pub fn generate_scurve(
    n: usize,
    hole: Option<Rect>,
    noise_halfwidth: f64,
    seed: u64,
) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::parameter("n must be at least 1"));
    }
    if !(noise_halfwidth >= 0.0 && noise_halfwidth.is_finite()) {
        return Err(Error::parameter(format!(
            "noise half-width must be finite and >= 0, got {noise_halfwidth}"
        )));
    }
    let target = match &hole {
        Some(h) => {
            let inside = h.s_min >= 0.0
                && h.s_max <= SCURVE_LENGTH
                && h.w_min >= 0.0
                && h.w_max <= SCURVE_WIDTH
                && h.s_min <= h.s_max
                && h.w_min <= h.w_max;
            if !inside {
                return Err(Error::parameter(format!(
                    "hole {h:?} must lie inside [0,3]x[0,1]"
                )));
            }
            let keep = 1.0 - h.area() / (SCURVE_LENGTH * SCURVE_WIDTH);
            if keep <= 0.0 {
                return Err(Error::EmptyManifold(
                    "hole covers the whole S-curve rectangle".into(),
                ));
            }
            ((n as f64 * keep).round() as usize).max(1)
        }
        None => n,
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(target, 3);
    let mut truth = DMatrix::zeros(target, 2);
    let mut kept = 0;
    while kept < target {
        let s = SCURVE_LENGTH * rng.random::<f64>();
        let w = SCURVE_WIDTH * rng.random::<f64>();
        if hole.is_some_and(|h| h.contains(s, w)) {
            continue;
        }
        let mut p = scurve_point(s, w);
        if noise_halfwidth > 0.0 {
            for c in p.iter_mut() {
                *c += rng.random_range(-noise_halfwidth..=noise_halfwidth);
            }
        }
        for (a, c) in p.iter().enumerate() {
            points[(kept, a)] = *c;
        }
        truth[(kept, 0)] = s;
        truth[(kept, 1)] = w;
        kept += 1;
    }
    PointCloud::new(
        points,
        Some((truth, vec!["s".into(), "w".into()])),
        seed,
        DatasetMeta::Scurve {
            requested: n,
            hole,
            noise_halfwidth,
        },
    )
}

/// Spherical Fibonacci lattice, stretched along z (`stretch_ns`) and x (`stretch_ew`).
///
/// Truth holds the (longitude, latitude) of the unstretched lattice point.
pub fn generate_sphere_fibonacci(n: usize, stretch_ns: f64, stretch_ew: f64) -> Result<PointCloud> {
    if n < 4 {
        return Err(Error::parameter("sphere lattice needs n >= 4"));
    }
    if !(stretch_ns > 0.0 && stretch_ew > 0.0) || !stretch_ns.is_finite() || !stretch_ew.is_finite() {
        return Err(Error::parameter("stretch factors must be positive"));
    }
    let golden_angle = PI * (3.0 - 5f64.sqrt());
    let mut points = DMatrix::zeros(n, 3);
    let mut truth = DMatrix::zeros(n, 2);
    for i in 0..n {
        let z = 1.0 - (2 * i + 1) as f64 / n as f64;
        let r = (1.0 - z * z).sqrt();
        let theta = golden_angle * i as f64;
        let (x, y) = (r * theta.cos(), r * theta.sin());
        points[(i, 0)] = x * stretch_ew;
        points[(i, 1)] = y;
        points[(i, 2)] = z * stretch_ns;
        truth[(i, 0)] = y.atan2(x);
        truth[(i, 1)] = z.asin();
    }
    PointCloud::new(
        points,
        Some((truth, vec!["longitude".into(), "latitude".into()])),
        0,
        DatasetMeta::Sphere {
            stretch_ns,
            stretch_ew,
        },
    )
}

/// Uniform samples from the solid box `[0,l0] x [0,l1] x [0,l2]`.
pub fn generate_box(n: usize, lengths: [f64; 3], seed: u64) -> Result<PointCloud> {
    if n == 0 {
        return Err(Error::parameter("n must be at least 1"));
    }
    if lengths.iter().any(|l| !(*l > 0.0 && l.is_finite())) {
        return Err(Error::parameter(format!("box lengths must be positive, got {lengths:?}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut points = DMatrix::zeros(n, 3);
    for i in 0..n {
        for (a, l) in lengths.iter().enumerate() {
            points[(i, a)] = l * rng.random::<f64>();
        }
    }
    let truth = points.clone();
    PointCloud::new(
        points,
        Some((truth, vec!["x1".into(), "x2".into(), "x3".into()])),
        seed,
        DatasetMeta::Box { lengths },
    )
}

/// Writes one row per point: columns `x0..x{d-1}` then `truth_<name>`.
pub fn save_csv(pc: &PointCloud, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
    let mut header: Vec<String> = (0..pc.dim()).map(|a| format!("x{a}")).collect();
    header.extend(pc.truth_names.iter().map(|name| format!("truth_{name}")));
    w.write_record(&header).map_err(|e| csv_io(path, e))?;
    let mut record = Vec::with_capacity(header.len());
    for i in 0..pc.n() {
        record.clear();
        record.extend(pc.points.row(i).iter().map(|v| format!("{v:?}")));
        if let Some(t) = &pc.truth {
            record.extend(t.row(i).iter().map(|v| format!("{v:?}")));
        }
        w.write_record(&record).map_err(|e| csv_io(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

/// Reads a cloud written by [`save_csv`] or any numeric CSV with a header row.
///
/// Columns whose header starts with `truth_` become ground truth; all others
/// are ambient coordinates. Row indices in errors count data rows from 1.
pub fn load_csv(path: &Path) -> Result<PointCloud> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let headers = reader
        .headers()
        .map_err(|e| Error::Parse {
            row: 0,
            message: e.to_string(),
        })?
        .clone();
    if headers.is_empty() || headers.iter().all(|h| h.is_empty()) {
        return Err(Error::Parse {
            row: 0,
            message: "missing header row".into(),
        });
    }
    let is_truth: Vec<bool> = headers.iter().map(|h| h.starts_with("truth_")).collect();
    let truth_names: Vec<String> = headers
        .iter()
        .filter_map(|h| h.strip_prefix("truth_").map(str::to_string))
        .collect();
    let d = is_truth.iter().filter(|t| !**t).count();
    if d == 0 {
        return Err(Error::Parse {
            row: 0,
            message: "no ambient coordinate columns".into(),
        });
    }
    let g = truth_names.len();

    let mut ambient = Vec::new();
    let mut truth = Vec::new();
    let mut n = 0;
    for (idx, rec) in reader.records().enumerate() {
        let row = idx + 1;
        let rec = rec.map_err(|e| Error::Parse {
            row,
            message: e.to_string(),
        })?;
        for (cell, t) in rec.iter().zip(&is_truth) {
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                message: format!("non-numeric cell {cell:?}"),
            })?;
            if *t {
                truth.push(v);
            } else {
                ambient.push(v);
            }
        }
        n += 1;
    }
    if n == 0 {
        return Err(Error::Parse {
            row: 0,
            message: "file contains no data rows".into(),
        });
    }
    let points = DMatrix::from_row_slice(n, d, &ambient);
    let truth = (g > 0).then(|| (DMatrix::from_row_slice(n, g, &truth), truth_names));
    PointCloud::new(points, truth, 0, DatasetMeta::External)
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            row: 0,
            message: format!("{other:?}"),
        },
    }
}
