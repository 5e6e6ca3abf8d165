//! Subcommand bodies. Each returns the failing stage alongside the error.

use std::io::Write;
use std::path::{Path, PathBuf};

use log::info;
use manifold_deflation::datasets::{
    generate_box, generate_scurve, generate_sphere_fibonacci, load_csv, save_csv, DatasetMeta, PointCloud,
};
use manifold_deflation::deflation::{baseline_le, deflate_embed, load_embedding_csv, DeflationOptions, Method};
use manifold_deflation::evaluation::{
    correlation, eigenfunction_match, hemisphere_spearman, interior_mask, linear_fit_r2, select, width_uniformity,
    CorrelationKind, MetricReport, WidthUniformity,
};
use manifold_deflation::graph::{epsilon_graph, gaussian_weights, knn_graph, laplacian, NeighborGraph};
use manifold_deflation::tangent::{estimate_field, FieldOptions};
use manifold_deflation::{Error, Result};
use nalgebra::DMatrix;
use serde_json::{json, Value};

use crate::config::{read_sidecar, sidecar_path, DatasetName, Margin, RunConfig};

type Staged<T> = std::result::Result<T, (&'static str, Error)>;

const DEFAULT_BINS: usize = 10;

trait Stage<T> {
    fn stage(self, name: &'static str) -> Staged<T>;
}

impl<T> Stage<T> for Result<T> {
    fn stage(self, name: &'static str) -> Staged<T> {
        self.map_err(|e| (name, e))
    }
}

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> Staged<&'a Path> {
    p.as_deref()
        .ok_or_else(|| ("config", Error::parameter(format!("missing --{flag}"))))
}

fn write_json(path: &Path, value: &Value) -> Result<()> {
    let text = serde_json::to_string_pretty(value)?;
    std::fs::write(path, text + "\n").map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    }
}

pub fn generate(c: &RunConfig) -> Staged<()> {
    let out = required(&c.paths.out, "out")?;
    let d = &c.dataset;
    let pc = match d.name {
        DatasetName::Scurve => generate_scurve(d.n, d.hole, d.noise_halfwidth, d.seed),
        DatasetName::Sphere => generate_sphere_fibonacci(d.n, d.stretch_ns, d.stretch_ew),
        DatasetName::Box => generate_box(d.n, d.lengths, d.seed),
    }
    .stage("generate")?;
    save_csv(&pc, out).stage("output")?;
    let sidecar = json!({
        "run": c,
        "dataset": {"meta": pc.meta, "n": pc.n(), "truth_names": pc.truth_names},
    });
    write_json(&sidecar_path(out), &sidecar).stage("output")?;
    info!("wrote {} points to {}", pc.n(), out.display());
    Ok(())
}

/// Dataset description stored next to a generated CSV, if any.
fn dataset_meta(data: &Path) -> Result<(Option<Value>, DatasetMeta)> {
    let Some(side) = read_sidecar(&sidecar_path(data))? else {
        return Ok((None, DatasetMeta::External));
    };
    let meta = match side.pointer("/dataset/meta") {
        Some(m) => serde_json::from_value(m.clone())
            .map_err(|e| Error::parameter(format!("dataset sidecar: {e}")))?,
        None => DatasetMeta::External,
    };
    Ok((Some(side), meta))
}

fn build_graph(c: &RunConfig, pc: &PointCloud) -> Result<NeighborGraph> {
    let g = match (c.graph.k, c.graph.radius) {
        (Some(k), None) => knn_graph(pc, k)?,
        (None, Some(r)) => epsilon_graph(pc, r)?,
        _ => return Err(Error::parameter("set exactly one of graph.k and graph.radius")),
    };
    gaussian_weights(&g, c.graph.bandwidth_multiplier)
}

pub fn embed(mut c: RunConfig) -> Staged<()> {
    let input = required(&c.paths.input, "in")?.to_path_buf();
    let out = required(&c.paths.out, "out")?.to_path_buf();
    let pc = load_csv(&input).stage("input")?;
    if let Some(side) = read_sidecar(&sidecar_path(&input)).stage("input")? {
        if let Some(d) = side.pointer("/run/dataset") {
            c.dataset = serde_json::from_value(d.clone())
                .map_err(|e| ("input", Error::parameter(format!("dataset sidecar: {e}"))))?;
        }
    }
    c.method.resolve();

    let g = build_graph(&c, &pc).stage("graph")?;
    let l = laplacian(&g);
    if let Some(p) = &c.paths.edges {
        g.write_edges_csv(p).stage("output")?;
    }

    let field = FieldOptions {
        refinement: c.method.resolved_refinement(),
        include_self: c.method.include_self,
    };
    let mut emb = match c.method.method {
        Method::Baseline => {
            let mut e = baseline_le(&l, c.method.m, &c.solver).stage("eigensolver")?;
            e.config.graph = Some(g.construction());
            e.config.bandwidth = g.bandwidth();
            e
        }
        Method::Deflation => {
            let opts = DeflationOptions {
                field,
                solver: c.solver,
            };
            deflate_embed(&l, &pc, &g, c.method.m, c.method.resolved_lambda(), &opts).stage("deflation")?
        }
    };
    if c.method.vfi {
        if emb.fields.is_empty() {
            emb.fields = emb
                .coords
                .iter()
                .map(|phi| estimate_field(phi, &pc, &g, &field))
                .collect::<Result<_>>()
                .stage("vector field")?;
            emb.config.field = Some(field);
        }
        emb = emb.debiased(&pc, &g, c.method.alpha).stage("inversion")?;
    }

    emb.write_csv(&out).stage("output")?;
    let sidecar = json!({"run": &c, "embedding": emb.sidecar()});
    write_json(&sidecar_path(&out), &sidecar).stage("output")?;
    if let Some(dir) = &c.paths.fields_dir {
        std::fs::create_dir_all(dir).map_err(io_err(dir)).stage("output")?;
        for (k, f) in emb.fields.iter().enumerate() {
            f.write_triplets_csv(&dir.join(format!("field_{}.csv", k + 1))).stage("output")?;
        }
    }
    for w in &emb.warnings {
        log::warn!("{w}");
    }
    info!("wrote {}-dimensional embedding to {}", emb.dim(), out.display());
    Ok(())
}

struct Inputs {
    pc: PointCloud,
    coords: Vec<Vec<f64>>,
    data_side: Option<Value>,
    emb_side: Option<Value>,
}

fn read_inputs(c: &RunConfig) -> Staged<Inputs> {
    let data = required(&c.paths.input, "data")?;
    let embedding = required(&c.paths.embedding, "embedding")?;
    let mut pc = load_csv(data).stage("input")?;
    let (data_side, meta) = dataset_meta(data).stage("input")?;
    pc.meta = meta;
    let coords = load_embedding_csv(embedding).stage("input")?;
    if coords.is_empty() || coords.iter().any(|col| col.len() != pc.n()) {
        return Err((
            "input",
            Error::parameter(format!("embedding rows do not match the {} data points", pc.n())),
        ));
    }
    let emb_side = read_sidecar(&sidecar_path(embedding)).stage("input")?;
    Ok(Inputs {
        pc,
        coords,
        data_side,
        emb_side,
    })
}

fn bandwidth(emb_side: &Option<Value>) -> Option<f64> {
    emb_side.as_ref()?.pointer("/embedding/config/bandwidth")?.as_f64()
}

fn subset(pc: &PointCloud, mask: &[bool]) -> Result<PointCloud> {
    let idx: Vec<usize> = (0..pc.n()).filter(|&i| mask[i]).collect();
    if idx.is_empty() {
        return Err(Error::parameter("boundary margin leaves no points"));
    }
    let points = DMatrix::from_fn(idx.len(), pc.dim(), |r, c| pc.points[(idx[r], c)]);
    let truth = pc
        .truth
        .as_ref()
        .map(|t| (DMatrix::from_fn(idx.len(), t.ncols(), |r, c| t[(idx[r], c)]), pc.truth_names.clone()));
    PointCloud::new(points, truth, pc.seed, pc.meta.clone())
}

fn truth_index(pc: &PointCloud, name: &str) -> Result<usize> {
    pc.truth_names
        .iter()
        .position(|n| n == name)
        .ok_or_else(|| Error::parameter(format!("dataset has no truth column {name:?}")))
}

pub fn evaluate(c: &RunConfig) -> Staged<()> {
    let out = required(&c.paths.out, "out")?;
    let inputs = read_inputs(c)?;
    if inputs.pc.truth.is_none() {
        return Err(("evaluate", Error::MissingTruth));
    }
    let margin = match c.evaluation.margin {
        None => None,
        Some(Margin::Absolute(v)) => Some(v),
        Some(Margin::Bandwidths(f)) => Some(
            f * bandwidth(&inputs.emb_side)
                .ok_or_else(|| ("evaluate", Error::parameter("embedding sidecar records no bandwidth")))?,
        ),
    };
    let mask = match margin {
        Some(m) => interior_mask(&inputs.pc, m),
        None => vec![true; inputs.pc.n()],
    };
    let (report, bins) = metrics(&inputs, &mask, margin, c.evaluation.bins.unwrap_or(DEFAULT_BINS)).stage("evaluate")?;
    report.write_json(out).stage("output")?;
    if !bins.is_empty() {
        write_bins(&out.with_extension("bins.csv"), &bins).stage("output")?;
    }
    Ok(())
}

fn metrics(
    inputs: &Inputs,
    mask: &[bool],
    margin: Option<f64>,
    nbins: usize,
) -> Result<(MetricReport, Vec<(usize, WidthUniformity)>)> {
    let pc = subset(&inputs.pc, mask)?;
    let coords: Vec<Vec<f64>> = inputs.coords.iter().map(|c| select(c, mask)).collect();
    let mut report = MetricReport {
        dataset: inputs.data_side.clone().unwrap_or(Value::Null),
        embedding: inputs.emb_side.clone().unwrap_or(Value::Null),
        ..MetricReport::default()
    };
    report.insert("n_evaluated", pc.n() as f64);
    if let Some(m) = margin {
        report.insert("margin", m);
    }
    let eigenvalues: Vec<f64> = inputs
        .emb_side
        .as_ref()
        .and_then(|s| s.pointer("/embedding/eigenvalues"))
        .and_then(|v| serde_json::from_value(v.clone()).ok())
        .unwrap_or_default();
    for (k, v) in eigenvalues.iter().enumerate() {
        report.insert(format!("eigenvalue_{}", k + 1), *v);
        if k > 0 && eigenvalues[0] > 0.0 {
            report.insert(format!("eigenvalue_ratio_{}_1", k + 1), v / eigenvalues[0]);
        }
    }

    for (k, coord) in coords.iter().enumerate() {
        for (j, name) in pc.truth_names.iter().enumerate() {
            let t = pc.truth_column(j)?;
            for (kind, label) in [(CorrelationKind::Pearson, "pearson"), (CorrelationKind::Spearman, "spearman")] {
                report.insert(format!("{label}_coord{}_{name}", k + 1), correlation(coord, &t, kind)?);
            }
        }
    }

    let mut bins = Vec::new();
    match pc.meta {
        DatasetMeta::Box { .. } => {
            for (k, coord) in coords.iter().enumerate() {
                for j in 1..=3 {
                    for axis in 1..=3 {
                        report.insert(
                            format!("eigenfunction_match_coord{}_mode{j}_axis{axis}", k + 1),
                            eigenfunction_match(coord, &pc, (j, axis))?,
                        );
                    }
                }
            }
        }
        DatasetMeta::Scurve { .. } => {
            let s = pc.truth_column(truth_index(&pc, "s")?)?;
            let w = pc.truth_column(truth_index(&pc, "w")?)?;
            for (k, coord) in coords.iter().enumerate() {
                report.insert(format!("r2_coord{}_s", k + 1), linear_fit_r2(&s, coord)?);
                report.insert(format!("r2_coord{}_w", k + 1), linear_fit_r2(&w, coord)?);
                let wu = width_uniformity(coord, &s, &w, nbins)?;
                report.insert(format!("width_uniformity_coord{}", k + 1), wu.value);
                bins.push((k + 1, wu));
            }
        }
        DatasetMeta::Sphere { .. } => {
            let lon = pc.truth_column(truth_index(&pc, "longitude")?)?;
            let lat = pc.truth_column(truth_index(&pc, "latitude")?)?;
            for (k, coord) in coords.iter().enumerate() {
                report.insert(
                    format!("hemisphere_spearman_coord{}_longitude", k + 1),
                    hemisphere_spearman(coord, &lon, &lon)?,
                );
                report.insert(
                    format!("hemisphere_spearman_coord{}_latitude", k + 1),
                    hemisphere_spearman(coord, &lat, &lon)?,
                );
            }
        }
        DatasetMeta::External => {}
    }
    Ok((report, bins))
}

fn write_bins(path: &Path, bins: &[(usize, WidthUniformity)]) -> Result<()> {
    let file = std::fs::File::create(path).map_err(io_err(path))?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "coord,long_min,long_max,count,span")?;
        for (k, wu) in bins {
            for b in &wu.bins {
                writeln!(w, "{k},{:?},{:?},{},{:?}", b.long_min, b.long_max, b.count, b.span)?;
            }
        }
        w.flush()
    };
    body().map_err(io_err(path))
}

fn label(meta: &DatasetMeta, pc: &PointCloud, i: usize) -> Option<&'static str> {
    let t = pc.truth.as_ref()?;
    match meta {
        DatasetMeta::Scurve { .. } => Some(if t[(i, 0)] <= 1.5 { "first_half" } else { "second_half" }),
        DatasetMeta::Sphere { .. } => Some(if t[(i, 0)] >= 0.0 { "east" } else { "west" }),
        _ => None,
    }
}

pub fn export_plot(c: &RunConfig) -> Staged<()> {
    let out = required(&c.paths.out, "out")?;
    let inputs = read_inputs(c)?;
    let pc = &inputs.pc;
    let labelled = pc.n() > 0 && label(&pc.meta, pc, 0).is_some();
    let mut header = vec!["index".to_string()];
    header.extend((1..=inputs.coords.len()).map(|k| format!("coord_{k}")));
    header.extend(pc.truth_names.iter().map(|n| format!("truth_{n}")));
    if labelled {
        header.push("label".into());
    }
    let file = std::fs::File::create(out).map_err(io_err(out)).stage("output")?;
    let mut w = std::io::BufWriter::new(file);
    let mut body = || -> std::io::Result<()> {
        writeln!(w, "{}", header.join(","))?;
        for i in 0..pc.n() {
            let mut row = vec![i.to_string()];
            row.extend(inputs.coords.iter().map(|c| format!("{:?}", c[i])));
            if let Some(t) = &pc.truth {
                row.extend(t.row(i).iter().map(|v| format!("{v:?}")));
            }
            if let Some(l) = label(&pc.meta, pc, i) {
                row.push(l.into());
            }
            writeln!(w, "{}", row.join(","))?;
        }
        w.flush()
    };
    body().map_err(io_err(out)).stage("output")
}
