//! `mdeflate`: generate synthetic manifolds, embed them, and score embeddings.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use manifold_deflation::datasets::Rect;
use manifold_deflation::deflation::Method;
use manifold_deflation::tangent::Refinement;
use manifold_deflation::Error;

use config::{DatasetName, Margin, Preset, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "mdeflate", version, about = "Manifold deflation embeddings")]
struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample a synthetic manifold to CSV.
    Generate(GenerateArgs),
    /// Embed a point cloud CSV.
    Embed(EmbedArgs),
    /// Score an embedding against the dataset's ground truth.
    Evaluate(EvaluateArgs),
    /// Join embedding, truth and labels into one CSV for plotting.
    ExportPlot(ExportArgs),
}

#[derive(Args, Debug)]
struct GenerateArgs {
    /// JSON config or sidecar; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    dataset: Option<DatasetName>,
    #[arg(long)]
    n: Option<usize>,
    /// Half-width of the uniform noise cube.
    #[arg(long)]
    noise: Option<f64>,
    /// `default`, `none`, or `s_min,s_max,w_min,w_max`.
    #[arg(long, value_parser = parse_hole)]
    hole: Option<HoleArg>,
    /// Box side lengths `a,b,c`.
    #[arg(long, value_parser = parse_lengths)]
    lengths: Option<[f64; 3]>,
    #[arg(long)]
    stretch_ns: Option<f64>,
    #[arg(long)]
    stretch_ew: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EmbedArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long = "in")]
    input: Option<PathBuf>,
    #[arg(long, value_parser = parse_method)]
    method: Option<Method>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    /// `project_rescale`, `row_normalize` or `none`.
    #[arg(long, value_parser = parse_refinement)]
    refinement: Option<Refinement>,
    /// Leave the center point out of its own regression neighborhood.
    #[arg(long)]
    exclude_self: bool,
    /// Replace each coordinate by its vector field inversion.
    #[arg(long)]
    vfi: bool,
    /// Ridge for the inversion.
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long, conflicts_with = "radius")]
    k: Option<usize>,
    /// Use an epsilon graph with this radius instead of k nearest neighbors.
    #[arg(long)]
    radius: Option<f64>,
    #[arg(long)]
    bandwidth_multiplier: Option<f64>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    #[arg(long)]
    solver_seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the weighted edge list.
    #[arg(long)]
    edges: Option<PathBuf>,
    /// Also write each coordinate's vector field as triplets.
    #[arg(long)]
    fields_dir: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset CSV with truth columns.
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    embedding: Option<PathBuf>,
    /// Only score points farther than this from the boundary.
    #[arg(long, conflicts_with = "margin_bandwidths")]
    margin: Option<f64>,
    /// Boundary margin as a multiple of the graph bandwidth.
    #[arg(long)]
    margin_bandwidths: Option<f64>,
    /// Quantile bins for width uniformity.
    #[arg(long)]
    bins: Option<usize>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct ExportArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    data: Option<PathBuf>,
    #[arg(long)]
    embedding: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy)]
enum HoleArg {
    Default,
    None,
    Rect(Rect),
}

fn parse_hole(s: &str) -> Result<HoleArg, String> {
    match s {
        "default" => Ok(HoleArg::Default),
        "none" => Ok(HoleArg::None),
        _ => {
            let v = parse_floats(s)?;
            match v[..] {
                [a, b, c, d] => Ok(HoleArg::Rect(Rect::new(a, b, c, d))),
                _ => Err("expected default, none, or four numbers".into()),
            }
        }
    }
}

fn parse_lengths(s: &str) -> Result<[f64; 3], String> {
    parse_floats(s)?
        .try_into()
        .map_err(|_| "expected three comma-separated lengths".to_string())
}

fn parse_floats(s: &str) -> Result<Vec<f64>, String> {
    s.split(',')
        .map(|t| t.trim().parse::<f64>().map_err(|e| format!("{t:?}: {e}")))
        .collect()
}

fn parse_snake<T: serde::de::DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_method(s: &str) -> Result<Method, String> {
    parse_snake(s)
}

fn parse_refinement(s: &str) -> Result<Refinement, String> {
    parse_snake(s)
}

fn base_config(path: &Option<PathBuf>) -> Result<RunConfig, Error> {
    match path {
        Some(p) => config::load(p),
        None => Ok(RunConfig::default()),
    }
}

fn merge_generate(a: &GenerateArgs) -> Result<RunConfig, Error> {
    let mut c = base_config(&a.config)?;
    let d = &mut c.dataset;
    if let Some(v) = a.dataset {
        d.name = v;
    }
    if let Some(v) = a.n {
        d.n = v;
    }
    if let Some(v) = a.noise {
        d.noise_halfwidth = v;
    }
    match a.hole {
        Some(HoleArg::Default) => d.hole = Some(Rect::default_hole()),
        Some(HoleArg::None) => d.hole = None,
        Some(HoleArg::Rect(r)) => d.hole = Some(r),
        None => {}
    }
    if let Some(v) = a.lengths {
        d.lengths = v;
    }
    if let Some(v) = a.stretch_ns {
        d.stretch_ns = v;
    }
    if let Some(v) = a.stretch_ew {
        d.stretch_ew = v;
    }
    if let Some(v) = a.seed {
        d.seed = v;
    }
    if a.out.is_some() {
        c.paths.out = a.out.clone();
    }
    Ok(c)
}

fn merge_embed(a: &EmbedArgs) -> Result<RunConfig, Error> {
    let mut c = base_config(&a.config)?;
    let m = &mut c.method;
    if let Some(v) = a.method {
        m.method = v;
    }
    if let Some(v) = a.m {
        m.m = v;
    }
    if let Some(v) = a.preset {
        m.preset = v;
        if a.config.is_some() {
            // a new preset replaces values resolved from the old one
            m.lambda = None;
            m.refinement = None;
        }
    }
    if let Some(v) = a.lambda {
        m.lambda = Some(v);
    }
    if let Some(v) = a.refinement {
        m.refinement = Some(v);
    }
    if a.exclude_self {
        m.include_self = false;
    }
    if a.vfi {
        m.vfi = true;
    }
    if let Some(v) = a.alpha {
        m.alpha = Some(v);
    }
    if let Some(v) = a.k {
        c.graph.k = Some(v);
        c.graph.radius = None;
    }
    if let Some(v) = a.radius {
        c.graph.radius = Some(v);
        c.graph.k = None;
    }
    if let Some(v) = a.bandwidth_multiplier {
        c.graph.bandwidth_multiplier = v;
    }
    if let Some(v) = a.tol {
        c.solver.tol = v;
    }
    if let Some(v) = a.max_iter {
        c.solver.max_iter = v;
    }
    if let Some(v) = a.solver_seed {
        c.solver.seed = v;
    }
    let p = &mut c.paths;
    for (slot, flag) in [
        (&mut p.input, &a.input),
        (&mut p.out, &a.out),
        (&mut p.edges, &a.edges),
        (&mut p.fields_dir, &a.fields_dir),
    ] {
        if flag.is_some() {
            *slot = flag.clone();
        }
    }
    Ok(c)
}

fn merge_evaluate(a: &EvaluateArgs) -> Result<RunConfig, Error> {
    let mut c = base_config(&a.config)?;
    if let Some(v) = a.margin {
        c.evaluation.margin = Some(Margin::Absolute(v));
    }
    if let Some(v) = a.margin_bandwidths {
        c.evaluation.margin = Some(Margin::Bandwidths(v));
    }
    if let Some(v) = a.bins {
        c.evaluation.bins = Some(v);
    }
    merge_io(&mut c, &a.data, &a.embedding, &a.out);
    Ok(c)
}

fn merge_io(c: &mut RunConfig, data: &Option<PathBuf>, embedding: &Option<PathBuf>, out: &Option<PathBuf>) {
    if data.is_some() {
        c.paths.input = data.clone();
    }
    if embedding.is_some() {
        c.paths.embedding = embedding.clone();
    }
    if out.is_some() {
        c.paths.out = out.clone();
    }
}

fn exit_code(e: &Error) -> u8 {
    if e.is_parameter() {
        2
    } else if e.is_numerical() {
        3
    } else {
        1
    }
}

fn run(cli: Cli) -> Result<(), (&'static str, Error)> {
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| ("setup", Error::parameter(format!("cannot start {t} threads: {e}"))))?;
    }
    match cli.command {
        Command::Generate(a) => {
            let c = merge_generate(&a).map_err(|e| ("config", e))?;
            commands::generate(&c)
        }
        Command::Embed(a) => {
            let c = merge_embed(&a).map_err(|e| ("config", e))?;
            commands::embed(c)
        }
        Command::Evaluate(a) => {
            let c = merge_evaluate(&a).map_err(|e| ("config", e))?;
            commands::evaluate(&c)
        }
        Command::ExportPlot(a) => {
            let mut c = base_config(&a.config).map_err(|e| ("config", e))?;
            merge_io(&mut c, &a.data, &a.embedding, &a.out);
            commands::export_plot(&c)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err((stage, e)) => {
            eprintln!("mdeflate: {stage} failed: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
