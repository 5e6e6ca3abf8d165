use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use manifold_deflation::evaluation::MetricReport;
use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_mdeflate"))
}

fn run(args: &[&str], dir: &Path) -> Output {
    bin().args(args).current_dir(dir).output().expect("spawn mdeflate")
}

fn ok(args: &[&str], dir: &Path) {
    let out = run(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let rows = lines.map(|l| l.split(',').map(String::from).collect()).collect();
    (header, rows)
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

#[test]
fn scurve_with_hole_row_count() {
    let d = TempDir::new().unwrap();
    ok(
        &["generate", "--dataset", "scurve", "--n", "3000", "--noise", "0.1", "--hole", "default", "--seed", "1", "--out", "sc.csv"],
        d.path(),
    );
    let (header, rows) = read_csv(&p(&d, "sc.csv"));
    assert_eq!(header, ["x0", "x1", "x2", "truth_s", "truth_w"]);
    assert!(rows.len().abs_diff(2640) <= 10, "{} rows", rows.len());
    assert!(p(&d, "sc.json").exists());
}

#[test]
fn sphere_row_count() {
    let d = TempDir::new().unwrap();
    ok(&["generate", "--dataset", "sphere", "--n", "2000", "--out", "sp.csv"], d.path());
    assert_eq!(read_csv(&p(&d, "sp.csv")).1.len(), 2000);
}

#[test]
fn strip_within_bounds() {
    let d = TempDir::new().unwrap();
    ok(
        &["generate", "--dataset", "box", "--lengths", "28.274,9.425,3.142", "--n", "3000", "--out", "strip.csv"],
        d.path(),
    );
    let (_, rows) = read_csv(&p(&d, "strip.csv"));
    assert_eq!(rows.len(), 3000);
    let lengths = [28.274, 9.425, 3.142];
    for r in rows {
        for a in 0..3 {
            let v: f64 = r[a].parse().unwrap();
            assert!((0.0..=lengths[a]).contains(&v));
        }
    }
}

fn small_scurve(d: &TempDir) {
    ok(&["generate", "--dataset", "scurve", "--n", "800", "--seed", "2", "--out", "sc.csv"], d.path());
}

#[test]
fn embedding_shapes() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    ok(&["embed", "--in", "sc.csv", "--method", "deflation", "--m", "2", "--lambda", "3", "--out", "defl.csv"], d.path());
    let (header, rows) = read_csv(&p(&d, "defl.csv"));
    assert_eq!(header, ["coord_1", "coord_2"]);
    assert_eq!(rows.len(), read_csv(&p(&d, "sc.csv")).1.len());

    ok(&["embed", "--in", "sc.csv", "--method", "baseline", "--m", "5", "--out", "base.csv"], d.path());
    let (header, _) = read_csv(&p(&d, "base.csv"));
    assert_eq!(header.len(), 5);
    let side: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(p(&d, "base.json")).unwrap()).unwrap();
    let ev: Vec<f64> = serde_json::from_value(side["embedding"]["eigenvalues"].clone()).unwrap();
    assert_eq!(ev.len(), 5);
    assert!(ev.windows(2).all(|w| w[0] <= w[1]));
}

#[test]
fn reruns_are_byte_identical() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    let args = |out: &'static str| ["embed", "--in", "sc.csv", "--m", "2", "--vfi", "--out", out];
    ok(&args("a.csv"), d.path());
    ok(&args("b.csv"), d.path());
    let read = |n: &str| std::fs::read(p(&d, n)).unwrap();
    assert_eq!(read("a.csv"), read("b.csv"));

    let mut threaded = vec!["--threads", "1"];
    threaded.extend(args("c.csv"));
    ok(&threaded, d.path());
    assert_eq!(read("a.csv"), read("c.csv"));
}

#[test]
fn emitted_config_reproduces_run() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    ok(&["embed", "--in", "sc.csv", "--m", "2", "--lambda", "50", "--out", "e.csv"], d.path());
    let first = std::fs::read(p(&d, "e.csv")).unwrap();
    let first_side = std::fs::read(p(&d, "e.json")).unwrap();
    std::fs::copy(p(&d, "e.json"), p(&d, "saved.json")).unwrap();
    std::fs::remove_file(p(&d, "e.csv")).unwrap();
    ok(&["embed", "--config", "saved.json"], d.path());
    assert_eq!(std::fs::read(p(&d, "e.csv")).unwrap(), first);
    assert_eq!(std::fs::read(p(&d, "e.json")).unwrap(), first_side);

    // regenerating from the dataset sidecar
    std::fs::copy(p(&d, "sc.json"), p(&d, "data_cfg.json")).unwrap();
    ok(&["generate", "--config", "data_cfg.json", "--out", "again.csv"], d.path());
    assert_eq!(std::fs::read(p(&d, "sc.csv")).unwrap(), std::fs::read(p(&d, "again.csv")).unwrap());
}

#[test]
fn flags_override_config() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    ok(&["embed", "--in", "sc.csv", "--m", "2", "--out", "e.csv"], d.path());
    ok(&["embed", "--config", "e.json", "--m", "3", "--out", "f.csv"], d.path());
    assert_eq!(read_csv(&p(&d, "f.csv")).0.len(), 3);
}

#[test]
fn evaluate_strip_baseline_schema() {
    let d = TempDir::new().unwrap();
    ok(&["generate", "--dataset", "box", "--n", "600", "--seed", "4", "--out", "strip.csv"], d.path());
    ok(&["embed", "--in", "strip.csv", "--method", "baseline", "--m", "2", "--out", "e.csv"], d.path());
    ok(&["evaluate", "--data", "strip.csv", "--embedding", "e.csv", "--out", "r.json"], d.path());
    let r = MetricReport::read_json(&p(&d, "r.json")).unwrap();
    assert!(r.metrics.contains_key("eigenfunction_match_coord1_mode1_axis1"));
    assert!(r.metrics.contains_key("eigenfunction_match_coord2_mode2_axis1"));
    assert!(r.metrics.contains_key("eigenvalue_ratio_2_1"));
    assert_eq!(r.dataset["dataset"]["meta"]["kind"], "box");
}

#[test]
fn evaluate_scurve_deflation_schema_and_round_trip() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    ok(&["embed", "--in", "sc.csv", "--m", "2", "--out", "e.csv"], d.path());
    ok(
        &["evaluate", "--data", "sc.csv", "--embedding", "e.csv", "--margin", "0.05", "--out", "r.json"],
        d.path(),
    );
    let r = MetricReport::read_json(&p(&d, "r.json")).unwrap();
    for key in ["pearson_coord1_s", "pearson_coord2_w", "pearson_coord2_s", "width_uniformity_coord1", "r2_coord1_s"] {
        let v = r.metrics[key];
        assert!(v.is_finite(), "{key}");
    }
    assert!(r.metrics["n_evaluated"] < 800.0);
    assert_eq!(r.embedding["run"]["method"]["lambda"], 3.0);
    r.write_json(&p(&d, "r2.json")).unwrap();
    assert_eq!(MetricReport::read_json(&p(&d, "r2.json")).unwrap(), r);
    assert!(p(&d, "r.bins.csv").exists());
}

#[test]
fn export_plot_schema() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    ok(&["embed", "--in", "sc.csv", "--m", "2", "--out", "e.csv"], d.path());
    ok(&["export-plot", "--data", "sc.csv", "--embedding", "e.csv", "--out", "plot.csv"], d.path());
    let (header, rows) = read_csv(&p(&d, "plot.csv"));
    assert_eq!(header, ["index", "coord_1", "coord_2", "truth_s", "truth_w", "label"]);
    assert_eq!(rows.len(), read_csv(&p(&d, "sc.csv")).1.len());
    assert!(rows.iter().all(|r| r[5] == "first_half" || r[5] == "second_half"));

    ok(&["generate", "--dataset", "sphere", "--n", "300", "--out", "sp.csv"], d.path());
    ok(&["embed", "--in", "sp.csv", "--method", "baseline", "--m", "3", "--out", "se.csv"], d.path());
    ok(&["export-plot", "--data", "sp.csv", "--embedding", "se.csv", "--out", "sp_plot.csv"], d.path());
    let (header, rows) = read_csv(&p(&d, "sp_plot.csv"));
    assert_eq!(header.len(), 1 + 3 + 2 + 1);
    assert!(rows.iter().any(|r| r[6] == "east") && rows.iter().any(|r| r[6] == "west"));

    std::fs::write(p(&d, "plain.csv"), "a,b,c\n0,0,1\n1,0,0\n0,1,0\n1,1,1\n0.5,0.2,0.9\n").unwrap();
    ok(&["embed", "--in", "plain.csv", "--method", "baseline", "--k", "3", "--m", "1", "--out", "pe.csv"], d.path());
    ok(&["export-plot", "--data", "plain.csv", "--embedding", "pe.csv", "--out", "pp.csv"], d.path());
    assert_eq!(read_csv(&p(&d, "pp.csv")).0, ["index", "coord_1"]);
}

#[test]
fn dumps_edges_and_fields() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    ok(
        &["embed", "--in", "sc.csv", "--m", "2", "--edges", "edges.csv", "--fields-dir", "fields", "--out", "e.csv"],
        d.path(),
    );
    assert!(read_csv(&p(&d, "edges.csv")).1.len() > 800);
    assert!(p(&d, "fields/field_1.csv").exists() && p(&d, "fields/field_2.csv").exists());
}

#[test]
fn exit_codes() {
    let d = TempDir::new().unwrap();
    small_scurve(&d);
    let code = |args: &[&str]| run(args, d.path()).status.code().unwrap();
    assert_eq!(code(&["embed", "--in", "missing.csv", "--out", "x.csv"]), 1);
    assert_eq!(code(&["embed", "--in", "sc.csv", "--m", "0", "--out", "x.csv"]), 2);
    assert_eq!(code(&["embed", "--in", "sc.csv", "--lambda", "-1", "--out", "x.csv"]), 2);
    assert_eq!(code(&["generate", "--dataset", "box", "--lengths", "1,0,1", "--out", "x.csv"]), 2);
    std::fs::write(p(&d, "bad.json"), r#"{"method": {"lamda": 2}}"#).unwrap();
    assert_eq!(code(&["embed", "--config", "bad.json", "--in", "sc.csv", "--out", "x.csv"]), 2);
    assert_eq!(
        code(&["embed", "--in", "sc.csv", "--m", "2", "--max-iter", "1", "--tol", "1e-15", "--out", "x.csv"]),
        3
    );
    let out = run(&["embed", "--in", "sc.csv", "--max-iter", "1", "--tol", "1e-15", "--out", "x.csv"], d.path());
    assert!(String::from_utf8_lossy(&out.stderr).contains("deflation failed"));

    std::fs::write(p(&d, "notruth.csv"), "a,b\n0,0\n1,0\n0,1\n1,1\n0.5,0.5\n").unwrap();
    ok(&["embed", "--in", "notruth.csv", "--method", "baseline", "--k", "2", "--m", "1", "--out", "nt.csv"], d.path());
    assert_eq!(code(&["evaluate", "--data", "notruth.csv", "--embedding", "nt.csv", "--out", "r.json"]), 2);
}
