use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use tempfile::tempdir;

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fve2l")).args(args).output().expect("spawn fve2l")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    let mut full: Vec<&str> = args.to_vec();
    let out = dir.to_str().unwrap();
    full.extend(["--out", out]);
    run(&full)
}

fn manifest(dir: &Path) -> serde_json::Value {
    serde_json::from_str(&fs::read_to_string(dir.join("run-manifest.json")).unwrap()).unwrap()
}

#[test]
fn solve_writes_solution_and_manifest() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--order", "2", "--n", "4", "--export-matrix"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("dof,x,y,value"));
    // Quadratic plus bubble on a 4x4 mesh: 81 Lagrange nodes and 32 bubbles.
    assert_eq!(lines.count(), 81 + 32);
    let first = text.lines().nth(1).unwrap();
    let value = first.split(',').nth(3).unwrap();
    assert!(value.contains('e') && value.split('e').next().unwrap().len() == 18, "17 significant digits: {value}");
    assert!(fs::read_to_string(dir.path().join("matrix.mtx")).unwrap().starts_with("%%MatrixMarket"));
    let m = manifest(dir.path());
    assert_eq!(m["exit_code"], 0);
    assert_eq!(m["invocation"]["command"], "solve");
}

#[test]
fn elasticity_solution_has_two_components() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--order", "3", "--problem", "example2", "--n", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("solution.csv")).unwrap();
    assert!(text.starts_with("dof,x,y,value_x,value_y\n"));
}

#[test]
fn convergence_outputs() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["convergence", "--order", "2", "--n", "2,4,8"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = fs::read_to_string(dir.path().join("convergence.csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("convergence.json")).unwrap()).unwrap();
    let l2 = json["l2_order"].as_f64().unwrap();
    assert!(l2 > 2.5 && l2 < 3.5, "{l2}");
}

#[test]
fn convergence_needs_three_levels() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["convergence", "--order", "2", "--n", "4,8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn conservation_csv_columns() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["conservation", "--order", "3", "--n", "4"]);
    assert_eq!(out.status.code(), Some(0));
    let text = fs::read_to_string(dir.path().join("conservation.csv")).unwrap();
    assert!(text.starts_with("layer,id,cx,cy,flux,equa\n"));
    // 25 vertices in layer I and 32 triangles in layer II.
    assert_eq!(text.lines().count(), 1 + 25 + 32);
    let m = manifest(dir.path());
    assert!(m["summary"]["layer_II_max_abs_flux"].as_f64().unwrap() < 1e-8);
}

#[test]
fn stability_json_and_infeasible_exit() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["stability", "--order", "4"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("stability.json")).unwrap()).unwrap();
    for key in ["order", "a", "b", "r1_lower", "BN_degrees", "feasible", "curve"] {
        assert!(json.get(key).is_some(), "missing {key}");
    }
    assert_eq!(json["curve"].as_array().unwrap().len(), 101);

    // Identity-like parameters with indefinite H(1, 1).
    let params = dir.path().join("params.json");
    fs::write(&params, r#"{"a": [0.0, 1.0], "b": [0.0, 0.0, 0.0]}"#).unwrap();
    let out = run_in(dir.path(), &["stability", "--order", "2", "--params", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(4));
    assert!(dir.path().join("error.json").exists());
}

#[test]
fn stability_rejects_wrong_parameter_count() {
    let dir = tempdir().unwrap();
    let params = dir.path().join("params.json");
    fs::write(&params, r#"{"a": [0.0], "b": [0.0, 0.0, 0.0]}"#).unwrap();
    let out = run_in(dir.path(), &["stability", "--order", "2", "--params", params.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(run(&["solve", "--order", "5"]).status.code(), Some(2));
    assert_eq!(run(&["solve"]).status.code(), Some(2));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(2));
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["solve", "--order", "2", "--problem", "constant", "--diffusion", "1,0,0,-1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn help_documents_outputs() {
    let out = run(&["--help"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.contains("conservation.csv  layer,id,cx,cy,flux,equa"));
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempdir().unwrap();
    let config = dir.path().join("run.cfg");
    fs::write(&config, format!("command = solve\norder = 4\nn = 2\nout = {}\n", dir.path().display())).unwrap();
    let out = run(&["--config", config.to_str().unwrap(), "--order", "3"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let m = manifest(dir.path());
    assert_eq!(m["invocation"]["args"]["common"]["order"], 3);
    assert_eq!(m["invocation"]["args"]["n"], 2);
}

#[test]
fn thread_cap_from_environment() {
    let dir = tempdir().unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_fve2l"))
        .args(["solve", "--order", "2", "--n", "2", "--out", dir.path().to_str().unwrap()])
        .env("FVE2L_THREADS", "1")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert_eq!(manifest(dir.path())["threads"], 1);
    let bad = Command::new(env!("CARGO_BIN_EXE_fve2l"))
        .args(["solve", "--order", "2", "--n", "2", "--out", dir.path().to_str().unwrap()])
        .env("FVE2L_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(bad.status.code(), Some(2));
}

#[test]
fn condnum_reports_indefinite_symmetric_part() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["condnum", "--order", "2", "--n", "2,4"]);
    let csv = fs::read_to_string(dir.path().join("condnum.csv")).unwrap();
    assert!(csv.starts_with("scheme,n,size,sigma_max,lambda_min_sym,kappa\n"));
    assert_eq!(csv.lines().count(), 5);
    let fem_ok = csv.lines().filter(|l| l.starts_with("fem,")).all(|l| {
        let kappa: f64 = l.split(',').nth(5).unwrap().parse().unwrap();
        kappa > 1.0
    });
    assert!(fem_ok);
    // Exit code follows the sign of the FVE-2L symmetric part.
    let fve_positive = csv.lines().filter(|l| l.starts_with("fve2l,")).all(|l| {
        let lmin: f64 = l.split(',').nth(4).unwrap().parse().unwrap();
        lmin > 0.0
    });
    assert_eq!(out.status.code(), Some(if fve_positive { 0 } else { 3 }));
}

#[test]
fn manifest_outputs_exist_and_parse() {
    let dir = tempdir().unwrap();
    let out = run_in(dir.path(), &["convergence", "--order", "3", "--n", "2,4,8"]);
    assert_eq!(out.status.code(), Some(0));
    let m = manifest(dir.path());
    let files = m["outputs"].as_array().unwrap();
    assert_eq!(files.len(), 2);
    for f in files {
        let path = dir.path().join(f.as_str().unwrap());
        let text = fs::read_to_string(&path).unwrap();
        if path.extension().unwrap() == "json" {
            serde_json::from_str::<serde_json::Value>(&text).unwrap();
        } else {
            let mut rdr = csv::Reader::from_reader(text.as_bytes());
            let width = rdr.headers().unwrap().len();
            for rec in rdr.records() {
                let rec = rec.unwrap();
                assert_eq!(rec.len(), width);
                for field in rec.iter().skip(1) {
                    field.parse::<f64>().unwrap();
                }
            }
        }
    }
}

#[test]
fn seeded_optimizer_is_deterministic() {
    let a = tempdir().unwrap();
    let b = tempdir().unwrap();
    let args = ["stability", "--order", "4", "--params", "optimize", "--budget", "60", "--segments", "20", "--seed", "7"];
    assert_eq!(run_in(a.path(), &args).status.code(), Some(0));
    assert_eq!(run_in(b.path(), &args).status.code(), Some(0));
    let read = |d: &Path| fs::read_to_string(d.join("stability.json")).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}
