use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

fn varimorph(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_varimorph"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str], dir: &Path) -> String {
    let out = varimorph(args, dir);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(args: &[&str], dir: &Path) -> i32 {
    varimorph(args, dir).status.code().expect("exit code")
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn write_square(dir: &Path) {
    fs::write(dir.join("square.csv"), "# unit square\n0,0\n1,0\n1,1\n0,1\n").unwrap();
}

#[test]
fn convert_unit_square() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write_square(dir);
    ok(&["convert", "square.csv", "square.json", "--kind", "curve", "--closed"], dir);
    let doc = json(&dir.join("square.json"));
    assert_eq!(doc["n"], 2);
    assert_eq!(doc["d"], 1);
    let atoms = doc["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 4);
    let mass: f64 = atoms.iter().map(|a| a["weight"].as_f64().unwrap()).sum();
    assert!((mass - 4.0).abs() < 1e-12);
}

#[test]
fn converted_varifold_round_trips_bitwise() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    fs::write(
        dir.join("tri.obj"),
        "v 0 0 0\nv 1 0 0\nv 0 1 0\nv 0 0 1\nf 1 2 3\nf 1/1 3/3 4/4\n",
    )
    .unwrap();
    ok(&["convert", "tri.obj", "a.json", "--kind", "mesh"], dir);
    let first = fs::read(dir.join("a.json")).unwrap();
    let v = varimorph::io::read_varifold(&dir.join("a.json")).unwrap();
    varimorph::io::write_varifold(&dir.join("b.json"), &v).unwrap();
    assert_eq!(first, fs::read(dir.join("b.json")).unwrap());
}

fn identity_config(dir: &Path, model: &str) {
    write_square(dir);
    ok(&["convert", "square.csv", "square.json", "--kind", "curve", "--closed"], dir);
    let cfg = format!(
        r#"{{
  "source": "square.json",
  "target": "square.json",
  "model": {model},
  "lambda": 10.0,
  "deform_kernel": {{ "sigma_v": 1.0 }},
  "fidelity_kernel": {{ "sigma_w": 0.5 }},
  "steps": 10
}}"#
    );
    fs::write(dir.join("config.json"), cfg).unwrap();
}

#[test]
fn register_identity_converges_immediately() {
    for model in [r#"{"kind": "lddmm"}"#, r#"{"kind": "l2", "gamma": 1.0}"#, r#"{"kind": "fr", "gamma": 1.0}"#] {
        let tmp = TempDir::new().unwrap();
        let dir = tmp.path();
        identity_config(dir, model);
        ok(&["register", "config.json", "out"], dir);
        let res = json(&dir.join("out/result.json"));
        assert!(res["diagnostics"]["iterations"].as_u64().unwrap() <= 2, "{model}");
        for key in ["deformation", "weight", "fidelity", "total"] {
            assert!(res["energies"][key].as_f64().unwrap().abs() < 1e-12, "{model} {key}");
        }
        assert!(dir.join("out/trajectory.json").exists());
        assert!(dir.join("out/weights.csv").exists());
        assert!(dir.join("out/trajectory/frame_010.vtk").exists());
    }
}

#[test]
fn geodesic_dirac_reproduces_endpoints() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let stdout = ok(
        &[
            "geodesic-dirac", "--x0", "0,0", "--x1", "1,0", "--u0", "1,0", "--u1", "0,1", "--r0", "0.5", "--r1", "1",
            "--gamma", "10", "--samples", "21", "path.csv",
        ],
        dir,
    );
    assert!(stdout.starts_with("cost "));
    let text = fs::read_to_string(dir.join("path.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "t,x0,x1,u0,u1,r");
    let rows: Vec<Vec<f64>> = lines
        .map(|l| l.split(',').map(|c| c.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 21);
    assert_eq!(rows[0], vec![0.0, 0.0, 0.0, 1.0, 0.0, 0.5]);
    assert_eq!(rows[20], vec![1.0, 1.0, 0.0, 0.0, 1.0, 1.0]);
}

#[test]
fn geodesic_dirac_point_masses() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    let stdout = ok(
        &["geodesic-dirac", "--x0", "0", "--x1", "1", "--r0", "1", "--r1", "4", "--gamma", "1", "path.csv"],
        dir,
    );
    let cost: f64 = stdout.split_whitespace().nth(1).unwrap().parse().unwrap();
    assert!((cost - 2.5).abs() < 1e-12);
    let text = fs::read_to_string(dir.join("path.csv")).unwrap();
    assert_eq!(text.lines().nth(1).unwrap(), "0,0,1");
    assert_eq!(text.lines().last().unwrap(), "1,1,4");
}

#[test]
fn shoot_then_eval_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    write_square(dir);
    ok(&["convert", "square.csv", "square.json", "--kind", "curve", "--closed"], dir);
    let momenta: Vec<f64> = (0..16).map(|k| 0.05 * ((k * 5 % 7) as f64 - 3.0)).collect();
    let doc = serde_json::json!({ "momenta": momenta, "controls": [0.1, -0.2, 0.0, 0.3] });
    fs::write(dir.join("p0.json"), doc.to_string()).unwrap();
    for run in ["a", "b"] {
        ok(&["--deterministic", "shoot", "square.json", "p0.json", run, "--model", "fr", "--gamma", "0.5"], dir);
        ok(&["--deterministic", "eval", run, "square.json", &format!("{run}.csv"), "--histogram", &format!("{run}_h.csv")], dir);
    }
    for file in ["a/trajectory.json", "a.csv", "a_h.csv", "a/energy.json", "a/weights.csv"] {
        let other = file.replacen('a', "b", 1);
        assert_eq!(fs::read(dir.join(file)).unwrap(), fs::read(dir.join(other)).unwrap(), "{file}");
    }
    let energy = json(&dir.join("a/energy.json"));
    assert!(energy["drift"].as_f64().unwrap() < 1e-4);
    let metrics = fs::read_to_string(dir.join("a.csv")).unwrap();
    assert!(metrics.starts_with("metric,value\nchamfer,"));
    assert!(metrics.contains("atoms,4"));
}

#[test]
fn synth_writes_instances() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    ok(&["synth", "circle-ellipse", "ce", "--segments", "16"], dir);
    assert_eq!(json(&dir.join("ce/source.json"))["atoms"].as_array().unwrap().len(), 16);
    ok(&["--seed", "4", "synth", "partial", "pm", "--segments", "20", "--removed", "0.25"], dir);
    assert_eq!(json(&dir.join("pm/target.json"))["atoms"].as_array().unwrap().len(), 15);
    assert_eq!(json(&dir.join("pm/ground_truth.json"))["atoms"].as_array().unwrap().len(), 20);
}

#[test]
fn sweep_writes_one_row_per_gamma() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    identity_config(dir, r#"{"kind": "fr", "gamma": 1.0}"#);
    ok(&["sweep", "config.json", "sweep.csv", "--gammas", "0.1,1,10"], dir);
    let text = fs::read_to_string(dir.join("sweep.csv")).unwrap();
    assert_eq!(text.lines().count(), 4);
    assert!(text.starts_with("gamma,deformation,weight,fidelity,max_weight_change,weight_share\n"));
}

#[test]
fn failures_map_to_documented_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    assert_eq!(code(&["register"], dir), 2);
    assert_eq!(code(&["register", "missing.json", "out"], dir), 3);
    fs::write(dir.join("broken.json"), "{ not json").unwrap();
    assert_eq!(code(&["register", "broken.json", "out"], dir), 4);
    identity_config(dir, r#"{"kind": "lddmm"}"#);
    let cfg = fs::read_to_string(dir.join("config.json")).unwrap();
    fs::write(dir.join("extra.json"), cfg.replacen("\"steps\"", "\"stepz\"", 1)).unwrap();
    assert_eq!(code(&["register", "extra.json", "out"], dir), 5);
    fs::write(dir.join("nolambda.json"), cfg.replacen("10.0", "0.0", 1)).unwrap();
    assert_eq!(code(&["register", "nolambda.json", "out"], dir), 5);
    assert_eq!(
        code(
            &[
                "geodesic-dirac", "--x0", "0,0", "--x1", "1,0", "--u0", "1,0", "--u1", "-1,0", "--r0", "1", "--r1",
                "1", "--gamma", "1", "p.csv",
            ],
            dir,
        ),
        6
    );
    fs::write(dir.join("flat.csv"), "0,0\n0,0\n1,0\n").unwrap();
    ok(&["convert", "flat.csv", "flat.json", "--kind", "curve"], dir);
    fs::write(dir.join("p0.json"), r#"{"momenta": [0, 0, 0, 0, 0, 0, 0, 0], "controls": [0, 0]}"#).unwrap();
    assert_eq!(code(&["shoot", "flat.json", "p0.json", "shot", "--model", "fr"], dir), 7);
    assert_eq!(code(&["shoot", "flat.json", "p0.json", "shot", "--model", "lddmm"], dir), 5);
}

#[test]
fn help_documents_exit_codes() {
    let tmp = TempDir::new().unwrap();
    let out = ok(&["--help"], tmp.path());
    for line in ["Exit codes:", "  3  file system error", "  9  internal consistency failure", "RAYON_NUM_THREADS"] {
        assert!(out.contains(line), "{line}");
    }
}
