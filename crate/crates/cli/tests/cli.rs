use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_surfrbf"));
    c.arg("--threads").arg("1");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = run(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn p(dir: &TempDir, name: &str) -> PathBuf {
    dir.path().join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn ply_vertices(path: &Path) -> usize {
    let text = std::fs::read_to_string(path).unwrap();
    let header: usize = text
        .lines()
        .find_map(|l| l.strip_prefix("element vertex "))
        .unwrap()
        .parse()
        .unwrap();
    let body = text.lines().skip_while(|l| *l != "end_header").skip(1).count();
    assert_eq!(header, body);
    header
}

fn manifest_files_exist(path: &Path) {
    let m = json(path);
    let files = m["files"].as_array().unwrap();
    assert!(!files.is_empty());
    for f in files {
        assert!(Path::new(f.as_str().unwrap()).exists(), "{f} missing");
    }
}

#[test]
fn nodes_are_reproducible() {
    let d = TempDir::new().unwrap();
    let (a, b) = (p(&d, "a.csv"), p(&d, "b.csv"));
    let out = ok(&["nodes", "--surface", "sphere", "--n", "256", "--seed", "3", "--out", s(&a)]);
    assert!(out.contains("N=256") && out.contains("rho="));
    ok(&["nodes", "--surface", "sphere", "--n", "256", "--seed", "3", "--out", s(&b)]);
    let text = std::fs::read_to_string(&a).unwrap();
    assert_eq!(text.lines().count(), 257);
    assert!(text.starts_with("x,y,z,nx,ny,nz,w\n"));
    assert_eq!(text, std::fs::read_to_string(&b).unwrap());
}

#[test]
fn torus_weights_sum_to_area() {
    let d = TempDir::new().unwrap();
    let f = p(&d, "torus.csv");
    ok(&["nodes", "--surface", "torus", "--n", "1000", "--out", s(&f)]);
    let mut rdr = csv_rows(&f);
    let total: f64 = rdr.iter_mut().map(|r| r[6]).sum();
    let area = 4.0 * std::f64::consts::PI.powi(2) / 3.0;
    assert!((total / area - 1.0).abs() < 0.05, "{total} vs {area}");
}

fn csv_rows(path: &Path) -> Vec<Vec<f64>> {
    std::fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|x| x.parse().unwrap()).collect())
        .collect()
}

#[test]
fn eigs_outputs_and_sidecar() {
    let d = TempDir::new().unwrap();
    let nodes = p(&d, "s.csv");
    ok(&["nodes", "--surface", "sphere", "--n", "300", "--out", s(&nodes)]);
    let (a, b) = (p(&d, "e1"), p(&d, "e2"));
    let out = ok(&["eigs", "--surface", "sphere", "--nodes", s(&nodes), "--dump-laplacian", "--out", s(&a)]);
    assert!(out.contains("imq:eps=2.8"), "{out}");
    ok(&["eigs", "--surface", "sphere", "--nodes", s(&nodes), "--out", s(&b)]);
    let csv_a = std::fs::read_to_string(p(&d, "e1.csv")).unwrap();
    assert_eq!(csv_a.lines().count(), 301);
    assert_eq!(csv_a, std::fs::read_to_string(p(&d, "e2.csv")).unwrap());
    manifest_files_exist(&p(&d, "e1.json"));
    let side = json(&p(&d, "e1.dmat.json"));
    assert_eq!(side["rows"], 300);
    let digest = side["node_sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);
    let bytes = std::fs::metadata(p(&d, "e1.dmat")).unwrap().len();
    assert_eq!(bytes, 16 + 8 * 300 * 300);
}

#[test]
fn converge_laplacian_table() {
    let d = TempDir::new().unwrap();
    let out = p(&d, "conv");
    let text = ok(&[
        "converge", "--surface", "sphere", "--problem", "sphere-harmonic", "--mode", "laplacian", "--kernel",
        "imq:eps=2.8", "--n", "100,200,300", "--out", s(&out),
    ]);
    assert!(text.contains("order l2="));
    let csv = std::fs::read_to_string(p(&d, "conv.csv")).unwrap();
    assert!(csv.starts_with("N,h,l2,linf\n"));
    assert_eq!(csv.lines().count(), 4);
    let m = json(&p(&d, "conv.json"));
    assert_eq!(m["result"]["rows"].as_array().unwrap().len(), 3);
    manifest_files_exist(&p(&d, "conv.json"));
}

#[test]
fn failed_rows_exit_3() {
    let d = TempDir::new().unwrap();
    let out = run(&[
        "converge", "--surface", "sphere", "--problem", "sphere-harmonic", "--mode", "laplacian", "--kernel",
        "imq:eps=0.001", "--n", "100,200,300", "--out", s(&p(&d, "bad")),
    ]);
    assert_eq!(out.status.code(), Some(3));
    assert!(p(&d, "bad.csv").exists());
}

#[test]
fn usage_errors_exit_2_with_one_line() {
    for args in [
        vec!["nodes", "--surface", "sphere", "--n", "10", "--bogus"],
        vec!["nodes", "--surface", "klein", "--n", "10", "--out", "/tmp/never.csv"],
        vec!["eigs", "--surface", "sphere", "--n", "20", "--kernel", "matern:nu=2.5,eps=1", "--out", "/tmp/x"],
    ] {
        let out = run(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{err}");
    }
}

#[test]
fn help_documents_flags() {
    let out = bin().args(["turing", "--help"]).output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for flag in ["--preset", "--snap-every", "--seed", "--config", "--threads", "--max-steps"] {
        assert!(text.contains(flag), "{flag}");
    }
}

#[test]
fn config_file_with_flag_override() {
    let d = TempDir::new().unwrap();
    let cfg = p(&d, "cfg.json");
    std::fs::write(&cfg, r#"{"surface": "sphere", "n": 120, "seed": 5}"#).unwrap();
    let (a, b) = (p(&d, "a.csv"), p(&d, "b.csv"));
    ok(&["nodes", "--config", s(&cfg), "--seed", "6", "--out", s(&a)]);
    ok(&["nodes", "--surface", "sphere", "--n", "120", "--seed", "6", "--out", s(&b)]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    std::fs::write(&cfg, r#"{"surface": "sphere", "colour": 1}"#).unwrap();
    let out = run(&["nodes", "--config", s(&cfg), "--n", "10", "--out", s(&a)]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn turing_snapshots() {
    let d = TempDir::new().unwrap();
    let out = p(&d, "turing");
    let text = bin()
        .args(["turing", "--surface", "sphere", "--n", "150", "--preset", "sphere-spots"])
        .args(["--max-steps", "250", "--snap-every", "100", "--out", s(&out)])
        .output()
        .unwrap();
    assert!(text.status.success());
    assert!(String::from_utf8_lossy(&text.stderr).contains("warning"));
    let snaps: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.starts_with("snap_"))
        .collect();
    assert_eq!(snaps.len(), 3);
    assert_eq!(ply_vertices(&out.join("snap_0000100.ply")), 150);
    assert_eq!(ply_vertices(&out.join("final.ply")), 150);
    manifest_files_exist(&out.join("run.json"));
    let m = json(&out.join("run.json"));
    assert_eq!(m["result"]["record"]["steps"], 250);
    assert_eq!(m["config"]["cmd"]["turing"]["seed"], 1);
}

#[test]
fn spiral_run_and_laplacian_test() {
    let d = TempDir::new().unwrap();
    let out = p(&d, "spiral");
    let text = ok(&[
        "spiral", "--surface", "sphere", "--n", "150", "--tend", "1.0", "--snap-every", "20", "--out", s(&out),
    ]);
    assert!(text.contains("steps=50"), "{text}");
    let snaps = std::fs::read_dir(&out)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_str().unwrap().starts_with("snap_"))
        .count();
    assert_eq!(snaps, 3);
    let diag = std::fs::read_to_string(out.join("diagnostics.csv")).unwrap();
    assert!(diag.starts_with("step,t,rate,u_min,u_max,u_std"));

    let text = ok(&["laplacian-test", "--surface", "torus", "--n", "300"]);
    assert!(text.contains("torus-polynomial") && text.contains("l2="), "{text}");
}
