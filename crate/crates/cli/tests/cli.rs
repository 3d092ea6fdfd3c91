//! End-to-end smoke tests of the command-line interface.

use std::path::PathBuf;
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bezmortar"))
}

fn models() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../models")
}

fn tmp_dir(tag: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("bezmortar-cli-{tag}-{}", std::process::id()));
    std::fs::create_dir_all(&d).unwrap();
    d
}

#[test]
fn verify_passes_on_shipped_models() {
    for name in ["two_patch_basic.model", "three_patch.model", "five_patch.model"] {
        let strategy = if name.starts_with("two_patch") { "B" } else { "OB" };
        let out = bin()
            .args(["verify", "--model"])
            .arg(models().join(name))
            .args(["--strategy", strategy, "--degrees", "2", "--refines", "1"])
            .output()
            .unwrap();
        let stdout = String::from_utf8_lossy(&out.stdout);
        assert!(out.status.success(), "{name}: {stdout}");
        assert!(stdout.contains("all checks passed"), "{name}: {stdout}");
    }
}

#[test]
fn verify_rejects_unknown_model() {
    let out = bin()
        .args(["verify", "--model", "/nonexistent.model"])
        .output()
        .unwrap();
    assert!(!out.status.success());
}

#[test]
fn project_writes_results_csv() {
    let dir = tmp_dir("project");
    let out = bin()
        .args(["project", "--strategy", "G", "--degrees", "2", "--refines", "0,1,2"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    let mut lines = csv.lines();
    assert!(lines.next().unwrap().starts_with("degree,refine,dofs,condensed_dofs,nnz,l2_err"));
    assert_eq!(lines.count(), 3);
    assert!(dir.join("meta.txt").exists());
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn solve_biharmonic_small_sweep() {
    let dir = tmp_dir("biharmonic");
    let out = bin()
        .args(["solve-biharmonic", "--model"])
        .arg(models().join("two_patch_basic.model"))
        .args(["--strategy", "B", "--degrees", "2", "--refines", "0,1", "--exact", "square-sine"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 3);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn sparsity_emits_three_dumps() {
    let dir = tmp_dir("sparsity");
    let out = bin()
        .args(["sparsity", "--model"])
        .arg(models().join("two_patch_basic.model"))
        .args(["--degrees", "2", "--refines", "1"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for name in ["sparsity_uncoupled.txt", "sparsity_global.txt", "sparsity_bezier.txt"] {
        assert!(dir.join(name).exists(), "{name} missing");
    }
    // dumps are deterministic
    let first = std::fs::read(dir.join("sparsity_bezier.txt")).unwrap();
    let out2 = bin()
        .args(["sparsity", "--model"])
        .arg(models().join("two_patch_basic.model"))
        .args(["--degrees", "2", "--refines", "1"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out2.status.success());
    let second = std::fs::read(dir.join("sparsity_bezier.txt")).unwrap();
    assert_eq!(first, second);
    std::fs::remove_dir_all(&dir).ok();
}

#[test]
fn eigen_c0_sweep_reports_frequencies() {
    let dir = tmp_dir("eigen");
    let out = bin()
        .args(["eigen", "--model"])
        .arg(models().join("square_membrane.model"))
        .args(["--strategy", "OB", "--continuity", "c0", "--degrees", "2", "--refines", "1"])
        .arg("--out")
        .arg(&dir)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    let row = csv.lines().nth(1).unwrap();
    let cells: Vec<&str> = row.split(',').collect();
    let omega_min: f64 = cells[10].parse().unwrap();
    let exact = std::f64::consts::PI * 2.0f64.sqrt() / 3.0;
    assert!((omega_min - exact).abs() / exact < 0.01, "omega_min {omega_min}");
    std::fs::remove_dir_all(&dir).ok();
}
