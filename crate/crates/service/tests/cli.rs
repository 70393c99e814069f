use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const LISTING: &str = include_str!("../../core/tests/golden/listing.py");

fn scripts_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scripts")
}

fn tnet(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_tnet")).args(args).output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8(o.stderr.clone()).unwrap()
}

fn listing() -> String {
    scripts_dir().join("listing.json").display().to_string()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn compile_writes_the_listing() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("f.py");
    let ir = dir.path().join("ir.json");
    let schedule = dir.path().join("schedule.json");
    let o = tnet(&[
        "compile",
        &listing(),
        "-o",
        out.to_str().unwrap(),
        "--emit-ir",
        ir.to_str().unwrap(),
        "--schedule",
        schedule.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(stdout(&o), "");
    assert_eq!(fs::read_to_string(&out).unwrap(), LISTING);
    let ir: serde_json::Value = serde_json::from_str(&fs::read_to_string(&ir).unwrap()).unwrap();
    assert_eq!(ir["opt_level"], 0);
    assert_eq!(ir["dag"]["nodes"].as_array().unwrap().len(), 6);
    assert_eq!(ir["reports"], serde_json::json!([]));
    let levels: Vec<Vec<u64>> = serde_json::from_str(&fs::read_to_string(&schedule).unwrap()).unwrap();
    assert_eq!(levels, [[3], [4], [5]]);
}

#[test]
fn compile_to_stdout_with_optimization() {
    let o = tnet(&["compile", &listing(), "--opt", "1"]);
    assert!(o.status.success());
    let text = stdout(&o);
    assert!(text.contains("(5, 1, 4, 3))"));
    assert!(!text.contains("np.transpose"));
}

#[test]
fn empty_script_gives_an_empty_function() {
    let dir = TempDir::new().unwrap();
    let script = write(&dir, "empty.json", r#"{"version": 1, "actions": []}"#);
    let o = tnet(&["compile", &script]);
    assert_eq!(o.status.code(), Some(0));
    assert_eq!(stdout(&o), "import numpy as np\n\ndef f():\n    return ()\n");
}

#[test]
fn split_of_unknown_tensor_exits_2_with_index() {
    let dir = TempDir::new().unwrap();
    let script = write(
        &dir,
        "bad.json",
        r#"{"version": 1, "actions": [
            {"type": "create_tensor"},
            {"type": "attach_leg", "tensor": 0},
            {"type": "split", "tensor": 7, "row_dims": [0], "col_dims": [], "kind": "qr"}
        ]}"#,
    );
    let o = tnet(&["compile", &script]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("action 2"), "{}", stderr(&o));
    assert!(stderr(&o).contains("T7"), "{}", stderr(&o));
}

#[test]
fn malformed_script_exits_1_with_index() {
    let dir = TempDir::new().unwrap();
    let script = write(
        &dir,
        "bad.json",
        r#"{"version": 1, "actions": [{"type": "create_tensor"}, {"type": "contract", "tensors": "all"}]}"#,
    );
    let o = tnet(&["compile", &script]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("action 1"), "{}", stderr(&o));
    let o = tnet(&["compile", &write(&dir, "v2.json", r#"{"version": 2, "actions": []}"#)]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn io_failures_exit_3() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("missing.json");
    assert_eq!(tnet(&["compile", missing.to_str().unwrap()]).status.code(), Some(3));
    let into_dir = dir.path().join("no/such/dir/f.py");
    assert_eq!(
        tnet(&["compile", &listing(), "-o", into_dir.to_str().unwrap()])
            .status
            .code(),
        Some(3)
    );
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(tnet(&["compile", &listing(), "--opt", "5"]).status.code(), Some(1));
    assert_eq!(tnet(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(tnet(&["--help"]).status.code(), Some(0));
}

#[test]
fn unsupported_target_exits_2() {
    assert_eq!(
        tnet(&["compile", &listing(), "--target", "fortran"]).status.code(),
        Some(2)
    );
}

#[test]
fn run_reports_a_small_deviation_deterministically() {
    let shapes = scripts_dir().join("listing_shapes.json").display().to_string();
    let a = tnet(&["run", &listing(), "--shapes", &shapes, "--seed", "17"]);
    assert!(a.status.success(), "{}", stderr(&a));
    let b = tnet(&["run", &listing(), "--shapes", &shapes, "--seed", "17"]);
    assert_eq!(a.stdout, b.stdout);
    let text = stdout(&a);
    assert!(text.contains("T5 shape [7, 3, 21]"), "{text}");
    assert!(text.contains("T6 shape [21, 6, 5]"), "{text}");
    let deviation: f64 = text
        .lines()
        .last()
        .unwrap()
        .rsplit(' ')
        .next()
        .unwrap()
        .parse()
        .unwrap();
    assert!(deviation <= 1e-10);
    let c = tnet(&["run", &listing(), "--shapes", &shapes, "--seed", "18"]);
    assert_ne!(a.stdout, c.stdout);
}

#[test]
fn run_names_missing_and_inconsistent_shapes() {
    let dir = TempDir::new().unwrap();
    let shapes = write(&dir, "s.json", r#"{"T0": [2, 3, 4], "T2": [2, 6, 7]}"#);
    let o = tnet(&["run", &listing(), "--shapes", &shapes]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("T1"), "{}", stderr(&o));

    // T1's second dimension shares a bond with T0's last one.
    let shapes = write(&dir, "s.json", r#"{"T0": [2, 3, 4], "T1": [5, 3], "T2": [2, 6, 7]}"#);
    let o = tnet(&["run", &listing(), "--shapes", &shapes]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("label"), "{}", stderr(&o));

    let shapes = write(&dir, "s.json", r#"{"T0": "big"}"#);
    assert_eq!(tnet(&["run", &listing(), "--shapes", &shapes]).status.code(), Some(1));
}

#[test]
fn replay_prints_a_stable_snapshot() {
    let a = tnet(&["replay", &listing()]);
    assert!(a.status.success());
    let b = tnet(&["replay", &listing()]);
    assert_eq!(a.stdout, b.stdout);
    let v: serde_json::Value = serde_json::from_slice(&a.stdout).unwrap();
    assert_eq!(v["code_text"].as_str().unwrap(), LISTING);
    assert_eq!(v["state"]["next_tensor_id"], 7);
}
