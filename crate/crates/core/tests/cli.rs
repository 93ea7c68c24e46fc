use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_hflab");

fn manifests_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("manifests")
}

/// Copy of the shipped manifests and their data files in a scratch directory.
fn workspace() -> TempDir {
    let tmp = tempfile::tempdir().unwrap();
    copy_tree(&manifests_dir(), tmp.path());
    tmp
}

fn copy_tree(from: &Path, to: &Path) {
    fs::create_dir_all(to).unwrap();
    for entry in fs::read_dir(from).unwrap() {
        let entry = entry.unwrap();
        let name = entry.file_name();
        if name == "out" {
            continue;
        }
        let target = to.join(&name);
        if entry.file_type().unwrap().is_dir() {
            copy_tree(&entry.path(), &target);
        } else {
            fs::copy(entry.path(), target).unwrap();
        }
    }
}

fn hflab(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("HFLAB_WORKERS").env_remove("HFLAB_SEED").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn path_str(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn flow_scan_on_the_lw_half_system() {
    let ws = workspace();
    let m = ws.path().join("flow_scan_lw3.json");
    let o = hflab(&["run", path_str(&m)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = fs::read_to_string(ws.path().join("out/flow_scan_lw3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,Q,dQ,violation"));
    assert_eq!(lines.count(), 81);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path().join("out/flow_scan_lw3.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["pass"], true);
    assert_eq!(meta["kind"], "flow-scan");
    assert_eq!(meta["parameters"]["nodes"], 81);
}

#[test]
fn joints_count_on_the_lattice() {
    let ws = workspace();
    let o = hflab(&["run", path_str(&ws.path().join("joints_lattice3.json")), "--workers", "2"]);
    assert_eq!(o.status.code(), Some(0));
    let csv = fs::read_to_string(ws.path().join("out/joints_lattice3.csv")).unwrap();
    assert_eq!(csv.lines().count(), 28);
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path().join("out/joints_lattice3.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["workers"], 2);
    assert_eq!(meta["summary"]["joints"], 27);
    // nothing but the artifacts is left behind
    let mut names: Vec<String> =
        fs::read_dir(ws.path().join("out")).unwrap().map(|e| e.unwrap().file_name().into_string().unwrap()).collect();
    names.sort();
    assert_eq!(names, ["joints_lattice3.csv", "joints_lattice3.csv.meta.json"]);
}

#[test]
fn failed_check_exits_two() {
    let ws = workspace();
    let m = ws.path().join("wrong_count.json");
    fs::write(
        &m,
        r#"{"name": "wrong", "kind": "joints-count", "parameters": {"lattice": 2, "expect_count": 9}, "output": "out/wrong.csv"}"#,
    )
    .unwrap();
    let o = hflab(&["run", path_str(&m)]);
    assert_eq!(o.status.code(), Some(2));
    assert!(ws.path().join("out/wrong.csv").exists());
}

#[test]
fn empty_tube_list_is_an_input_error() {
    let ws = workspace();
    fs::write(ws.path().join("empty.json"), r#"[{"dim": 2, "width": 0.1, "nominal": [1, 0], "radius": 0.1, "tubes": []}]"#)
        .unwrap();
    let m = ws.path().join("empty_sweep.json");
    fs::write(
        &m,
        r#"{"name": "empty", "kind": "kakeya-sweep", "inputs": "empty.json",
            "parameters": {"grid": {"center": [0, 0], "half_width": 1, "points_per_axis": 16}},
            "output": "out/empty.csv"}"#,
    )
    .unwrap();
    let o = hflab(&["run", path_str(&m)]);
    assert_eq!(o.status.code(), Some(1), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(!ws.path().join("out/empty.csv").exists());
}

#[test]
fn unknown_kind_and_missing_file_are_input_errors() {
    let ws = workspace();
    let m = ws.path().join("bad.json");
    fs::write(&m, r#"{"name": "x", "kind": "heat-death", "output": "o.csv"}"#).unwrap();
    assert_eq!(hflab(&["run", path_str(&m)]).status.code(), Some(1));
    assert_eq!(hflab(&["run", path_str(&ws.path().join("nope.json"))]).status.code(), Some(1));
    assert_eq!(hflab(&["frobnicate"]).status.code(), Some(1));
}

#[test]
fn validate_reports_condition_status() {
    let o = hflab(&["validate", path_str(&manifests_dir().join("data/lw3_half.json"))]);
    assert_eq!(o.status.code(), Some(0));
    let out = stdout(&o);
    assert_eq!(out.lines().next(), Some("ok"));
    assert!(out.contains("(a-jab): true"), "{out}");
}

#[test]
fn validate_names_the_bad_atom() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("neg.json");
    fs::write(
        &f,
        r#"{"dim": 2, "p": [1], "families": [{"atoms": [
            {"A": [[1, 0], [0, 1]], "v": [0, 0], "w": 1},
            {"A": [[1, 0], [0, 1]], "v": [0, 0], "w": -2}]}]}"#,
    )
    .unwrap();
    let o = hflab(&["validate", path_str(&f)]);
    assert_eq!(o.status.code(), Some(1));
    let out = stdout(&o);
    assert!(out.contains("atom 1"), "{out}");
}

#[test]
fn validate_flags_parallel_families() {
    let tmp = tempfile::tempdir().unwrap();
    let f = tmp.path().join("parallel.json");
    let fam = r#"{"dim": 2, "width": 0.1, "nominal": [1, 0], "radius": 0.1,
        "tubes": [{"center": [0.5, 0.5], "axis": [1, 0], "half_length": 0.5}]}"#;
    fs::write(&f, format!("[{fam}, {fam}]")).unwrap();
    let o = hflab(&["validate", path_str(&f)]);
    let out = stdout(&o);
    assert!(out.contains("nu = 0"), "{out}");
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn shipped_manifests_validate() {
    for entry in fs::read_dir(manifests_dir()).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "json") {
            let o = hflab(&["validate", path_str(&p)]);
            assert_eq!(o.status.code(), Some(0), "{}: {}", p.display(), stdout(&o));
        }
    }
}

#[test]
fn environment_sets_workers_and_seed() {
    let ws = workspace();
    let m = ws.path().join("flow_xval.json");
    let o = Command::new(BIN)
        .args(["run", path_str(&m)])
        .env("HFLAB_WORKERS", "3")
        .env("HFLAB_SEED", "99")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let meta: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(ws.path().join("out/flow_xval.csv.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["workers"], 3);
    assert_eq!(meta["seed"], 99);
}
