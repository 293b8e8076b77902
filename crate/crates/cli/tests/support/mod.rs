#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::{json, Value};

pub fn configs_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

/// Every shipped run config, sorted by file name.
pub fn shipped_configs() -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(configs_dir())
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "json") && p.file_name().unwrap() != "schema.json")
        .collect();
    v.sort();
    v
}

pub fn bode(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_bode")).args(args).output().expect("running bode")
}

/// Runs bode and panics with its stderr unless it exits with `code`.
pub fn bode_expect(code: i32, args: &[&str]) -> Output {
    let out = bode(args);
    assert_eq!(
        out.status.code(),
        Some(code),
        "bode {args:?}\nstderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn read_config(name: &str) -> Value {
    serde_json::from_str(&std::fs::read_to_string(configs_dir().join(name)).unwrap()).unwrap()
}

/// Shrinks a config's Monte Carlo and solver sizes so commands run in
/// well under a second.
pub fn shrink(cfg: &mut Value, n: usize, outer: usize) {
    cfg.as_object_mut().unwrap().remove("$schema");
    cfg["solver"] = json!({
        "kernel": "squared_exponential",
        "n": n,
        "alpha": {"per_point": 1.0},
        "lambda": {"grid_multiple": 4.0}
    });
    cfg["loss"]["outer"] = json!(outer);
    cfg["ace"] = json!({"cycles": 1, "starts": 1, "q": 5, "b_train": outer, "b_test": outer});
    if let Some(s) = cfg.get_mut("solve") {
        s["n_draws"] = json!(4);
        s.as_object_mut().unwrap().remove("n");
    }
}

pub fn write_config(dir: &Path, name: &str, cfg: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(cfg).unwrap()).unwrap();
    p
}

pub fn read_csv(path: &Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
    let rows = rdr.records().map(|r| r.unwrap().iter().map(str::to_string).collect()).collect();
    (header, rows)
}

pub fn read_json(path: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

/// All files of a directory with their bytes, sorted by name. Subdirectories
/// are skipped.
pub fn snapshot(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}
