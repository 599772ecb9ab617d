//! Shared helpers for the integration and acceptance suites.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Output;

/// Path of the compiled command-line binary.
pub fn cli_bin() -> &'static str {
    env!("CARGO_BIN_EXE_cardioloop")
}

/// Runs the CLI with the given arguments in `dir`.
pub fn run_cli(dir: &Path, args: &[&str]) -> Output {
    std::process::Command::new(cli_bin())
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn cardioloop")
}

/// Writes a JSON config file and returns its path.
pub fn write_config(dir: &Path, name: &str, body: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, body).unwrap();
    path
}

/// Recursively collects relative file paths under a directory.
pub fn file_tree(root: &Path) -> Vec<PathBuf> {
    fn walk(dir: &Path, root: &Path, acc: &mut Vec<PathBuf>) {
        let mut entries: Vec<_> = std::fs::read_dir(dir)
            .unwrap()
            .map(|e| e.unwrap().path())
            .collect();
        entries.sort();
        for path in entries {
            if path.is_dir() {
                walk(&path, root, acc);
            } else {
                acc.push(path.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    let mut acc = Vec::new();
    walk(root, root, &mut acc);
    acc
}

/// Asserts two directory trees are byte-identical.
pub fn assert_trees_identical(a: &Path, b: &Path) {
    let ta = file_tree(a);
    let tb = file_tree(b);
    assert_eq!(ta, tb, "file lists differ between {a:?} and {b:?}");
    for rel in ta {
        let ba = std::fs::read(a.join(&rel)).unwrap();
        let bb = std::fs::read(b.join(&rel)).unwrap();
        assert_eq!(ba, bb, "{} differs", rel.display());
    }
}

/// Least-squares slope of y against x.
pub fn regression_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let sx: f64 = points.iter().map(|p| p.0).sum();
    let sy: f64 = points.iter().map(|p| p.1).sum();
    let sxx: f64 = points.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = points.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}
