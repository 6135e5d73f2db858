#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use vocada_cli::RunConfig;
use vocada_core::SelectorKind;

pub const BLESS_ENV: &str = "VOCADA_BLESS";

pub fn scene_dir() -> PathBuf {
    vocada_testkit::fixtures_dir().join("scene")
}

pub fn golden_dir(kind: SelectorKind) -> PathBuf {
    scene_dir().join("golden").join(kind.as_str())
}

/// The scene config with `kind` selected and outputs under `out`.
pub fn scene_config(kind: SelectorKind, out: &Path) -> RunConfig {
    let mut cfg = RunConfig::load(&scene_dir().join("config.json")).unwrap();
    cfg.selector.kind = kind;
    cfg.paths.output_dir = Some(out.to_path_buf());
    cfg
}

/// Every file under `dir`, keyed by relative path.
pub fn read_tree(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
    let mut entries: Vec<_> = fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    for p in entries {
        if p.is_dir() {
            walk(root, &p, out);
        } else {
            let rel = p.strip_prefix(root).unwrap().to_string_lossy().replace('\\', "/");
            out.insert(rel, fs::read(&p).unwrap());
        }
    }
}

pub fn without(mut tree: BTreeMap<String, Vec<u8>>, name: &str) -> BTreeMap<String, Vec<u8>> {
    tree.remove(name);
    tree
}

pub fn assert_trees_eq(a: &BTreeMap<String, Vec<u8>>, b: &BTreeMap<String, Vec<u8>>) {
    let names_a: Vec<_> = a.keys().collect();
    let names_b: Vec<_> = b.keys().collect();
    assert_eq!(names_a, names_b, "file sets differ");
    for (name, bytes) in a {
        assert!(
            bytes == &b[name],
            "{name} differs:\n{}\n---\n{}",
            String::from_utf8_lossy(bytes),
            String::from_utf8_lossy(&b[name])
        );
    }
}

/// Compares `actual` to the committed golden file, rewriting it when the
/// bless variable is set.
pub fn check_golden(golden: &Path, actual: &[u8]) {
    if std::env::var_os(BLESS_ENV).is_some() {
        fs::create_dir_all(golden.parent().unwrap()).unwrap();
        fs::write(golden, actual).unwrap();
        return;
    }
    let expected = fs::read(golden).unwrap_or_else(|e| panic!("{}: {e}; set {BLESS_ENV}=1 to create", golden.display()));
    assert!(
        expected == actual,
        "{} differs from output:\n{}",
        golden.display(),
        String::from_utf8_lossy(actual)
    );
}
