//! Fixture helpers shared by the integration tests.
#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};

use kglp::assemble::assembled_to_jsonl;
use kglp::config::RunConfig;
use kglp::pipeline::{assemble_splits, Dataset};

pub fn manifest_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn tiny_dir() -> PathBuf {
    manifest_dir().join("tests/fixtures/tiny")
}

pub fn golden_dir() -> PathBuf {
    manifest_dir().join("tests/golden")
}

pub fn synthetic_dir() -> PathBuf {
    manifest_dir().join("data/synthetic")
}

/// One golden assembly of the tiny fixture.
pub struct GoldenCase {
    pub name: &'static str,
    pub overrides: &'static [&'static str],
    pub descriptions: bool,
}

pub const FORMS: [GoldenCase; 3] = [
    GoldenCase {
        name: "no_neighbors",
        overrides: &["use_neighbors=false"],
        descriptions: true,
    },
    GoldenCase {
        name: "packed",
        overrides: &["strategy=\"packed\"", "max_input_tokens=14"],
        descriptions: true,
    },
    GoldenCase {
        name: "top_k",
        overrides: &["strategy=\"top_k\""],
        descriptions: true,
    },
];

pub const ABLATIONS: [GoldenCase; 3] = [
    GoldenCase {
        name: "ablation_constant_provider",
        overrides: &["strategy=\"top_k\"", "provider=\"constant\""],
        descriptions: true,
    },
    GoldenCase {
        name: "ablation_no_descriptions",
        overrides: &["strategy=\"top_k\""],
        descriptions: false,
    },
    GoldenCase {
        name: "ablation_no_neighbors",
        overrides: &["strategy=\"top_k\"", "use_neighbors=false", "neighbor_descriptions=false"],
        descriptions: true,
    },
];

pub fn tiny_config(case: &GoldenCase, workers: usize) -> RunConfig {
    let dir = tiny_dir();
    let mut overrides = vec![
        format!("train = {:?}", dir.join("train.tsv").display().to_string()),
        format!("workers = {workers}"),
    ];
    if case.descriptions {
        overrides.push(format!(
            "descriptions = {:?}",
            dir.join("descriptions.tsv").display().to_string()
        ));
    }
    overrides.extend(case.overrides.iter().map(|s| s.to_string()));
    RunConfig::resolve("", &overrides, Path::new(".")).expect("fixture config")
}

/// Assembled training inputs of the tiny fixture as JSONL.
pub fn assemble_tiny(case: &GoldenCase, workers: usize) -> String {
    let config = tiny_config(case, workers);
    let data = Dataset::load(&config).expect("fixture loads");
    let (train, _) = assemble_splits(&data, &config).expect("fixture assembles");
    assembled_to_jsonl(&train, &data.symbols)
}

/// Compare against `tests/golden/<name>.jsonl`, rewriting it first when
/// `KGLP_BLESS` is set.
pub fn golden(name: &str) -> String {
    let path = golden_dir().join(format!("{name}.jsonl"));
    fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

pub fn bless(name: &str, contents: &str) {
    if std::env::var_os("KGLP_BLESS").is_some() {
        fs::write(golden_dir().join(format!("{name}.jsonl")), contents).unwrap();
    }
}

/// Synthetic-graph run config with extra `key=value` overrides.
pub fn synthetic_config(extra: &[String]) -> RunConfig {
    let dir = synthetic_dir();
    RunConfig::load(Some(&dir.join("config.toml")), extra).expect("synthetic config")
}
