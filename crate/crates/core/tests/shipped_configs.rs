//! The JSON files under `configs/` must parse and agree with the presets.
//! Set `CB2O_BLESS=1` to rewrite them from the presets.

use std::path::PathBuf;

use cb2o::harness::analyze::{DecayConfig, LaplaceTrendConfig};
use cb2o::harness::config::{load_value, parse_json};
use cb2o::harness::presets::shipped_presets;
use cb2o::harness::{AblationGrid, ExperimentConfig};
use serde_json::Value;

fn root() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn analysis_defaults() -> Vec<(String, Value)> {
    vec![
        (
            "analyze/decay.json".into(),
            serde_json::to_value(DecayConfig::default()).unwrap(),
        ),
        (
            "analyze/laplace_trend.json".into(),
            serde_json::to_value(LaplaceTrendConfig::default()).unwrap(),
        ),
    ]
}

#[test]
fn shipped_configs_match_presets() {
    let mut all = shipped_presets().unwrap();
    all.extend(analysis_defaults());
    let bless = std::env::var_os("CB2O_BLESS").is_some();
    for (rel, want) in all {
        let path = root().join(&rel);
        if bless {
            std::fs::create_dir_all(path.parent().unwrap()).unwrap();
            let text = serde_json::to_string_pretty(&want).unwrap() + "\n";
            std::fs::write(&path, text).unwrap();
        }
        let got = load_value(&path).unwrap_or_else(|e| panic!("{rel}: {e}"));
        assert_eq!(got, want, "{rel} differs from its preset");
    }
}

#[test]
fn shipped_configs_parse() {
    let read = |rel: &str| std::fs::read_to_string(root().join(rel)).unwrap();
    for entry in std::fs::read_dir(root().join("tables")).unwrap() {
        let path = entry.unwrap().path();
        let cfg: ExperimentConfig = parse_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        cfg.validate().unwrap();
    }
    for entry in std::fs::read_dir(root().join("ablation")).unwrap() {
        let path = entry.unwrap().path();
        let grid: AblationGrid = parse_json(&std::fs::read_to_string(&path).unwrap()).unwrap();
        for cell in grid.cells().unwrap() {
            cell.validate().unwrap();
        }
    }
    let _: DecayConfig = parse_json(&read("analyze/decay.json")).unwrap();
    let _: LaplaceTrendConfig = parse_json(&read("analyze/laplace_trend.json")).unwrap();
}
