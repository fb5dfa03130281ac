use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;

use probode::cli::config::Experiment;

mod common;
use common::shrink;
use probode::cli::{self, presets, ExperimentConfig};

fn read_outputs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn every_preset_reruns_bitwise() {
    for preset in presets::PRESETS {
        let cfg = shrink(preset.config());
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let manifest = cli::run(&cfg, a.path()).unwrap_or_else(|e| panic!("{}: {e}", preset.name));
        cli::run(&cfg, b.path()).unwrap();
        let (fa, fb) = (read_outputs(a.path()), read_outputs(b.path()));
        assert_eq!(fa.keys().collect::<Vec<_>>(), fb.keys().collect::<Vec<_>>());
        for (name, bytes) in &fa {
            if name.ends_with(".csv") {
                assert_eq!(bytes, &fb[name], "{}: {name} differs", preset.name);
            }
        }
        let listed: Vec<String> = manifest["outputs"]
            .as_array()
            .unwrap()
            .iter()
            .map(|v| v.as_str().unwrap().to_string())
            .collect();
        for name in fa.keys().filter(|n| *n != "manifest.json") {
            assert_eq!(listed.iter().filter(|l| *l == name).count(), 1, "{}: {name}", preset.name);
        }
        assert_eq!(manifest["schema_version"], 1);
        assert_eq!(manifest["library_version"], env!("CARGO_PKG_VERSION"));
    }
}

#[test]
fn manifest_config_reproduces_run() {
    let cfg = shrink(presets::find("strong-order").unwrap().config());
    let a = tempfile::tempdir().unwrap();
    let manifest = cli::run(&cfg, a.path()).unwrap();
    let replay: ExperimentConfig = serde_json::from_value(manifest["config"].clone()).unwrap();
    let b = tempfile::tempdir().unwrap();
    cli::run(&replay, b.path()).unwrap();
    assert_eq!(
        std::fs::read(a.path().join("errors.csv")).unwrap(),
        std::fs::read(b.path().join("errors.csv")).unwrap()
    );
}

#[test]
fn csv_floats_have_seventeen_significant_digits() {
    let cfg = shrink(presets::find("weak-order-linear").unwrap().config());
    let dir = tempfile::tempdir().unwrap();
    cli::run(&cfg, dir.path()).unwrap();
    let text = std::fs::read_to_string(dir.path().join("weak_identity.csv")).unwrap();
    let field = text.lines().nth(1).unwrap().split(',').next().unwrap();
    let mantissa = field.split('e').next().unwrap().replace(['.', '-'], "");
    assert_eq!(mantissa.len(), 17, "{field}");
}

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_probode"))
}

#[test]
fn binary_lists_presets() {
    let out = bin().arg("presets").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for p in presets::PRESETS {
        assert!(text.contains(p.name));
    }
    let out = bin().args(["presets", "fem-rates"]).output().unwrap();
    let cfg: ExperimentConfig = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(cfg, presets::find("fem-rates").unwrap().config());
}

#[test]
fn binary_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{ \"schema_version\": 1, \"seed\": 0, \"nope\": true }").unwrap();
    assert_eq!(bin().arg("validate").arg(&bad).status().unwrap().code(), Some(2));
    assert_eq!(bin().arg("run").arg(&bad).status().unwrap().code(), Some(2));

    let good = dir.path().join("good.json");
    let cfg = shrink(presets::find("strong-order").unwrap().config());
    std::fs::write(&good, serde_json::to_string(&cfg).unwrap()).unwrap();
    assert_eq!(bin().arg("validate").arg(&good).status().unwrap().code(), Some(0));
    let out = dir.path().join("run");
    let status = bin().arg("run").arg(&good).args(["--seed", "9", "--out"]).arg(&out).status().unwrap();
    assert_eq!(status.code(), Some(0));
    let manifest: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["seed"], 9);

    let mut blowup = cfg.clone();
    if let Experiment::StrongOrder(p) = &mut blowup.experiment {
        p.problem = probode::cli::config::OdeSpec::Linear { rate: 1e200, u0: 1.0, t_final: 1.0 };
    }
    let path = dir.path().join("blowup.json");
    std::fs::write(&path, serde_json::to_string(&blowup).unwrap()).unwrap();
    let out = bin().arg("run").arg(&path).arg("--out").arg(dir.path().join("b")).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}
