use std::path::Path;
use std::process::{Command, Output};

use msopinf::experiment::{files, ExperimentConfig, Manifest, OUT_ENV};
use msopinf::grid::{Grid, PeriodicGrid1D};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_msopinf"))
}

fn write_config(dir: &Path) -> std::path::PathBuf {
    let mut c = ExperimentConfig::preset("wave").unwrap();
    c.grid = Grid::OneD(PeriodicGrid1D::new(-5.0, 5.0, 48).unwrap());
    c.t_train = 1.0;
    c.t_eval = 2.0;
    c.r = 5;
    c.train.max_epochs = 200;
    c.output_dir = dir.join("configured");
    let p = dir.join("wave.json");
    std::fs::write(&p, c.to_json()).unwrap();
    p
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().args(args).env(OUT_ENV, dir.join("out")).output().unwrap()
}

#[test]
fn stages_then_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    for stage in ["simulate-fom", "build-basis", "train", "simulate-rom", "diagnose"] {
        let o = run(dir.path(), &[stage, "--config", cfg]);
        assert!(o.status.success(), "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let out = dir.path().join("out");
    assert!(out.join(files::SUMMARY).exists());
    assert!(!out.join(files::MANIFEST).exists());
    assert!(!dir.path().join("configured").exists());

    let o = run(dir.path(), &["pipeline", "--config", cfg, "--seed", "3"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let m: Manifest = serde_json::from_slice(&std::fs::read(out.join(files::MANIFEST)).unwrap()).unwrap();
    assert!(m.is_complete());
    assert_eq!(m.config.seed, 3);
}

#[test]
fn stage_input_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    assert!(run(dir.path(), &["simulate-fom", "--config", cfg]).status.success());
    let moved = dir.path().join("elsewhere.msnap");
    std::fs::rename(dir.path().join("out").join(files::SNAPSHOTS), &moved).unwrap();
    let o = run(dir.path(), &["build-basis", "--config", cfg]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(dir.path(), &["build-basis", "--config", cfg, "--stage-input", moved.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let o = run(dir.path(), &["pipeline", "--config", cfg, "--stage-input", moved.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path());

    let o = run(dir.path(), &["pipeline", "--config", "/nonexistent.json"]);
    assert_eq!(o.status.code(), Some(2));
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"name\": \"x\"}").unwrap();
    assert_eq!(run(dir.path(), &["train", "--config", bad.to_str().unwrap()]).status.code(), Some(2));
    assert_eq!(run(dir.path(), &["pipeline"]).status.code(), Some(2));

    let mut c = ExperimentConfig::load(&cfg).unwrap();
    c.train.initial_lr = 1e300;
    c.train.min_lr = 1e299;
    let diverge = dir.path().join("diverge.json");
    std::fs::write(&diverge, c.to_json()).unwrap();
    let o = run(dir.path(), &["pipeline", "--config", diverge.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage train failed"));

    let o = bin().args(["preset", "kdv"]).output().unwrap();
    assert!(o.status.success());
    let c = ExperimentConfig::from_json(&String::from_utf8(o.stdout).unwrap()).unwrap();
    assert_eq!(c, ExperimentConfig::preset("kdv").unwrap());
}
