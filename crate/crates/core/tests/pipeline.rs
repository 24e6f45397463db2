use std::path::Path;

use msopinf::error::Error;
use msopinf::experiment::{files, ExperimentConfig, Manifest, Pipeline};
use msopinf::grid::{Grid, PeriodicGrid1D, PeriodicGrid2D};
use msopinf::io::{self, Container};

fn small_wave() -> ExperimentConfig {
    let mut c = ExperimentConfig::preset("wave").unwrap();
    c.grid = Grid::OneD(PeriodicGrid1D::new(-5.0, 5.0, 64).unwrap());
    c.t_train = 2.0;
    c.t_eval = 4.0;
    c.r = 6;
    c.train.max_epochs = 1500;
    c.validate().unwrap();
    c
}

fn read_manifest(dir: &Path) -> Manifest {
    serde_json::from_slice(&std::fs::read(dir.join(files::MANIFEST)).unwrap()).unwrap()
}

#[test]
fn wave_pipeline_writes_valid_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let m = Pipeline::with_output_dir(small_wave(), dir.path().to_path_buf()).run().unwrap();
    assert!(m.is_complete());
    assert_eq!(read_manifest(dir.path()), m);
    for name in [
        files::SNAPSHOTS,
        files::BASIS,
        files::OPERATORS,
        files::ROM,
        "energy_fom.csv",
        "energy_rel_error_learned.csv",
        "state_error.csv",
        "loss_history.csv",
        files::SUMMARY,
    ] {
        assert!(m.artifacts.contains_key(name), "{name} missing");
    }
    for a in m.artifacts.values() {
        let bytes = std::fs::read(dir.path().join(&a.path)).unwrap();
        assert_eq!(bytes.len() as u64, a.bytes);
    }
    // 41 time levels, subsampled to at most 51 columns: all kept
    let rows = io::validate_csv(&dir.path().join("state_error.csv"), &["x", "t", "value"]).unwrap();
    assert_eq!(rows, 64 * 41);
    let snaps = Container::load(&dir.path().join(files::SNAPSHOTS)).unwrap();
    assert_eq!(snaps.n_t, 41);
    let s = m.summary.unwrap();
    assert!(s.train_loss_learned <= s.train_loss_intrusive * 1.5 + 1e-12);
    assert!(s.rom_energy_drift_learned < 1e-10);
}

#[test]
fn rerun_is_idempotent_and_deterministic() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg = small_wave();
    let ma = Pipeline::with_output_dir(cfg.clone(), a.path().to_path_buf()).run().unwrap();
    let before = std::fs::read(a.path().join(files::MANIFEST)).unwrap();
    let again = Pipeline::with_output_dir(cfg.clone(), a.path().to_path_buf()).run().unwrap();
    assert_eq!(again, ma);
    assert_eq!(std::fs::read(a.path().join(files::MANIFEST)).unwrap(), before);

    let mb = Pipeline::with_output_dir(cfg, b.path().to_path_buf()).run().unwrap();
    assert_eq!(ma.without_timings(), mb.without_timings());
}

#[test]
fn changed_artifact_forces_rerun() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_wave();
    let m = Pipeline::with_output_dir(cfg.clone(), dir.path().to_path_buf()).run().unwrap();
    std::fs::write(dir.path().join("energy_fom.csv"), "t,value\n0,1\n").unwrap();
    let p = Pipeline::with_output_dir(cfg, dir.path().to_path_buf());
    assert!(p.existing_complete().is_none());
    drop(p);
    let m2 = Pipeline::with_output_dir(small_wave(), dir.path().to_path_buf()).run().unwrap();
    assert_eq!(m.without_timings(), m2.without_timings());
}

#[test]
fn numerical_failure_leaves_incomplete_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = small_wave();
    cfg.train.initial_lr = 1e300;
    cfg.train.min_lr = 1e299;
    let err = Pipeline::with_output_dir(cfg, dir.path().to_path_buf()).run().unwrap_err();
    assert!(matches!(err, Error::Stage { stage: "train", .. }), "{err}");
    assert_eq!(err.exit_code(), 3);
    let m = read_manifest(dir.path());
    assert!(!m.is_complete());
    assert_eq!(m.failed_stage.as_deref(), Some("train"));
    assert!(m.artifacts.contains_key(files::BASIS));
    assert!(!m.artifacts.contains_key(files::OPERATORS));
}

#[test]
fn small_kdv_and_zk_pipelines_complete() {
    let mut kdv = ExperimentConfig::preset("kdv").unwrap();
    kdv.grid = Grid::OneD(PeriodicGrid1D::new(0.0, 2.0, 80).unwrap());
    kdv.t_train = 1.0;
    kdv.t_eval = 2.0;
    kdv.r = 8;
    kdv.train.max_epochs = 500;
    let mut zk = ExperimentConfig::preset("zk").unwrap();
    zk.grid = Grid::TwoD(PeriodicGrid2D::new(0.0, 8.0, 16).unwrap());
    zk.t_train = 0.25;
    zk.t_eval = 0.5;
    zk.r = 8;
    zk.train.max_epochs = 300;
    for cfg in [kdv, zk] {
        cfg.validate().unwrap();
        let dir = tempfile::tempdir().unwrap();
        let m = Pipeline::with_output_dir(cfg, dir.path().to_path_buf()).run().unwrap();
        let s = m.summary.unwrap();
        assert!(s.rom_energy_drift_learned < 1e-9, "{s:?}");
        assert!(s.rom_energy_drift_intrusive < 1e-9, "{s:?}");
    }
}
