use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::diagnostics::{
    kdv_energy_fom, kdv_energy_rom, relative_drift, relative_energy_error, state_error_field, wave_energy_fom,
    wave_energy_rom, wave_velocity_fom, zk_energy_fom, zk_energy_rom,
};
use crate::error::{Error, Result};
use crate::fingerprint::sha256_hex;
use crate::fom::{grid_operators, simulate_fom_with, step_count, InitialState, SnapshotSet};
use crate::io::{self, Container};
use crate::model::ModelKind;
use crate::opinf::{self, nonlinear_data, unskew, LearnedRom, OpInfProblem, TrainingData};
use crate::pod::{compute_pod, intrusive_operator, PodBasis};
use crate::rom::{simulate_rom, ReducedInitial, RomTrajectory};
use crate::snapshots::{kdv_extended, wave_extended, zk_extended, ExtendedSnapshots};

use super::config::ExperimentConfig;

/// File names inside the output directory.
pub mod files {
    pub const SNAPSHOTS: &str = "snapshots.msnap";
    pub const SNAPSHOTS_CSV: &str = "snapshots.csv";
    pub const EXTENDED: &str = "extended.msnap";
    pub const BASIS: &str = "basis.msnap";
    pub const OPERATORS: &str = "operators.msnap";
    pub const OPERATORS_JSON: &str = "operators.json";
    pub const INTRUSIVE: &str = "intrusive_operators.msnap";
    pub const INTRUSIVE_JSON: &str = "intrusive_operators.json";
    pub const ROM: &str = "rom.msnap";
    pub const ROM_INTRUSIVE: &str = "rom_intrusive.msnap";
    pub const SUMMARY: &str = "summary.json";
    pub const MANIFEST: &str = "manifest.json";
}

pub const STAGES: [&str; 5] = ["simulate-fom", "build-basis", "train", "simulate-rom", "diagnose"];

/// One produced file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format: String,
    pub name: String,
    pub status: String,
    pub failed_stage: Option<String>,
    pub error: Option<String>,
    pub config_fingerprint: String,
    pub config: ExperimentConfig,
    pub versions: BTreeMap<String, String>,
    pub fingerprints: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, Artifact>,
    pub summary: Option<Summary>,
    /// Wall-clock seconds per stage; the only field that varies between identical runs.
    pub timings: BTreeMap<String, f64>,
}

impl Manifest {
    pub fn is_complete(&self) -> bool {
        self.status == "complete"
    }

    /// Manifest JSON without the timing entries.
    pub fn without_timings(&self) -> String {
        let mut m = self.clone();
        m.timings.clear();
        serde_json::to_string_pretty(&m).expect("manifest serializes")
    }
}

/// Scalar results of the diagnose stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub model: ModelKind,
    pub r: usize,
    pub retained_energy: f64,
    pub train_loss_learned: f64,
    pub train_loss_intrusive: f64,
    pub epochs: usize,
    pub best_epoch: usize,
    pub fom_energy_drift: f64,
    pub rom_energy_drift_learned: f64,
    pub rom_energy_drift_intrusive: f64,
    pub max_rel_energy_error_learned: f64,
    pub max_rel_energy_error_intrusive: f64,
    pub coeff_error_train_max_learned: f64,
    pub coeff_error_test_max_learned: f64,
    pub coeff_error_train_max_intrusive: f64,
    pub coeff_error_test_max_intrusive: f64,
    pub state_error_max_learned: f64,
}

/// Learned and intrusive reduced operators with their training losses.
#[derive(Debug, Clone)]
pub struct TrainedModels {
    pub learned: LearnedRom,
    pub intrusive: LearnedRom,
    pub loss_learned: f64,
    pub loss_intrusive: f64,
}

#[derive(Debug, Clone)]
pub struct RomRuns {
    pub learned: RomTrajectory,
    pub intrusive: RomTrajectory,
}

/// Runs the stages of one experiment inside an output directory.
pub struct Pipeline {
    pub cfg: ExperimentConfig,
    pub out: PathBuf,
    artifacts: BTreeMap<String, Artifact>,
    fingerprints: BTreeMap<String, String>,
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| match e {
        Error::Stage { .. } => e,
        other => Error::Stage {
            stage: name,
            source: Box::new(other),
        },
    })
}

impl Pipeline {
    /// Uses the configured output directory (or `MSOPINF_OUT`).
    pub fn new(cfg: ExperimentConfig) -> Self {
        let out = cfg.resolved_output_dir();
        Self::with_output_dir(cfg, out)
    }

    pub fn with_output_dir(cfg: ExperimentConfig, out: PathBuf) -> Self {
        Pipeline {
            cfg,
            out,
            artifacts: BTreeMap::new(),
            fingerprints: BTreeMap::new(),
        }
    }

    pub fn path(&self, file: &str) -> PathBuf {
        self.out.join(file)
    }

    fn record(&mut self, file: &str) -> Result<()> {
        let bytes = std::fs::read(self.path(file))?;
        self.artifacts.insert(
            file.to_string(),
            Artifact {
                path: file.to_string(),
                sha256: sha256_hex(&bytes),
                bytes: bytes.len() as u64,
            },
        );
        Ok(())
    }

    fn train_steps(&self) -> usize {
        step_count(self.cfg.t_train, self.cfg.dt).expect("validated config")
    }

    /// Full-order run over `[0, t_eval]`, from the configured preset unless `initial` is given.
    pub fn simulate_fom(&mut self, initial: Option<&InitialState>) -> Result<SnapshotSet> {
        stage("simulate-fom", self.simulate_fom_inner(initial))
    }

    fn simulate_fom_inner(&mut self, initial: Option<&InitialState>) -> Result<SnapshotSet> {
        let cfg = &self.cfg;
        let sampled;
        let ic = match initial {
            Some(ic) => ic,
            None => {
                sampled = cfg.initial_condition.sample(&cfg.grid)?;
                &sampled
            }
        };
        let s = simulate_fom_with(&cfg.ms_model(), &cfg.grid, ic, cfg.dt, cfg.t_eval, cfg.zk_solver)?;
        if s.u.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("full-order trajectory"));
        }
        self.store_snapshots(&s)?;
        Ok(s)
    }

    /// Writes `s` as the experiment's snapshot artifact.
    pub fn store_snapshots(&mut self, s: &SnapshotSet) -> Result<()> {
        std::fs::create_dir_all(&self.out)?;
        Container::from(s).save(&self.path(files::SNAPSHOTS))?;
        self.record(files::SNAPSHOTS)?;
        if self.cfg.snapshot_csv {
            io::write_snapshot_csv(&self.path(files::SNAPSHOTS_CSV), &s)?;
            self.record(files::SNAPSHOTS_CSV)?;
        }
        self.fingerprints.insert("snapshots".into(), s.fingerprint.clone());
        Ok(())
    }

    /// Initial state taken from the first time level of a stored trajectory.
    pub fn initial_from(&self, snaps: &SnapshotSet) -> Result<InitialState> {
        self.check_snapshots(snaps, "initial-state source")?;
        Ok(InitialState {
            u: snaps.u.column(0).into_owned(),
            ut: snaps.aux("v").map(|v| v.column(0).into_owned()),
        })
    }

    fn check_snapshots(&self, s: &SnapshotSet, what: &str) -> Result<()> {
        if s.model != self.cfg.model.name || s.grid != self.cfg.grid {
            return Err(Error::Format(format!("{what} was produced for a different model or grid")));
        }
        Ok(())
    }

    pub fn load_snapshots(&self, path: Option<&Path>) -> Result<SnapshotSet> {
        let p = path.map(Path::to_path_buf).unwrap_or_else(|| self.path(files::SNAPSHOTS));
        let s = SnapshotSet::try_from(&Container::load(&p)?)?;
        self.check_snapshots(&s, &p.display().to_string())?;
        Ok(s)
    }

    /// Extended snapshot matrix of the training window and its POD basis.
    pub fn build_basis(&mut self, snaps: &SnapshotSet) -> Result<(ExtendedSnapshots, PodBasis)> {
        stage("build-basis", self.build_basis_inner(snaps))
    }

    fn build_basis_inner(&mut self, snaps: &SnapshotSet) -> Result<(ExtendedSnapshots, PodBasis)> {
        let train = snaps.truncated(self.train_steps() + 1);
        let (dx, _) = grid_operators(&self.cfg.grid)?;
        let model = self.cfg.ms_model();
        let c = |name: &str| model.constant(name).expect("validated constants");
        let ext = match self.cfg.model.name {
            ModelKind::Wave => wave_extended(&train, self.cfg.dt, &dx, c("c"))?,
            ModelKind::KdV => kdv_extended(&train, self.cfg.dt, &dx, c("eta"), c("gamma"))?,
            ModelKind::ZK => zk_extended(&train, &dx)?,
        };
        let basis = compute_pod(&ext.z, self.cfg.r, ext.labels.len())?;
        io::extended_to_container(&ext, self.cfg.model.name, self.cfg.dt).save(&self.path(files::EXTENDED))?;
        self.record(files::EXTENDED)?;
        io::basis_to_container(&basis, self.cfg.model.name, &ext.fingerprint()).save(&self.path(files::BASIS))?;
        self.record(files::BASIS)?;
        self.fingerprints.insert("extended".into(), ext.fingerprint());
        self.fingerprints.insert("basis".into(), basis.fingerprint());
        Ok((ext, basis))
    }

    pub fn load_basis(&self, path: Option<&Path>) -> Result<PodBasis> {
        let p = path.map(Path::to_path_buf).unwrap_or_else(|| self.path(files::BASIS));
        io::basis_from_container(&Container::load(&p)?)
    }

    fn problem(&self, snaps: &SnapshotSet, basis: &PodBasis) -> Result<OpInfProblem> {
        let train = snaps.truncated(self.train_steps() + 1);
        let ut = basis.v.tr_mul(&train.u);
        let model = self.cfg.model.name;
        let q;
        let data = match model {
            ModelKind::Wave => TrainingData::Wave { ut: &ut },
            ModelKind::KdV => {
                q = nonlinear_data(&basis.v, &train.u)?;
                TrainingData::KdV { ut: &ut, q: &q }
            }
            ModelKind::ZK => {
                q = nonlinear_data(&basis.v, &train.u)?;
                TrainingData::ZK { ut: &ut, q: &q }
            }
        };
        opinf::build_problem(model, &self.cfg.model.constants, &data, self.cfg.dt)
    }

    /// `skew(VᵀDV)` for each spatial direction.
    pub fn intrusive(&self, basis: &PodBasis) -> Result<LearnedRom> {
        let (dx, dy) = grid_operators(&self.cfg.grid)?;
        let dxr = intrusive_operator(&basis.v, &dx)?;
        let dyr = dy.map(|dy| intrusive_operator(&basis.v, &dy)).transpose()?;
        Ok(LearnedRom::from_operators(
            self.cfg.model.name,
            dxr,
            dyr,
            self.cfg.model.constants.clone(),
            basis.fingerprint(),
        ))
    }

    /// Learns the reduced operators and evaluates the intrusive baseline on the same loss.
    pub fn train(&mut self, snaps: &SnapshotSet, basis: &PodBasis) -> Result<TrainedModels> {
        stage("train", self.train_inner(snaps, basis))
    }

    fn train_inner(&mut self, snaps: &SnapshotSet, basis: &PodBasis) -> Result<TrainedModels> {
        let problem = self.problem(snaps, basis)?;
        let tc = self.cfg.train_config();
        let out = opinf::train_params(&problem, &tc)?;
        let (dx, dy) = problem.operators(&out.theta);
        let learned = LearnedRom {
            model: self.cfg.model.name,
            dx,
            dy,
            constants: self.cfg.model.constants.clone(),
            loss_history: out.loss_history,
            lr_trace: out.lr_trace,
            best_epoch: out.best_epoch,
            best_loss: out.best_loss,
            basis_fingerprint: basis.fingerprint(),
        };
        let mut intrusive = self.intrusive(basis)?;
        let loss_learned = problem.loss(&operator_params(&learned));
        let loss_intrusive = problem.loss(&operator_params(&intrusive));
        intrusive.best_loss = loss_intrusive;

        io::save_learned_rom(
            &learned,
            self.cfg.dt,
            Some(&tc),
            &self.path(files::OPERATORS),
            &self.path(files::OPERATORS_JSON),
        )?;
        io::save_learned_rom(
            &intrusive,
            self.cfg.dt,
            None,
            &self.path(files::INTRUSIVE),
            &self.path(files::INTRUSIVE_JSON),
        )?;
        for f in [files::OPERATORS, files::OPERATORS_JSON, files::INTRUSIVE, files::INTRUSIVE_JSON] {
            self.record(f)?;
        }
        io::write_series_csv_with(
            &self.path("loss_history.csv"),
            "epoch",
            &(0..learned.loss_history.len()).map(|k| k as f64).collect::<Vec<_>>(),
            &learned.loss_history,
        )?;
        self.record("loss_history.csv")?;
        self.fingerprints.insert("learned_operators".into(), learned.fingerprint());
        self.fingerprints.insert("intrusive_operators".into(), intrusive.fingerprint());
        Ok(TrainedModels {
            learned,
            intrusive,
            loss_learned,
            loss_intrusive,
        })
    }

    pub fn load_models(&self, learned_path: Option<&Path>) -> Result<TrainedModels> {
        let learned_bin = learned_path.map(Path::to_path_buf).unwrap_or_else(|| self.path(files::OPERATORS));
        let learned_json = learned_bin.with_extension("json");
        let learned = io::load_learned_rom(&learned_bin, &learned_json)?;
        let intrusive = io::load_learned_rom(&self.path(files::INTRUSIVE), &self.path(files::INTRUSIVE_JSON))?;
        let loss_intrusive = intrusive.best_loss;
        Ok(TrainedModels {
            loss_learned: learned.best_loss,
            learned,
            intrusive,
            loss_intrusive,
        })
    }

    /// Integrates both reduced models over `[0, t_eval]` from the projected initial state.
    pub fn simulate_rom(&mut self, snaps: &SnapshotSet, basis: &PodBasis, models: &TrainedModels) -> Result<RomRuns> {
        stage("simulate-rom", self.simulate_rom_inner(snaps, basis, models))
    }

    fn simulate_rom_inner(&mut self, snaps: &SnapshotSet, basis: &PodBasis, models: &TrainedModels) -> Result<RomRuns> {
        let u0 = snaps.u.column(0).into_owned();
        let v0 = snaps.aux("v").map(|v| v.column(0).into_owned());
        let init = ReducedInitial::project(&basis.v, &u0, v0.as_ref())?;
        let (dt, t) = (self.cfg.dt, self.cfg.t_eval);
        let learned = simulate_rom(&models.learned, &basis.v, &init, dt, t)?;
        let intrusive = simulate_rom(&models.intrusive, &basis.v, &init, dt, t)?;
        let model = self.cfg.model.name;
        io::trajectory_to_container(&learned, model).save(&self.path(files::ROM))?;
        io::trajectory_to_container(&intrusive, model).save(&self.path(files::ROM_INTRUSIVE))?;
        self.record(files::ROM)?;
        self.record(files::ROM_INTRUSIVE)?;
        Ok(RomRuns { learned, intrusive })
    }

    pub fn load_runs(&self, learned_path: Option<&Path>) -> Result<RomRuns> {
        let p = learned_path.map(Path::to_path_buf).unwrap_or_else(|| self.path(files::ROM));
        Ok(RomRuns {
            learned: io::trajectory_from_container(&Container::load(&p)?)?,
            intrusive: io::trajectory_from_container(&Container::load(&self.path(files::ROM_INTRUSIVE))?)?,
        })
    }

    fn energies(&self, snaps: &SnapshotSet, basis: &PodBasis, rom: &LearnedRom, ut: &DMatrix<f64>) -> Result<(Vec<f64>, Vec<f64>)> {
        let cell = self.cfg.grid.cell_volume();
        let (dx, dy) = grid_operators(&self.cfg.grid)?;
        let model = self.cfg.ms_model();
        let c = |name: &str| model.constant(name).expect("validated constants");
        let v = &basis.v;
        Ok(match self.cfg.model.name {
            ModelKind::Wave => {
                let vel = match snaps.aux("v") {
                    Some(v) => v.clone(),
                    None => wave_velocity_fom(&snaps.u, self.cfg.dt, &dx, c("c"))?,
                };
                (
                    wave_energy_fom(&snaps.u, &vel, cell, &dx, c("c"))?,
                    wave_energy_rom(ut, self.cfg.dt, cell, &rom.dx, v, c("c"))?,
                )
            }
            ModelKind::KdV => (
                kdv_energy_fom(&snaps.u, cell, &dx, c("eta"), c("gamma"))?,
                kdv_energy_rom(ut, cell, &rom.dx, v, c("eta"), c("gamma"))?,
            ),
            ModelKind::ZK => {
                let dy = dy.expect("2D grid");
                let rdy = rom.dy.as_ref().ok_or_else(|| Error::Format("zk operators without dy".into()))?;
                (
                    zk_energy_fom(&snaps.u, cell, &dx, &dy)?,
                    zk_energy_rom(ut, cell, &rom.dx, rdy, v)?,
                )
            }
        })
    }

    /// Energies, energy errors, coefficient errors and the state error field.
    pub fn diagnose(
        &mut self,
        snaps: &SnapshotSet,
        basis: &PodBasis,
        models: &TrainedModels,
        runs: &RomRuns,
    ) -> Result<Summary> {
        stage("diagnose", self.diagnose_inner(snaps, basis, models, runs))
    }

    fn diagnose_inner(
        &mut self,
        snaps: &SnapshotSet,
        basis: &PodBasis,
        models: &TrainedModels,
        runs: &RomRuns,
    ) -> Result<Summary> {
        if runs.learned.n_t() != snaps.n_t() || runs.intrusive.n_t() != snaps.n_t() {
            return Err(Error::DimensionMismatch {
                context: "reduced vs full time levels",
                expected: snaps.n_t(),
                got: runs.learned.n_t(),
            });
        }
        let times = snaps.times();
        let (e_fom, e_learned) = self.energies(snaps, basis, &models.learned, &runs.learned.ut)?;
        let (_, e_intr) = self.energies(snaps, basis, &models.intrusive, &runs.intrusive.ut)?;
        let rel_learned = relative_energy_error(&e_fom, &e_learned)?;
        let rel_intr = relative_energy_error(&e_fom, &e_intr)?;
        let te = &times[..e_fom.len()];
        for (file, series) in [
            ("energy_fom.csv", &e_fom),
            ("energy_learned.csv", &e_learned),
            ("energy_intrusive.csv", &e_intr),
            ("energy_rel_error_learned.csv", &rel_learned),
            ("energy_rel_error_intrusive.csv", &rel_intr),
        ] {
            io::write_series_csv(&self.path(file), te, series)?;
            self.record(file)?;
        }

        let projected = basis.v.tr_mul(&snaps.u);
        let coeff_err = |ut: &DMatrix<f64>| -> Vec<f64> { (0..ut.ncols()).map(|n| (projected.column(n) - ut.column(n)).amax()).collect() };
        let err_learned = coeff_err(&runs.learned.ut);
        let err_intr = coeff_err(&runs.intrusive.ut);
        io::write_series_csv(&self.path("coeff_error_learned.csv"), &times, &err_learned)?;
        io::write_series_csv(&self.path("coeff_error_intrusive.csv"), &times, &err_intr)?;
        self.record("coeff_error_learned.csv")?;
        self.record("coeff_error_intrusive.csv")?;
        for i in 0..basis.r().min(3) {
            let fom_file = format!("coeff{}_fom.csv", i + 1);
            let rom_file = format!("coeff{}_learned.csv", i + 1);
            let row = |m: &DMatrix<f64>| m.row(i).iter().copied().collect::<Vec<_>>();
            io::write_series_csv(&self.path(&fom_file), &times, &row(&projected))?;
            io::write_series_csv(&self.path(&rom_file), &times, &row(&runs.learned.ut))?;
            self.record(&fom_file)?;
            self.record(&rom_file)?;
        }

        let field = state_error_field(&snaps.u, &runs.learned.ut, &basis.v)?;
        let stride = (snaps.n_t() - 1).div_ceil(self.cfg.error_field_samples - 1).max(1);
        let picks: Vec<usize> = (0..snaps.n_t()).step_by(stride).collect();
        let sub = DMatrix::from_fn(field.nrows(), picks.len(), |i, k| field[(i, picks[k])]);
        let sub_t: Vec<f64> = picks.iter().map(|&n| times[n]).collect();
        io::write_field_csv(&self.path("state_error.csv"), &self.cfg.grid, &sub_t, &sub)?;
        self.record("state_error.csv")?;

        let split = self.train_steps() + 1;
        let max = |xs: &[f64]| xs.iter().copied().fold(0.0, f64::max);
        let summary = Summary {
            model: self.cfg.model.name,
            r: basis.r(),
            retained_energy: basis.retained_energy(),
            train_loss_learned: models.loss_learned,
            train_loss_intrusive: models.loss_intrusive,
            epochs: models.learned.loss_history.len().saturating_sub(1),
            best_epoch: models.learned.best_epoch,
            fom_energy_drift: relative_drift(&e_fom),
            rom_energy_drift_learned: relative_drift(&e_learned),
            rom_energy_drift_intrusive: relative_drift(&e_intr),
            max_rel_energy_error_learned: max(&rel_learned),
            max_rel_energy_error_intrusive: max(&rel_intr),
            coeff_error_train_max_learned: max(&err_learned[..split]),
            coeff_error_test_max_learned: max(&err_learned[split..]),
            coeff_error_train_max_intrusive: max(&err_intr[..split]),
            coeff_error_test_max_intrusive: max(&err_intr[split..]),
            state_error_max_learned: field.amax(),
        };
        io::write_json(&self.path(files::SUMMARY), &summary)?;
        self.record(files::SUMMARY)?;
        Ok(summary)
    }

    /// Re-reads every recorded artifact and checks its format.
    fn validate_outputs(&self) -> Result<()> {
        for name in self.artifacts.keys() {
            let p = self.path(name);
            if name.ends_with(".msnap") {
                Container::load(&p)?;
            } else if name.ends_with(".json") {
                let v: Value = serde_json::from_slice(&std::fs::read(&p)?)?;
                if !v.is_object() {
                    return Err(Error::Format(format!("{name}: expected a JSON object")));
                }
            } else if name == "state_error.csv" {
                let header: &[&str] = if matches!(self.cfg.grid, crate::grid::Grid::TwoD(_)) {
                    &["x", "y", "t", "value"]
                } else {
                    &["x", "t", "value"]
                };
                io::validate_csv(&p, header)?;
            } else if name == "loss_history.csv" {
                io::validate_csv(&p, &["epoch", "value"])?;
            } else if name == files::SNAPSHOTS_CSV {
                continue;
            } else if name.ends_with(".csv") {
                io::validate_csv(&p, &["t", "value"])?;
            }
        }
        Ok(())
    }

    fn manifest(&self, status: &str, failed: Option<&Error>, summary: Option<Summary>, timings: BTreeMap<String, f64>) -> Manifest {
        let (failed_stage, error) = match failed {
            Some(Error::Stage { stage, source }) => (Some(stage.to_string()), Some(source.to_string())),
            Some(e) => (None, Some(e.to_string())),
            None => (None, None),
        };
        Manifest {
            format: "msopinf-manifest/1".into(),
            name: self.cfg.name.clone(),
            status: status.into(),
            failed_stage,
            error,
            config_fingerprint: self.cfg.fingerprint(),
            config: self.cfg.clone(),
            versions: BTreeMap::from([
                ("msopinf".to_string(), env!("CARGO_PKG_VERSION").to_string()),
                ("container".to_string(), "MSNAP1".to_string()),
            ]),
            fingerprints: self.fingerprints.clone(),
            artifacts: self.artifacts.clone(),
            summary,
            timings,
        }
    }

    /// The manifest of a previous complete run with this configuration, if every
    /// artifact it lists is still present and unchanged.
    pub fn existing_complete(&self) -> Option<Manifest> {
        let bytes = std::fs::read(self.path(files::MANIFEST)).ok()?;
        let m: Manifest = serde_json::from_slice(&bytes).ok()?;
        if !m.is_complete() || m.config_fingerprint != self.cfg.fingerprint() {
            return None;
        }
        for a in m.artifacts.values() {
            let data = std::fs::read(self.path(&a.path)).ok()?;
            if sha256_hex(&data) != a.sha256 {
                return None;
            }
        }
        Some(m)
    }

    /// Runs every stage, then writes the manifest last. A completed run with the same
    /// configuration is reused untouched.
    pub fn run(&mut self) -> Result<Manifest> {
        self.run_with(None)
    }

    /// As [`Pipeline::run`], starting from an existing full-order trajectory when given.
    pub fn run_with(&mut self, snaps: Option<SnapshotSet>) -> Result<Manifest> {
        if let Some(s) = &snaps {
            stage("simulate-fom", self.check_snapshots(s, "supplied snapshots"))?;
        }
        if let Some(m) = self.existing_complete().filter(|m| {
            snaps.as_ref().is_none_or(|s| m.fingerprints.get("snapshots") == Some(&s.fingerprint))
        }) {
            return Ok(m);
        }
        std::fs::create_dir_all(&self.out)?;
        let mut timings = BTreeMap::new();
        let result = self.run_stages(snaps, &mut timings).and_then(|s| {
            stage("validate", self.validate_outputs())?;
            Ok(s)
        });
        match result {
            Ok(summary) => {
                let m = self.manifest("complete", None, Some(summary), timings);
                io::write_json(&self.path(files::MANIFEST), &m)?;
                Ok(m)
            }
            Err(e) => {
                let m = self.manifest("incomplete", Some(&e), None, timings);
                io::write_json(&self.path(files::MANIFEST), &m)?;
                Err(e)
            }
        }
    }

    fn run_stages(&mut self, snaps: Option<SnapshotSet>, timings: &mut BTreeMap<String, f64>) -> Result<Summary> {
        let mut timed = |name: &str, t: Instant| {
            timings.insert(name.to_string(), t.elapsed().as_secs_f64());
        };
        let t = Instant::now();
        let snaps = match snaps {
            Some(s) => {
                stage("simulate-fom", self.store_snapshots(&s))?;
                s
            }
            None => self.simulate_fom(None)?,
        };
        timed(STAGES[0], t);
        let t = Instant::now();
        let (_, basis) = self.build_basis(&snaps)?;
        timed(STAGES[1], t);
        let t = Instant::now();
        let models = self.train(&snaps, &basis)?;
        timed(STAGES[2], t);
        let t = Instant::now();
        let runs = self.simulate_rom(&snaps, &basis, &models)?;
        timed(STAGES[3], t);
        let t = Instant::now();
        let summary = self.diagnose(&snaps, &basis, &models, &runs)?;
        timed(STAGES[4], t);
        Ok(summary)
    }
}

/// Parameter vector of stored operators (`D̃x` then `D̃y`).
pub fn operator_params(rom: &LearnedRom) -> Vec<f64> {
    let mut theta = unskew(&rom.dx);
    if let Some(dy) = &rom.dy {
        theta.extend(unskew(dy));
    }
    theta
}
