use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::fom::{step_count, ZkSolver};
use crate::grid::{Grid, PeriodicGrid1D, PeriodicGrid2D};
use crate::model::{Constants, ModelKind, MsModel};
use crate::opinf::TrainConfig;

use super::presets::InitialCondition;

/// Environment variable that overrides `output_dir`.
pub const OUT_ENV: &str = "MSOPINF_OUT";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: ModelKind,
    #[serde(default)]
    pub constants: Constants,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelSpec,
    pub grid: Grid,
    pub initial_condition: InitialCondition,
    pub dt: f64,
    pub t_train: f64,
    pub t_eval: f64,
    pub r: usize,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub zk_solver: ZkSolver,
    /// Largest number of time samples written to the state-error field CSV.
    #[serde(default = "default_field_samples")]
    pub error_field_samples: usize,
    /// Also export the full snapshot matrix as CSV.
    #[serde(default)]
    pub snapshot_csv: bool,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

fn default_field_samples() -> usize {
    51
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || self.name.contains(['/', '\\']) {
            return bad(format!("invalid experiment name {:?}", self.name));
        }
        MsModel::new(self.model.name, &self.model.constants).map_err(|e| Error::Config(e.to_string()))?;
        match (&self.grid, self.model.name.is_2d()) {
            (Grid::OneD(g), false) => {
                PeriodicGrid1D::new(g.a, g.b, g.n).map_err(|e| Error::Config(e.to_string()))?;
            }
            (Grid::TwoD(g), true) => {
                PeriodicGrid2D::new(g.axis.a, g.axis.b, g.axis.n).map_err(|e| Error::Config(e.to_string()))?;
            }
            _ => return bad(format!("grid dimension does not match model {}", self.model.name)),
        }
        if !self.initial_condition.matches(self.model.name) {
            return bad(format!(
                "initial condition {} does not apply to model {}",
                self.initial_condition.name(),
                self.model.name
            ));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_train > 0.0) || self.t_train > self.t_eval {
            return bad(format!("need 0 < t_train ≤ t_eval, got {} and {}", self.t_train, self.t_eval));
        }
        let train_steps = step_count(self.t_train, self.dt).map_err(|e| Error::Config(e.to_string()))?;
        step_count(self.t_eval, self.dt).map_err(|e| Error::Config(e.to_string()))?;
        let min_steps = if self.model.name == ModelKind::Wave { 2 } else { 1 };
        if train_steps < min_steps {
            return bad("training window too short".into());
        }
        if self.r == 0 || self.r > self.grid.dim() {
            return bad(format!("r must lie in 1..={}, got {}", self.grid.dim(), self.r));
        }
        if self.error_field_samples < 2 {
            return bad("error_field_samples must be at least 2".into());
        }
        self.train.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// `output_dir`, unless `MSOPINF_OUT` is set.
    pub fn resolved_output_dir(&self) -> PathBuf {
        match std::env::var_os(OUT_ENV) {
            Some(dir) if !dir.is_empty() => PathBuf::from(dir),
            _ => self.output_dir.clone(),
        }
    }

    pub fn ms_model(&self) -> MsModel {
        MsModel::new(self.model.name, &self.model.constants).expect("validated config")
    }

    /// Training settings with the experiment seed applied.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }

    /// Hash of every setting that affects results (the output directory excluded).
    pub fn fingerprint(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        Fingerprinter::new().str(&serde_json::to_string(&c).expect("config serializes")).finish()
    }

    /// The three reference experiments.
    pub fn preset(name: &str) -> Result<Self> {
        let consts = |pairs: &[(&str, f64)]| -> Constants { pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect() };
        let cfg = match name {
            "wave" => ExperimentConfig {
                name: "wave".into(),
                model: ModelSpec {
                    name: ModelKind::Wave,
                    constants: consts(&[("c", 1.0)]),
                },
                grid: Grid::OneD(PeriodicGrid1D::new(-5.0, 5.0, 512)?),
                initial_condition: InitialCondition::WaveSech {
                    amplitude: 1.0,
                    center: 0.0,
                },
                dt: 0.1,
                t_train: 5.0,
                t_eval: 20.0,
                r: 16,
                train: TrainConfig::default(),
                zk_solver: ZkSolver::Auto,
                error_field_samples: default_field_samples(),
                snapshot_csv: false,
                output_dir: PathBuf::from("out/wave"),
                seed: 0,
            },
            "kdv" => ExperimentConfig {
                name: "kdv".into(),
                model: ModelSpec {
                    name: ModelKind::KdV,
                    constants: consts(&[("eta", 1.0), ("gamma", 0.022)]),
                },
                grid: Grid::OneD(PeriodicGrid1D::new(0.0, 2.0, 500)?),
                initial_condition: InitialCondition::KdvSech {
                    amplitude: 0.4,
                    center: None,
                },
                dt: 0.1,
                t_train: 15.0,
                t_eval: 50.0,
                r: 16,
                train: TrainConfig {
                    continuation_stages: 20,
                    ..TrainConfig::default()
                },
                zk_solver: ZkSolver::Auto,
                error_field_samples: default_field_samples(),
                snapshot_csv: false,
                output_dir: PathBuf::from("out/kdv"),
                seed: 0,
            },
            "zk" => ExperimentConfig {
                name: "zk".into(),
                model: ModelSpec {
                    name: ModelKind::ZK,
                    constants: Constants::new(),
                },
                grid: Grid::TwoD(PeriodicGrid2D::new(0.0, 8.0, 50)?),
                initial_condition: InitialCondition::ZkDoubleSoliton {
                    eps: 0.01,
                    theta: 0.0,
                    c1: 0.45,
                    c2: 0.25,
                    x1: 2.5,
                    x2: 3.3,
                    y1: 0.0,
                    y2: 0.0,
                },
                dt: 0.025,
                t_train: 25.0,
                t_eval: 50.0,
                r: 64,
                train: TrainConfig {
                    max_epochs: 0,
                    continuation_stages: 4,
                    continuation_epochs: 0,
                    continuation_refine_iterations: 20,
                    refine_iterations: 300,
                    ..TrainConfig::default()
                },
                zk_solver: ZkSolver::Auto,
                error_field_samples: default_field_samples(),
                snapshot_csv: false,
                output_dir: PathBuf::from("out/zk"),
                seed: 0,
            },
            other => return Err(Error::Config(format!("unknown preset {other:?} (wave, kdv, zk)"))),
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid_and_round_trip() {
        for name in ["wave", "kdv", "zk"] {
            let cfg = ExperimentConfig::preset(name).unwrap();
            let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
            assert_eq!(back, cfg);
        }
        assert!(ExperimentConfig::preset("heat").is_err());
        let kdv = ExperimentConfig::preset("kdv").unwrap();
        assert!((kdv.grid.h() - 0.004).abs() < 1e-15);
        let zk = ExperimentConfig::preset("zk").unwrap();
        assert!((zk.grid.h() - 0.16).abs() < 1e-15);
    }

    #[test]
    fn invalid_configs_rejected() {
        let base = ExperimentConfig::preset("wave").unwrap();
        let mut c = base.clone();
        c.t_train = 30.0;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let mut c = base.clone();
        c.r = 0;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.dt = 0.3;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.model.name = ModelKind::ZK;
        assert!(c.validate().is_err());
        let mut c = base;
        c.model.constants.clear();
        assert!(c.validate().is_err());
        assert!(ExperimentConfig::from_json("{\"name\": 1}").is_err());
    }

    #[test]
    fn fingerprint_ignores_output_dir() {
        let a = ExperimentConfig::preset("wave").unwrap();
        let mut b = a.clone();
        b.output_dir = PathBuf::from("/elsewhere");
        assert_eq!(a.fingerprint(), b.fingerprint());
        b.seed = 1;
        assert_ne!(a.fingerprint(), b.fingerprint());
    }
}
