//! Non-intrusive learning of skew-symmetric reduced difference operators.

mod lm;
mod residual;
pub mod skew;

pub use residual::{residual_kdv, residual_wave, residual_zk, OpInfProblem};
pub use skew::{param_len, pull_back, skew, unskew};

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::model::{Constants, ModelKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub initial_lr: f64,
    pub min_lr: f64,
    /// Relative improvement the best loss must make to reset the plateau counter.
    pub plateau_threshold: f64,
    pub plateau_patience: usize,
    pub lr_decay_factor: f64,
    pub max_epochs: usize,
    /// Stop once the loss falls below this value.
    pub loss_tol: Option<f64>,
    /// Standard deviation of the Gaussian initialization of the parameters.
    pub init_std: f64,
    pub seed: u64,
    /// Number of warm-start stages that ramp the dispersive term from 0 to its full weight.
    pub continuation_stages: usize,
    /// Adam epochs per warm-start stage, at `initial_lr`.
    pub continuation_epochs: usize,
    /// Levenberg–Marquardt iterations per warm-start stage, after its Adam epochs.
    pub continuation_refine_iterations: usize,
    /// Levenberg–Marquardt iterations run after Adam, starting from its best parameters.
    pub refine_iterations: usize,
    /// Conjugate-gradient cap for each Levenberg–Marquardt step.
    pub refine_cg_iterations: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            initial_lr: 1e-2,
            min_lr: 1e-4,
            plateau_threshold: 1e-6,
            plateau_patience: 20,
            lr_decay_factor: 0.5,
            max_epochs: 20_000,
            loss_tol: None,
            init_std: 1e-2,
            seed: 0,
            continuation_stages: 0,
            continuation_epochs: 3000,
            continuation_refine_iterations: 0,
            refine_iterations: 0,
            refine_cg_iterations: 2000,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("initial_lr", self.initial_lr),
            ("min_lr", self.min_lr),
            ("plateau_threshold", self.plateau_threshold),
            ("lr_decay_factor", self.lr_decay_factor),
            ("init_std", self.init_std),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("train.{name} must be positive, got {v}")));
            }
        }
        if self.min_lr > self.initial_lr {
            return Err(Error::Config("train.min_lr exceeds train.initial_lr".into()));
        }
        if self.lr_decay_factor >= 1.0 {
            return Err(Error::Config("train.lr_decay_factor must be below 1".into()));
        }
        if self.plateau_patience == 0 {
            return Err(Error::Config("train.plateau_patience must be positive".into()));
        }
        if let Some(t) = self.loss_tol {
            if !(t >= 0.0) {
                return Err(Error::Config("train.loss_tol must be non-negative".into()));
            }
        }
        Ok(())
    }
}

/// Trained reduced operators with their optimization record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LearnedRom {
    pub model: ModelKind,
    #[serde(with = "matrix_serde")]
    pub dx: DMatrix<f64>,
    #[serde(with = "option_matrix_serde")]
    pub dy: Option<DMatrix<f64>>,
    pub constants: Constants,
    pub loss_history: Vec<f64>,
    pub lr_trace: Vec<f64>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub basis_fingerprint: String,
}

impl LearnedRom {
    pub fn r(&self) -> usize {
        self.dx.nrows()
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::new().str(self.model.name()).matrix(&self.dx);
        if let Some(dy) = &self.dy {
            f = f.matrix(dy);
        }
        f.str(&self.basis_fingerprint).finish()
    }

    /// Wraps known operators (e.g. intrusive ones) in the same container.
    pub fn from_operators(
        model: ModelKind,
        dx: DMatrix<f64>,
        dy: Option<DMatrix<f64>>,
        constants: Constants,
        basis_fingerprint: String,
    ) -> Self {
        LearnedRom {
            model,
            dx,
            dy,
            constants,
            loss_history: Vec::new(),
            lr_trace: Vec::new(),
            best_epoch: 0,
            best_loss: f64::NAN,
            basis_fingerprint,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Adam {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        for i in 0..theta.len() {
            self.m[i] = Self::BETA1 * self.m[i] + (1.0 - Self::BETA1) * grad[i];
            self.v[i] = Self::BETA2 * self.v[i] + (1.0 - Self::BETA2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            theta[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Reduce-on-plateau learning-rate schedule.
struct Plateau {
    lr: f64,
    best: f64,
    stale: usize,
}

impl Plateau {
    fn observe(&mut self, loss: f64, cfg: &TrainConfig) {
        if loss < self.best * (1.0 - cfg.plateau_threshold) {
            self.best = loss;
            self.stale = 0;
        } else {
            self.stale += 1;
            if self.stale > cfg.plateau_patience && self.lr > cfg.min_lr {
                self.lr = (self.lr * cfg.lr_decay_factor).max(cfg.min_lr);
                self.stale = 0;
            }
        }
    }
}

fn finite_or_err(epoch: usize, loss: f64, grad: &[f64]) -> Result<()> {
    if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteLoss { epoch, loss });
    }
    Ok(())
}

/// Minimizes the mean squared defect of `problem` with full-batch Adam.
///
/// With `continuation_stages = K > 0` the parameters are first fitted to the problems
/// with dispersion weight `0, 1/K, …, (K−1)/K` in turn, each for `continuation_epochs`
/// Adam steps and `continuation_refine_iterations` Levenberg–Marquardt steps. Returns the best parameters seen on the full problem together with its loss
/// and learning-rate traces. Entry `k` of the loss history is the loss before update `k`.
///
/// With `refine_iterations > 0` the best Adam parameters are then polished by
/// Levenberg–Marquardt; its losses are appended to the history with learning rate 0.
pub fn train_params(problem: &OpInfProblem, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let n = problem.n_params();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let normal = Normal::new(0.0, cfg.init_std).map_err(|e| Error::Config(e.to_string()))?;
    let mut theta: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();

    let k = cfg.continuation_stages;
    for stage in 0..k {
        let staged = problem.with_dispersion_weight(stage as f64 / k as f64);
        let mut adam = Adam::new(n);
        for epoch in 0..cfg.continuation_epochs {
            let (loss, grad) = staged.loss_and_grad(&theta);
            finite_or_err(epoch, loss, &grad)?;
            adam.step(&mut theta, &grad, cfg.initial_lr);
        }
        if cfg.continuation_refine_iterations > 0 {
            let settings = lm::LmSettings {
                iterations: cfg.continuation_refine_iterations,
                cg_iterations: cfg.refine_cg_iterations,
                loss_tol: None,
            };
            lm::refine(&staged, &mut theta, settings)?;
        }
    }

    let mut adam = Adam::new(n);
    let mut sched = Plateau {
        lr: cfg.initial_lr,
        best: f64::INFINITY,
        stale: 0,
    };
    let mut best_theta = theta.clone();
    let mut best_loss = f64::INFINITY;
    let mut best_epoch = 0;
    let mut losses = Vec::new();
    let mut lrs = Vec::new();

    for epoch in 0..=cfg.max_epochs {
        let (loss, grad) = problem.loss_and_grad(&theta);
        finite_or_err(epoch, loss, &grad)?;
        losses.push(loss);
        lrs.push(sched.lr);
        if loss < best_loss {
            best_loss = loss;
            best_theta.copy_from_slice(&theta);
            best_epoch = epoch;
        }
        if epoch == cfg.max_epochs || cfg.loss_tol.is_some_and(|tol| loss <= tol) {
            break;
        }
        sched.observe(loss, cfg);
        if sched.lr <= cfg.min_lr && sched.stale >= 2 * cfg.plateau_patience {
            break;
        }
        adam.step(&mut theta, &grad, sched.lr);
    }

    if cfg.refine_iterations > 0 && !cfg.loss_tol.is_some_and(|tol| best_loss <= tol) {
        let mut theta = best_theta.clone();
        let settings = lm::LmSettings {
            iterations: cfg.refine_iterations,
            cg_iterations: cfg.refine_cg_iterations,
            loss_tol: cfg.loss_tol,
        };
        let refined = lm::refine(problem, &mut theta, settings)?;
        losses.extend(&refined);
        lrs.extend(std::iter::repeat_n(0.0, refined.len()));
        // accepted steps only ever lower the loss, so the last entry is the refined optimum
        if let Some(&last) = refined.last().filter(|l| **l < best_loss) {
            best_loss = last;
            best_epoch = losses.len() - 1;
            best_theta = theta;
        }
    }

    Ok(TrainOutcome {
        theta: best_theta,
        best_loss,
        best_epoch,
        loss_history: losses,
        lr_trace: lrs,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub theta: Vec<f64>,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub loss_history: Vec<f64>,
    pub lr_trace: Vec<f64>,
}

/// Training data for one model in reduced coordinates.
#[derive(Debug, Clone)]
pub enum TrainingData<'a> {
    /// Projected displacement `Ũ = VᵀU`.
    Wave { ut: &'a DMatrix<f64> },
    /// `Ũ` and `Q = Vᵀ(Uⁿ ∘ Uⁿ⁺¹)`.
    KdV { ut: &'a DMatrix<f64>, q: &'a DMatrix<f64> },
    ZK { ut: &'a DMatrix<f64>, q: &'a DMatrix<f64> },
}

/// `Vᵀ(Uⁿ ∘ Uⁿ⁺¹)` for consecutive snapshot pairs.
pub fn nonlinear_data(v: &DMatrix<f64>, u: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if u.ncols() < 2 {
        return Err(Error::TooFewColumns {
            context: "nonlinear data",
            needed: 2,
            got: u.ncols(),
        });
    }
    if v.nrows() != u.nrows() {
        return Err(Error::DimensionMismatch {
            context: "nonlinear data",
            expected: v.nrows(),
            got: u.nrows(),
        });
    }
    let m = u.ncols() - 1;
    let prod = u.columns(0, m).component_mul(&u.columns(1, m));
    Ok(v.tr_mul(&prod))
}

/// Builds the loss for `model` from its constants and the reduced data.
pub fn build_problem(model: ModelKind, constants: &Constants, data: &TrainingData, dt: f64) -> Result<OpInfProblem> {
    let get = |name: &'static str| {
        constants.get(name).copied().ok_or(Error::MissingConstant {
            model: model.name(),
            name,
        })
    };
    match (model, data) {
        (ModelKind::Wave, TrainingData::Wave { ut }) => OpInfProblem::wave(ut, dt, get("c")?),
        (ModelKind::KdV, TrainingData::KdV { ut, q }) => OpInfProblem::kdv(ut, q, dt, get("eta")?, get("gamma")?),
        (ModelKind::ZK, TrainingData::ZK { ut, q }) => OpInfProblem::zk(ut, q, dt),
        _ => Err(Error::Unsupported(format!("training data does not match model {model}"))),
    }
}

/// Learns `D̃` (and `D̃y` for ZK) from reduced data.
pub fn train(
    model: ModelKind,
    constants: &Constants,
    data: &TrainingData,
    dt: f64,
    cfg: &TrainConfig,
    basis_fingerprint: &str,
) -> Result<LearnedRom> {
    let problem = build_problem(model, constants, data, dt)?;
    let out = train_params(&problem, cfg)?;
    let (dx, dy) = problem.operators(&out.theta);
    Ok(LearnedRom {
        model,
        dx,
        dy,
        constants: constants.clone(),
        loss_history: out.loss_history,
        lr_trace: out.lr_trace,
        best_epoch: out.best_epoch,
        best_loss: out.best_loss,
        basis_fingerprint: basis_fingerprint.to_string(),
    })
}

pub(crate) mod matrix_serde {
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    pub struct Repr {
        pub rows: usize,
        pub cols: usize,
        /// Row-major entries.
        pub data: Vec<f64>,
    }

    pub fn to_repr(m: &DMatrix<f64>) -> Repr {
        Repr {
            rows: m.nrows(),
            cols: m.ncols(),
            data: m.transpose().as_slice().to_vec(),
        }
    }

    pub fn from_repr<E: serde::de::Error>(r: Repr) -> Result<DMatrix<f64>, E> {
        if r.data.len() != r.rows * r.cols {
            return Err(E::custom("matrix data length does not match shape"));
        }
        Ok(DMatrix::from_row_slice(r.rows, r.cols, &r.data))
    }

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        to_repr(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

pub(crate) mod option_matrix_serde {
    use super::matrix_serde::{from_repr, to_repr, Repr};
    use nalgebra::DMatrix;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &Option<DMatrix<f64>>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(to_repr).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<DMatrix<f64>>, D::Error> {
        Option::<Repr>::deserialize(d)?.map(from_repr).transpose()
    }
}
