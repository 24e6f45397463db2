//! Full-order linearly implicit energy-preserving time steppers.
//!
//! * wave: implicit midpoint on the coupled first-order system in `(u, v, w)`,
//!   equivalent to `δ_t² u − c² μ_t² D² u = 0` after eliminating `v, w`;
//! * KdV: `δ_t u + (η/2) D(uⁿ ∘ uⁿ⁺¹) + γ² μ_t D³ u = 0`;
//! * ZK:  `δ_t u + ½ Dx(uⁿ ∘ uⁿ⁺¹) + μ_t (Dx³ + Dx Dy²) u = 0`.
//!
//! Each step solves one linear system. Solution vectors for ZK are flattened x-fastest.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::grid::Grid;
use crate::linalg::{scale_columns, DenseLu};
use crate::model::{ModelKind, MsModel};
use crate::operators::{central_diff_1d, central_diff_2d, DiffOperator};
use crate::spectral::CirculantSolver;

#[derive(Debug, Clone, PartialEq)]
pub struct WaveFomState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScalarFomState {
    pub u: DVector<f64>,
    pub t: f64,
}

/// Midpoint stepper for the coupled wave system
/// `δ_t u = μ_t v`, `δ_t v = D μ_t w`, `μ_t w = c² D μ_t u`.
///
/// Eliminating `v'` and `w'` leaves `(I − c²Δt²/4 D²) u' = u + Δt v + c²Δt²/4 D² u`,
/// whose matrix is symmetric positive definite and is factored once.
pub struct WaveStepper {
    d: DiffOperator,
    dt: f64,
    c2: f64,
    lu: DenseLu,
}

impl WaveStepper {
    pub fn new(d: DiffOperator, dt: f64, c: f64) -> Result<Self> {
        let c2 = c * c;
        let n = d.dim();
        let d2 = d.dense_pow(2);
        let m = DMatrix::identity(n, n) - d2 * (c2 * dt * dt / 4.0);
        Ok(WaveStepper {
            d,
            dt,
            c2,
            lu: DenseLu::new(m, "wave step")?,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn step(&self, s: &WaveFomState) -> Result<WaveFomState> {
        let n = self.d.dim();
        for (len, ctx) in [(s.u.len(), "wave u"), (s.v.len(), "wave v"), (s.w.len(), "wave w")] {
            if len != n {
                return Err(Error::DimensionMismatch {
                    context: ctx,
                    expected: n,
                    got: len,
                });
            }
        }
        let dt = self.dt;
        let k = self.c2 * dt * dt / 4.0;
        let d2u = self.d.apply_pow(&s.u, 2)?;
        let rhs = &s.u + &s.v * dt + &d2u * k;
        let u_next = self.lu.solve(&rhs)?;
        let sum = &s.u + &u_next;
        let d_sum = self.d.apply(&sum)?;
        let d2_sum = self.d.apply(&d_sum)?;
        let v_next = &s.v + d2_sum * (self.c2 * dt / 2.0);
        let w_next = d_sum * self.c2 - &s.w;
        Ok(WaveFomState {
            u: u_next,
            v: v_next,
            w: w_next,
            t: s.t + dt,
        })
    }
}

/// One wave step with a fresh factorisation (`c = 1`).
pub fn step_wave(state: &WaveFomState, dt: f64, d: &DiffOperator) -> Result<WaveFomState> {
    WaveStepper::new(*d, dt, 1.0)?.step(state)
}

/// Linearly implicit KdV step:
/// `[I/Δt + (η/2) D diag(uⁿ) + (γ²/2) D³] uⁿ⁺¹ = [I/Δt − (γ²/2) D³] uⁿ`.
pub struct KdvStepper {
    d: DiffOperator,
    dt: f64,
    eta: f64,
    gamma: f64,
    d_dense: DMatrix<f64>,
    base: DMatrix<f64>,
}

impl KdvStepper {
    pub fn new(d: DiffOperator, dt: f64, eta: f64, gamma: f64) -> Self {
        let n = d.dim();
        let d_dense = d.to_dense();
        let d3 = d.dense_pow(3);
        let base = DMatrix::identity(n, n) / dt + d3 * (gamma * gamma / 2.0);
        KdvStepper {
            d,
            dt,
            eta,
            gamma,
            d_dense,
            base,
        }
    }

    pub fn step(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.d.dim();
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                context: "kdv state",
                expected: n,
                got: u.len(),
            });
        }
        let g2 = self.gamma * self.gamma;
        let a = &self.base + scale_columns(&self.d_dense, u.as_slice()) * (self.eta / 2.0);
        let rhs = u / self.dt - self.d.apply_pow(u, 3)? * (g2 / 2.0);
        DenseLu::new(a, "kdv step")?.solve(&rhs)
    }
}

pub fn step_kdv(u: &DVector<f64>, dt: f64, d: &DiffOperator, eta: f64, gamma: f64) -> Result<DVector<f64>> {
    KdvStepper::new(*d, dt, eta, gamma).step(u)
}

/// How the ZK step system is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ZkSolver {
    /// Spectral iteration when its contraction bound holds, dense LU otherwise.
    #[default]
    Auto,
    Dense,
    Spectral,
}

/// Largest dimension for which the dense fallback is attempted.
const DENSE_FALLBACK_LIMIT: usize = 4096;

/// Linearly implicit ZK step:
/// `[I/Δt + ½ Dx diag(uⁿ) + ½ (Dx³ + Dx Dy²)] uⁿ⁺¹ = [I/Δt − ½ (Dx³ + Dx Dy²)] uⁿ`.
///
/// The constant part is circulant, so it is inverted exactly in Fourier space and the
/// advective term is handled by fixed-point iteration. With `‖(I/Δt + ½P)⁻¹‖ ≤ Δt`
/// and `‖½ Dx diag(u)‖ ≤ max|u| / 2h` the iteration contracts by
/// `q = Δt max|u| / 2h`; when `q > ½` the step falls back to dense LU.
pub struct ZkStepper {
    dx: DiffOperator,
    dy: DiffOperator,
    dt: f64,
    solver: ZkSolver,
    spectral: CirculantSolver,
    dense: Option<(DMatrix<f64>, DMatrix<f64>)>,
}

impl ZkStepper {
    pub fn new(dx: DiffOperator, dy: DiffOperator, dt: f64, solver: ZkSolver) -> Self {
        let (n, _) = dx.shape();
        let spectral = CirculantSolver::zk_linear(n, dx.h(), dt, 1.0, true);
        let dense = if solver == ZkSolver::Dense {
            Some(Self::dense_parts(&dx, &dy, dt))
        } else {
            None
        };
        ZkStepper {
            dx,
            dy,
            dt,
            solver,
            spectral,
            dense,
        }
    }

    fn dense_parts(dx: &DiffOperator, dy: &DiffOperator, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = dx.dim();
        let dxm = dx.to_dense();
        let p = dx.dense_pow(3) + &dxm * dy.dense_pow(2);
        (dxm, DMatrix::identity(n, n) / dt + p * 0.5)
    }

    /// `Dx³ u + Dx Dy² u`
    pub fn linear_part(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let dyy = self.dy.apply_pow(u, 2)?;
        Ok(self.dx.apply_pow(u, 3)? + self.dx.apply(&dyy)?)
    }

    pub fn contraction_bound(&self, u: &DVector<f64>) -> f64 {
        self.dt.abs() * u.amax() / (2.0 * self.dx.h())
    }

    pub fn step(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let n = self.dx.dim();
        if u.len() != n {
            return Err(Error::DimensionMismatch {
                context: "zk state",
                expected: n,
                got: u.len(),
            });
        }
        let rhs = u / self.dt - self.linear_part(u)? * 0.5;
        let q = self.contraction_bound(u);
        match self.solver {
            ZkSolver::Dense => self.step_dense(u, &rhs),
            ZkSolver::Spectral => self.step_spectral(u, &rhs),
            ZkSolver::Auto if q <= 0.5 => self.step_spectral(u, &rhs),
            ZkSolver::Auto if n <= DENSE_FALLBACK_LIMIT => self.step_dense(u, &rhs),
            ZkSolver::Auto => Err(Error::SingularSystem {
                context: "zk step: spectral iteration would not contract",
                pivot_ratio: q,
            }),
        }
    }

    fn step_dense(&self, u: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let owned;
        let (dxm, base) = match &self.dense {
            Some((a, b)) => (a, b),
            None => {
                owned = Self::dense_parts(&self.dx, &self.dy, self.dt);
                (&owned.0, &owned.1)
            }
        };
        let a = base + scale_columns(dxm, u.as_slice()) * 0.5;
        DenseLu::new(a, "zk step")?.solve(rhs)
    }

    fn step_spectral(&self, u: &DVector<f64>, rhs: &DVector<f64>) -> Result<DVector<f64>> {
        let n = u.len();
        let mut x = DVector::from_vec(self.spectral.solve(rhs.as_slice()));
        let mut prod = DVector::zeros(n);
        let mut adv = DVector::zeros(n);
        let mut prev_diff = f64::INFINITY;
        for it in 0..200 {
            prod.copy_from(&u.component_mul(&x));
            self.dx.apply_into(prod.as_slice(), adv.as_mut_slice());
            let b = rhs - &adv * 0.5;
            let next = DVector::from_vec(self.spectral.solve(b.as_slice()));
            let diff = (&next - &x).amax();
            x = next;
            let scale = x.amax().max(f64::MIN_POSITIVE);
            if diff <= 1e-15 * scale || (it > 3 && diff >= prev_diff) {
                return Ok(x);
            }
            prev_diff = diff;
        }
        Err(Error::SingularSystem {
            context: "zk step: spectral iteration did not converge",
            pivot_ratio: self.contraction_bound(u),
        })
    }
}

pub fn step_zk(u: &DVector<f64>, dt: f64, dx: &DiffOperator, dy: &DiffOperator) -> Result<DVector<f64>> {
    ZkStepper::new(*dx, *dy, dt, ZkSolver::Auto).step(u)
}

/// Initial data on the grid: `u(x, 0)` and, for the wave model, `u_t(x, 0)`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialState {
    pub u: DVector<f64>,
    pub ut: Option<DVector<f64>>,
}

/// Full-order trajectories sampled at every time step, `t_n = n Δt`.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet {
    pub model: ModelKind,
    pub grid: Grid,
    pub dt: f64,
    /// `N × N_t`, one column per time level starting at `t = 0`.
    pub u: DMatrix<f64>,
    /// Auxiliary trajectories recorded by the solver (`v`, `w` for the wave model).
    pub aux: Vec<(String, DMatrix<f64>)>,
    pub fingerprint: String,
}

impl SnapshotSet {
    pub fn n_t(&self) -> usize {
        self.u.ncols()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t()).map(|n| n as f64 * self.dt).collect()
    }

    pub fn aux(&self, name: &str) -> Option<&DMatrix<f64>> {
        self.aux.iter().find(|(k, _)| k == name).map(|(_, m)| m)
    }

    /// The first `n_t` time levels.
    pub fn truncated(&self, n_t: usize) -> SnapshotSet {
        let n_t = n_t.min(self.n_t());
        let u = self.u.columns(0, n_t).into_owned();
        let aux = self
            .aux
            .iter()
            .map(|(k, m)| (k.clone(), m.columns(0, n_t).into_owned()))
            .collect();
        let fingerprint = Fingerprinter::new()
            .str(&self.fingerprint)
            .f64(n_t as f64)
            .finish();
        SnapshotSet {
            model: self.model,
            grid: self.grid,
            dt: self.dt,
            u,
            aux,
            fingerprint,
        }
    }
}

/// Number of steps `T / Δt`, which must be a non-negative integer up to 1e-9.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    let ratio = t_final / dt;
    let n = ratio.round();
    if !(dt > 0.0) || !ratio.is_finite() || n < 0.0 || (ratio - n).abs() > 1e-9 {
        return Err(Error::NonIntegerSteps { t_final, dt });
    }
    Ok(n as usize)
}

/// Spatial operators on the grid: `(Dx, Dy)` with `Dy` only in 2D.
pub fn grid_operators(grid: &Grid) -> Result<(DiffOperator, Option<DiffOperator>)> {
    match grid {
        Grid::OneD(g) => Ok((central_diff_1d(g)?, None)),
        Grid::TwoD(g) => {
            let (dx, dy) = central_diff_2d(g)?;
            Ok((dx, Some(dy)))
        }
    }
}

pub fn simulate_fom(
    model: &MsModel,
    grid: &Grid,
    ic: &InitialState,
    dt: f64,
    t_final: f64,
) -> Result<SnapshotSet> {
    simulate_fom_with(model, grid, ic, dt, t_final, ZkSolver::Auto)
}

pub fn simulate_fom_with(
    model: &MsModel,
    grid: &Grid,
    ic: &InitialState,
    dt: f64,
    t_final: f64,
    zk_solver: ZkSolver,
) -> Result<SnapshotSet> {
    let steps = step_count(t_final, dt)?;
    let n = grid.dim();
    if ic.u.len() != n {
        return Err(Error::DimensionMismatch {
            context: "initial condition",
            expected: n,
            got: ic.u.len(),
        });
    }
    let (dx, dy) = grid_operators(grid)?;
    let mut u = DMatrix::zeros(n, steps + 1);
    u.set_column(0, &ic.u);
    let mut aux = Vec::new();
    match model.kind() {
        ModelKind::Wave => {
            if matches!(grid, Grid::TwoD(_)) {
                return Err(Error::Unsupported("wave model on a 2D grid".into()));
            }
            let c = model.constant("c").unwrap_or(1.0);
            let stepper = WaveStepper::new(dx, dt, c)?;
            let v0 = ic.ut.clone().unwrap_or_else(|| DVector::zeros(n));
            let w0 = dx.apply(&ic.u)? * (c * c);
            let mut v = DMatrix::zeros(n, steps + 1);
            let mut w = DMatrix::zeros(n, steps + 1);
            let mut state = WaveFomState {
                u: ic.u.clone(),
                v: v0,
                w: w0,
                t: 0.0,
            };
            v.set_column(0, &state.v);
            w.set_column(0, &state.w);
            for k in 1..=steps {
                state = stepper.step(&state)?;
                u.set_column(k, &state.u);
                v.set_column(k, &state.v);
                w.set_column(k, &state.w);
            }
            aux.push(("v".to_string(), v));
            aux.push(("w".to_string(), w));
        }
        ModelKind::KdV => {
            if matches!(grid, Grid::TwoD(_)) {
                return Err(Error::Unsupported("kdv model on a 2D grid".into()));
            }
            let eta = model.constant("eta").unwrap_or(1.0);
            let gamma = model.constant("gamma").unwrap_or(0.0);
            let stepper = KdvStepper::new(dx, dt, eta, gamma);
            let mut cur = ic.u.clone();
            for k in 1..=steps {
                cur = stepper.step(&cur)?;
                u.set_column(k, &cur);
            }
        }
        ModelKind::ZK => {
            let dy = dy.ok_or_else(|| Error::Unsupported("zk model needs a 2D grid".into()))?;
            let stepper = ZkStepper::new(dx, dy, dt, zk_solver);
            let mut cur = ic.u.clone();
            for k in 1..=steps {
                cur = stepper.step(&cur)?;
                u.set_column(k, &cur);
            }
        }
    }
    let mut fp = Fingerprinter::new()
        .str(model.kind().name())
        .str(&serde_json::to_string(model.constants())?)
        .str(&serde_json::to_string(grid)?)
        .f64(dt)
        .f64(t_final)
        .slice(ic.u.as_slice());
    if let Some(ut) = &ic.ut {
        fp = fp.slice(ut.as_slice());
    }
    Ok(SnapshotSet {
        model: model.kind(),
        grid: *grid,
        dt,
        u,
        aux,
        fingerprint: fp.finish(),
    })
}
