//! Reduced-order time stepping with the same linearly implicit schemes as the full model.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fom::step_count;
use crate::linalg::{scale_rows, DenseLu};
use crate::model::{Constants, ModelKind};
use crate::opinf::LearnedRom;

fn constant(constants: &Constants, model: ModelKind, name: &'static str) -> Result<f64> {
    constants.get(name).copied().ok_or(Error::MissingConstant {
        model: model.name(),
        name,
    })
}

fn check_len(x: &DVector<f64>, r: usize, context: &'static str) -> Result<()> {
    if x.len() != r {
        return Err(Error::DimensionMismatch {
            context,
            expected: r,
            got: x.len(),
        });
    }
    Ok(())
}

fn check_basis(v: &DMatrix<f64>, r: usize) -> Result<()> {
    if v.ncols() != r {
        return Err(Error::DimensionMismatch {
            context: "basis columns vs operator size",
            expected: r,
            got: v.ncols(),
        });
    }
    Ok(())
}

/// Reduced state of the coupled wave system.
#[derive(Debug, Clone, PartialEq)]
pub struct WaveRomState {
    pub u: DVector<f64>,
    pub v: DVector<f64>,
    pub w: DVector<f64>,
}

/// Reduced wave scheme `δ_t² ũ − c² μ_t² D̃² ũ = 0` and its coupled one-step form.
pub struct WaveRomStepper {
    d: DMatrix<f64>,
    d2: DMatrix<f64>,
    dt: f64,
    c2: f64,
    lu: DenseLu,
}

impl WaveRomStepper {
    pub fn new(d: &DMatrix<f64>, dt: f64, c: f64) -> Result<Self> {
        let r = d.nrows();
        let c2 = c * c;
        let d2 = d * d;
        let m = DMatrix::identity(r, r) - &d2 * (c2 * dt * dt / 4.0);
        Ok(WaveRomStepper {
            d: d.clone(),
            d2,
            dt,
            c2,
            lu: DenseLu::new(m, "reduced wave step")?,
        })
    }

    pub fn r(&self) -> usize {
        self.d.nrows()
    }

    /// Solves `(I − c²Δt²/4 D̃²) ũ⁺ = 2ũ − ũ⁻ + c²Δt²/4 D̃² (2ũ + ũ⁻)`.
    pub fn step(&self, prev: &DVector<f64>, curr: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(prev, self.r(), "reduced wave state")?;
        check_len(curr, self.r(), "reduced wave state")?;
        let k = self.c2 * self.dt * self.dt / 4.0;
        let rhs = curr * 2.0 - prev + &self.d2 * (curr * 2.0 + prev) * k;
        self.lu.solve(&rhs)
    }

    /// One midpoint step of `δ_t ũ = μ_t ṽ`, `δ_t ṽ = D̃ μ_t w̃`, `μ_t w̃ = c² D̃ μ_t ũ`.
    pub fn step_coupled(&self, s: &WaveRomState) -> Result<WaveRomState> {
        for x in [&s.u, &s.v, &s.w] {
            check_len(x, self.r(), "reduced wave state")?;
        }
        let dt = self.dt;
        let rhs = &s.u + &s.v * dt + &self.d2 * &s.u * (self.c2 * dt * dt / 4.0);
        let u = self.lu.solve(&rhs)?;
        let d_sum = &self.d * (&s.u + &u);
        let v = &s.v + &self.d * &d_sum * (self.c2 * dt / 2.0);
        let w = d_sum * self.c2 - &s.w;
        Ok(WaveRomState { u, v, w })
    }

    /// Coupled state with `w̃ = c² D̃ ũ`.
    pub fn initial_state(&self, u: DVector<f64>, v: DVector<f64>) -> WaveRomState {
        let w = &self.d * &u * self.c2;
        WaveRomState { u, v, w }
    }
}

/// Reduced scheme with a lifted nonlinear term,
/// `[I/Δt + α D̃ Vᵀdiag(Vũⁿ)V + ½ P̃] ũⁿ⁺¹ = [I/Δt − ½ P̃] ũⁿ`.
///
/// KdV: `α = η/2`, `P̃ = γ² D̃³`. ZK: `α = ½`, `P̃ = D̃x³ + D̃x D̃y²`.
pub struct NonlinearRomStepper {
    d: DMatrix<f64>,
    v: DMatrix<f64>,
    alpha: f64,
    base: DMatrix<f64>,
    rhs_op: DMatrix<f64>,
}

impl NonlinearRomStepper {
    pub fn kdv(d: &DMatrix<f64>, v: &DMatrix<f64>, dt: f64, eta: f64, gamma: f64) -> Result<Self> {
        let p = d * d * d * (gamma * gamma);
        Self::build(d, v, dt, eta / 2.0, p)
    }

    pub fn zk(dx: &DMatrix<f64>, dy: &DMatrix<f64>, v: &DMatrix<f64>, dt: f64) -> Result<Self> {
        let p = dx * dx * dx + dx * (dy * dy);
        Self::build(dx, v, dt, 0.5, p)
    }

    fn build(d: &DMatrix<f64>, v: &DMatrix<f64>, dt: f64, alpha: f64, p: DMatrix<f64>) -> Result<Self> {
        let r = d.nrows();
        check_basis(v, r)?;
        let id = DMatrix::identity(r, r) / dt;
        Ok(NonlinearRomStepper {
            d: d.clone(),
            v: v.clone(),
            alpha,
            base: &id + &p * 0.5,
            rhs_op: id - p * 0.5,
        })
    }

    pub fn r(&self) -> usize {
        self.d.nrows()
    }

    /// `Vᵀ diag(Vũ) V`
    pub fn lifted_product(&self, u: &DVector<f64>) -> DMatrix<f64> {
        let full = &self.v * u;
        self.v.tr_mul(&scale_rows(&self.v, full.as_slice()))
    }

    pub fn step(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        check_len(u, self.r(), "reduced state")?;
        let a = &self.base + &self.d * self.lifted_product(u) * self.alpha;
        DenseLu::new(a, "reduced step")?.solve(&(&self.rhs_op * u))
    }
}

pub fn rom_step_wave(
    prev: &DVector<f64>,
    curr: &DVector<f64>,
    dt: f64,
    d: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    WaveRomStepper::new(d, dt, 1.0)?.step(prev, curr)
}

pub fn rom_step_kdv(
    u: &DVector<f64>,
    dt: f64,
    d: &DMatrix<f64>,
    v: &DMatrix<f64>,
    eta: f64,
    gamma: f64,
) -> Result<DVector<f64>> {
    NonlinearRomStepper::kdv(d, v, dt, eta, gamma)?.step(u)
}

pub fn rom_step_zk(
    u: &DVector<f64>,
    dt: f64,
    dx: &DMatrix<f64>,
    dy: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<DVector<f64>> {
    NonlinearRomStepper::zk(dx, dy, v, dt)?.step(u)
}

/// Reduced trajectory `Ũ` (`r × N_t`).
#[derive(Debug, Clone, PartialEq)]
pub struct RomTrajectory {
    pub ut: DMatrix<f64>,
    pub dt: f64,
    /// Fingerprint of the operators that produced it.
    pub operator_fingerprint: String,
}

impl RomTrajectory {
    pub fn n_t(&self) -> usize {
        self.ut.ncols()
    }

    pub fn times(&self) -> Vec<f64> {
        (0..self.n_t()).map(|n| n as f64 * self.dt).collect()
    }
}

/// Reduced initial data `ũ⁰` and, for the wave model, `ṽ⁰`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedInitial {
    pub u: DVector<f64>,
    pub v: Option<DVector<f64>>,
}

impl ReducedInitial {
    /// Galerkin initialization `ũ⁰ = Vᵀu⁰`, `ṽ⁰ = Vᵀv⁰`.
    pub fn project(basis: &DMatrix<f64>, u: &DVector<f64>, v: Option<&DVector<f64>>) -> Result<Self> {
        for x in std::iter::once(u).chain(v) {
            if x.len() != basis.nrows() {
                return Err(Error::DimensionMismatch {
                    context: "initial state vs basis",
                    expected: basis.nrows(),
                    got: x.len(),
                });
            }
        }
        Ok(ReducedInitial {
            u: basis.tr_mul(u),
            v: v.map(|v| basis.tr_mul(v)),
        })
    }
}

/// Integrates the reduced model over `[0, t_final]`.
///
/// The wave model starts with one coupled step from `(ũ⁰, ṽ⁰, c² D̃ ũ⁰)` (zero
/// velocity when `ṽ⁰` is absent) and continues with the two-step recurrence.
pub fn simulate_rom(
    rom: &LearnedRom,
    basis: &DMatrix<f64>,
    init: &ReducedInitial,
    dt: f64,
    t_final: f64,
) -> Result<RomTrajectory> {
    let steps = step_count(t_final, dt)?;
    let r = rom.r();
    check_len(&init.u, r, "reduced initial state")?;
    let mut ut = DMatrix::zeros(r, steps + 1);
    ut.set_column(0, &init.u);
    match rom.model {
        ModelKind::Wave => {
            let c = constant(&rom.constants, rom.model, "c")?;
            let stepper = WaveRomStepper::new(&rom.dx, dt, c)?;
            if steps >= 1 {
                let v0 = init.v.clone().unwrap_or_else(|| DVector::zeros(r));
                check_len(&v0, r, "reduced initial velocity")?;
                let s1 = stepper.step_coupled(&stepper.initial_state(init.u.clone(), v0))?;
                ut.set_column(1, &s1.u);
            }
            for n in 2..=steps {
                let next = stepper.step(&ut.column(n - 2).into_owned(), &ut.column(n - 1).into_owned())?;
                ut.set_column(n, &next);
            }
        }
        ModelKind::KdV | ModelKind::ZK => {
            let stepper = match rom.model {
                ModelKind::KdV => NonlinearRomStepper::kdv(
                    &rom.dx,
                    basis,
                    dt,
                    constant(&rom.constants, rom.model, "eta")?,
                    constant(&rom.constants, rom.model, "gamma")?,
                )?,
                _ => {
                    let dy = rom
                        .dy
                        .as_ref()
                        .ok_or_else(|| Error::Unsupported("zk model without a y-operator".into()))?;
                    NonlinearRomStepper::zk(&rom.dx, dy, basis, dt)?
                }
            };
            for n in 1..=steps {
                let next = stepper.step(&ut.column(n - 1).into_owned())?;
                ut.set_column(n, &next);
            }
        }
    }
    if ut.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("reduced trajectory"));
    }
    Ok(RomTrajectory {
        ut,
        dt,
        operator_fingerprint: rom.fingerprint(),
    })
}
