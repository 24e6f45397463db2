//! Polarized discrete energies, energy errors, symplecticity and local-energy checks.
//!
//! Energy series have one entry per consecutive pair of time levels (`N_t − 1`).
//! Full-model energies take the difference operators of the grid; reduced energies lift
//! `D̃ ũ` (and `ũ`) with the basis `V`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::MsModel;
use crate::operators::DiffOperator;
use crate::rom::WaveRomState;
use crate::snapshots::polarized_velocity;

fn need_cols(m: &DMatrix<f64>, needed: usize, context: &'static str) -> Result<()> {
    if m.ncols() < needed {
        return Err(Error::TooFewColumns {
            context,
            needed,
            got: m.ncols(),
        });
    }
    Ok(())
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>, context: &'static str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch {
            context,
            expected: a.nrows() * a.ncols(),
            got: b.nrows() * b.ncols(),
        });
    }
    Ok(())
}

fn check_rows(m: &DMatrix<f64>, rows: usize, context: &'static str) -> Result<()> {
    if m.nrows() != rows {
        return Err(Error::DimensionMismatch {
            context,
            expected: rows,
            got: m.nrows(),
        });
    }
    Ok(())
}

/// `Σ_j 2 aⁿ_j aⁿ⁺¹_j + (aⁿ_j)²` for every consecutive column pair.
fn polarized_square(a: &DMatrix<f64>) -> Vec<f64> {
    (0..a.ncols() - 1)
        .map(|n| {
            let (x, y) = (a.column(n), a.column(n + 1));
            2.0 * x.dot(&y) + x.norm_squared()
        })
        .collect()
}

/// `Σ_j (uⁿ_j)² uⁿ⁺¹_j`
fn polarized_cube(u: &DMatrix<f64>) -> Vec<f64> {
    (0..u.ncols() - 1)
        .map(|n| u.column(n).iter().zip(u.column(n + 1).iter()).map(|(a, b)| a * a * b).sum())
        .collect()
}

fn combine(cell: f64, parts: &[(f64, Vec<f64>)]) -> Vec<f64> {
    let len = parts[0].1.len();
    (0..len)
        .map(|n| cell / 6.0 * parts.iter().map(|(w, s)| w * s[n]).sum::<f64>())
        .collect()
}

/// Polarized wave velocities of a full trajectory (last level from the forward relation).
pub fn wave_velocity_fom(u: &DMatrix<f64>, dt: f64, d: &DiffOperator, c: f64) -> Result<DMatrix<f64>> {
    need_cols(u, 2, "wave velocity")?;
    check_rows(u, d.dim(), "wave velocity")?;
    Ok(polarized_velocity(u, dt, c * c, None, |x| {
        d.apply_pow(x, 2).expect("dimension checked")
    }))
}

/// `Δx/6 Σ_j c²(2 aⁿ aⁿ⁺¹ + (aⁿ)²) + 2 vⁿ vⁿ⁺¹ + (vⁿ)²` with `a = D u`.
pub fn wave_energy_fom(
    u: &DMatrix<f64>,
    v: &DMatrix<f64>,
    cell: f64,
    d: &DiffOperator,
    c: f64,
) -> Result<Vec<f64>> {
    need_cols(u, 2, "wave energy")?;
    same_shape(u, v, "wave energy u vs v")?;
    let a = d.apply_columns(u)?;
    Ok(combine(cell, &[(c * c, polarized_square(&a)), (1.0, polarized_square(v))]))
}

/// Reduced wave energy with `a = V D̃ ũ` and `v̂ = V ṽ`, `ṽ` polarized with `D̃²`.
pub fn wave_energy_rom(
    ut: &DMatrix<f64>,
    dt: f64,
    cell: f64,
    d: &DMatrix<f64>,
    v: &DMatrix<f64>,
    c: f64,
) -> Result<Vec<f64>> {
    need_cols(ut, 2, "reduced wave energy")?;
    check_rows(ut, d.nrows(), "reduced wave energy")?;
    check_rows(ut, v.ncols(), "reduced wave energy basis")?;
    let d2 = d * d;
    let vt = polarized_velocity(ut, dt, c * c, None, |x| &d2 * x);
    let a = v * (d * ut);
    let vh = v * vt;
    Ok(combine(cell, &[(c * c, polarized_square(&a)), (1.0, polarized_square(&vh))]))
}

/// `Δx/6 Σ_j γ²(2 aⁿ aⁿ⁺¹ + (aⁿ)²) − η (uⁿ)² uⁿ⁺¹` with `a = D u`.
pub fn kdv_energy_fom(u: &DMatrix<f64>, cell: f64, d: &DiffOperator, eta: f64, gamma: f64) -> Result<Vec<f64>> {
    need_cols(u, 2, "kdv energy")?;
    let a = d.apply_columns(u)?;
    Ok(combine(cell, &[(gamma * gamma, polarized_square(&a)), (-eta, polarized_cube(u))]))
}

pub fn kdv_energy_rom(
    ut: &DMatrix<f64>,
    cell: f64,
    d: &DMatrix<f64>,
    v: &DMatrix<f64>,
    eta: f64,
    gamma: f64,
) -> Result<Vec<f64>> {
    need_cols(ut, 2, "reduced kdv energy")?;
    check_rows(ut, v.ncols(), "reduced kdv energy basis")?;
    let a = v * (d * ut);
    let u = v * ut;
    Ok(combine(cell, &[(gamma * gamma, polarized_square(&a)), (-eta, polarized_cube(&u))]))
}

/// `ΔxΔy/6 Σ 2aⁿaⁿ⁺¹ + (aⁿ)² + 2bⁿbⁿ⁺¹ + (bⁿ)² − (uⁿ)² uⁿ⁺¹` with `a = Dx u`, `b = Dy u`.
pub fn zk_energy_fom(u: &DMatrix<f64>, cell: f64, dx: &DiffOperator, dy: &DiffOperator) -> Result<Vec<f64>> {
    need_cols(u, 2, "zk energy")?;
    let a = dx.apply_columns(u)?;
    let b = dy.apply_columns(u)?;
    Ok(combine(
        cell,
        &[(1.0, polarized_square(&a)), (1.0, polarized_square(&b)), (-1.0, polarized_cube(u))],
    ))
}

pub fn zk_energy_rom(
    ut: &DMatrix<f64>,
    cell: f64,
    dx: &DMatrix<f64>,
    dy: &DMatrix<f64>,
    v: &DMatrix<f64>,
) -> Result<Vec<f64>> {
    need_cols(ut, 2, "reduced zk energy")?;
    check_rows(ut, v.ncols(), "reduced zk energy basis")?;
    let a = v * (dx * ut);
    let b = v * (dy * ut);
    let u = v * ut;
    Ok(combine(
        cell,
        &[(1.0, polarized_square(&a)), (1.0, polarized_square(&b)), (-1.0, polarized_cube(&u))],
    ))
}

/// `|E − E_r| / |E|` elementwise.
pub fn relative_energy_error(e: &[f64], er: &[f64]) -> Result<Vec<f64>> {
    if e.len() != er.len() {
        return Err(Error::DimensionMismatch {
            context: "energy series",
            expected: e.len(),
            got: er.len(),
        });
    }
    e.iter()
        .zip(er)
        .enumerate()
        .map(|(index, (a, b))| {
            if *a == 0.0 {
                Err(Error::ZeroReference { index })
            } else {
                Ok((a - b).abs() / a.abs())
            }
        })
        .collect()
}

/// `max_n |Eⁿ − E⁰| / |E⁰|`, or the absolute drift when `E⁰ = 0`.
pub fn relative_drift(e: &[f64]) -> f64 {
    let Some(&e0) = e.first() else { return 0.0 };
    let abs = e.iter().map(|x| (x - e0).abs()).fold(0.0, f64::max);
    if e0 == 0.0 {
        abs
    } else {
        abs / e0.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub times: Vec<f64>,
    pub reference: Vec<f64>,
    pub reduced: Vec<f64>,
    pub relative_error: Vec<f64>,
    pub reference_drift: f64,
    pub reduced_drift: f64,
}

impl EnergyReport {
    pub fn new(dt: f64, reference: Vec<f64>, reduced: Vec<f64>) -> Result<Self> {
        let relative_error = relative_energy_error(&reference, &reduced)?;
        Ok(EnergyReport {
            times: (0..reference.len()).map(|n| n as f64 * dt).collect(),
            reference_drift: relative_drift(&reference),
            reduced_drift: relative_drift(&reduced),
            reference,
            reduced,
            relative_error,
        })
    }

    pub fn max_relative_error(&self) -> f64 {
        self.relative_error.iter().copied().fold(0.0, f64::max)
    }
}

/// Reduced coupled state stacked as `[ũ; ṽ; w̃]`.
pub fn stack_wave_state(s: &WaveRomState) -> DVector<f64> {
    let r = s.u.len();
    let mut z = DVector::zeros(3 * r);
    z.rows_mut(0, r).copy_from(&s.u);
    z.rows_mut(r, r).copy_from(&s.v);
    z.rows_mut(2 * r, r).copy_from(&s.w);
    z
}

/// `max_n |ξⁿᵀ K_r ηⁿ − ξ⁰ᵀ K_r η⁰|` with `K_r = K ⊗ I_r`.
pub fn symplectic_form_drift(xi: &[DVector<f64>], eta: &[DVector<f64>], k: &DMatrix<f64>) -> Result<f64> {
    if xi.len() != eta.len() {
        return Err(Error::DimensionMismatch {
            context: "trajectory lengths",
            expected: xi.len(),
            got: eta.len(),
        });
    }
    let Some(first) = xi.first() else { return Ok(0.0) };
    let d = k.nrows();
    if first.len() % d != 0 {
        return Err(Error::DimensionMismatch {
            context: "coupled state vs structure matrix",
            expected: d,
            got: first.len(),
        });
    }
    let r = first.len() / d;
    let kr = k.kronecker(&DMatrix::<f64>::identity(r, r));
    let mut omega0 = None;
    let mut worst: f64 = 0.0;
    for (a, b) in xi.iter().zip(eta) {
        if a.len() != kr.nrows() || b.len() != kr.nrows() {
            return Err(Error::DimensionMismatch {
                context: "coupled state length",
                expected: kr.nrows(),
                got: a.len().max(b.len()),
            });
        }
        let w = a.dot(&(&kr * b));
        let w0 = *omega0.get_or_insert(w);
        worst = worst.max((w - w0).abs());
    }
    Ok(worst)
}

/// Local energy balance `∂_t E_m + F_m` of the reduced coupled wave system, evaluated
/// with `∂_t ↦ δ_t` between consecutive levels and the flux taken at level `n`;
/// returns the max over `m, n`. The flux vanishes on equal arguments, so trajectories of
/// the reduced midpoint scheme satisfy the balance up to rounding.
///
/// Per reduced index `m`: `E_m = S(z_m) − ½⟨z_m, L (D̃ z)_m⟩` and
/// `F_m = ½ Σ_k D̃_mk (⟨z_m, L ż_k⟩ + ⟨z_k, L ż_m⟩)`.
pub fn local_energy_residual(ut: &DMatrix<f64>, dt: f64, d: &DMatrix<f64>, model: &MsModel) -> Result<f64> {
    if model.kind() != crate::model::ModelKind::Wave {
        return Err(Error::Unsupported(format!(
            "local energy residual is implemented for the wave model only, got {}",
            model.kind()
        )));
    }
    need_cols(ut, 2, "local energy residual")?;
    check_rows(ut, d.nrows(), "local energy residual")?;
    let c = model.constants()["c"];
    let c2 = c * c;
    let r = ut.nrows();
    let d2 = d * d;
    let vt = polarized_velocity(ut, dt, c2, None, |x| &d2 * x);
    let wt = d * ut * c2;
    let l = model.lx().clone();
    // z[n] is 3 × r: column m holds (ũ_m, ṽ_m, w̃_m)
    let z: Vec<DMatrix<f64>> = (0..ut.ncols())
        .map(|n| {
            let mut m = DMatrix::zeros(3, r);
            m.row_mut(0).copy_from(&ut.column(n).transpose());
            m.row_mut(1).copy_from(&vt.column(n).transpose());
            m.row_mut(2).copy_from(&wt.column(n).transpose());
            m
        })
        .collect();
    let energy = |z: &DMatrix<f64>| -> Result<Vec<f64>> {
        let dz = z * d.transpose();
        (0..r)
            .map(|m| {
                let zm = z.column(m).into_owned();
                let s = model.eval_s(zm.as_slice())?;
                Ok(s - 0.5 * zm.dot(&(&l * dz.column(m))))
            })
            .collect()
    };
    let mut worst: f64 = 0.0;
    let mut e_curr = energy(&z[0])?;
    for n in 0..z.len() - 1 {
        let zdot = (&z[n + 1] - &z[n]) / dt;
        let e_next = energy(&z[n + 1])?;
        let e_prev = std::mem::replace(&mut e_curr, e_next.clone());
        let lzdot = &l * &zdot;
        for m in 0..r {
            let mut flux = 0.0;
            for k in 0..r {
                if d[(m, k)] != 0.0 {
                    let a = z[n].column(m).dot(&lzdot.column(k));
                    let b = z[n].column(k).dot(&lzdot.column(m));
                    flux += d[(m, k)] * (a + b);
                }
            }
            let res = (e_next[m] - e_prev[m]) / dt + 0.5 * flux;
            worst = worst.max(res.abs());
        }
    }
    Ok(worst)
}

/// `|U − V Ũ|` elementwise.
pub fn state_error_field(u: &DMatrix<f64>, ut: &DMatrix<f64>, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(ut, v.ncols(), "reduced trajectory vs basis")?;
    let lifted = v * ut;
    same_shape(u, &lifted, "state error field")?;
    Ok((u - lifted).abs())
}
