//! Defects of the time-discrete reduced schemes on projected data, and the mean
//! squared defect as a function of the skew parameters with its exact gradient.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::ModelKind;

use super::skew::{param_len, pull_back, skew};

fn need_cols(ut: &DMatrix<f64>, needed: usize, context: &'static str) -> Result<()> {
    if ut.ncols() < needed {
        return Err(Error::TooFewColumns {
            context,
            needed,
            got: ut.ncols(),
        });
    }
    Ok(())
}

fn check_square(d: &DMatrix<f64>, r: usize, context: &'static str) -> Result<()> {
    if d.nrows() != r || d.ncols() != r {
        return Err(Error::DimensionMismatch {
            context,
            expected: r,
            got: d.nrows(),
        });
    }
    Ok(())
}

fn check_q(q: &DMatrix<f64>, ut: &DMatrix<f64>) -> Result<()> {
    if q.nrows() != ut.nrows() || q.ncols() + 1 != ut.ncols() {
        return Err(Error::DimensionMismatch {
            context: "nonlinear data Q",
            expected: ut.ncols() - 1,
            got: q.ncols(),
        });
    }
    Ok(())
}

/// `δ_t Ũ` and `μ_t Ũ` over consecutive pairs.
fn forward_pairs(ut: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = ut.ncols() - 1;
    let a = ut.columns(1, m);
    let b = ut.columns(0, m);
    ((&a - &b) / dt, (&a + &b) * 0.5)
}

/// `δ_t² Ũ` and `μ_t² Ũ` over consecutive triples.
fn second_differences(ut: &DMatrix<f64>, dt: f64) -> (DMatrix<f64>, DMatrix<f64>) {
    let m = ut.ncols() - 2;
    let (p, c, n) = (ut.columns(0, m), ut.columns(1, m), ut.columns(2, m));
    let d2 = (&n - &c * 2.0 + &p) / (dt * dt);
    let mu2 = (&n + &c * 2.0 + &p) * 0.25;
    (d2, mu2)
}

/// Column `n`: `(ũⁿ⁺² − 2ũⁿ⁺¹ + ũⁿ)/Δt² − c² D̃² (ũⁿ⁺² + 2ũⁿ⁺¹ + ũⁿ)/4`.
pub fn residual_wave(d: &DMatrix<f64>, ut: &DMatrix<f64>, dt: f64, c: f64) -> Result<DMatrix<f64>> {
    need_cols(ut, 3, "wave residual")?;
    check_square(d, ut.nrows(), "wave operator")?;
    let (a, b) = second_differences(ut, dt);
    Ok(a - (d * d) * b * (c * c))
}

/// Column `n`: `δ_t ũⁿ + (η/2) D̃ qⁿ + γ² D̃³ μ_t ũⁿ` with `qⁿ = Vᵀ(Uⁿ ∘ Uⁿ⁺¹)`.
pub fn residual_kdv(
    d: &DMatrix<f64>,
    ut: &DMatrix<f64>,
    q: &DMatrix<f64>,
    dt: f64,
    eta: f64,
    gamma: f64,
) -> Result<DMatrix<f64>> {
    need_cols(ut, 2, "kdv residual")?;
    check_square(d, ut.nrows(), "kdv operator")?;
    check_q(q, ut)?;
    let (a, c) = forward_pairs(ut, dt);
    let d3 = d * d * d;
    Ok(a + d * q * (eta / 2.0) + d3 * c * (gamma * gamma))
}

/// Column `n`: `δ_t ũⁿ + ½ D̃x qⁿ + (D̃x³ + D̃x D̃y²) μ_t ũⁿ`.
pub fn residual_zk(
    dx: &DMatrix<f64>,
    dy: &DMatrix<f64>,
    ut: &DMatrix<f64>,
    q: &DMatrix<f64>,
    dt: f64,
) -> Result<DMatrix<f64>> {
    need_cols(ut, 2, "zk residual")?;
    check_square(dx, ut.nrows(), "zk x-operator")?;
    check_square(dy, ut.nrows(), "zk y-operator")?;
    check_q(q, ut)?;
    let (a, c) = forward_pairs(ut, dt);
    let lin = dx * dx * dx + dx * (dy * dy);
    Ok(a + dx * q * 0.5 + lin * c)
}

#[derive(Debug, Clone)]
enum Kind {
    /// `R = A − c² D² B`
    Wave { a: DMatrix<f64>, b: DMatrix<f64>, c2: f64 },
    /// `R = A + (η/2) D Q + γ² D³ C`
    KdV {
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        c: DMatrix<f64>,
        eta: f64,
        gamma2: f64,
    },
    /// `R = A + ½ Dx Q + λ (Dx³ + Dx Dy²) C`, `λ = 1` for the model itself
    ZK {
        a: DMatrix<f64>,
        q: DMatrix<f64>,
        c: DMatrix<f64>,
        lambda: f64,
    },
}

/// A discrete operator-inference problem with its data differences precomputed.
///
/// The loss is the mean of the squared residual entries. Parameters are the strict
/// upper triangle of `D̃` (ZK: of `D̃x` followed by that of `D̃y`).
#[derive(Debug, Clone)]
pub struct OpInfProblem {
    r: usize,
    /// Residual entries of the uncompressed problem; the loss divides by this.
    entries: f64,
    kind: Kind,
}

impl OpInfProblem {
    pub fn wave(ut: &DMatrix<f64>, dt: f64, c: f64) -> Result<Self> {
        need_cols(ut, 3, "wave training data")?;
        let (a, b) = second_differences(ut, dt);
        Ok(OpInfProblem {
            r: ut.nrows(),
            entries: a.len() as f64,
            kind: Kind::Wave { a, b, c2: c * c },
        })
    }

    pub fn kdv(ut: &DMatrix<f64>, q: &DMatrix<f64>, dt: f64, eta: f64, gamma: f64) -> Result<Self> {
        need_cols(ut, 2, "kdv training data")?;
        check_q(q, ut)?;
        let (a, c) = forward_pairs(ut, dt);
        Ok(OpInfProblem {
            r: ut.nrows(),
            entries: a.len() as f64,
            kind: Kind::KdV {
                a,
                q: q.clone(),
                c,
                eta,
                gamma2: gamma * gamma,
            },
        })
    }

    pub fn zk(ut: &DMatrix<f64>, q: &DMatrix<f64>, dt: f64) -> Result<Self> {
        need_cols(ut, 2, "zk training data")?;
        check_q(q, ut)?;
        let (a, c) = forward_pairs(ut, dt);
        Ok(OpInfProblem {
            r: ut.nrows(),
            entries: a.len() as f64,
            kind: Kind::ZK {
                a,
                q: q.clone(),
                c,
                lambda: 1.0,
            },
        })
    }

    /// The same data with the third-order (dispersive) term scaled by `lambda`.
    /// At `lambda = 0` the KdV and ZK losses are convex quadratics. The wave loss has no
    /// such term and is returned unchanged.
    pub fn with_dispersion_weight(&self, lambda: f64) -> Self {
        let mut p = self.clone();
        match &mut p.kind {
            Kind::Wave { .. } => {}
            Kind::KdV { gamma2, .. } => *gamma2 *= lambda,
            Kind::ZK { lambda: l, .. } => *l *= lambda,
        }
        p
    }

    pub fn r(&self) -> usize {
        self.r
    }

    /// An equivalent problem on fewer data columns.
    ///
    /// Every residual row is a combination of the rows of the stacked data matrix `W`,
    /// so right-multiplying all data by an orthonormal basis `Y` of the row space of `W`
    /// leaves `‖R‖_F` unchanged. Loss values keep the original normalization.
    pub fn compressed(&self) -> Self {
        let blocks: Vec<&DMatrix<f64>> = match &self.kind {
            Kind::Wave { a, b, .. } => vec![a, b],
            Kind::KdV { a, q, c, .. } | Kind::ZK { a, q, c, .. } => vec![a, q, c],
        };
        let m = blocks[0].ncols();
        let rows = self.r * blocks.len();
        if rows >= m {
            return self.clone();
        }
        let mut w = DMatrix::zeros(rows, m);
        for (k, b) in blocks.iter().enumerate() {
            w.rows_mut(k * self.r, self.r).copy_from(b);
        }
        let y = w.svd(false, true).v_t.expect("requested").transpose();
        let mut out = self.clone();
        match &mut out.kind {
            Kind::Wave { a, b, .. } => {
                *a = &*a * &y;
                *b = &*b * &y;
            }
            Kind::KdV { a, q, c, .. } | Kind::ZK { a, q, c, .. } => {
                *a = &*a * &y;
                *q = &*q * &y;
                *c = &*c * &y;
            }
        }
        out
    }

    pub fn model(&self) -> ModelKind {
        match self.kind {
            Kind::Wave { .. } => ModelKind::Wave,
            Kind::KdV { .. } => ModelKind::KdV,
            Kind::ZK { .. } => ModelKind::ZK,
        }
    }

    pub fn n_params(&self) -> usize {
        match self.kind {
            Kind::ZK { .. } => 2 * param_len(self.r),
            _ => param_len(self.r),
        }
    }

    /// Splits a parameter vector into `(D̃x, D̃y)`.
    pub fn operators(&self, theta: &[f64]) -> (DMatrix<f64>, Option<DMatrix<f64>>) {
        let p = param_len(self.r);
        match self.kind {
            Kind::ZK { .. } => (skew(&theta[..p], self.r), Some(skew(&theta[p..], self.r))),
            _ => (skew(theta, self.r), None),
        }
    }

    pub fn residual(&self, theta: &[f64]) -> DMatrix<f64> {
        let (dx, dy) = self.operators(theta);
        match &self.kind {
            Kind::Wave { a, b, c2 } => a - (&dx * &dx) * b * *c2,
            Kind::KdV { a, q, c, eta, gamma2 } => a + &dx * q * (eta / 2.0) + (&dx * &dx * &dx) * c * *gamma2,
            Kind::ZK { a, q, c, lambda } => {
                let dy = dy.expect("zk has two operators");
                a + &dx * q * 0.5 + (&dx * &dx * &dx + &dx * (&dy * &dy)) * c * *lambda
            }
        }
    }

    pub fn loss(&self, theta: &[f64]) -> f64 {
        self.residual(theta).norm_squared() / self.entries
    }

    /// Loss and its exact gradient with respect to `theta`.
    pub fn loss_and_grad(&self, theta: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(theta.len(), self.n_params(), "parameter length");
        let res = self.residual(theta);
        let loss = res.norm_squared() / self.entries;
        let mut grad = self.vjp(theta, &res);
        let s = 2.0 / self.entries;
        grad.iter_mut().for_each(|g| *g *= s);
        (loss, grad)
    }

    /// Directional derivative of the residual along `v`.
    pub fn jvp(&self, theta: &[f64], v: &[f64]) -> DMatrix<f64> {
        let (dx, dy) = self.operators(theta);
        let (ex, ey) = self.operators(v);
        match &self.kind {
            Kind::Wave { b, c2, .. } => (&ex * &dx + &dx * &ex) * b * (-c2),
            Kind::KdV { q, c, eta, gamma2, .. } => &ex * q * (eta / 2.0) + cube_tangent(&dx, &ex) * c * *gamma2,
            Kind::ZK { q, c, lambda, .. } => {
                let (dy, ey) = (dy.expect("zk has two operators"), ey.expect("zk has two operators"));
                let lin = cube_tangent(&dx, &ex) + &ex * (&dy * &dy) + &dx * (&ey * &dy + &dy * &ey);
                &ex * q * 0.5 + lin * c * *lambda
            }
        }
    }

    /// Adjoint of [`OpInfProblem::jvp`] applied to `w`, as a parameter vector.
    pub fn vjp(&self, theta: &[f64], w: &DMatrix<f64>) -> Vec<f64> {
        let (dx, dy) = self.operators(theta);
        let mut grad = Vec::with_capacity(self.n_params());
        match &self.kind {
            Kind::Wave { b, c2, .. } => {
                // d(D²) = dD D + D dD
                let p = w * b.transpose();
                let g = (&p * dx.transpose() + dx.transpose() * &p) * (-c2);
                pull_back(&g, &mut grad);
            }
            Kind::KdV { q, c, eta, gamma2, .. } => {
                let p = w * c.transpose();
                let g = w * q.transpose() * (eta / 2.0) + cube_adjoint(&dx, &p) * *gamma2;
                pull_back(&g, &mut grad);
            }
            Kind::ZK { q, c, lambda, .. } => {
                let dy = dy.expect("zk has two operators");
                let p = w * c.transpose() * *lambda;
                let dxt = dx.transpose();
                let dyt = dy.transpose();
                let dy2t = (&dy * &dy).transpose();
                let gx = w * q.transpose() * 0.5 + cube_adjoint(&dx, &p) + &p * &dy2t;
                let gy = &dxt * &p * &dyt + &dyt * &dxt * &p;
                pull_back(&gx, &mut grad);
                pull_back(&gy, &mut grad);
            }
        }
        grad
    }
}

/// `dD D² + D dD D + D² dD`
fn cube_tangent(d: &DMatrix<f64>, e: &DMatrix<f64>) -> DMatrix<f64> {
    e * d * d + d * e * d + d * d * e
}

/// Adjoint of `dD ↦ dD D² + D dD D + D² dD` applied to `p`.
fn cube_adjoint(d: &DMatrix<f64>, p: &DMatrix<f64>) -> DMatrix<f64> {
    let dt = d.transpose();
    let d2t = &dt * &dt;
    p * &d2t + &dt * p * &dt + &d2t * p
}
