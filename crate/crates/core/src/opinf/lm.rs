//! Matrix-free Levenberg–Marquardt on the squared residual.

use nalgebra::DVector;

use super::OpInfProblem;
use crate::error::{Error, Result};

/// Conjugate gradients for `(JᵀJ + μI) p = b` with `J` applied through the problem.
fn cg(problem: &OpInfProblem, theta: &[f64], mu: f64, b: &DVector<f64>, rtol: f64, max_iter: usize) -> DVector<f64> {
    let apply = |v: &DVector<f64>| {
        let jv = problem.jvp(theta, v.as_slice());
        DVector::from_vec(problem.vjp(theta, &jv)) + v * mu
    };
    let mut x = DVector::zeros(b.len());
    let mut r = b.clone();
    let mut p = r.clone();
    let mut rr = r.norm_squared();
    let stop = (rtol * b.norm()).powi(2);
    for _ in 0..max_iter {
        if rr <= stop {
            break;
        }
        let ap = apply(&p);
        let alpha = rr / p.dot(&ap);
        x.axpy(alpha, &p, 1.0);
        r.axpy(-alpha, &ap, 1.0);
        let rr_new = r.norm_squared();
        p = &r + &p * (rr_new / rr);
        rr = rr_new;
    }
    x
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct LmSettings {
    pub iterations: usize,
    pub cg_iterations: usize,
    pub loss_tol: Option<f64>,
}

/// Refines `theta` in place and returns the loss after every iteration.
///
/// The inner solve is stopped at relative residual `min(10⁻², ‖g‖/‖g₀‖)`, floored at 10⁻¹².
pub(crate) fn refine(problem: &OpInfProblem, theta: &mut Vec<f64>, s: LmSettings) -> Result<Vec<f64>> {
    let p = problem.compressed();
    let mut res = p.residual(theta);
    let mut ss = res.norm_squared();
    let mut mu = 1.0;
    let mut nu = 2.0;
    let mut g0 = None;
    let mut losses = Vec::with_capacity(s.iterations);
    for it in 0..s.iterations {
        let g = DVector::from_vec(p.vjp(theta, &res));
        let gn = g.norm();
        if gn == 0.0 {
            break;
        }
        let g0 = *g0.get_or_insert(gn);
        let rtol = (gn / g0).min(1e-2).max(1e-12);
        let step = cg(&p, theta, mu, &(-&g), rtol, s.cg_iterations);
        let trial: Vec<f64> = theta.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
        let res_new = p.residual(&trial);
        let ss_new = res_new.norm_squared();
        if !ss_new.is_finite() {
            return Err(Error::NonFiniteLoss { epoch: it, loss: ss_new });
        }
        // predicted decrease of the local model: −2gᵀp − ‖Jp‖²
        let jp = p.jvp(theta, step.as_slice());
        let predicted = -2.0 * g.dot(&step) - jp.norm_squared();
        let rho = (ss - ss_new) / predicted;
        if ss_new < ss && predicted > 0.0 {
            *theta = trial;
            res = res_new;
            ss = ss_new;
            mu *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
            nu = 2.0;
        } else {
            mu *= nu;
            nu *= 2.0;
        }
        let loss = p.loss(theta);
        losses.push(loss);
        if s.loss_tol.is_some_and(|tol| loss <= tol) || mu > 1e20 {
            break;
        }
    }
    Ok(losses)
}
