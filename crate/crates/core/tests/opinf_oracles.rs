use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use msopinf::fom::{simulate_fom, InitialState};
use msopinf::grid::{Grid, PeriodicGrid1D};
use msopinf::model::{ModelKind, MsModel};
use msopinf::operators::central_diff_1d;
use msopinf::opinf::{nonlinear_data, unskew, OpInfProblem};
use msopinf::pod::{compute_pod, intrusive_operator};
use msopinf::rom::NonlinearRomStepper;
use msopinf::snapshots::wave_extended;

fn random_skew(rng: &mut ChaCha8Rng, r: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(r, r, |_, _| rng.random_range(-scale..scale));
    &a - a.transpose()
}

fn orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
    let a = DMatrix::from_fn(n, r, |_, _| rng.random_range(-1.0..1.0));
    a.qr().q()
}

fn rollout(stepper: &NonlinearRomStepper, u0: DVector<f64>, steps: usize) -> DMatrix<f64> {
    let mut ut = DMatrix::zeros(u0.len(), steps + 1);
    ut.set_column(0, &u0);
    for n in 1..=steps {
        let next = stepper.step(&ut.column(n - 1).into_owned()).unwrap();
        ut.set_column(n, &next);
    }
    ut
}

#[test]
fn kdv_loss_vanishes_on_data_from_its_own_scheme() {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let (n, r, dt) = (16, 4, 0.05);
    let v = orthonormal(&mut rng, n, r);
    let d = random_skew(&mut rng, r, 0.5);
    let stepper = NonlinearRomStepper::kdv(&d, &v, dt, 1.0, 0.3).unwrap();
    let ut = rollout(&stepper, DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0)), 200);
    let q = nonlinear_data(&v, &(&v * &ut)).unwrap();
    let p = OpInfProblem::kdv(&ut, &q, dt, 1.0, 0.3).unwrap();
    assert!(p.residual(&unskew(&d)).amax() <= 1e-10);
    // a different operator leaves a visible defect
    let other = random_skew(&mut rng, r, 0.5);
    assert!(p.residual(&unskew(&other)).amax() > 1e-3);
}

#[test]
fn zk_loss_vanishes_on_data_from_its_own_scheme() {
    let mut rng = ChaCha8Rng::seed_from_u64(32);
    let (n, r, dt) = (25, 5, 0.05);
    let v = orthonormal(&mut rng, n, r);
    let dx = random_skew(&mut rng, r, 0.5);
    let dy = random_skew(&mut rng, r, 0.5);
    let stepper = NonlinearRomStepper::zk(&dx, &dy, &v, dt).unwrap();
    let ut = rollout(&stepper, DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0)), 200);
    let q = nonlinear_data(&v, &(&v * &ut)).unwrap();
    let p = OpInfProblem::zk(&ut, &q, dt).unwrap();
    let mut theta = unskew(&dx);
    theta.extend(unskew(&dy));
    assert!(p.residual(&theta).amax() <= 1e-10);
}

#[test]
fn intrusive_operator_defect_tracks_projection_error() {
    let grid = PeriodicGrid1D::new(-5.0, 5.0, 128).unwrap();
    let model = MsModel::new(ModelKind::Wave, &[("c".to_string(), 1.0)].into()).unwrap();
    let u0 = DVector::from_iterator(128, grid.nodes().into_iter().map(|x| 1.0 / x.cosh()));
    let ic = InitialState {
        u: u0,
        ut: Some(DVector::zeros(128)),
    };
    let dt = 0.1;
    let s = simulate_fom(&model, &Grid::OneD(grid), &ic, dt, 5.0).unwrap();
    let d = central_diff_1d(&grid).unwrap();
    let ext = wave_extended(&s, dt, &d, 1.0).unwrap();
    for r in [8, 16, 32, 48] {
        let basis = compute_pod(&ext.z, r, 3).unwrap();
        let ut = basis.v.tr_mul(&s.u);
        let p = OpInfProblem::wave(&ut, dt, 1.0).unwrap();
        let res = p.residual(&unskew(&intrusive_operator(&basis.v, &d).unwrap()));
        let m = ut.ncols() - 2;
        let accel = DMatrix::from_fn(r, m, |i, k| (ut[(i, k + 2)] - 2.0 * ut[(i, k + 1)] + ut[(i, k)]) / (dt * dt));
        let total: f64 = basis.sigma.iter().map(|x| x * x).sum();
        let eps = (basis.truncation_residual() / total).sqrt();
        let ratio = res.norm() / accel.norm();
        assert!(ratio <= 10.0 * eps, "r={r}: defect ratio {ratio:.3e} vs projection error {eps:.3e}");
    }
}
