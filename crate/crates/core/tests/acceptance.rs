//! Acceptance suite: one line per criterion is written straight to stdout so the
//! verdicts show up even when libtest captures output.

use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use msopinf::diagnostics::{
    kdv_energy_fom, kdv_energy_rom, relative_drift, stack_wave_state, symplectic_form_drift, wave_energy_fom,
    wave_energy_rom, zk_energy_fom, zk_energy_rom,
};
use msopinf::experiment::{files, ExperimentConfig, Manifest, Pipeline};
use msopinf::fom::{grid_operators, simulate_fom, KdvStepper, WaveFomState, WaveStepper, ZkSolver, ZkStepper};
use msopinf::grid::{Grid, PeriodicGrid1D, PeriodicGrid2D};
use msopinf::model::{Constants, ModelKind, MsModel};
use msopinf::operators::{central_diff_1d, central_diff_2d};
use msopinf::opinf::{skew, train_params, unskew, OpInfProblem, TrainConfig};
use msopinf::pod::compute_pod;
use msopinf::rom::{simulate_rom, NonlinearRomStepper, ReducedInitial, WaveRomStepper};

fn verdict(id: &str, what: &str, ok: bool, detail: String) -> bool {
    let line = format!(
        "[acceptance] criterion {id:<4} {} {what}: {detail}\n",
        if ok { "PASS" } else { "FAIL" }
    );
    let mut out = std::io::stdout().lock();
    out.write_all(line.as_bytes()).unwrap();
    out.flush().unwrap();
    ok
}

fn consts(pairs: &[(&str, f64)]) -> Constants {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
}

fn random_skew(rng: &mut ChaCha8Rng, r: usize, scale: f64) -> DMatrix<f64> {
    let a = random_matrix(rng, r, r) * scale;
    &a - a.transpose()
}

/// Orthonormal `n × r` columns from Gram–Schmidt on a random matrix.
fn random_orthonormal(rng: &mut ChaCha8Rng, n: usize, r: usize) -> DMatrix<f64> {
    let a = random_matrix(rng, n, r);
    let mut q = DMatrix::<f64>::zeros(n, r);
    for j in 0..r {
        let mut v = a.column(j).into_owned();
        for _ in 0..2 {
            for k in 0..j {
                let p = q.column(k).dot(&v);
                v -= q.column(k) * p;
            }
        }
        q.set_column(j, &(&v / v.norm()));
    }
    q
}

#[test]
fn criterion_1_fom_energy_conservation() {
    let wave = ExperimentConfig::preset("wave").unwrap();
    let model = wave.ms_model();
    let ic = wave.initial_condition.sample(&wave.grid).unwrap();
    let s = simulate_fom(&model, &wave.grid, &ic, 0.1, 20.0).unwrap();
    let (d, _) = grid_operators(&wave.grid).unwrap();
    let e = wave_energy_fom(&s.u, s.aux("v").unwrap(), wave.grid.cell_volume(), &d, 1.0).unwrap();
    let wave_drift = relative_drift(&e);

    let kdv = ExperimentConfig::preset("kdv").unwrap();
    let ic = kdv.initial_condition.sample(&kdv.grid).unwrap();
    let s = simulate_fom(&kdv.ms_model(), &kdv.grid, &ic, 0.1, 50.0).unwrap();
    let (d, _) = grid_operators(&kdv.grid).unwrap();
    let e = kdv_energy_fom(&s.u, kdv.grid.cell_volume(), &d, 1.0, 0.022).unwrap();
    let kdv_drift = relative_drift(&e);

    let zk = ExperimentConfig::preset("zk").unwrap();
    let ic = zk.initial_condition.sample(&zk.grid).unwrap();
    let s = simulate_fom(&zk.ms_model(), &zk.grid, &ic, 0.025, 10.0).unwrap();
    assert_eq!(s.n_t(), 401);
    let (dx, dy) = grid_operators(&zk.grid).unwrap();
    let e = zk_energy_fom(&s.u, zk.grid.cell_volume(), &dx, &dy.unwrap()).unwrap();
    let zk_drift = relative_drift(&e);

    let ok = verdict(
        "1",
        "FOM polarized energy drift (wave N=512 200 steps, KdV N=500 500 steps, ZK N=50 400 steps)",
        wave_drift <= 1e-9 && kdv_drift <= 1e-8 && zk_drift <= 1e-8,
        format!("wave {wave_drift:.2e} <= 1e-9, kdv {kdv_drift:.2e} <= 1e-8, zk {zk_drift:.2e} <= 1e-8"),
    );
    assert!(ok);
}

#[test]
fn criterion_2_rom_conservation_for_any_skew_operator() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, r, steps, dt) = (64, 8, 100, 0.05);
    let wave_c = consts(&[("c", 1.0)]);
    let kdv_c = consts(&[("eta", 1.0), ("gamma", 0.5)]);
    let mut worst = [0.0f64; 3];
    for _ in 0..20 {
        let v = random_orthonormal(&mut rng, n, r);
        let u0 = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let init = ReducedInitial {
            u: u0.clone(),
            v: Some(DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0))),
        };
        let d = random_skew(&mut rng, r, 0.5);
        let rom = msopinf::opinf::LearnedRom::from_operators(ModelKind::Wave, d.clone(), None, wave_c.clone(), String::new());
        let t = simulate_rom(&rom, &v, &init, dt, steps as f64 * dt).unwrap();
        let e = wave_energy_rom(&t.ut, dt, 0.1, &d, &v, 1.0).unwrap();
        worst[0] = worst[0].max(relative_drift(&e));

        let init = ReducedInitial { u: u0.clone(), v: None };
        let d = random_skew(&mut rng, r, 0.5);
        let rom = msopinf::opinf::LearnedRom::from_operators(ModelKind::KdV, d.clone(), None, kdv_c.clone(), String::new());
        let t = simulate_rom(&rom, &v, &init, dt, steps as f64 * dt).unwrap();
        let e = kdv_energy_rom(&t.ut, 0.1, &d, &v, 1.0, 0.5).unwrap();
        worst[1] = worst[1].max(relative_drift(&e));

        let dx = random_skew(&mut rng, r, 0.5);
        let dy = random_skew(&mut rng, r, 0.5);
        let rom = msopinf::opinf::LearnedRom::from_operators(ModelKind::ZK, dx.clone(), Some(dy.clone()), Constants::new(), String::new());
        let t = simulate_rom(&rom, &v, &init, dt, steps as f64 * dt).unwrap();
        let e = zk_energy_rom(&t.ut, 0.1, &dx, &dy, &v).unwrap();
        worst[2] = worst[2].max(relative_drift(&e));
    }
    let ok = verdict(
        "2",
        "reduced energy drift for 20 random skew operators per model, 100 steps",
        worst.iter().all(|w| *w <= 1e-8),
        format!("wave {:.2e}, kdv {:.2e}, zk {:.2e} (each <= 1e-8)", worst[0], worst[1], worst[2]),
    );
    assert!(ok);
}

#[test]
fn criterion_3_reduced_wave_symplecticity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let r = 12;
    let d = random_skew(&mut rng, r, 0.5);
    let stepper = WaveRomStepper::new(&d, 0.1, 1.0).unwrap();
    let start = |rng: &mut ChaCha8Rng| {
        let u = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        let v = DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0));
        stepper.initial_state(u, v)
    };
    let (mut a, mut b) = (start(&mut rng), start(&mut rng));
    let (mut xi, mut eta) = (vec![stack_wave_state(&a)], vec![stack_wave_state(&b)]);
    for _ in 0..200 {
        a = stepper.step_coupled(&a).unwrap();
        b = stepper.step_coupled(&b).unwrap();
        xi.push(stack_wave_state(&a));
        eta.push(stack_wave_state(&b));
    }
    let model = MsModel::new(ModelKind::Wave, &consts(&[("c", 1.0)])).unwrap();
    let drift = symplectic_form_drift(&xi, &eta, model.k()).unwrap();
    // the form must not vanish identically for the check to mean anything
    let kr = model.k().kronecker(&DMatrix::<f64>::identity(r, r));
    let level = xi[0].dot(&(&kr * &eta[0])).abs();
    let ok = verdict(
        "3",
        "reduced wave two-form xi^T K_r eta over 200 steps",
        drift <= 1e-11 && level > 1e-3,
        format!("drift {drift:.2e} <= 1e-11 (form value {level:.3})"),
    );
    assert!(ok);
}

#[test]
fn criterion_4_basis_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    // wave extended snapshots on N = 32: [u | v | w]
    let grid = PeriodicGrid1D::new(-5.0, 5.0, 32).unwrap();
    let model = MsModel::new(ModelKind::Wave, &consts(&[("c", 1.0)])).unwrap();
    let u0 = DVector::from_iterator(32, grid.nodes().into_iter().map(|x| 1.0 / x.cosh()));
    let ic = msopinf::fom::InitialState {
        u: u0,
        ut: Some(DVector::zeros(32)),
    };
    let s = simulate_fom(&model, &Grid::OneD(grid), &ic, 0.1, 5.0).unwrap();
    let d = central_diff_1d(&grid).unwrap();
    let ext = msopinf::snapshots::wave_extended(&s, 0.1, &d, 1.0).unwrap();
    let r = 10;
    let basis = compute_pod(&ext.z, r, 3).unwrap();
    let v = &basis.v;

    let ortho = (v.tr_mul(v) - DMatrix::<f64>::identity(r, r)).amax();

    let big_v = DMatrix::<f64>::identity(3, 3).kronecker(v);
    let id_n = DMatrix::<f64>::identity(32, 32);
    let id_r = DMatrix::<f64>::identity(r, r);
    let mut block = 0.0f64;
    for m in [model.k(), model.lx()] {
        let lhs = big_v.transpose() * m.kronecker(&id_n) * &big_v;
        block = block.max((lhs - m.kronecker(&id_r)).amax());
    }
    // a random structure matrix too, so that every block pairing is exercised
    let k_rand = random_skew(&mut rng, 3, 1.0);
    let lhs = big_v.transpose() * k_rand.kronecker(&id_n) * &big_v;
    block = block.max((lhs - k_rand.kronecker(&id_r)).amax());

    let resid = (&ext.z - v * v.tr_mul(&ext.z)).norm_squared();
    let svals = ext.z.clone().singular_values();
    let mut sorted: Vec<f64> = svals.iter().copied().collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let tail: f64 = sorted[r..].iter().map(|s| s * s).sum();
    let ey = (resid - tail).abs() / tail;

    let ok = verdict(
        "4",
        "POD basis identities (N=32, d=3)",
        ortho <= 1e-12 && block <= 1e-12 && ey <= 1e-10,
        format!("|V^T V - I| {ortho:.2e} <= 1e-12, block relations {block:.2e} <= 1e-12, Eckart-Young rel {ey:.2e} <= 1e-10"),
    );
    assert!(ok);
}

/// Central differences with step `h·max(1, |θ_i|)`, refined by one Richardson step.
fn fd_gradient(p: &OpInfProblem, theta: &[f64]) -> Vec<f64> {
    let mut g = Vec::with_capacity(theta.len());
    let mut t = theta.to_vec();
    for i in 0..theta.len() {
        let h = 1e-3 * theta[i].abs().max(1.0);
        let mut central = |h: f64| {
            t[i] = theta[i] + h;
            let fp = p.loss(&t);
            t[i] = theta[i] - h;
            let fm = p.loss(&t);
            t[i] = theta[i];
            (fp - fm) / (2.0 * h)
        };
        let (a, b) = (central(h), central(h / 2.0));
        g.push((4.0 * b - a) / 3.0);
    }
    g
}

#[test]
fn criterion_5_gradient_correctness() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (r, m) = (5, 12);
    let mut worst = [0.0f64; 3];
    for _ in 0..50 {
        let ut = random_matrix(&mut rng, r, m);
        let q = random_matrix(&mut rng, r, m - 1);
        let problems = [
            OpInfProblem::wave(&ut, 1.0, 1.0).unwrap(),
            OpInfProblem::kdv(&ut, &q, 1.0, 1.0, 0.5).unwrap(),
            OpInfProblem::zk(&ut, &q, 1.0).unwrap(),
        ];
        for (k, p) in problems.iter().enumerate() {
            let theta: Vec<f64> = (0..p.n_params()).map(|_| rng.random_range(-0.5..0.5)).collect();
            let (_, g) = p.loss_and_grad(&theta);
            let fd = fd_gradient(p, &theta);
            for (a, b) in g.iter().zip(&fd) {
                worst[k] = worst[k].max((a - b).abs() / b.abs());
            }
        }
    }
    let ok = verdict(
        "5",
        "analytic vs finite-difference gradients, 50 instances x 3 losses, r=5",
        worst.iter().all(|w| *w <= 1e-6),
        format!(
            "max per-component rel. error wave {:.2e}, kdv {:.2e}, zk {:.2e} (each <= 1e-6)",
            worst[0], worst[1], worst[2]
        ),
    );
    assert!(ok);
}

#[test]
fn criterion_6_oracle_recovery() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let (r, dt, steps) = (4, 0.1, 200);
    let truth = random_skew(&mut rng, r, 0.5);
    // synthetic data straight from the reduced scheme
    let stepper = WaveRomStepper::new(&truth, dt, 1.0).unwrap();
    let mut ut = DMatrix::zeros(r, steps + 1);
    let mut s = stepper.initial_state(
        DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0)),
        DVector::from_fn(r, |_, _| rng.random_range(-1.0..1.0)),
    );
    ut.set_column(0, &s.u);
    for n in 1..=steps {
        s = stepper.step_coupled(&s).unwrap();
        ut.set_column(n, &s.u);
    }
    let p = OpInfProblem::wave(&ut, dt, 1.0).unwrap();
    let res_truth = p.residual(&unskew(&truth)).amax();

    let cfg = TrainConfig {
        max_epochs: 2000,
        refine_iterations: 100,
        loss_tol: Some(1e-28),
        seed: 1,
        ..TrainConfig::default()
    };
    let out = train_params(&p, &cfg).unwrap();
    let learned = skew(&out.theta, r);
    let replay_stepper = WaveRomStepper::new(&learned, dt, 1.0).unwrap();
    let mut replay = DMatrix::zeros(r, steps + 1);
    replay.set_column(0, &ut.column(0));
    replay.set_column(1, &ut.column(1));
    for n in 2..=steps {
        let next = replay_stepper
            .step(&replay.column(n - 2).into_owned(), &replay.column(n - 1).into_owned())
            .unwrap();
        replay.set_column(n, &next);
    }
    let replay_err = (&replay - &ut).amax();
    let ok = verdict(
        "6",
        "synthetic wave data from a known skew operator (r=4, 200 steps)",
        replay_err <= 1e-6 && res_truth <= 1e-10,
        format!("replay max error {replay_err:.2e} <= 1e-6, residual at truth {res_truth:.2e} <= 1e-10"),
    );
    assert!(ok);
}

fn run_preset(cfg: ExperimentConfig, dir: &Path) -> Manifest {
    let mut p = Pipeline::with_output_dir(cfg, dir.to_path_buf());
    p.run().unwrap()
}

fn check_experiment(label: &str, cfg: ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    let start = std::time::Instant::now();
    let m = run_preset(cfg, dir.path());
    let secs = start.elapsed().as_secs_f64();
    let s = m.summary.expect("complete run has a summary");
    let a = verdict(
        "7a",
        &format!("[{label}] learned training loss <= 1.5 x intrusive loss"),
        s.train_loss_learned <= 1.5 * s.train_loss_intrusive,
        format!("{:.3e} vs 1.5 x {:.3e}", s.train_loss_learned, s.train_loss_intrusive),
    );
    let b = verdict(
        "7b",
        &format!("[{label}] max relative energy error of learned ROM <= 10 x intrusive"),
        s.max_rel_energy_error_learned <= 10.0 * s.max_rel_energy_error_intrusive,
        format!("{:.3e} vs 10 x {:.3e}", s.max_rel_energy_error_learned, s.max_rel_energy_error_intrusive),
    );
    let c = verdict(
        "7c",
        &format!("[{label}] test-window coefficient error <= 10 x training-window max"),
        s.coeff_error_test_max_learned <= 10.0 * s.coeff_error_train_max_learned,
        format!(
            "{:.3e} vs 10 x {:.3e} (run took {secs:.1}s)",
            s.coeff_error_test_max_learned, s.coeff_error_train_max_learned
        ),
    );
    assert!(a && b && c, "{label}: criterion 7 failed");
}

#[test]
fn criterion_7_wave_experiment() {
    check_experiment("wave", ExperimentConfig::preset("wave").unwrap());
}

#[test]
fn criterion_7_kdv_experiment() {
    check_experiment("kdv", ExperimentConfig::preset("kdv").unwrap());
}

#[test]
fn criterion_7_zk_experiment() {
    check_experiment("zk", ExperimentConfig::preset("zk").unwrap());
}

#[test]
fn criterion_8_full_rank_embedding() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let g1 = PeriodicGrid1D::new(0.0, 2.0, 40).unwrap();
    let d = central_diff_1d(&g1).unwrap();
    let dm = d.to_dense();
    let id = DMatrix::<f64>::identity(40, 40);
    let g2 = PeriodicGrid2D::new(0.0, 8.0, 7).unwrap();
    let (dx, dy) = central_diff_2d(&g2).unwrap();
    let id2 = DMatrix::<f64>::identity(49, 49);

    let wave_fom = WaveStepper::new(d, 0.1, 1.3).unwrap();
    let wave_rom = WaveRomStepper::new(&dm, 0.1, 1.3).unwrap();
    let kdv_fom = KdvStepper::new(d, 0.01, 1.0, 0.022);
    let kdv_rom = NonlinearRomStepper::kdv(&dm, &id, 0.01, 1.0, 0.022).unwrap();
    let zk_fom = ZkStepper::new(dx, dy, 0.025, ZkSolver::Dense);
    let zk_rom = NonlinearRomStepper::zk(&dx.to_dense(), &dy.to_dense(), &id2, 0.025).unwrap();

    let rel = |a: &DVector<f64>, b: &DVector<f64>| (a - b).amax() / b.amax().max(1.0);
    let mut worst = [0.0f64; 3];
    for _ in 0..10 {
        let f = |rng: &mut ChaCha8Rng, n: usize| DVector::from_fn(n, |_, _| rng.random_range(-1.0..1.0));
        let s = WaveFomState {
            u: f(&mut rng, 40),
            v: f(&mut rng, 40),
            w: f(&mut rng, 40),
            t: 0.0,
        };
        let full = wave_fom.step(&s).unwrap();
        let red = wave_rom
            .step_coupled(&msopinf::rom::WaveRomState {
                u: s.u.clone(),
                v: s.v.clone(),
                w: s.w.clone(),
            })
            .unwrap();
        worst[0] = worst[0].max(rel(&red.u, &full.u).max(rel(&red.v, &full.v)).max(rel(&red.w, &full.w)));

        let u = f(&mut rng, 40);
        worst[1] = worst[1].max(rel(&kdv_rom.step(&u).unwrap(), &kdv_fom.step(&u).unwrap()));
        let u = f(&mut rng, 49);
        worst[2] = worst[2].max(rel(&zk_rom.step(&u).unwrap(), &zk_fom.step(&u).unwrap()));
    }
    let ok = verdict(
        "8",
        "ROM steppers with r=N, V=I reproduce FOM steppers (10 random states)",
        worst.iter().all(|w| *w <= 1e-12),
        format!("wave {:.2e}, kdv {:.2e}, zk {:.2e} (each <= 1e-12)", worst[0], worst[1], worst[2]),
    );
    assert!(ok);
}

#[test]
fn criterion_9_determinism() {
    let cfg = ExperimentConfig::preset("wave").unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let ma = run_preset(cfg.clone(), a.path());
    let mb = run_preset(cfg, b.path());
    let same_manifest = ma.without_timings() == mb.without_timings();
    let read = |dir: &Path| std::fs::read(dir.join(files::OPERATORS)).unwrap();
    let same_ops = read(a.path()) == read(b.path());
    let ok = verdict(
        "9",
        "two wave pipeline runs with the same config and seed",
        same_manifest && same_ops && !read(a.path()).is_empty(),
        format!("manifests identical modulo timings: {same_manifest}, operator bytes identical: {same_ops}"),
    );
    assert!(ok);
}
