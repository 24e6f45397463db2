//! Reconstruction of the auxiliary multi-symplectic variables from primary-state
//! snapshots, stacked side by side into the extended matrix `Z = [Z_1, …, Z_d]`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::fom::SnapshotSet;
use crate::operators::DiffOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct ExtendedSnapshots {
    /// `N × (d_ext · N_t)`
    pub z: DMatrix<f64>,
    /// Field names in stacking order.
    pub labels: Vec<String>,
    pub source_fingerprint: String,
}

impl ExtendedSnapshots {
    pub fn n_t(&self) -> usize {
        self.z.ncols() / self.labels.len()
    }

    /// The block belonging to `label`.
    pub fn block(&self, label: &str) -> Option<DMatrix<f64>> {
        let i = self.labels.iter().position(|l| l == label)?;
        let n_t = self.n_t();
        Some(self.z.columns(i * n_t, n_t).into_owned())
    }

    pub fn fingerprint(&self) -> String {
        let mut f = Fingerprinter::new().str(&self.source_fingerprint);
        for l in &self.labels {
            f = f.str(l);
        }
        f.matrix(&self.z).finish()
    }
}

fn stack(blocks: Vec<(&str, DMatrix<f64>)>, source: &SnapshotSet) -> ExtendedSnapshots {
    let rows = blocks[0].1.nrows();
    let n_t = blocks[0].1.ncols();
    let mut z = DMatrix::zeros(rows, n_t * blocks.len());
    let mut labels = Vec::with_capacity(blocks.len());
    for (i, (label, m)) in blocks.into_iter().enumerate() {
        z.columns_mut(i * n_t, n_t).copy_from(&m);
        labels.push(label.to_string());
    }
    ExtendedSnapshots {
        z,
        labels,
        source_fingerprint: source.fingerprint.clone(),
    }
}

fn need_columns(s: &SnapshotSet, needed: usize, context: &'static str) -> Result<()> {
    if s.n_t() < needed {
        return Err(Error::TooFewColumns {
            context,
            needed,
            got: s.n_t(),
        });
    }
    Ok(())
}

fn check_dim(s: &SnapshotSet, d: &DiffOperator) -> Result<()> {
    if s.u.nrows() != d.dim() {
        return Err(Error::DimensionMismatch {
            context: "snapshots vs operator",
            expected: d.dim(),
            got: s.u.nrows(),
        });
    }
    Ok(())
}

/// Polarised wave velocities `vⁿ = δ_t uⁿ − c² (Δt/2) μ_t D² uⁿ` for `n = 0..N_t−2`,
/// plus the last level. The last level is taken from `last` when given, otherwise from
/// the scheme's forward relation `v^{n+1} = δ_t uⁿ + c² (Δt/2) μ_t D² uⁿ`.
///
/// `apply_d2` maps a state to `D² u` (full or reduced).
pub fn polarized_velocity<F>(
    u: &DMatrix<f64>,
    dt: f64,
    c2: f64,
    last: Option<&DVector<f64>>,
    apply_d2: F,
) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    let n_t = u.ncols();
    let mut v = DMatrix::zeros(u.nrows(), n_t);
    let mut last_forward = None;
    for n in 0..n_t - 1 {
        let (a, b) = (u.column(n), u.column(n + 1));
        let diff = (b - a) / dt;
        let mid: DVector<f64> = (a + b) / 2.0;
        let d2 = apply_d2(&mid) * (c2 * dt / 2.0);
        v.set_column(n, &(&diff - &d2));
        last_forward = Some(diff + d2);
    }
    match (last, last_forward) {
        (Some(l), _) => v.set_column(n_t - 1, l),
        (None, Some(f)) => v.set_column(n_t - 1, &f),
        (None, None) => {}
    }
    v
}

/// `[u | v | w]` for the wave model, with `w = c² D u`.
pub fn wave_extended(s: &SnapshotSet, dt: f64, d: &DiffOperator, c: f64) -> Result<ExtendedSnapshots> {
    need_columns(s, 2, "wave extended snapshots")?;
    check_dim(s, d)?;
    let c2 = c * c;
    let last = s.aux("v").map(|v| v.column(v.ncols() - 1).into_owned());
    let v = polarized_velocity(&s.u, dt, c2, last.as_ref(), |x| {
        d.apply_pow(x, 2).expect("dimension checked")
    });
    let w = d.apply_columns(&s.u)? * c2;
    Ok(stack(vec![("u", s.u.clone()), ("v", v), ("w", w)], s))
}

/// `[φ | u | v | w]` for KdV with `D φ = u` (zero-mean gauge), `v = γ D u` and
/// `w = ½ δ_t φ + γ D v + (η/2) u²`. The last `δ_t φ` is a backward difference.
pub fn kdv_extended(
    s: &SnapshotSet,
    dt: f64,
    d: &DiffOperator,
    eta: f64,
    gamma: f64,
) -> Result<ExtendedSnapshots> {
    need_columns(s, 2, "kdv extended snapshots")?;
    check_dim(s, d)?;
    let (rows, n_t) = s.u.shape();
    let mut phi = DMatrix::zeros(rows, n_t);
    for n in 0..n_t {
        let p = d.solve_potential(&s.u.column(n).into_owned())?;
        phi.set_column(n, &p);
    }
    let v = d.apply_columns(&s.u)? * gamma;
    let dv = d.apply_columns(&v)?;
    let mut w = DMatrix::zeros(rows, n_t);
    for n in 0..n_t {
        let (a, b) = if n + 1 < n_t { (n, n + 1) } else { (n - 1, n) };
        let phi_t = (phi.column(b) - phi.column(a)) / dt;
        let u = s.u.column(n);
        let col = phi_t * 0.5 + dv.column(n) * gamma + u.component_mul(&u) * (eta / 2.0);
        w.set_column(n, &col);
    }
    Ok(stack(vec![("phi", phi), ("u", s.u.clone()), ("v", v), ("w", w)], s))
}

/// `[u | φ]` for ZK with `Dx φ = u`.
pub fn zk_extended(s: &SnapshotSet, dx: &DiffOperator) -> Result<ExtendedSnapshots> {
    need_columns(s, 1, "zk extended snapshots")?;
    check_dim(s, dx)?;
    let (rows, n_t) = s.u.shape();
    let mut phi = DMatrix::zeros(rows, n_t);
    for n in 0..n_t {
        phi.set_column(n, &dx.solve_potential(&s.u.column(n).into_owned())?);
    }
    Ok(stack(vec![("u", s.u.clone()), ("phi", phi)], s))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fom::{simulate_fom, InitialState};
    use crate::grid::{Grid, PeriodicGrid1D, PeriodicGrid2D};
    use crate::model::{ModelKind, MsModel};
    use crate::operators::{central_diff_1d, central_diff_2d};

    fn snap(model: ModelKind, grid: Grid, u: DMatrix<f64>) -> SnapshotSet {
        SnapshotSet {
            model,
            grid,
            dt: 0.1,
            u,
            aux: vec![],
            fingerprint: "test".into(),
        }
    }

    fn grid4() -> (Grid, DiffOperator) {
        let g = PeriodicGrid1D::new(0.0, 4.0, 4).unwrap();
        (Grid::OneD(g), central_diff_1d(&g).unwrap())
    }

    #[test]
    fn wave_constant_state_has_zero_velocity() {
        let (g, d) = grid4();
        let s = snap(ModelKind::Wave, g, DMatrix::from_element(4, 3, 2.0));
        let z = wave_extended(&s, 0.1, &d, 1.0).unwrap();
        assert_eq!(z.z.ncols(), 9);
        assert!(z.block("v").unwrap().iter().all(|v| *v == 0.0));
        assert!(z.block("w").unwrap().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn wave_velocity_by_hand() {
        let (g, d) = grid4();
        let u0 = [1.0, 0.0, -1.0, 0.0];
        let mut u = DMatrix::zeros(4, 2);
        for c in 0..2 {
            u.set_column(c, &DVector::from_row_slice(&u0));
        }
        let z = wave_extended(&snap(ModelKind::Wave, g, u), 0.1, &d, 1.0).unwrap();
        // D²u⁰ = (−1, 0, 1, 0) by the stencil, so v⁰ = −0.05 · D²u⁰
        let v0 = z.block("v").unwrap().column(0).into_owned();
        let want = [0.05, 0.0, -0.05, 0.0];
        for i in 0..4 {
            assert!((v0[i] - want[i]).abs() < 1e-16);
        }
    }

    #[test]
    fn wave_paper_run_shape_and_zero_mean_w() {
        let model = MsModel::new(ModelKind::Wave, &[("c".to_string(), 1.0)].into()).unwrap();
        let g = PeriodicGrid1D::new(-5.0, 5.0, 512).unwrap();
        let grid = Grid::OneD(g);
        let ic = InitialState {
            u: DVector::from_iterator(512, g.nodes().iter().map(|x| 1.0 / x.cosh())),
            ut: None,
        };
        let s = simulate_fom(&model, &grid, &ic, 0.1, 5.0).unwrap();
        let d = central_diff_1d(&g).unwrap();
        let z = wave_extended(&s, 0.1, &d, 1.0).unwrap();
        assert_eq!(z.z.ncols(), 153);
        let w = z.block("w").unwrap();
        for c in 0..w.ncols() {
            assert!(w.column(c).sum().abs() < 1e-12);
        }
        // polarised v reproduces the solver's v
        let v = z.block("v").unwrap();
        assert!((v - s.aux("v").unwrap()).amax() < 1e-10);
        // deterministic
        assert_eq!(wave_extended(&s, 0.1, &d, 1.0).unwrap(), z);
    }

    #[test]
    fn kdv_blocks() {
        let g = PeriodicGrid1D::new(0.0, 2.0, 32).unwrap();
        let d = central_diff_1d(&g).unwrap();
        let z = kdv_extended(&snap(ModelKind::KdV, Grid::OneD(g), DMatrix::zeros(32, 3)), 0.1, &d, 1.0, 0.022).unwrap();
        assert!(z.z.iter().all(|v| *v == 0.0));
        assert_eq!(z.labels, vec!["phi", "u", "v", "w"]);

        let col = DVector::from_iterator(32, g.nodes().iter().map(|x| 0.4 / (x - 1.0).cosh()));
        let u = DMatrix::from_columns(&[col.clone(), col.clone()]);
        let z = kdv_extended(&snap(ModelKind::KdV, Grid::OneD(g), u), 0.1, &d, 1.0, 0.022).unwrap();
        let v = d.apply(&col).unwrap() * 0.022;
        let want = d.apply(&v).unwrap() * 0.022 + col.component_mul(&col) * 0.5;
        let w = z.block("w").unwrap();
        assert!((w.column(0) - &want).amax() < 1e-15);
        assert!((w.column(1) - &want).amax() < 1e-15);
    }

    #[test]
    fn zk_potential_round_trip() {
        let g = PeriodicGrid2D::new(0.0, 8.0, 10).unwrap();
        let (dx, _) = central_diff_2d(&g).unwrap();
        let z = zk_extended(&snap(ModelKind::ZK, Grid::TwoD(g), DMatrix::zeros(100, 2)), &dx).unwrap();
        assert!(z.z.iter().all(|v| *v == 0.0));

        let raw = DVector::from_fn(100, |i, _| ((i * 37 % 17) as f64).sin());
        let psi = dx.solve_potential(&dx.apply(&raw).unwrap()).unwrap();
        let u = dx.apply(&psi).unwrap();
        let z = zk_extended(&snap(ModelKind::ZK, Grid::TwoD(g), DMatrix::from_columns(&[u])), &dx).unwrap();
        assert!((z.block("phi").unwrap().column(0) - psi).amax() < 1e-10);
    }

    #[test]
    fn too_few_columns() {
        let (g, d) = grid4();
        let s = snap(ModelKind::Wave, g, DMatrix::zeros(4, 1));
        assert!(matches!(wave_extended(&s, 0.1, &d, 1.0), Err(Error::TooFewColumns { .. })));
        assert!(kdv_extended(&s, 0.1, &d, 1.0, 1.0).is_err());
    }
}
