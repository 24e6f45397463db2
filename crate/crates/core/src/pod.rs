//! POD basis of the extended snapshot matrix and Galerkin projections.
//!
//! One basis `V` serves every state component, so the block basis `I_d ⊗ V` maps the
//! structure matrices to `K ⊗ I_r` and `L ⊗ I_r`.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::fingerprint::Fingerprinter;
use crate::operators::DiffOperator;

#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis {
    /// `N × r`, orthonormal columns.
    pub v: DMatrix<f64>,
    /// All singular values of the snapshot matrix, non-increasing.
    pub sigma: Vec<f64>,
    /// Block multiplicity (number of stacked fields).
    pub d: usize,
}

impl PodBasis {
    pub fn r(&self) -> usize {
        self.v.ncols()
    }

    pub fn n(&self) -> usize {
        self.v.nrows()
    }

    /// `Σ_{i≤r} σ_i² / Σ σ_i²`
    pub fn retained_energy(&self) -> f64 {
        let total: f64 = self.sigma.iter().map(|s| s * s).sum();
        if total == 0.0 {
            return 1.0;
        }
        let kept: f64 = self.sigma.iter().take(self.r()).map(|s| s * s).sum();
        kept / total
    }

    /// `Σ_{i>r} σ_i²`, the squared Frobenius norm of the projection residual.
    pub fn truncation_residual(&self) -> f64 {
        self.sigma.iter().skip(self.r()).map(|s| s * s).sum()
    }

    /// `I_d ⊗ V`
    pub fn block_basis(&self) -> DMatrix<f64> {
        DMatrix::<f64>::identity(self.d, self.d).kronecker(&self.v)
    }

    pub fn fingerprint(&self) -> String {
        Fingerprinter::new().matrix(&self.v).slice(&self.sigma).finish()
    }
}

/// Leading `r` left singular vectors of `z`.
///
/// Each vector is signed so that its largest-magnitude entry (first one on ties) is
/// positive. `d` records how many fields were stacked into `z`.
pub fn compute_pod(z: &DMatrix<f64>, r: usize, d: usize) -> Result<PodBasis> {
    let max = z.nrows().min(z.ncols());
    if r == 0 || r > max {
        return Err(Error::RankOutOfRange { r, max });
    }
    let svd = z.clone().svd(true, false);
    let u = svd.u.expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    // stable: ties keep the routine's column order
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let sigma: Vec<f64> = order.iter().map(|&i| svd.singular_values[i]).collect();
    let mut v = DMatrix::zeros(z.nrows(), r);
    for (k, &i) in order.iter().take(r).enumerate() {
        let mut col = u.column(i).into_owned();
        let mut pivot = 0;
        for (j, x) in col.iter().enumerate() {
            if x.abs() > col[pivot].abs() {
                pivot = j;
            }
        }
        if col[pivot] < 0.0 {
            col.neg_mut();
        }
        v.set_column(k, &col);
    }
    Ok(PodBasis { v, sigma, d })
}

fn check_rows(v: &DMatrix<f64>, rows: usize, context: &'static str) -> Result<()> {
    if v.nrows() != rows {
        return Err(Error::DimensionMismatch {
            context,
            expected: v.nrows(),
            got: rows,
        });
    }
    Ok(())
}

/// `Vᵀ X`
pub fn project(v: &DMatrix<f64>, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(v, x.nrows(), "project")?;
    Ok(v.tr_mul(x))
}

/// `V X̃`
pub fn lift(v: &DMatrix<f64>, xr: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if v.ncols() != xr.nrows() {
        return Err(Error::DimensionMismatch {
            context: "lift",
            expected: v.ncols(),
            got: xr.nrows(),
        });
    }
    Ok(v * xr)
}

/// `VᵀDV`, skew-symmetrised exactly as `(D̃ − D̃ᵀ)/2`.
pub fn intrusive_operator(v: &DMatrix<f64>, d: &DiffOperator) -> Result<DMatrix<f64>> {
    check_rows(v, d.dim(), "intrusive operator")?;
    let dv = d.apply_columns(v)?;
    Ok(skew_part(&v.tr_mul(&dv)))
}

/// Same as [`intrusive_operator`] for an explicit matrix.
pub fn intrusive_operator_dense(v: &DMatrix<f64>, d: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    check_rows(v, d.nrows(), "intrusive operator")?;
    Ok(skew_part(&(v.tr_mul(&(d * v)))))
}

pub fn skew_part(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a - a.transpose()) * 0.5
}
