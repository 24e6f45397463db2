use nalgebra::{DMatrix, DVector, Dyn, LU};

use crate::error::{Error, Result};

/// Dense LU factorisation with partial pivoting that reports singularity instead of
/// returning `None`.
pub struct DenseLu {
    lu: LU<f64, Dyn, Dyn>,
    context: &'static str,
}

/// Ratio of the largest to the smallest |U_ii|; a crude conditioning indicator.
fn pivot_ratio(lu: &LU<f64, Dyn, Dyn>) -> f64 {
    let u = lu.u();
    let diag = u.diagonal();
    let max = diag.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let min = diag.iter().fold(f64::INFINITY, |m, v| m.min(v.abs()));
    if min == 0.0 {
        f64::INFINITY
    } else {
        max / min
    }
}

impl DenseLu {
    pub fn new(a: DMatrix<f64>, context: &'static str) -> Result<Self> {
        let lu = a.lu();
        let ratio = pivot_ratio(&lu);
        if !ratio.is_finite() || ratio > 1e15 {
            return Err(Error::SingularSystem {
                context,
                pivot_ratio: ratio,
            });
        }
        Ok(DenseLu { lu, context })
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.lu.solve(b).ok_or(Error::SingularSystem {
            context: self.context,
            pivot_ratio: f64::INFINITY,
        })
    }
}

/// Solves `a x = b` with a throwaway factorisation.
pub fn solve_dense(a: DMatrix<f64>, b: &DVector<f64>, context: &'static str) -> Result<DVector<f64>> {
    DenseLu::new(a, context)?.solve(b)
}

/// Scales the columns of `a` by `s`, i.e. `a · diag(s)`.
pub fn scale_columns(a: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = a.clone();
    for (j, &sj) in s.iter().enumerate() {
        out.column_mut(j).scale_mut(sj);
    }
    out
}

/// Scales the rows of `a` by `s`, i.e. `diag(s) · a`.
pub fn scale_rows(a: &DMatrix<f64>, s: &[f64]) -> DMatrix<f64> {
    let mut out = a.clone();
    for (i, &si) in s.iter().enumerate() {
        out.row_mut(i).scale_mut(si);
    }
    out
}

pub fn is_skew(a: &DMatrix<f64>) -> bool {
    a.is_square() && (0..a.nrows()).all(|i| (0..=i).all(|j| a[(i, j)] == -a[(j, i)]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn singular_matrix_is_reported() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(
            DenseLu::new(a, "test"),
            Err(Error::SingularSystem { .. })
        ));
    }

    #[test]
    fn solves_small_system() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        let x = solve_dense(a, &DVector::from_vec(vec![3.0, 5.0]), "test").unwrap();
        assert!((x[0] - 0.8).abs() < 1e-15 && (x[1] - 1.4).abs() < 1e-15);
    }
}
