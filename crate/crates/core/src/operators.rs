//! Skew-symmetric periodic central-difference operators in 1D and 2D.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{PeriodicGrid1D, PeriodicGrid2D};
use crate::spectral::{central_symbol, dft_axis, real_part, to_complex, NULL_SYMBOL_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Axis {
    X,
    Y,
}

/// Circulant stencil `(u_{j+1} - u_{j-1}) / 2h` along one axis of an
/// `nx × ny` field stored x-fastest. A 1D operator has `ny = 1`.
///
/// In 2D, the x-operator equals `I_ny ⊗ d` and the y-operator `d ⊗ I_nx`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiffOperator {
    nx: usize,
    ny: usize,
    h: f64,
    axis: Axis,
}

pub fn central_diff_1d(grid: &PeriodicGrid1D) -> Result<DiffOperator> {
    if grid.n < 4 {
        return Err(Error::InvalidGrid(format!("need at least 4 nodes, got {}", grid.n)));
    }
    Ok(DiffOperator {
        nx: grid.n,
        ny: 1,
        h: grid.h(),
        axis: Axis::X,
    })
}

pub fn central_diff_2d(grid: &PeriodicGrid2D) -> Result<(DiffOperator, DiffOperator)> {
    let n = grid.n();
    if n < 4 {
        return Err(Error::InvalidGrid(format!("need at least 4 nodes, got {n}")));
    }
    let make = |axis| DiffOperator {
        nx: n,
        ny: n,
        h: grid.h(),
        axis,
    };
    Ok((make(Axis::X), make(Axis::Y)))
}

impl DiffOperator {
    pub fn dim(&self) -> usize {
        self.nx * self.ny
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn axis(&self) -> Axis {
        self.axis
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.nx, self.ny)
    }

    fn neighbours(&self, i: usize) -> (usize, usize) {
        let (j, k) = (i % self.nx, i / self.nx);
        match self.axis {
            Axis::X => {
                let next = (j + 1) % self.nx;
                let prev = (j + self.nx - 1) % self.nx;
                (next + self.nx * k, prev + self.nx * k)
            }
            Axis::Y => {
                let next = (k + 1) % self.ny;
                let prev = (k + self.ny - 1) % self.ny;
                (j + self.nx * next, j + self.nx * prev)
            }
        }
    }

    fn check(&self, len: usize) -> Result<()> {
        if len != self.dim() {
            return Err(Error::DimensionMismatch {
                context: "difference operator",
                expected: self.dim(),
                got: len,
            });
        }
        Ok(())
    }

    /// `out = D u`. Panics on length mismatch; see [`DiffOperator::apply`].
    pub fn apply_into(&self, u: &[f64], out: &mut [f64]) {
        assert_eq!(u.len(), self.dim());
        assert_eq!(out.len(), self.dim());
        let s = 0.5 / self.h;
        for (i, o) in out.iter_mut().enumerate() {
            let (next, prev) = self.neighbours(i);
            *o = s * (u[next] - u[prev]);
        }
    }

    pub fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(u.len())?;
        let mut out = DVector::zeros(u.len());
        self.apply_into(u.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// `D^k u` by repeated application.
    pub fn apply_pow(&self, u: &DVector<f64>, k: u32) -> Result<DVector<f64>> {
        self.check(u.len())?;
        let mut cur = u.clone();
        let mut next = DVector::zeros(u.len());
        for _ in 0..k {
            self.apply_into(cur.as_slice(), next.as_mut_slice());
            std::mem::swap(&mut cur, &mut next);
        }
        Ok(cur)
    }

    /// Applies `D` to every column.
    pub fn apply_columns(&self, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        self.check(m.nrows())?;
        let mut out = DMatrix::zeros(m.nrows(), m.ncols());
        for c in 0..m.ncols() {
            self.apply_into(m.column(c).as_slice(), out.column_mut(c).as_mut_slice());
        }
        Ok(out)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let s = 0.5 / self.h;
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            let (next, prev) = self.neighbours(i);
            m[(i, next)] += s;
            m[(i, prev)] -= s;
        }
        m
    }

    pub fn dense_pow(&self, k: u32) -> DMatrix<f64> {
        let d = self.to_dense();
        let mut out = DMatrix::identity(self.dim(), self.dim());
        for _ in 0..k {
            out = &out * &d;
        }
        out
    }

    /// Minimum-norm least-squares solution of `D φ = u`.
    ///
    /// Components of `u` along the null space of `Dᵀ` (constants along each grid line
    /// and, for even line length, the alternating mode) are discarded, and `φ` has
    /// zero mean along every line.
    pub fn solve_potential(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        self.check(u.len())?;
        let len = match self.axis {
            Axis::X => self.nx,
            Axis::Y => self.ny,
        };
        let mut data = to_complex(u.as_slice());
        dft_axis(&mut data, self.nx, self.ny, self.axis, false);
        let tol = NULL_SYMBOL_TOL / self.h;
        let inv: Vec<Complex64> = (0..len)
            .map(|k| {
                let s = central_symbol(k, len, self.h);
                if s.abs() <= tol {
                    Complex64::new(0.0, 0.0)
                } else {
                    // 1 / (i s)
                    Complex64::new(0.0, -1.0 / s)
                }
            })
            .collect();
        for (i, c) in data.iter_mut().enumerate() {
            let k = match self.axis {
                Axis::X => i % self.nx,
                Axis::Y => i / self.nx,
            };
            *c *= inv[k];
        }
        dft_axis(&mut data, self.nx, self.ny, self.axis, true);
        Ok(DVector::from_vec(real_part(&data)))
    }
}
