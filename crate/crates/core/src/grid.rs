use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform periodic grid on `[a, b)`: nodes `x_j = a + h (j - 1)`, `h = (b - a) / n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid1D {
    pub a: f64,
    pub b: f64,
    pub n: usize,
}

impl PeriodicGrid1D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        if n < 4 {
            return Err(Error::InvalidGrid(format!("need at least 4 nodes, got {n}")));
        }
        if !(b > a) || !a.is_finite() || !b.is_finite() {
            return Err(Error::InvalidGrid(format!("bad interval [{a}, {b}]")));
        }
        Ok(PeriodicGrid1D { a, b, n })
    }

    pub fn h(&self) -> f64 {
        (self.b - self.a) / self.n as f64
    }

    pub fn len(&self) -> f64 {
        self.b - self.a
    }

    pub fn nodes(&self) -> Vec<f64> {
        let h = self.h();
        (0..self.n).map(|j| self.a + h * j as f64).collect()
    }
}

/// Square periodic grid with the same 1D grid on both axes. Flattened with x fastest:
/// node `(j, k)` lives at index `j + n k`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeriodicGrid2D {
    pub axis: PeriodicGrid1D,
}

impl PeriodicGrid2D {
    pub fn new(a: f64, b: f64, n: usize) -> Result<Self> {
        Ok(PeriodicGrid2D {
            axis: PeriodicGrid1D::new(a, b, n)?,
        })
    }

    pub fn n(&self) -> usize {
        self.axis.n
    }

    pub fn h(&self) -> f64 {
        self.axis.h()
    }

    pub fn dim(&self) -> usize {
        self.axis.n * self.axis.n
    }

    pub fn index(&self, j: usize, k: usize) -> usize {
        j + self.axis.n * k
    }

    /// `(x, y)` coordinates in flattening order.
    pub fn nodes(&self) -> Vec<(f64, f64)> {
        let xs = self.axis.nodes();
        let mut out = Vec::with_capacity(self.dim());
        for &y in &xs {
            for &x in &xs {
                out.push((x, y));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "dim", rename_all = "lowercase")]
pub enum Grid {
    #[serde(rename = "1d")]
    OneD(PeriodicGrid1D),
    #[serde(rename = "2d")]
    TwoD(PeriodicGrid2D),
}

impl Grid {
    /// Number of unknowns per scalar field.
    pub fn dim(&self) -> usize {
        match self {
            Grid::OneD(g) => g.n,
            Grid::TwoD(g) => g.dim(),
        }
    }

    pub fn h(&self) -> f64 {
        match self {
            Grid::OneD(g) => g.h(),
            Grid::TwoD(g) => g.h(),
        }
    }

    /// Quadrature weight of one cell (`Δx` or `Δx Δy`).
    pub fn cell_volume(&self) -> f64 {
        match self {
            Grid::OneD(g) => g.h(),
            Grid::TwoD(g) => g.h() * g.h(),
        }
    }
}
