//! The three benchmark multi-symplectic PDEs, `K z_t + L z_x (+ L_y z_y) = ∇S(z)`.
//!
//! State orderings follow the conventional displays:
//! wave `z = (u, v, w)`, KdV `z = (φ, u, v, w)`, ZK `z = (p, u, q, φ, v, w)`.
//!
//! The KdV nonlinearity constant is called `eta`. Some write-ups of the KdV
//! experiment call the same coefficient `ν`; both refer to the `u u_x` factor.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ModelKind {
    Wave,
    KdV,
    ZK,
}

impl ModelKind {
    pub fn state_dim(self) -> usize {
        match self {
            ModelKind::Wave => 3,
            ModelKind::KdV => 4,
            ModelKind::ZK => 6,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Wave => "wave",
            ModelKind::KdV => "kdv",
            ModelKind::ZK => "zk",
        }
    }

    pub fn is_2d(self) -> bool {
        matches!(self, ModelKind::ZK)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "wave" => Ok(ModelKind::Wave),
            "kdv" => Ok(ModelKind::KdV),
            "zk" => Ok(ModelKind::ZK),
            _ => Err(Error::UnknownModel(s.to_string())),
        }
    }
}

/// Scalar coefficients of a model, keyed by name (`c`, `eta`, `gamma`).
pub type Constants = BTreeMap<String, f64>;

/// A multi-symplectic model: skew structure matrices plus the Hamiltonian density.
#[derive(Debug, Clone, PartialEq)]
pub struct MsModel {
    kind: ModelKind,
    k: DMatrix<f64>,
    lx: DMatrix<f64>,
    ly: Option<DMatrix<f64>>,
    constants: Constants,
}

fn from_entries(d: usize, entries: &[(usize, usize, f64)]) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(d, d);
    for &(i, j, v) in entries {
        m[(i, j)] = v;
        m[(j, i)] = -v;
    }
    m
}

fn require(constants: &Constants, model: &'static str, name: &'static str) -> Result<f64> {
    constants
        .get(name)
        .copied()
        .ok_or(Error::MissingConstant { model, name })
}

impl MsModel {
    pub fn new(kind: ModelKind, constants: &Constants) -> Result<Self> {
        let mut kept = Constants::new();
        let (k, lx, ly) = match kind {
            ModelKind::Wave => {
                let c = require(constants, "wave", "c")?;
                if !(c.is_finite() && c != 0.0) {
                    return Err(Error::Config(format!("wave speed must be finite and nonzero, got {c}")));
                }
                kept.insert("c".into(), c);
                (
                    from_entries(3, &[(1, 0, 1.0)]),
                    from_entries(3, &[(0, 2, 1.0)]),
                    None,
                )
            }
            ModelKind::KdV => {
                let eta = require(constants, "kdv", "eta")?;
                let gamma = require(constants, "kdv", "gamma")?;
                kept.insert("eta".into(), eta);
                kept.insert("gamma".into(), gamma);
                (
                    from_entries(4, &[(0, 1, 0.5)]),
                    from_entries(4, &[(0, 3, 1.0), (1, 2, -gamma)]),
                    None,
                )
            }
            ModelKind::ZK => (
                from_entries(6, &[(1, 3, 0.5)]),
                from_entries(6, &[(0, 3, 1.0), (1, 4, 1.0), (2, 5, 1.0)]),
                Some(from_entries(6, &[(1, 5, 1.0), (2, 4, -1.0)])),
            ),
        };
        Ok(MsModel {
            kind,
            k,
            lx,
            ly,
            constants: kept,
        })
    }

    /// Parses the model name, then builds it.
    pub fn from_name(name: &str, constants: &Constants) -> Result<Self> {
        Self::new(name.parse()?, constants)
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn state_dim(&self) -> usize {
        self.kind.state_dim()
    }

    pub fn k(&self) -> &DMatrix<f64> {
        &self.k
    }

    pub fn lx(&self) -> &DMatrix<f64> {
        &self.lx
    }

    pub fn ly(&self) -> Option<&DMatrix<f64>> {
        self.ly.as_ref()
    }

    pub fn constants(&self) -> &Constants {
        &self.constants
    }

    pub fn constant(&self, name: &str) -> Option<f64> {
        self.constants.get(name).copied()
    }

    fn check_node(&self, z: &[f64]) -> Result<()> {
        if z.len() != self.state_dim() {
            return Err(Error::DimensionMismatch {
                context: "hamiltonian node",
                expected: self.state_dim(),
                got: z.len(),
            });
        }
        Ok(())
    }

    /// Hamiltonian density `S(z)` at one node.
    ///
    /// Wave: `S = (v² − w²/c²)/2`, so `w = c² u_x` and `u_tt = c² u_xx`.
    pub fn eval_s(&self, z: &[f64]) -> Result<f64> {
        self.check_node(z)?;
        Ok(match self.kind {
            ModelKind::Wave => {
                let c = self.constants["c"];
                0.5 * (z[1] * z[1] - z[2] * z[2] / (c * c))
            }
            ModelKind::KdV => {
                let eta = self.constants["eta"];
                let (u, v, w) = (z[1], z[2], z[3]);
                0.5 * v * v - u * w + eta * u * u * u / 6.0
            }
            ModelKind::ZK => {
                let (p, u, v, w) = (z[0], z[1], z[4], z[5]);
                u * p - 0.5 * (v * v + w * w) - u * u * u / 6.0
            }
        })
    }

    /// `∇_z S(z)` at one node.
    pub fn eval_grad_s(&self, z: &[f64]) -> Result<DVector<f64>> {
        self.check_node(z)?;
        let g = match self.kind {
            ModelKind::Wave => {
                let c = self.constants["c"];
                vec![0.0, z[1], -z[2] / (c * c)]
            }
            ModelKind::KdV => {
                let eta = self.constants["eta"];
                let (u, v, w) = (z[1], z[2], z[3]);
                vec![0.0, -w + 0.5 * eta * u * u, v, -u]
            }
            ModelKind::ZK => {
                let (p, u, v, w) = (z[0], z[1], z[4], z[5]);
                vec![u, p - 0.5 * u * u, 0.0, 0.0, -v, -w]
            }
        };
        Ok(DVector::from_vec(g))
    }
}
