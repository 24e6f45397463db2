use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fom::InitialState;
use crate::grid::Grid;
use crate::model::ModelKind;

/// Closed-form initial conditions of the reference experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialCondition {
    /// `u = A sech(x − x₀)`, `u_t = 0`.
    WaveSech { amplitude: f64, center: f64 },
    /// `u = A sech(x − x₀)`; the centre defaults to the middle of the domain.
    KdvSech { amplitude: f64, center: Option<f64> },
    /// `u = Σ_j 3c_j sech²(½ √(c_j/ε) ((x − x_j) cos θ + (y − y_j) sin θ))`.
    ZkDoubleSoliton {
        eps: f64,
        theta: f64,
        c1: f64,
        c2: f64,
        x1: f64,
        x2: f64,
        y1: f64,
        y2: f64,
    },
}

fn sech(x: f64) -> f64 {
    1.0 / x.cosh()
}

impl InitialCondition {
    pub fn name(&self) -> &'static str {
        match self {
            InitialCondition::WaveSech { .. } => "wave-sech",
            InitialCondition::KdvSech { .. } => "kdv-sech",
            InitialCondition::ZkDoubleSoliton { .. } => "zk-double-soliton",
        }
    }

    pub fn matches(&self, model: ModelKind) -> bool {
        matches!(
            (self, model),
            (InitialCondition::WaveSech { .. }, ModelKind::Wave)
                | (InitialCondition::KdvSech { .. }, ModelKind::KdV)
                | (InitialCondition::ZkDoubleSoliton { .. }, ModelKind::ZK)
        )
    }

    /// Samples the initial state on `grid`.
    pub fn sample(&self, grid: &Grid) -> Result<InitialState> {
        match (self, grid) {
            (InitialCondition::WaveSech { amplitude, center }, Grid::OneD(g)) => {
                let u = DVector::from_iterator(g.n, g.nodes().into_iter().map(|x| amplitude * sech(x - center)));
                Ok(InitialState {
                    u,
                    ut: Some(DVector::zeros(g.n)),
                })
            }
            (InitialCondition::KdvSech { amplitude, center }, Grid::OneD(g)) => {
                let c = center.unwrap_or(0.5 * (g.a + g.b));
                let u = DVector::from_iterator(g.n, g.nodes().into_iter().map(|x| amplitude * sech(x - c)));
                Ok(InitialState { u, ut: None })
            }
            (
                InitialCondition::ZkDoubleSoliton {
                    eps,
                    theta,
                    c1,
                    c2,
                    x1,
                    x2,
                    y1,
                    y2,
                },
                Grid::TwoD(g),
            ) => {
                if *eps <= 0.0 {
                    return Err(Error::Config("zk-double-soliton needs eps > 0".into()));
                }
                let (ct, st) = (theta.cos(), theta.sin());
                let term = |c: f64, xj: f64, yj: f64, x: f64, y: f64| {
                    let s = sech(0.5 * (c / eps).sqrt() * ((x - xj) * ct + (y - yj) * st));
                    3.0 * c * s * s
                };
                let u = DVector::from_iterator(
                    g.dim(),
                    g.nodes()
                        .into_iter()
                        .map(|(x, y)| term(*c1, *x1, *y1, x, y) + term(*c2, *x2, *y2, x, y)),
                );
                Ok(InitialState { u, ut: None })
            }
            _ => Err(Error::Config(format!("preset {} does not fit this grid", self.name()))),
        }
    }
}
