use nalgebra::DMatrix;

/// Number of free parameters of an `r × r` skew matrix.
pub fn param_len(r: usize) -> usize {
    r * r.saturating_sub(1) / 2
}

/// Builds the skew matrix whose strict upper triangle, read row by row, is `theta`.
pub fn skew(theta: &[f64], r: usize) -> DMatrix<f64> {
    assert_eq!(theta.len(), param_len(r), "skew parameter length");
    let mut d = DMatrix::zeros(r, r);
    let mut k = 0;
    for i in 0..r {
        for j in i + 1..r {
            d[(i, j)] = theta[k];
            d[(j, i)] = -theta[k];
            k += 1;
        }
    }
    d
}

/// Strict upper triangle of `d`, row-major.
pub fn unskew(d: &DMatrix<f64>) -> Vec<f64> {
    let r = d.nrows();
    let mut out = Vec::with_capacity(param_len(r));
    for i in 0..r {
        for j in i + 1..r {
            out.push(d[(i, j)]);
        }
    }
    out
}

/// Chain rule through `skew`: `∂L/∂θ_k = G_ij − G_ji` for a gradient `G` w.r.t. `D`.
pub fn pull_back(g: &DMatrix<f64>, out: &mut Vec<f64>) {
    let r = g.nrows();
    for i in 0..r {
        for j in i + 1..r {
            out.push(g[(i, j)] - g[(j, i)]);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn ordering_is_row_major_upper() {
        let d = skew(&[1.0, 2.0, 3.0], 3);
        assert_eq!(d[(0, 1)], 1.0);
        assert_eq!(d[(0, 2)], 2.0);
        assert_eq!(d[(1, 2)], 3.0);
        assert_eq!(d[(2, 1)], -3.0);
        assert_eq!(skew(&[], 1), DMatrix::zeros(1, 1));
        assert_eq!(param_len(0), 0);
    }

    proptest! {
        #[test]
        fn round_trip_is_exact(r in 1usize..=128, seed in any::<u64>()) {
            let theta: Vec<f64> = (0..param_len(r))
                .map(|k| ((k as u64).wrapping_mul(seed | 1) % 1000) as f64 * 1e-3 - 0.5)
                .collect();
            let d = skew(&theta, r);
            prop_assert_eq!(unskew(&d), theta);
            prop_assert_eq!(&d + d.transpose(), DMatrix::zeros(r, r));
        }
    }
}
