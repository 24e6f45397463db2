//! Fourier diagonalisation of periodic central-difference operators.
//!
//! On `n` periodic nodes the stencil `(u_{j+1} - u_{j-1}) / 2h` maps the mode
//! `exp(2πi jk/n)` to `i sin(2πk/n) / h` times itself.

use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::operators::Axis;

/// Imaginary part of the central-difference symbol for mode `k`.
pub fn central_symbol(k: usize, n: usize, h: f64) -> f64 {
    (2.0 * std::f64::consts::PI * k as f64 / n as f64).sin() / h
}

/// Symbols below this fraction of `1/h` are treated as exact zeros.
pub(crate) const NULL_SYMBOL_TOL: f64 = 1e-12;

/// In-place DFT along one axis of an `nx × ny` field stored x-fastest.
/// The inverse is normalised so that forward followed by inverse is the identity.
pub fn dft_axis(data: &mut [Complex64], nx: usize, ny: usize, axis: Axis, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let (len, lines) = match axis {
        Axis::X => (nx, ny),
        Axis::Y => (ny, nx),
    };
    let fft = if inverse {
        planner.plan_fft_inverse(len)
    } else {
        planner.plan_fft_forward(len)
    };
    let scale = if inverse { 1.0 / len as f64 } else { 1.0 };
    match axis {
        Axis::X => {
            for row in data.chunks_exact_mut(nx) {
                fft.process(row);
                if inverse {
                    row.iter_mut().for_each(|c| *c *= scale);
                }
            }
        }
        Axis::Y => {
            let mut buf = vec![Complex64::new(0.0, 0.0); ny];
            for j in 0..lines {
                for k in 0..ny {
                    buf[k] = data[j + nx * k];
                }
                fft.process(&mut buf);
                for k in 0..ny {
                    data[j + nx * k] = buf[k] * scale;
                }
            }
        }
    }
}

pub fn to_complex(x: &[f64]) -> Vec<Complex64> {
    x.iter().map(|&v| Complex64::new(v, 0.0)).collect()
}

pub fn real_part(x: &[Complex64]) -> Vec<f64> {
    x.iter().map(|c| c.re).collect()
}

/// Solves `(1/dt) x + ½ P x = b` where `P = Dx³ + Dx Dy²` on an `n × n` periodic grid
/// (pass `with_y = false` for the 1D operator `Dx³` on `n` nodes).
#[derive(Debug, Clone)]
pub struct CirculantSolver {
    n: usize,
    two_d: bool,
    inv_symbol: Vec<Complex64>,
}

impl CirculantSolver {
    pub fn zk_linear(n: usize, h: f64, dt: f64, scale: f64, two_d: bool) -> Self {
        let ny = if two_d { n } else { 1 };
        let mut inv_symbol = Vec::with_capacity(n * ny);
        for ky in 0..ny {
            let sy = if two_d { central_symbol(ky, n, h) } else { 0.0 };
            for kx in 0..n {
                let sx = central_symbol(kx, n, h);
                // (i sx)^3 + (i sx)(i sy)^2 = -i (sx^3 + sx sy^2)
                let p = Complex64::new(0.0, -(sx * sx * sx + sx * sy * sy));
                inv_symbol.push(Complex64::new(1.0 / dt, 0.0) + p * (0.5 * scale));
            }
        }
        for s in inv_symbol.iter_mut() {
            *s = Complex64::new(1.0, 0.0) / *s;
        }
        CirculantSolver {
            n,
            two_d,
            inv_symbol,
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let ny = if self.two_d { self.n } else { 1 };
        let mut data = to_complex(b);
        dft_axis(&mut data, self.n, ny, Axis::X, false);
        if self.two_d {
            dft_axis(&mut data, self.n, ny, Axis::Y, false);
        }
        for (c, s) in data.iter_mut().zip(&self.inv_symbol) {
            *c *= *s;
        }
        if self.two_d {
            dft_axis(&mut data, self.n, ny, Axis::Y, true);
        }
        dft_axis(&mut data, self.n, ny, Axis::X, true);
        real_part(&data)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dft_round_trip_both_axes() {
        let (nx, ny) = (6, 5);
        let x: Vec<f64> = (0..nx * ny).map(|i| ((i * 7) % 11) as f64 - 3.0).collect();
        let mut c = to_complex(&x);
        dft_axis(&mut c, nx, ny, Axis::X, false);
        dft_axis(&mut c, nx, ny, Axis::Y, false);
        dft_axis(&mut c, nx, ny, Axis::Y, true);
        dft_axis(&mut c, nx, ny, Axis::X, true);
        for (a, b) in real_part(&c).iter().zip(&x) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}
