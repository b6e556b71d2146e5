//! Independent oracles shared by the integration and acceptance tests.
#![allow(dead_code)]

use nalgebra::DMatrix;
use num_complex::Complex64;
use std::f64::consts::TAU;

pub const GOLDEN: f64 = 0.618_033_988_749_894_9;

/// `∫₀¹ dξ / (2cos 2πξ − w)` by double-exponential quadrature, split at the
/// two points where the denominator can come close to zero.
pub fn quad_fiber_integral(w: Complex64, tol: f64) -> Complex64 {
    let re = |xi: f64| (1.0 / (2.0 * (TAU * xi).cos() - w)).re;
    let im = |xi: f64| (1.0 / (2.0 * (TAU * xi).cos() - w)).im;
    let mut acc = Complex64::new(0.0, 0.0);
    for (a, b) in [(0.0, 0.5), (0.5, 1.0)] {
        acc.re += quadrature::integrate(re, a, b, tol).integral;
        acc.im += quadrature::integrate(im, a, b, tol).integral;
    }
    acc
}

/// `Γ̂₀(y; z)` for `d = 1` straight from its integral definition.
pub fn quad_gamma0_hat(y: f64, z: Complex64) -> Complex64 {
    quad_fiber_integral(z - 2.0 * (TAU * y).cos(), 1e-14)
}

/// Root of `r² − w r + 1 = 0` with `|r| < 1`.
pub fn quadratic_small_root(w: Complex64) -> Complex64 {
    let disc = (w * w - 4.0).sqrt();
    let (a, b) = ((w + disc) / 2.0, (w - disc) / 2.0);
    if a.norm() < b.norm() {
        a
    } else {
        b
    }
}

/// Dense inverse of `A − z`.
pub fn dense_resolvent(a: &DMatrix<f64>, z: Complex64) -> DMatrix<Complex64> {
    let n = a.nrows();
    let m = DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(a[(i, j)], 0.0) - if i == j { z } else { Complex64::new(0.0, 0.0) }
    });
    m.try_inverse().expect("singular")
}

/// Sorted eigenvalues of a dense symmetric matrix.
pub fn dense_eigenvalues(a: &DMatrix<f64>) -> Vec<f64> {
    let mut v: Vec<f64> = a.clone().symmetric_eigen().eigenvalues.iter().cloned().collect();
    v.sort_by(f64::total_cmp);
    v
}
