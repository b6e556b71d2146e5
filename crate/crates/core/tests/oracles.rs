mod common;

use common::{dense_eigenvalues, dense_resolvent, quad_gamma0_hat, GOLDEN};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;
use smm_core::green::{g1d, gamma0_hat, gamma0_hat_plus};
use smm_core::reduction::zeta0_closed_form;
use smm_core::spectrum::{build_finite, eig_window};
use smm_core::{Energy, Geometry, ModelParams};

/// Adjacency matrix of the chain `0..n`.
fn chain(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i.abs_diff(j) == 1 { 1.0 } else { 0.0 })
}

#[test]
fn sturm_path_agrees_with_dense_eigenvalues() {
    let p = ModelParams::full_1d(1.0, GOLDEN, 0.1).unwrap();
    let op = build_finite(&p, 20).unwrap();
    assert!(op.dim() > smm_core::spectrum::finite::DENSE_LIMIT);
    let got: Vec<f64> = eig_window(&op, 4.2, 8.0).unwrap().iter().map(|e| e.energy).collect();
    let want: Vec<f64> = dense_eigenvalues(&op.to_dense())
        .into_iter()
        .filter(|&e| e > 4.2 && e < 8.0)
        .collect();
    assert!(!want.is_empty());
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-6, "{a} vs {b}");
    }
}

#[test]
fn dense_path_agrees_with_dense_eigenvalues() {
    let p = ModelParams::full_1d(2.0, GOLDEN, 0.3)
        .unwrap()
        .with_geometry(Geometry::HalfSpace);
    let op = build_finite(&p, 10).unwrap();
    let got: Vec<f64> = eig_window(&op, -9.0, -4.3).unwrap().iter().map(|e| e.energy).collect();
    let want: Vec<f64> = dense_eigenvalues(&op.to_dense())
        .into_iter()
        .filter(|&e| e > -9.0 && e < -4.3)
        .collect();
    assert!(!want.is_empty());
    assert_eq!(got.len(), want.len());
    for (a, b) in got.iter().zip(&want) {
        assert!((a - b).abs() < 1e-10, "{a} vs {b}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn chain_resolvent_matches_g1d(re in -4.0f64..4.0, im in 0.5f64..2.0, x in 0i64..6) {
        let w = Complex64::new(re, im);
        let n = 121usize;
        let c = n / 2;
        let g = dense_resolvent(&chain(n), w);
        let want = g[(c, c + x as usize)];
        prop_assert!((g1d(x, w).unwrap() - want).norm() < 1e-10);
    }

    #[test]
    fn half_chain_corner_is_minus_small_root(re in -4.0f64..4.0, im in 0.5f64..2.0, y in 0.0f64..1.0) {
        // the half-line corner entry sits on the fiber w(y) = z − 2cos 2πy
        let z = Complex64::new(re, im);
        let w = z - 2.0 * (std::f64::consts::TAU * y).cos();
        let g = dense_resolvent(&chain(80), w);
        let got = gamma0_hat_plus(&[y], Energy::from(z)).unwrap();
        prop_assert!((got - g[(0, 0)]).norm() < 1e-10);
    }

    #[test]
    fn symbol_matches_quadrature(y in 0.0f64..1.0, re in -6.0f64..6.0, im in 0.3f64..2.0) {
        let z = Complex64::new(re, im);
        let got = gamma0_hat(&[y], Energy::from(z)).unwrap();
        prop_assert!((got - quad_gamma0_hat(y, z)).norm() < 1e-9);
    }

    #[test]
    fn zeta0_is_in_the_unit_interval_and_reflects(e in 4.05f64..12.0, lambda in 0.1f64..5.0) {
        for g in [Geometry::FullSpace, Geometry::HalfSpace] {
            let a = zeta0_closed_form(e, lambda, 512, g).unwrap();
            let b = zeta0_closed_form(e, -lambda, 512, g).unwrap();
            let c = zeta0_closed_form(-e, lambda, 512, g).unwrap();
            prop_assert!(a > 0.0 && a < 1.0);
            prop_assert!((a + b - 1.0).abs() < 1e-12);
            prop_assert!((a + c - 1.0).abs() < 1e-12);
        }
    }
}
