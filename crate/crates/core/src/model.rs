//! The operator family `H = Δ + λ δ(x) tan π(α·n + θ)` on `ℤ^d × ℤ` and its
//! half-space version with the potential acting as a boundary condition.
//!
//! Convention: the surface function `v(n) = tan π(α·n + θ)` never carries the
//! coupling; `λ` appears explicitly wherever it enters.

use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{Result, SmmError};

/// Below this distance of `α·n + θ` from 1/2 (mod 1) the potential is treated as singular.
pub const EPS_TAN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Geometry {
    #[serde(rename = "full")]
    FullSpace,
    #[serde(rename = "half")]
    HalfSpace,
}

impl std::str::FromStr for Geometry {
    type Err = SmmError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Geometry::FullSpace),
            "half" => Ok(Geometry::HalfSpace),
            other => Err(SmmError::InvalidParameter(format!(
                "geometry must be \"full\" or \"half\", got {other:?}"
            ))),
        }
    }
}

/// Full parameterization of `H_{λ,α,θ}` or `H⁺_{λ,α,θ}`.
///
/// `alpha` and `theta` are stored reduced to `[0, 1)`. Rational independence of
/// `alpha` cannot be decided from floating point input; it is the caller's
/// assertion, and rational frequencies void the localization picture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawParams", into = "RawParams")]
pub struct ModelParams {
    lambda: f64,
    alpha: Vec<f64>,
    theta: f64,
    geometry: Geometry,
}

#[derive(Serialize, Deserialize)]
struct RawParams {
    lambda: f64,
    alpha: Vec<f64>,
    theta: f64,
    d: usize,
    geometry: Geometry,
}

impl TryFrom<RawParams> for ModelParams {
    type Error = SmmError;
    fn try_from(raw: RawParams) -> Result<Self> {
        if raw.alpha.len() != raw.d {
            return Err(SmmError::InvalidParameter(format!(
                "d = {} but alpha has {} components",
                raw.d,
                raw.alpha.len()
            )));
        }
        ModelParams::new(raw.lambda, raw.alpha, raw.theta, raw.geometry)
    }
}

impl From<ModelParams> for RawParams {
    fn from(p: ModelParams) -> Self {
        RawParams {
            lambda: p.lambda,
            d: p.alpha.len(),
            alpha: p.alpha,
            theta: p.theta,
            geometry: p.geometry,
        }
    }
}

/// Reduce to `[0, 1)`; guards the `1 - ulp` rounding case of `rem_euclid`.
pub fn frac(x: f64) -> f64 {
    let r = x.rem_euclid(1.0);
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// `‖x‖_{ℝ/ℤ}`, distance to the nearest integer.
pub fn dist_to_int(x: f64) -> f64 {
    let f = frac(x);
    f.min(1.0 - f)
}

impl ModelParams {
    pub fn new(lambda: f64, alpha: Vec<f64>, theta: f64, geometry: Geometry) -> Result<Self> {
        if !(lambda.is_finite() && lambda != 0.0) {
            return Err(SmmError::InvalidParameter(format!(
                "lambda must be finite and nonzero, got {lambda}"
            )));
        }
        if alpha.is_empty() {
            return Err(SmmError::InvalidParameter("d must be at least 1".into()));
        }
        if !alpha.iter().all(|a| a.is_finite()) || !theta.is_finite() {
            return Err(SmmError::InvalidParameter("alpha and theta must be finite".into()));
        }
        Ok(ModelParams {
            lambda,
            alpha: alpha.into_iter().map(frac).collect(),
            theta: frac(theta),
            geometry,
        })
    }

    /// One-dimensional surface (`d = 1`) in the full space.
    pub fn full_1d(lambda: f64, alpha: f64, theta: f64) -> Result<Self> {
        Self::new(lambda, vec![alpha], theta, Geometry::FullSpace)
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }
    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn d(&self) -> usize {
        self.alpha.len()
    }
    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    /// Edge of the free band, `c_d = 2(d + 1)`.
    pub fn c_d(&self) -> f64 {
        c_d(self.d())
    }

    pub fn with_lambda(&self, lambda: f64) -> Result<Self> {
        Self::new(lambda, self.alpha.clone(), self.theta, self.geometry)
    }
    pub fn with_theta(&self, theta: f64) -> Self {
        ModelParams {
            theta: frac(theta),
            ..self.clone()
        }
    }
    pub fn with_geometry(&self, geometry: Geometry) -> Self {
        ModelParams {
            geometry,
            ..self.clone()
        }
    }

    /// `α·n + θ` reduced to `[0, 1)`, accumulated component by component.
    pub fn phase(&self, n: &[i64]) -> f64 {
        debug_assert_eq!(n.len(), self.d());
        let mut s = self.theta;
        for (a, &k) in self.alpha.iter().zip(n) {
            s += frac(a * k as f64);
        }
        frac(s)
    }

    /// `tan π(α·n + θ)` without the coupling. Errors near the poles.
    pub fn surface_function(&self, n: &[i64]) -> Result<f64> {
        let s = self.phase(n);
        let distance = (s - 0.5).abs();
        if distance <= EPS_TAN {
            return Err(SmmError::PhaseSingularity {
                site: n.to_vec(),
                distance,
            });
        }
        Ok((PI * s).tan())
    }
}

pub fn c_d(d: usize) -> f64 {
    2.0 * (d as f64 + 1.0)
}

/// A point `(n, x)` of `ℤ^d × ℤ` (or `ℤ^d × ℤ₊`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LatticeSite {
    pub n: Vec<i64>,
    pub x: i64,
}

impl LatticeSite {
    pub fn new(n: Vec<i64>, x: i64) -> Self {
        LatticeSite { n, x }
    }

    /// `‖(n, x)‖_{d+1} = Σ|n_j| + |x|`.
    pub fn norm(&self) -> i64 {
        l1(&self.n) + self.x.abs()
    }

    pub fn is_admissible(&self, geometry: Geometry) -> bool {
        geometry == Geometry::FullSpace || self.x >= 0
    }
}

pub fn l1(n: &[i64]) -> i64 {
    n.iter().map(|k| k.abs()).sum()
}

/// All `n ∈ ℤ^d` with `‖n‖_∞ ≤ r`, last coordinate fastest.
pub fn cube(d: usize, r: i64) -> Vec<Vec<i64>> {
    let side = (2 * r + 1) as usize;
    let total = side.pow(d as u32);
    (0..total)
        .map(|mut idx| {
            let mut n = vec![0i64; d];
            for j in (0..d).rev() {
                n[j] = (idx % side) as i64 - r;
                idx /= side;
            }
            n
        })
        .collect()
}

/// Position of `n` (with `‖n‖_∞ ≤ r`) in the ordering of [`cube`].
pub fn cube_index(n: &[i64], r: i64) -> usize {
    let side = 2 * r + 1;
    n.iter().fold(0i64, |acc, &k| acc * side + (k + r)) as usize
}

/// `λ tan π(α·n + θ)`.
pub fn potential(params: &ModelParams, n: &[i64]) -> Result<f64> {
    Ok(params.lambda * params.surface_function(n)?)
}

/// Result of scanning the phase condition `α·n + θ ≠ 1/2 (mod 1)` over a finite window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseConditionReport {
    pub window_radius: i64,
    pub min_distance: f64,
    pub worst_site: Vec<i64>,
}

/// Exact minimum of `|frac(α·n + θ) - 1/2|` over `‖n‖_1 ≤ radius`.
pub fn check_theta_condition(params: &ModelParams, radius: i64) -> PhaseConditionReport {
    let radius = radius.max(0);
    let mut best = (f64::INFINITY, vec![0; params.d()]);
    for n in cube(params.d(), radius) {
        if l1(&n) > radius {
            continue;
        }
        let dist = (params.phase(&n) - 0.5).abs();
        if dist < best.0 {
            best = (dist, n);
        }
    }
    PhaseConditionReport {
        window_radius: radius,
        min_distance: best.0,
        worst_site: best.1,
    }
}

/// `θ ↦ θ + j·α (mod 1)`; realizes the lattice translation `n ↦ n + j`.
pub fn shift_phase(params: &ModelParams, j: &[i64]) -> ModelParams {
    let theta = params.phase(j);
    params.with_theta(theta)
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn potential_at_simple_phases() {
        let p = ModelParams::full_1d(1.0, 0.3, 0.0).unwrap();
        assert_eq!(potential(&p, &[0]).unwrap(), 0.0);
        let p = ModelParams::full_1d(2.0, 0.25, 0.0).unwrap();
        assert!((potential(&p, &[1]).unwrap() - 2.0).abs() < 1e-14);
    }

    #[test]
    fn potential_golden_site_three() {
        // 3·0.6180339887 + 0.1 = 1.9541019661 → frac 0.9541019661,
        // tan(π·0.9541019661) = -tan(π·0.0458980339) = -0.14517...
        let p = ModelParams::full_1d(1.0, 0.6180339887, 0.1).unwrap();
        let expected = -(PI * (1.0 - 0.954_101_966_1_f64)).tan();
        assert!((potential(&p, &[3]).unwrap() - expected).abs() < 1e-9);
    }

    #[test]
    fn pole_is_reported() {
        let p = ModelParams::full_1d(1.0, 0.25, 0.25).unwrap();
        assert!(matches!(potential(&p, &[1]), Err(SmmError::PhaseSingularity { .. })));
    }

    #[test]
    fn theta_condition_examples() {
        let p = ModelParams::full_1d(1.0, 0.25, 0.25).unwrap();
        let r = check_theta_condition(&p, 1);
        assert_eq!(r.min_distance, 0.0);
        assert_eq!(r.worst_site, vec![1]);

        let p = ModelParams::full_1d(1.0, 0.5, 0.0).unwrap();
        let r = check_theta_condition(&p, 2);
        assert_eq!(r.min_distance, 0.0);
        assert_eq!(r.worst_site.len(), 1);
        assert_eq!(r.worst_site[0].abs(), 1);

        let p = ModelParams::full_1d(1.0, GOLDEN, 0.0).unwrap();
        let r = check_theta_condition(&p, 100);
        assert!(r.min_distance > 0.0 && r.min_distance <= 0.5);
    }

    #[test]
    fn min_distance_monotone_in_radius() {
        let p = ModelParams::new(0.7, vec![GOLDEN, 0.414_213_562], 0.17, Geometry::FullSpace).unwrap();
        let mut last = f64::INFINITY;
        for r in 0..12 {
            let m = check_theta_condition(&p, r).min_distance;
            assert!(m <= last);
            last = m;
        }
    }

    #[test]
    fn shift_phase_examples() {
        let p = ModelParams::full_1d(1.0, 0.3, 0.1).unwrap();
        assert!((shift_phase(&p, &[1]).theta() - 0.4).abs() < 1e-15);
        let p = ModelParams::full_1d(1.0, 0.3, 0.9).unwrap();
        assert!((shift_phase(&p, &[1]).theta() - 0.2).abs() < 1e-15);
        let p = ModelParams::full_1d(1.0, 0.6180339887, 0.0).unwrap();
        // 13 · 0.6180339887 = 8.0344418531
        assert!((shift_phase(&p, &[13]).theta() - 0.034_441_853_1).abs() < 1e-9);
    }

    #[test]
    fn parity_identity() {
        let p = ModelParams::new(1.3, vec![GOLDEN], 0.21, Geometry::FullSpace).unwrap();
        let m = ModelParams::new(-1.3, vec![-GOLDEN], -0.21, Geometry::FullSpace).unwrap();
        let neg = p.with_lambda(-1.3).unwrap();
        for n in -30..=30 {
            let a = potential(&p, &[n]).unwrap();
            assert!((a - potential(&m, &[n]).unwrap()).abs() <= 1e-10 * a.abs().max(1.0));
            assert!((a + potential(&neg, &[n]).unwrap()).abs() <= 1e-15 * a.abs().max(1.0));
        }
    }

    #[test]
    fn json_roundtrip_uses_documented_keys() {
        let p = ModelParams::new(1.0, vec![1.25], -0.5, Geometry::HalfSpace).unwrap();
        let s = serde_json::to_string(&p).unwrap();
        let v: serde_json::Value = serde_json::from_str(&s).unwrap();
        for key in ["lambda", "alpha", "theta", "d", "geometry"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(v["geometry"], "half");
        assert_eq!(v["alpha"][0], 0.25);
        let back: ModelParams = serde_json::from_str(&s).unwrap();
        assert_eq!(back, p);
        assert!(serde_json::from_str::<ModelParams>(
            r#"{"lambda":0.0,"alpha":[0.3],"theta":0,"d":1,"geometry":"full"}"#
        )
        .is_err());
    }

    #[test]
    fn site_norm() {
        assert_eq!(LatticeSite::new(vec![-2, 3], -4).norm(), 9);
        assert!(!LatticeSite::new(vec![0], -1).is_admissible(Geometry::HalfSpace));
    }

    #[test]
    fn cube_ordering() {
        let pts = cube(2, 1);
        assert_eq!(pts.len(), 9);
        for (i, n) in pts.iter().enumerate() {
            assert_eq!(cube_index(n, 1), i);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn shift_covariance(alpha in 0.01f64..0.99, theta in 0.0f64..1.0, j in -40i64..40, n in -40i64..40) {
                let p = ModelParams::full_1d(0.9, alpha, theta).unwrap();
                let shifted = shift_phase(&p, &[j]);
                if let (Ok(a), Ok(b)) = (potential(&shifted, &[n]), potential(&p, &[n + j])) {
                    if a.abs() < 1e6 {
                        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a.abs() * a.abs()));
                    }
                }
            }
        }
    }
}
