//! Eigenvalues from the quantization condition `ζ₀(E) ≡ θ + kα (mod 1)`.
//!
//! For real `E` off the band every node value `ζ(y) = 1/2 + arctan(λΓ̂₀)/π` lies
//! in `(0, 1)`, so `ζ₀` needs no lifting and each `k` contributes at most one
//! root per monotone stretch.

use serde::Serialize;

use crate::error::{Result, SmmError};
use crate::green::default_grid;
use crate::model::{c_d, dist_to_int, frac, Geometry};
use crate::reduction::zeta_branch;

use super::finite::EigenPair;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Side {
    BelowBand,
    AboveBand,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictedEigenvalue {
    pub k: i64,
    pub energy: f64,
    /// `‖ζ₀(E) − θ − kα‖_{ℝ/ℤ}` at the returned energy
    pub quantization_residual: f64,
    pub side: Side,
}

/// Parameters of the one-dimensional predictor.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Predictor {
    pub lambda: f64,
    pub alpha: f64,
    pub theta: f64,
    pub geometry: Geometry,
    /// torus grid for `ζ₀`
    pub grid: usize,
    /// energies in the bracketing scan
    pub scan_steps: usize,
    /// bisection width
    pub tol: f64,
}

impl Predictor {
    pub fn new(lambda: f64, alpha: f64, theta: f64) -> Result<Self> {
        if lambda == 0.0 || !lambda.is_finite() {
            return Err(SmmError::InvalidParameter("lambda must be finite and nonzero".into()));
        }
        Ok(Predictor {
            lambda,
            alpha: frac(alpha),
            theta: frac(theta),
            geometry: Geometry::FullSpace,
            grid: default_grid(1),
            scan_steps: 400,
            tol: 1e-12,
        })
    }

    pub fn with_geometry(mut self, geometry: Geometry) -> Self {
        self.geometry = geometry;
        self
    }

    pub fn zeta0(&self, e: f64) -> Result<f64> {
        Ok(zeta_branch(1, e, self.lambda, self.grid, self.geometry)?.zeta0)
    }

    /// `frac(θ + kα)`.
    pub fn target(&self, k: i64) -> f64 {
        frac(self.theta + frac(self.alpha * k as f64))
    }

    fn bisect(&self, mut a: f64, mut b: f64, fa: f64, t: f64) -> Result<f64> {
        let sa = fa.signum();
        while b - a > self.tol * a.abs().max(1.0) {
            let m = 0.5 * (a + b);
            if m <= a || m >= b {
                break;
            }
            let fm = self.zeta0(m)? - t;
            if fm == 0.0 {
                return Ok(m);
            }
            if fm.signum() == sa {
                a = m;
            } else {
                b = m;
            }
        }
        Ok(0.5 * (a + b))
    }

    /// Root of `ζ₀(E) = t` on the side of the band given by `side`, searched
    /// over `c_d + 10⁻⁶ ≤ |E| ≤ 10⁶` in the variable `ln(|E| − c_d)`.
    pub fn solve_target(&self, t: f64, side: Side) -> Result<Option<f64>> {
        let cd = c_d(1);
        let sign = if side == Side::AboveBand { 1.0 } else { -1.0 };
        let energy = |u: f64| sign * (cd + u.exp());
        let (mut a, mut b) = (1e-6f64.ln(), 1e6f64.ln());
        let fa = self.zeta0(energy(a))? - t;
        let fb = self.zeta0(energy(b))? - t;
        if fa == 0.0 {
            return Ok(Some(energy(a)));
        }
        if fa.signum() == fb.signum() {
            return Ok(None);
        }
        for _ in 0..200 {
            let m = 0.5 * (a + b);
            let fm = self.zeta0(energy(m))? - t;
            if fm.signum() == fa.signum() {
                a = m;
            } else {
                b = m;
            }
            if (energy(b) - energy(a)).abs() < self.tol * energy(a).abs() {
                break;
            }
        }
        Ok(Some(energy(0.5 * (a + b))))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Prediction {
    pub predictions: Vec<PredictedEigenvalue>,
    /// `ζ₀` failed to be strictly monotone on the scan; roots then come from
    /// every sign change of the scan
    pub non_monotone_zeta: bool,
}

/// Roots of the quantization condition for `k_min ≤ k ≤ k_max` in `(e_lo, e_hi)`.
pub fn predict_eigenvalues(p: &Predictor, k_range: (i64, i64), window: (f64, f64)) -> Result<Prediction> {
    let (lo, hi) = window;
    let cd = c_d(1);
    if !(hi > lo) || !(lo > cd || hi < -cd) {
        return Err(SmmError::InvalidParameter(format!(
            "energy window ({lo}, {hi}) must lie outside [-{cd}, {cd}]"
        )));
    }
    let side = if lo > cd { Side::AboveBand } else { Side::BelowBand };
    let steps = p.scan_steps.max(2);
    let energies: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let zeta = energies.iter().map(|&e| p.zeta0(e)).collect::<Result<Vec<f64>>>()?;
    let inc = zeta.windows(2).all(|w| w[1] > w[0]);
    let dec = zeta.windows(2).all(|w| w[1] < w[0]);
    let mut predictions = Vec::new();
    for k in k_range.0..=k_range.1 {
        let t = p.target(k);
        for i in 0..steps {
            let (fa, fb) = (zeta[i] - t, zeta[i + 1] - t);
            let crosses = (fa < 0.0 && fb >= 0.0) || (fa > 0.0 && fb <= 0.0) || (i == 0 && fa == 0.0);
            if !crosses {
                continue;
            }
            let e = if fa == 0.0 {
                energies[i]
            } else if fb == 0.0 {
                energies[i + 1]
            } else {
                p.bisect(energies[i], energies[i + 1], fa, t)?
            };
            if e <= lo || e >= hi {
                continue;
            }
            predictions.push(PredictedEigenvalue {
                k,
                energy: e,
                quantization_residual: dist_to_int(p.zeta0(e)? - t),
                side,
            });
        }
    }
    predictions.sort_by(|a, b| a.energy.total_cmp(&b.energy).then(a.k.cmp(&b.k)));
    Ok(Prediction {
        predictions,
        non_monotone_zeta: !(inc || dec),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DensityScan {
    pub e_star: f64,
    /// `(K, min_{|k| ≤ K} dist(E_star, roots of the k-th condition))`
    pub rows: Vec<(i64, f64)>,
}

impl DensityScan {
    /// First `K` at which the distance drops below `eps`.
    pub fn first_below(&self, eps: f64) -> Option<i64> {
        self.rows.iter().find(|r| r.1 < eps).map(|r| r.0)
    }

    pub fn non_increasing(&self) -> bool {
        self.rows.windows(2).all(|w| w[1].1 <= w[0].1)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("K,min_distance\n");
        for (k, d) in &self.rows {
            s.push_str(&format!("{k},{}\n", crate::io::fmt_float(*d)));
        }
        s
    }
}

/// Distance from `E_star` to the predicted set for `|k| ≤ K`, `K = 1..=k_max`.
///
/// `ζ₀` is monotone on each side of the band, so the nearest root on either
/// side of `E_star` belongs to the target nearest to `ζ₀(E_star)` from that
/// side; only improving targets are solved for.
pub fn spectral_density_scan(p: &Predictor, e_star: f64, k_max: i64) -> Result<DensityScan> {
    let cd = c_d(1);
    if !(e_star.abs() > cd) {
        return Err(SmmError::InvalidParameter(format!(
            "E_star = {e_star} lies in the band"
        )));
    }
    if k_max < 1 {
        return Err(SmmError::InvalidParameter("K_max must be at least 1".into()));
    }
    let side = if e_star > 0.0 { Side::AboveBand } else { Side::BelowBand };
    let z_star = p.zeta0(e_star)?;
    // (best ζ-offset, distance) above and below ζ₀(E_star)
    let mut up = (f64::INFINITY, f64::INFINITY);
    let mut down = (f64::INFINITY, f64::INFINITY);
    let mut rows = Vec::with_capacity(k_max as usize);
    let consider = |k: i64, up: &mut (f64, f64), down: &mut (f64, f64)| -> Result<()> {
        let t = p.target(k);
        let off = t - z_star;
        let slot = if off >= 0.0 { up } else { down };
        if off.abs() < slot.0 {
            if let Some(e) = p.solve_target(t, side)? {
                *slot = (off.abs(), (e - e_star).abs());
            }
        }
        Ok(())
    };
    consider(0, &mut up, &mut down)?;
    for k in 1..=k_max {
        consider(k, &mut up, &mut down)?;
        consider(-k, &mut up, &mut down)?;
        rows.push((k, up.1.min(down.1)));
    }
    Ok(DensityScan { e_star, rows })
}

/// Rules for pairing predictions with finite-volume eigenpairs.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchRules {
    /// energy tolerance
    pub tol: f64,
    /// predictions with `|k| ≤ L − margin` and eigenpairs centred within
    /// `L − margin − center_slack` are in scope
    pub margin: i64,
    /// allowed `|n₀ − k|`
    pub center_slack: i64,
    /// energies in scope
    pub inner: (f64, f64),
}

impl Default for MatchRules {
    fn default() -> Self {
        MatchRules {
            tol: 1e-2,
            margin: 12,
            center_slack: 2,
            inner: (4.3, 7.5),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchedPair {
    pub k: i64,
    pub e_predicted: f64,
    pub e_finite_volume: f64,
    pub abs_error: f64,
    pub n_slope: f64,
    pub x_slope: f64,
    pub surface_mass: f64,
    pub center_n: Vec<i64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchReport {
    pub rules: MatchRules,
    pub pairs: Vec<MatchedPair>,
    pub unmatched_predictions: Vec<PredictedEigenvalue>,
    /// in-scope eigen energies with no partner
    pub unmatched_eigen: Vec<f64>,
    pub bijective: bool,
    pub max_error: f64,
    /// smallest gap between matched finite-volume energies
    pub min_gap: f64,
}

impl MatchReport {
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_float;
        let mut s = String::from("k,E_predicted,E_finite_volume,abs_error,decay_slope,surface_mass\n");
        for p in &self.pairs {
            s.push_str(&format!(
                "{},{},{},{},{},{}\n",
                p.k,
                fmt_float(p.e_predicted),
                fmt_float(p.e_finite_volume),
                fmt_float(p.abs_error),
                fmt_float(p.n_slope),
                fmt_float(p.surface_mass)
            ));
        }
        s
    }
}

/// Pairs predictions with box eigenpairs (`d = 1`): the eigenfunction of label
/// `k` is centred within `center_slack` of `n = k`.
pub fn match_spectra(preds: &[PredictedEigenvalue], eigs: &[EigenPair], l: i64, rules: &MatchRules) -> MatchReport {
    let reach = l - rules.margin;
    let (lo, hi) = rules.inner;
    let in_scope_pred = |p: &PredictedEigenvalue| p.k.abs() <= reach && p.energy > lo && p.energy < hi;
    let in_scope_eig = |e: &EigenPair| {
        e.center_n.iter().all(|c| c.abs() <= reach - rules.center_slack)
            && e.energy > lo + rules.tol
            && e.energy < hi - rules.tol
    };
    let mut used = vec![false; eigs.len()];
    let mut pairs = Vec::new();
    let mut unmatched_predictions = Vec::new();
    for p in preds.iter().filter(|p| in_scope_pred(p)) {
        let best = eigs
            .iter()
            .enumerate()
            .filter(|(i, e)| {
                !used[*i]
                    && (e.energy - p.energy).abs() < rules.tol
                    && (e.center_n[0] - p.k).abs() <= rules.center_slack
            })
            .min_by(|a, b| (a.1.energy - p.energy).abs().total_cmp(&(b.1.energy - p.energy).abs()));
        match best {
            Some((i, e)) => {
                used[i] = true;
                pairs.push(MatchedPair {
                    k: p.k,
                    e_predicted: p.energy,
                    e_finite_volume: e.energy,
                    abs_error: (e.energy - p.energy).abs(),
                    n_slope: e.n_slope,
                    x_slope: e.x_slope,
                    surface_mass: e.surface_mass,
                    center_n: e.center_n.clone(),
                });
            }
            None => unmatched_predictions.push(p.clone()),
        }
    }
    let unmatched_eigen: Vec<f64> = eigs
        .iter()
        .enumerate()
        .filter(|(i, e)| !used[*i] && in_scope_eig(e))
        .map(|(_, e)| e.energy)
        .collect();
    let mut energies: Vec<f64> = pairs.iter().map(|p| p.e_finite_volume).collect();
    energies.sort_by(f64::total_cmp);
    let min_gap = energies.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    MatchReport {
        rules: rules.clone(),
        max_error: pairs.iter().map(|p| p.abs_error).fold(0.0, f64::max),
        bijective: unmatched_predictions.is_empty() && unmatched_eigen.is_empty() && !pairs.is_empty(),
        pairs,
        unmatched_predictions,
        unmatched_eigen,
        min_gap,
    }
}
