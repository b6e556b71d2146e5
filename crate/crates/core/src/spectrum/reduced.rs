//! Energies where the truncated surface equation `v^{-1}φ + λΓ₀φ = 0` has a
//! nontrivial solution.
//!
//! `M(E) = diag(v^{-1}) + λΓ₀(E)` is real symmetric and `dΓ₀/dE = Γ₀²`-like
//! positive, so its eigenvalues move monotonically in `E`. Zero crossings are
//! bracketed by the count of negative eigenvalues and polished by golden-section
//! minimization of the smallest singular value.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SmmError};
use crate::green::{default_grid, Energy, FreeFibers};
use crate::model::{c_d, cube, ModelParams, EPS_TAN};
use crate::reduction::SurfaceField;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedConfig {
    pub scan_step: f64,
    /// bracket width handed to the golden-section stage
    pub bracket_tol: f64,
    pub refine_tol: f64,
    pub grid: usize,
}

impl Default for ReducedConfig {
    fn default() -> Self {
        ReducedConfig {
            scan_step: 0.01,
            bracket_tol: 1e-7,
            refine_tol: 1e-13,
            grid: default_grid(1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReducedSolution {
    pub energy: f64,
    #[serde(skip)]
    pub phi: SurfaceField,
    pub min_singular_value: f64,
    /// sites with `v = 0`, where `φ` is pinned to zero
    pub flagged_sites: Vec<Vec<i64>>,
    pub center: Vec<i64>,
}

struct Reduced<'a> {
    params: &'a ModelParams,
    grid: usize,
    sites: Vec<Vec<i64>>,
    keep: Vec<usize>,
    inv_v: Vec<f64>,
    flagged: Vec<Vec<i64>>,
}

impl<'a> Reduced<'a> {
    fn new(params: &'a ModelParams, w: i64, grid: usize) -> Result<Self> {
        let sites = cube(params.d(), w);
        let mut keep = Vec::new();
        let mut inv_v = Vec::new();
        let mut flagged = Vec::new();
        for (i, n) in sites.iter().enumerate() {
            let v = params.surface_function(n)?;
            // v^{-1} = ±∞ in the limit: φ_n = 0 and the row drops out
            if v.abs() < EPS_TAN {
                flagged.push(n.clone());
            } else {
                keep.push(i);
                inv_v.push(1.0 / v);
            }
        }
        Ok(Reduced {
            params,
            grid,
            sites,
            keep,
            inv_v,
            flagged,
        })
    }

    fn matrix(&self, e: f64) -> Result<DMatrix<f64>> {
        let d = self.params.d();
        let kernel = FreeFibers::new(d, Energy::real(e), self.grid)?
            .surface_symbol(self.params.geometry())
            .to_kernel();
        let lambda = self.params.lambda();
        let m = self.keep.len();
        let mut diff = vec![0i64; d];
        let mut mat = DMatrix::<f64>::zeros(m, m);
        for a in 0..m {
            for b in 0..=a {
                let (na, nb) = (&self.sites[self.keep[a]], &self.sites[self.keep[b]]);
                for c in 0..d {
                    diff[c] = na[c] - nb[c];
                }
                let g = lambda * kernel.get(&diff).re;
                mat[(a, b)] = g;
                mat[(b, a)] = g;
            }
            mat[(a, a)] += self.inv_v[a];
        }
        Ok(mat)
    }

    fn eigen(&self, e: f64) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
        Ok(self.matrix(e)?.symmetric_eigen())
    }

    fn negatives(&self, e: f64) -> Result<usize> {
        Ok(self.eigen(e)?.eigenvalues.iter().filter(|v| **v < 0.0).count())
    }

    fn sigma_min(&self, e: f64) -> Result<f64> {
        Ok(self
            .eigen(e)?
            .eigenvalues
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min))
    }

    fn brackets(&self, a: f64, b: f64, ca: usize, cb: usize, tol: f64, out: &mut Vec<(f64, f64)>) -> Result<()> {
        if ca == cb {
            return Ok(());
        }
        if b - a < tol {
            for _ in 0..ca.abs_diff(cb) {
                out.push((a, b));
            }
            return Ok(());
        }
        let m = 0.5 * (a + b);
        let cm = self.negatives(m)?;
        self.brackets(a, m, ca, cm, tol, out)?;
        self.brackets(m, b, cm, cb, tol, out)
    }

    fn golden(&self, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
        let r = (5f64.sqrt() - 1.0) / 2.0;
        let mut c = b - r * (b - a);
        let mut d = a + r * (b - a);
        let (mut fc, mut fd) = (self.sigma_min(c)?, self.sigma_min(d)?);
        while b - a > tol * a.abs().max(1.0) {
            if fc < fd {
                b = d;
                d = c;
                fd = fc;
                c = b - r * (b - a);
                fc = self.sigma_min(c)?;
            } else {
                a = c;
                c = d;
                fc = fd;
                d = a + r * (b - a);
                fd = self.sigma_min(d)?;
            }
        }
        Ok(0.5 * (a + b))
    }

    fn solution(&self, e: f64) -> Result<ReducedSolution> {
        let eig = self.eigen(e)?;
        let (k, s) = eig
            .eigenvalues
            .iter()
            .enumerate()
            .map(|(k, v)| (k, v.abs()))
            .fold((0, f64::INFINITY), |acc, x| if x.1 < acc.1 { x } else { acc });
        let col = eig.eigenvectors.column(k);
        let w = (self.sites.len() as f64).powf(1.0 / self.params.d() as f64) as i64 / 2;
        let mut phi = SurfaceField::zeros(self.params.d(), w);
        for (a, &i) in self.keep.iter().enumerate() {
            phi.values[i] = Complex64::new(col[a], 0.0);
        }
        let (imax, peak) = phi
            .values
            .iter()
            .enumerate()
            .fold((0, Complex64::new(0.0, 0.0)), |acc, (i, v)| {
                if v.norm() > acc.1.norm() {
                    (i, *v)
                } else {
                    acc
                }
            });
        let scale = 1.0 / peak.re;
        phi.values.iter_mut().for_each(|v| *v *= scale);
        Ok(ReducedSolution {
            energy: e,
            min_singular_value: s,
            flagged_sites: self.flagged.clone(),
            center: self.sites[imax].clone(),
            phi,
        })
    }
}

/// Located energies in `(lo, hi)` with their surface solutions `φ`.
pub fn reduced_equation_solve(
    params: &ModelParams,
    window: (f64, f64),
    w: i64,
    cfg: &ReducedConfig,
) -> Result<Vec<ReducedSolution>> {
    let (lo, hi) = window;
    let cd = c_d(params.d());
    if !(hi > lo) || !(lo > cd || hi < -cd) {
        return Err(SmmError::InvalidParameter(format!(
            "energy window ({lo}, {hi}) must lie outside [-{cd}, {cd}]"
        )));
    }
    if w < 1 || !(cfg.scan_step > 0.0) {
        return Err(SmmError::InvalidParameter("need W ≥ 1 and a positive scan step".into()));
    }
    let red = Reduced::new(params, w, cfg.grid)?;
    let steps = ((hi - lo) / cfg.scan_step).ceil().max(1.0) as usize;
    let energies: Vec<f64> = (0..=steps).map(|i| lo + (hi - lo) * i as f64 / steps as f64).collect();
    let counts = energies
        .par_iter()
        .map(|&e| red.negatives(e))
        .collect::<Result<Vec<_>>>()?;
    let brackets: Vec<Vec<(f64, f64)>> = (0..steps)
        .into_par_iter()
        .map(|i| {
            let mut out = Vec::new();
            red.brackets(
                energies[i],
                energies[i + 1],
                counts[i],
                counts[i + 1],
                cfg.bracket_tol,
                &mut out,
            )?;
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let brackets: Vec<(f64, f64)> = brackets.into_iter().flatten().collect();
    let mut found = brackets
        .par_iter()
        .map(|&(a, b)| {
            let e = red.golden(a, b, cfg.refine_tol)?;
            red.solution(e)
        })
        .collect::<Result<Vec<_>>>()?;
    found.sort_by(|a, b| a.energy.total_cmp(&b.energy));
    found.dedup_by(|a, b| (a.energy - b.energy).abs() < 10.0 * cfg.bracket_tol && a.center == b.center);
    Ok(found)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reduction::{apply_gamma0, transfer_phi_to_psi};

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn located_solutions_solve_the_surface_equation() {
        let p = ModelParams::full_1d(1.0, GOLDEN, 0.0).unwrap();
        let sols = reduced_equation_solve(&p, (5.0, 6.0), 12, &ReducedConfig::default()).unwrap();
        assert!(!sols.is_empty());
        for s in &sols {
            assert_eq!(s.flagged_sites, vec![vec![0]]);
            assert_eq!(s.phi.get(&[0]), Complex64::new(0.0, 0.0));
            let g = apply_gamma0(&s.phi, s.energy, &p, 12).unwrap();
            for (i, n) in s.phi.sites().iter().enumerate() {
                if n[0] == 0 {
                    continue;
                }
                let v = p.surface_function(n).unwrap();
                let r = s.phi.values[i] / v + g.values[i];
                assert!(r.norm() < 1e-8, "row {n:?}: {r}");
            }
            let psi = transfer_phi_to_psi(&s.phi, s.energy, &p, 12, 4).unwrap();
            assert!(psi.eigen_residual(&p, s.energy).unwrap() < 1e-6);
        }
    }

    #[test]
    fn rejects_band_window() {
        let p = ModelParams::full_1d(1.0, GOLDEN, 0.0).unwrap();
        assert!(reduced_equation_solve(&p, (3.0, 5.0), 5, &ReducedConfig::default()).is_err());
    }
}
