//! Box resolvent against `G₀ − G₀ T G₀`.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SmmError};
use crate::green::{default_grid, Energy, FreeFibers, PeriodicKernel};
use crate::model::{cube, Geometry, ModelParams};
use crate::reduction::{build_t, ReductionContext};

use super::finite::{build_finite, build_free, FiniteVolumeOperator};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolventReport {
    pub geometry: Geometry,
    /// `max |G_box − G_formula| / max |G_box|` over the interior block
    pub max_rel_error: f64,
    pub max_abs_error: f64,
    pub block_max: f64,
    pub interior_sites: usize,
    pub tail_terms: usize,
}

/// Free kernels `G₀(·; x₁, x₂)` per layer pair.
struct Kernels {
    fibers: FreeFibers,
    half: bool,
    cache: std::collections::HashMap<(i64, i64), PeriodicKernel>,
}

impl Kernels {
    fn new(d: usize, z: Energy, geometry: Geometry, reach: i64) -> Result<Self> {
        let mut grid = default_grid(d);
        while (grid as i64) < 2 * reach + 4 {
            grid *= 2;
        }
        Ok(Kernels {
            fibers: FreeFibers::new(d, z, grid)?,
            half: geometry == Geometry::HalfSpace,
            cache: Default::default(),
        })
    }

    fn get(&mut self, x1: i64, x2: i64) -> &PeriodicKernel {
        let key = if self.half {
            (x1.min(x2), x1.max(x2))
        } else {
            ((x1 - x2).abs(), 0)
        };
        let (fibers, half) = (&self.fibers, self.half);
        self.cache.entry(key).or_insert_with(|| {
            if half {
                fibers.half_layer_symbol(key.0, key.1).to_kernel()
            } else {
                fibers.layer_symbol(key.0).to_kernel()
            }
        })
    }
}

fn interior(d: usize, w: i64, geometry: Geometry) -> Vec<(Vec<i64>, i64)> {
    let h = w / 2;
    let xs: Vec<i64> = match geometry {
        Geometry::FullSpace => (-h..=h).collect(),
        Geometry::HalfSpace => (0..=h).collect(),
    };
    let mut out = Vec::new();
    for &x in &xs {
        for n in cube(d, h) {
            out.push((n, x));
        }
    }
    out
}

fn box_block(op: &FiniteVolumeOperator, z: Complex64, sites: &[(Vec<i64>, i64)]) -> Result<DMatrix<Complex64>> {
    let lu = op.matrix().to_complex_shifted(z).factor()?;
    let idx: Vec<usize> = sites
        .iter()
        .map(|(n, x)| {
            op.index(n, *x)
                .ok_or_else(|| SmmError::InvalidParameter("interior site outside box".into()))
        })
        .collect::<Result<_>>()?;
    let cols: Vec<Vec<Complex64>> = idx
        .par_iter()
        .map(|&j| {
            let mut rhs = vec![Complex64::new(0.0, 0.0); op.dim()];
            rhs[j] = Complex64::new(1.0, 0.0);
            lu.solve_in_place(&mut rhs);
            idx.iter().map(|&i| rhs[i]).collect()
        })
        .collect();
    let m = sites.len();
    Ok(DMatrix::from_fn(m, m, |i, j| cols[j][i]))
}

fn free_block(k: &mut Kernels, sites: &[(Vec<i64>, i64)]) -> DMatrix<Complex64> {
    let m = sites.len();
    let d = sites[0].0.len();
    let mut g = DMatrix::zeros(m, m);
    let mut diff = vec![0i64; d];
    for i in 0..m {
        for j in 0..m {
            let (n1, x1) = &sites[i];
            let (n2, x2) = &sites[j];
            for c in 0..d {
                diff[c] = n1[c] - n2[c];
            }
            g[(i, j)] = k.get(*x1, *x2).get(&diff);
        }
    }
    g
}

fn report(
    geometry: Geometry,
    direct: &DMatrix<Complex64>,
    formula: &DMatrix<Complex64>,
    tail_terms: usize,
) -> ResolventReport {
    let block_max = direct.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let max_abs_error = direct
        .iter()
        .zip(formula.iter())
        .map(|(a, b)| (a - b).norm())
        .fold(0.0, f64::max);
    ResolventReport {
        geometry,
        max_rel_error: max_abs_error / block_max.max(f64::MIN_POSITIVE),
        max_abs_error,
        block_max,
        interior_sites: direct.nrows(),
        tail_terms,
    }
}

fn check_sizes(l: i64, w: i64) -> Result<()> {
    if w < 1 || 2 * w > l {
        return Err(SmmError::InvalidParameter(format!(
            "need 1 ≤ W ≤ L/2, got W = {w}, L = {l}"
        )));
    }
    Ok(())
}

/// Compares the box resolvent with `G₀(X₁−X₂) − Σ G₀(n₁−η₁,x₁) T(η₁,η₂) G₀(η₂−n₂,−x₂)`
/// on sites with `‖n‖∞, |x| ≤ W/2`; `T` lives on `‖η‖∞ ≤ W`.
pub fn resolvent_check(params: &ModelParams, l: i64, z: Energy, w: i64) -> Result<ResolventReport> {
    check_sizes(l, w)?;
    let d = params.d();
    let geometry = params.geometry();
    let ctx = ReductionContext::new(params, z, w)?;
    let t = build_t(&ctx, 1e-13)?;
    let op = build_finite(params, l)?;
    let sites = interior(d, w, geometry);
    let direct = box_block(&op, z.0, &sites)?;

    let mut kernels = Kernels::new(d, z, geometry, 2 * w)?;
    let g0 = free_block(&mut kernels, &sites);
    let m = sites.len();
    let wn = t.sites.len();
    let mut a = DMatrix::<Complex64>::zeros(m, wn);
    let mut diff = vec![0i64; d];
    for (i, (n, x)) in sites.iter().enumerate() {
        let k = kernels.get(*x, 0);
        for (j, eta) in t.sites.iter().enumerate() {
            for c in 0..d {
                diff[c] = n[c] - eta[c];
            }
            a[(i, j)] = k.get(&diff);
        }
    }
    // G₀(η − n; 0, x) = G₀(n − η; x, 0) by reflection symmetry of the kernel
    let b = a.transpose();
    let formula = g0 - &a * &t.direct * b;
    Ok(report(geometry, &direct, &formula, t.tail_terms))
}

/// `λ = 0`: the box resolvent against `G₀` alone.
pub fn resolvent_check_free(d: usize, l: i64, z: Energy, w: i64, geometry: Geometry) -> Result<ResolventReport> {
    check_sizes(l, w)?;
    let op = build_free(d, l, geometry)?;
    let sites = interior(d, w, geometry);
    let direct = box_block(&op, z.0, &sites)?;
    let mut kernels = Kernels::new(d, z, geometry, 2 * w)?;
    let g0 = free_block(&mut kernels, &sites);
    Ok(report(geometry, &direct, &g0, 0))
}
