//! Dimension reduction to the surface layer.
//!
//! With `v(n) = tan π(α·n+θ)`, `u(n) = e^{2πi(α·n+θ)}` and `Γ₀ = G₀(·, 0)`,
//! the full resolvent is `G = G₀ − G₀ T G₀` where
//! `T = λV(I + λΓ₀V)^{-1} = λ(1 − u)(I − C u)^{-1}(λΓ₀ − i)^{-1}`,
//! `C = (λΓ₀ + i)(λΓ₀ − i)^{-1}`. For real `E` outside the band the Cayley symbol
//! `q(y) = −(1 − iλΓ̂₀)/(1 + iλΓ̂₀) = e^{−2πiζ(y)}` is unimodular and its mean
//! argument `ζ₀(E)` quantizes the surface eigenvalues.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::Serialize;
use std::f64::consts::{PI, TAU};

use crate::error::{Result, SmmError};
use crate::green::{self, default_grid, Energy, FreeFibers, PeriodicKernel, SymbolGrid};
use crate::model::{c_d, cube, cube_index, Geometry, ModelParams, EPS_TAN};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest node-to-node change of `ζ` accepted while unwrapping.
pub const UNWRAP_MAX_JUMP: f64 = 0.25;

fn check_real_energy(e: f64, d: usize) -> Result<()> {
    if !(e.abs() > c_d(d)) || !e.is_finite() {
        return Err(SmmError::InvalidParameter(format!(
            "energy {e} must lie outside [-{0}, {0}]",
            c_d(d)
        )));
    }
    Ok(())
}

/// `q(y) = −(1 − iλΓ̂₀)/(1 + iλΓ̂₀)` at real `E`.
pub fn q_symbol(y: &[f64], e: f64, lambda: f64, geometry: Geometry) -> Result<Complex64> {
    check_real_energy(e, y.len())?;
    let g = lambda * green::surface_symbol(y, Energy::real(e), geometry)?;
    Ok(-(1.0 - I * g) / (1.0 + I * g))
}

/// Unwrapped `ζ` on the uniform grid of `𝕋^d` with its mean `ζ₀`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaBranch {
    pub lambda: f64,
    pub energy: f64,
    pub grid_size: usize,
    pub d: usize,
    pub zeta_values: Vec<f64>,
    pub winding: i64,
    pub zeta0: f64,
    /// largest deviation of `|q|` from 1 on the grid
    pub unimodularity_error: f64,
    /// `d ≥ 2` sweeps are flagged
    pub experimental: bool,
}

/// Snake ordering of the grid so consecutive nodes are neighbours.
fn snake_order(d: usize, n: usize) -> Vec<usize> {
    if d == 1 {
        return (0..n).collect();
    }
    let inner = snake_order(d - 1, n);
    let block = n.pow((d - 1) as u32);
    let mut out = Vec::with_capacity(n * block);
    for i in 0..n {
        if i % 2 == 0 {
            out.extend(inner.iter().map(|&k| i * block + k));
        } else {
            out.extend(inner.iter().rev().map(|&k| i * block + k));
        }
    }
    out
}

/// `ζ(0) = (−arg q(0)/2π) mod 1`, then continued node by node.
pub fn zeta_branch(d: usize, e: f64, lambda: f64, grid: usize, geometry: Geometry) -> Result<ZetaBranch> {
    check_real_energy(e, d)?;
    if lambda == 0.0 {
        return Err(SmmError::InvalidParameter("lambda must be nonzero".into()));
    }
    let fibers = FreeFibers::new(d, Energy::real(e), grid)?;
    let gamma = fibers.surface_symbol(geometry);
    let q: Vec<Complex64> = gamma
        .values()
        .iter()
        .map(|&g| -(1.0 - I * lambda * g) / (1.0 + I * lambda * g))
        .collect();
    let unimodularity_error = q.iter().map(|v| (v.norm() - 1.0).abs()).fold(0.0, f64::max);
    let order = snake_order(d, grid);
    let mut zeta = vec![0.0; q.len()];
    let first = order[0];
    zeta[first] = (-q[first].arg() / TAU).rem_euclid(1.0);
    for w in order.windows(2) {
        let jump = -(q[w[1]] / q[w[0]]).arg() / TAU;
        if jump.abs() > UNWRAP_MAX_JUMP {
            return Err(SmmError::UnwrapFailure { node: w[1], jump });
        }
        zeta[w[1]] = zeta[w[0]] + jump;
    }
    // winding along the first axis line through the origin
    let stride = grid.pow((d - 1) as u32);
    let mut total = 0.0;
    for i in 0..grid {
        let a = q[i * stride];
        let b = q[((i + 1) % grid) * stride];
        total += -(b / a).arg() / TAU;
    }
    let zeta0 = zeta.iter().sum::<f64>() / zeta.len() as f64;
    Ok(ZetaBranch {
        lambda,
        energy: e,
        grid_size: grid,
        d,
        zeta_values: zeta,
        winding: total.round() as i64,
        zeta0,
        unimodularity_error,
        experimental: d > 1,
    })
}

/// `ζ₀(E)` in one dimension: `1/2 + mean(arctan(λΓ̂₀)/π)`. Used as an
/// independent check of the unwrapping path (both are trapezoid means).
pub fn zeta0_closed_form(e: f64, lambda: f64, grid: usize, geometry: Geometry) -> Result<f64> {
    check_real_energy(e, 1)?;
    let fibers = FreeFibers::new(1, Energy::real(e), grid)?;
    let g = fibers.surface_symbol(geometry);
    Ok(0.5 + g.values().iter().map(|v| (lambda * v.re).atan()).sum::<f64>() / (PI * grid as f64))
}

/// Tabulated `ζ₀` with a strict-monotonicity flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Zeta0Curve {
    pub rows: Vec<(f64, f64, i64)>,
    pub strictly_monotone: bool,
}

impl Zeta0Curve {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("E,zeta0,winding\n");
        for (e, z, w) in &self.rows {
            s.push_str(&format!(
                "{},{},{}\n",
                crate::io::fmt_float(*e),
                crate::io::fmt_float(*z),
                w
            ));
        }
        s
    }
}

/// `ζ₀` at `steps` equally spaced energies, lifted continuously across `E`.
pub fn zeta0_curve(
    e_min: f64,
    e_max: f64,
    steps: usize,
    lambda: f64,
    geometry: Geometry,
    grid: usize,
) -> Result<Zeta0Curve> {
    if steps < 2 || !(e_max > e_min) {
        return Err(SmmError::InvalidParameter(
            "need e_max > e_min and at least 2 steps".into(),
        ));
    }
    if e_min.signum() != e_max.signum() || e_min.abs().min(e_max.abs()) <= c_d(1) {
        return Err(SmmError::InvalidParameter(
            "energy interval must not meet [-c_d, c_d]".into(),
        ));
    }
    let mut rows: Vec<(f64, f64, i64)> = Vec::with_capacity(steps);
    for i in 0..steps {
        let e = e_min + (e_max - e_min) * i as f64 / (steps - 1) as f64;
        let b = zeta_branch(1, e, lambda, grid, geometry)?;
        let mut z = b.zeta0;
        if let Some(&(_, prev, _)) = rows.last() {
            z += (prev - z).round();
        }
        rows.push((e, z, b.winding));
    }
    let inc = rows.windows(2).all(|w| w[1].1 > w[0].1);
    let dec = rows.windows(2).all(|w| w[1].1 < w[0].1);
    Ok(Zeta0Curve {
        rows,
        strictly_monotone: inc || dec,
    })
}

/// Frozen data for building `T` at one spectral parameter.
#[derive(Debug, Clone)]
pub struct ReductionContext {
    pub params: ModelParams,
    pub z: Energy,
    pub gamma_grid: SymbolGrid,
    pub delta: Complex64,
    pub window: i64,
    /// padding of the computational box beyond the window
    pub pad: i64,
}

impl ReductionContext {
    pub fn new(params: &ModelParams, z: Energy, window: i64) -> Result<Self> {
        let pad = window.max(8);
        let box_r = window + pad;
        let d = params.d();
        let mut grid = default_grid(d);
        while (grid as i64) < 4 * box_r + 4 {
            grid *= 2;
        }
        let fibers = FreeFibers::new(d, z, grid)?;
        Ok(ReductionContext {
            params: params.clone(),
            z,
            gamma_grid: fibers.surface_symbol(params.geometry()),
            delta: Complex64::from_polar(1.0, TAU * params.theta()),
            window,
            pad,
        })
    }

    pub fn with_pad(mut self, pad: i64) -> Result<Self> {
        let needed = 4 * (self.window + pad) + 4;
        if (self.gamma_grid.grid_size() as i64) < needed {
            return Err(SmmError::InvalidParameter("padding exceeds the symbol grid".into()));
        }
        self.pad = pad;
        Ok(self)
    }

    /// `sup_y |Ĉ(y)|`.
    pub fn c_norm(&self) -> f64 {
        let l = self.params.lambda();
        self.gamma_grid
            .values()
            .iter()
            .map(|&g| ((l * g + I) / (l * g - I)).norm())
            .fold(0.0, f64::max)
    }

    fn box_radius(&self) -> i64 {
        self.window + self.pad
    }
}

/// Dense matrix of a convolution kernel on the sites of `cube(d, r)`.
pub fn convolution_matrix(kernel: &PeriodicKernel, sites: &[Vec<i64>]) -> DMatrix<Complex64> {
    let m = sites.len();
    let mut diff = vec![0i64; kernel.d()];
    DMatrix::from_fn(m, m, |i, j| {
        for k in 0..diff.len() {
            diff[k] = sites[i][k] - sites[j][k];
        }
        kernel.get(&diff)
    })
}

/// `T` on the window by both constructions.
#[derive(Debug, Clone)]
pub struct TOperator {
    pub sites: Vec<Vec<i64>>,
    pub neumann: DMatrix<Complex64>,
    pub direct: DMatrix<Complex64>,
    pub tail_terms: usize,
    pub c_norm: f64,
    pub window: i64,
}

impl TOperator {
    /// Relative Frobenius difference of the two constructions on `‖n‖∞ ≤ r`.
    pub fn agreement(&self, r: i64) -> f64 {
        let idx: Vec<usize> = (0..self.sites.len())
            .filter(|&i| self.sites[i].iter().all(|c| c.abs() <= r))
            .collect();
        let (mut num, mut den) = (0.0, 0.0);
        for &i in &idx {
            for &j in &idx {
                num += (self.neumann[(i, j)] - self.direct[(i, j)]).norm_sqr();
                den += self.direct[(i, j)].norm_sqr();
            }
        }
        (num / den.max(f64::MIN_POSITIVE)).sqrt()
    }

    pub fn entry(&self, n: &[i64], m: &[i64]) -> Complex64 {
        let r = self.window;
        self.direct[(cube_index(n, r), cube_index(m, r))]
    }

    /// JSON sidecar for the binary dump.
    pub fn sidecar(&self, ctx: &ReductionContext) -> serde_json::Value {
        serde_json::json!({
            "z": [ctx.z.0.re, ctx.z.0.im],
            "lambda": ctx.params.lambda(),
            "theta": ctx.params.theta(),
            "alpha": ctx.params.alpha(),
            "W": self.window,
            "tail_terms": self.tail_terms,
        })
    }
}

/// Number of Neumann terms with `‖C‖^k/(1 − ‖C‖) < tail_tol`.
pub fn neumann_terms(c_norm: f64, tail_tol: f64) -> Result<usize> {
    if !(c_norm < 1.0) {
        return Err(SmmError::SeriesDiverges { norm: c_norm });
    }
    if c_norm == 0.0 {
        return Ok(1);
    }
    let k = ((tail_tol * (1.0 - c_norm)).ln() / c_norm.ln()).ceil().max(1.0);
    if k > 1e9 {
        return Err(SmmError::SeriesDiverges { norm: c_norm });
    }
    Ok(k as usize)
}

/// Builds `T` on the window from the Neumann series (summed by repeated
/// squaring) and from `λV(I + λΓ₀V)^{-1}`, both on a padded box.
pub fn build_t(ctx: &ReductionContext, tail_tol: f64) -> Result<TOperator> {
    let p = &ctx.params;
    let lambda = p.lambda();
    let c_norm = ctx.c_norm();
    let needed = neumann_terms(c_norm, tail_tol)?;
    let d = p.d();
    let rb = ctx.box_radius();
    let sites = cube(d, rb);
    let m = sites.len();

    let mut v = Vec::with_capacity(m);
    let mut u = Vec::with_capacity(m);
    for s in &sites {
        v.push(p.surface_function(s)?);
        u.push(Complex64::from_polar(1.0, TAU * p.phase(s)));
    }

    let gamma = ctx.gamma_grid.to_kernel();
    let c_kernel = ctx.gamma_grid.map(|g| (lambda * g + I) / (lambda * g - I))?.to_kernel();
    let r_kernel = ctx.gamma_grid.map(|g| 1.0 / (lambda * g - I))?.to_kernel();
    let gamma_b = convolution_matrix(&gamma, &sites);
    let c_b = convolution_matrix(&c_kernel, &sites);
    let r_b = convolution_matrix(&r_kernel, &sites);

    // X = C·diag(u); S = Σ_{k<2^j} X^k by S ← S + X^{2^i} S
    let mut x = c_b.clone();
    for j in 0..m {
        let uj = u[j];
        x.column_mut(j).iter_mut().for_each(|e| *e *= uj);
    }
    let mut s = DMatrix::<Complex64>::identity(m, m);
    let mut terms = 1usize;
    while terms < needed {
        s += &x * &s;
        x = &x * &x;
        terms *= 2;
    }
    let mut neumann = s * r_b;
    for i in 0..m {
        let f = lambda * (Complex64::new(1.0, 0.0) - u[i]);
        neumann.row_mut(i).iter_mut().for_each(|e| *e *= f);
    }

    // λV(I + λΓ₀V)^{-1}
    let mut a = gamma_b.clone();
    for j in 0..m {
        let f = lambda * v[j];
        a.column_mut(j).iter_mut().for_each(|e| *e *= f);
    }
    for i in 0..m {
        a[(i, i)] += Complex64::new(1.0, 0.0);
    }
    let mut lv = DMatrix::<Complex64>::zeros(m, m);
    for i in 0..m {
        lv[(i, i)] = Complex64::new(lambda * v[i], 0.0);
    }
    // X (I + λΓ₀V) = λV  ⇔  (I + λΓ₀V)ᵀ Xᵀ = (λV)ᵀ
    let at = a.transpose();
    let direct = at
        .lu()
        .solve(&lv)
        .ok_or_else(|| SmmError::SolverFailure("I + λΓ₀V is singular".into()))?
        .transpose();

    let w = ctx.window;
    let keep: Vec<usize> = (0..m).filter(|&i| sites[i].iter().all(|c| c.abs() <= w)).collect();
    let pick = |mat: &DMatrix<Complex64>| DMatrix::from_fn(keep.len(), keep.len(), |i, j| mat[(keep[i], keep[j])]);
    Ok(TOperator {
        sites: keep.iter().map(|&i| sites[i].clone()).collect(),
        neumann: pick(&neumann),
        direct: pick(&direct),
        tail_terms: terms,
        c_norm,
        window: w,
    })
}

/// Complex field on the surface sites `‖n‖∞ ≤ radius`, in `cube` order.
#[derive(Debug, Clone, PartialEq)]
pub struct SurfaceField {
    pub d: usize,
    pub radius: i64,
    pub values: Vec<Complex64>,
}

impl SurfaceField {
    pub fn zeros(d: usize, radius: i64) -> Self {
        SurfaceField {
            d,
            radius,
            values: vec![Complex64::new(0.0, 0.0); (2 * radius as usize + 1).pow(d as u32)],
        }
    }

    pub fn delta(d: usize, radius: i64, at: &[i64]) -> Self {
        let mut f = Self::zeros(d, radius);
        f.values[cube_index(at, radius)] = Complex64::new(1.0, 0.0);
        f
    }

    pub fn sites(&self) -> Vec<Vec<i64>> {
        cube(self.d, self.radius)
    }

    pub fn get(&self, n: &[i64]) -> Complex64 {
        if n.iter().any(|c| c.abs() > self.radius) {
            Complex64::new(0.0, 0.0)
        } else {
            self.values[cube_index(n, self.radius)]
        }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }
}

/// Lattice function on `‖n‖∞ ≤ radius`, `x_min ≤ x ≤ x_max`, stored with `x`
/// slowest (the finite-volume ordering).
#[derive(Debug, Clone, PartialEq)]
pub struct LatticeFunction {
    pub d: usize,
    pub radius: i64,
    pub x_min: i64,
    pub x_max: i64,
    pub values: Vec<Complex64>,
}

impl LatticeFunction {
    fn layer_len(&self) -> usize {
        (2 * self.radius as usize + 1).pow(self.d as u32)
    }

    pub fn get(&self, n: &[i64], x: i64) -> Complex64 {
        if x < self.x_min || x > self.x_max || n.iter().any(|c| c.abs() > self.radius) {
            return Complex64::new(0.0, 0.0);
        }
        self.values[(x - self.x_min) as usize * self.layer_len() + cube_index(n, self.radius)]
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    pub fn surface(&self) -> SurfaceField {
        let sites = cube(self.d, self.radius);
        SurfaceField {
            d: self.d,
            radius: self.radius,
            values: sites.iter().map(|n| self.get(n, 0)).collect(),
        }
    }

    /// `max |(Hψ − Eψ)(n,x)| / max |ψ|` over sites whose neighbours all lie in
    /// the box (for the half space the `x = 0` layer counts as interior).
    pub fn eigen_residual(&self, params: &ModelParams, e: f64) -> Result<f64> {
        let half = params.geometry() == Geometry::HalfSpace;
        let mut worst: f64 = 0.0;
        let sites = cube(self.d, self.radius - 1);
        for x in self.x_min..=self.x_max {
            let interior_x = (x > self.x_min || (half && x == 0)) && x < self.x_max;
            if !interior_x {
                continue;
            }
            for n in &sites {
                let mut h = self.get(n, x + 1) - e * self.get(n, x);
                if !(half && x == 0) {
                    h += self.get(n, x - 1);
                }
                let mut nb = n.clone();
                for j in 0..self.d {
                    nb[j] += 1;
                    h += self.get(&nb, x);
                    nb[j] -= 2;
                    h += self.get(&nb, x);
                    nb[j] += 1;
                }
                if x == 0 {
                    h += params.lambda() * params.surface_function(n)? * self.get(n, 0);
                }
                worst = worst.max(h.norm());
            }
        }
        Ok(worst / self.sup_norm().max(f64::MIN_POSITIVE))
    }
}

fn grid_for(reach: i64, d: usize) -> usize {
    let mut grid = default_grid(d);
    while (grid as i64) < 2 * reach + 4 {
        grid *= 2;
    }
    grid
}

/// `ψ(n,x) = Σ_η G₀(n−η, x) φ_η` (half space: `G₀⁺(n−η; x, 0)`), on
/// `‖n‖∞ ≤ psi_radius`, `|x| ≤ x_extent` (`0 ≤ x ≤ x_extent` for the half space).
pub fn transfer_phi_to_psi(
    phi: &SurfaceField,
    e: f64,
    params: &ModelParams,
    psi_radius: i64,
    x_extent: i64,
) -> Result<LatticeFunction> {
    let d = params.d();
    check_real_energy(e, d)?;
    if phi.values.iter().all(|v| v.norm() == 0.0) {
        return Err(SmmError::InvalidParameter("phi is identically zero".into()));
    }
    let grid = grid_for(psi_radius + phi.radius, d);
    let fibers = FreeFibers::new(d, Energy::real(e), grid)?;
    let half = params.geometry() == Geometry::HalfSpace;
    let x_min = if half { 0 } else { -x_extent };
    let out_sites = cube(d, psi_radius);
    let src = phi.sites();
    let mut values = Vec::with_capacity(out_sites.len() * (x_extent - x_min + 1) as usize);
    let mut diff = vec![0i64; d];
    for x in x_min..=x_extent {
        let kernel = if half {
            fibers.half_layer_symbol(x, 0).to_kernel()
        } else {
            fibers.layer_symbol(x).to_kernel()
        };
        for n in &out_sites {
            let mut acc = Complex64::new(0.0, 0.0);
            for (eta, &f) in src.iter().zip(&phi.values) {
                if f.norm() == 0.0 {
                    continue;
                }
                for k in 0..d {
                    diff[k] = n[k] - eta[k];
                }
                acc += kernel.get(&diff) * f;
            }
            values.push(acc);
        }
    }
    Ok(LatticeFunction {
        d,
        radius: psi_radius,
        x_min,
        x_max: x_extent,
        values,
    })
}

/// `φ_n = Σ_η Γ₀^{-1}(n−η) ψ(η, 0)`, truncated to the given field's window.
pub fn transfer_psi_to_phi(psi_surface: &SurfaceField, e: f64, params: &ModelParams) -> Result<SurfaceField> {
    let d = params.d();
    check_real_energy(e, d)?;
    let grid = grid_for(2 * psi_surface.radius, d);
    let inv = green::gamma0_inverse_kernel(d, Energy::real(e), grid, params.geometry())?;
    let sites = psi_surface.sites();
    let mut out = SurfaceField::zeros(d, psi_surface.radius);
    let mut diff = vec![0i64; d];
    for (i, n) in sites.iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (eta, &f) in sites.iter().zip(&psi_surface.values) {
            if f.norm() == 0.0 {
                continue;
            }
            for k in 0..d {
                diff[k] = n[k] - eta[k];
            }
            acc += inv.get(&diff) * f;
        }
        out.values[i] = acc;
    }
    Ok(out)
}

/// `Γ₀ φ` on the window by direct convolution.
pub fn apply_gamma0(phi: &SurfaceField, e: f64, params: &ModelParams, out_radius: i64) -> Result<SurfaceField> {
    let d = params.d();
    let grid = grid_for(out_radius + phi.radius, d);
    let kernel = FreeFibers::new(d, Energy::real(e), grid)?
        .surface_symbol(params.geometry())
        .to_kernel();
    let mut out = SurfaceField::zeros(d, out_radius);
    let src = phi.sites();
    let mut diff = vec![0i64; d];
    for (i, n) in out.sites().iter().enumerate() {
        let mut acc = Complex64::new(0.0, 0.0);
        for (eta, &f) in src.iter().zip(&phi.values) {
            for k in 0..d {
                diff[k] = n[k] - eta[k];
            }
            acc += kernel.get(&diff) * f;
        }
        out.values[i] = acc;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum CayleyStatus {
    Ok,
    ZeroVector,
    Discrepancy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CayleyReport {
    /// position-space residual of the Cayley identity, relative
    pub clay_residual: f64,
    /// Fourier-side residual of `q ĉ(y) = e^{−2πiθ} ĉ(y+α)`, relative
    pub trf3_residual: f64,
    /// sites with `|v| < ε_tan` left out of the position residual
    pub excluded_sites: usize,
    pub status: CayleyStatus,
}

/// Shifts a sampled trigonometric polynomial: `g(y) ↦ g(y + s)`.
pub fn trig_shift(values: &[Complex64], s: f64) -> Vec<Complex64> {
    let n = values.len();
    let mut planner = FftPlanner::<f64>::new();
    let mut coef = values.to_vec();
    planner.plan_fft_forward(n).process(&mut coef);
    for (k, c) in coef.iter_mut().enumerate() {
        // signed frequency; the Nyquist term is split evenly
        let kk = if k < n / 2 { k as f64 } else { k as f64 - n as f64 };
        if n.is_multiple_of(2) && k == n / 2 {
            *c *= (PI * n as f64 * s).cos();
        } else {
            *c *= Complex64::from_polar(1.0, TAU * kk * s);
        }
    }
    planner.plan_fft_inverse(n).process(&mut coef);
    coef.iter().map(|c| c / n as f64).collect()
}

/// Checks the Cayley identity for a numerical solution `φ` of
/// `v^{-1}φ + λΓ₀φ = 0`, both on the window and in Fourier form (`d = 1`).
pub fn cayley_check(phi: &SurfaceField, e: f64, params: &ModelParams) -> Result<CayleyReport> {
    let d = params.d();
    check_real_energy(e, d)?;
    let lambda = params.lambda();
    if phi.sup_norm() == 0.0 {
        return Ok(CayleyReport {
            clay_residual: 0.0,
            trf3_residual: 0.0,
            excluded_sites: 0,
            status: CayleyStatus::ZeroVector,
        });
    }
    let g_phi = apply_gamma0(phi, e, params, phi.radius)?;
    let c: Vec<Complex64> = phi
        .values
        .iter()
        .zip(&g_phi.values)
        .map(|(f, g)| f + I * lambda * g)
        .collect();
    let rhs: Vec<Complex64> = phi
        .values
        .iter()
        .zip(&g_phi.values)
        .map(|(f, g)| f - I * lambda * g)
        .collect();
    let mut excluded = 0;
    let (mut num, mut den): (f64, f64) = (0.0, 0.0);
    for (i, n) in phi.sites().iter().enumerate() {
        let ph = params.phase(n);
        if (ph - 0.5).abs() < EPS_TAN || !(EPS_TAN..=1.0 - EPS_TAN).contains(&ph) {
            excluded += 1;
            continue;
        }
        // (1 + iv^{-1})(1 − iv^{-1})^{-1} acts as −e^{−2πi(α·n+θ)}
        let lhs = -Complex64::from_polar(1.0, -TAU * ph) * c[i];
        num = num.max((lhs - rhs[i]).norm());
        den = den.max(rhs[i].norm());
    }
    let clay_residual = num / den.max(f64::MIN_POSITIVE);

    let trf3_residual = if d == 1 {
        trf3_residual(phi, e, params)?
    } else {
        f64::NAN
    };
    let ok = clay_residual < 1e-5 && (d != 1 || trf3_residual < 1e-5);
    Ok(CayleyReport {
        clay_residual,
        trf3_residual,
        excluded_sites: excluded,
        status: if ok {
            CayleyStatus::Ok
        } else {
            CayleyStatus::Discrepancy
        },
    })
}

fn trf3_residual(phi: &SurfaceField, e: f64, params: &ModelParams) -> Result<f64> {
    let lambda = params.lambda();
    let n_grid = grid_for(4 * phi.radius, 1).max(256);
    let fibers = FreeFibers::new(1, Energy::real(e), n_grid)?;
    let gamma = fibers.surface_symbol(params.geometry());
    // φ̂(y) = Σ φ_n e^{−2πiny}, c = (1 + iλΓ̂₀)φ̂
    let mut phi_hat = vec![Complex64::new(0.0, 0.0); n_grid];
    for (n, &f) in phi.sites().iter().zip(&phi.values) {
        phi_hat[n[0].rem_euclid(n_grid as i64) as usize] += f;
    }
    FftPlanner::<f64>::new().plan_fft_forward(n_grid).process(&mut phi_hat);
    let c_hat: Vec<Complex64> = phi_hat
        .iter()
        .zip(gamma.values())
        .map(|(f, g)| (1.0 + I * lambda * g) * f)
        .collect();
    let shifted = trig_shift(&c_hat, params.alpha()[0]);
    let e_theta = Complex64::from_polar(1.0, -TAU * params.theta());
    let (mut num, mut den): (f64, f64) = (0.0, 0.0);
    for (k, g) in gamma.values().iter().enumerate() {
        let q = -(1.0 - I * lambda * g) / (1.0 + I * lambda * g);
        num = num.max((q * c_hat[k] - e_theta * shifted[k]).norm());
        den = den.max(c_hat[k].norm());
    }
    Ok(num / den.max(f64::MIN_POSITIVE))
}

/// Truncated `M(E) = diag(v^{-1}) + λΓ₀(E)` on `‖n‖∞ ≤ w`. Sites with `v = 0`
/// get `v^{-1} = ±1e12` and are returned in the flag list.
pub fn reduced_matrix(params: &ModelParams, w: i64, kernel: &PeriodicKernel) -> Result<(DMatrix<f64>, Vec<Vec<i64>>)> {
    let sites = cube(params.d(), w);
    let m = sites.len();
    let lambda = params.lambda();
    let mut flagged = Vec::new();
    let mut diff = vec![0i64; params.d()];
    let mut mat = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            for k in 0..diff.len() {
                diff[k] = sites[i][k] - sites[j][k];
            }
            mat[(i, j)] = lambda * kernel.get(&diff).re;
        }
        let v = params.surface_function(&sites[i])?;
        let inv = if v.abs() < EPS_TAN {
            flagged.push(sites[i].clone());
            if v >= 0.0 {
                1e12
            } else {
                -1e12
            }
        } else {
            1.0 / v
        };
        mat[(i, i)] += inv;
    }
    Ok((mat, flagged))
}
