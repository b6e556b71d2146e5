//! Free lattice Green functions of `ℤ^d × ℤ` and of the half space.
//!
//! Everything is built from the one-dimensional fiber resolvent
//! `g₁(x; w) = ∫_𝕋 e^{2πixt} / (2cos 2πt − w) dt = −r^{|x|} / √(w² − 4)`,
//! where `r` is the root of `X + 1/X = w` inside the unit disk and the square
//! root is `√(w−2)·√(w+2)` with principal branches. The fiber energy is
//! `w(y) = z − Σ_j 2cos 2πy_j`.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::TAU;
use std::io::Write;
use std::path::Path;

use crate::error::{Result, SmmError};
use crate::model::{c_d, Geometry};

/// Distance from `w = ±2` below which the closed forms are refused.
pub const EPS_BRANCH: f64 = 1e-8;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Spectral parameter `z`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Energy(pub Complex64);

impl Energy {
    pub fn new(re: f64, im: f64) -> Self {
        Energy(Complex64::new(re, im))
    }
    pub fn real(e: f64) -> Self {
        Energy(Complex64::new(e, 0.0))
    }
    pub fn z(&self) -> Complex64 {
        self.0
    }
    /// Either off the real axis, or real and outside `[−c_d, c_d]`.
    pub fn is_admissible(&self, d: usize) -> bool {
        self.0.im != 0.0 || self.0.re.abs() > c_d(d)
    }
}

impl From<Complex64> for Energy {
    fn from(z: Complex64) -> Self {
        Energy(z)
    }
}

/// Fiber energy `w(y) = z − Σ_j 2cos 2πy_j`.
pub fn fiber_energy(y: &[f64], z: Complex64) -> Complex64 {
    z - y.iter().map(|&t| 2.0 * (TAU * t).cos()).sum::<f64>()
}

/// `√(w² − 4)` on the branch asymptotic to `w`; refuses the cut `[−2, 2]`.
pub fn fiber_sqrt(w: Complex64) -> Result<Complex64> {
    let on_cut = w.im == 0.0 && w.re.abs() <= 2.0;
    if on_cut || (w - 2.0).norm() < EPS_BRANCH || (w + 2.0).norm() < EPS_BRANCH {
        return Err(SmmError::BranchPoint {
            re: w.re,
            im: w.im,
            tol: EPS_BRANCH,
        });
    }
    Ok((w - 2.0).sqrt() * (w + 2.0).sqrt())
}

/// Root of `X + 1/X = w` with `|X| < 1`.
pub fn small_root(w: Complex64) -> Result<Complex64> {
    let s = fiber_sqrt(w)?;
    Ok(2.0 / (w + s))
}

/// `g₁(x; w) = −r^{|x|}/√(w²−4)`.
pub fn g1d(x: i64, w: Complex64) -> Result<Complex64> {
    let s = fiber_sqrt(w)?;
    let r = 2.0 / (w + s);
    Ok(-r.powi(x.unsigned_abs() as i32) / s)
}

/// Surface symbol `Γ̂₀(y) = −1/√(w² − 4)`.
pub fn gamma0_hat(y: &[f64], z: Energy) -> Result<Complex64> {
    Ok(-1.0 / fiber_sqrt(fiber_energy(y, z.0))?)
}

/// Half-space surface symbol `Γ̂₀⁺(y) = −r(y, z)`.
pub fn gamma0_hat_plus(y: &[f64], z: Energy) -> Result<Complex64> {
    Ok(-small_root(fiber_energy(y, z.0))?)
}

/// Surface symbol for either geometry.
pub fn surface_symbol(y: &[f64], z: Energy, geometry: Geometry) -> Result<Complex64> {
    match geometry {
        Geometry::FullSpace => gamma0_hat(y, z),
        Geometry::HalfSpace => gamma0_hat_plus(y, z),
    }
}

/// Cayley image `Ĉ(y) = (λΓ̂ + i)/(λΓ̂ − i)` of the surface symbol.
pub fn c_symbol(y: &[f64], z: Energy, lambda: f64, geometry: Geometry) -> Result<Complex64> {
    let g = lambda * surface_symbol(y, z, geometry)?;
    Ok((g + I) / (g - I))
}

pub fn default_grid(d: usize) -> usize {
    match d {
        1 => 2048,
        2 => 256,
        _ => 64,
    }
}

fn check_grid(n: usize) -> Result<()> {
    if n < 4 || !n.is_multiple_of(2) {
        return Err(SmmError::InvalidParameter(format!(
            "grid size must be even and at least 4, got {n}"
        )));
    }
    Ok(())
}

/// Complex function sampled on the uniform grid `y = i/N` of `𝕋^d`.
/// Storage is row-major with the last axis fastest.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolGrid {
    d: usize,
    n: usize,
    values: Vec<Complex64>,
}

impl SymbolGrid {
    pub fn from_fn<F>(d: usize, n: usize, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Complex64>,
    {
        check_grid(n)?;
        if d == 0 {
            return Err(SmmError::InvalidParameter("d must be at least 1".into()));
        }
        let total = n.pow(d as u32);
        let mut values = Vec::with_capacity(total);
        let mut y = vec![0.0; d];
        for idx in 0..total {
            grid_point(idx, d, n, &mut y);
            let v = f(&y)?;
            if !v.is_finite() {
                return Err(SmmError::InvalidParameter(format!("symbol is not finite at y = {y:?}")));
            }
            values.push(v);
        }
        Ok(SymbolGrid { d, n, values })
    }

    pub fn from_values(d: usize, n: usize, values: Vec<Complex64>) -> Result<Self> {
        check_grid(n)?;
        if values.len() != n.pow(d as u32) || values.iter().any(|v| !v.is_finite()) {
            return Err(SmmError::InvalidParameter(
                "symbol values must be finite and have N^d entries".into(),
            ));
        }
        Ok(SymbolGrid { d, n, values })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn grid_size(&self) -> usize {
        self.n
    }
    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn point(&self, idx: usize) -> Vec<f64> {
        let mut y = vec![0.0; self.d];
        grid_point(idx, self.d, self.n, &mut y);
        y
    }

    pub fn map<F: Fn(Complex64) -> Complex64>(&self, f: F) -> Result<Self> {
        Self::from_values(self.d, self.n, self.values.iter().map(|&v| f(v)).collect())
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Mean over the grid, i.e. the trapezoid rule on the torus.
    pub fn mean(&self) -> Complex64 {
        self.values.iter().sum::<Complex64>() / self.values.len() as f64
    }

    /// Fourier coefficients `K(n) = ∫ e^{2πi n·y} f(y) dy` by the trapezoid rule,
    /// for all `n` of the periodic grid at once.
    pub fn to_kernel(&self) -> PeriodicKernel {
        let mut data = self.values.clone();
        dft_nd(&mut data, self.d, self.n, true);
        let scale = 1.0 / self.values.len() as f64;
        data.iter_mut().for_each(|v| *v *= scale);
        PeriodicKernel {
            d: self.d,
            n: self.n,
            values: data,
        }
    }

    /// CSV with columns `y1..yd,re,im`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let header: Vec<String> = (1..=self.d).map(|j| format!("y{j}")).collect();
        writeln!(out, "{},re,im", header.join(","))?;
        for (idx, v) in self.values.iter().enumerate() {
            let y = self.point(idx);
            let ys: Vec<String> = y.iter().map(|t| crate::io::fmt_float(*t)).collect();
            writeln!(
                out,
                "{},{},{}",
                ys.join(","),
                crate::io::fmt_float(v.re),
                crate::io::fmt_float(v.im)
            )?;
        }
        Ok(())
    }

    /// Binary: 16-byte header (`b"SMGR"`, u32 d, u32 N, u32 reserved = 0), then
    /// row-major little-endian `f64` pairs `(re, im)`.
    pub fn write_binary<W: Write>(&self, out: W) -> Result<()> {
        crate::io::write_smgr(out, self.d as u32, self.n as u32, &self.values)
    }

    pub fn read_binary<R: std::io::Read>(input: R) -> Result<Self> {
        let (d, n, values) = crate::io::read_smgr(input)?;
        Self::from_values(d as usize, n as usize, values)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        self.write_binary(f)
    }
}

fn grid_point(mut idx: usize, d: usize, n: usize, y: &mut [f64]) {
    for j in (0..d).rev() {
        y[j] = (idx % n) as f64 / n as f64;
        idx /= n;
    }
}

/// In-place multidimensional DFT; `inverse` uses the `e^{+2πi}` kernel. Unnormalized.
pub(crate) fn dft_nd(data: &mut [Complex64], d: usize, n: usize, inverse: bool) {
    let mut planner = FftPlanner::<f64>::new();
    let fft = if inverse {
        planner.plan_fft_inverse(n)
    } else {
        planner.plan_fft_forward(n)
    };
    let total = data.len();
    let mut line = vec![Complex64::new(0.0, 0.0); n];
    for axis in 0..d {
        let stride = n.pow((d - 1 - axis) as u32);
        for start in 0..total {
            // first element of each line along `axis`
            if !(start / stride).is_multiple_of(n) {
                continue;
            }
            for k in 0..n {
                line[k] = data[start + k * stride];
            }
            fft.process(&mut line);
            for k in 0..n {
                data[start + k * stride] = line[k];
            }
        }
    }
}

/// Position-space kernel on the periodic lattice `(ℤ/Nℤ)^d`, read back at
/// integer sites by wrapping. Valid for `|n_j| < N/2`.
#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicKernel {
    d: usize,
    n: usize,
    values: Vec<Complex64>,
}

impl PeriodicKernel {
    pub fn get(&self, site: &[i64]) -> Complex64 {
        let n = self.n as i64;
        let idx = site.iter().fold(0i64, |acc, &k| acc * n + k.rem_euclid(n)) as usize;
        self.values[idx]
    }
    pub fn d(&self) -> usize {
        self.d
    }
    pub fn grid_size(&self) -> usize {
        self.n
    }
}

/// Fiber data for one energy on one grid: evaluates every free kernel through a
/// single transform per symbol.
#[derive(Debug, Clone)]
pub struct FreeFibers {
    d: usize,
    n: usize,
    z: Energy,
    w: Vec<Complex64>,
    s: Vec<Complex64>,
    r: Vec<Complex64>,
}

impl FreeFibers {
    pub fn new(d: usize, z: Energy, n: usize) -> Result<Self> {
        check_grid(n)?;
        let total = n.pow(d as u32);
        let mut y = vec![0.0; d];
        let mut w = Vec::with_capacity(total);
        let mut s = Vec::with_capacity(total);
        let mut r = Vec::with_capacity(total);
        for idx in 0..total {
            grid_point(idx, d, n, &mut y);
            let wi = fiber_energy(&y, z.0);
            let si = fiber_sqrt(wi)?;
            w.push(wi);
            s.push(si);
            r.push(2.0 / (wi + si));
        }
        Ok(FreeFibers { d, n, z, w, s, r })
    }

    pub fn d(&self) -> usize {
        self.d
    }
    pub fn grid_size(&self) -> usize {
        self.n
    }
    pub fn energy(&self) -> Energy {
        self.z
    }

    fn grid(&self, vals: Vec<Complex64>) -> SymbolGrid {
        SymbolGrid {
            d: self.d,
            n: self.n,
            values: vals,
        }
    }

    /// Fiber symbol of `G₀(·, x)`: `g₁(x; w(y))`.
    pub fn layer_symbol(&self, x: i64) -> SymbolGrid {
        let p = x.unsigned_abs() as i32;
        self.grid(self.r.iter().zip(&self.s).map(|(r, s)| -r.powi(p) / s).collect())
    }

    /// Fiber symbol of `G₀⁺(·; x₁, x₂)` by the method of images.
    pub fn half_layer_symbol(&self, x1: i64, x2: i64) -> SymbolGrid {
        let a = (x1 - x2).unsigned_abs() as i32;
        let b = (x1 + x2 + 2).unsigned_abs() as i32;
        self.grid(
            self.r
                .iter()
                .zip(&self.s)
                .map(|(r, s)| -(r.powi(a) - r.powi(b)) / s)
                .collect(),
        )
    }

    /// `Γ̂₀` (full) or `Γ̂₀⁺ = −r` (half) on the grid.
    pub fn surface_symbol(&self, geometry: Geometry) -> SymbolGrid {
        match geometry {
            Geometry::FullSpace => self.grid(self.s.iter().map(|s| -1.0 / s).collect()),
            Geometry::HalfSpace => self.grid(self.r.iter().map(|r| -r).collect()),
        }
    }

    /// `Ĉ = (λΓ̂ + i)/(λΓ̂ − i)` on the grid.
    pub fn c_symbol(&self, lambda: f64, geometry: Geometry) -> SymbolGrid {
        let g = self.surface_symbol(geometry);
        self.grid(g.values.iter().map(|&v| (lambda * v + I) / (lambda * v - I)).collect())
    }

    pub fn fiber_energies(&self) -> &[Complex64] {
        &self.w
    }
}

/// `G₀(n, x; z)`, kernel of `(H₀ − z)^{-1}` on `ℤ^{d+1}`, by the `N`-point
/// trapezoid rule per axis.
pub fn g0_full(n: &[i64], x: i64, z: Energy, grid: usize) -> Result<Complex64> {
    single_site(n, z, grid, |w| g1d(x, w))
}

/// `G₀⁺(n; x₁, x₂; z)`, kernel of the Dirichlet half-space resolvent.
pub fn g0_half(n: &[i64], x1: i64, x2: i64, z: Energy, grid: usize) -> Result<Complex64> {
    if x1 < 0 || x2 < 0 {
        return Err(SmmError::InvalidParameter(
            "half-space layers must satisfy x >= 0".into(),
        ));
    }
    single_site(n, z, grid, |w| Ok(g1d(x1 - x2, w)? - g1d(x1 + x2 + 2, w)?))
}

/// `Γ₀(n) = G₀(n, 0)`.
pub fn gamma0_position(n: &[i64], z: Energy, grid: usize) -> Result<Complex64> {
    g0_full(n, 0, z, grid)
}

/// Convolution kernel of `Γ₀^{-1}`, from the reciprocal symbol.
pub fn gamma0_inverse_kernel(d: usize, z: Energy, grid: usize, geometry: Geometry) -> Result<PeriodicKernel> {
    let fibers = FreeFibers::new(d, z, grid)?;
    Ok(fibers.surface_symbol(geometry).map(|g| 1.0 / g)?.to_kernel())
}

fn single_site<F>(n: &[i64], z: Energy, grid: usize, fiber: F) -> Result<Complex64>
where
    F: Fn(Complex64) -> Result<Complex64>,
{
    check_grid(grid)?;
    let d = n.len();
    let total = grid.pow(d as u32);
    let mut y = vec![0.0; d];
    let mut acc = Complex64::new(0.0, 0.0);
    for idx in 0..total {
        grid_point(idx, d, grid, &mut y);
        let phase: f64 = n.iter().zip(&y).map(|(&k, &t)| k as f64 * t).sum();
        acc += Complex64::from_polar(1.0, TAU * phase) * fiber(fiber_energy(&y, z.0))?;
    }
    Ok(acc / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pinned_surface_symbol() {
        let g = gamma0_hat(&[0.25], Energy::real(5.0)).unwrap();
        assert!((g.re + 1.0 / 21f64.sqrt()).abs() < 1e-15);
        assert!(g.im.abs() < 1e-15);
    }

    #[test]
    fn large_energy_asymptote() {
        let g = gamma0_hat(&[0.0], Energy::real(1e6)).unwrap();
        assert!((g.re + 1.0 / (1e6 - 2.0)).abs() < 1e-15);
        for mag in [1e2, 1e4, 1e6] {
            for dir in [
                Complex64::new(1.0, 0.3),
                Complex64::new(-1.0, -0.2),
                Complex64::new(0.1, 1.0),
            ] {
                let z = dir * mag;
                let w = fiber_energy(&[0.37], z);
                let g = gamma0_hat(&[0.37], Energy(z)).unwrap();
                // exact correction is 2/w² + O(w⁻⁴)
                let tol = if mag >= 1e4 { 1e-4 } else { 3.0 / w.norm_sqr() };
                assert!((g * w + 1.0).norm() < tol, "z={z}");
            }
        }
    }

    #[test]
    fn imaginary_sign_follows_z() {
        for y in [0.0, 0.1, 0.25, 0.4, 0.5] {
            for z in [
                Complex64::new(3.0, 0.5),
                Complex64::new(-1.0, -0.01),
                Complex64::new(7.0, -2.0),
            ] {
                let g = gamma0_hat(&[y], Energy(z)).unwrap();
                assert_eq!(g.im.signum(), z.im.signum(), "y={y} z={z}");
                let gp = gamma0_hat_plus(&[y], Energy(z)).unwrap();
                assert_eq!(gp.im.signum(), z.im.signum(), "half y={y} z={z}");
            }
        }
    }

    #[test]
    fn half_space_pinned_values() {
        let g = gamma0_hat_plus(&[0.25], Energy::real(5.0)).unwrap();
        assert!((g.re + (5.0 - 21f64.sqrt()) / 2.0).abs() < 1e-15);
        let g = gamma0_hat_plus(&[0.0], Energy::real(6.0)).unwrap();
        assert!((g.re - (3f64.sqrt() - 2.0)).abs() < 1e-15);
        let w = fiber_energy(&[0.13], Complex64::new(4.5, 0.2));
        let r = small_root(w).unwrap();
        assert!(r.norm() < 1.0);
        assert!((r + 1.0 / r - w).norm() < 1e-13);
    }

    #[test]
    fn branch_point_detected() {
        assert!(matches!(
            gamma0_hat(&[0.0], Energy::real(4.0)),
            Err(SmmError::BranchPoint { .. })
        ));
        assert!(gamma0_hat(&[0.25], Energy::real(1.5)).is_err());
        assert!(g1d(0, Complex64::new(-2.0, 1e-9)).is_err());
    }

    #[test]
    fn fiber_recurrence() {
        for w in [
            Complex64::new(5.0, 0.0),
            Complex64::new(2.1, -0.3),
            Complex64::new(-3.0, 0.01),
        ] {
            for x in -20i64..=20 {
                let lhs = g1d(x + 1, w).unwrap() + g1d(x - 1, w).unwrap() - w * g1d(x, w).unwrap();
                let rhs = if x == 0 { 1.0 } else { 0.0 };
                assert!((lhs - rhs).norm() < 1e-12, "w={w} x={x}");
            }
        }
        let r = (5.0 - 21f64.sqrt()) / 2.0;
        assert!((g1d(2, Complex64::new(5.0, 0.0)).unwrap().re + r * r / 21f64.sqrt()).abs() < 1e-15);
        let w = Complex64::new(1e6, 0.0);
        assert!((g1d(1, w).unwrap().re * w.re * w.re + 1.0).abs() < 1e-5);
    }

    #[test]
    fn image_formula_reproduces_half_symbol() {
        for w in [
            Complex64::new(5.0, 0.0),
            Complex64::new(2.5, 0.7),
            Complex64::new(-4.0, -1.0),
        ] {
            let images = g1d(0, w).unwrap() - g1d(2, w).unwrap();
            assert!((images + small_root(w).unwrap()).norm() < 1e-13);
            // the image construction vanishes on the layer x = -1
            for x2 in 0..6 {
                let v = g1d(-1 - x2, w).unwrap() - g1d(x2 + 1, w).unwrap();
                assert_eq!(v, Complex64::new(0.0, 0.0));
            }
        }
    }

    #[test]
    fn kernel_symmetries() {
        let z = Complex64::new(5.0, -0.7);
        let fib = FreeFibers::new(1, Energy(z), 256).unwrap();
        let fib_c = FreeFibers::new(1, Energy(z.conj()), 256).unwrap();
        for x in -3..=3 {
            let k = fib.layer_symbol(x).to_kernel();
            let kc = fib_c.layer_symbol(x).to_kernel();
            let km = fib.layer_symbol(-x).to_kernel();
            for n in -5..=5 {
                assert!((k.get(&[n]) - kc.get(&[n]).conj()).norm() < 1e-14);
                assert!((k.get(&[n]) - km.get(&[-n])).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn fft_kernel_matches_single_site() {
        let z = Energy::new(6.0, -0.2);
        let fib = FreeFibers::new(1, z, 512).unwrap();
        let k = fib.layer_symbol(2).to_kernel();
        for n in [-4i64, 0, 3, 7] {
            let direct = g0_full(&[n], 2, z, 512).unwrap();
            assert!((k.get(&[n]) - direct).norm() < 1e-13);
        }
        let fib2 = FreeFibers::new(2, z, 32).unwrap();
        let k2 = fib2.layer_symbol(1).to_kernel();
        let direct = g0_full(&[1, -2], 1, z, 32).unwrap();
        assert!((k2.get(&[1, -2]) - direct).norm() < 1e-13);
    }

    #[test]
    fn real_energy_gives_real_kernel() {
        let g = g0_full(&[0], 0, Energy::real(5.0), 4096).unwrap();
        assert!(g.im.abs() < 1e-12);
    }

    #[test]
    fn contraction_of_cayley_symbol() {
        let a = 0.8;
        let g = Complex64::new(0.0, -a);
        let c = (g + I) / (g - I);
        assert!((c.re - (a - 1.0) / (a + 1.0)).abs() < 1e-15 && c.im.abs() < 1e-15);

        let c = c_symbol(&[0.25], Energy::new(5.0, -1.0), 1.0, Geometry::FullSpace).unwrap();
        assert!(c.norm() < 1.0);

        let fib = FreeFibers::new(1, Energy::real(5.0), 2048).unwrap();
        let grid = fib.c_symbol(1.0, Geometry::FullSpace);
        assert!(grid.values().iter().all(|v| (v.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn grid_validation() {
        assert!(FreeFibers::new(1, Energy::real(5.0), 6).is_ok());
        assert!(FreeFibers::new(1, Energy::real(5.0), 7).is_err());
        assert!(FreeFibers::new(1, Energy::real(5.0), 2).is_err());
    }
}
