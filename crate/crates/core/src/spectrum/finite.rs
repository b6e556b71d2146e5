//! Box truncations of `H` and `H⁺` with Dirichlet walls, and a window eigensolver.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;
use std::io::Write;

use crate::banded::SymBand;
use crate::error::{Result, SmmError};
use crate::model::{c_d, cube, cube_index, l1, Geometry, LatticeSite, ModelParams};
use crate::stats::decay_fit;

/// Dimension up to which eigenpairs come from a dense symmetric solver.
pub const DENSE_LIMIT: usize = 1200;
/// `|v(n)|` above which a box site is treated as sitting on a pole.
pub const POLE_LIMIT: f64 = 1e10;
/// Minimal gap between an eigen window and the free band.
pub const INNER_MARGIN: f64 = 0.2;

/// Truncated operator on `‖n‖∞ ≤ L`, `x ∈ [−L, L]` (full) or `[0, L]` (half).
/// Rows are ordered with `x` slowest and `n` in [`cube`] order.
#[derive(Debug, Clone)]
pub struct FiniteVolumeOperator {
    params: Option<ModelParams>,
    d: usize,
    l: i64,
    geometry: Geometry,
    matrix: SymBand,
}

impl FiniteVolumeOperator {
    pub fn params(&self) -> Option<&ModelParams> {
        self.params.as_ref()
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn radius(&self) -> i64 {
        self.l
    }

    pub fn geometry(&self) -> Geometry {
        self.geometry
    }

    pub fn matrix(&self) -> &SymBand {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.matrix.dim()
    }

    pub fn x_min(&self) -> i64 {
        match self.geometry {
            Geometry::FullSpace => -self.l,
            Geometry::HalfSpace => 0,
        }
    }

    pub fn layer_len(&self) -> usize {
        (2 * self.l as usize + 1).pow(self.d as u32)
    }

    pub fn index(&self, n: &[i64], x: i64) -> Option<usize> {
        if x < self.x_min() || x > self.l || n.iter().any(|c| c.abs() > self.l) {
            return None;
        }
        Some((x - self.x_min()) as usize * self.layer_len() + cube_index(n, self.l))
    }

    pub fn site(&self, i: usize) -> LatticeSite {
        let layer = self.layer_len();
        let x = (i / layer) as i64 + self.x_min();
        let side = 2 * self.l + 1;
        let mut rest = (i % layer) as i64;
        let mut n = vec![0i64; self.d];
        for j in (0..self.d).rev() {
            n[j] = rest % side - self.l;
            rest /= side;
        }
        LatticeSite::new(n, x)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let m = self.dim();
        let b = self.matrix.bandwidth();
        DMatrix::from_fn(
            m,
            m,
            |i, j| if i.abs_diff(j) <= b { self.matrix.get(i, j) } else { 0.0 },
        )
    }

    /// Nonzero entries, both triangles, row-major.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        let m = self.dim();
        let b = self.matrix.bandwidth();
        let mut out = Vec::new();
        for i in 0..m {
            for j in i.saturating_sub(b)..=(i + b).min(m - 1) {
                let v = self.matrix.get(i, j);
                if v != 0.0 {
                    out.push((i, j, v));
                }
            }
        }
        out
    }

    pub fn header_json(&self) -> serde_json::Value {
        let p = self.params.as_ref();
        serde_json::json!({
            "dim": self.dim(),
            "L": self.l,
            "d": self.d,
            "geometry": self.geometry,
            "lambda": p.map_or(0.0, |p| p.lambda()),
            "alpha": p.map(|p| p.alpha().to_vec()),
            "theta": p.map(|p| p.theta()),
            "nnz": self.triplets().len(),
            "ordering": "x slowest, n lexicographic with last coordinate fastest",
        })
    }

    /// `row col value` lines.
    pub fn write_triplets<W: Write>(&self, mut out: W) -> Result<()> {
        for (i, j, v) in self.triplets() {
            writeln!(out, "{i} {j} {}", crate::io::fmt_float(v))?;
        }
        Ok(())
    }
}

fn assemble(params: Option<&ModelParams>, d: usize, l: i64, geometry: Geometry) -> Result<FiniteVolumeOperator> {
    if l < 1 {
        return Err(SmmError::InvalidParameter("box radius must be at least 1".into()));
    }
    let side = 2 * l as usize + 1;
    let layer = side.pow(d as u32);
    let x_min = if geometry == Geometry::HalfSpace { 0 } else { -l };
    let layers = (l - x_min + 1) as usize;
    let mut matrix = SymBand::zeros(layer * layers, layer);
    let sites = cube(d, l);
    let mut surface = vec![0.0; layer];
    if let Some(p) = params {
        for (k, n) in sites.iter().enumerate() {
            let v = p.surface_function(n)?;
            if v.abs() > POLE_LIMIT {
                return Err(SmmError::PhaseSingularity {
                    site: n.clone(),
                    distance: (p.phase(n) - 0.5).abs(),
                });
            }
            surface[k] = p.lambda() * v;
        }
    }
    let strides: Vec<usize> = (0..d).map(|j| side.pow((d - 1 - j) as u32)).collect();
    for xi in 0..layers {
        let x = xi as i64 + x_min;
        for (k, n) in sites.iter().enumerate() {
            let i = xi * layer + k;
            if x == 0 {
                matrix.set(i, i, surface[k]);
            }
            if xi + 1 < layers {
                matrix.set(i + layer, i, 1.0);
            }
            for j in 0..d {
                if n[j] < l {
                    matrix.set(i + strides[j], i, 1.0);
                }
            }
        }
    }
    Ok(FiniteVolumeOperator {
        params: params.cloned(),
        d,
        l,
        geometry,
        matrix,
    })
}

/// Box truncation of `H` (or `H⁺`, by the geometry flag).
pub fn build_finite(params: &ModelParams, l: i64) -> Result<FiniteVolumeOperator> {
    assemble(Some(params), params.d(), l, params.geometry())
}

/// Box truncation of the free operator (`λ = 0`).
pub fn build_free(d: usize, l: i64, geometry: Geometry) -> Result<FiniteVolumeOperator> {
    if d == 0 {
        return Err(SmmError::InvalidParameter("d must be at least 1".into()));
    }
    assemble(None, d, l, geometry)
}

/// Eigenvalue, normalized eigenvector and localization statistics.
#[derive(Debug, Clone, Serialize)]
pub struct EigenPair {
    pub energy: f64,
    #[serde(skip)]
    pub vector: Vec<f64>,
    pub center_n: Vec<i64>,
    pub center_x: i64,
    /// squared mass on the `x = 0` layer
    pub surface_mass: f64,
    /// slope of `ln|ψ|` against `‖n − n₀‖₁` on the centre layer
    pub n_slope: f64,
    /// slope of `ln|ψ|` against `|x − x₀|` on the centre column
    pub x_slope: f64,
}

fn check_window(d: usize, lo: f64, hi: f64) -> Result<()> {
    let edge = c_d(d) + INNER_MARGIN;
    if !(hi > lo) || !(lo >= edge - 1e-12 || hi <= -edge + 1e-12) {
        return Err(SmmError::InvalidParameter(format!(
            "eigen window ({lo}, {hi}) must avoid [-{edge}, {edge}]"
        )));
    }
    Ok(())
}

fn isolate(m: &SymBand, a: f64, b: f64, ca: usize, cb: usize, tol: f64, out: &mut Vec<f64>) {
    if cb <= ca {
        return;
    }
    let mid = 0.5 * (a + b);
    if b - a < tol {
        out.extend(std::iter::repeat_n(mid, cb - ca));
        return;
    }
    let cm = m.count_below(mid);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    rayon::join(
        || isolate(m, a, mid, ca, cm, tol, &mut left),
        || isolate(m, mid, b, cm, cb, tol, &mut right),
    );
    out.extend(left);
    out.extend(right);
}

/// Eigenvalues in `[lo, hi)` by Sturm-count bisection to width `tol`.
pub fn sturm_eigenvalues(m: &SymBand, lo: f64, hi: f64, tol: f64) -> Vec<f64> {
    let (ca, cb) = rayon::join(|| m.count_below(lo), || m.count_below(hi));
    let mut out = Vec::new();
    isolate(m, lo, hi, ca, cb, tol, &mut out);
    out
}

fn normalize(v: &mut [f64]) -> f64 {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

fn inverse_iteration(m: &SymBand, sigma: f64, previous: &[Vec<f64>]) -> Result<(f64, Vec<f64>)> {
    let scale = {
        let (a, b) = m.gershgorin();
        a.abs().max(b.abs()).max(1.0)
    };
    let mut shift = sigma;
    let lu = loop {
        match m.shifted(shift).factor() {
            Ok(lu) => break lu,
            Err(_) if (shift - sigma).abs() < 1e-6 * scale => shift += 1e-13 * scale,
            Err(e) => return Err(e),
        }
    };
    let n = m.dim();
    let mut v: Vec<f64> = (0..n).map(|i| 1.0 + ((i * 7919) % 101) as f64 / 101.0).collect();
    normalize(&mut v);
    for _ in 0..6 {
        lu.solve_in_place(&mut v);
        for p in previous {
            let dot: f64 = p.iter().zip(&v).map(|(a, b)| a * b).sum();
            v.iter_mut().zip(p).for_each(|(x, y)| *x -= dot * y);
        }
        if normalize(&mut v) == 0.0 {
            return Err(SmmError::SolverFailure("inverse iteration collapsed".into()));
        }
    }
    let av = m.matvec(&v);
    let rq: f64 = av.iter().zip(&v).map(|(a, b)| a * b).sum();
    let res = av.iter().zip(&v).map(|(a, b)| (a - rq * b).powi(2)).sum::<f64>().sqrt();
    if res > 1e-6 * scale {
        return Err(SmmError::SolverFailure(format!(
            "inverse iteration at {sigma} did not converge (residual {res:e})"
        )));
    }
    Ok((rq, v))
}

fn describe(op: &FiniteVolumeOperator, energy: f64, vector: Vec<f64>) -> EigenPair {
    let (imax, _) = vector
        .iter()
        .enumerate()
        .fold((0, 0.0), |acc, (i, v)| if v.abs() > acc.1 { (i, v.abs()) } else { acc });
    let center = op.site(imax);
    let peak = vector[imax].abs();
    let floor = 1e-13 * peak;
    let layer = op.layer_len();
    let total: f64 = vector.iter().map(|v| v * v).sum();
    let surface_mass = match op.index(&vec![0; op.d], 0) {
        Some(_) => {
            let start = (0 - op.x_min()) as usize * layer;
            vector[start..start + layer].iter().map(|v| v * v).sum::<f64>() / total
        }
        None => 0.0,
    };
    let mut along_n = Vec::new();
    for n in cube(op.d, op.l) {
        let diff: Vec<i64> = n.iter().zip(&center.n).map(|(a, b)| a - b).collect();
        let i = op.index(&n, center.x).unwrap();
        along_n.push((l1(&diff) as f64, vector[i]));
    }
    let mut along_x = Vec::new();
    for x in op.x_min()..=op.l {
        let i = op.index(&center.n, x).unwrap();
        along_x.push(((x - center.x).abs() as f64, vector[i]));
    }
    let slope = |s: &[(f64, f64)]| decay_fit(s, floor).map_or(f64::NAN, |f| f.slope);
    EigenPair {
        energy,
        n_slope: slope(&along_n),
        x_slope: slope(&along_x),
        center_n: center.n,
        center_x: center.x,
        surface_mass,
        vector,
    }
}

/// Energy and unnormalized eigenvector.
type RawPair = (f64, Vec<f64>);

/// Eigenpairs with energy in `(lo, hi)`, sorted by energy.
pub fn eig_window(op: &FiniteVolumeOperator, lo: f64, hi: f64) -> Result<Vec<EigenPair>> {
    check_window(op.d, lo, hi)?;
    let mut pairs: Vec<RawPair> = Vec::new();
    if op.dim() <= DENSE_LIMIT {
        let eig = op.to_dense().symmetric_eigen();
        for (k, &e) in eig.eigenvalues.iter().enumerate() {
            if e > lo && e < hi {
                pairs.push((e, eig.eigenvectors.column(k).iter().cloned().collect()));
            }
        }
    } else {
        let estimates = sturm_eigenvalues(&op.matrix, lo, hi, 1e-7);
        // clusters closer than the bracket share a deflation list
        let mut groups: Vec<Vec<f64>> = Vec::new();
        for e in estimates {
            match groups.last_mut() {
                Some(g) if e - g.last().unwrap() < 1e-6 => g.push(e),
                _ => groups.push(vec![e]),
            }
        }
        let solved: Vec<Result<Vec<RawPair>>> = groups
            .par_iter()
            .map(|g| {
                let mut found: Vec<RawPair> = Vec::new();
                for &e in g {
                    let prev: Vec<Vec<f64>> = found.iter().map(|p| p.1.clone()).collect();
                    found.push(inverse_iteration(&op.matrix, e, &prev)?);
                }
                Ok(found)
            })
            .collect();
        for s in solved {
            pairs.extend(s?);
        }
        pairs.retain(|(e, _)| *e > lo && *e < hi);
    }
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    Ok(pairs
        .into_par_iter()
        .map(|(e, mut v)| {
            normalize(&mut v);
            describe(op, e, v)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOLDEN: f64 = 0.618_033_988_749_894_9;

    #[test]
    fn small_box_entries() {
        let p = ModelParams::full_1d(1.0, GOLDEN, 0.0).unwrap();
        let op = build_finite(&p, 2).unwrap();
        assert_eq!(op.dim(), 25);
        let a = op.to_dense();
        assert_eq!(a, a.transpose());
        for i in 0..25 {
            let si = op.site(i);
            assert_eq!(op.index(&si.n, si.x), Some(i));
            for j in 0..25 {
                let sj = op.site(j);
                let dist = (si.n[0] - sj.n[0]).abs() + (si.x - sj.x).abs();
                let expect = if i == j {
                    if si.x == 0 {
                        (std::f64::consts::PI * p.phase(&si.n)).tan()
                    } else {
                        0.0
                    }
                } else if dist == 1 {
                    1.0
                } else {
                    0.0
                };
                assert_eq!(a[(i, j)], expect, "entry ({i},{j})");
            }
        }
        // n = 1 carries tan π·golden
        let k = op.index(&[1], 0).unwrap();
        assert!((a[(k, k)] - (std::f64::consts::PI * GOLDEN).tan()).abs() < 1e-14);
    }

    #[test]
    fn half_space_is_a_restriction() {
        let p = ModelParams::full_1d(1.3, GOLDEN, 0.2).unwrap();
        let full = build_finite(&p, 3).unwrap();
        let half = build_finite(&p.with_geometry(Geometry::HalfSpace), 3).unwrap();
        assert_eq!(half.dim(), 7 * 4);
        for i in 0..half.dim() {
            for j in 0..half.dim() {
                let (si, sj) = (half.site(i), half.site(j));
                let fi = full.index(&si.n, si.x).unwrap();
                let fj = full.index(&sj.n, sj.x).unwrap();
                assert_eq!(half.matrix().get(i, j), full.matrix().get(fi, fj));
            }
        }
    }

    #[test]
    fn free_box_stays_in_band() {
        for geometry in [Geometry::FullSpace, Geometry::HalfSpace] {
            let op = build_free(1, 10, geometry).unwrap();
            let eig = op.to_dense().symmetric_eigen();
            assert!(eig.eigenvalues.iter().all(|e| e.abs() < 4.0));
            assert!(eig_window(&op, 4.2, 8.0).unwrap().is_empty());
        }
        let op = build_free(2, 3, Geometry::FullSpace).unwrap();
        let eig = op.to_dense().symmetric_eigen();
        assert!(eig.eigenvalues.iter().all(|e| e.abs() < 6.0));
    }

    #[test]
    fn pole_in_box_is_rejected() {
        let p = ModelParams::full_1d(1.0, 0.25, 0.25).unwrap();
        assert!(matches!(build_finite(&p, 2), Err(SmmError::PhaseSingularity { .. })));
    }

    #[test]
    fn window_must_avoid_band() {
        let op = build_free(1, 3, Geometry::FullSpace).unwrap();
        assert!(eig_window(&op, 4.1, 8.0).is_err());
        assert!(eig_window(&op, -3.0, 5.0).is_err());
        assert!(eig_window(&op, -8.0, -4.2).is_ok());
    }

    #[test]
    fn banded_path_matches_dense() {
        let p = ModelParams::full_1d(1.0, GOLDEN, 0.0).unwrap();
        let op = build_finite(&p, 18).unwrap();
        assert!(op.dim() > DENSE_LIMIT);
        let banded = eig_window(&op, 4.2, 8.0).unwrap();
        let eig = op.to_dense().symmetric_eigen();
        let mut dense: Vec<f64> = eig
            .eigenvalues
            .iter()
            .cloned()
            .filter(|e| *e > 4.2 && *e < 8.0)
            .collect();
        dense.sort_by(f64::total_cmp);
        assert_eq!(banded.len(), dense.len());
        for (b, d) in banded.iter().zip(&dense) {
            assert!((b.energy - d).abs() < 1e-10, "{} vs {}", b.energy, d);
            let av = op.matrix().matvec(&b.vector);
            let r: f64 = av
                .iter()
                .zip(&b.vector)
                .map(|(a, v)| (a - b.energy * v).powi(2))
                .sum::<f64>()
                .sqrt();
            assert!(r < 1e-9);
        }
    }

    #[test]
    fn triplets_round_trip() {
        let p = ModelParams::full_1d(0.7, GOLDEN, 0.1).unwrap();
        let op = build_finite(&p, 2).unwrap();
        let mut buf = Vec::new();
        op.write_triplets(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let dense = op.to_dense();
        let mut count = 0;
        for line in text.lines() {
            let f: Vec<&str> = line.split_whitespace().collect();
            let (i, j, v): (usize, usize, f64) = (f[0].parse().unwrap(), f[1].parse().unwrap(), f[2].parse().unwrap());
            assert!((dense[(i, j)] - v).abs() <= 1e-12 * v.abs());
            count += 1;
        }
        assert_eq!(count, dense.iter().filter(|v| **v != 0.0).count());
        assert_eq!(op.header_json()["nnz"], count);
    }
}
