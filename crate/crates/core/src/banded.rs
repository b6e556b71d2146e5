//! Banded linear algebra: symmetric inertia counts and LU with partial pivoting.
//!
//! Lattice operators ordered with the `x` coordinate slowest have half bandwidth
//! `(2L+1)^d`, small next to the dimension, so banded factorizations beat dense
//! ones by a wide margin.

use num_complex::Complex64;
use std::ops::{AddAssign, Div, Mul, Neg, Sub, SubAssign};

use crate::error::{Result, SmmError};

/// Field operations needed by [`BandLu`].
pub trait Scalar:
    Copy
    + Default
    + PartialEq
    + AddAssign
    + SubAssign
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    fn modulus(self) -> f64;
    fn from_real(x: f64) -> Self;
    fn conj(self) -> Self;
}

impl Scalar for f64 {
    fn modulus(self) -> f64 {
        self.abs()
    }
    fn from_real(x: f64) -> Self {
        x
    }
    fn conj(self) -> Self {
        self
    }
}

impl Scalar for Complex64 {
    fn modulus(self) -> f64 {
        self.norm()
    }
    fn from_real(x: f64) -> Self {
        Complex64::new(x, 0.0)
    }
    fn conj(self) -> Self {
        Complex64::conj(&self)
    }
}

/// Real symmetric matrix with `b` sub-diagonals, lower triangle stored row by row.
#[derive(Debug, Clone, PartialEq)]
pub struct SymBand {
    n: usize,
    b: usize,
    // row i holds columns i-b ..= i at offsets 0 ..= b
    data: Vec<f64>,
}

impl SymBand {
    pub fn zeros(n: usize, b: usize) -> Self {
        SymBand {
            n,
            b,
            data: vec![0.0; n * (b + 1)],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn bandwidth(&self) -> usize {
        self.b
    }

    fn slot(&self, i: usize, j: usize) -> Option<usize> {
        let (i, j) = if i >= j { (i, j) } else { (j, i) };
        if i - j > self.b {
            None
        } else {
            Some(i * (self.b + 1) + self.b - (i - j))
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.slot(i, j).map_or(0.0, |s| self.data[s])
    }

    /// Sets `A[i][j] = A[j][i] = v`. Panics outside the band.
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside the band");
        self.data[s] = v;
    }

    pub fn add(&mut self, i: usize, j: usize, v: f64) {
        let s = self.slot(i, j).expect("entry outside the band");
        self.data[s] += v;
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    /// Gershgorin bounds on the spectrum.
    pub fn gershgorin(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.n {
            let lo_j = i.saturating_sub(self.b);
            let hi_j = (i + self.b).min(self.n - 1);
            let r: f64 = (lo_j..=hi_j).filter(|&j| j != i).map(|j| self.get(i, j).abs()).sum();
            let d = self.get(i, i);
            lo = lo.min(d - r);
            hi = hi.max(d + r);
        }
        (lo, hi)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        for i in 0..self.n {
            let row = &self.data[i * (self.b + 1)..(i + 1) * (self.b + 1)];
            let j0 = i.saturating_sub(self.b);
            for j in j0..i {
                let a = row[self.b - (i - j)];
                y[i] += a * x[j];
                y[j] += a * x[i];
            }
            y[i] += row[self.b] * x[i];
        }
        y
    }

    /// Number of eigenvalues strictly below `sigma`, from the inertia of the
    /// unpivoted `LDLᵀ` factorization of `A − σI` (Sylvester's law).
    pub fn count_below(&self, sigma: f64) -> usize {
        let n = self.n;
        let b = self.b;
        let w = b + 1;
        let scale = self.gershgorin_scale();
        let tiny = f64::EPSILON * scale;
        // l[i*w + (b - (i-j))] = L[i][j] for j < i; dd[i] = D[i]
        let mut l = vec![0.0; n * w];
        let mut dd = vec![0.0; n];
        // scratch: ld[k] = L[i][k] * D[k]
        let mut ld = vec![0.0; w];
        let mut negatives = 0;
        for i in 0..n {
            let j0 = i.saturating_sub(b);
            let base_i = i * w;
            for j in j0..i {
                let mut s = self.data[base_i + b - (i - j)];
                let k0 = j0.max(j.saturating_sub(b));
                let base_j = j * w;
                for k in k0..j {
                    s -= ld[k - j0] * l[base_j + b - (j - k)];
                }
                let lij = s / dd[j];
                l[base_i + b - (i - j)] = lij;
                ld[j - j0] = lij * dd[j];
            }
            let mut di = self.data[base_i + b] - sigma;
            for j in j0..i {
                di -= l[base_i + b - (i - j)] * ld[j - j0];
            }
            if di.abs() < tiny {
                di = -tiny;
            }
            if di < 0.0 {
                negatives += 1;
            }
            dd[i] = di;
        }
        negatives
    }

    fn gershgorin_scale(&self) -> f64 {
        let (lo, hi) = self.gershgorin();
        lo.abs().max(hi.abs()).max(1.0)
    }

    /// `A − σI` as a general band matrix.
    pub fn shifted(&self, sigma: f64) -> BandMatrix<f64> {
        let mut m = BandMatrix::zeros(self.n, self.b, self.b);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.b);
            for j in j0..=i {
                let v = self.get(i, j);
                m.set(i, j, if i == j { v - sigma } else { v });
                if i != j {
                    m.set(j, i, v);
                }
            }
        }
        m
    }

    pub fn to_complex_shifted(&self, z: Complex64) -> BandMatrix<Complex64> {
        let mut m = BandMatrix::zeros(self.n, self.b, self.b);
        for i in 0..self.n {
            let j0 = i.saturating_sub(self.b);
            for j in j0..=i {
                let v = Complex64::new(self.get(i, j), 0.0);
                if i == j {
                    m.set(i, i, v - z);
                } else {
                    m.set(i, j, v);
                    m.set(j, i, v);
                }
            }
        }
        m
    }
}

/// General band matrix with `kl` sub- and `ku` super-diagonals. Rows carry room
/// for the extra `kl` super-diagonals created by partial pivoting.
#[derive(Debug, Clone)]
pub struct BandMatrix<T> {
    n: usize,
    kl: usize,
    ku: usize,
    width: usize,
    data: Vec<T>,
}

impl<T: Scalar> BandMatrix<T> {
    pub fn zeros(n: usize, kl: usize, ku: usize) -> Self {
        let width = 2 * kl + ku + 1;
        BandMatrix {
            n,
            kl,
            ku,
            width,
            data: vec![T::default(); n * width],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    #[inline]
    fn idx(&self, i: usize, j: usize) -> usize {
        // row i covers columns i-kl ..= i+kl+ku
        i * self.width + (j + self.kl - i)
    }

    pub fn get(&self, i: usize, j: usize) -> T {
        if j + self.kl < i || j > i + self.kl + self.ku {
            T::default()
        } else {
            self.data[self.idx(i, j)]
        }
    }

    /// Panics outside the declared band.
    pub fn set(&mut self, i: usize, j: usize, v: T) {
        assert!(j + self.kl >= i && j <= i + self.ku, "entry outside the band");
        let k = self.idx(i, j);
        self.data[k] = v;
    }

    pub fn matvec(&self, x: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let j0 = i.saturating_sub(self.kl);
                let j1 = (i + self.ku).min(self.n - 1);
                let mut s = T::default();
                for j in j0..=j1 {
                    s += self.data[self.idx(i, j)] * x[j];
                }
                s
            })
            .collect()
    }

    /// Gaussian elimination with partial pivoting, in place.
    pub fn factor(mut self) -> Result<BandLu<T>> {
        let n = self.n;
        let kl = self.kl;
        let reach = kl + self.ku;
        let mut piv = vec![0usize; n];
        let mut max_pivot: f64 = 0.0;
        let mut min_pivot = f64::INFINITY;
        for k in 0..n {
            let last_row = (k + kl).min(n - 1);
            let mut p = k;
            let mut best = self.data[self.idx(k, k)].modulus();
            for i in k + 1..=last_row {
                let m = self.data[self.idx(i, k)].modulus();
                if m > best {
                    best = m;
                    p = i;
                }
            }
            piv[k] = p;
            if best == 0.0 {
                return Err(SmmError::SolverFailure(format!(
                    "band LU: exactly singular at column {k}"
                )));
            }
            max_pivot = max_pivot.max(best);
            min_pivot = min_pivot.min(best);
            let last_col = (k + reach).min(n - 1);
            if p != k {
                for c in k..=last_col {
                    let a = self.idx(k, c);
                    let b = self.idx(p, c);
                    self.data.swap(a, b);
                }
            }
            let pivot = self.data[self.idx(k, k)];
            for i in k + 1..=last_row {
                let ik = self.idx(i, k);
                let m = self.data[ik] / pivot;
                self.data[ik] = m;
                if m == T::default() {
                    continue;
                }
                let row_k = self.idx(k, k + 1);
                let row_i = self.idx(i, k + 1);
                for off in 0..last_col - k {
                    let u = self.data[row_k + off];
                    self.data[row_i + off] -= m * u;
                }
            }
        }
        Ok(BandLu {
            m: self,
            piv,
            pivot_ratio: min_pivot / max_pivot,
        })
    }
}

/// Packed `PA = LU` factors of a band matrix.
#[derive(Debug, Clone)]
pub struct BandLu<T> {
    m: BandMatrix<T>,
    piv: Vec<usize>,
    pivot_ratio: f64,
}

impl<T: Scalar> BandLu<T> {
    /// Smallest over largest pivot modulus, a cheap conditioning hint.
    pub fn pivot_ratio(&self) -> f64 {
        self.pivot_ratio
    }

    pub fn solve_in_place(&self, b: &mut [T]) {
        let m = &self.m;
        let n = m.n;
        let reach = m.kl + m.ku;
        for k in 0..n {
            let p = self.piv[k];
            if p != k {
                b.swap(k, p);
            }
            let bk = b[k];
            if bk == T::default() {
                continue;
            }
            for i in k + 1..=(k + m.kl).min(n - 1) {
                b[i] -= m.data[m.idx(i, k)] * bk;
            }
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            let row = m.idx(i, i);
            for j in i + 1..=(i + reach).min(n - 1) {
                s -= m.data[row + (j - i)] * b[j];
            }
            b[i] = s / m.data[row];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
