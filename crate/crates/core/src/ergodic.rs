//! Birkhoff sums of analytic observables along an irrational rotation.
//!
//! Observables are trigonometric polynomials `f(x) = Σ_{|j|≤J} f_j e^{2πijx}`
//! with a decay certificate `|f_j| ≤ C e^{−2πρ|j|}`. The deviation
//! `D_N(x) = Σ_{m<N} f(x + mα) − N f₀` is computed by direct (compensated)
//! summation and by the closed geometric sums
//! `Σ_{j≠0} f_j e^{2πijx} (1 − e^{2πijNα})/(1 − e^{2πijα})`.

use num_bigint::BigUint;
use num_complex::Complex64;
use num_traits::{One, ToPrimitive, Zero};
use serde::Serialize;
use std::f64::consts::{PI, TAU};
use std::str::FromStr;

use crate::diophantine::{Rotation, TmSequence};
use crate::error::{Result, SmmError};
use crate::io::fmt_float;

/// Below this `|1 − e^{2πijα}|` the geometric-sum path is flagged.
pub const SMALL_DIVISOR: f64 = 1e-14;

/// Above this length the direct path is skipped.
pub const DIRECT_LIMIT: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AnalyticObservable {
    j_max: usize,
    /// `f_{−J} … f_J`
    coeffs: Vec<Complex64>,
    rho: f64,
    certificate: f64,
}

impl AnalyticObservable {
    /// `coeffs[i]` is `f_{i−J}`; the length must be odd.
    pub fn new(coeffs: Vec<Complex64>, rho: f64) -> Result<Self> {
        if coeffs.len().is_multiple_of(2) || !(rho > 0.0) || coeffs.iter().any(|c| !c.is_finite()) {
            return Err(SmmError::InvalidParameter(
                "observable needs 2J+1 finite coefficients and rho > 0".into(),
            ));
        }
        let j_max = coeffs.len() / 2;
        let certificate = coeffs
            .iter()
            .enumerate()
            .map(|(i, c)| c.norm() * (TAU * rho * (i as f64 - j_max as f64).abs()).exp())
            .fold(0.0, f64::max);
        Ok(AnalyticObservable {
            j_max,
            coeffs,
            rho,
            certificate,
        })
    }

    /// `f_j = e^{−2πρ|j|}` for `|j| ≤ J`; the default test observable is `J = 40, ρ = 1`.
    pub fn exp_decay(j_max: usize, rho: f64) -> Result<Self> {
        let coeffs = (0..=2 * j_max)
            .map(|i| {
                let j = i as f64 - j_max as f64;
                Complex64::new((-TAU * rho * j.abs()).exp(), 0.0)
            })
            .collect();
        Self::new(coeffs, rho)
    }

    pub fn default_observable() -> Self {
        Self::exp_decay(40, 1.0).expect("valid default")
    }

    /// `e^{2πijx}` alone.
    pub fn pure_mode(j: i64, rho: f64) -> Result<Self> {
        let jm = j.unsigned_abs() as usize;
        let mut coeffs = vec![Complex64::zero(); 2 * jm + 1];
        coeffs[(j + jm as i64) as usize] = Complex64::one();
        Self::new(coeffs, rho)
    }

    pub fn constant(c: f64, rho: f64) -> Self {
        Self::new(vec![Complex64::new(c, 0.0)], rho).expect("valid constant")
    }

    pub fn j_max(&self) -> usize {
        self.j_max
    }
    pub fn rho(&self) -> f64 {
        self.rho
    }
    pub fn certificate(&self) -> f64 {
        self.certificate
    }
    pub fn mean(&self) -> Complex64 {
        self.coeffs[self.j_max]
    }

    pub fn coeff(&self, j: i64) -> Complex64 {
        let idx = j + self.j_max as i64;
        if idx < 0 || idx as usize >= self.coeffs.len() {
            Complex64::zero()
        } else {
            self.coeffs[idx as usize]
        }
    }

    /// Bound on the discarded tail `C e^{−2πρJ}/(1 − e^{−2πρ})` (times two sides).
    pub fn truncation_bound(&self) -> f64 {
        let r = (-TAU * self.rho).exp();
        2.0 * self.certificate * r.powi(self.j_max as i32 + 1) / (1.0 - r)
    }

    /// `f(x) − f₀`.
    pub fn eval_centered(&self, x: Complex64) -> Complex64 {
        let z = (Complex64::i() * TAU * x).exp();
        let zi = 1.0 / z;
        let mut pos = Complex64::zero();
        let mut neg = Complex64::zero();
        for j in (1..=self.j_max).rev() {
            pos = (pos + self.coeffs[self.j_max + j]) * z;
            neg = (neg + self.coeffs[self.j_max - j]) * zi;
        }
        pos + neg
    }

    pub fn eval(&self, x: Complex64) -> Complex64 {
        self.eval_centered(x) + self.mean()
    }
}

impl FromStr for AnalyticObservable {
    type Err = SmmError;

    /// `exp:J` (default decay, ρ = 1), `exp:J:rho`, `mode:j`, `const:c`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || SmmError::InvalidParameter(format!("cannot parse observable {s:?}"));
        let parts: Vec<&str> = s.split(':').collect();
        match parts.as_slice() {
            ["exp", j] => Self::exp_decay(j.parse().map_err(|_| bad())?, 1.0),
            ["exp", j, r] => Self::exp_decay(j.parse().map_err(|_| bad())?, r.parse().map_err(|_| bad())?),
            ["mode", j] => Self::pure_mode(j.parse().map_err(|_| bad())?, 1.0),
            ["const", c] => Ok(Self::constant(c.parse().map_err(|_| bad())?, 1.0)),
            _ => Err(bad()),
        }
    }
}

/// Neumaier-compensated complex accumulator.
#[derive(Debug, Default, Clone, Copy)]
struct Accumulator {
    re: (f64, f64),
    im: (f64, f64),
}

impl Accumulator {
    fn add_part(acc: &mut (f64, f64), v: f64) {
        let t = acc.0 + v;
        if acc.0.abs() >= v.abs() {
            acc.1 += (acc.0 - t) + v;
        } else {
            acc.1 += (v - t) + acc.0;
        }
        acc.0 = t;
    }
    fn add(&mut self, z: Complex64) {
        Self::add_part(&mut self.re, z.re);
        Self::add_part(&mut self.im, z.im);
    }
    fn total(&self) -> Complex64 {
        Complex64::new(self.re.0 + self.re.1, self.im.0 + self.im.1)
    }
}

/// `D_N(x)` by direct summation, with `{mα}` advanced in exact integers.
pub fn deviation_direct(f: &AnalyticObservable, rot: &Rotation, x: Complex64, n: u64) -> Complex64 {
    let mut acc = Accumulator::default();
    for_each_orbit_point(rot, n, |_, frac| acc.add(f.eval_centered(x + frac)));
    acc.total()
}

/// Calls `visit(m, {mα})` for `m = 0..n`.
fn for_each_orbit_point<F: FnMut(u64, f64)>(rot: &Rotation, n: u64, mut visit: F) {
    let q = rot.denominator().clone();
    let p = rot.numerator().clone();
    let step = rot.correction_per_step();
    let mut r = BigUint::zero();
    let qf = q.to_f64().unwrap_or(f64::INFINITY);
    let small = q.bits() <= 1000;
    for m in 0..n {
        let base = if small {
            r.to_f64().unwrap() / qf
        } else {
            let shift = q.bits() - 64;
            (&r >> shift).to_f64().unwrap() / (&q >> shift).to_f64().unwrap()
        };
        let v = base + m as f64 * step;
        visit(m, v - v.floor());
        r += &p;
        if r >= q {
            r -= &q;
        }
    }
}

/// `D_N(x)` from the closed geometric sums; `N` may be astronomically large.
pub fn deviation_formula(f: &AnalyticObservable, rot: &Rotation, x: Complex64, n: &BigUint) -> (Complex64, bool) {
    let alpha = rot.alpha();
    let n_alpha = rot.frac_mul(n);
    let mut small_divisor = false;
    let mut acc = Complex64::zero();
    for j in 1..=f.j_max as i64 {
        for jj in [j, -j] {
            let c = f.coeff(jj);
            if c == Complex64::zero() {
                continue;
            }
            let den = Complex64::one() - (Complex64::i() * TAU * jj as f64 * alpha).exp();
            if den.norm() < SMALL_DIVISOR {
                small_divisor = true;
            }
            let num = Complex64::one() - (Complex64::i() * TAU * jj as f64 * n_alpha).exp();
            acc += c * (Complex64::i() * TAU * jj as f64 * x).exp() * num / den;
        }
    }
    (acc, small_divisor)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Deviation {
    pub value: Complex64,
    pub direct: Option<Complex64>,
    pub formula: Complex64,
    /// `|direct − formula| / max(1, |formula|)` when both are available
    pub path_gap: Option<f64>,
    pub small_divisor: bool,
}

/// Both paths; the direct one only for `N ≤ DIRECT_LIMIT`.
pub fn birkhoff_deviation(f: &AnalyticObservable, rot: &Rotation, x: Complex64, n: u64) -> Result<Deviation> {
    if n == 0 {
        return Err(SmmError::InvalidParameter("N must be at least 1".into()));
    }
    if x.im.abs() > f.rho() / 2.0 + 1e-15 {
        return Err(SmmError::InvalidParameter(format!(
            "x = {x} lies outside the strip |Im x| <= rho/2"
        )));
    }
    let (formula, small_divisor) = deviation_formula(f, rot, x, &BigUint::from(n));
    let direct = (n <= DIRECT_LIMIT).then(|| deviation_direct(f, rot, x, n));
    let path_gap = direct.map(|d| (d - formula).norm() / formula.norm().max(1.0));
    Ok(Deviation {
        value: direct.unwrap_or(formula),
        direct,
        formula,
        path_gap,
        small_divisor,
    })
}

/// `x = i/n_real` on the real axis plus the same points at `Im x = ±height`.
pub fn strip_grid(n_real: usize, height: f64) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(3 * n_real);
    for s in [0.0, height, -height] {
        for i in 0..n_real {
            out.push(Complex64::new(i as f64 / n_real as f64, s));
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceRow {
    pub k: usize,
    pub n: String,
    pub sup_deviation: f64,
    pub strip_sup_deviation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceReport {
    pub rows: Vec<ConvergenceRow>,
    pub pass: bool,
    /// max over the last quarter of the rows
    pub tail_sup: f64,
    /// (#decreases − #increases)/(#steps) of the row maxima
    pub trend: f64,
    pub epsilon: f64,
    /// largest direct/formula disagreement seen
    pub max_path_gap: f64,
    /// `min_{1≤j≤J} ‖jα‖ e^{(ρ/4) j}`, measured instead of assumed
    pub small_divisor_constant: f64,
}

impl ConvergenceReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("k,N,sup_deviation,strip_sup_deviation\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.k,
                r.n,
                fmt_float(r.sup_deviation),
                fmt_float(r.strip_sup_deviation)
            ));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({ "pass": self.pass, "tail_sup": self.tail_sup, "trend": self.trend })
    }
}

fn trend_of(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let mut score = 0i64;
    for w in values.windows(2) {
        if w[1] < w[0] {
            score += 1;
        } else if w[1] > w[0] {
            score -= 1;
        }
    }
    score as f64 / (values.len() - 1) as f64
}

fn sup_over(f: &AnalyticObservable, rot: &Rotation, grid: &[Complex64], n: &BigUint, gap: &mut f64) -> (f64, f64) {
    let n_small = n.to_u64().filter(|&v| v <= 100_000);
    let mut sup_real: f64 = 0.0;
    let mut sup_strip: f64 = 0.0;
    for &x in grid {
        let (formula, _) = deviation_formula(f, rot, x, n);
        let v = match n_small {
            Some(nn) => {
                let d = deviation_direct(f, rot, x, nn);
                *gap = gap.max((d - formula).norm() / formula.norm().max(1.0));
                d.norm()
            }
            None => formula.norm(),
        };
        if x.im == 0.0 {
            sup_real = sup_real.max(v);
        } else {
            sup_strip = sup_strip.max(v);
        }
    }
    (sup_real, sup_strip)
}

/// Empirical `min_{1≤j≤J} ‖jα‖ e^{(ρ/4)j}`.
pub fn small_divisor_constant(rot: &Rotation, rho: f64, j_max: usize) -> f64 {
    (1..=j_max as u64)
        .map(|j| rot.dist_mul(&BigUint::from(j)) * (rho / 4.0 * j as f64).exp())
        .fold(f64::INFINITY, f64::min)
}

/// Sup-deviation table along `j_k`; PASS when the tail sup is below `epsilon`.
pub fn verify_lemma_le(
    f: &AnalyticObservable,
    rot: &Rotation,
    j_sequence: &[BigUint],
    grid: &[Complex64],
    epsilon: f64,
) -> ConvergenceReport {
    let mut gap = 0.0;
    let rows: Vec<ConvergenceRow> = j_sequence
        .iter()
        .enumerate()
        .map(|(k, n)| {
            let (a, b) = sup_over(f, rot, grid, n, &mut gap);
            ConvergenceRow {
                k: k + 1,
                n: n.to_string(),
                sup_deviation: a,
                strip_sup_deviation: b,
            }
        })
        .collect();
    let maxima: Vec<f64> = rows
        .iter()
        .map(|r| r.sup_deviation.max(r.strip_sup_deviation))
        .collect();
    let tail_len = maxima.len().div_ceil(4).max(1).min(maxima.len());
    let tail_sup = maxima[maxima.len() - tail_len..].iter().cloned().fold(0.0, f64::max);
    ConvergenceReport {
        pass: !rows.is_empty() && tail_sup < epsilon,
        tail_sup,
        trend: trend_of(&maxima),
        epsilon,
        max_path_gap: gap,
        small_divisor_constant: small_divisor_constant(rot, f.rho(), f.j_max()),
        rows,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Le1Row {
    pub k: usize,
    pub m: u64,
    pub t: String,
    pub sup_tm: f64,
    pub generic_n: String,
    pub sup_generic: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Le1Report {
    pub rows: Vec<Le1Row>,
    /// per-`k` maxima along `tₘ`
    pub per_k_tm: Vec<f64>,
    /// per-`k` maxima along the generic comparison lengths
    pub per_k_generic: Vec<f64>,
    /// partial sums `S_J` of `Σ_{0<|j|≤J} sup_m |(1−e^{2πij tₘ α})/(1−e^{2πijα})| |f_j| e^{πρ̄|j|}`
    pub appendix_partial_sums: Vec<f64>,
    /// the same sum per materialized `m`, for the boundedness check across `m`
    pub appendix_per_term: Vec<f64>,
    pub tm_decays: bool,
    pub generic_decays: bool,
    pub appendix_bounded: bool,
    pub pass: bool,
}

/// Deviations along `tₘ` and along `tₘ + max(1, ⌊q_{n_k}/3⌋)`.
pub fn verify_lemma_le1(f: &AnalyticObservable, rot: &Rotation, tm: &TmSequence, grid: &[Complex64]) -> Le1Report {
    let mut gap = 0.0;
    let n_k = tm.q_nk.len();
    let mut rows = Vec::new();
    let mut per_k_tm = vec![0.0f64; n_k];
    let mut per_k_generic = vec![0.0f64; n_k];
    for (k, m, t) in tm.terms() {
        let q: BigUint = tm.q_nk[k].parse().unwrap();
        let offset = (&q / 3u32).max(BigUint::one());
        let generic = &t + offset;
        let (a, b) = sup_over(f, rot, grid, &t, &mut gap);
        let (c, d) = sup_over(f, rot, grid, &generic, &mut gap);
        per_k_tm[k] = per_k_tm[k].max(a.max(b));
        per_k_generic[k] = per_k_generic[k].max(c.max(d));
        rows.push(Le1Row {
            k: k + 1,
            m,
            t: t.to_string(),
            sup_tm: a.max(b),
            generic_n: generic.to_string(),
            sup_generic: c.max(d),
        });
    }

    let alpha = rot.alpha();
    let terms = tm.terms();
    let weight = |j: i64| f.coeff(j).norm() * (PI * tm.rho_bar * j.abs() as f64).exp();
    let ratio = |j: i64, t: &BigUint| {
        let ta = rot.frac_mul(t);
        let num = Complex64::one() - (Complex64::i() * TAU * j as f64 * ta).exp();
        let den = Complex64::one() - (Complex64::i() * TAU * j as f64 * alpha).exp();
        num.norm() / den.norm()
    };
    let mut partial = Vec::new();
    let mut s = 0.0;
    for j in 1..=f.j_max() as i64 {
        for jj in [j, -j] {
            let sup = terms.iter().map(|(_, _, t)| ratio(jj, t)).fold(0.0, f64::max);
            s += sup * weight(jj);
        }
        partial.push(s);
    }
    let per_term: Vec<f64> = terms
        .iter()
        .map(|(_, _, t)| {
            (1..=f.j_max() as i64)
                .flat_map(|j| [j, -j])
                .map(|j| ratio(j, t) * weight(j))
                .sum()
        })
        .collect();

    let first = per_k_tm.first().copied().unwrap_or(0.0);
    let last = per_k_tm.last().copied().unwrap_or(0.0);
    let non_increasing = per_k_tm.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12));
    let tm_decays = n_k >= 2 && non_increasing && last < 1e-3 * first;
    let g_first = per_k_generic.first().copied().unwrap_or(0.0);
    let g_last = per_k_generic.last().copied().unwrap_or(0.0);
    let generic_decays = g_last < 1e-3 * g_first;
    let appendix_bounded = match partial.as_slice() {
        [.., a, b] => b.is_finite() && (b - a) <= 1e-8 * b.abs().max(1e-300),
        [b] => b.is_finite(),
        [] => true,
    };
    Le1Report {
        pass: tm_decays && !generic_decays && appendix_bounded,
        rows,
        per_k_tm,
        per_k_generic,
        appendix_partial_sums: partial,
        appendix_per_term: per_term,
        tm_decays,
        generic_decays,
        appendix_bounded,
    }
}
