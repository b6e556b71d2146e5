//! Continued fractions, best approximation, the growth index `β(α)` and the
//! `tₘ` sequences used for Liouville frequencies.
//!
//! Convention: `α = [0; a₁, a₂, …]`, `p₀ = 0, q₀ = 1, p₁ = 1, q₁ = a₁`, so the
//! golden mean has `q₁, q₂, … = 1, 2, 3, 5, …`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::error::{Result, SmmError};

/// Default cap on the bit length of a single exact partial quotient.
pub const DEFAULT_BUDGET_BITS: u64 = 4096;

/// Depth used when none is requested.
pub const DEFAULT_CF_DEPTH: usize = 30;

/// Exact or float description of a frequency in `(0, 1)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AlphaDescriptor {
    /// `(√5 − 1)/2`
    Golden,
    /// `√2 − 1`
    Silver,
    /// `(p + √disc)/den`; `disc` must not be a perfect square.
    Quadratic { p: i64, disc: u64, den: i64 },
    /// Explicit quotients `a₁ a₂ …`; a non-empty `period` repeats forever,
    /// an empty one makes the number rational.
    Quotients { prefix: Vec<u64>, period: Vec<u64> },
    /// `seed` quotients, then `a_{n+1} = max(1, ⌊e^{β qₙ}/qₙ⌋)`.
    Beta { beta: f64, seed: Vec<u64> },
    /// Decimal literal, certified only to the precision of its last digit.
    Decimal { text: String },
    /// Binary64 value, certified to half an ulp.
    Float { value: f64 },
}

impl fmt::Display for AlphaDescriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn join(v: &[u64]) -> String {
            v.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(",")
        }
        match self {
            AlphaDescriptor::Golden => write!(f, "golden"),
            AlphaDescriptor::Silver => write!(f, "silver"),
            AlphaDescriptor::Quadratic { p, disc, den } => write!(f, "quadratic:{p},{disc},{den}"),
            AlphaDescriptor::Quotients { prefix, period } if period.is_empty() => {
                write!(f, "quotients:{}", join(prefix))
            }
            AlphaDescriptor::Quotients { prefix, period } => {
                write!(f, "quotients:{};{}", join(prefix), join(period))
            }
            AlphaDescriptor::Beta { beta, seed } if seed == &[1] => write!(f, "beta:{beta}"),
            AlphaDescriptor::Beta { beta, seed } => write!(f, "beta:{beta}:{}", join(seed)),
            AlphaDescriptor::Decimal { text } => write!(f, "{text}"),
            AlphaDescriptor::Float { value } => write!(f, "float:{value:e}"),
        }
    }
}

fn parse_list(s: &str) -> Result<Vec<u64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| {
            t.parse::<u64>()
                .ok()
                .filter(|&a| a >= 1)
                .ok_or_else(|| SmmError::InvalidParameter(format!("bad partial quotient {t:?}")))
        })
        .collect()
}

impl FromStr for AlphaDescriptor {
    type Err = SmmError;

    /// Accepts `golden`, `silver`, a decimal in `(0,1)`, `quotients:1,2,3`
    /// (finite), `quotients:1,2;3,4` (periodic tail after `;`), `quotients:1,2,...`
    /// (last quotient repeats), `quadratic:p,D,q`, `beta:1.0` and `beta:1.0:1,1,1`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let bad = || SmmError::InvalidParameter(format!("cannot parse frequency {s:?}"));
        match s {
            "golden" => return Ok(AlphaDescriptor::Golden),
            "silver" => return Ok(AlphaDescriptor::Silver),
            _ => {}
        }
        if let Some(rest) = s.strip_prefix("quotients:") {
            let desc = if let Some((pre, per)) = rest.split_once(';') {
                AlphaDescriptor::Quotients {
                    prefix: parse_list(pre)?,
                    period: parse_list(per)?,
                }
            } else if let Some(pre) = rest.strip_suffix("...").or_else(|| rest.strip_suffix('…')) {
                let mut prefix = parse_list(pre)?;
                let last = prefix.pop().ok_or_else(bad)?;
                AlphaDescriptor::Quotients {
                    prefix,
                    period: vec![last],
                }
            } else {
                AlphaDescriptor::Quotients {
                    prefix: parse_list(rest)?,
                    period: vec![],
                }
            };
            return Ok(desc);
        }
        if let Some(rest) = s.strip_prefix("quadratic:") {
            let parts: Vec<&str> = rest.split(',').map(str::trim).collect();
            if parts.len() != 3 {
                return Err(bad());
            }
            return Ok(AlphaDescriptor::Quadratic {
                p: parts[0].parse().map_err(|_| bad())?,
                disc: parts[1].parse().map_err(|_| bad())?,
                den: parts[2].parse().map_err(|_| bad())?,
            });
        }
        if let Some(rest) = s.strip_prefix("beta:") {
            let (b, seed) = match rest.split_once(':') {
                Some((b, seed)) => (b, parse_list(seed)?),
                None => (rest, vec![1]),
            };
            let beta: f64 = b.trim().parse().map_err(|_| bad())?;
            if !(beta > 0.0 && beta.is_finite()) || seed.is_empty() {
                return Err(SmmError::InvalidParameter("beta must be positive".into()));
            }
            return Ok(AlphaDescriptor::Beta { beta, seed });
        }
        if let Some(rest) = s.strip_prefix("float:") {
            let value: f64 = rest.parse().map_err(|_| bad())?;
            return Ok(AlphaDescriptor::Float { value });
        }
        parse_decimal(s)?;
        Ok(AlphaDescriptor::Decimal { text: s.to_string() })
    }
}

/// Exact value and certification half-width of a decimal literal.
fn parse_decimal(s: &str) -> Result<(BigRational, BigRational)> {
    let bad = || SmmError::InvalidParameter(format!("cannot parse frequency {s:?}"));
    let (int, frac) = s.split_once('.').unwrap_or((s, ""));
    if int.is_empty() && frac.is_empty() {
        return Err(bad());
    }
    if !int.chars().all(|c| c.is_ascii_digit()) || !frac.chars().all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int}{frac}");
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let den = BigInt::from(10u32).pow(frac.len() as u32);
    let value = BigRational::new(num, den.clone());
    let half = BigRational::new(BigInt::one(), den * 2);
    Ok((value, half))
}

impl AlphaDescriptor {
    pub fn beta(beta: f64) -> Self {
        AlphaDescriptor::Beta { beta, seed: vec![1] }
    }

    /// Whether quotients come from exact arithmetic rather than a float.
    pub fn is_exact(&self) -> bool {
        !matches!(self, AlphaDescriptor::Decimal { .. } | AlphaDescriptor::Float { .. })
    }

    /// Double-precision value.
    pub fn value(&self) -> f64 {
        match self {
            AlphaDescriptor::Golden => (5f64.sqrt() - 1.0) / 2.0,
            AlphaDescriptor::Silver => 2f64.sqrt() - 1.0,
            AlphaDescriptor::Quadratic { p, disc, den } => {
                let v = (*p as f64 + (*disc as f64).sqrt()) / *den as f64;
                v - v.floor()
            }
            AlphaDescriptor::Decimal { text } => {
                let v: f64 = text.parse().unwrap_or(f64::NAN);
                v - v.floor()
            }
            AlphaDescriptor::Float { value } => value - value.floor(),
            _ => {
                let (a, _) = expand_quotients(self, 60, DEFAULT_BUDGET_BITS);
                let mut x = 0.0;
                for ai in a.iter().rev() {
                    x = 1.0 / (big_to_f64(ai) + x);
                }
                x
            }
        }
    }
}

/// `ln x` for arbitrarily large `x > 0`.
pub fn ln_big(x: &BigUint) -> f64 {
    let bits = x.bits();
    if bits <= 1000 {
        x.to_f64().unwrap_or(f64::INFINITY).ln()
    } else {
        let shift = bits - 64;
        (x >> shift).to_f64().unwrap().ln() + shift as f64 * std::f64::consts::LN_2
    }
}

fn big_to_f64(x: &BigUint) -> f64 {
    x.to_f64().unwrap_or(f64::INFINITY)
}

/// Why an expansion stopped before the requested depth.
fn stop_error(depth: usize, err: SmmError) -> SmmError {
    match err {
        SmmError::PrecisionExhausted { .. } => SmmError::PrecisionExhausted { depth },
        other => other,
    }
}

/// Quotients `a₁..a_K` (`K ≤ depth`) with the reason for stopping early, if any.
fn expand_quotients(desc: &AlphaDescriptor, depth: usize, budget: u64) -> (Vec<BigUint>, Option<SmmError>) {
    match desc {
        AlphaDescriptor::Golden => (vec![BigUint::one(); depth], None),
        AlphaDescriptor::Silver => (vec![BigUint::from(2u32); depth], None),
        AlphaDescriptor::Quotients { prefix, period } => {
            let mut a: Vec<BigUint> = prefix.iter().take(depth).map(|&v| BigUint::from(v)).collect();
            if !period.is_empty() {
                let mut i = 0;
                while a.len() < depth {
                    a.push(BigUint::from(period[i % period.len()]));
                    i += 1;
                }
            }
            if a.len() < depth {
                let (p, q) = convergent_of(&a);
                let err = SmmError::RationalTermination {
                    depth: a.len(),
                    p: p.to_string(),
                    q: q.to_string(),
                };
                return (a, Some(err));
            }
            (a, None)
        }
        AlphaDescriptor::Quadratic { p, disc, den } => match quadratic_quotients(*p, *disc, *den, depth) {
            Ok(a) => (a, None),
            Err(e) => (vec![], Some(e)),
        },
        AlphaDescriptor::Beta { beta, seed } => beta_quotients(*beta, seed, depth, budget),
        AlphaDescriptor::Decimal { text } => match parse_decimal(text) {
            Ok((c, h)) => certified_quotients(&c, &h, depth),
            Err(e) => (vec![], Some(e)),
        },
        AlphaDescriptor::Float { value } => match BigRational::from_float(*value) {
            Some(c) => {
                let ulp = f64::from_bits(value.to_bits() + 1) - value;
                let h = BigRational::from_float(ulp / 2.0).unwrap();
                certified_quotients(&c, &h, depth)
            }
            None => (vec![], Some(SmmError::InvalidParameter("non-finite frequency".into()))),
        },
    }
}

fn convergent_of(a: &[BigUint]) -> (BigUint, BigUint) {
    let (mut p0, mut q0) = (BigUint::one(), BigUint::zero());
    let (mut p1, mut q1) = (BigUint::zero(), BigUint::one());
    for ai in a {
        let p2 = ai * &p1 + &p0;
        let q2 = ai * &q1 + &q0;
        p0 = std::mem::replace(&mut p1, p2);
        q0 = std::mem::replace(&mut q1, q2);
    }
    (p1, q1)
}

fn isqrt_u128(n: u128) -> u128 {
    if n < 2 {
        return n;
    }
    let mut x = (n as f64).sqrt() as u128;
    while x * x > n {
        x -= 1;
    }
    while (x + 1) * (x + 1) <= n {
        x += 1;
    }
    x
}

/// Exact expansion of the fractional part of `(p + √D)/q`.
fn quadratic_quotients(p: i64, disc: u64, den: i64, depth: usize) -> Result<Vec<BigUint>> {
    let d = disc as i128;
    let s = isqrt_u128(disc as u128) as i128;
    if s * s == d {
        return Err(SmmError::InvalidParameter("discriminant is a perfect square".into()));
    }
    if den == 0 {
        return Err(SmmError::InvalidParameter("zero denominator".into()));
    }
    let (mut pp, mut dd, mut qq) = (p as i128, d, den as i128);
    // make qq divide dd - pp²
    if (dd - pp * pp) % qq != 0 {
        pp *= qq.abs();
        dd *= qq * qq;
        qq *= qq.abs();
    }
    let sd = isqrt_u128(dd as u128) as i128;
    let floor_div =
        |num: i128, den: i128| num.div_euclid(den) - if den < 0 && num.rem_euclid(den) != 0 { 1 } else { 0 };
    // floor((pp + √dd)/qq) for irrational √dd
    let quotient = |pp: i128, qq: i128| {
        if qq > 0 {
            floor_div(pp + sd, qq)
        } else {
            floor_div(pp + sd + 1, qq)
        }
    };
    let mut out = Vec::with_capacity(depth);
    // drop the integer part
    let a0 = quotient(pp, qq);
    pp -= a0 * qq;
    // now x = (pp + √dd)/qq in (0,1); complete quotient 1/x = (-pp + √dd)·qq/(dd - pp²)
    for _ in 0..depth {
        let np = -pp;
        let nq = (dd - pp * pp) / qq;
        let a = quotient(np, nq);
        if a < 1 {
            return Err(SmmError::SolverFailure("quadratic expansion lost exactness".into()));
        }
        out.push(BigUint::from(a as u128));
        pp = np - a * nq;
        qq = nq;
        if pp.abs() > 1 << 60 || qq.abs() > 1 << 60 {
            return Err(SmmError::OverflowBudget {
                index: out.len() + 1,
                budget_bits: 60,
            });
        }
    }
    Ok(out)
}

/// `max(1, ⌊e^{βq}/q⌋)`, with the floor taken on the binary64 value of
/// `e^{βq − ln q}`; beyond 53 bits the lower bits are zero by definition.
fn beta_quotient(beta: f64, q: &BigUint, index: usize, budget: u64) -> Result<BigUint> {
    let qf = big_to_f64(q);
    let ln_a = beta * qf - ln_big(q);
    if !ln_a.is_finite() {
        return Err(SmmError::OverflowBudget {
            index,
            budget_bits: budget,
        });
    }
    if ln_a < 36.0 {
        let a = (beta * qf).exp() / qf;
        return Ok(BigUint::from((a.floor() as u64).max(1)));
    }
    let bits = ln_a / std::f64::consts::LN_2;
    if bits > budget as f64 {
        return Err(SmmError::OverflowBudget {
            index,
            budget_bits: budget,
        });
    }
    let e = bits.floor();
    let mant = (2f64.powf(bits - e) * (1u64 << 52) as f64).floor() as u64;
    Ok(BigUint::from(mant) << (e as u64 - 52))
}

fn beta_quotients(beta: f64, seed: &[u64], depth: usize, budget: u64) -> (Vec<BigUint>, Option<SmmError>) {
    let mut a: Vec<BigUint> = seed.iter().take(depth).map(|&v| BigUint::from(v)).collect();
    let (_, mut q) = convergent_of(&a);
    let (_, mut q_prev) = convergent_of(&a[..a.len().saturating_sub(1)]);
    while a.len() < depth {
        match beta_quotient(beta, &q, a.len() + 1, budget) {
            Ok(next) => {
                let q_next = &next * &q + &q_prev;
                a.push(next);
                q_prev = std::mem::replace(&mut q, q_next);
            }
            Err(e) => return (a, Some(e)),
        }
    }
    (a, None)
}

fn rational_quotients(x: &BigRational, limit: usize) -> Vec<BigInt> {
    let mut out = Vec::new();
    let mut x = x.clone();
    x = &x - x.floor();
    while out.len() < limit && !x.is_zero() {
        let inv = x.recip();
        let a = inv.floor();
        out.push(a.to_integer());
        x = inv - a;
    }
    out
}

/// Quotients of a float-known number that agree at both ends of its
/// uncertainty interval.
fn certified_quotients(center: &BigRational, half: &BigRational, depth: usize) -> (Vec<BigUint>, Option<SmmError>) {
    let lo = center - half;
    let hi = center + half;
    let limit = depth + 2;
    let qc = rational_quotients(center, usize::MAX);
    let ql = rational_quotients(&lo, limit);
    let qh = rational_quotients(&hi, limit);
    let mut certified = 0;
    while certified < depth
        && certified < qc.len()
        && ql.get(certified) == Some(&qc[certified])
        && qh.get(certified) == Some(&qc[certified])
    {
        certified += 1;
    }
    let a: Vec<BigUint> = qc[..certified].iter().map(|v| v.to_biguint().unwrap()).collect();
    if certified == depth {
        return (a, None);
    }
    // A center whose own expansion ends right where certification ends was
    // typed as a rational.
    if qc.len() <= certified + 2 {
        let all: Vec<BigUint> = qc.iter().map(|v| v.to_biguint().unwrap()).collect();
        let (p, q) = convergent_of(&all);
        let err = SmmError::RationalTermination {
            depth: qc.len(),
            p: p.to_string(),
            q: q.to_string(),
        };
        return (a, Some(err));
    }
    // A convergent with a small denominator sitting inside the interval means
    // the data cannot be told apart from that rational.
    let width = (half * BigInt::from(2)).to_f64().unwrap_or(0.0);
    let threshold = 0.5 / width.sqrt();
    let all: Vec<BigUint> = qc.iter().map(|v| v.to_biguint().unwrap()).collect();
    for m in 1..=all.len() {
        let (p, q) = convergent_of(&all[..m]);
        let r = BigRational::new(BigInt::from(p.clone()), BigInt::from(q.clone()));
        if r >= lo && r <= hi {
            if big_to_f64(&q) <= threshold {
                let err = SmmError::RationalTermination {
                    depth: m,
                    p: p.to_string(),
                    q: q.to_string(),
                };
                let keep = m.min(certified);
                return (a[..keep].to_vec(), Some(err));
            }
            break;
        }
    }
    (a, Some(SmmError::PrecisionExhausted { depth: certified }))
}

/// Partial quotients, convergents and approximation errors of a frequency.
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuedFraction {
    pub alpha_desc: String,
    /// `a₁..a_K`
    pub a: Vec<BigUint>,
    /// `p₀..p_K`
    pub p: Vec<BigUint>,
    /// `q₀..q_K`
    pub q: Vec<BigUint>,
    /// `ln Δₙ` for `n = 0..=K` where known.
    pub ln_delta: Vec<f64>,
    /// `ln q_{K+1}`, from the next quotient or its logarithm.
    pub ln_q_next: Option<f64>,
    alpha: f64,
}

impl ContinuedFraction {
    pub fn depth(&self) -> usize {
        self.a.len()
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn delta(&self, n: usize) -> Option<f64> {
        self.ln_delta.get(n).map(|l| l.exp())
    }

    /// `ln q_n`, for `n ≤ K + 1` when the look-ahead is known.
    pub fn ln_q(&self, n: usize) -> Option<f64> {
        if n < self.q.len() {
            Some(ln_big(&self.q[n]))
        } else if n == self.q.len() {
            self.ln_q_next
        } else {
            None
        }
    }

    /// `pₙ qₙ₋₁ − pₙ₋₁ qₙ = (−1)^{n−1}` for every `n = 1..=K`, in exact arithmetic.
    pub fn determinant_identity_holds(&self) -> bool {
        (1..self.q.len()).all(|n| {
            let lhs = BigInt::from(&self.p[n] * &self.q[n - 1]) - BigInt::from(&self.p[n - 1] * &self.q[n]);
            let rhs = if n % 2 == 1 { BigInt::one() } else { -BigInt::one() };
            lhs == rhs
        })
    }

    /// `1/(2q_{n+1}) ≤ Δₙ ≤ 1/q_{n+1}` for `n ≤ K − 2`, checked in integers with
    /// `α` replaced by `p_K/q_K` (whose expansion shares `a₁..a_K`).
    pub fn gdc2_sandwich_holds(&self) -> bool {
        let k = self.depth();
        if k < 2 {
            return true;
        }
        let (pk, qk) = (BigInt::from(self.p[k].clone()), BigInt::from(self.q[k].clone()));
        (0..=k - 2).all(|n| {
            let r = (BigInt::from(self.q[n].clone()) * &pk - BigInt::from(self.p[n].clone()) * &qk).abs();
            let qn1 = BigInt::from(self.q[n + 1].clone());
            let upper = &r * &qn1 <= qk;
            let lower = BigInt::from(2) * &r * &qn1 >= qk;
            upper && lower
        })
    }

    /// Float form of the sandwich on the stored `ln Δₙ`, with relative slack `tol`.
    pub fn gdc2_float_holds(&self, tol: f64) -> bool {
        self.ln_delta.iter().enumerate().all(|(n, &ld)| match self.ln_q(n + 1) {
            Some(lq) => ld <= -lq + tol && ld >= -lq - std::f64::consts::LN_2 - tol,
            None => true,
        })
    }

    pub fn to_json(&self) -> serde_json::Value {
        let s = |v: &[BigUint]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
        serde_json::json!({
            "alpha_desc": self.alpha_desc,
            "a": s(&self.a),
            "p": s(&self.p),
            "q": s(&self.q),
        })
    }

    /// Rebuilds from the JSON form; `alpha_desc` must parse as a descriptor.
    pub fn from_json(v: &serde_json::Value) -> Result<Self> {
        let desc: AlphaDescriptor = v["alpha_desc"]
            .as_str()
            .ok_or_else(|| SmmError::Io("missing alpha_desc".into()))?
            .parse()?;
        let depth = v["a"].as_array().map_or(0, |a| a.len());
        let cf = cf_expand(&desc, depth)?;
        let read = |key: &str| -> Result<Vec<BigUint>> {
            v[key]
                .as_array()
                .ok_or_else(|| SmmError::Io(format!("missing {key}")))?
                .iter()
                .map(|x| {
                    x.as_str()
                        .and_then(|s| s.parse().ok())
                        .ok_or_else(|| SmmError::Io(format!("bad integer in {key}")))
                })
                .collect()
        };
        if read("a")? != cf.a || read("p")? != cf.p || read("q")? != cf.q {
            return Err(SmmError::Io("stored convergents do not match the descriptor".into()));
        }
        Ok(cf)
    }
}

/// Expansion to exactly `depth` quotients, or the error that prevents it.
pub fn cf_expand(desc: &AlphaDescriptor, depth: usize) -> Result<ContinuedFraction> {
    cf_expand_with_budget(desc, depth, DEFAULT_BUDGET_BITS)
}

pub fn cf_expand_with_budget(desc: &AlphaDescriptor, depth: usize, budget: u64) -> Result<ContinuedFraction> {
    let (cf, stop) = cf_expand_partial(desc, depth, budget);
    match stop {
        Some(e) if cf.depth() < depth => Err(stop_error(cf.depth(), e)),
        _ => Ok(cf),
    }
}

/// Expands as deep as possible up to `depth`, returning the reason for stopping early.
pub fn cf_expand_partial(desc: &AlphaDescriptor, depth: usize, budget: u64) -> (ContinuedFraction, Option<SmmError>) {
    // extra quotients feed the tails t_{n+2} of Δₙ and the look-ahead
    let (all, stop) = expand_quotients(desc, depth + 32, budget);
    let k = all.len().min(depth);
    let stop = if all.len() < depth { stop } else { None };

    let mut p = vec![BigUint::zero(), BigUint::one()];
    let mut q = vec![BigUint::one()];
    if let Some(a1) = all.first() {
        q.push(a1.clone());
    }
    for n in 2..=all.len() {
        let pn = &all[n - 1] * &p[n - 1] + &p[n - 2];
        let qn = &all[n - 1] * &q[n - 1] + &q[n - 2];
        p.push(pn);
        q.push(qn);
    }
    if all.is_empty() {
        p.truncate(1);
    }
    let ln_qs: Vec<f64> = q.iter().map(ln_big).collect();

    // ln q_{K+1}: exact if available, else the logarithm of the next quotient
    let ln_q_next = if all.len() > k {
        Some(ln_qs[k + 1])
    } else if let AlphaDescriptor::Beta { beta, .. } = desc {
        if k >= 1 {
            let qk = big_to_f64(&q[k]);
            let ln_a = (beta * qk - ln_qs[k]).max(0.0);
            let ratio = (ln_qs[k - 1] - ln_qs[k] - ln_a).exp();
            Some(ln_a + ln_qs[k] + ratio.ln_1p())
        } else {
            None
        }
    } else {
        None
    };

    // Δₙ = 1/(q_{n+1} + qₙ t_{n+2}), t_{n+2} = [0; a_{n+2}, …]
    let mut ln_delta = Vec::new();
    for n in 0..=k {
        let ln_qn1 = if n + 1 < ln_qs.len() {
            ln_qs[n + 1]
        } else if n == k {
            match ln_q_next {
                Some(v) => v,
                None => break,
            }
        } else {
            break;
        };
        let mut t = 0.0;
        for ai in all.iter().skip(n + 1).rev() {
            t = 1.0 / (big_to_f64(ai) + t);
        }
        let ratio = (ln_qs[n] - ln_qn1).exp();
        ln_delta.push(-(ln_qn1 + (ratio * t).ln_1p()));
    }

    q.truncate(k + 1);
    p.truncate(k + 1);
    let a = all[..k].to_vec();
    let cf = ContinuedFraction {
        alpha_desc: desc.to_string(),
        alpha: desc.value(),
        a,
        p,
        q,
        ln_delta,
        ln_q_next,
    };
    (cf, stop)
}

/// `α ≈ p_M/q_M` plus the signed correction, for exact `{Nα}` with huge `N`.
#[derive(Debug, Clone)]
pub struct Rotation {
    alpha: f64,
    p: BigUint,
    q: BigUint,
    /// `α − p/q` (possibly zero in binary64)
    correction: f64,
}

impl Rotation {
    /// Uses the deepest convergent with at least 120 bits that the descriptor yields.
    pub fn new(desc: &AlphaDescriptor) -> Result<Self> {
        if let AlphaDescriptor::Decimal { text } = desc {
            let (c, _) = parse_decimal(text)?;
            let c = &c - c.floor();
            return Ok(Rotation {
                alpha: desc.value(),
                p: c.numer().to_biguint().unwrap(),
                q: c.denom().to_biguint().unwrap(),
                correction: 0.0,
            });
        }
        let mut depth = 8;
        loop {
            let (cf, stop) = cf_expand_partial(desc, depth, DEFAULT_BUDGET_BITS);
            let enough = cf.q.last().is_some_and(|q| q.bits() >= 120);
            if stop.is_some() || enough || depth > 4000 {
                return Self::from_cf(&cf);
            }
            depth *= 2;
        }
    }

    pub fn from_cf(cf: &ContinuedFraction) -> Result<Self> {
        let k = cf.depth();
        if k == 0 {
            return Err(SmmError::InvalidParameter("empty continued fraction".into()));
        }
        let sign = if k.is_multiple_of(2) { 1.0 } else { -1.0 };
        let correction = match cf.ln_delta.get(k) {
            Some(ld) => sign * (ld - ln_big(&cf.q[k])).exp(),
            None => 0.0,
        };
        Ok(Rotation {
            alpha: cf.alpha(),
            p: cf.p[k].clone(),
            q: cf.q[k].clone(),
            correction,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Denominator of the rational approximant in use.
    pub fn denominator(&self) -> &BigUint {
        &self.q
    }

    pub fn numerator(&self) -> &BigUint {
        &self.p
    }

    /// `α − p/q`, added once per step of the orbit.
    pub fn correction_per_step(&self) -> f64 {
        self.correction
    }

    /// `{Nα}` in `[0, 1)`.
    pub fn frac_mul(&self, n: &BigUint) -> f64 {
        let r = (n * &self.p) % &self.q;
        let base = ratio_f64(&r, &self.q);
        let v = base + big_to_f64(n) * self.correction;
        v - v.floor()
    }

    pub fn frac_mul_u64(&self, n: u64) -> f64 {
        self.frac_mul(&BigUint::from(n))
    }

    /// `‖Nα‖_{ℝ/ℤ}`, with full relative precision when it is small.
    pub fn dist_mul(&self, n: &BigUint) -> f64 {
        let r = (n * &self.p) % &self.q;
        let s = &self.q - &r;
        let shift = big_to_f64(n) * self.correction;
        let d = if r <= s {
            ratio_f64(&r, &self.q) + shift
        } else {
            ratio_f64(&s, &self.q) - shift
        };
        let d = d.abs();
        if d > 0.5 {
            1.0 - d
        } else {
            d
        }
    }
}

fn ratio_f64(num: &BigUint, den: &BigUint) -> f64 {
    let bits = den.bits();
    if bits <= 1000 {
        return big_to_f64(num) / big_to_f64(den);
    }
    let shift = bits - 64;
    big_to_f64(&(num >> shift)) / big_to_f64(&(den >> shift))
}

/// `dist(kα, ℤ) ≥ Δₙ` for every `1 ≤ k < min(K, q_{n+1})`, checked with exact
/// residues modulo the deepest convergent. Requires `K < q_K`.
pub fn best_approx_check(cf: &ContinuedFraction, k_max: u64) -> Result<bool> {
    let depth = cf.depth();
    let qk = &cf.q[depth];
    if BigUint::from(k_max) >= *qk {
        return Err(SmmError::InvalidParameter(format!(
            "window K = {k_max} must be below the last denominator {qk}"
        )));
    }
    let pk = &cf.p[depth];
    let dist = |k: &BigUint| -> BigUint {
        let r = (k * pk) % qk;
        let s = qk - &r;
        r.min(s)
    };
    // prefix minima of dist(k·p_K mod q_K), k = 1..K-1
    let mut prefix_min = Vec::with_capacity(k_max as usize);
    let mut cur: Option<BigUint> = None;
    for k in 1..k_max {
        let d = dist(&BigUint::from(k));
        cur = Some(match cur {
            Some(c) if c <= d => c,
            _ => d,
        });
        prefix_min.push(cur.clone().unwrap());
    }
    for n in 0..depth.saturating_sub(1) {
        let delta_n = dist(&cf.q[n]);
        let upper = cf.q[n + 1].clone().min(BigUint::from(k_max));
        let upper = upper.to_u64().unwrap_or(k_max);
        if upper <= 1 {
            continue;
        }
        if prefix_min[(upper - 2) as usize] < delta_n {
            return Ok(false);
        }
    }
    Ok(true)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiophantineReport {
    pub kappa: f64,
    pub tau: f64,
    pub window: u64,
    /// `(k, ‖kα‖)` with `‖kα‖ ≤ κ|k|^{−τ}`
    pub violations: Vec<(u64, f64)>,
    /// `min_k ‖kα‖·|k|^τ` over the window
    pub min_scaled: f64,
}

/// Scans `1 ≤ k ≤ K` for violations of `‖kα‖ > κ k^{−τ}`; `k = 0` is excluded.
pub fn diophantine_check(cf: &ContinuedFraction, kappa: f64, tau: f64, k_max: u64) -> Result<DiophantineReport> {
    let rot = Rotation::from_cf(cf)?;
    let mut violations = Vec::new();
    let mut min_scaled = f64::INFINITY;
    for k in 1..=k_max {
        let d = rot.dist_mul(&BigUint::from(k));
        let scaled = d * (k as f64).powf(tau);
        min_scaled = min_scaled.min(scaled);
        if scaled <= kappa {
            violations.push((k, d));
        }
    }
    Ok(DiophantineReport {
        kappa,
        tau,
        window: k_max,
        violations,
        min_scaled,
    })
}

/// Multi-frequency window check over `0 < ‖k‖₁ ≤ K`, in floating point.
pub fn diophantine_check_window(alpha: &[f64], kappa: f64, tau: f64, k_max: i64) -> DiophantineReport {
    let d = alpha.len();
    let mut violations = Vec::new();
    let mut min_scaled = f64::INFINITY;
    for k in crate::model::cube(d, k_max) {
        let norm = crate::model::l1(&k);
        if norm == 0 || norm > k_max {
            continue;
        }
        let phase: f64 = k.iter().zip(alpha).map(|(&kj, &a)| kj as f64 * a).sum();
        let dist = crate::model::dist_to_int(phase);
        let scaled = dist * (norm as f64).powf(tau);
        min_scaled = min_scaled.min(scaled);
        if scaled <= kappa {
            violations.push((norm as u64, dist));
        }
    }
    DiophantineReport {
        kappa,
        tau,
        window: k_max as u64,
        violations,
        min_scaled,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BetaIndex {
    pub beta_estimate: f64,
    /// `(n_start, n_end)` of the tail window
    pub window: (usize, usize),
    /// `ln q_{n+1}/qₙ` for `n = 1..`
    pub per_n: Vec<f64>,
}

/// Maximum of `ln q_{n+1}/qₙ` over the tail half `n ∈ [⌈K/2⌉, K]`.
pub fn beta_estimate(cf: &ContinuedFraction) -> BetaIndex {
    let k = cf.depth();
    let mut per_n = Vec::new();
    for n in 1..=k {
        let qn = big_to_f64(&cf.q[n]);
        match cf.ln_q(n + 1) {
            Some(l) if qn.is_finite() => per_n.push(l / qn),
            _ => break,
        }
    }
    let end = per_n.len();
    let start = end.div_ceil(2).max(1);
    let beta_estimate = if end == 0 {
        0.0
    } else {
        per_n[start - 1..end].iter().cloned().fold(0.0, f64::max)
    };
    BetaIndex {
        beta_estimate,
        window: (start, end),
        per_n,
    }
}

/// Frequency with `ln q_{n+1}/qₙ → β`: the descriptor of the construction.
pub fn alpha_with_beta(beta_target: f64, seed: &[u64]) -> Result<AlphaDescriptor> {
    if !(beta_target > 0.0 && beta_target.is_finite()) {
        return Err(SmmError::InvalidParameter("beta_target must be positive".into()));
    }
    if seed.is_empty() || seed.contains(&0) {
        return Err(SmmError::InvalidParameter("seed quotients must be positive".into()));
    }
    Ok(AlphaDescriptor::Beta {
        beta: beta_target,
        seed: seed.to_vec(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TmSequence {
    pub rho_bar: f64,
    /// indices `n_k` with `q_{n_k+1} ≥ e^{(3/4)β q_{n_k}}`
    pub selected_n_k: Vec<usize>,
    /// `q_{n_k}` as decimal strings
    pub q_nk: Vec<String>,
    /// `ℓ_k = ⌊e^{ρ̄ q_{n_k}}⌋` (saturating)
    pub ell: Vec<f64>,
    /// number of multiples materialized for each `k`
    pub materialized: Vec<u64>,
    /// `ln Δ_{n_k}`
    pub ln_delta: Vec<f64>,
}

impl TmSequence {
    /// All materialized terms in order, `(k, m, t = m·q_{n_k})`.
    pub fn terms(&self) -> Vec<(usize, u64, BigUint)> {
        let mut out = Vec::new();
        for (k, (q, &count)) in self.q_nk.iter().zip(&self.materialized).enumerate() {
            let q: BigUint = q.parse().unwrap();
            for m in 1..=count {
                out.push((k, m, &q * m));
            }
        }
        out
    }

    /// `‖tₘα‖ ≤ m Δ_{n_k} ≤ ℓ_k Δ_{n_k}` for every materialized term.
    pub fn check_bounds(&self, rot: &Rotation) -> bool {
        self.terms().iter().all(|(k, m, t)| {
            let bound = (*m as f64) * self.ln_delta[*k].exp();
            let d = rot.dist_mul(t);
            d <= bound * (1.0 + 1e-9) + 1e-15 && (*m as f64) <= self.ell[*k]
        })
    }
}

/// Selects `n_k` by the growth test and materializes at most `budget` multiples in total.
pub fn tm_sequence(cf: &ContinuedFraction, rho: f64, beta: f64, budget: u64) -> Result<TmSequence> {
    if !(beta > 0.0) || !(rho > 0.0) {
        return Err(SmmError::InvalidParameter(
            "tm_sequence needs beta > 0 and rho > 0".into(),
        ));
    }
    let rho_bar = rho.min(beta) / 30.0;
    let mut seq = TmSequence {
        rho_bar,
        selected_n_k: vec![],
        q_nk: vec![],
        ell: vec![],
        materialized: vec![],
        ln_delta: vec![],
    };
    let mut left = budget;
    for n in 0..=cf.depth() {
        let qn = big_to_f64(&cf.q[n]);
        let (Some(ln_next), Some(&ld)) = (cf.ln_q(n + 1), cf.ln_delta.get(n)) else {
            break;
        };
        if ln_next < 0.75 * beta * qn {
            continue;
        }
        let ell = (rho_bar * qn).exp().floor().max(1.0);
        let take = (ell.min(left as f64)) as u64;
        seq.selected_n_k.push(n);
        seq.q_nk.push(cf.q[n].to_string());
        seq.ell.push(ell);
        seq.materialized.push(take);
        seq.ln_delta.push(ld);
        left -= take;
    }
    if seq.selected_n_k.is_empty() {
        return Err(SmmError::NoQualifyingIndex { depth: cf.depth() });
    }
    Ok(seq)
}

/// Integer-valued helper: `⌊x⌋` of a non-negative rational as `BigUint`.
pub fn floor_ratio(num: &BigUint, den: &BigUint) -> BigUint {
    num.div_floor(den)
}
