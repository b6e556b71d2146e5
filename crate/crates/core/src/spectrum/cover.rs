//! Cover sums for the limsup set `{x : ‖q_{n_k} x‖ ≤ e^{−(ρ̄/2)q_{n_k}}}`.
//!
//! Each level is covered by `q_{n_k}` intervals of length `2ε_k/q_{n_k}`, so the
//! `s`-sum is `q_{n_k}(2ε_k/q_{n_k})^s`, evaluated in log space.

use serde::Serialize;

use crate::diophantine::{beta_estimate, cf_expand_partial, AlphaDescriptor};
use crate::error::{Result, SmmError};
use crate::stats::linear_fit;

/// Continued-fraction depth explored for the growth test.
pub const COVER_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverSum {
    pub s: f64,
    pub rho_bar: f64,
    /// growth index used to select `n_k`
    pub beta: f64,
    pub n_k: Vec<usize>,
    pub q_nk: Vec<String>,
    pub ln_per_k: Vec<f64>,
    pub per_k: Vec<f64>,
    pub strictly_decreasing: bool,
    /// fit of `ln per_k` against `q_{n_k}`
    pub fit_slope: Option<f64>,
    pub fit_r_squared: Option<f64>,
    pub expected_slope: f64,
    /// why fewer levels than requested were available
    pub shortfall: Option<String>,
}

impl CoverSum {
    pub fn to_csv(&self) -> String {
        use crate::io::fmt_float;
        let mut s = String::from("k,n_k,q_nk,ln_per_k,per_k\n");
        for i in 0..self.per_k.len() {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                i + 1,
                self.n_k[i],
                self.q_nk[i],
                fmt_float(self.ln_per_k[i]),
                fmt_float(self.per_k[i])
            ));
        }
        s
    }
}

/// `ln(q(2e^{−(ρ̄/2)q}/q)^s)`.
pub fn ln_cover_term(ln_q: f64, rho_bar: f64, s: f64) -> f64 {
    let q = ln_q.exp();
    (1.0 - s) * ln_q + s * (2f64.ln() - 0.5 * rho_bar * q)
}

/// Levels `k_first..=k_last` (1-based) of the cover, with `n_k` chosen by
/// `ln q_{n+1} ≥ (3/4)β qₙ`.
pub fn cover_sum(
    desc: &AlphaDescriptor,
    rho_bar: f64,
    s: f64,
    k_range: (usize, usize),
    budget: u64,
) -> Result<CoverSum> {
    if !(s > 0.0 && s <= 1.0) {
        return Err(SmmError::InvalidParameter(format!("s = {s} must lie in (0, 1]")));
    }
    if !(rho_bar > 0.0) || k_range.0 < 1 || k_range.1 < k_range.0 {
        return Err(SmmError::InvalidParameter(
            "need rho_bar > 0 and 1 ≤ k_first ≤ k_last".into(),
        ));
    }
    let (cf, err) = cf_expand_partial(desc, COVER_DEPTH, budget);
    let beta = match desc {
        AlphaDescriptor::Beta { beta, .. } => *beta,
        _ => beta_estimate(&cf).beta_estimate,
    };
    if !(beta > 0.0) {
        return Err(SmmError::NoQualifyingIndex { depth: cf.depth() });
    }
    let mut levels = Vec::new();
    for n in 0..=cf.depth() {
        let (Some(ln_q), Some(ln_next)) = (cf.ln_q(n), cf.ln_q(n + 1)) else {
            break;
        };
        if ln_next >= 0.75 * beta * ln_q.exp() {
            levels.push((n, ln_q));
        }
    }
    if levels.len() < k_range.0 {
        return Err(err.unwrap_or(SmmError::NoQualifyingIndex { depth: cf.depth() }));
    }
    let shortfall = if levels.len() < k_range.1 {
        Some(format!(
            "only {} qualifying levels up to depth {}{}",
            levels.len(),
            cf.depth(),
            err.map(|e| format!(": {e}")).unwrap_or_default()
        ))
    } else {
        None
    };
    let chosen = &levels[k_range.0 - 1..levels.len().min(k_range.1)];
    let ln_per_k: Vec<f64> = chosen.iter().map(|&(_, lq)| ln_cover_term(lq, rho_bar, s)).collect();
    let per_k: Vec<f64> = ln_per_k.iter().map(|v| v.exp()).collect();
    let fit = linear_fit(
        &chosen
            .iter()
            .zip(&ln_per_k)
            .map(|(&(_, lq), &v)| (lq.exp(), v))
            .collect::<Vec<_>>(),
    );
    Ok(CoverSum {
        s,
        rho_bar,
        beta,
        n_k: chosen.iter().map(|c| c.0).collect(),
        q_nk: chosen.iter().map(|c| cf.q[c.0].to_string()).collect(),
        strictly_decreasing: ln_per_k.windows(2).all(|w| w[1] < w[0]),
        fit_slope: fit.map(|f| f.slope),
        fit_r_squared: fit.map(|f| f.r_squared),
        expected_slope: -s * rho_bar / 2.0,
        ln_per_k,
        per_k,
        shortfall,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn closed_forms() {
        // s = 1: 2e^{−(ρ̄/2)q}
        let lq = 50f64.ln();
        assert!((ln_cover_term(lq, 0.1, 1.0) - (2f64.ln() - 2.5)).abs() < 1e-12);
        // s → 0: q
        assert!((ln_cover_term(lq, 0.1, 1e-12) - lq).abs() < 1e-9);
    }

    #[test]
    fn levels_follow_the_growth_test() {
        let c = cover_sum(&AlphaDescriptor::beta(1.0), 1.0 / 30.0, 1.0, (1, 3), 4096).unwrap();
        assert_eq!(c.q_nk, vec!["1", "3", "19"]);
        assert!(c.strictly_decreasing);
        assert!(c.shortfall.is_none());
        assert!(c.to_csv().starts_with("k,n_k,q_nk,ln_per_k,per_k\n"));
        assert!(cover_sum(&AlphaDescriptor::beta(1.0), 1.0 / 30.0, 0.0, (1, 3), 4096).is_err());
    }
}
