//! Wilcoxon signed-rank, Friedman and Bonferroni-corrected pairwise tests.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::special::{chi_square_sf, normal_sf};
use super::EvalError;
use crate::stats::{midranks, tie_sizes};

/// Largest sample for which the Wilcoxon p-value is enumerated exactly.
pub const EXACT_MAX_N: usize = 12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TestMethod {
    Wilcoxon,
    Friedman,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatTestResult {
    pub method: TestMethod,
    /// W = min(W+, W-) for Wilcoxon, the chi-square statistic for Friedman.
    pub statistic: f64,
    /// Normal-approximation z (Wilcoxon only, reported on both paths).
    pub z: Option<f64>,
    /// Degrees of freedom (Friedman only).
    pub df: Option<f64>,
    pub p_value: f64,
    /// Non-zero differences (Wilcoxon) or subjects (Friedman).
    pub n: usize,
    pub exact: bool,
}

struct SignedRanks {
    ranks: Vec<f64>,
    positive: Vec<bool>,
    ties: Vec<usize>,
}

fn signed_ranks(a: &[f64], b: &[f64]) -> Result<SignedRanks, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if d.is_empty() {
        return Err(EvalError::Degenerate);
    }
    let abs: Vec<f64> = d.iter().map(|x| x.abs()).collect();
    Ok(SignedRanks { ranks: midranks(&abs), positive: d.iter().map(|x| *x > 0.0).collect(), ties: tie_sizes(&abs) })
}

/// Two-sided Wilcoxon signed-rank test on paired samples. Zero differences
/// are dropped; ties get midranks. The p-value is exact (all 2^n sign
/// assignments) for n <= 12, otherwise normal with tie and continuity
/// corrections.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<StatTestResult, EvalError> {
    let sr = signed_ranks(a, b)?;
    let n = sr.ranks.len();
    if n < 5 {
        return Err(EvalError::TooFew { needed: 5, got: n });
    }
    let total: f64 = sr.ranks.iter().sum();
    let w_plus: f64 = sr.ranks.iter().zip(&sr.positive).filter(|(_, p)| **p).map(|(r, _)| r).sum();
    let w = w_plus.min(total - w_plus);

    let nf = n as f64;
    let mean = nf * (nf + 1.0) / 4.0;
    let tie_term: f64 = sr.ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / 48.0;
    let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term;
    let dev = ((mean - w).abs() - 0.5).max(0.0);
    let z = if var > 0.0 { -dev / libm::sqrt(var) } else { 0.0 };

    let (p, exact) = if n <= EXACT_MAX_N {
        (exact_p(&sr.ranks, w), true)
    } else {
        ((2.0 * normal_sf(-z)).min(1.0), false)
    };
    Ok(StatTestResult { method: TestMethod::Wilcoxon, statistic: w, z: Some(z), df: None, p_value: p, n, exact })
}

/// Fraction of sign assignments whose min(W+, W-) is at most `w`.
fn exact_p(ranks: &[f64], w: f64) -> f64 {
    let n = ranks.len();
    let total: f64 = ranks.iter().sum();
    let mut hits = 0u64;
    for mask in 0u32..(1 << n) {
        let plus: f64 = (0..n).filter(|i| mask & (1 << i) != 0).map(|i| ranks[i]).sum();
        if plus.min(total - plus) <= w + 1e-9 {
            hits += 1;
        }
    }
    hits as f64 / (1u64 << n) as f64
}

/// Friedman test on an n x k matrix (rows = subjects, columns = treatments),
/// midranks within rows, tie-corrected, chi-square with k - 1 df.
pub fn friedman(rows: &[Vec<f64>]) -> Result<StatTestResult, EvalError> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    if k < 3 {
        return Err(EvalError::TooFewGroups { needed: 3, got: k });
    }
    if n < 2 {
        return Err(EvalError::TooFew { needed: 2, got: n });
    }
    if let Some(r) = rows.iter().find(|r| r.len() != k) {
        return Err(EvalError::LengthMismatch(r.len(), k));
    }
    let mut rank_sums = alloc::vec![0.0; k];
    let mut tie_total = 0.0;
    for row in rows {
        for (s, r) in rank_sums.iter_mut().zip(midranks(row)) {
            *s += r;
        }
        tie_total += tie_sizes(row).iter().map(|&t| (t * t * t - t) as f64).sum::<f64>();
    }
    let (nf, kf) = (n as f64, k as f64);
    let raw = 12.0 / (nf * kf * (kf + 1.0)) * rank_sums.iter().map(|r| r * r).sum::<f64>() - 3.0 * nf * (kf + 1.0);
    let correction = 1.0 - tie_total / (nf * (kf * kf * kf - kf));
    let df = kf - 1.0;
    let (chi2, p) = if correction <= 1e-12 { (0.0, 1.0) } else { (raw / correction, chi_square_sf(raw / correction, df)) };
    let chi2 = if chi2.abs() < 1e-12 { 0.0 } else { chi2 };
    Ok(StatTestResult {
        method: TestMethod::Friedman,
        statistic: chi2,
        z: None,
        df: Some(df),
        p_value: p.clamp(0.0, 1.0),
        n,
        exact: false,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseResult {
    pub first: usize,
    pub second: usize,
    pub result: StatTestResult,
    /// alpha / number of pairs.
    pub threshold: f64,
    pub significant: bool,
}

pub fn bonferroni_threshold(alpha: f64, groups: usize) -> f64 {
    let pairs = groups * groups.saturating_sub(1) / 2;
    alpha / pairs.max(1) as f64
}

/// Wilcoxon on every pair of groups (columns of paired observations).
pub fn pairwise_bonferroni(groups: &[Vec<f64>], alpha: f64) -> Result<Vec<PairwiseResult>, EvalError> {
    if groups.len() < 2 {
        return Err(EvalError::TooFewGroups { needed: 2, got: groups.len() });
    }
    let threshold = bonferroni_threshold(alpha, groups.len());
    let mut out = Vec::new();
    for i in 0..groups.len() {
        for j in i + 1..groups.len() {
            let result = wilcoxon_signed_rank(&groups[i], &groups[j])?;
            let significant = result.p_value < threshold;
            out.push(PairwiseResult { first: i, second: j, result, threshold, significant });
        }
    }
    Ok(out)
}
