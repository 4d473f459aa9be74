//! Paired statistical comparison: Wilcoxon signed-rank with exact small-n
//! p-values, Holm step-down adjustment, and the exact binomial sign test.
//! All tests are two-sided; direction is reported separately.

use crate::error::{Error, Result};
use statrs::distribution::{ContinuousCDF, Normal};

/// Exact enumeration is used up to this many nonzero differences.
const EXACT_LIMIT: usize = 25;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WilcoxonResult {
    /// min(W+, W-), the conventional reported statistic.
    pub statistic: f64,
    pub w_plus: f64,
    pub w_minus: f64,
    /// Two-sided p-value (exact for small n, normal approximation with
    /// continuity correction above [`EXACT_LIMIT`]).
    pub p_value: f64,
    /// Nonzero differences actually used.
    pub n_used: usize,
    pub exact: bool,
}

/// Average ranks of |d|, ties sharing their mean rank.
fn average_ranks(abs_diffs: &[f64]) -> Vec<f64> {
    let n = abs_diffs.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| abs_diffs[a].partial_cmp(&abs_diffs[b]).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && abs_diffs[order[j + 1]] == abs_diffs[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Distribution of W+ over all sign assignments, by dynamic programming on
/// doubled ranks (average ranks are half-integers, so doubling keeps them
/// integral). Entry s holds the number of assignments with 2*W+ == s.
fn wplus_counts(doubled_ranks: &[u64]) -> Vec<f64> {
    let total: u64 = doubled_ranks.iter().sum();
    let mut counts = vec![0.0; total as usize + 1];
    counts[0] = 1.0;
    for &r in doubled_ranks {
        for s in (r as usize..counts.len()).rev() {
            counts[s] += counts[s - r as usize];
        }
    }
    counts
}

/// Two-sided Wilcoxon signed-rank test on paired observations `(a, b)`.
/// Zero differences are dropped (Wilcoxon's original treatment); ties among
/// |differences| share average ranks.
pub fn wilcoxon_signed_rank(pairs: &[(f64, f64)]) -> Result<WilcoxonResult> {
    let diffs: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| a - b)
        .filter(|d| *d != 0.0)
        .collect();
    if diffs.is_empty() {
        return Err(Error::AllZeroDifferences);
    }
    let n = diffs.len();
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = average_ranks(&abs);
    let w_plus: f64 = ranks
        .iter()
        .zip(&diffs)
        .filter(|(_, &d)| d > 0.0)
        .map(|(&r, _)| r)
        .sum();
    let rank_total: f64 = ranks.iter().sum();
    let w_minus = rank_total - w_plus;

    let p_value = if n <= EXACT_LIMIT {
        // Exact conditional distribution given the observed ranks.
        let doubled: Vec<u64> = ranks.iter().map(|&r| (2.0 * r).round() as u64).collect();
        let counts = wplus_counts(&doubled);
        let denom = 2f64.powi(n as i32);
        let obs = (2.0 * w_plus).round() as usize;
        let p_low: f64 = counts[..=obs].iter().sum::<f64>() / denom;
        let p_high: f64 = counts[obs..].iter().sum::<f64>() / denom;
        (2.0 * p_low.min(p_high)).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        // Tie correction on the variance.
        let mut tie_term = 0.0;
        let mut sorted = abs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut i = 0;
        while i < n {
            let mut j = i;
            while j + 1 < n && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            let t = (j - i + 1) as f64;
            tie_term += t * t * t - t;
            i = j + 1;
        }
        let var = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term / 48.0;
        let sd = var.sqrt();
        let cc = 0.5 * (w_plus - mean).signum();
        let z = (w_plus - mean - cc) / sd;
        let normal = Normal::new(0.0, 1.0).expect("standard normal");
        (2.0 * (1.0 - normal.cdf(z.abs()))).min(1.0)
    };

    Ok(WilcoxonResult {
        statistic: w_plus.min(w_minus),
        w_plus,
        w_minus,
        p_value,
        n_used: n,
        exact: n <= EXACT_LIMIT,
    })
}

/// Holm step-down adjustment, returned in the input order: sort ascending,
/// multiply the i-th smallest by (k - i), take running maxima, cap at 1.
pub fn holm_adjust(p_values: &[f64]) -> Vec<f64> {
    let k = p_values.len();
    let mut order: Vec<usize> = (0..k).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).unwrap());
    let mut adjusted = vec![0.0; k];
    let mut running = 0.0f64;
    for (i, &idx) in order.iter().enumerate() {
        let stepped = ((k - i) as f64 * p_values[idx]).min(1.0);
        running = running.max(stepped);
        adjusted[idx] = running;
    }
    adjusted
}

/// Two-sided exact binomial sign test under p = 0.5.
pub fn binomial_sign_test(wins: u64, trials: u64) -> f64 {
    assert!(wins <= trials, "wins must not exceed trials");
    if trials == 0 {
        return 1.0;
    }
    let lo = wins.min(trials - wins);
    let mut tail = 0.0;
    let mut coef = 1.0f64; // C(trials, k), updated multiplicatively
    for k in 0..=lo {
        if k > 0 {
            coef = coef * (trials - k + 1) as f64 / k as f64;
        }
        tail += coef;
    }
    let p = 2.0 * tail / 2f64.powi(trials as i32);
    p.min(1.0)
}

/// Paired per-cell means for two methods, as fed to the Wilcoxon test.
#[derive(Debug, Clone)]
pub struct PairedResults {
    pub label_a: String,
    pub label_b: String,
    pub values: Vec<(f64, f64)>,
}

impl PairedResults {
    /// Minimum pair count below which the comparison is reported as
    /// insufficient rather than tested.
    pub const MIN_PAIRS: usize = 5;

    pub fn sufficient(&self) -> bool {
        self.values.len() >= Self::MIN_PAIRS
    }

    pub fn wins_for_a(&self) -> u64 {
        self.values.iter().filter(|(a, b)| a > b).count() as u64
    }

    pub fn decided(&self) -> u64 {
        self.values.iter().filter(|(a, b)| a != b).count() as u64
    }
}
