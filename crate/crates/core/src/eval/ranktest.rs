//! Wilcoxon rank-sum (Mann-Whitney) and signed-rank tests, two-sided.
//!
//! Exact p-values count, over every equally likely rank assignment, how many
//! are at least as far from the null mean as the observed statistic. Ranks
//! are kept doubled so midranks stay integral and the count is exact even
//! with ties.

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};

/// Largest pooled size for which `Auto` uses exact enumeration.
pub const EXACT_LIMIT: usize = 20;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PValueMethod {
    /// Exact up to [`EXACT_LIMIT`] observations, normal approximation beyond.
    #[default]
    Auto,
    Exact,
    Normal,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RankTest {
    /// Unpaired two-sample rank-sum test.
    #[default]
    RankSum,
    /// Paired signed-rank test on per-point differences.
    SignedRank,
}

impl std::str::FromStr for RankTest {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "rank_sum" | "ranksum" => Ok(RankTest::RankSum),
            "signed_rank" | "signedrank" => Ok(RankTest::SignedRank),
            _ => Err(Error::input(format!("unknown rank test `{s}`"))),
        }
    }
}

impl RankTest {
    pub fn run(self, a: &[f64], b: &[f64]) -> Result<TestResult> {
        match self {
            RankTest::RankSum => wilcoxon_rank_sum(a, b),
            RankTest::SignedRank => wilcoxon_signed_rank(a, b),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TestResult {
    /// `U` of the first sample (rank-sum) or `W+` (signed-rank).
    pub statistic: f64,
    pub p_value: f64,
    /// `true` when the p-value came from exact enumeration.
    pub exact: bool,
}

/// Doubled midranks of `values` (rank 1 is the smallest).
fn doubled_midranks(values: &[f64]) -> Vec<u64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    let mut ranks = vec![0u64; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start;
        while end + 1 < order.len() && values[order[end + 1]] == values[order[start]] {
            end += 1;
        }
        // positions start..=end hold ranks start+1..=end+1
        let doubled = (start + end + 2) as u64;
        for &i in &order[start..=end] {
            ranks[i] = doubled;
        }
        start = end + 1;
    }
    ranks
}

/// Sum of `t^3 - t` over tie groups.
fn tie_term(doubled: &[u64]) -> f64 {
    let mut sorted = doubled.to_vec();
    sorted.sort_unstable();
    let mut total = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        let t = (j - i) as f64;
        total += t * t * t - t;
        i = j;
    }
    total
}

fn two_sided_normal(deviation: f64, variance: f64) -> f64 {
    if !(variance > 0.0) {
        return 1.0;
    }
    let z = (deviation.abs() - 0.5).max(0.0) / variance.sqrt();
    erfc(z / std::f64::consts::SQRT_2).clamp(f64::MIN_POSITIVE, 1.0)
}

pub fn wilcoxon_rank_sum(a: &[f64], b: &[f64]) -> Result<TestResult> {
    wilcoxon_rank_sum_with(a, b, PValueMethod::Auto)
}

pub fn wilcoxon_rank_sum_with(a: &[f64], b: &[f64], method: PValueMethod) -> Result<TestResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::input("rank-sum test needs two non-empty samples"));
    }
    if a.iter().chain(b).any(|v| v.is_nan()) {
        return Err(Error::input("rank-sum test received NaN"));
    }
    let (n1, n2) = (a.len(), b.len());
    let n = n1 + n2;
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = doubled_midranks(&pooled);
    let observed: u64 = ranks[..n1].iter().sum();
    let statistic = observed as f64 / 2.0 - (n1 * (n1 + 1)) as f64 / 2.0;

    let exact = match method {
        PValueMethod::Exact => true,
        PValueMethod::Normal => false,
        PValueMethod::Auto => n <= EXACT_LIMIT,
    };
    let p_value = if exact {
        exact_rank_sum_p(&ranks, n1, observed)
    } else {
        let (n1f, n2f, nf) = (n1 as f64, n2 as f64, n as f64);
        let mean = n1f * n2f / 2.0;
        let variance = n1f * n2f / 12.0 * ((nf + 1.0) - tie_term(&ranks) / (nf * (nf - 1.0)));
        two_sided_normal(statistic - mean, variance)
    };
    Ok(TestResult { statistic, p_value, exact })
}

fn exact_rank_sum_p(ranks: &[u64], n1: usize, observed: u64) -> f64 {
    let total: u64 = ranks.iter().sum();
    let max_sum = total as usize;
    // ways[c][s]: subsets of size c with doubled rank sum s
    let mut ways = vec![vec![0f64; max_sum + 1]; n1 + 1];
    ways[0][0] = 1.0;
    for &r in ranks {
        let r = r as usize;
        for c in (1..=n1).rev() {
            let (lower, upper) = ways.split_at_mut(c);
            let prev = &lower[c - 1];
            let cur = &mut upper[0];
            for s in (r..=max_sum).rev() {
                if prev[s - r] != 0.0 {
                    cur[s] += prev[s - r];
                }
            }
        }
    }
    // doubled null mean n1 (n + 1)
    let center = (n1 * (ranks.len() + 1)) as i64;
    let observed_dev = (observed as i64 - center).abs();
    let mut extreme = 0.0;
    let mut all = 0.0;
    for (s, &w) in ways[n1].iter().enumerate() {
        all += w;
        if (s as i64 - center).abs() >= observed_dev {
            extreme += w;
        }
    }
    (extreme / all).min(1.0)
}

/// Paired signed-rank test on `a[i] - b[i]`; zero differences are dropped.
pub fn wilcoxon_signed_rank(a: &[f64], b: &[f64]) -> Result<TestResult> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::input("signed-rank test needs paired samples of equal non-zero length"));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).filter(|d| *d != 0.0).collect();
    if diffs.iter().any(|d| d.is_nan()) {
        return Err(Error::input("signed-rank test received NaN"));
    }
    let n = diffs.len();
    if n == 0 {
        return Ok(TestResult { statistic: 0.0, p_value: 1.0, exact: true });
    }
    let abs: Vec<f64> = diffs.iter().map(|d| d.abs()).collect();
    let ranks = doubled_midranks(&abs);
    let observed: u64 = ranks.iter().zip(&diffs).filter(|(_, d)| **d > 0.0).map(|(r, _)| r).sum();
    let statistic = observed as f64 / 2.0;

    let p_value = if n <= EXACT_LIMIT {
        let max_sum: usize = ranks.iter().sum::<u64>() as usize;
        let mut ways = vec![0f64; max_sum + 1];
        ways[0] = 1.0;
        for &r in &ranks {
            let r = r as usize;
            for s in (r..=max_sum).rev() {
                ways[s] += ways[s - r];
            }
        }
        let center = (n * (n + 1) / 2) as i64;
        let dev = (observed as i64 - center).abs();
        let all: f64 = ways.iter().sum();
        let extreme: f64 =
            ways.iter().enumerate().filter(|(s, _)| (*s as i64 - center).abs() >= dev).map(|(_, w)| w).sum();
        (extreme / all).min(1.0)
    } else {
        let nf = n as f64;
        let mean = nf * (nf + 1.0) / 4.0;
        let variance = nf * (nf + 1.0) * (2.0 * nf + 1.0) / 24.0 - tie_term(&ranks) / 48.0;
        two_sided_normal(statistic - mean, variance)
    };
    Ok(TestResult { statistic, p_value, exact: n <= EXACT_LIMIT })
}
