//! Rolling-origin evaluation, error metrics and significance tests.

mod experiment;
mod ranktest;

pub use experiment::{run_experiment, ExperimentOptions, Method, MethodRow, SplitReport};
pub use ranktest::{
    wilcoxon_rank_sum, wilcoxon_rank_sum_with, wilcoxon_signed_rank, PValueMethod, RankTest, TestResult,
};

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One train/test split: train on `[0, t)`, test on `[t, e)`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RollingSplit {
    /// 1-based split number.
    pub split_index: usize,
    pub train_range: Range<usize>,
    pub test_range: Range<usize>,
}

/// Cuts `[0, n)` into `k + 1` contiguous blocks (sizes differ by at most one,
/// larger blocks first). Split `i` trains on blocks `1..=i` and tests on
/// block `i + 1`, giving `k` splits.
pub fn rolling_splits(n: usize, k: usize) -> Result<Vec<RollingSplit>> {
    if k < 1 {
        return Err(Error::input("number of folds must be >= 1"));
    }
    if n < 2 * (k + 1) {
        return Err(Error::input(format!("{n} rows are too few for {k} rolling splits (need {})", 2 * (k + 1))));
    }
    let blocks = k + 1;
    let base = n / blocks;
    let extra = n % blocks;
    let mut bounds = Vec::with_capacity(blocks + 1);
    bounds.push(0);
    for b in 0..blocks {
        let size = base + usize::from(b < extra);
        bounds.push(bounds[b] + size);
    }
    Ok((1..=k)
        .map(|i| RollingSplit { split_index: i, train_range: 0..bounds[i], test_range: bounds[i]..bounds[i + 1] })
        .collect())
}

/// Mean absolute error.
pub fn mae(actual: &[f64], predicted: &[f64]) -> Result<f64> {
    if actual.is_empty() || actual.len() != predicted.len() {
        return Err(Error::input(format!(
            "MAE needs equal non-empty lengths, got {} and {}",
            actual.len(),
            predicted.len()
        )));
    }
    Ok(crate::gp::mean_abs_error(actual, predicted))
}

/// Relative reduction of `mae_best` against `mae_std`, in percent.
pub fn improvement_percent(mae_std: f64, mae_best: f64) -> Result<f64> {
    if mae_std == 0.0 || !mae_std.is_finite() {
        return Err(Error::input(format!("baseline error must be finite and non-zero, got {mae_std}")));
    }
    Ok((mae_std - mae_best) / mae_std * 100.0)
}
