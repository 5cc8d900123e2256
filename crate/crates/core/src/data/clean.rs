use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

/// Row-removal rules for erroneous measurements and outliers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CleaningRules {
    /// Columns whose values must be >= 0.
    pub nonnegative_columns: Vec<String>,
    /// Columns whose values must lie in [0, 100].
    pub percent_columns: Vec<String>,
    /// Column screened with interquartile-range fences.
    pub outlier_column: Option<String>,
    pub iqr_multiplier: f64,
    /// Fences from an earlier pass; when set they are used instead of
    /// recomputing quartiles.
    pub fences: Option<[f64; 2]>,
}

impl Default for CleaningRules {
    fn default() -> Self {
        CleaningRules {
            nonnegative_columns: Vec::new(),
            percent_columns: Vec::new(),
            outlier_column: None,
            iqr_multiplier: 1.5,
            fences: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub input_rows: usize,
    pub output_rows: usize,
    /// Rows are attributed to the first rule they violate, in this order.
    pub removed_nonnegative: usize,
    pub removed_percent: usize,
    pub removed_outlier: usize,
    /// `[lower, upper]` fences applied to the outlier column.
    pub fences: Option<[f64; 2]>,
}

/// Linear-interpolation quantile (the "type 7" definition) of sorted data.
pub(crate) fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

fn column(data: &Dataset, name: &str) -> Result<Vec<f64>> {
    data.column(name).ok_or_else(|| Error::input(format!("unknown column `{name}` in cleaning rules")))
}

/// Removes rows violating the rules. Quartile fences are computed on the
/// outlier column before any row is removed.
pub fn clean(data: &Dataset, rules: &CleaningRules) -> Result<(Dataset, RemovalReport)> {
    if !(rules.iqr_multiplier > 0.0) {
        return Err(Error::input("iqr_multiplier must be > 0"));
    }
    let nonneg = rules.nonnegative_columns.iter().map(|c| column(data, c)).collect::<Result<Vec<_>>>()?;
    let percent = rules.percent_columns.iter().map(|c| column(data, c)).collect::<Result<Vec<_>>>()?;
    let outlier = rules.outlier_column.as_deref().map(|c| column(data, c)).transpose()?;

    let fences = match (&outlier, rules.fences) {
        (Some(_), Some(f)) => Some(f),
        (Some(values), None) if !values.is_empty() => {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            let q1 = quantile_sorted(&sorted, 0.25);
            let q3 = quantile_sorted(&sorted, 0.75);
            let iqr = q3 - q1;
            Some([q1 - rules.iqr_multiplier * iqr, q3 + rules.iqr_multiplier * iqr])
        }
        _ => None,
    };

    let mut keep = vec![true; data.len()];
    let mut report = RemovalReport {
        input_rows: data.len(),
        output_rows: 0,
        removed_nonnegative: 0,
        removed_percent: 0,
        removed_outlier: 0,
        fences,
    };
    for i in 0..data.len() {
        if nonneg.iter().any(|col| col[i] < 0.0) {
            report.removed_nonnegative += 1;
            keep[i] = false;
        } else if percent.iter().any(|col| !(0.0..=100.0).contains(&col[i])) {
            report.removed_percent += 1;
            keep[i] = false;
        } else if let (Some(col), Some([lo, hi])) = (&outlier, fences) {
            if col[i] < lo || col[i] > hi {
                report.removed_outlier += 1;
                keep[i] = false;
            }
        }
    }
    let cleaned = data.filter(&keep);
    report.output_rows = cleaned.len();
    Ok((cleaned, report))
}
