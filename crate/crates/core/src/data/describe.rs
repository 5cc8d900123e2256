use serde::{Deserialize, Serialize};

use super::Dataset;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColumnStats {
    pub name: String,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
    /// Sample standard deviation (n - 1 denominator); 0 for a single row.
    pub sd: f64,
}

/// Per-column summary plus the Pearson correlation matrix. Columns are the
/// features in order followed by the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Description {
    pub columns: Vec<ColumnStats>,
    pub correlation: Vec<Vec<f64>>,
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn sample_sd(values: &[f64]) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let m = mean(values);
    let ss: f64 = values.iter().map(|v| (v - m) * (v - m)).sum();
    (ss / (values.len() - 1) as f64).sqrt()
}

/// Pearson correlation; 0 when either column has zero variance.
fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let (ma, mb) = (mean(a), mean(b));
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return 0.0;
    }
    (sab / (saa.sqrt() * sbb.sqrt())).clamp(-1.0, 1.0)
}

pub fn describe(data: &Dataset) -> Description {
    let mut names: Vec<String> = data.feature_names().to_vec();
    names.push(data.target_name().to_string());
    let mut cols = data.columns();
    cols.push(data.targets().to_vec());

    let columns = names
        .into_iter()
        .zip(&cols)
        .map(|(name, values)| ColumnStats {
            name,
            min: values.iter().copied().fold(f64::INFINITY, f64::min),
            max: values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            mean: mean(values),
            sd: sample_sd(values),
        })
        .collect();
    let correlation = cols.iter().map(|a| cols.iter().map(|b| pearson(a, b)).collect()).collect();
    Description { columns, correlation }
}
