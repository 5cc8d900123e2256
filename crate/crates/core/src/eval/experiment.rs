//! The full comparison: standard GP versus every MEGP combination rule and
//! distance measure over rolling-origin splits.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{improvement_percent, rolling_splits, RankTest, RollingSplit};
use crate::cluster::{cluster_from, fit_standard, MegpConfig};
use crate::data::describe::{mean, sample_sd};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::predict::{
    combine, evaluate_clusters, normalize_distances, DistanceMeasure, DistanceNorm, PredictionApproach,
};
use crate::seed::derive_seed;

/// A model family in the comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Method {
    /// Single best-of-runs GP equation.
    Std,
    Megp(PredictionApproach),
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::Std,
        Method::Megp(PredictionApproach::SimpleAverage),
        Method::Megp(PredictionApproach::WeightedN),
        Method::Megp(PredictionApproach::BestCluster),
        Method::Megp(PredictionApproach::WeightedD),
        Method::Megp(PredictionApproach::WeightedND),
    ];

    pub fn label(self) -> &'static str {
        match self {
            Method::Std => "GP-std",
            Method::Megp(a) => a.label(),
        }
    }

    /// Row label used in the rendered tables.
    pub fn table_label(self) -> String {
        match self {
            Method::Std => "GP-std".to_string(),
            Method::Megp(a) => format!("MEGP ({})", a.label()),
        }
    }

    pub fn uses_distance(self) -> bool {
        matches!(self, Method::Megp(a) if a.uses_distance())
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        if key == "gpstd" || key == "std" {
            return Ok(Method::Std);
        }
        s.parse().map(Method::Megp)
    }
}

impl TryFrom<String> for Method {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Method> for String {
    fn from(m: Method) -> String {
        m.label().to_string()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentOptions {
    pub folds: usize,
    pub methods: Vec<Method>,
    pub measures: Vec<DistanceMeasure>,
    pub distance_norm: DistanceNorm,
    pub rank_test: RankTest,
}

impl Default for ExperimentOptions {
    fn default() -> Self {
        ExperimentOptions {
            folds: 10,
            methods: Method::ALL.to_vec(),
            measures: DistanceMeasure::ALL.to_vec(),
            distance_norm: DistanceNorm::Max,
            rank_test: RankTest::RankSum,
        }
    }
}

/// Results for one (method, measure) pair across all splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodRow {
    pub method: Method,
    /// `None` for methods that ignore distances.
    pub measure: Option<DistanceMeasure>,
    pub mae: Vec<f64>,
    pub mean: f64,
    pub sd: f64,
    /// Per-split absolute errors on the test points, in time order.
    pub abs_errors: Vec<Vec<f64>>,
    /// Percent improvement over GP-std per split (absent for GP-std itself or
    /// when GP-std was not run; `None` cells where GP-std's MAE is 0).
    pub improvement: Option<Vec<Option<f64>>>,
    pub improvement_mean: Option<f64>,
    pub improvement_sd: Option<f64>,
    /// Two-sided p-values against GP-std's errors per split.
    pub p_values: Option<Vec<f64>>,
}

impl MethodRow {
    pub fn label(&self) -> String {
        match self.measure {
            Some(m) => format!("{}/{}", self.method.label(), m.short()),
            None => self.method.label().to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub folds: usize,
    pub splits: Vec<RollingSplit>,
    pub distance_norm: DistanceNorm,
    pub rank_test: RankTest,
    /// Cluster count of the MEGP model trained on each split.
    pub clusters_per_split: Vec<usize>,
    pub rows: Vec<MethodRow>,
}

struct RowSpec {
    method: Method,
    measure: Option<DistanceMeasure>,
}

struct SplitOutcome {
    abs_errors: Vec<Vec<f64>>,
    clusters: usize,
}

/// Runs every requested method on every rolling split. Split `i` uses GP seed
/// `derive_seed(config.gp.seed, i)`; GP-std is the first clustering fit, so
/// both families start from the same equation.
pub fn run_experiment(dataset: &Dataset, config: &MegpConfig, options: &ExperimentOptions) -> Result<SplitReport> {
    config.validate()?;
    if options.methods.is_empty() {
        return Err(Error::input("no methods requested"));
    }
    let needs_measure = options.methods.iter().any(|m| m.uses_distance());
    if needs_measure && options.measures.is_empty() {
        return Err(Error::input("distance-based methods requested without any distance measure"));
    }
    let mut specs = Vec::new();
    for &method in &options.methods {
        if specs.iter().any(|s: &RowSpec| s.method == method) {
            continue;
        }
        if method.uses_distance() {
            for &m in &options.measures {
                specs.push(RowSpec { method, measure: Some(m) });
            }
        } else {
            specs.push(RowSpec { method, measure: None });
        }
    }

    let splits = rolling_splits(dataset.len(), options.folds)?;
    let outcomes: Vec<SplitOutcome> =
        splits.par_iter().map(|split| run_split(dataset, config, options, &specs, split)).collect::<Result<_>>()?;

    let std_index = specs.iter().position(|s| s.method == Method::Std);
    let mut rows: Vec<MethodRow> = specs
        .iter()
        .enumerate()
        .map(|(r, spec)| {
            let abs_errors: Vec<Vec<f64>> = outcomes.iter().map(|o| o.abs_errors[r].clone()).collect();
            let mae: Vec<f64> = abs_errors.iter().map(|e| mean(e)).collect();
            MethodRow {
                method: spec.method,
                measure: spec.measure,
                mean: mean(&mae),
                sd: sample_sd(&mae),
                mae,
                abs_errors,
                improvement: None,
                improvement_mean: None,
                improvement_sd: None,
                p_values: None,
            }
        })
        .collect();

    if let Some(si) = std_index {
        let baseline = rows[si].clone();
        for (r, row) in rows.iter_mut().enumerate() {
            if r == si {
                continue;
            }
            row.improvement =
                Some(baseline.mae.iter().zip(&row.mae).map(|(s, b)| improvement_percent(*s, *b).ok()).collect());
            row.improvement_mean = improvement_percent(baseline.mean, row.mean).ok();
            row.improvement_sd = improvement_percent(baseline.sd, row.sd).ok();
            row.p_values = Some(
                baseline
                    .abs_errors
                    .iter()
                    .zip(&row.abs_errors)
                    .map(|(s, b)| options.rank_test.run(s, b).map(|t| t.p_value))
                    .collect::<Result<_>>()?,
            );
        }
    }

    Ok(SplitReport {
        folds: options.folds,
        splits,
        distance_norm: options.distance_norm,
        rank_test: options.rank_test,
        clusters_per_split: outcomes.iter().map(|o| o.clusters).collect(),
        rows,
    })
}

fn run_split(
    dataset: &Dataset,
    config: &MegpConfig,
    options: &ExperimentOptions,
    specs: &[RowSpec],
    split: &RollingSplit,
) -> Result<SplitOutcome> {
    let train = dataset.slice(split.train_range.clone());
    let test = dataset.slice(split.test_range.clone());
    let cfg =
        MegpConfig { gp: config.gp.with_seed(derive_seed(config.gp.seed, split.split_index as u64)), ..config.clone() };

    let std_fit = fit_standard(&train, &cfg)?;
    let any_megp = specs.iter().any(|s| s.method != Method::Std);
    let model = if any_megp { Some(cluster_from(&train, &cfg, Some(std_fit.clone()))?) } else { None };
    log::info!(
        "split {}: train {} test {} clusters {}",
        split.split_index,
        train.len(),
        test.len(),
        model.as_ref().map_or(0, |m| m.clusters.len())
    );

    let mut abs_errors = vec![Vec::with_capacity(test.len()); specs.len()];
    for (x, y) in test.features().iter().zip(test.targets()) {
        let mut per_measure: Vec<(DistanceMeasure, crate::predict::PointEvaluation)> = Vec::new();
        for (r, spec) in specs.iter().enumerate() {
            let prediction = match (spec.method, &model) {
                (Method::Std, _) => std_fit.expression.evaluate(x),
                (Method::Megp(approach), Some(model)) => match spec.measure {
                    Some(measure) => {
                        let eval = match per_measure.iter().find(|(m, _)| *m == measure) {
                            Some((_, e)) => e,
                            None => {
                                per_measure.push((measure, evaluate_clusters(model, x, measure)?));
                                &per_measure.last().expect("just pushed").1
                            }
                        };
                        eval.breakdown(approach, options.distance_norm).prediction
                    }
                    None => {
                        let p: Vec<f64> = model.clusters.iter().map(|c| c.equation.evaluate(x)).collect();
                        let sizes: Vec<usize> = model.clusters.iter().map(|c| c.member_count).collect();
                        let d = normalize_distances(&vec![0.0; p.len()], options.distance_norm);
                        combine(&p, &sizes, &d, 0, approach)
                    }
                },
                (Method::Megp(_), None) => unreachable!("model is built whenever an MEGP row exists"),
            };
            abs_errors[r].push((y - prediction).abs());
        }
    }
    Ok(SplitOutcome { abs_errors, clusters: model.map_or(0, |m| m.clusters.len()) })
}

/// `8.35E-01` style scientific notation.
fn scientific(v: f64) -> String {
    if v == 0.0 {
        return "0.00E+00".into();
    }
    let mut exp = v.abs().log10().floor() as i32;
    let mut mantissa = v / 10f64.powi(exp);
    if (mantissa.abs() * 100.0).round() >= 1000.0 {
        exp += 1;
        mantissa = v / 10f64.powi(exp);
    }
    let sign = if exp < 0 { '-' } else { '+' };
    format!("{mantissa:.2}E{sign}{:02}", exp.abs())
}

fn fixed(v: f64) -> String {
    format!("{v:.2}")
}

fn percent(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |v| format!("{v:.2}%"))
}

impl SplitReport {
    fn split_headers(&self) -> Vec<String> {
        self.splits.iter().map(|s| format!("S{}", s.split_index)).collect()
    }

    /// MAE per split for every row, with mean and SD across splits.
    pub fn table3_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Methods".to_string(), "Distance measure".to_string()];
        header.extend(self.split_headers());
        header.extend(["Mean".to_string(), "SD".to_string()]);
        wtr.write_record(&header)?;
        for row in &self.rows {
            let mut rec =
                vec![row.method.table_label(), row.measure.map_or("-".to_string(), |m| m.short().to_string())];
            rec.extend(row.mae.iter().map(|v| fixed(*v)));
            rec.extend([fixed(row.mean), fixed(row.sd)]);
            wtr.write_record(&rec)?;
        }
        into_string(wtr)
    }

    /// GP-std against each other row: MAE rows, `% improvement` and `P-value`.
    pub fn table4_csv(&self) -> Result<String> {
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Methods".to_string()];
        header.extend(self.split_headers());
        header.extend(["Mean".to_string(), "SD".to_string()]);
        wtr.write_record(&header)?;
        let mae_record = |label: String, row: &MethodRow| {
            let mut rec = vec![label];
            rec.extend(row.mae.iter().map(|v| fixed(*v)));
            rec.extend([fixed(row.mean), fixed(row.sd)]);
            rec
        };
        if let Some(std) = self.rows.iter().find(|r| r.method == Method::Std) {
            wtr.write_record(mae_record(std.method.table_label(), std))?;
        }
        for row in self.rows.iter().filter(|r| r.method != Method::Std) {
            let label = match row.measure {
                Some(m) => format!("{}_{}", row.method.table_label(), m.short()),
                None => row.method.table_label(),
            };
            wtr.write_record(mae_record(label, row))?;
            if let Some(imp) = &row.improvement {
                let mut rec = vec!["% improvement".to_string()];
                rec.extend(imp.iter().map(|v| percent(*v)));
                rec.extend([percent(row.improvement_mean), percent(row.improvement_sd)]);
                wtr.write_record(&rec)?;
            }
            if let Some(ps) = &row.p_values {
                let mut rec = vec!["P-value".to_string()];
                rec.extend(ps.iter().map(|p| scientific(*p)));
                rec.extend(["-".to_string(), "-".to_string()]);
                wtr.write_record(&rec)?;
            }
        }
        into_string(wtr)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn row(&self, method: Method, measure: Option<DistanceMeasure>) -> Option<&MethodRow> {
        self.rows.iter().find(|r| r.method == method && r.measure == measure)
    }
}

fn into_string(wtr: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = wtr.into_inner().map_err(|e| Error::Io(e.into_error()))?;
    String::from_utf8(bytes).map_err(|e| Error::input(e.to_string()))
}
