//! Iterative residual clustering.
//!
//! Each iteration fits the best of several GP runs to the points not yet
//! clustered, takes the median absolute residual as the threshold ε, and moves
//! every point with `|residual| < ε` into a new cluster together with the
//! equation. The loop ends once at most `N = ceil(min_remaining_fraction * n)`
//! points remain.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::expr::{Expression, GpConfig};
use crate::gp::{best_of_runs_on, FitResult, TrainingData};
use crate::seed::derive_seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MegpConfig {
    pub gp: GpConfig,
    pub runs_per_cluster: usize,
    pub min_remaining_fraction: f64,
    pub max_clusters: usize,
    /// z-score features before distance computations.
    pub standardize: bool,
}

impl Default for MegpConfig {
    fn default() -> Self {
        MegpConfig {
            gp: GpConfig::default(),
            runs_per_cluster: 30,
            min_remaining_fraction: 0.01,
            max_clusters: 32,
            standardize: true,
        }
    }
}

impl MegpConfig {
    /// Population 100, 50 generations, 5 runs per cluster.
    pub fn fast() -> Self {
        MegpConfig { gp: GpConfig::fast(), runs_per_cluster: 5, ..MegpConfig::default() }
    }

    pub fn validate(&self) -> Result<()> {
        self.gp.validate()?;
        if self.runs_per_cluster < 1 {
            return Err(Error::input("runs_per_cluster must be >= 1"));
        }
        if !(self.min_remaining_fraction > 0.0 && self.min_remaining_fraction < 1.0) {
            return Err(Error::input(format!(
                "min_remaining_fraction must lie in (0, 1), got {}",
                self.min_remaining_fraction
            )));
        }
        if self.max_clusters < 1 {
            return Err(Error::input("max_clusters must be >= 1"));
        }
        Ok(())
    }

    /// GP seed used by clustering iteration `iteration`.
    pub fn iteration_seed(&self, iteration: usize) -> u64 {
        derive_seed(self.gp.seed, iteration as u64)
    }
}

/// One extracted cluster and the equation that models it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    #[serde(rename = "expression", with = "expr_text")]
    pub equation: Expression,
    /// Membership threshold; `+inf` for a single all-covering cluster.
    #[serde(with = "epsilon_value")]
    pub epsilon: f64,
    pub member_count: usize,
    /// Standardized feature rows of the members.
    pub member_features: Vec<Vec<f64>>,
    /// Row indices of the members in the training set.
    pub member_rows: Vec<usize>,
    pub iteration_index: usize,
}

/// Why the clustering loop stopped.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    /// Remaining points fell to `N` or fewer.
    Exhausted,
    /// An iteration captured no point; earlier clusters are kept.
    ZeroCapture,
    /// Hit `max_clusters`.
    MaxClusters,
    /// First iteration captured nothing; all points form one cluster.
    Degenerate,
    /// Built as a single standard-GP equation.
    SingleEquation,
}

/// Ordered cluster list plus the statistics needed at prediction time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MegpModel {
    pub clusters: Vec<ClusterModel>,
    pub feature_means: Vec<f64>,
    pub feature_stds: Vec<f64>,
    pub leftover_count: usize,
    pub config: MegpConfig,
    pub feature_names: Vec<String>,
    pub target_name: String,
    pub stop_reason: StopReason,
}

impl MegpModel {
    pub fn n_features(&self) -> usize {
        self.feature_means.len()
    }

    pub fn standardize(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.feature_means.iter().zip(&self.feature_stds)).map(|(v, (m, s))| (v - m) / s).collect()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let model: MegpModel = serde_json::from_str(text)?;
        model.check()?;
        Ok(model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut text = self.to_json()?;
        text.push('\n');
        std::fs::write(path, text)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        MegpModel::from_json(&std::fs::read_to_string(path)?)
    }

    fn check(&self) -> Result<()> {
        let n = self.feature_means.len();
        if self.clusters.is_empty() {
            return Err(Error::input("model has no clusters"));
        }
        if self.feature_stds.len() != n || self.feature_names.len() != n {
            return Err(Error::input("model feature statistics have inconsistent lengths"));
        }
        if self.feature_stds.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::input("model feature_stds must be > 0"));
        }
        for c in &self.clusters {
            if c.member_count == 0 || c.member_count != c.member_features.len() {
                return Err(Error::input(format!("cluster {} has inconsistent member counts", c.iteration_index)));
            }
            if c.member_features.iter().any(|row| row.len() != n) {
                return Err(Error::input(format!("cluster {} member dimension mismatch", c.iteration_index)));
            }
            c.equation.check_features(n)?;
        }
        Ok(())
    }
}

mod expr_text {
    use serde::{Deserialize, Deserializer, Serializer};

    use crate::expr::Expression;

    pub fn serialize<S: Serializer>(e: &Expression, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(e)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Expression, D::Error> {
        let text = String::deserialize(d)?;
        Expression::parse(&text).map_err(serde::de::Error::custom)
    }
}

/// Finite values as JSON numbers, `+inf` as the string `"inf"`.
mod epsilon_value {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Number(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_str("inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Number(v) if v >= 0.0 => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            _ => Err(serde::de::Error::custom("epsilon must be a number >= 0 or \"inf\"")),
        }
    }
}

/// Median of absolute residuals; mean of the two middle values for even counts.
pub fn epsilon_threshold(residuals: &[f64]) -> Result<f64> {
    if residuals.is_empty() {
        return Err(Error::input("cannot take the median of no residuals"));
    }
    let mut abs: Vec<f64> = residuals.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    Ok(if n % 2 == 1 { abs[n / 2] } else { (abs[n / 2 - 1] + abs[n / 2]) / 2.0 })
}

/// Per-feature means and sample standard deviations; zero spread maps to 1.
/// With `standardize = false` returns means 0 and stds 1.
pub fn standardization(train: &Dataset, standardize: bool) -> (Vec<f64>, Vec<f64>) {
    let k = train.n_features();
    if !standardize || train.is_empty() {
        return (vec![0.0; k], vec![1.0; k]);
    }
    let cols = train.columns();
    let means: Vec<f64> = cols.iter().map(|c| crate::data::describe::mean(c)).collect();
    let stds = cols
        .iter()
        .map(|c| {
            let s = crate::data::describe::sample_sd(c);
            if s > 0.0 && s.is_finite() {
                s
            } else {
                1.0
            }
        })
        .collect();
    (means, stds)
}

/// The standard-GP equation: the best of `runs_per_cluster` runs on all of
/// `train`. This is exactly the fit that opens the clustering loop.
pub fn fit_standard(train: &Dataset, config: &MegpConfig) -> Result<FitResult> {
    config.validate()?;
    let data = TrainingData::new(train)?;
    Ok(best_of_runs_on(&data, config.runs_per_cluster, &config.gp.with_seed(config.iteration_seed(0))))
}

/// Builds a single-cluster model around `fit` covering every training row.
pub fn single_equation(train: &Dataset, config: &MegpConfig, fit: FitResult) -> Result<MegpModel> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::input("empty training set"));
    }
    fit.expression.check_features(train.n_features())?;
    let (feature_means, feature_stds) = standardization(train, config.standardize);
    let all: Vec<usize> = (0..train.len()).collect();
    Ok(MegpModel {
        clusters: vec![make_cluster(train, &all, fit.expression, f64::INFINITY, 0, &feature_means, &feature_stds)],
        feature_means,
        feature_stds,
        leftover_count: 0,
        config: config.clone(),
        feature_names: train.feature_names().to_vec(),
        target_name: train.target_name().to_string(),
        stop_reason: StopReason::SingleEquation,
    })
}

/// Residual clustering with GP fits.
pub fn cluster(train: &Dataset, config: &MegpConfig) -> Result<MegpModel> {
    cluster_from(train, config, None)
}

/// Like [`cluster`], reusing an already computed first-iteration fit (as
/// returned by [`fit_standard`] on the same data and config).
pub fn cluster_from(train: &Dataset, config: &MegpConfig, first: Option<FitResult>) -> Result<MegpModel> {
    config.validate()?;
    let mut first = first;
    cluster_with_fitter(train, config, |subset, iteration| {
        if iteration == 0 {
            if let Some(f) = first.take() {
                return Ok(f);
            }
        }
        let data = TrainingData::new(subset)?;
        Ok(best_of_runs_on(&data, config.runs_per_cluster, &config.gp.with_seed(config.iteration_seed(iteration))))
    })
}

/// The clustering loop with a caller-supplied model fitter.
///
/// `fitter(remaining, iteration)` must return an equation over the
/// dataset's features.
pub fn cluster_with_fitter<F>(train: &Dataset, config: &MegpConfig, mut fitter: F) -> Result<MegpModel>
where
    F: FnMut(&Dataset, usize) -> Result<FitResult>,
{
    if train.len() < 2 {
        return Err(Error::input(format!("clustering needs at least 2 training samples, got {}", train.len())));
    }
    let limit = (config.min_remaining_fraction * train.len() as f64).ceil() as usize;
    let (feature_means, feature_stds) = standardization(train, config.standardize);

    let mut remaining: Vec<usize> = (0..train.len()).collect();
    let mut clusters = Vec::new();
    let stop_reason = loop {
        let iteration = clusters.len();
        let subset = train.subset(&remaining);
        let fit = fitter(&subset, iteration)?;
        fit.expression.check_features(train.n_features())?;
        let predicted = fit.expression.evaluate_columns(&subset.columns(), subset.len());
        let residuals: Vec<f64> = subset.targets().iter().zip(&predicted).map(|(y, p)| y - p).collect();
        let epsilon = epsilon_threshold(&residuals)?;

        let mut captured = Vec::new();
        let mut rest = Vec::new();
        for (&row, r) in remaining.iter().zip(&residuals) {
            if r.abs() < epsilon {
                captured.push(row);
            } else {
                rest.push(row);
            }
        }
        log::debug!("iteration {iteration}: epsilon {epsilon}, captured {} of {}", captured.len(), remaining.len());

        if captured.is_empty() {
            if clusters.is_empty() {
                clusters.push(make_cluster(
                    train,
                    &remaining,
                    fit.expression,
                    f64::INFINITY,
                    0,
                    &feature_means,
                    &feature_stds,
                ));
                remaining.clear();
                break StopReason::Degenerate;
            }
            break StopReason::ZeroCapture;
        }
        clusters.push(make_cluster(
            train,
            &captured,
            fit.expression,
            epsilon,
            iteration,
            &feature_means,
            &feature_stds,
        ));
        remaining = rest;
        if remaining.len() <= limit {
            break StopReason::Exhausted;
        }
        if clusters.len() >= config.max_clusters {
            break StopReason::MaxClusters;
        }
    };

    Ok(MegpModel {
        clusters,
        feature_means,
        feature_stds,
        leftover_count: remaining.len(),
        config: config.clone(),
        feature_names: train.feature_names().to_vec(),
        target_name: train.target_name().to_string(),
        stop_reason,
    })
}

fn make_cluster(
    train: &Dataset,
    rows: &[usize],
    equation: Expression,
    epsilon: f64,
    iteration_index: usize,
    means: &[f64],
    stds: &[f64],
) -> ClusterModel {
    let member_features = rows
        .iter()
        .map(|&i| train.features()[i].iter().zip(means.iter().zip(stds)).map(|(v, (m, s))| (v - m) / s).collect())
        .collect();
    ClusterModel {
        equation,
        epsilon,
        member_count: rows.len(),
        member_features,
        member_rows: rows.to_vec(),
        iteration_index,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::Op;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fixed_fit(e: Expression) -> FitResult {
        FitResult { expression: e, train_mae: 0.0, train_rmse: 0.0, generations_run: 0, seed: 0 }
    }

    fn noisy_linear(n: usize, seed: u64) -> Dataset {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let features: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.random_range(0.0..10.0)]).collect();
        let targets = features.iter().map(|x| 3.0 * x[0] + rng.random_range(-1.0..1.0)).collect();
        Dataset::new(vec!["x0".into()], "y", features, targets).unwrap()
    }

    #[test]
    fn median_threshold() {
        assert_eq!(epsilon_threshold(&[1.0, -2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(epsilon_threshold(&[1.0, -1.0, 2.0, -4.0]).unwrap(), 1.5);
        assert_eq!(epsilon_threshold(&[0.0, 0.0, 0.0]).unwrap(), 0.0);
        assert!(epsilon_threshold(&[]).is_err());
    }

    #[test]
    fn loop_stops_at_one_percent() {
        let d = noisy_linear(400, 1);
        let cfg = MegpConfig { max_clusters: 100, ..MegpConfig::default() };
        let eq = Expression::binary(Op::Mul, Expression::constant(3.0), Expression::feature(0));
        let model = cluster_with_fitter(&d, &cfg, |_, _| Ok(fixed_fit(eq.clone()))).unwrap();
        assert_eq!(model.stop_reason, StopReason::Exhausted);
        assert!(model.leftover_count <= 4);
        // previous iteration still had more than N = 4 points
        let last = model.clusters.last().unwrap().member_count;
        assert!(model.leftover_count + last > 4);
        let covered: usize = model.clusters.iter().map(|c| c.member_count).sum();
        assert_eq!(covered + model.leftover_count, 400);
    }

    #[test]
    fn exact_fit_hits_zero_capture_guard() {
        let d = Dataset::new(
            vec!["x0".into(), "x1".into()],
            "y",
            (0..200).map(|i| vec![i as f64 * 0.05, (i % 7) as f64]).collect(),
            (0..200).map(|i| i as f64 * 0.05 + (i % 7) as f64).collect(),
        )
        .unwrap();
        let eq = Expression::binary(Op::Add, Expression::feature(0), Expression::feature(1));
        let model = cluster_with_fitter(&d, &MegpConfig::default(), |_, _| Ok(fixed_fit(eq.clone()))).unwrap();
        assert_eq!(model.stop_reason, StopReason::Degenerate);
        assert_eq!(model.clusters.len(), 1);
        assert_eq!(model.clusters[0].member_count, 200);
        assert!(model.clusters[0].epsilon.is_infinite());
        assert_eq!(model.leftover_count, 0);
    }

    #[test]
    fn zero_capture_after_first_cluster_keeps_clusters() {
        // rows 0..40: y = 1000 + x0; rows 40..100: y = x0
        let features: Vec<Vec<f64>> = (0..100).map(|i| vec![i as f64]).collect();
        let targets = (0..100).map(|i| if i < 40 { 1000.0 + i as f64 } else { i as f64 }).collect();
        let d = Dataset::new(vec!["x0".into()], "y", features, targets).unwrap();
        let model = cluster_with_fitter(&d, &MegpConfig::default(), |_, it| {
            Ok(fixed_fit(if it == 0 { Expression::constant(1000.0) } else { Expression::feature(0) }))
        })
        .unwrap();
        assert_eq!(model.stop_reason, StopReason::ZeroCapture);
        assert_eq!(model.clusters.len(), 1);
        assert_eq!(model.clusters[0].epsilon, 910.5);
        assert_eq!(model.clusters[0].member_count, 50);
        assert_eq!(model.leftover_count, 50);
    }

    #[test]
    fn members_satisfy_threshold_and_partition() {
        let d = noisy_linear(300, 3);
        let eq = Expression::binary(Op::Mul, Expression::constant(2.9), Expression::feature(0));
        let model = cluster_with_fitter(&d, &MegpConfig::default(), |_, _| Ok(fixed_fit(eq.clone()))).unwrap();
        let mut seen = vec![false; d.len()];
        for c in &model.clusters {
            assert_eq!(c.member_rows.len(), c.member_count);
            for &r in &c.member_rows {
                assert!(!seen[r], "row {r} in two clusters");
                seen[r] = true;
                let res = d.targets()[r] - c.equation.evaluate(&d.features()[r]);
                assert!(res.abs() < c.epsilon);
            }
        }
        assert_eq!(seen.iter().filter(|s| !**s).count(), model.leftover_count);
    }

    #[test]
    fn max_clusters_caps_loop() {
        let d = noisy_linear(400, 4);
        let cfg = MegpConfig { max_clusters: 3, ..MegpConfig::default() };
        let eq = Expression::feature(0);
        let model = cluster_with_fitter(&d, &cfg, |_, _| Ok(fixed_fit(eq.clone()))).unwrap();
        assert_eq!(model.clusters.len(), 3);
        assert_eq!(model.stop_reason, StopReason::MaxClusters);
    }

    #[test]
    fn zero_variance_feature_gets_unit_std() {
        let d = Dataset::new(
            vec!["a".into(), "b".into()],
            "y",
            vec![vec![1.0, 5.0], vec![3.0, 5.0], vec![5.0, 5.0]],
            vec![0.0, 1.0, 2.0],
        )
        .unwrap();
        let (m, s) = standardization(&d, true);
        assert_eq!(m, vec![3.0, 5.0]);
        assert_eq!(s, vec![2.0, 1.0]);
        let (m, s) = standardization(&d, false);
        assert_eq!((m, s), (vec![0.0, 0.0], vec![1.0, 1.0]));
    }

    #[test]
    fn model_json_round_trip_is_bit_exact() {
        let d = noisy_linear(120, 5);
        let eq = Expression::binary(Op::Mul, Expression::constant(2.95), Expression::feature(0));
        let model = cluster_with_fitter(&d, &MegpConfig::default(), |_, _| Ok(fixed_fit(eq.clone()))).unwrap();
        let text = model.to_json().unwrap();
        let back = MegpModel::from_json(&text).unwrap();
        assert_eq!(back, model);
        assert_eq!(back.to_json().unwrap(), text);

        let single = single_equation(&d, &MegpConfig::default(), fixed_fit(eq)).unwrap();
        let text = single.to_json().unwrap();
        assert!(text.contains("\"epsilon\": \"inf\""));
        assert_eq!(MegpModel::from_json(&text).unwrap(), single);
    }

    #[test]
    fn invalid_config_rejected() {
        let d = noisy_linear(10, 6);
        let cfg = MegpConfig { min_remaining_fraction: 1.0, ..MegpConfig::default() };
        assert!(cluster(&d, &cfg).is_err());
        let cfg = MegpConfig { runs_per_cluster: 0, ..MegpConfig::default() };
        assert!(cluster(&d, &cfg).is_err());
    }
}
