//! Combining cluster equations at prediction time.
//!
//! For a query point every cluster equation is evaluated on the raw
//! features, while distances to the cluster members are measured on
//! standardized features. Weighted combinations use `1 - d_j` where `d_j` is
//! the per-point normalized minimum distance to cluster `j`.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::cluster::{ClusterModel, MegpModel};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceMeasure {
    Euclidean,
    Manhattan,
    Chebyshev,
    Cosine,
}

impl DistanceMeasure {
    pub const ALL: [DistanceMeasure; 4] =
        [DistanceMeasure::Euclidean, DistanceMeasure::Manhattan, DistanceMeasure::Chebyshev, DistanceMeasure::Cosine];

    /// Short label used in report tables.
    pub fn short(self) -> &'static str {
        match self {
            DistanceMeasure::Euclidean => "Euc",
            DistanceMeasure::Manhattan => "Manh",
            DistanceMeasure::Chebyshev => "Cheb",
            DistanceMeasure::Cosine => "Cos",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            DistanceMeasure::Euclidean => "euclidean",
            DistanceMeasure::Manhattan => "manhattan",
            DistanceMeasure::Chebyshev => "chebyshev",
            DistanceMeasure::Cosine => "cosine",
        }
    }
}

impl fmt::Display for DistanceMeasure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for DistanceMeasure {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        DistanceMeasure::ALL
            .into_iter()
            .find(|m| m.name() == lower || m.short().to_ascii_lowercase() == lower)
            .ok_or_else(|| Error::input(format!("unknown distance measure `{s}`")))
    }
}

/// How cluster equations are combined into one prediction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PredictionApproach {
    /// Equation of the nearest cluster.
    BestCluster,
    /// Mean of all equations.
    SimpleAverage,
    /// Weights `n_j`.
    WeightedN,
    /// Weights `1 - d_j`.
    WeightedD,
    /// Weights `n_j (1 - d_j)`.
    WeightedND,
}

impl PredictionApproach {
    pub const ALL: [PredictionApproach; 5] = [
        PredictionApproach::BestCluster,
        PredictionApproach::SimpleAverage,
        PredictionApproach::WeightedN,
        PredictionApproach::WeightedD,
        PredictionApproach::WeightedND,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PredictionApproach::BestCluster => "GP-best-cl",
            PredictionApproach::SimpleAverage => "GP-sim-avg",
            PredictionApproach::WeightedN => "GP-w-avg(n)",
            PredictionApproach::WeightedD => "GP-w-avg(d)",
            PredictionApproach::WeightedND => "GP-w-avg(nd)",
        }
    }

    /// Whether the result depends on the distance measure.
    pub fn uses_distance(self) -> bool {
        matches!(self, PredictionApproach::BestCluster | PredictionApproach::WeightedD | PredictionApproach::WeightedND)
    }
}

impl fmt::Display for PredictionApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for PredictionApproach {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        let found = match key.as_str() {
            "gpbestcl" | "bestcl" | "bestcluster" | "best" => PredictionApproach::BestCluster,
            "gpsimavg" | "simavg" | "simpleaverage" | "simple" => PredictionApproach::SimpleAverage,
            "gpwavgn" | "wavgn" | "weightedn" => PredictionApproach::WeightedN,
            "gpwavgd" | "wavgd" | "weightedd" => PredictionApproach::WeightedD,
            "gpwavgnd" | "wavgnd" | "weightednd" => PredictionApproach::WeightedND,
            _ => return Err(Error::input(format!("unknown prediction approach `{s}`"))),
        };
        Ok(found)
    }
}

/// Scheme mapping raw minimum distances into `[0, 1]`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistanceNorm {
    /// `raw / max(raw)`.
    #[default]
    Max,
    /// `(raw - min) / (max - min)`.
    MinMax,
    /// `raw / sum(raw)`.
    Sum,
}

impl FromStr for DistanceNorm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "max" => Ok(DistanceNorm::Max),
            "minmax" => Ok(DistanceNorm::MinMax),
            "sum" => Ok(DistanceNorm::Sum),
            _ => Err(Error::input(format!("unknown distance normalization `{s}`"))),
        }
    }
}

/// Distance between two equal-length vectors.
///
/// Cosine distance is `1 - cos(angle)`, and 1 when either vector is zero.
pub fn distance(p: &[f64], q: &[f64], measure: DistanceMeasure) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::input(format!("vector lengths differ: {} vs {}", p.len(), q.len())));
    }
    Ok(distance_unchecked(p, q, measure))
}

#[inline]
fn distance_unchecked(p: &[f64], q: &[f64], measure: DistanceMeasure) -> f64 {
    let diffs = p.iter().zip(q).map(|(a, b)| (a - b).abs());
    match measure {
        DistanceMeasure::Euclidean => diffs.map(|d| d * d).sum::<f64>().sqrt(),
        DistanceMeasure::Manhattan => diffs.sum(),
        DistanceMeasure::Chebyshev => diffs.fold(0.0, f64::max),
        DistanceMeasure::Cosine => {
            let dot: f64 = p.iter().zip(q).map(|(a, b)| a * b).sum();
            let np = p.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nq = q.iter().map(|b| b * b).sum::<f64>().sqrt();
            if np == 0.0 || nq == 0.0 {
                1.0
            } else {
                // rounding can push the cosine slightly outside [-1, 1]
                (1.0 - dot / (np * nq)).clamp(0.0, 2.0)
            }
        }
    }
}

/// Minimum distance from `x` (standardized) to any member of `cluster`.
pub fn min_distance_to_cluster(x: &[f64], cluster: &ClusterModel, measure: DistanceMeasure) -> Result<f64> {
    if let Some(row) = cluster.member_features.first() {
        if row.len() != x.len() {
            return Err(Error::input(format!("point has {} features, cluster has {}", x.len(), row.len())));
        }
    }
    Ok(cluster.member_features.iter().map(|m| distance_unchecked(x, m, measure)).fold(f64::INFINITY, f64::min))
}

/// Maps raw minimum distances into `[0, 1]`; all zeros for one cluster or
/// when the scheme's denominator vanishes.
pub fn normalize_distances(raw: &[f64], norm: DistanceNorm) -> Vec<f64> {
    let zeros = vec![0.0; raw.len()];
    if raw.len() <= 1 {
        return zeros;
    }
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match norm {
        DistanceNorm::Max => {
            if !(max > 0.0) {
                return zeros;
            }
            raw.iter().map(|r| r / max).collect()
        }
        DistanceNorm::MinMax => {
            let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
            let span = max - min;
            if !(span > 0.0) {
                return zeros;
            }
            raw.iter().map(|r| (r - min) / span).collect()
        }
        DistanceNorm::Sum => {
            let sum: f64 = raw.iter().sum();
            if !(sum > 0.0) {
                return zeros;
            }
            raw.iter().map(|r| r / sum).collect()
        }
    }
}

/// Combines per-cluster predictions. `best` is the nearest cluster's index.
/// Weighted rules fall back to the simple average when their weights sum to 0.
pub fn combine(
    predictions: &[f64],
    sizes: &[usize],
    normalized: &[f64],
    best: usize,
    approach: PredictionApproach,
) -> f64 {
    if let [only] = predictions {
        return *only;
    }
    let m = predictions.len() as f64;
    let simple = predictions.iter().sum::<f64>() / m;
    let weighted = |weights: &mut dyn Iterator<Item = f64>| {
        let mut num = 0.0;
        let mut den = 0.0;
        for (w, p) in weights.zip(predictions) {
            num += w * p;
            den += w;
        }
        if den > 0.0 {
            num / den
        } else {
            simple
        }
    };
    match approach {
        PredictionApproach::BestCluster => predictions[best],
        PredictionApproach::SimpleAverage => simple,
        PredictionApproach::WeightedN => weighted(&mut sizes.iter().map(|&n| n as f64)),
        PredictionApproach::WeightedD => weighted(&mut normalized.iter().map(|d| 1.0 - d)),
        PredictionApproach::WeightedND => {
            weighted(&mut sizes.iter().zip(normalized).map(|(&n, d)| n as f64 * (1.0 - d)))
        }
    }
}

/// Per-cluster quantities for one query point under one measure; shared by
/// all five approaches.
#[derive(Clone, Debug, PartialEq)]
pub struct PointEvaluation {
    pub measure: DistanceMeasure,
    pub cluster_predictions: Vec<f64>,
    pub raw_distances: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Nearest cluster by raw distance; ties go to the earliest cluster.
    pub best_cluster: usize,
}

impl PointEvaluation {
    pub fn breakdown(&self, approach: PredictionApproach, norm: DistanceNorm) -> PredictionBreakdown {
        let normalized = normalize_distances(&self.raw_distances, norm);
        let prediction = combine(&self.cluster_predictions, &self.sizes, &normalized, self.best_cluster, approach);
        PredictionBreakdown {
            cluster_predictions: self.cluster_predictions.clone(),
            raw_distances: self.raw_distances.clone(),
            normalized_distances: normalized,
            prediction,
            best_cluster: self.best_cluster,
            approach,
            measure: self.measure,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct PredictionBreakdown {
    pub cluster_predictions: Vec<f64>,
    pub raw_distances: Vec<f64>,
    pub normalized_distances: Vec<f64>,
    pub prediction: f64,
    pub best_cluster: usize,
    pub approach: PredictionApproach,
    pub measure: DistanceMeasure,
}

/// Evaluates every cluster for `x_raw`.
pub fn evaluate_clusters(model: &MegpModel, x_raw: &[f64], measure: DistanceMeasure) -> Result<PointEvaluation> {
    if x_raw.len() != model.n_features() {
        return Err(Error::input(format!("point has {} features, model expects {}", x_raw.len(), model.n_features())));
    }
    let z = model.standardize(x_raw);
    let cluster_predictions = model.clusters.iter().map(|c| c.equation.evaluate(x_raw)).collect();
    let raw_distances: Vec<f64> =
        model.clusters.iter().map(|c| min_distance_to_cluster(&z, c, measure)).collect::<Result<_>>()?;
    let mut best_cluster = 0;
    for (j, d) in raw_distances.iter().enumerate() {
        if *d < raw_distances[best_cluster] {
            best_cluster = j;
        }
    }
    Ok(PointEvaluation {
        measure,
        cluster_predictions,
        raw_distances,
        sizes: model.clusters.iter().map(|c| c.member_count).collect(),
        best_cluster,
    })
}

/// Prediction with max-normalized distances.
pub fn predict(
    model: &MegpModel,
    x_raw: &[f64],
    approach: PredictionApproach,
    measure: DistanceMeasure,
) -> Result<PredictionBreakdown> {
    predict_with(model, x_raw, approach, measure, DistanceNorm::Max)
}

pub fn predict_with(
    model: &MegpModel,
    x_raw: &[f64],
    approach: PredictionApproach,
    measure: DistanceMeasure,
    norm: DistanceNorm,
) -> Result<PredictionBreakdown> {
    Ok(evaluate_clusters(model, x_raw, measure)?.breakdown(approach, norm))
}
