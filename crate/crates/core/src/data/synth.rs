use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};
use crate::expr::Expression;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegimeSpec {
    /// Target formula as an s-expression over `x0..`.
    pub formula: String,
    /// Fraction of each cycle spent in this regime.
    pub span: f64,
    #[serde(default)]
    pub noise_sd: f64,
    /// Range features are drawn from while this regime is active.
    #[serde(default = "default_feature_range")]
    pub feature_range: [f64; 2],
}

fn default_feature_range() -> [f64; 2] {
    [0.0, 10.0]
}

fn default_cycles() -> usize {
    1
}

/// Description of a piecewise synthetic time series.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub n_points: usize,
    pub n_features: usize,
    pub regimes: Vec<RegimeSpec>,
    /// Number of times the regime sequence repeats over the series.
    #[serde(default = "default_cycles")]
    pub cycles: usize,
}

/// Generates a time-ordered dataset whose target follows the active
/// regime's formula plus Gaussian noise. Row labels hold the regime index.
pub fn synth_regimes(spec: &SynthSpec, seed: u64) -> Result<Dataset> {
    if spec.regimes.is_empty() {
        return Err(Error::input("at least one regime is required"));
    }
    if spec.n_features == 0 || spec.cycles == 0 {
        return Err(Error::input("n_features and cycles must be >= 1"));
    }
    let total: f64 = spec.regimes.iter().map(|r| r.span).sum();
    if spec.regimes.iter().any(|r| !(r.span > 0.0)) || (total - 1.0).abs() > 1e-9 {
        return Err(Error::input(format!("regime spans must be positive and sum to 1, got {total}")));
    }
    let formulas = spec
        .regimes
        .iter()
        .map(|r| {
            let e = Expression::parse(&r.formula)?;
            e.check_features(spec.n_features)?;
            Ok(e)
        })
        .collect::<Result<Vec<_>>>()?;
    let noise = spec
        .regimes
        .iter()
        .map(|r| {
            let [lo, hi] = r.feature_range;
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return Err(Error::input(format!("invalid feature range [{lo}, {hi}]")));
            }
            Normal::new(0.0, r.noise_sd).map_err(|e| Error::input(format!("noise_sd: {e}")))
        })
        .collect::<Result<Vec<_>>>()?;

    // regime boundaries as row indices
    let n = spec.n_points;
    let mut starts = Vec::new();
    for c in 0..spec.cycles {
        let mut cum = 0.0;
        for (r, regime) in spec.regimes.iter().enumerate() {
            let pos = ((c as f64 + cum) / spec.cycles as f64 * n as f64).round() as usize;
            starts.push((pos, r));
            cum += regime.span;
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut features = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut seg = 0;
    for i in 0..n {
        while seg + 1 < starts.len() && starts[seg + 1].0 <= i {
            seg += 1;
        }
        let r = starts[seg].1;
        let [lo, hi] = spec.regimes[r].feature_range;
        let x: Vec<f64> = (0..spec.n_features).map(|_| if lo == hi { lo } else { rng.random_range(lo..hi) }).collect();
        let mut y = formulas[r].evaluate(&x);
        if spec.regimes[r].noise_sd > 0.0 {
            y += noise[r].sample(&mut rng);
        }
        features.push(x);
        targets.push(y);
        labels.push(r as u32);
    }
    let names = (0..spec.n_features).map(|i| format!("x{i}")).collect();
    Dataset::new(names, "y", features, targets)?.with_labels(labels)
}
