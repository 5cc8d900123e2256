use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Metric used to pick the winner among independent GP runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RunSelectionMetric {
    #[default]
    Rmse,
    Mae,
}

/// Parameters of one GP search.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GpConfig {
    pub population_size: usize,
    pub max_generations: usize,
    pub init_depth_min: usize,
    pub init_depth_max: usize,
    pub p_crossover: f64,
    pub p_mutation: f64,
    pub tournament_size: usize,
    pub parsimony_coefficient: f64,
    pub constant_range: [f64; 2],
    pub run_selection_metric: RunSelectionMetric,
    pub seed: u64,
}

impl Default for GpConfig {
    fn default() -> Self {
        GpConfig {
            population_size: 200,
            max_generations: 500,
            init_depth_min: 2,
            init_depth_max: 6,
            p_crossover: 0.9,
            p_mutation: 0.01,
            tournament_size: 20,
            parsimony_coefficient: 1e-3,
            constant_range: [-1000.0, 1000.0],
            run_selection_metric: RunSelectionMetric::Rmse,
            seed: 0,
        }
    }
}

impl GpConfig {
    /// Reduced schedule for tests and quick experiments.
    pub fn fast() -> Self {
        GpConfig { population_size: 100, max_generations: 50, ..GpConfig::default() }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        GpConfig { seed, ..self.clone() }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Input(msg));
        if self.population_size < 2 {
            return bad(format!("population_size must be >= 2, got {}", self.population_size));
        }
        if self.max_generations < 1 {
            return bad("max_generations must be >= 1".into());
        }
        if self.init_depth_min < 1 || self.init_depth_min > self.init_depth_max {
            return bad(format!("init depth range [{}, {}] is invalid", self.init_depth_min, self.init_depth_max));
        }
        let probability = |p: f64| (0.0..=1.0).contains(&p);
        if !probability(self.p_crossover) || !probability(self.p_mutation) {
            return bad("operator probabilities must lie in [0, 1]".into());
        }
        if self.p_crossover + self.p_mutation > 1.0 + 1e-12 {
            return bad(format!("p_crossover + p_mutation = {} exceeds 1", self.p_crossover + self.p_mutation));
        }
        if self.tournament_size < 1 {
            return bad("tournament_size must be >= 1".into());
        }
        if !(self.parsimony_coefficient >= 0.0) || !self.parsimony_coefficient.is_finite() {
            return bad("parsimony_coefficient must be a finite value >= 0".into());
        }
        let [lo, hi] = self.constant_range;
        if !lo.is_finite() || !hi.is_finite() || lo > hi {
            return bad(format!("constant_range [{lo}, {hi}] is invalid"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid() {
        GpConfig::default().validate().unwrap();
        GpConfig::fast().validate().unwrap();
    }

    #[test]
    fn rejects_probability_overflow() {
        let cfg = GpConfig { p_crossover: 0.95, p_mutation: 0.1, ..GpConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn rejects_inverted_depths() {
        let cfg = GpConfig { init_depth_min: 4, init_depth_max: 3, ..GpConfig::default() };
        assert!(cfg.validate().is_err());
        let cfg = GpConfig { population_size: 1, ..GpConfig::default() };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn partial_json_fills_defaults() {
        let cfg: GpConfig = serde_json::from_str(r#"{"population_size": 50}"#).unwrap();
        assert_eq!(cfg.population_size, 50);
        assert_eq!(cfg.max_generations, 500);
        assert!(serde_json::from_str::<GpConfig>(r#"{"popsize": 50}"#).is_err());
    }
}
