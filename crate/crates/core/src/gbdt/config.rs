use serde::{Deserialize, Serialize};

use super::GbdtError;

/// Boosting hyper-parameters. `Default` gives depth 2, eta 0.3, 300 rounds
/// with a patience of 20, L2 regularisation 1 and no split-gain floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub max_depth: usize,
    pub learning_rate: f64,
    pub num_rounds: usize,
    pub early_stopping_rounds: usize,
    pub num_classes: usize,
    pub min_split_gain: f64,
    pub lambda_l2: f64,
    /// Minimum hessian sum on each side of a split.
    pub min_child_weight: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_depth: 2,
            learning_rate: 0.3,
            num_rounds: 300,
            early_stopping_rounds: 20,
            num_classes: 2,
            min_split_gain: 0.0,
            lambda_l2: 1.0,
            min_child_weight: 1.0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn with_classes(num_classes: usize) -> Self {
        Self {
            num_classes,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: &str| Err(GbdtError::InvalidConfig(m.to_string()));
        if self.max_depth == 0 {
            return bad("max_depth must be positive");
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return bad("learning_rate must be finite and positive");
        }
        if self.early_stopping_rounds == 0 {
            return bad("early_stopping_rounds must be positive");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be at least 2");
        }
        if !(self.min_split_gain.is_finite() && self.min_split_gain >= 0.0) {
            return bad("min_split_gain must be finite and non-negative");
        }
        if !(self.lambda_l2.is_finite() && self.lambda_l2 >= 0.0) {
            return bad("lambda_l2 must be finite and non-negative");
        }
        if !(self.min_child_weight.is_finite() && self.min_child_weight >= 0.0) {
            return bad("min_child_weight must be finite and non-negative");
        }
        Ok(())
    }
}
