use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::matrix::FeatureMatrix;
use super::objective::softmax;
use super::tree::Tree;
use super::{GbdtError, TrainConfig};

pub const MODEL_FORMAT: &str = "floodmap.gbdt";
pub const MODEL_VERSION: u32 = 1;

/// Per-round training and validation log-loss. Index 0 is the prior-only model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub train_loss: Vec<f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub val_loss: Vec<f64>,
}

/// Boosted multiclass ensemble. `rounds[r][k]` is the tree for class `k`
/// added in round `r + 1`; leaf weights already include the learning rate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TreeEnsemble {
    pub format: String,
    pub version: u32,
    pub num_classes: usize,
    pub feature_dim: usize,
    pub class_names: Vec<String>,
    pub config: TrainConfig,
    pub base_margin: Vec<f64>,
    pub best_round: usize,
    /// Set when training saw a single class; the model then predicts its prior.
    pub constant: bool,
    pub history: TrainHistory,
    pub rounds: Vec<Vec<Tree>>,
}

impl TreeEnsemble {
    pub(crate) fn new(config: TrainConfig, feature_dim: usize, base_margin: Vec<f64>, constant: bool) -> Self {
        let num_classes = config.num_classes;
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            num_classes,
            feature_dim,
            class_names: (0..num_classes).map(|k| k.to_string()).collect(),
            config,
            base_margin,
            best_round: 0,
            constant,
            history: TrainHistory::default(),
            rounds: Vec::new(),
        }
    }

    pub fn with_class_names<S: ToString>(mut self, names: &[S]) -> Result<Self, GbdtError> {
        if names.len() != self.num_classes {
            return Err(GbdtError::InvalidModel(format!(
                "{} class names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = names.iter().map(ToString::to_string).collect();
        Ok(self)
    }

    fn check_dim(&self, x: &[f64]) -> Result<(), GbdtError> {
        if x.len() != self.feature_dim {
            return Err(GbdtError::DimensionMismatch {
                expected: self.feature_dim,
                found: x.len(),
            });
        }
        Ok(())
    }

    pub(crate) fn margin_unchecked(&self, x: &[f64]) -> Vec<f64> {
        let mut m = self.base_margin.clone();
        for round in &self.rounds {
            for (mk, tree) in m.iter_mut().zip(round) {
                *mk += tree.predict(x);
            }
        }
        m
    }

    pub fn predict_margin(&self, x: &[f64]) -> Result<Vec<f64>, GbdtError> {
        self.check_dim(x)?;
        Ok(self.margin_unchecked(x))
    }

    pub fn predict_proba(&self, x: &[f64]) -> Result<Vec<f64>, GbdtError> {
        Ok(softmax(&self.predict_margin(x)?))
    }

    /// Most probable class (lowest index on ties) and its probability.
    pub fn predict_class(&self, x: &[f64]) -> Result<(usize, f64), GbdtError> {
        let p = self.predict_proba(x)?;
        Ok(argmax(&p))
    }

    pub fn predict_proba_rows(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>, GbdtError> {
        if x.n_cols() != self.feature_dim {
            return Err(GbdtError::DimensionMismatch {
                expected: self.feature_dim,
                found: x.n_cols(),
            });
        }
        Ok((0..x.n_rows())
            .into_par_iter()
            .map(|i| softmax(&self.margin_unchecked(x.row(i))))
            .collect())
    }

    pub fn tree_count(&self) -> usize {
        self.rounds.iter().map(Vec::len).sum()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("ensemble serialises")
    }

    pub fn from_json(s: &str) -> Result<Self, GbdtError> {
        let m: Self = serde_json::from_str(s).map_err(|e| GbdtError::InvalidModel(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        std::fs::write(path, self.to_json())
    }

    pub fn load(path: &Path) -> Result<Self, GbdtError> {
        let s = std::fs::read_to_string(path).map_err(|e| GbdtError::InvalidModel(format!("{}: {e}", path.display())))?;
        Self::from_json(&s)
    }

    pub fn validate(&self) -> Result<(), GbdtError> {
        let bad = |m: String| Err(GbdtError::InvalidModel(m));
        if self.format != MODEL_FORMAT {
            return bad(format!("unknown model format {:?}", self.format));
        }
        if self.version != MODEL_VERSION {
            return bad(format!("unsupported model version {}", self.version));
        }
        if self.num_classes < 2 || self.num_classes != self.config.num_classes {
            return bad("num_classes must be at least 2 and match the config".into());
        }
        if self.class_names.len() != self.num_classes {
            return bad("class_names length differs from num_classes".into());
        }
        if self.base_margin.len() != self.num_classes || self.base_margin.iter().any(|v| !v.is_finite()) {
            return bad("base_margin must hold one finite value per class".into());
        }
        if self.best_round != self.rounds.len() {
            return bad("best_round differs from the number of stored rounds".into());
        }
        for (r, round) in self.rounds.iter().enumerate() {
            if round.len() != self.num_classes {
                return bad(format!("round {r} has {} trees", round.len()));
            }
            for (k, tree) in round.iter().enumerate() {
                tree.validate(self.feature_dim)
                    .or_else(|e| bad(format!("round {r} class {k}: {e}")))?;
            }
        }
        Ok(())
    }
}

/// Index and value of the largest entry; the first wins ties.
pub fn argmax(p: &[f64]) -> (usize, f64) {
    let mut best = (0, p[0]);
    for (i, &v) in p.iter().enumerate().skip(1) {
        if v > best.1 {
            best = (i, v);
        }
    }
    best
}
