//! Gradient-boosted regression trees with a multiclass softmax objective.
//!
//! Split search is exact over sorted feature values. Missing cells (`NaN`)
//! are routed by a default direction learned per split. Training with a
//! validation set stops early on multiclass log-loss and keeps the best round.

mod config;
mod matrix;
mod model;
mod objective;
mod train;
mod tree;

pub use config::TrainConfig;
pub use matrix::FeatureMatrix;
pub use model::{argmax, TrainHistory, TreeEnsemble, MODEL_FORMAT, MODEL_VERSION};
pub use objective::{log_loss, softmax, softmax_grad_hess};
pub use train::{holdout_split, labels_from_f64, mean_log_loss, train, Dataset};
pub use tree::{Node, Tree};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GbdtError {
    #[error("invalid training config: {0}")]
    InvalidConfig(String),
    #[error("training needs at least 2 rows, got {0}")]
    TooFewRows(usize),
    #[error("row {row}: {message}")]
    BadLabel { row: usize, message: String },
    #[error("{0}")]
    Shape(String),
    #[error("row {row}, column {col}: feature value must be finite or NaN")]
    InfiniteFeature { row: usize, col: usize },
    #[error("weights: {0}")]
    BadWeights(String),
    #[error("expected {expected} features, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("invalid model: {0}")]
    InvalidModel(String),
}
