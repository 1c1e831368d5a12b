use rayon::prelude::*;

use super::matrix::FeatureMatrix;
use super::model::TreeEnsemble;
use super::objective::{log_loss, softmax_grad_hess};
use super::tree::{Node, Tree};
use super::{GbdtError, TrainConfig};

const PRIOR_FLOOR: f64 = 1e-6;
const GAIN_EPS: f64 = 1e-12;

/// Rows, labels and optional instance weights.
#[derive(Debug, Clone, Copy)]
pub struct Dataset<'a> {
    pub x: &'a FeatureMatrix,
    pub y: &'a [usize],
    pub weights: Option<&'a [f64]>,
}

impl<'a> Dataset<'a> {
    pub fn new(x: &'a FeatureMatrix, y: &'a [usize]) -> Self {
        Self { x, y, weights: None }
    }

    pub fn weighted(x: &'a FeatureMatrix, y: &'a [usize], weights: &'a [f64]) -> Self {
        Self {
            x,
            y,
            weights: Some(weights),
        }
    }

    fn weight(&self, i: usize) -> f64 {
        self.weights.map_or(1.0, |w| w[i])
    }

    fn check(&self, num_classes: usize, feature_dim: usize) -> Result<(), GbdtError> {
        if self.x.n_rows() != self.y.len() {
            return Err(GbdtError::Shape(format!(
                "{} rows but {} labels",
                self.x.n_rows(),
                self.y.len()
            )));
        }
        if self.x.n_cols() != feature_dim {
            return Err(GbdtError::DimensionMismatch {
                expected: feature_dim,
                found: self.x.n_cols(),
            });
        }
        if let Some(row) = self.y.iter().position(|&c| c >= num_classes) {
            return Err(GbdtError::BadLabel {
                row,
                message: format!("label {} outside 0..{num_classes}", self.y[row]),
            });
        }
        for row in 0..self.x.n_rows() {
            if let Some(col) = self.x.row(row).iter().position(|v| v.is_infinite()) {
                return Err(GbdtError::InfiniteFeature { row, col });
            }
        }
        if let Some(w) = self.weights {
            if w.len() != self.y.len() {
                return Err(GbdtError::BadWeights(format!("{} weights for {} rows", w.len(), self.y.len())));
            }
            if w.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
                return Err(GbdtError::BadWeights("weights must be finite and non-negative".into()));
            }
            if w.iter().sum::<f64>() <= 0.0 {
                return Err(GbdtError::BadWeights("weights sum to zero".into()));
            }
        }
        Ok(())
    }
}

/// Converts real-valued labels to class indices, rejecting NaN and
/// non-integral or out-of-range values.
pub fn labels_from_f64(y: &[f64], num_classes: usize) -> Result<Vec<usize>, GbdtError> {
    y.iter()
        .enumerate()
        .map(|(row, &v)| {
            if v.is_nan() {
                Err(GbdtError::BadLabel {
                    row,
                    message: "label is NaN".into(),
                })
            } else if v.fract() != 0.0 || v < 0.0 || v >= num_classes as f64 {
                Err(GbdtError::BadLabel {
                    row,
                    message: format!("label {v} is not a class index below {num_classes}"),
                })
            } else {
                Ok(v as usize)
            }
        })
        .collect()
}

/// Shuffles `0..n` with `seed` and returns `(train, validation)` index sets,
/// each sorted. The validation share is `round(n * val_fraction)`, kept
/// below `n` so training is never empty.
pub fn holdout_split(n: usize, val_fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64 * val_fraction.clamp(0.0, 1.0)).round() as usize).min(n.saturating_sub(1));
    let mut val = idx[..n_val].to_vec();
    let mut train = idx[n_val..].to_vec();
    val.sort_unstable();
    train.sort_unstable();
    (train, val)
}

/// Weighted mean multiclass log-loss of `margins` (row-major, K per row).
pub fn mean_log_loss(data: &Dataset, margins: &[f64], k: usize) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (i, &label) in data.y.iter().enumerate() {
        let w = data.weight(i);
        num += w * log_loss(&margins[i * k..(i + 1) * k], label);
        den += w;
    }
    num / den
}

/// Trains a boosted ensemble. With `val`, training stops once validation
/// log-loss has not improved for `early_stopping_rounds` rounds and the
/// ensemble is truncated to its best round (possibly zero rounds).
pub fn train(data: &Dataset, val: Option<&Dataset>, cfg: &TrainConfig) -> Result<TreeEnsemble, GbdtError> {
    cfg.validate()?;
    let n = data.y.len();
    if n < 2 {
        return Err(GbdtError::TooFewRows(n));
    }
    let d = data.x.n_cols();
    let k = cfg.num_classes;
    data.check(k, d)?;
    if let Some(v) = val {
        v.check(k, d)?;
    }

    let mut class_weight = vec![0.0; k];
    for (i, &c) in data.y.iter().enumerate() {
        class_weight[c] += data.weight(i);
    }
    let total: f64 = class_weight.iter().sum();
    let base_margin: Vec<f64> = class_weight
        .iter()
        .map(|w| (w / total).max(PRIOR_FLOOR).ln())
        .collect();
    let present = class_weight.iter().filter(|&&w| w > 0.0).count();
    let constant = present <= 1;
    if constant {
        log::warn!("training labels contain a single class; fitting a constant model");
    }

    let mut model = TreeEnsemble::new(cfg.clone(), d, base_margin.clone(), constant);
    let mut margins: Vec<f64> = (0..n).flat_map(|_| base_margin.iter().copied()).collect();
    let mut val_margins: Vec<f64> = val
        .map(|v| (0..v.y.len()).flat_map(|_| base_margin.iter().copied()).collect())
        .unwrap_or_default();
    model.history.train_loss.push(mean_log_loss(data, &margins, k));
    if let Some(v) = val {
        model.history.val_loss.push(mean_log_loss(v, &val_margins, k));
    }
    if constant {
        return Ok(model);
    }

    let sorted = presort(data.x);
    let mut best_round = 0;
    let mut best_val = model.history.val_loss.first().copied().unwrap_or(f64::INFINITY);
    let mut grad = vec![0.0; n * k];
    let mut hess = vec![0.0; n * k];

    for round in 1..=cfg.num_rounds {
        for i in 0..n {
            let (g, h) = softmax_grad_hess(&margins[i * k..(i + 1) * k], data.y[i]);
            let w = data.weight(i);
            for c in 0..k {
                grad[c * n + i] = g[c] * w;
                hess[c * n + i] = h[c] * w;
            }
        }
        let trees: Vec<Tree> = (0..k)
            .map(|c| {
                let builder = Builder {
                    x: data.x,
                    sorted: &sorted,
                    grad: &grad[c * n..(c + 1) * n],
                    hess: &hess[c * n..(c + 1) * n],
                    cfg,
                };
                builder.build()
            })
            .collect();
        for i in 0..n {
            let row = data.x.row(i);
            for (c, t) in trees.iter().enumerate() {
                margins[i * k + c] += t.predict(row);
            }
        }
        model.history.train_loss.push(mean_log_loss(data, &margins, k));
        model.rounds.push(trees);

        if let Some(v) = val {
            for i in 0..v.y.len() {
                let row = v.x.row(i);
                for (c, t) in model.rounds[round - 1].iter().enumerate() {
                    val_margins[i * k + c] += t.predict(row);
                }
            }
            let loss = mean_log_loss(v, &val_margins, k);
            model.history.val_loss.push(loss);
            if loss < best_val {
                best_val = loss;
                best_round = round;
            } else if round - best_round >= cfg.early_stopping_rounds {
                break;
            }
        } else {
            best_round = round;
        }
    }
    model.rounds.truncate(best_round);
    model.best_round = best_round;
    Ok(model)
}

/// Per feature, the row indices with a present value in ascending value
/// order (row index breaks ties).
fn presort(x: &FeatureMatrix) -> Vec<Vec<u32>> {
    (0..x.n_cols())
        .into_par_iter()
        .map(|f| {
            let mut rows: Vec<u32> = (0..x.n_rows() as u32).filter(|&r| !x.get(r as usize, f).is_nan()).collect();
            rows.sort_by(|&a, &b| x.get(a as usize, f).total_cmp(&x.get(b as usize, f)).then(a.cmp(&b)));
            rows
        })
        .collect()
}

struct Builder<'a> {
    x: &'a FeatureMatrix,
    sorted: &'a [Vec<u32>],
    grad: &'a [f64],
    hess: &'a [f64],
    cfg: &'a TrainConfig,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    gain: f64,
    feature: usize,
    threshold: f64,
    default_left: bool,
}

impl Builder<'_> {
    fn build(&self) -> Tree {
        let rows: Vec<u32> = (0..self.x.n_rows() as u32).collect();
        let mut nodes = Vec::new();
        self.grow(&rows, 0, &mut nodes);
        Tree { nodes }
    }

    fn score(&self, g: f64, h: f64) -> f64 {
        let den = h + self.cfg.lambda_l2;
        if den > 0.0 {
            g * g / den
        } else {
            0.0
        }
    }

    fn leaf_value(&self, g: f64, h: f64) -> f64 {
        let den = h + self.cfg.lambda_l2;
        if den > 0.0 {
            -g / den * self.cfg.learning_rate
        } else {
            0.0
        }
    }

    fn grow(&self, rows: &[u32], depth: usize, nodes: &mut Vec<Node>) -> usize {
        let (g, h) = rows.iter().fold((0.0, 0.0), |(g, h), &r| {
            (g + self.grad[r as usize], h + self.hess[r as usize])
        });
        let id = nodes.len();
        nodes.push(Node::Leaf {
            value: self.leaf_value(g, h),
        });
        if depth >= self.cfg.max_depth || rows.len() < 2 {
            return id;
        }
        let Some(best) = self.best_split(rows, g, h) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<u32>, Vec<u32>) = rows.iter().partition(|&&r| {
            let v = self.x.get(r as usize, best.feature);
            if v.is_nan() {
                best.default_left
            } else {
                v < best.threshold
            }
        });
        let left = self.grow(&left_rows, depth + 1, nodes);
        let right = self.grow(&right_rows, depth + 1, nodes);
        nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            default_left: best.default_left,
            left,
            right,
        };
        id
    }

    fn best_split(&self, rows: &[u32], g: f64, h: f64) -> Option<Candidate> {
        let mut member = vec![false; self.x.n_rows()];
        for &r in rows {
            member[r as usize] = true;
        }
        let per_feature: Vec<Option<Candidate>> = (0..self.x.n_cols())
            .into_par_iter()
            .map(|f| self.best_for_feature(f, &member, rows.len(), g, h))
            .collect();
        let floor = self.cfg.min_split_gain.max(GAIN_EPS);
        let mut best: Option<Candidate> = None;
        for c in per_feature.into_iter().flatten() {
            if c.gain > floor && best.is_none_or(|b| c.gain > b.gain) {
                best = Some(c);
            }
        }
        best
    }

    fn best_for_feature(&self, f: usize, member: &[bool], n_node: usize, g: f64, h: f64) -> Option<Candidate> {
        let present: Vec<(f64, u32)> = self.sorted[f]
            .iter()
            .filter(|&&r| member[r as usize])
            .map(|&r| (self.x.get(r as usize, f), r))
            .collect();
        if present.is_empty() {
            return None;
        }
        let (gp, hp) = present.iter().fold((0.0, 0.0), |(a, b), &(_, r)| {
            (a + self.grad[r as usize], b + self.hess[r as usize])
        });
        let has_missing = present.len() < n_node;
        let (gm, hm) = (g - gp, h - hp);
        let parent = self.score(g, h);
        let mcw = self.cfg.min_child_weight;

        let mut best: Option<Candidate> = None;
        let mut consider = |gl: f64, hl: f64, threshold: f64, default_left: bool| {
            let (gr, hr) = (g - gl, h - hl);
            if hl < mcw || hr < mcw {
                return;
            }
            let gain = 0.5 * (self.score(gl, hl) + self.score(gr, hr) - parent);
            if best.is_none_or(|b| gain > b.gain) {
                best = Some(Candidate {
                    gain,
                    feature: f,
                    threshold,
                    default_left,
                });
            }
        };

        // All present rows right, missing rows left.
        if has_missing {
            consider(gm, hm, present[0].0, true);
        }
        let (mut gl, mut hl) = (0.0, 0.0);
        for i in 1..present.len() {
            let r = present[i - 1].1 as usize;
            gl += self.grad[r];
            hl += self.hess[r];
            let (lo, hi) = (present[i - 1].0, present[i].0);
            if !(lo < hi) {
                continue;
            }
            if has_missing {
                consider(gl + gm, hl + hm, hi, true);
                consider(gl, hl, hi, false);
            } else {
                // No missing rows here: send future missing values to the heavier side.
                let default_left = hl >= h - hl;
                consider(gl, hl, hi, default_left);
            }
        }
        best
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sign_data(n: usize) -> (FeatureMatrix, Vec<usize>) {
        let xs: Vec<f64> = (0..n).map(|i| -1.0 + 2.0 * (i as f64 + 0.5) / n as f64).collect();
        let y = xs.iter().map(|&v| usize::from(v > 0.0)).collect();
        (FeatureMatrix::new(xs, n, 1).unwrap(), y)
    }

    #[test]
    fn separates_sign_in_one_dimension() {
        let (x, y) = sign_data(200);
        let m = train(&Dataset::new(&x, &y), None, &TrainConfig::default()).unwrap();
        let correct = (0..200)
            .filter(|&i| m.predict_class(x.row(i)).unwrap().0 == y[i])
            .count();
        assert!(correct as f64 / 200.0 >= 0.98);
        assert!(m.predict_proba(&[0.9]).unwrap()[1] > 0.9);
    }

    #[test]
    fn single_class_gives_constant_model() {
        let x = FeatureMatrix::from_rows(&[[1.0], [2.0], [3.0]]).unwrap();
        let cfg = TrainConfig::with_classes(3);
        let m = train(&Dataset::new(&x, &[2, 2, 2]), None, &cfg).unwrap();
        assert!(m.constant);
        assert_eq!(m.tree_count(), 0);
        for v in [-100.0, 0.0, 7.5, f64::NAN] {
            assert!(m.predict_proba(&[v]).unwrap()[2] >= 0.99);
        }
    }

    #[test]
    fn zero_round_balanced_model_is_uniform() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0], [2.0], [3.0]]).unwrap();
        let cfg = TrainConfig {
            num_rounds: 0,
            ..TrainConfig::default()
        };
        let m = train(&Dataset::new(&x, &[0, 1, 0, 1]), None, &cfg).unwrap();
        assert_eq!(m.predict_proba(&[5.0]).unwrap(), vec![0.5, 0.5]);
    }

    #[test]
    fn missing_values_learn_a_direction() {
        // Class 1 iff the feature is missing.
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..40 {
            if i % 2 == 0 {
                rows.push([f64::NAN]);
                y.push(1);
            } else {
                rows.push([i as f64]);
                y.push(0);
            }
        }
        let x = FeatureMatrix::from_rows(&rows).unwrap();
        let m = train(&Dataset::new(&x, &y), None, &TrainConfig::default()).unwrap();
        assert_eq!(m.predict_class(&[f64::NAN]).unwrap().0, 1);
        assert_eq!(m.predict_class(&[3.0]).unwrap().0, 0);
    }

    #[test]
    fn early_stopping_truncates_to_best_round() {
        let (x, y) = sign_data(100);
        // Validation labels are the opposite; the priors-only model is best.
        let vy: Vec<usize> = y.iter().map(|c| 1 - c).collect();
        let m = train(&Dataset::new(&x, &y), Some(&Dataset::new(&x, &vy)), &TrainConfig::default()).unwrap();
        assert_eq!(m.best_round, 0);
        assert!(m.rounds.is_empty());
        assert_eq!(m.history.val_loss.len(), 21);
    }

    #[test]
    fn input_errors() {
        let x = FeatureMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(matches!(
            train(&Dataset::new(&x, &[0, 2]), None, &TrainConfig::default()),
            Err(GbdtError::BadLabel { row: 1, .. })
        ));
        let one = FeatureMatrix::from_rows(&[[0.0]]).unwrap();
        assert_eq!(
            train(&Dataset::new(&one, &[0]), None, &TrainConfig::default()).unwrap_err(),
            GbdtError::TooFewRows(1)
        );
        let inf = FeatureMatrix::from_rows(&[[0.0], [f64::INFINITY]]).unwrap();
        assert!(train(&Dataset::new(&inf, &[0, 1]), None, &TrainConfig::default()).is_err());
        assert!(labels_from_f64(&[0.0, f64::NAN], 2).is_err());
        assert_eq!(labels_from_f64(&[1.0, 0.0], 2).unwrap(), vec![1, 0]);
        let m = train(&Dataset::new(&x, &[0, 1]), None, &TrainConfig::default()).unwrap();
        assert_eq!(
            m.predict_proba(&[1.0, 2.0]).unwrap_err(),
            GbdtError::DimensionMismatch { expected: 1, found: 2 }
        );
    }
}
