use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::gbdt::{argmax, holdout_split, train, Dataset, FeatureMatrix, GbdtError, TrainConfig, TreeEnsemble};
use crate::interchange::WaterLevelClass;

pub const DEFAULT_CONF_THRESHOLD: f64 = 0.85;
pub const DEFAULT_MAX_ITERS: usize = 20;
pub const DEFAULT_RELABEL_FOLDS: usize = 5;

/// One image: its annotated class and one feature row per usable person.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub image_ref: String,
    pub label: WaterLevelClass,
    pub instances: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelOrigin {
    BagAssigned,
    ModelUpdated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstanceLabelState {
    pub class: WaterLevelClass,
    pub origin: LabelOrigin,
    /// Confidence of the latest model prediction (0 before the first).
    pub confidence: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoLabelConfig {
    pub train: TrainConfig,
    pub conf_threshold: f64,
    pub max_iters: usize,
    /// Share of bags held out for early stopping.
    pub val_fraction: f64,
    /// Relabelling scores each bag with a model fitted on the other folds.
    /// `1` scores every instance with the model that was trained on it.
    pub relabel_folds: usize,
}

impl Default for PseudoLabelConfig {
    fn default() -> Self {
        Self {
            train: TrainConfig::with_classes(WaterLevelClass::COUNT),
            conf_threshold: DEFAULT_CONF_THRESHOLD,
            max_iters: DEFAULT_MAX_ITERS,
            val_fraction: 0.2,
            relabel_folds: DEFAULT_RELABEL_FOLDS,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub replacements: usize,
    /// Best boosting round of each model fitted in this iteration.
    pub best_rounds: Vec<usize>,
    /// Instance labels per class (N..D) after this iteration.
    pub label_counts: [usize; WaterLevelClass::COUNT],
}

#[derive(Debug, Clone)]
pub struct PseudoLabelOutcome {
    pub model: TreeEnsemble,
    /// Final label state per bag and instance.
    pub states: Vec<Vec<InstanceLabelState>>,
    pub history: Vec<IterationRecord>,
    pub converged: bool,
}

fn check(bags: &[Bag], cfg: &PseudoLabelConfig) -> Result<(), GbdtError> {
    if cfg.train.num_classes != WaterLevelClass::COUNT {
        return Err(GbdtError::InvalidConfig("water-level training needs 5 classes".into()));
    }
    if cfg.max_iters == 0 {
        return Err(GbdtError::InvalidConfig("max_iters must be positive".into()));
    }
    if !(0.0..1.0).contains(&cfg.val_fraction) {
        return Err(GbdtError::InvalidConfig("val_fraction must be in [0, 1)".into()));
    }
    if cfg.relabel_folds == 0 || (cfg.relabel_folds > 1 && cfg.relabel_folds > bags.len()) {
        return Err(GbdtError::InvalidConfig("relabel_folds must be 1 or between 2 and the bag count".into()));
    }
    if cfg.conf_threshold.is_nan() {
        return Err(GbdtError::InvalidConfig("conf_threshold is NaN".into()));
    }
    if bags.iter().all(|b| b.instances.is_empty()) {
        return Err(GbdtError::TooFewRows(0));
    }
    Ok(())
}

/// Bag indices for training and for early stopping.
pub fn split_bags(bags: &[Bag], cfg: &PseudoLabelConfig) -> (Vec<usize>, Vec<usize>) {
    holdout_split(bags.len(), cfg.val_fraction, cfg.train.seed)
}

fn stack(bags: &[Bag], which: &[usize], label: impl Fn(usize, usize) -> usize) -> Result<(FeatureMatrix, Vec<usize>), GbdtError> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for &b in which {
        for (i, r) in bags[b].instances.iter().enumerate() {
            rows.push(r.as_slice());
            y.push(label(b, i));
        }
    }
    let x = FeatureMatrix::from_rows(&rows).ok_or_else(|| GbdtError::Shape("instance rows differ in length".into()))?;
    Ok((x, y))
}

fn fit(bags: &[Bag], cfg: &PseudoLabelConfig, label: impl Fn(usize, usize) -> usize + Copy) -> Result<TreeEnsemble, GbdtError> {
    let all: Vec<usize> = (0..bags.len()).collect();
    fit_subset(bags, &all, cfg, label)
}

fn fit_subset(
    bags: &[Bag],
    subset: &[usize],
    cfg: &PseudoLabelConfig,
    label: impl Fn(usize, usize) -> usize + Copy,
) -> Result<TreeEnsemble, GbdtError> {
    let (t, v) = holdout_split(subset.len(), cfg.val_fraction, cfg.train.seed);
    let train_bags: Vec<usize> = t.iter().map(|&i| subset[i]).collect();
    let val_bags: Vec<usize> = v.iter().map(|&i| subset[i]).collect();
    let (x, y) = stack(bags, &train_bags, label)?;
    let (vx, vy) = stack(bags, &val_bags, label)?;
    let val = (!vy.is_empty()).then(|| Dataset::new(&vx, &vy));
    train(&Dataset::new(&x, &y), val.as_ref(), &cfg.train)
}

/// Plain supervised training with every instance labelled by its bag.
pub fn train_on_bag_labels(bags: &[Bag], cfg: &PseudoLabelConfig) -> Result<TreeEnsemble, GbdtError> {
    check(bags, cfg)?;
    fit(bags, cfg, |b, _| bags[b].label.index())
}

/// Fold of every bag for cross-fitted relabelling.
pub fn relabel_fold_of(n_bags: usize, folds: usize, seed: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n_bags).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5eed_f01d));
    let mut fold = vec![0; n_bags];
    for (pos, &b) in order.iter().enumerate() {
        fold[b] = pos % folds.max(1);
    }
    fold
}

/// Per-instance `(class, confidence)` from models fitted on the current
/// labels; with several folds each bag is scored by a model that never saw it.
fn score_instances(
    bags: &[Bag],
    states: &[Vec<InstanceLabelState>],
    cfg: &PseudoLabelConfig,
    fold_of: &[usize],
) -> Result<(Vec<Vec<(usize, f64)>>, Vec<usize>), GbdtError> {
    let label = |b: usize, i: usize| states[b][i].class.index();
    let folds = cfg.relabel_folds;
    let models: Vec<TreeEnsemble> = if folds <= 1 {
        vec![fit(bags, cfg, label)?]
    } else {
        (0..folds)
            .map(|f| {
                let rest: Vec<usize> = (0..bags.len()).filter(|&b| fold_of[b] != f).collect();
                fit_subset(bags, &rest, cfg, label)
            })
            .collect::<Result<_, _>>()?
    };
    let predictions = bags
        .par_iter()
        .enumerate()
        .map(|(b, bag)| {
            let m = &models[if folds <= 1 { 0 } else { fold_of[b] }];
            bag.instances
                .iter()
                .map(|r| m.predict_proba(r).map(|p| argmax(&p)))
                .collect::<Result<_, _>>()
        })
        .collect::<Result<_, _>>()?;
    Ok((predictions, models.iter().map(|m| m.best_round).collect()))
}

/// Multiple-instance training by pseudo labelling.
///
/// Every instance starts with its bag label. Each iteration fits on the
/// current labels and relabels every instance whose predicted class differs
/// from its label with confidence above `conf_threshold`. The loop ends after
/// an iteration without replacements or after `max_iters`; the returned model
/// is fitted on the final labels of all bags.
pub fn train_pseudo_label(bags: &[Bag], cfg: &PseudoLabelConfig) -> Result<PseudoLabelOutcome, GbdtError> {
    check(bags, cfg)?;
    let mut states: Vec<Vec<InstanceLabelState>> = bags
        .iter()
        .map(|b| {
            vec![
                InstanceLabelState {
                    class: b.label,
                    origin: LabelOrigin::BagAssigned,
                    confidence: 0.0,
                };
                b.instances.len()
            ]
        })
        .collect();
    let fold_of = relabel_fold_of(bags.len(), cfg.relabel_folds, cfg.train.seed);
    let mut history = Vec::new();
    let mut converged = false;
    for iteration in 1..=cfg.max_iters {
        let (predictions, best_rounds) = score_instances(bags, &states, cfg, &fold_of)?;
        let mut replacements = 0;
        for (bag_states, preds) in states.iter_mut().zip(&predictions) {
            for (s, &(k, conf)) in bag_states.iter_mut().zip(preds) {
                s.confidence = conf;
                if conf > cfg.conf_threshold && k != s.class.index() {
                    s.class = WaterLevelClass::from_index(k).expect("five classes");
                    s.origin = LabelOrigin::ModelUpdated;
                    replacements += 1;
                }
            }
        }
        let mut label_counts = [0; WaterLevelClass::COUNT];
        for s in states.iter().flatten() {
            label_counts[s.class.index()] += 1;
        }
        log::info!("pseudo-label iteration {iteration}: {replacements} replacements");
        history.push(IterationRecord {
            iteration,
            replacements,
            best_rounds,
            label_counts,
        });
        if replacements == 0 {
            converged = true;
            break;
        }
    }
    let model = fit(bags, cfg, |b, i| states[b][i].class.index())?;
    Ok(PseudoLabelOutcome {
        model,
        states,
        history,
        converged,
    })
}
