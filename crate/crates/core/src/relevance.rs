//! Flood-relevance scoring, confidence bins and ranked-retrieval metrics.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::gbdt::{FeatureMatrix, GbdtError, TreeEnsemble};
use crate::interchange::PerceptionBundle;

/// Lower edges of the confidence bins, highest first. Bin `i` covers
/// `[EDGES[i], EDGES[i-1])`, the top bin includes 1 and the last bin is
/// everything below 0.01.
pub const BIN_EDGES: [f64; 7] = [0.99, 0.95, 0.80, 0.50, 0.20, 0.05, 0.01];
pub const BIN_COUNT: usize = BIN_EDGES.len() + 1;
pub const BIN_LABELS: [&str; BIN_COUNT] = [
    ">=99%", "[95%,99%)", "[80%,95%)", "[50%,80%)", "[20%,50%)", "[5%,20%)", "[1%,5%)", "<1%",
];
pub const POSITIVE_THRESHOLD: f64 = 0.5;
pub const DEFAULT_CUTOFFS: [usize; 5] = [50, 100, 150, 240, 480];

pub fn bin_index(score: f64) -> usize {
    BIN_EDGES.iter().position(|&e| score >= e).unwrap_or(BIN_EDGES.len())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelevanceResult {
    pub image_ref: String,
    pub score: f64,
    pub label: bool,
    pub bin: String,
}

impl RelevanceResult {
    pub fn from_score(image_ref: impl Into<String>, score: f64) -> Self {
        Self {
            image_ref: image_ref.into(),
            score,
            label: score >= POSITIVE_THRESHOLD,
            bin: BIN_LABELS[bin_index(score)].to_string(),
        }
    }

    pub fn bin_index(&self) -> usize {
        bin_index(self.score)
    }
}

#[derive(Debug, Default)]
pub struct ClassifyOutput {
    pub results: Vec<RelevanceResult>,
    pub errors: Vec<(String, GbdtError)>,
}

/// P(flood) for one feature vector of a binary model.
pub fn relevance_score(model: &TreeEnsemble, features: &[f64]) -> Result<f64, GbdtError> {
    if model.num_classes != 2 {
        return Err(GbdtError::InvalidModel(format!(
            "relevance model must be binary, has {} classes",
            model.num_classes
        )));
    }
    Ok(model.predict_proba(features)?[1])
}

/// Scores every bundle in order. Bundles whose feature dimension does not
/// match the model are reported and skipped.
pub fn classify<'a>(model: &TreeEnsemble, bundles: impl IntoIterator<Item = &'a PerceptionBundle>) -> ClassifyOutput {
    let mut out = ClassifyOutput::default();
    for b in bundles {
        match relevance_score(model, &b.relevance_features) {
            Ok(score) => out.results.push(RelevanceResult::from_score(&b.image_ref, score)),
            Err(e) => out.errors.push((b.image_ref.clone(), e)),
        }
    }
    out
}

pub fn bin_counts(results: &[RelevanceResult]) -> [usize; BIN_COUNT] {
    let mut counts = [0; BIN_COUNT];
    for r in results {
        counts[r.bin_index()] += 1;
    }
    counts
}

/// Builds a training matrix from bundles that have a label; returns the
/// image refs of labels without a bundle.
pub fn training_set(
    bundles: &[PerceptionBundle],
    labels: &BTreeMap<String, bool>,
) -> Result<(FeatureMatrix, Vec<usize>, Vec<String>), GbdtError> {
    let mut rows = Vec::new();
    let mut y = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for b in bundles {
        if let Some(&l) = labels.get(&b.image_ref) {
            rows.push(b.relevance_features.as_slice());
            y.push(usize::from(l));
            seen.insert(b.image_ref.as_str());
        }
    }
    let missing = labels.keys().filter(|k| !seen.contains(k.as_str())).cloned().collect();
    let x = FeatureMatrix::from_rows(&rows).ok_or_else(|| GbdtError::Shape("relevance feature dimensions differ".into()))?;
    Ok((x, y, missing))
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricError {
    #[error("cutoff must be positive")]
    ZeroCutoff,
    #[error("cutoff {k} exceeds list length {len}")]
    CutoffTooLarge { k: usize, len: usize },
    #[error("empty ranking")]
    Empty,
    #[error("{scores} scores but {labels} labels")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("score {index} is not finite")]
    NonFinite { index: usize },
    #[error("AUC is undefined when only one class is present")]
    SingleClass,
}

fn check_inputs(scores: &[f64], labels: &[bool]) -> Result<(), MetricError> {
    if scores.len() != labels.len() {
        return Err(MetricError::LengthMismatch {
            scores: scores.len(),
            labels: labels.len(),
        });
    }
    if let Some(index) = scores.iter().position(|s| !s.is_finite()) {
        return Err(MetricError::NonFinite { index });
    }
    Ok(())
}

/// Indices by descending score; equal scores keep input order.
pub fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    idx
}

pub fn precision_at_k(scores: &[f64], labels: &[bool], k: usize) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    if k == 0 {
        return Err(MetricError::ZeroCutoff);
    }
    if k > scores.len() {
        return Err(MetricError::CutoffTooLarge { k, len: scores.len() });
    }
    let hits = ranking(scores).into_iter().take(k).filter(|&i| labels[i]).count();
    Ok(hits as f64 / k as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CutoffAverage {
    pub value: f64,
    /// `(requested, used)` for every cutoff that was clipped to the list length.
    pub clipped: Vec<(usize, usize)>,
}

/// Mean of precision-at-k over `cutoffs`, each clipped to the list length.
pub fn avg_precision_at_cutoffs(scores: &[f64], labels: &[bool], cutoffs: &[usize]) -> Result<CutoffAverage, MetricError> {
    check_inputs(scores, labels)?;
    if scores.is_empty() || cutoffs.is_empty() {
        return Err(MetricError::Empty);
    }
    let order = ranking(scores);
    let mut clipped = Vec::new();
    let mut sum = 0.0;
    for &k in cutoffs {
        if k == 0 {
            return Err(MetricError::ZeroCutoff);
        }
        let used = k.min(scores.len());
        if used < k {
            log::warn!("cutoff {k} clipped to list length {used}");
            clipped.push((k, used));
        }
        let hits = order.iter().take(used).filter(|&&i| labels[i]).count();
        sum += hits as f64 / used as f64;
    }
    Ok(CutoffAverage {
        value: sum / cutoffs.len() as f64,
        clipped,
    })
}

/// Area under the ROC curve via the Mann-Whitney statistic; tied scores
/// across classes count one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<f64, MetricError> {
    check_inputs(scores, labels)?;
    let n_pos = labels.iter().filter(|&&l| l).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(MetricError::SingleClass);
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    // Sum of average ranks of the positives.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        let avg_rank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += avg_rank * idx[i..=j].iter().filter(|&&t| labels[t]).count() as f64;
        i = j + 1;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bins_and_labels_at_edges() {
        let r = RelevanceResult::from_score("a", 0.995);
        assert!(r.label);
        assert_eq!(r.bin, ">=99%");
        let r = RelevanceResult::from_score("b", 0.5);
        assert!(r.label);
        assert_eq!(r.bin, "[50%,80%)");
        let r = RelevanceResult::from_score("c", 0.004);
        assert!(!r.label);
        assert_eq!(r.bin, "<1%");
        assert_eq!(bin_index(1.0), 0);
        assert_eq!(bin_index(0.0), 7);
        assert_eq!(bin_index(0.99), 0);
        assert_eq!(bin_index(0.01), 6);
    }

    #[test]
    fn precision_at_k_hand_example() {
        // 10 items ranked by score; positives at ranks 1, 2 and 4.
        let scores: Vec<f64> = (0..10).map(|i| 1.0 - i as f64 / 10.0).collect();
        let mut labels = vec![false; 10];
        for r in [0, 1, 3] {
            labels[r] = true;
        }
        assert_eq!(precision_at_k(&scores, &labels, 4).unwrap(), 0.75);
        assert_eq!(precision_at_k(&scores, &labels, 2).unwrap(), 1.0);
        assert_eq!(precision_at_k(&scores, &labels, 0), Err(MetricError::ZeroCutoff));
    }

    #[test]
    fn ties_rank_by_input_order() {
        assert_eq!(ranking(&[0.5, 0.9, 0.5, 0.5]), vec![1, 0, 2, 3]);
        assert_eq!(precision_at_k(&[0.5, 0.5], &[false, true], 1).unwrap(), 0.0);
    }

    #[test]
    fn short_list_clips_cutoffs() {
        let scores = [0.9, 0.8, 0.7];
        let labels = [true, true, false];
        let r = avg_precision_at_cutoffs(&scores, &labels, &[2, 480]).unwrap();
        assert_eq!(r.clipped, vec![(480, 3)]);
        assert!((r.value - (1.0 + 2.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(avg_precision_at_cutoffs(&[], &[], &DEFAULT_CUTOFFS), Err(MetricError::Empty));
    }

    #[test]
    fn auc_basics() {
        assert_eq!(roc_auc(&[0.1, 0.2, 0.8, 0.9], &[false, false, true, true]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(MetricError::SingleClass));
        // One positive/negative tie counts one half.
        assert_eq!(roc_auc(&[0.5, 0.5], &[true, false]).unwrap(), 0.5);
    }
}
