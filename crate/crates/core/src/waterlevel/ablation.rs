use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::features::FeatureGroups;
use super::predict::predict_image;
use super::pseudo::{train_pseudo_label, Bag, PseudoLabelConfig};
use crate::gbdt::GbdtError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub groups: FeatureGroups,
    pub name: String,
    /// Image-level accuracy on the test bags.
    pub accuracy: f64,
}

/// Keeps only the columns of `groups` in every instance.
pub fn restrict_bags(bags: &[Bag], groups: FeatureGroups) -> Vec<Bag> {
    let cols = groups.columns();
    bags.iter()
        .map(|b| Bag {
            image_ref: b.image_ref.clone(),
            label: b.label,
            instances: b.instances.iter().map(|r| cols.iter().map(|&c| r[c]).collect()).collect(),
        })
        .collect()
}

/// Image-level accuracy of a pseudo-labelled model on `test`.
pub fn image_accuracy(train: &[Bag], test: &[Bag], cfg: &PseudoLabelConfig) -> Result<f64, GbdtError> {
    let model = train_pseudo_label(train, cfg)?.model;
    let hits = test
        .par_iter()
        .map(|b| predict_image(&model, &b.instances).map(|p| usize::from(p.class == b.label)))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(hits.iter().sum::<usize>() as f64 / test.len().max(1) as f64)
}

/// Trains and scores every non-empty feature-group combination.
pub fn feature_group_ablation(train: &[Bag], test: &[Bag], cfg: &PseudoLabelConfig) -> Result<Vec<AblationRow>, GbdtError> {
    FeatureGroups::combinations()
        .into_iter()
        .map(|g| {
            let accuracy = image_accuracy(&restrict_bags(train, g), &restrict_bags(test, g), cfg)?;
            Ok(AblationRow {
                groups: g,
                name: g.name(),
                accuracy,
            })
        })
        .collect()
}
