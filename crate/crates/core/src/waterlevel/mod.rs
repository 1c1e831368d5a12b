//! Water-level estimation from people in flood images.
//!
//! Each usable person yields a 17-value descriptor: how high eight body
//! keypoints sit above the bottom of the person's box (as a share of the box
//! height), the detector scores of those keypoints, and whether the person
//! stands on water or ground. A boosted-tree model classifies persons; images
//! take the majority of their non-N persons. Training treats images as bags
//! of persons and refines the per-person labels by pseudo labelling.

mod ablation;
mod features;
mod pairing;
mod predict;
mod pseudo;
mod surface;

pub use ablation::{feature_group_ablation, image_accuracy, restrict_bags, AblationRow};
pub use features::{extract_features, normalized_height, FeatureError, FeatureGroups, PersonFeatures, FEATURE_DIM, HEIGHT_RANGE, MIN_BOX_HEIGHT};
pub use pairing::{
    pair_and_filter, present_count, select_keypoints, DropReason, PairingOutcome, RetainedPerson, SelectedKeypoints,
    MIN_PRESENT_KEYPOINTS, MIN_SEGMENT_SHARE, SELECTED_KEYPOINTS,
};
pub use predict::{aggregate, fuse, image_persons, predict_image, FuseError, Fused, ImageFeatureError, ImagePersons, ImagePrediction, PersonPrediction};
pub use pseudo::{
    split_bags, train_on_bag_labels, train_pseudo_label, Bag, InstanceLabelState, IterationRecord, LabelOrigin, PseudoLabelConfig,
    PseudoLabelOutcome, DEFAULT_CONF_THRESHOLD, DEFAULT_MAX_ITERS, DEFAULT_RELABEL_FOLDS, relabel_fold_of,
};
pub use surface::{support_surface, Surface, SurfaceQuery, STRIP_HEIGHT_SHARE};
