use serde::{Deserialize, Serialize};

use super::pairing::SelectedKeypoints;
use super::surface::Surface;
use crate::interchange::bundle::PixelBox;

pub const FEATURE_DIM: usize = 17;
/// Normalised heights outside this range are treated as missing.
pub const HEIGHT_RANGE: (f64, f64) = (-0.05, 1.2);
pub const MIN_BOX_HEIGHT: f64 = 1.0;

/// The 17-value person descriptor: 8 normalised keypoint heights above the
/// box bottom (`NaN` when missing), the 8 matching keypoint scores (0 when
/// missing) and a water/ground flag.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PersonFeatures {
    pub heights: [f64; 8],
    pub scores: [f64; 8],
    pub on_water: bool,
}

impl PersonFeatures {
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(FEATURE_DIM);
        v.extend_from_slice(&self.heights);
        v.extend_from_slice(&self.scores);
        v.push(if self.on_water { 1.0 } else { 0.0 });
        v
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FeatureError {
    #[error("box height {0} is at most {MIN_BOX_HEIGHT} pixel")]
    DegenerateBox(f64),
    #[error("support surface must be water or ground")]
    UnsupportedSurface,
}

/// Height of `y` above the box bottom as a share of the box height.
pub fn normalized_height(bbox: &PixelBox, y: f64) -> f64 {
    (bbox.y_max - y) / (bbox.y_max - bbox.y_min)
}

pub fn extract_features(bbox: &PixelBox, keypoints: &SelectedKeypoints, surface: Surface) -> Result<PersonFeatures, FeatureError> {
    let h = bbox.height();
    if !(h > MIN_BOX_HEIGHT) {
        return Err(FeatureError::DegenerateBox(h));
    }
    let on_water = match surface {
        Surface::Water => true,
        Surface::Ground => false,
        Surface::Other => return Err(FeatureError::UnsupportedSurface),
    };
    let mut heights = [f64::NAN; 8];
    let mut scores = [0.0; 8];
    for (i, kp) in keypoints.iter().enumerate() {
        if let Some(kp) = kp {
            let v = normalized_height(bbox, kp.y);
            if v >= HEIGHT_RANGE.0 && v <= HEIGHT_RANGE.1 {
                heights[i] = v;
                scores[i] = kp.score;
            }
        }
    }
    Ok(PersonFeatures {
        heights,
        scores,
        on_water,
    })
}

/// Feature groups: keypoint heights, keypoint scores, surface flag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct FeatureGroups {
    pub heights: bool,
    pub scores: bool,
    pub surface: bool,
}

impl FeatureGroups {
    pub const ALL: Self = Self {
        heights: true,
        scores: true,
        surface: true,
    };

    /// The seven non-empty combinations.
    pub fn combinations() -> Vec<Self> {
        (1u8..8)
            .map(|m| Self {
                heights: m & 1 != 0,
                scores: m & 2 != 0,
                surface: m & 4 != 0,
            })
            .collect()
    }

    pub fn columns(&self) -> Vec<usize> {
        let mut c = Vec::new();
        if self.heights {
            c.extend(0..8);
        }
        if self.scores {
            c.extend(8..16);
        }
        if self.surface {
            c.push(16);
        }
        c
    }

    pub fn name(&self) -> String {
        let mut parts = Vec::new();
        if self.heights {
            parts.push("FG1");
        }
        if self.scores {
            parts.push("FG2");
        }
        if self.surface {
            parts.push("FG3");
        }
        parts.join("+")
    }
}
