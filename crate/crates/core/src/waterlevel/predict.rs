use serde::{Deserialize, Serialize};

use super::features::{extract_features, PersonFeatures};
use super::pairing::{pair_and_filter, DropReason};
use super::surface::{support_surface, Surface};
use crate::gbdt::{argmax, GbdtError, TreeEnsemble};
use crate::interchange::{LabelMapError, PerceptionBundle, WaterLevelClass};

/// Persons of one image that survived filtering, with their features.
#[derive(Debug, Clone, PartialEq)]
pub struct ImagePersons {
    pub image_ref: String,
    /// `(index into bundle.persons, features)`.
    pub persons: Vec<(usize, PersonFeatures)>,
    pub dropped: Vec<(usize, DropReason)>,
    /// Persons whose support surface was neither water nor ground.
    pub off_surface: Vec<usize>,
    /// Persons whose surface came from the bottom box row.
    pub surface_fallbacks: Vec<usize>,
}

impl ImagePersons {
    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.persons.iter().map(|(_, f)| f.to_vec()).collect()
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ImageFeatureError {
    #[error("{image_ref}: label map: {source}")]
    LabelMap { image_ref: String, source: LabelMapError },
}

/// Full per-image feature pipeline: pairing and filters, support surface,
/// feature extraction. Persons standing on anything other than water or
/// ground are excluded; boxes too flat for features are dropped.
pub fn image_persons(bundle: &PerceptionBundle) -> Result<ImagePersons, ImageFeatureError> {
    let map_err = |source| ImageFeatureError::LabelMap {
        image_ref: bundle.image_ref.clone(),
        source,
    };
    let grid = bundle.label_map.decode().map_err(map_err)?;
    let pairing = pair_and_filter(bundle);
    let mut out = ImagePersons {
        image_ref: bundle.image_ref.clone(),
        persons: Vec::new(),
        dropped: pairing.dropped,
        off_surface: Vec::new(),
        surface_fallbacks: Vec::new(),
    };
    for p in pairing.retained {
        let q = match support_surface(&grid, &p.bbox, f64::from(bundle.width), f64::from(bundle.height)) {
            Ok(q) => q,
            Err(LabelMapError::EmptyRegion) => {
                out.off_surface.push(p.person);
                continue;
            }
            Err(e) => return Err(map_err(e)),
        };
        if q.fallback {
            out.surface_fallbacks.push(p.person);
        }
        if q.surface == Surface::Other {
            out.off_surface.push(p.person);
            continue;
        }
        if let Ok(f) = extract_features(&p.bbox, &p.keypoints, q.surface) {
            out.persons.push((p.person, f));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PersonPrediction {
    pub class: WaterLevelClass,
    pub confidence: f64,
    pub proba: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImagePrediction {
    pub class: WaterLevelClass,
    pub confidence: f64,
    pub persons: Vec<PersonPrediction>,
    /// Index of the person whose probabilities represent the image.
    pub winner: Option<usize>,
    /// Probability vector of the winning person; one-hot N without persons.
    pub local_proba: Vec<f64>,
    pub no_persons: bool,
    /// Number of persons voting (not predicted N).
    pub voters: usize,
}

/// Image-level water level from per-person feature rows.
///
/// Persons predicted N are discarded and the remaining persons vote. A tied
/// vote goes to the tied class holding the most confident single person
/// (the more severe class if that confidence is also tied). If every person is
/// N the image is N with the highest N confidence; without persons the image
/// is N with confidence 1 and `no_persons` set.
pub fn predict_image(model: &TreeEnsemble, rows: &[Vec<f64>]) -> Result<ImagePrediction, GbdtError> {
    if model.num_classes != WaterLevelClass::COUNT {
        return Err(GbdtError::InvalidModel(format!(
            "water-level model must have {} classes, has {}",
            WaterLevelClass::COUNT,
            model.num_classes
        )));
    }
    let mut persons = Vec::with_capacity(rows.len());
    for r in rows {
        let proba = model.predict_proba(r)?;
        let (k, confidence) = argmax(&proba);
        persons.push(PersonPrediction {
            class: WaterLevelClass::from_index(k).expect("five classes"),
            confidence,
            proba,
        });
    }
    Ok(aggregate(persons))
}

/// The voting rule of [`predict_image`] applied to per-person predictions.
pub fn aggregate(persons: Vec<PersonPrediction>) -> ImagePrediction {
    if persons.is_empty() {
        let mut local = vec![0.0; WaterLevelClass::COUNT];
        local[WaterLevelClass::N.index()] = 1.0;
        return ImagePrediction {
            class: WaterLevelClass::N,
            confidence: 1.0,
            persons,
            winner: None,
            local_proba: local,
            no_persons: true,
            voters: 0,
        };
    }
    let mut votes = [0usize; WaterLevelClass::COUNT];
    // Most confident person per class: (confidence, index).
    let mut top: [Option<(f64, usize)>; WaterLevelClass::COUNT] = [None; WaterLevelClass::COUNT];
    for (i, p) in persons.iter().enumerate() {
        let k = p.class.index();
        votes[k] += 1;
        if top[k].is_none_or(|(c, _)| p.confidence > c) {
            top[k] = Some((p.confidence, i));
        }
    }
    let voters = persons.len() - votes[WaterLevelClass::N.index()];
    let winner_class = if voters == 0 {
        WaterLevelClass::N
    } else {
        let max_votes = WaterLevelClass::ALL[1..].iter().map(|c| votes[c.index()]).max().unwrap_or(0);
        WaterLevelClass::ALL[1..]
            .iter()
            .copied()
            .filter(|c| votes[c.index()] == max_votes)
            .max_by(|a, b| {
                let ca = top[a.index()].map_or(0.0, |t| t.0);
                let cb = top[b.index()].map_or(0.0, |t| t.0);
                ca.total_cmp(&cb).then(a.cmp(b))
            })
            .expect("at least one voting class")
    };
    let (confidence, winner) = top[winner_class.index()].expect("winning class has a person");
    ImagePrediction {
        class: winner_class,
        confidence,
        local_proba: persons[winner].proba.clone(),
        persons,
        winner: Some(winner),
        no_persons: false,
        voters,
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FuseError {
    #[error("probability vectors have lengths {0} and {1}")]
    LengthMismatch(usize, usize),
    #[error("weight {0} is outside [0, 1]")]
    BadWeight(f64),
    #[error("vector does not sum to 1 (sum {0})")]
    NotNormalized(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fused {
    pub class: usize,
    pub proba: Vec<f64>,
}

/// Linear blend `w * local + (1 - w) * global` and its argmax (lowest index
/// on ties).
pub fn fuse(local: &[f64], global: &[f64], w: f64) -> Result<Fused, FuseError> {
    if local.len() != global.len() || local.is_empty() {
        return Err(FuseError::LengthMismatch(local.len(), global.len()));
    }
    if !(0.0..=1.0).contains(&w) {
        return Err(FuseError::BadWeight(w));
    }
    for v in [local, global] {
        let s: f64 = v.iter().sum();
        if (s - 1.0).abs() > 1e-6 || v.iter().any(|p| !(*p >= 0.0)) {
            return Err(FuseError::NotNormalized(s));
        }
    }
    let proba: Vec<f64> = local.iter().zip(global).map(|(l, g)| w * l + (1.0 - w) * g).collect();
    Ok(Fused {
        class: argmax(&proba).0,
        proba,
    })
}
