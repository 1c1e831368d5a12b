//! Per-image perception bundles.
//!
//! A bundle carries everything the pipeline needs from the deep-learning
//! models, so the pipeline itself never runs a network:
//!
//! * `persons`: detector boxes with the pixel count of their instance mask and
//!   (optionally) the pose skeleton the producer already associated with them;
//! * `skeletons`: pose skeletons the producer did not associate with a box;
//! * `label_map`: the scene segmentation as a run-length-encoded [`LabelMap`];
//! * `dedup_embedding`: the 512-value embedding used for duplicate detection;
//! * `relevance_features`: the concatenated deep features of the relevance
//!   classifier (fixed dimension per dataset).
//!
//! Keypoints use the 18-point pose layout (0 nose, 1 neck, 2-4 right arm,
//! 5-7 left arm, 8-10 right hip/knee/ankle, 11-13 left hip/knee/ankle,
//! 14-17 eyes and ears) and are stored flat as `[x0, y0, s0, x1, y1, s1, ...]`.
//! A keypoint whose score is 0 is absent.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::label_map::LabelMap;

pub const KEYPOINT_COUNT: usize = 18;
pub const DEDUP_EMBEDDING_DIM: usize = 512;

/// Pixel rectangle in image coordinates (y grows downward), serialized as
/// `[x_min, y_min, x_max, y_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 4]", into = "[f64; 4]")]
pub struct PixelBox {
    pub x_min: f64,
    pub y_min: f64,
    pub x_max: f64,
    pub y_max: f64,
}

impl PixelBox {
    pub const fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Self {
        Self {
            x_min,
            y_min,
            x_max,
            y_max,
        }
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    /// Inclusive containment.
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x_min && x <= self.x_max && y >= self.y_min && y <= self.y_max
    }

    pub fn clamped(&self, width: f64, height: f64) -> PixelBox {
        PixelBox::new(
            self.x_min.clamp(0.0, width),
            self.y_min.clamp(0.0, height),
            self.x_max.clamp(0.0, width),
            self.y_max.clamp(0.0, height),
        )
    }

    pub fn is_finite(&self) -> bool {
        self.x_min.is_finite() && self.y_min.is_finite() && self.x_max.is_finite() && self.y_max.is_finite()
    }
}

impl From<[f64; 4]> for PixelBox {
    fn from(v: [f64; 4]) -> Self {
        Self::new(v[0], v[1], v[2], v[3])
    }
}

impl From<PixelBox> for [f64; 4] {
    fn from(b: PixelBox) -> Self {
        [b.x_min, b.y_min, b.x_max, b.y_max]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Keypoint {
    pub x: f64,
    pub y: f64,
    pub score: f64,
    pub present: bool,
}

impl Keypoint {
    pub fn new(x: f64, y: f64, score: f64) -> Self {
        Self {
            x,
            y,
            score,
            present: score > 0.0,
        }
    }

    pub const fn absent() -> Self {
        Self {
            x: 0.0,
            y: 0.0,
            score: 0.0,
            present: false,
        }
    }
}

/// A pose skeleton: [`KEYPOINT_COUNT`] keypoints in the documented order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Skeleton(pub Vec<Keypoint>);

impl Skeleton {
    pub fn absent() -> Self {
        Self(vec![Keypoint::absent(); KEYPOINT_COUNT])
    }

    pub fn keypoints(&self) -> &[Keypoint] {
        &self.0
    }

    pub fn get(&self, index: usize) -> Option<&Keypoint> {
        self.0.get(index).filter(|k| k.present)
    }

    pub fn any_present(&self) -> bool {
        self.0.iter().any(|k| k.present)
    }
}

impl Serialize for Skeleton {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let flat: Vec<f64> = self
            .0
            .iter()
            .flat_map(|k| if k.present { [k.x, k.y, k.score] } else { [0.0, 0.0, 0.0] })
            .collect();
        flat.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Skeleton {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let flat = Vec::<f64>::deserialize(d)?;
        if flat.len() % 3 != 0 {
            return Err(serde::de::Error::custom(format!(
                "keypoint array length {} is not a multiple of 3",
                flat.len()
            )));
        }
        Ok(Skeleton(flat.chunks_exact(3).map(|c| Keypoint::new(c[0], c[1], c[2])).collect()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PersonDetection {
    #[serde(rename = "box")]
    pub bbox: PixelBox,
    pub segment_pixel_count: u64,
    /// Skeleton the producer associated with this box; all-absent when none.
    #[serde(default = "Skeleton::absent")]
    pub keypoints: Skeleton,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PerceptionBundle {
    pub image_ref: String,
    pub width: u32,
    pub height: u32,
    pub persons: Vec<PersonDetection>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub skeletons: Vec<Skeleton>,
    pub label_map: LabelMap,
    pub dedup_embedding: Vec<f64>,
    pub relevance_features: Vec<f64>,
}

impl PerceptionBundle {
    pub fn from_json(s: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("bundle serializes")
    }

    pub fn pixel_count(&self) -> u64 {
        u64::from(self.width) * u64::from(self.height)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Violation {
    /// Dotted path of the offending field, e.g. `persons[2].keypoints`.
    pub field: String,
    pub message: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }

    fn push(&mut self, field: impl Into<String>, message: impl Into<String>) {
        self.violations.push(Violation {
            field: field.into(),
            message: message.into(),
        });
    }
}

/// Lists every invariant violation of `b`. Never fails; an empty report means
/// the bundle is valid.
pub fn validate_bundle(b: &PerceptionBundle) -> ValidationReport {
    let mut report = ValidationReport::default();
    if b.image_ref.is_empty() {
        report.push("image_ref", "must not be empty");
    }
    if b.width == 0 || b.height == 0 {
        report.push("width/height", format!("must be positive, got {}x{}", b.width, b.height));
    }
    if b.dedup_embedding.len() != DEDUP_EMBEDDING_DIM {
        report.push(
            "dedup_embedding length",
            format!("expected {DEDUP_EMBEDDING_DIM}, got {}", b.dedup_embedding.len()),
        );
    }
    if let Some(i) = b.dedup_embedding.iter().position(|v| !v.is_finite()) {
        report.push(format!("dedup_embedding[{i}]"), "non-finite value");
    }
    if let Some(i) = b.relevance_features.iter().position(|v| !v.is_finite()) {
        report.push(format!("relevance_features[{i}]"), "non-finite value");
    }
    let (w, h) = (f64::from(b.width), f64::from(b.height));
    for (i, p) in b.persons.iter().enumerate() {
        let field = format!("persons[{i}]");
        let bx = p.bbox;
        if !bx.is_finite() || bx.x_min >= bx.x_max || bx.y_min >= bx.y_max {
            report.push(format!("{field}.box"), "requires finite x_min < x_max and y_min < y_max");
        } else {
            let c = bx.clamped(w, h);
            if c.x_min >= c.x_max || c.y_min >= c.y_max {
                report.push(format!("{field}.box"), "lies outside the image");
            }
        }
        check_skeleton(&mut report, &format!("{field}.keypoints"), &p.keypoints);
    }
    for (i, s) in b.skeletons.iter().enumerate() {
        check_skeleton(&mut report, &format!("skeletons[{i}]"), s);
    }
    for issue in b.label_map.issues() {
        report.push("label_map", issue.to_string());
    }
    report
}

fn check_skeleton(report: &mut ValidationReport, field: &str, s: &Skeleton) {
    if s.0.len() != KEYPOINT_COUNT {
        report.push(
            field,
            format!("expected {KEYPOINT_COUNT} keypoints, got {}", s.0.len()),
        );
    }
    for (k, kp) in s.0.iter().enumerate() {
        if !(kp.score.is_finite() && (0.0..=1.0).contains(&kp.score)) {
            report.push(format!("{field}[{k}].score"), format!("{} outside [0, 1]", kp.score));
        }
        if kp.present && !(kp.x.is_finite() && kp.y.is_finite()) {
            report.push(format!("{field}[{k}]"), "non-finite coordinates");
        }
    }
}

/// Checks that every bundle shares one relevance-feature dimension; returns
/// the offending image refs.
pub fn check_feature_dims(bundles: &[PerceptionBundle]) -> Result<Option<usize>, Vec<String>> {
    let Some(first) = bundles.first() else {
        return Ok(None);
    };
    let dim = first.relevance_features.len();
    let bad: Vec<String> = bundles
        .iter()
        .filter(|b| b.relevance_features.len() != dim)
        .map(|b| b.image_ref.clone())
        .collect();
    if bad.is_empty() {
        Ok(Some(dim))
    } else {
        Err(bad)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BundleStoreError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("parsing {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
}

/// Loads every `*.json` bundle of a directory, sorted by file name.
pub fn load_bundle_dir(dir: &Path) -> Result<Vec<(PathBuf, Result<PerceptionBundle, BundleStoreError>)>, BundleStoreError> {
    let entries = fs::read_dir(dir).map_err(|source| BundleStoreError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths = Vec::new();
    for e in entries {
        let e = e.map_err(|source| BundleStoreError::Io {
            path: dir.to_path_buf(),
            source,
        })?;
        let path = e.path();
        if path.extension().is_some_and(|x| x == "json") {
            paths.push(path);
        }
    }
    paths.sort();
    Ok(paths
        .into_iter()
        .map(|path| {
            let parsed = fs::read_to_string(&path)
                .map_err(|source| BundleStoreError::Io {
                    path: path.clone(),
                    source,
                })
                .and_then(|s| {
                    PerceptionBundle::from_json(&s).map_err(|source| BundleStoreError::Parse {
                        path: path.clone(),
                        source,
                    })
                });
            (path, parsed)
        })
        .collect())
}

/// Writes bundles as `<image_ref>.json` files.
pub fn write_bundle_dir(dir: &Path, bundles: &[PerceptionBundle]) -> io::Result<()> {
    fs::create_dir_all(dir)?;
    for b in bundles {
        fs::write(dir.join(format!("{}.json", b.image_ref)), b.to_json())?;
    }
    Ok(())
}

/// Indexes bundles by image ref.
pub fn index_bundles(bundles: Vec<PerceptionBundle>) -> BTreeMap<String, PerceptionBundle> {
    bundles.into_iter().map(|b| (b.image_ref.clone(), b)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::interchange::label_map::LabelGrid;

    pub(crate) fn sample_bundle() -> PerceptionBundle {
        let classes = BTreeMap::from([(0, "ground".to_string()), (1, "water".to_string())]);
        let grid = LabelGrid::from_cells(4, 3, 10.0, 10.0, vec![0, 0, 1, 1, 0, 0, 1, 1, 1, 1, 1, 1], classes);
        let mut kps = Skeleton::absent();
        kps.0[0] = Keypoint::new(15.0, 5.0, 0.9);
        kps.0[8] = Keypoint::new(14.0, 18.0, 0.7);
        PerceptionBundle {
            image_ref: "img-1".into(),
            width: 40,
            height: 30,
            persons: vec![PersonDetection {
                bbox: PixelBox::new(10.0, 2.0, 20.0, 22.0),
                segment_pixel_count: 120,
                keypoints: kps,
            }],
            skeletons: vec![],
            label_map: grid.encode(),
            dedup_embedding: vec![0.5; DEDUP_EMBEDDING_DIM],
            relevance_features: vec![1.0, 2.0, 3.0],
        }
    }

    #[test]
    fn valid_bundle_has_empty_report() {
        let b = sample_bundle();
        assert!(validate_bundle(&b).is_valid(), "{:?}", validate_bundle(&b));
    }

    #[test]
    fn short_embedding_is_reported() {
        let mut b = sample_bundle();
        b.dedup_embedding.pop();
        let r = validate_bundle(&b);
        assert_eq!(r.violations.len(), 1);
        assert_eq!(r.violations[0].field, "dedup_embedding length");
    }

    #[test]
    fn short_rle_row_names_the_row() {
        let mut b = sample_bundle();
        b.label_map.rows[2] = vec![1, 3];
        let r = validate_bundle(&b);
        assert_eq!(r.violations.len(), 1);
        assert!(r.violations[0].message.contains("row 2"), "{}", r.violations[0]);
    }

    #[test]
    fn keypoint_problems_are_reported() {
        let mut b = sample_bundle();
        b.persons[0].keypoints.0[3].score = 1.5;
        b.persons[0].keypoints.0.pop();
        b.persons[0].bbox = PixelBox::new(50.0, 2.0, 60.0, 22.0);
        let r = validate_bundle(&b);
        let fields: Vec<&str> = r.violations.iter().map(|v| v.field.as_str()).collect();
        assert_eq!(fields, vec!["persons[0].box", "persons[0].keypoints", "persons[0].keypoints[3].score"]);
    }

    #[test]
    fn flat_keypoints_roundtrip() {
        let b = sample_bundle();
        let json = b.to_json();
        assert!(json.contains("\"keypoints\":[15.0,5.0,0.9,0.0,0.0,0.0"));
        let back = PerceptionBundle::from_json(&json).unwrap();
        assert_eq!(back, b);
    }

    #[test]
    fn ragged_keypoint_array_fails_to_parse() {
        let json = sample_bundle().to_json().replace("[15.0,5.0,0.9,", "[15.0,5.0,");
        assert!(PerceptionBundle::from_json(&json).is_err());
    }

    #[test]
    fn feature_dims_must_agree() {
        let a = sample_bundle();
        let mut b = sample_bundle();
        b.image_ref = "img-2".into();
        b.relevance_features.push(4.0);
        assert_eq!(check_feature_dims(&[a.clone()]), Ok(Some(3)));
        assert_eq!(check_feature_dims(&[a, b]), Err(vec!["img-2".to_string()]));
    }
}
