//! Stick-figure flood scenes with planted water levels.
//!
//! A person is a body of length `L` pixels with keypoints at fixed shares of
//! its height above the feet. Water at level `w` (share of the body) hides
//! everything below it, so the detector box spans from the waterline to the
//! head. Keypoints under water are either missed or reported near the
//! waterline with low scores.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::interchange::bundle::{Keypoint, PersonDetection, PixelBox, Skeleton, DEDUP_EMBEDDING_DIM, KEYPOINT_COUNT};
use crate::interchange::{LabelGrid, PerceptionBundle, WaterLevelClass};

pub const GROUND_ID: u32 = 0;
pub const WATER_ID: u32 = 1;
pub const SKY_ID: u32 = 2;
pub const CAR_ID: u32 = 3;
pub const PERSON_ID: u32 = 4;

pub fn class_registry() -> BTreeMap<u32, String> {
    BTreeMap::from([
        (GROUND_ID, "ground".to_string()),
        (WATER_ID, "water".to_string()),
        (SKY_ID, "sky".to_string()),
        (CAR_ID, "car".to_string()),
        (PERSON_ID, "person".to_string()),
    ])
}

/// Keypoint heights above the feet as a share of body length, in the
/// 18-point order.
const BODY_HEIGHTS: [f64; KEYPOINT_COUNT] = [
    0.93, 0.82, // nose, neck
    0.81, 0.66, 0.52, // right shoulder, elbow, wrist
    0.81, 0.66, 0.52, // left shoulder, elbow, wrist
    0.52, 0.28, 0.04, // right hip, knee, ankle
    0.52, 0.28, 0.04, // left hip, knee, ankle
    0.95, 0.95, 0.94, 0.94, // eyes, ears
];
/// Horizontal offsets from the body axis as a share of body length.
const BODY_OFFSETS: [f64; KEYPOINT_COUNT] = [
    0.0, 0.0, -0.09, -0.12, -0.13, 0.09, 0.12, 0.13, -0.05, -0.06, -0.06, 0.05, 0.06, 0.06, -0.02, 0.02, -0.04, 0.04,
];

/// Water level range (share of body length) per class.
pub fn waterline_range(c: WaterLevelClass) -> (f64, f64) {
    match c {
        WaterLevelClass::N => (0.0, 0.0),
        WaterLevelClass::A => (0.05, 0.12),
        WaterLevelClass::B => (0.22, 0.36),
        WaterLevelClass::C => (0.46, 0.58),
        WaterLevelClass::D => (0.68, 0.80),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SceneConfig {
    pub n_images: usize,
    pub min_persons: usize,
    pub max_persons: usize,
    /// Share of flood images (class A-D) that contain one dry-standing
    /// distractor person whose true class is N.
    pub distractor_rate: f64,
    /// Share of images of class N.
    pub n_share: f64,
    /// Share of persons whose skeleton is shipped unassociated.
    pub loose_skeleton_rate: f64,
    pub width: u32,
    pub height: u32,
    pub label_downsample: u32,
    pub relevance_dim: usize,
    pub seed: u64,
    pub prefix: String,
}

impl Default for SceneConfig {
    fn default() -> Self {
        Self {
            n_images: 500,
            min_persons: 1,
            max_persons: 4,
            distractor_rate: 0.2,
            n_share: 0.5,
            loose_skeleton_rate: 0.3,
            width: 640,
            height: 480,
            label_downsample: 4,
            relevance_dim: 32,
            seed: 7,
            prefix: "scene".into(),
        }
    }
}

/// Planted truth of one generated person.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceTruth {
    pub image_ref: String,
    pub person: usize,
    pub class: WaterLevelClass,
    pub distractor: bool,
    pub waterline: f64,
    pub surface: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageTruth {
    pub image_ref: String,
    pub class: WaterLevelClass,
    pub flood_relevant: bool,
}

#[derive(Debug, Clone, Default)]
pub struct SceneCorpus {
    pub bundles: Vec<PerceptionBundle>,
    pub images: Vec<ImageTruth>,
    pub instances: Vec<InstanceTruth>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Stand {
    Water,
    Ground,
    Car,
}

struct PersonSpec {
    class: WaterLevelClass,
    distractor: bool,
    stand: Stand,
}

/// Options for one generated image.
#[derive(Debug, Clone, Copy)]
pub struct ImageSpec {
    pub class: WaterLevelClass,
    pub persons: usize,
    pub distractor: bool,
    pub flood_relevant: bool,
}

pub struct SceneGenerator {
    cfg: SceneConfig,
    rng: ChaCha8Rng,
}

impl SceneGenerator {
    pub fn new(cfg: SceneConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        Self { cfg, rng }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    /// Draws the class, person count and distractor flag of a scene.
    pub fn draw_spec(&mut self) -> ImageSpec {
        let class = if self.rng.random::<f64>() < self.cfg.n_share {
            WaterLevelClass::N
        } else {
            WaterLevelClass::ALL[self.rng.random_range(1..5)]
        };
        let mut persons = self.rng.random_range(self.cfg.min_persons..=self.cfg.max_persons.max(self.cfg.min_persons));
        let distractor = class != WaterLevelClass::N && self.rng.random::<f64>() < self.cfg.distractor_rate;
        if distractor {
            persons = persons.clamp(2, 4);
        }
        ImageSpec {
            class,
            persons: persons.min(4),
            distractor,
            flood_relevant: true,
        }
    }

    pub fn corpus(mut self) -> SceneCorpus {
        let mut out = SceneCorpus::default();
        for i in 0..self.cfg.n_images {
            let spec = self.draw_spec();
            let image_ref = format!("{}-{i:05}", self.cfg.prefix);
            self.image(&image_ref, spec, &mut out);
        }
        out
    }

    /// Generates one image from `spec` and appends it with its truth.
    pub fn image(&mut self, image_ref: &str, spec: ImageSpec, out: &mut SceneCorpus) {
        let cfg = self.cfg.clone();
        let rng = &mut self.rng;
        let (w, h) = (cfg.width, cfg.height);
        let ds = cfg.label_downsample.max(1);
        let (gw, gh) = (w.div_ceil(ds), h.div_ceil(ds));
        let horizon = (0.3 * gh as f64) as u32;
        let base = if spec.class == WaterLevelClass::N { GROUND_ID } else { WATER_ID };
        let mut cells: Vec<u32> = (0..gh).flat_map(|r| (0..gw).map(move |_| if r < horizon { SKY_ID } else { base })).collect();

        let distractor_slot = spec.distractor.then(|| rng.random_range(0..spec.persons));
        let persons: Vec<PersonSpec> = (0..spec.persons)
            .map(|p| {
                let distractor = distractor_slot == Some(p);
                let class = if distractor { WaterLevelClass::N } else { spec.class };
                let u: f64 = rng.random();
                let stand = if u < 0.03 {
                    Stand::Car
                } else if class == WaterLevelClass::N {
                    if u < 0.88 {
                        Stand::Ground
                    } else {
                        Stand::Water
                    }
                } else if u < 0.93 {
                    Stand::Water
                } else {
                    Stand::Ground
                };
                PersonSpec { class, distractor, stand }
            })
            .collect();

        let slot_w = f64::from(w) / 4.0;
        let mut slots: Vec<usize> = (0..4).collect();
        for i in (1..4).rev() {
            slots.swap(i, rng.random_range(0..=i));
        }
        let jitter = Normal::new(0.0, 1.0).expect("unit normal");
        let mut detections = Vec::new();
        let mut loose = Vec::new();
        for (p, spec_p) in persons.iter().enumerate() {
            let (lo, hi) = waterline_range(spec_p.class);
            let wl = if hi > lo { rng.random_range(lo..hi) } else { 0.0 };
            let body = rng.random_range(140.0..260.0);
            let box_h = (1.0 - wl) * body;
            let top = rng.random_range(5.0..(f64::from(h) - 2.0 - 1.25 * box_h).max(6.0));
            let feet = top + body;
            let waterline_y = top + box_h;
            let cx = slot_w * (slots[p] as f64 + 0.5) + rng.random_range(-15.0..15.0);
            let half_w = 0.18 * body;
            let bbox = PixelBox::new((cx - half_w).max(0.0), top, (cx + half_w).min(f64::from(w)), waterline_y);

            let mut kps = Vec::with_capacity(KEYPOINT_COUNT);
            for k in 0..KEYPOINT_COUNT {
                let x = cx + BODY_OFFSETS[k] * body;
                if BODY_HEIGHTS[k] > wl {
                    if rng.random::<f64>() < 0.95 {
                        let y = feet - BODY_HEIGHTS[k] * body + 0.008 * body * jitter.sample(rng);
                        kps.push(Keypoint::new(x, y.min(waterline_y), rng.random_range(0.35..0.95)));
                    } else {
                        kps.push(Keypoint::absent());
                    }
                } else if rng.random::<f64>() < 0.7 {
                    let y = waterline_y + 0.02 * body * jitter.sample(rng);
                    kps.push(Keypoint::new(x, y, rng.random_range(0.05..0.5)));
                } else {
                    kps.push(Keypoint::absent());
                }
            }
            let skeleton = Skeleton(kps);
            let mut det = PersonDetection {
                bbox,
                segment_pixel_count: (0.55 * bbox.width() * bbox.height()).round() as u64,
                keypoints: Skeleton::absent(),
            };
            if rng.random::<f64>() < cfg.loose_skeleton_rate {
                loose.push(skeleton);
            } else {
                det.keypoints = skeleton;
            }

            let stand_id = match spec_p.stand {
                Stand::Water => WATER_ID,
                Stand::Ground => GROUND_ID,
                Stand::Car => CAR_ID,
            };
            let strip = PixelBox::new(bbox.x_min, bbox.y_max, bbox.x_max, bbox.y_max + 0.25 * box_h);
            paint(&mut cells, gw, gh, ds, &bbox, PERSON_ID);
            paint(&mut cells, gw, gh, ds, &strip, stand_id);
            detections.push(det);
            out.instances.push(InstanceTruth {
                image_ref: image_ref.to_string(),
                person: p,
                class: spec_p.class,
                distractor: spec_p.distractor,
                waterline: wl,
                surface: match spec_p.stand {
                    Stand::Water => "water",
                    Stand::Ground => "ground",
                    Stand::Car => "car",
                }
                .to_string(),
            });
        }

        let grid = LabelGrid::from_cells(gw, gh, f64::from(ds), f64::from(ds), cells, class_registry());
        let bundle = PerceptionBundle {
            image_ref: image_ref.to_string(),
            width: w,
            height: h,
            persons: detections,
            skeletons: loose,
            label_map: grid.encode(),
            dedup_embedding: random_embedding(rng),
            relevance_features: relevance_features(rng, cfg.relevance_dim, spec.class, spec.flood_relevant),
        };
        out.images.push(ImageTruth {
            image_ref: image_ref.to_string(),
            class: spec.class,
            flood_relevant: spec.flood_relevant,
        });
        out.bundles.push(bundle);
    }
}

/// Sets every label cell whose centre lies in `region` (image pixels).
fn paint(cells: &mut [u32], gw: u32, gh: u32, ds: u32, region: &PixelBox, id: u32) {
    let s = f64::from(ds);
    for r in 0..gh {
        let cy = (f64::from(r) + 0.5) * s;
        if cy < region.y_min || cy >= region.y_max {
            continue;
        }
        for c in 0..gw {
            let cx = (f64::from(c) + 0.5) * s;
            if cx >= region.x_min && cx < region.x_max {
                cells[(r * gw + c) as usize] = id;
            }
        }
    }
}

/// Standard normal embedding; unrelated images end up about 32 apart.
pub fn random_embedding(rng: &mut impl Rng) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    (0..DEDUP_EMBEDDING_DIM).map(|_| n.sample(rng)).collect()
}

/// Copy of `base` with small noise, as produced by a re-post or crop.
pub fn near_duplicate(rng: &mut impl Rng, base: &[f64], noise_sd: f64) -> Vec<f64> {
    let n = Normal::new(0.0, noise_sd).expect("finite sd");
    base.iter().map(|v| v + n.sample(rng)).collect()
}

/// Global image features: one dimension tracks flood relevance, five carry a
/// noisy one-hot of the water level class, the rest is noise.
pub fn relevance_features(rng: &mut impl Rng, dim: usize, class: WaterLevelClass, relevant: bool) -> Vec<f64> {
    let n = Normal::new(0.0, 1.0).expect("unit normal");
    let mut v: Vec<f64> = (0..dim).map(|_| n.sample(rng)).collect();
    if dim > 0 {
        v[0] += if relevant { 1.6 } else { -1.6 };
    }
    if dim > 6 && relevant {
        v[1 + class.index()] += 1.3;
    }
    v
}

/// A bag per image (persons that survive filtering) with, for every bag
/// instance, the index of its planted truth in `corpus.instances`.
pub fn mil_bags(corpus: &SceneCorpus) -> (Vec<crate::waterlevel::Bag>, Vec<Vec<usize>>) {
    let mut truth_of: BTreeMap<(&str, usize), usize> = BTreeMap::new();
    for (i, t) in corpus.instances.iter().enumerate() {
        truth_of.insert((t.image_ref.as_str(), t.person), i);
    }
    let mut bags = Vec::new();
    let mut truth = Vec::new();
    for (b, img) in corpus.bundles.iter().zip(&corpus.images) {
        let Ok(ip) = crate::waterlevel::image_persons(b) else { continue };
        if ip.persons.is_empty() {
            continue;
        }
        truth.push(ip.persons.iter().map(|(p, _)| truth_of[&(b.image_ref.as_str(), *p)]).collect());
        bags.push(crate::waterlevel::Bag {
            image_ref: b.image_ref.clone(),
            label: img.class,
            instances: ip.rows(),
        });
    }
    (bags, truth)
}
