//! A small synthetic study area: a square grid of tracts with a circular
//! flood, geotagged posts whose images reflect the local water level, damage
//! claims concentrated in the flood and a matching depth raster.

use std::collections::BTreeMap;

use chrono::NaiveDate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::scenes::{near_duplicate, ImageSpec, SceneConfig, SceneCorpus, SceneGenerator};
use crate::geomap::geometry::LocalPlane;
use crate::interchange::ascii_grid::DEFAULT_NODATA;
use crate::interchange::{
    AsciiGrid, BagLabel, ClaimPoint, GeoBox, GeoPoint, LocationKind, Polygon, Post, RelevanceLabel, TractGeometry,
    WaterLevelClass,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorldConfig {
    pub seed: u64,
    pub grid: usize,
    pub tract_deg: f64,
    pub origin_lon: f64,
    pub origin_lat: f64,
    /// Flood centre as a share of the study area extent.
    pub flood_center: [f64; 2],
    pub flood_radius_m: f64,
    pub n_posts: usize,
    pub duplicate_rate: f64,
    pub instagram_rate: f64,
    pub bbox_rate: f64,
    pub centroid_rate: f64,
    pub relevance_train: usize,
    pub waterlevel_train: usize,
    pub depth_cells: usize,
    /// Person and image parameters; `n_images`, `seed` and `prefix` are
    /// ignored here.
    pub scenes: SceneConfig,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            seed: 2017,
            grid: 10,
            tract_deg: 0.01,
            origin_lon: -95.45,
            origin_lat: 29.70,
            flood_center: [0.65, 0.35],
            flood_radius_m: 3500.0,
            n_posts: 240,
            duplicate_rate: 0.1,
            instagram_rate: 0.15,
            bbox_rate: 0.1,
            centroid_rate: 0.03,
            relevance_train: 200,
            waterlevel_train: 300,
            depth_cells: 200,
            scenes: SceneConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct WorldTruth {
    pub flooded_tracts: BTreeMap<String, bool>,
    /// Post id of the original for every re-posted image.
    pub duplicates: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub struct World {
    pub tracts: Vec<TractGeometry>,
    pub posts: Vec<Post>,
    pub scenes: SceneCorpus,
    pub relevance_labels: Vec<RelevanceLabel>,
    pub bag_labels: Vec<BagLabel>,
    pub claims: Vec<ClaimPoint>,
    pub depth: AsciiGrid,
    pub city_centroids: Vec<GeoPoint>,
    pub truth: WorldTruth,
}

struct Area {
    cfg: WorldConfig,
    plane: LocalPlane,
    center: GeoPoint,
}

impl Area {
    fn extent(&self) -> GeoBox {
        let span = self.cfg.grid as f64 * self.cfg.tract_deg;
        GeoBox::new(self.cfg.origin_lon, self.cfg.origin_lat, self.cfg.origin_lon + span, self.cfg.origin_lat + span)
    }

    /// Flood severity in `[0, 1]`, zero outside the flood.
    fn severity(&self, p: GeoPoint) -> f64 {
        (1.0 - self.plane.distance_m(p, self.center) / self.cfg.flood_radius_m).max(0.0)
    }

    fn random_point(&self, rng: &mut impl Rng) -> GeoPoint {
        let e = self.extent();
        GeoPoint::new(rng.random_range(e.min_lon..e.max_lon), rng.random_range(e.min_lat..e.max_lat))
    }
}

fn class_for(severity: f64) -> WaterLevelClass {
    match severity {
        s if s <= 0.0 => WaterLevelClass::N,
        s if s < 0.25 => WaterLevelClass::A,
        s if s < 0.5 => WaterLevelClass::B,
        s if s < 0.75 => WaterLevelClass::C,
        _ => WaterLevelClass::D,
    }
}

pub fn tract_id(col: usize, row: usize) -> String {
    format!("T{row:02}{col:02}")
}

pub fn generate_world(cfg: &WorldConfig) -> World {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let span = cfg.grid as f64 * cfg.tract_deg;
    let center = GeoPoint::new(
        cfg.origin_lon + cfg.flood_center[0] * span,
        cfg.origin_lat + cfg.flood_center[1] * span,
    );
    let mid = GeoPoint::new(cfg.origin_lon + 0.5 * span, cfg.origin_lat + 0.5 * span);
    let area = Area {
        cfg: cfg.clone(),
        plane: LocalPlane::new(mid),
        center,
    };

    let mut tracts = Vec::with_capacity(cfg.grid * cfg.grid);
    let mut truth = WorldTruth::default();
    for row in 0..cfg.grid {
        for col in 0..cfg.grid {
            let x0 = cfg.origin_lon + col as f64 * cfg.tract_deg;
            let y0 = cfg.origin_lat + row as f64 * cfg.tract_deg;
            let id = tract_id(col, row);
            let c = GeoPoint::new(x0 + 0.5 * cfg.tract_deg, y0 + 0.5 * cfg.tract_deg);
            truth.flooded_tracts.insert(id.clone(), area.severity(c) > 0.0);
            tracts.push(TractGeometry {
                tract_id: id,
                polygons: vec![Polygon::rectangle(x0, y0, x0 + cfg.tract_deg, y0 + cfg.tract_deg)],
            });
        }
    }

    let mut gen = SceneGenerator::new(SceneConfig {
        seed: rng.random(),
        ..cfg.scenes.clone()
    });
    let mut scenes = SceneCorpus::default();

    let mut relevance_labels = Vec::with_capacity(cfg.relevance_train);
    for i in 0..cfg.relevance_train {
        let relevant = i % 2 == 0;
        let mut spec = gen.draw_spec();
        if !relevant {
            spec.class = WaterLevelClass::N;
            spec.distractor = false;
        }
        spec.flood_relevant = relevant;
        let image_ref = format!("rel-train-{i:04}");
        gen.image(&image_ref, spec, &mut scenes);
        relevance_labels.push(RelevanceLabel {
            image_ref,
            label: u8::from(relevant),
        });
    }
    let mut bag_labels = Vec::with_capacity(cfg.waterlevel_train);
    for i in 0..cfg.waterlevel_train {
        let spec = gen.draw_spec();
        let image_ref = format!("wl-train-{i:04}");
        gen.image(&image_ref, spec, &mut scenes);
        bag_labels.push(BagLabel {
            image_ref,
            bag_label: spec.class,
        });
    }

    let t0 = NaiveDate::from_ymd_opt(2017, 8, 25).and_then(|d| d.and_hms_opt(0, 0, 0)).map(|d| d.and_utc().timestamp()).unwrap_or(1);
    let window = 11 * 86_400;
    let extent = area.extent();
    let mut posts: Vec<Post> = Vec::with_capacity(cfg.n_posts);
    let mut n = 0;
    while posts.len() < cfg.n_posts {
        let id = format!("p{n:05}");
        let image_ref = format!("img-{n:05}");
        n += 1;
        if !posts.is_empty() && rng.random::<f64>() < cfg.duplicate_rate {
            let src = posts[rng.random_range(0..posts.len())].clone();
            let Some(orig) = scenes.bundles.iter().position(|b| b.image_ref == src.image_ref()) else {
                continue;
            };
            let mut copy = scenes.bundles[orig].clone();
            copy.image_ref = image_ref.clone();
            copy.dedup_embedding = near_duplicate(&mut rng, &copy.dedup_embedding, 0.1);
            let mut img = scenes.images[orig].clone();
            img.image_ref = image_ref.clone();
            let instances: Vec<_> = scenes.instances.iter().filter(|t| t.image_ref == src.image_ref()).cloned().collect();
            for mut t in instances {
                t.image_ref = image_ref.clone();
                scenes.instances.push(t);
            }
            scenes.bundles.push(copy);
            scenes.images.push(img);
            let ts = src.timestamp() + rng.random_range(600..86_400);
            let post = Post::new(&id, ts, src.location_kind(), src.point(), src.bbox(), &image_ref, Some("repost".into()))
                .expect("valid repost");
            truth.duplicates.insert(id, src.id().to_string());
            posts.push(post);
            continue;
        }

        let p = area.random_point(&mut rng);
        let sev = area.severity(p);
        let class = class_for(sev);
        let relevant = if sev > 0.0 { rng.random::<f64>() < 0.9 } else { rng.random::<f64>() < 0.35 };
        let mut spec = gen.draw_spec();
        spec = ImageSpec {
            class: if relevant { class } else { WaterLevelClass::N },
            distractor: relevant && class != WaterLevelClass::N && spec.distractor,
            flood_relevant: relevant,
            persons: if rng.random::<f64>() < 0.15 { 0 } else { spec.persons },
        };
        if spec.distractor {
            spec.persons = spec.persons.max(2);
        }
        gen.image(&image_ref, spec, &mut scenes);

        let ts = t0 + rng.random_range(0..window);
        let u: f64 = rng.random();
        let post = if u < cfg.centroid_rate {
            Post::new(&id, ts, LocationKind::ExactPoint, Some(mid), None, &image_ref, None)
        } else if u < cfg.centroid_rate + cfg.bbox_rate {
            let half = cfg.tract_deg * rng.random_range(0.2..0.6);
            let b = GeoBox::new(
                (p.lon - half).max(extent.min_lon),
                (p.lat - half).max(extent.min_lat),
                (p.lon + half).min(extent.max_lon),
                (p.lat + half).min(extent.max_lat),
            );
            Post::new(&id, ts, LocationKind::BoundingBoxOnly, None, Some(b), &image_ref, None)
        } else if u < cfg.centroid_rate + cfg.bbox_rate + cfg.instagram_rate {
            Post::new(&id, ts, LocationKind::InstagramPoint, Some(p), None, &image_ref, Some("shared photo".into()))
        } else {
            Post::new(&id, ts, LocationKind::ExactPoint, Some(p), None, &image_ref, None)
        };
        posts.push(post.expect("valid post"));
    }

    let mut claims = Vec::new();
    let day0 = NaiveDate::from_ymd_opt(2017, 8, 26).expect("date");
    for t in &tracts {
        let (x0, y0, x1, y1) = t.bounds();
        let flooded = truth.flooded_tracts[&t.tract_id];
        let count = if flooded { rng.random_range(3..16) } else { rng.random_range(0..3) };
        for _ in 0..count {
            let loss_type = if rng.random::<f64>() < 0.9 { "flood" } else { "wind" };
            claims.push(ClaimPoint {
                id: format!("c{:05}", claims.len()),
                location: GeoPoint::new(rng.random_range(x0..x1), rng.random_range(y0..y1)),
                date: day0 + chrono::Days::new(rng.random_range(0..10)),
                loss_type: loss_type.to_string(),
            });
        }
    }

    let cells = cfg.depth_cells.max(1);
    let cellsize = span / cells as f64;
    let mut depth = AsciiGrid::filled(cells, cells, cfg.origin_lon, cfg.origin_lat, cellsize, DEFAULT_NODATA).expect("grid");
    for row in 0..cells {
        for col in 0..cells {
            let (x, y) = depth.cell_center(col, row);
            let s = area.severity(GeoPoint::new(x, y));
            if s > 0.0 {
                let v = 3.0 * s + rng.random_range(-0.05..0.05);
                depth.set(col, row, (v.max(0.0) * 1000.0).round() / 1000.0);
            }
        }
    }

    World {
        tracts,
        posts,
        scenes,
        relevance_labels,
        bag_labels,
        claims,
        depth,
        city_centroids: vec![mid],
        truth,
    }
}
