mod dedup;
mod ingest;
mod mapping;
mod relevance;
mod synthetic;
mod waterlevel;

use std::collections::BTreeMap;

use floodmap_core::geomap::TractLayer;
use floodmap_core::interchange::post::parse_posts;
use floodmap_core::interchange::{parse_tracts, GeoPoint, PerceptionBundle, Post, WaterLevelClass};
use floodmap_core::relevance::RelevanceResult;
use serde::{Deserialize, Serialize};

use crate::error::{StageError, StageResult};
use crate::manifest::StageRun;
use crate::Stage;

pub const INGEST_POSTS: &str = "ingest/posts.jsonl";
pub const INGEST_BUNDLES: &str = "ingest/bundles.jsonl";
pub const RELEVANCE_MODEL: &str = "models/relevance.json";
pub const WATERLEVEL_MODEL: &str = "models/waterlevel.json";
pub const RELEVANCE_CSV: &str = "classify/relevance.csv";
pub const KEPT_POSTS: &str = "dedup/kept_posts.jsonl";
pub const PREDICTIONS_CSV: &str = "predict-waterlevel/predictions.csv";
pub const EXTENT_LAYER: &str = "map-extent/extent.geojson";
pub const SEVERITY_LAYER: &str = "map-severity/severity.geojson";
pub const EVALUATED_LAYER: &str = "evaluate/tracts.geojson";

pub fn run(stage: Stage, run: &mut StageRun) -> StageResult<()> {
    match stage {
        Stage::Ingest => ingest::ingest(run),
        Stage::TrainRelevance => relevance::train_relevance(run),
        Stage::Classify => relevance::classify(run),
        Stage::Dedup => dedup::dedup(run),
        Stage::GenSynthetic => synthetic::gen_synthetic(run),
        Stage::TrainWaterlevel => waterlevel::train_waterlevel(run),
        Stage::PredictWaterlevel => waterlevel::predict_waterlevel(run),
        Stage::MapExtent => mapping::map_extent(run),
        Stage::MapSeverity => mapping::map_severity(run),
        Stage::Evaluate => mapping::evaluate(run),
        Stage::RenderMap => mapping::render(run),
    }
}

/// One row of the water-level prediction CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub image_ref: String,
    pub class: WaterLevelClass,
    pub confidence: f64,
    pub n_persons_used: usize,
    pub voters: usize,
    pub no_persons: bool,
}

pub fn json_bytes<T: Serialize + ?Sized>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("report serializes");
    s.push('\n');
    s.into_bytes()
}

pub fn csv_bytes<T: Serialize>(rows: &[T]) -> StageResult<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(StageError::internal)?;
    }
    w.into_inner().map_err(StageError::internal)
}

pub fn csv_rows<T: for<'de> Deserialize<'de>>(key: &str, bytes: &[u8]) -> StageResult<Vec<T>> {
    csv::Reader::from_reader(bytes)
        .deserialize()
        .collect::<Result<Vec<T>, _>>()
        .map_err(|e| StageError::validation(format!("{key}: {e}")))
}

fn utf8<'b>(key: &str, bytes: &'b [u8]) -> StageResult<&'b str> {
    std::str::from_utf8(bytes).map_err(|e| StageError::validation(format!("{key}: {e}")))
}

pub fn load_posts(run: &mut StageRun, key: &str) -> StageResult<Vec<Post>> {
    let bytes = run.read_artifact(key)?;
    let batch = parse_posts(bytes.as_slice()).map_err(StageError::internal)?;
    if let Some(e) = batch.errors.first() {
        return Err(StageError::validation(format!("{key}: line {}: {}", e.line, e.message)));
    }
    Ok(batch.posts)
}

pub fn load_bundles(run: &mut StageRun) -> StageResult<Vec<PerceptionBundle>> {
    let bytes = run.read_artifact(INGEST_BUNDLES)?;
    utf8(INGEST_BUNDLES, &bytes)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .enumerate()
        .map(|(i, l)| {
            PerceptionBundle::from_json(l).map_err(|e| StageError::validation(format!("{INGEST_BUNDLES}: line {}: {e}", i + 1)))
        })
        .collect()
}

pub fn load_scores(run: &mut StageRun) -> StageResult<BTreeMap<String, f64>> {
    let bytes = run.read_artifact(RELEVANCE_CSV)?;
    let rows: Vec<RelevanceResult> = csv_rows(RELEVANCE_CSV, &bytes)?;
    Ok(rows.into_iter().map(|r| (r.image_ref, r.score)).collect())
}

pub fn load_predictions(run: &mut StageRun) -> StageResult<BTreeMap<String, PredictionRow>> {
    let bytes = run.read_artifact(PREDICTIONS_CSV)?;
    let rows: Vec<PredictionRow> = csv_rows(PREDICTIONS_CSV, &bytes)?;
    Ok(rows.into_iter().map(|r| (r.image_ref.clone(), r)).collect())
}

pub fn load_tracts(run: &mut StageRun) -> StageResult<TractLayer> {
    let path = run.config().paths.tracts.clone();
    let bytes = run.read_input("tracts", &path)?;
    let tracts = parse_tracts(utf8("tracts", &bytes)?).map_err(|e| StageError::validation(format!("tracts: {e}")))?;
    TractLayer::new(tracts).map_err(|e| StageError::validation(format!("tracts: {e}")))
}

pub fn load_layer(run: &mut StageRun, key: &str) -> StageResult<TractLayer> {
    let bytes = run.read_artifact(key)?;
    TractLayer::from_geojson(utf8(key, &bytes)?).map_err(|e| StageError::validation(format!("{key}: {e}")))
}

#[derive(Debug, Serialize, Deserialize)]
struct CentroidRow {
    lon: f64,
    lat: f64,
}

pub fn load_centroids(run: &mut StageRun) -> StageResult<Vec<GeoPoint>> {
    let Some(path) = run.config().paths.city_centroids.clone() else {
        return Ok(Vec::new());
    };
    let bytes = run.read_input("city_centroids", &path)?;
    let rows: Vec<CentroidRow> = csv_rows("city_centroids", &bytes)?;
    Ok(rows.into_iter().map(|r| GeoPoint::new(r.lon, r.lat)).collect())
}

pub fn centroid_csv(points: &[GeoPoint]) -> StageResult<Vec<u8>> {
    csv_bytes(&points.iter().map(|p| CentroidRow { lon: p.lon, lat: p.lat }).collect::<Vec<_>>())
}
