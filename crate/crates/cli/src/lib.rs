//! The `floodmap` pipeline as file-connected stages.
//!
//! ```text
//! gen-synthetic   -> input fixture (optional)
//! ingest          -> ingest/{posts.jsonl, bundles.jsonl, report.json}
//! train-relevance -> models/relevance.json, train-relevance/report.{json,txt}
//! classify        -> classify/{relevance.csv, bins.csv}
//! dedup           -> dedup/{k_distance.csv, assignments.csv, kept_posts.jsonl, report.json}
//! train-waterlevel   -> models/waterlevel.json, train-waterlevel/{history.json, instance_labels.csv}
//! predict-waterlevel -> predict-waterlevel/{predictions.csv, persons.csv}
//! map-extent      -> map-extent/{extent.geojson, placements.csv}
//! map-severity    -> map-severity/{severity.geojson, report.json}
//! evaluate        -> evaluate/{tracts.geojson, extent_metrics.csv, claims_kde.asc, report.{json,txt}}
//! render-map      -> render-map/map.html
//! ```

pub mod config;
pub mod error;
pub mod manifest;
mod stages;

use std::time::Instant;

use clap::ValueEnum;

pub use config::{load_config, LoadedConfig, PipelineConfig};
pub use error::{StageError, StageResult};
pub use manifest::{Manifest, StageRecord, MANIFEST_FILE, TIMINGS_FILE};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, ValueEnum)]
pub enum Stage {
    Ingest,
    TrainRelevance,
    Classify,
    Dedup,
    GenSynthetic,
    TrainWaterlevel,
    PredictWaterlevel,
    MapExtent,
    MapSeverity,
    Evaluate,
    RenderMap,
}

impl Stage {
    /// Stages in pipeline order, fixture generation first.
    pub const PIPELINE: [Stage; 11] = [
        Stage::GenSynthetic,
        Stage::Ingest,
        Stage::TrainRelevance,
        Stage::Classify,
        Stage::Dedup,
        Stage::TrainWaterlevel,
        Stage::PredictWaterlevel,
        Stage::MapExtent,
        Stage::MapSeverity,
        Stage::Evaluate,
        Stage::RenderMap,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::TrainRelevance => "train-relevance",
            Stage::Classify => "classify",
            Stage::Dedup => "dedup",
            Stage::GenSynthetic => "gen-synthetic",
            Stage::TrainWaterlevel => "train-waterlevel",
            Stage::PredictWaterlevel => "predict-waterlevel",
            Stage::MapExtent => "map-extent",
            Stage::MapSeverity => "map-severity",
            Stage::Evaluate => "evaluate",
            Stage::RenderMap => "render-map",
        }
    }
}

/// Runs one stage and records it in the run manifest.
pub fn run_stage(stage: Stage, cfg: &LoadedConfig, force: bool) -> StageResult<()> {
    let start = Instant::now();
    let mut run = manifest::StageRun::open(cfg, stage, force)?;
    stages::run(stage, &mut run)?;
    run.finish(start.elapsed())
}
