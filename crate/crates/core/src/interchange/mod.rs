//! Shared data model and file formats.
//!
//! | artifact        | format                                              |
//! |-----------------|-----------------------------------------------------|
//! | posts           | UTF-8 JSON lines, see [`PostRecord`]                |
//! | bundle store    | one JSON [`PerceptionBundle`] per image             |
//! | tract polygons  | GeoJSON `FeatureCollection` with `tract_id`         |
//! | claims          | CSV `id,lon,lat,date,loss_type`                     |
//! | depth raster    | ESRI ASCII grid                                     |

pub mod ascii_grid;
pub mod bundle;
pub mod claims;
pub mod label_map;
pub mod labels;
pub mod post;
pub mod tracts;
pub mod water_level;

pub use ascii_grid::{AsciiGrid, GridError};
pub use bundle::{
    validate_bundle, Keypoint, PerceptionBundle, PersonDetection, PixelBox, Skeleton, ValidationReport, Violation,
    DEDUP_EMBEDDING_DIM, KEYPOINT_COUNT,
};
pub use claims::{parse_claims, ClaimBatch, ClaimPoint};
pub use label_map::{ClassHistogram, LabelGrid, LabelMap, LabelMapError};
pub use labels::{BagLabel, RelevanceLabel};
pub use post::{parse_posts, GeoBox, GeoPoint, LocationKind, Post, PostBatch, PostError, PostRecord, RecordError};
pub use tracts::{parse_tracts, Polygon, TractGeometry};
pub use water_level::WaterLevelClass;
