//! Tract-level flood mapping: extent and severity layers from located
//! posts, a claims reference layer, depth-raster aggregation, comparisons,
//! rank correlation, kernel density and a static HTML map.
//!
//! Distances use a local equirectangular plane anchored at the centre of the
//! tract layer. Point-in-polygon uses the even-odd rule with points on a
//! border counted as inside.

mod aggregate;
mod extent;
pub mod geometry;
mod html;
mod kde;
mod layer;
mod stats;

pub use aggregate::{aggregate_depth, aggregate_severity, DepthReport, GridMapping, SeverityReport};
pub use extent::{
    claims_reference, compare_extent, locate_post, log_two_sigma, mark_coverage, mark_extent, touched_tracts, ClaimsReport,
    ExtentComparison, Placement, CENTROID_TOLERANCE_DEG, DEFAULT_BUFFER_M, DEFAULT_MIN_CLAIMS,
};
pub use geometry::{haversine_m, LocalPlane};
pub use html::{render_map, MapMarker};
pub use kde::{kde_density, quartic_kernel, quartic_mass, KdeError, KdeRaster, DEFAULT_KDE_RADIUS_M};
pub use layer::{LayerError, Tract, TractAttributes, TractLayer};
pub use stats::{average_ranks, spearman, CorrelationStrength, Spearman, SpearmanError};
