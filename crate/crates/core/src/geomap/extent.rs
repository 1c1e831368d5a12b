use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::geometry::{tract_contains, tract_distance_m, tract_intersects_box, LocalPlane};
use super::layer::{LayerError, TractLayer};
use crate::interchange::{ClaimPoint, GeoBox, GeoPoint, LocationKind, Post};
use crate::metrics::{BinaryMetrics, ConfusionMatrix};

pub const DEFAULT_BUFFER_M: f64 = 200.0;
pub const DEFAULT_MIN_CLAIMS: u64 = 3;
/// Coordinates closer than this (degrees) to a city centroid are city-level.
pub const CENTROID_TOLERANCE_DEG: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Placement {
    Point { point: GeoPoint },
    Box { bbox: GeoBox },
    Excluded { reason: String },
}

impl Placement {
    /// Where a map marker goes: the point, or the centre of a box.
    pub fn marker(&self) -> Option<GeoPoint> {
        match self {
            Placement::Point { point } => Some(*point),
            Placement::Box { bbox } => Some(bbox.center()),
            Placement::Excluded { .. } => None,
        }
    }
}

/// Placement of a post. Points that coincide with a configured city centroid
/// are excluded as city-level geotags.
pub fn locate_post(post: &Post, city_centroids: &[GeoPoint]) -> Placement {
    match post.location_kind() {
        LocationKind::ExactPoint | LocationKind::InstagramPoint => {
            let point = post.point().expect("point posts carry a point");
            let city = city_centroids
                .iter()
                .any(|c| (c.lon - point.lon).abs() <= CENTROID_TOLERANCE_DEG && (c.lat - point.lat).abs() <= CENTROID_TOLERANCE_DEG);
            if city {
                Placement::Excluded {
                    reason: "city-level".into(),
                }
            } else {
                Placement::Point { point }
            }
        }
        LocationKind::BoundingBoxOnly => Placement::Box {
            bbox: post.bbox().expect("box posts carry a box"),
        },
    }
}

/// Indices of tracts touched by a placement: within `radius_m` of a point,
/// or intersecting a box.
pub fn touched_tracts(layer: &TractLayer, placement: &Placement, radius_m: f64, plane: &LocalPlane) -> Vec<usize> {
    layer
        .tracts()
        .iter()
        .enumerate()
        .filter(|(_, t)| match placement {
            Placement::Point { point } => tract_distance_m(&t.geometry, *point, plane) <= radius_m,
            Placement::Box { bbox } => tract_intersects_box(&t.geometry, bbox),
            Placement::Excluded { .. } => false,
        })
        .map(|(i, _)| i)
        .collect()
}

/// Sets `flood_relevant` on every tract touched by a placement. Existing
/// marks are kept.
pub fn mark_extent(layer: &TractLayer, placements: &[Placement], radius_m: f64) -> TractLayer {
    let plane = layer.plane();
    let mut out = layer.clone();
    if placements.is_empty() {
        log::warn!("no relevant placements; extent layer is empty");
    }
    for p in placements {
        for i in touched_tracts(layer, p, radius_m, &plane) {
            out.tracts_mut()[i].attrs.flood_relevant = true;
        }
    }
    out
}

/// Sets `has_posts` on every tract touched by a placement.
pub fn mark_coverage(layer: &TractLayer, placements: &[Placement], radius_m: f64) -> TractLayer {
    let plane = layer.plane();
    let mut out = layer.clone();
    for p in placements {
        for i in touched_tracts(layer, p, radius_m, &plane) {
            out.tracts_mut()[i].attrs.has_posts = true;
        }
    }
    out
}

/// Audit of the claims threshold: mean and sample standard deviation of
/// `ln(count)` over tracts with at least one claim, and the count implied by
/// `exp(mean - 2 sd)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClaimsReport {
    pub claims_used: usize,
    pub claims_filtered_out: usize,
    pub unassigned: Vec<String>,
    pub tracts_with_claims: usize,
    pub tracts_flooded: usize,
    pub min_claims: u64,
    pub log_mean: Option<f64>,
    pub log_sd: Option<f64>,
    pub implied_cutoff: Option<f64>,
}

/// Mean and sample standard deviation of the logs of positive counts, and
/// `exp(mean - 2 sd)`.
pub fn log_two_sigma(counts: &[u64]) -> Option<(f64, f64, f64)> {
    let logs: Vec<f64> = counts.iter().filter(|&&c| c > 0).map(|&c| (c as f64).ln()).collect();
    if logs.len() < 2 {
        return None;
    }
    let n = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / n;
    let sd = (logs.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Some((mean, sd, (mean - 2.0 * sd).exp()))
}

/// Counts claims per tract and marks tracts with at least `min_claims` as
/// flooded. An empty `loss_filter` accepts every loss type. A claim on a
/// shared border counts for the first tract in id order.
pub fn claims_reference(
    layer: &TractLayer,
    claims: &[ClaimPoint],
    loss_filter: &BTreeSet<String>,
    min_claims: u64,
) -> (TractLayer, ClaimsReport) {
    let mut out = layer.clone();
    let mut used = 0;
    let mut unassigned = Vec::new();
    for c in claims {
        if !loss_filter.is_empty() && !loss_filter.contains(&c.loss_type) {
            continue;
        }
        used += 1;
        match layer.tracts().iter().position(|t| tract_contains(&t.geometry, c.location)) {
            Some(i) => out.tracts_mut()[i].attrs.claim_count += 1,
            None => unassigned.push(c.id.clone()),
        }
    }
    if !unassigned.is_empty() {
        log::warn!("{} claims fall outside every tract", unassigned.len());
    }
    for t in out.tracts_mut() {
        t.attrs.reference_flooded = t.attrs.claim_count >= min_claims;
    }
    let counts: Vec<u64> = out.tracts().iter().map(|t| t.attrs.claim_count).collect();
    let sigma = log_two_sigma(&counts);
    let report = ClaimsReport {
        claims_used: used,
        claims_filtered_out: claims.len() - used,
        unassigned,
        tracts_with_claims: counts.iter().filter(|&&c| c > 0).count(),
        tracts_flooded: out.tracts().iter().filter(|t| t.attrs.reference_flooded).count(),
        min_claims,
        log_mean: sigma.map(|s| s.0),
        log_sd: sigma.map(|s| s.1),
        implied_cutoff: sigma.map(|s| s.2),
    };
    (out, report)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtentComparison {
    pub matrix: ConfusionMatrix,
    pub metrics: BinaryMetrics,
}

/// Confusion matrix of a predicted tract flag against a reference flag. With
/// `extra`, the prediction is OR-ed with it per tract first.
pub fn compare_extent(
    predicted: &BTreeMap<String, bool>,
    reference: &BTreeMap<String, bool>,
    extra: Option<&BTreeMap<String, bool>>,
) -> Result<ExtentComparison, LayerError> {
    let mut diff: BTreeSet<String> = predicted.keys().collect::<BTreeSet<_>>().symmetric_difference(&reference.keys().collect()).map(|s| s.to_string()).collect();
    if let Some(e) = extra {
        diff.extend(e.keys().collect::<BTreeSet<_>>().symmetric_difference(&reference.keys().collect()).map(|s| s.to_string()));
    }
    if !diff.is_empty() {
        return Err(LayerError::IdMismatch(diff.into_iter().collect()));
    }
    let matrix = ConfusionMatrix::from_pairs(reference.iter().map(|(id, &truth)| {
        let pred = predicted[id] || extra.is_some_and(|e| e[id]);
        (pred, truth)
    }));
    Ok(ExtentComparison {
        matrix,
        metrics: matrix.metrics(),
    })
}
