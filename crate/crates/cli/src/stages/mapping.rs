use std::collections::BTreeSet;
use std::fmt::Write as _;

use floodmap_core::geomap::{
    aggregate_depth, aggregate_severity, claims_reference, compare_extent, kde_density, locate_post, mark_coverage,
    mark_extent, render_map, spearman, ExtentComparison, MapMarker, Placement, Spearman, TractLayer,
};
use floodmap_core::interchange::{parse_claims, AsciiGrid, GeoPoint, WaterLevelClass};
use serde::Serialize;

use super::{
    csv_bytes, json_bytes, load_centroids, load_layer, load_posts, load_predictions, load_scores, load_tracts, EVALUATED_LAYER,
    EXTENT_LAYER, INGEST_POSTS, KEPT_POSTS, SEVERITY_LAYER,
};
use crate::error::{StageError, StageResult};
use crate::manifest::StageRun;

fn layer_bytes(layer: &TractLayer) -> Vec<u8> {
    json_bytes(&layer.to_geojson())
}

#[derive(Debug, Serialize)]
struct PlacementRow<'a> {
    post_id: &'a str,
    image_ref: &'a str,
    kind: &'static str,
    lon: Option<f64>,
    lat: Option<f64>,
    reason: &'a str,
}

fn kind(p: &Placement) -> &'static str {
    match p {
        Placement::Point { .. } => "point",
        Placement::Box { .. } => "box",
        Placement::Excluded { .. } => "excluded",
    }
}

/// Marks tracts near kept relevant posts as flood relevant, and tracts near
/// any post as covered.
pub fn map_extent(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let layer = load_tracts(run)?;
    let centroids = load_centroids(run)?;
    let all = load_posts(run, INGEST_POSTS)?;
    let kept = load_posts(run, KEPT_POSTS)?;
    let buffer = cfg.thresholds.buffer_m;

    let everywhere: Vec<Placement> = all.iter().map(|p| locate_post(p, &centroids)).collect();
    let relevant: Vec<Placement> = kept.iter().map(|p| locate_post(p, &centroids)).collect();
    let covered = mark_coverage(&layer, &everywhere, buffer);
    let marked = mark_extent(&covered, &relevant, buffer);
    if relevant.iter().all(|p| matches!(p, Placement::Excluded { .. })) {
        run.warn("no relevant placed posts; the extent layer marks nothing");
    }

    let rows: Vec<PlacementRow> = kept
        .iter()
        .zip(&relevant)
        .map(|(post, pl)| PlacementRow {
            post_id: post.id(),
            image_ref: post.image_ref(),
            kind: kind(pl),
            lon: pl.marker().map(|m| m.lon),
            lat: pl.marker().map(|m| m.lat),
            reason: match pl {
                Placement::Excluded { reason } => reason,
                _ => "",
            },
        })
        .collect();
    run.write(EXTENT_LAYER, &layer_bytes(&marked))?;
    run.write("map-extent/placements.csv", &csv_bytes(&rows)?)?;
    for k in ["point", "box", "excluded"] {
        run.count(&format!("placements_{k}"), rows.iter().filter(|r| r.kind == k).count());
    }
    run.count("tracts", marked.len());
    run.count("tracts_with_posts", marked.tracts().iter().filter(|t| t.attrs.has_posts).count());
    run.count("tracts_flood_relevant", marked.tracts().iter().filter(|t| t.attrs.flood_relevant).count());
    Ok(())
}

/// Modal water level per tract from confidently relevant, point-placed posts.
pub fn map_severity(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let layer = load_layer(run, EXTENT_LAYER)?;
    let centroids = load_centroids(run)?;
    let kept = load_posts(run, KEPT_POSTS)?;
    let scores = load_scores(run)?;
    let preds = load_predictions(run)?;

    let mut below = 0;
    let mut unpredicted = 0;
    let mut estimates = Vec::new();
    for p in &kept {
        if scores.get(p.image_ref()).is_none_or(|&s| s < cfg.thresholds.relevance_severity) {
            below += 1;
            continue;
        }
        let Some(pred) = preds.get(p.image_ref()) else {
            unpredicted += 1;
            continue;
        };
        estimates.push((locate_post(p, &centroids), pred.class));
    }
    if unpredicted > 0 {
        run.warn(format!("{unpredicted} posts have no water-level prediction"));
    }
    let (out, report) = aggregate_severity(&layer, &estimates, cfg.thresholds.buffer_m);
    run.write(SEVERITY_LAYER, &layer_bytes(&out))?;
    run.write("map-severity/report.json", &json_bytes(&report))?;
    run.count("below_relevance_severity", below);
    run.count("estimates", estimates.len());
    run.count("estimates_used", report.estimates_used);
    run.count("excluded_box", report.excluded_box);
    run.count("excluded_n", report.excluded_n);
    run.count("tracts_with_severity", report.tracts_with_severity);
    run.count("tracts_with_one_or_two", report.tracts_with_one_or_two);
    Ok(())
}

#[derive(Debug, Serialize)]
struct MetricRow {
    layer: &'static str,
    tn: u64,
    fp: u64,
    #[serde(rename = "fn")]
    fn_: u64,
    tp: u64,
    precision: f64,
    recall: f64,
    f1: f64,
    accuracy: f64,
}

impl MetricRow {
    fn new(layer: &'static str, c: &ExtentComparison) -> Self {
        Self {
            layer,
            tn: c.matrix.tn,
            fp: c.matrix.fp,
            fn_: c.matrix.fn_,
            tp: c.matrix.tp,
            precision: c.metrics.precision,
            recall: c.metrics.recall,
            f1: c.metrics.f1,
            accuracy: c.metrics.accuracy,
        }
    }
}

#[derive(Debug, Serialize)]
struct Correlation {
    /// Tracts carrying a severity class.
    tracts_with_severity: usize,
    /// Tracts with both a severity class and a depth, i.e. the pairs used.
    n: usize,
    result: Option<Spearman>,
    error: Option<String>,
}

#[derive(Debug, Serialize)]
struct KdeInfo {
    points: usize,
    radius_m: f64,
    cell_m: f64,
    /// Grid x/y are metres east/north of this point.
    anchor: Option<GeoPoint>,
}

#[derive(Debug, Serialize)]
struct EvaluateReport {
    claims: floodmap_core::geomap::ClaimsReport,
    depth: floodmap_core::geomap::DepthReport,
    depth_min_m: f64,
    extent: Vec<MetricRow>,
    correlation: Correlation,
    kde: KdeInfo,
}

/// Claims reference, depth aggregation, extent comparison, severity-depth
/// correlation and the claims density surface.
pub fn evaluate(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let layer = load_layer(run, SEVERITY_LAYER)?;
    let bytes = run.read_input("claims", &cfg.paths.claims)?;
    let batch = parse_claims(bytes.as_slice()).map_err(|e| StageError::input(format!("claims: {e}")))?;
    if !batch.errors.is_empty() {
        run.warn(format!("{} claim rows rejected, first at line {}", batch.errors.len(), batch.errors[0].line));
    }
    let bytes = run.read_input("depth", &cfg.paths.depth)?;
    let grid = std::str::from_utf8(&bytes)
        .map_err(StageError::validation)
        .and_then(|s| AsciiGrid::parse(s).map_err(|e| StageError::validation(format!("depth grid: {e}"))))?;

    let filter: BTreeSet<String> = cfg.evaluate.loss_types.iter().cloned().collect();
    let (with_claims, claims_report) = claims_reference(&layer, &batch.claims, &filter, cfg.thresholds.claims_min);
    let (full, depth_report) = aggregate_depth(&with_claims, &grid, &cfg.evaluate.grid_mapping);
    if depth_report.tracts_with_depth == 0 {
        run.warn("the depth grid covers no tract");
    }

    let vgi = full.flags(|a| a.flood_relevant);
    let depth_min = cfg.thresholds.depth_min_m;
    let rs = full.flags(|a| a.max_depth.is_some_and(|d| d > depth_min));
    let reference = full.flags(|a| a.reference_flooded);
    let cmp = |p, e| compare_extent(p, &reference, e).map_err(StageError::internal);
    let extent = vec![
        MetricRow::new("VGI", &cmp(&vgi, None)?),
        MetricRow::new("RS", &cmp(&rs, None)?),
        MetricRow::new("VGI+RS", &cmp(&vgi, Some(&rs))?),
    ];

    let pairs: Vec<(f64, f64)> = full
        .tracts()
        .iter()
        .filter_map(|t| Some((t.attrs.severity?.index() as f64, t.attrs.max_depth?)))
        .collect();
    let (sx, dy): (Vec<f64>, Vec<f64>) = pairs.iter().copied().unzip();
    let corr = spearman(&sx, &dy);
    let correlation = Correlation {
        tracts_with_severity: full.tracts().iter().filter(|t| t.attrs.severity.is_some()).count(),
        n: pairs.len(),
        result: corr.as_ref().ok().copied(),
        error: corr.as_ref().err().map(|e| e.to_string()),
    };
    if let Some(e) = &correlation.error {
        run.warn(format!("severity-depth correlation: {e}"));
    }

    let points: Vec<GeoPoint> = batch
        .claims
        .iter()
        .filter(|c| filter.is_empty() || filter.contains(&c.loss_type))
        .map(|c| c.location)
        .collect();
    let (r, cell) = (cfg.thresholds.kde_radius_m, cfg.thresholds.kde_cell_m);
    let mut kde = KdeInfo {
        points: points.len(),
        radius_m: r,
        cell_m: cell,
        anchor: None,
    };
    match kde_density(&points, r, cell, &full.plane()) {
        Ok(raster) => {
            kde.anchor = Some(raster.anchor);
            run.write("evaluate/claims_kde.asc", raster.grid.to_ascii().as_bytes())?;
        }
        Err(e) => run.warn(format!("claims density: {e}")),
    }

    let report = EvaluateReport {
        claims: claims_report,
        depth: depth_report,
        depth_min_m: depth_min,
        extent,
        correlation,
        kde,
    };
    run.write(EVALUATED_LAYER, &layer_bytes(&full))?;
    run.write("evaluate/extent_metrics.csv", &csv_bytes(&report.extent)?)?;
    run.write("evaluate/report.json", &json_bytes(&report))?;
    run.write("evaluate/report.txt", text_report(&report).as_bytes())?;
    run.count("reference_flooded", report.claims.tracts_flooded);
    run.count("tracts_with_depth", report.depth.tracts_with_depth);
    run.count("correlation_n", report.correlation.n);
    for m in &report.extent {
        run.count(&format!("f1_{}", m.layer), m.f1);
    }
    Ok(())
}

fn text_report(r: &EvaluateReport) -> String {
    let mut s = String::new();
    let _ = writeln!(s, "water extent against the claims reference");
    let _ = writeln!(s, "{:<8} {:>5} {:>5} {:>5} {:>5} {:>9} {:>9} {:>9} {:>9}", "layer", "TN", "FP", "FN", "TP", "precision", "recall", "F1", "accuracy");
    for m in &r.extent {
        let _ = writeln!(
            s,
            "{:<8} {:>5} {:>5} {:>5} {:>5} {:>8.2}% {:>8.2}% {:>8.2}% {:>8.2}%",
            m.layer,
            m.tn,
            m.fp,
            m.fn_,
            m.tp,
            100.0 * m.precision,
            100.0 * m.recall,
            100.0 * m.f1,
            100.0 * m.accuracy
        );
    }
    let c = &r.claims;
    let _ = writeln!(s);
    let _ = writeln!(s, "claims used {} (filtered out {}, outside tracts {})", c.claims_used, c.claims_filtered_out, c.unassigned.len());
    let _ = writeln!(s, "reference flooded tracts {} (>= {} claims)", c.tracts_flooded, c.min_claims);
    if let (Some(m), Some(sd), Some(cut)) = (c.log_mean, c.log_sd, c.implied_cutoff) {
        let _ = writeln!(s, "ln(claims) mean {m:.4} sd {sd:.4}; mean - 2 sd implies {cut:.3} claims");
    }
    let _ = writeln!(s);
    let k = &r.correlation;
    match &k.result {
        Some(sp) => {
            let _ = writeln!(
                s,
                "severity vs max depth: r = {:.4}, n = {}, p = {:.4} ({:?}); {} tracts carry a severity",
                sp.r, sp.n, sp.p, sp.strength, k.tracts_with_severity
            );
        }
        None => {
            let _ = writeln!(s, "severity vs max depth: undefined ({})", k.error.as_deref().unwrap_or("no pairs"));
        }
    }
    s
}

/// Static HTML map of the evaluated layer with a marker per kept post.
pub fn render(run: &mut StageRun) -> StageResult<()> {
    let layer = load_layer(run, EVALUATED_LAYER)?;
    let centroids = load_centroids(run)?;
    let kept = load_posts(run, KEPT_POSTS)?;
    let preds = load_predictions(run)?;
    let markers: Vec<MapMarker> = kept
        .iter()
        .filter_map(|p| {
            let point = locate_post(p, &centroids).marker()?;
            let pred = preds.get(p.image_ref());
            Some(MapMarker {
                point,
                image_ref: p.image_ref().to_string(),
                class: pred.map(|x| x.class).filter(|&c| c != WaterLevelClass::N).or(pred.map(|x| x.class)),
                confidence: pred.map(|x| x.confidence),
            })
        })
        .collect();
    let html = render_map(&layer, &markers, "Flood extent and severity");
    run.write("render-map/map.html", html.as_bytes())?;
    run.count("markers", markers.len());
    Ok(())
}
