use std::collections::BTreeMap;

use floodmap_core::dedup::{advisory_elbow, dbscan, k_distance_curve, prune_duplicates, NOISE};
use floodmap_core::interchange::post::write_posts;
use serde::Serialize;

use super::{csv_bytes, json_bytes, load_bundles, load_posts, load_scores, INGEST_POSTS, KEPT_POSTS};
use crate::error::{StageError, StageResult};
use crate::manifest::StageRun;

#[derive(Debug, Serialize)]
struct CurveRow {
    rank: usize,
    distance: f64,
}

#[derive(Debug, Serialize)]
struct AssignmentRow<'a> {
    post_id: &'a str,
    image_ref: &'a str,
    cluster_id: i64,
    kept: bool,
}

#[derive(Debug, Serialize)]
struct DedupReport {
    candidates: usize,
    k: usize,
    /// Maximum second difference of the curve. Advisory only.
    advisory_elbow: Option<f64>,
    eps: Option<f64>,
    min_pts: usize,
    clusters: usize,
    removed: usize,
    kept: usize,
    /// Number of clusters by member count.
    cluster_sizes: BTreeMap<usize, usize>,
}

/// Removes near-duplicate posts among those whose image passed the relevance
/// threshold. Without a configured eps only the k-distance curve is written
/// and the stage exits with an input error.
pub fn dedup(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let posts = load_posts(run, INGEST_POSTS)?;
    let bundles = load_bundles(run)?;
    let scores = load_scores(run)?;
    let emb_of: BTreeMap<&str, &[f64]> = bundles.iter().map(|b| (b.image_ref.as_str(), b.dedup_embedding.as_slice())).collect();
    let candidates: Vec<_> = posts
        .iter()
        .filter(|p| emb_of.contains_key(p.image_ref()))
        .filter(|p| scores.get(p.image_ref()).is_some_and(|&s| s >= cfg.thresholds.relevance_dedup))
        .collect();
    let emb: Vec<&[f64]> = candidates.iter().map(|p| emb_of[p.image_ref()]).collect();

    let k = cfg.dedup.k;
    let curve = if emb.len() > k {
        k_distance_curve(&emb, k).map_err(StageError::validation)?
    } else {
        run.warn(format!("{} candidates; the k-distance curve needs more than k={k}", emb.len()));
        Vec::new()
    };
    let rows: Vec<CurveRow> = curve.iter().enumerate().map(|(i, &d)| CurveRow { rank: i + 1, distance: d }).collect();
    run.write("dedup/k_distance.csv", &csv_bytes(&rows)?)?;
    let mut report = DedupReport {
        candidates: candidates.len(),
        k,
        advisory_elbow: advisory_elbow(&curve),
        eps: cfg.dedup.eps,
        min_pts: cfg.dedup.min_pts,
        clusters: 0,
        removed: 0,
        kept: candidates.len(),
        cluster_sizes: BTreeMap::new(),
    };
    run.count("candidates", candidates.len());

    let Some(eps) = cfg.dedup.eps else {
        run.write("dedup/report.json", &json_bytes(&report))?;
        let hint = report.advisory_elbow.map_or(String::new(), |e| format!(" (advisory elbow {e:.4})"));
        run.fail_after_writing(StageError::input(format!(
            "dedup.eps is not set; choose it from dedup/k_distance.csv{hint} and re-run"
        )));
        return Ok(());
    };

    let clustering = if emb.is_empty() {
        floodmap_core::dedup::Clustering { labels: Vec::new(), core: Vec::new() }
    } else {
        dbscan(&emb, eps, cfg.dedup.min_pts).map_err(StageError::validation)?
    };
    let ids: Vec<String> = candidates.iter().map(|p| p.id().to_string()).collect();
    let ts: BTreeMap<&str, i64> = candidates.iter().map(|p| (p.id(), p.timestamp())).collect();
    let pruned = prune_duplicates(&ids, &clustering, |id| ts.get(id).copied()).map_err(StageError::internal)?;

    let assignments: Vec<AssignmentRow> = candidates
        .iter()
        .zip(&clustering.labels)
        .map(|(p, &l)| AssignmentRow {
            post_id: p.id(),
            image_ref: p.image_ref(),
            cluster_id: l,
            kept: pruned.kept.contains(p.id()),
        })
        .collect();
    let kept: Vec<_> = candidates.iter().filter(|p| pruned.kept.contains(p.id())).map(|p| (*p).clone()).collect();
    let mut out = Vec::new();
    write_posts(&mut out, &kept).map_err(StageError::internal)?;

    report.clusters = clustering.cluster_count();
    report.removed = pruned.removed.len();
    report.kept = kept.len();
    for members in pruned.assignment.clusters.values() {
        *report.cluster_sizes.entry(members.len()).or_default() += 1;
    }
    run.write("dedup/assignments.csv", &csv_bytes(&assignments)?)?;
    run.write(KEPT_POSTS, &out)?;
    run.write("dedup/report.json", &json_bytes(&report))?;
    run.count("clusters", report.clusters);
    run.count("removed", report.removed);
    run.count("kept", report.kept);
    run.count("noise", clustering.labels.iter().filter(|&&l| l == NOISE).count());
    Ok(())
}
