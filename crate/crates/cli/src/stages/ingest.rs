use std::collections::{BTreeMap, BTreeSet};

use floodmap_core::interchange::bundle::{check_feature_dims, load_bundle_dir, BundleStoreError};
use floodmap_core::interchange::post::{parse_posts, write_posts};
use floodmap_core::interchange::validate_bundle;
use serde::Serialize;

use super::{json_bytes, INGEST_BUNDLES, INGEST_POSTS};
use crate::error::{StageError, StageResult};
use crate::manifest::StageRun;

#[derive(Debug, Default, Serialize)]
struct IngestReport {
    posts_read: usize,
    posts_kept: usize,
    bundles_read: usize,
    bundles_kept: usize,
    relevance_dim: Option<usize>,
    posts_without_bundle: Vec<String>,
    post_errors: Vec<String>,
    bundle_errors: Vec<String>,
}

/// Validates posts and bundles and writes the cleaned, sorted copies every
/// later stage reads. Rejected records are listed in the report and make the
/// stage exit with a validation error after writing.
pub fn ingest(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let mut report = IngestReport::default();

    let bytes = run.read_input("posts", &cfg.paths.posts)?;
    let batch = parse_posts(bytes.as_slice()).map_err(|e| StageError::input(format!("posts: {e}")))?;
    report.posts_read = batch.posts.len() + batch.errors.len();
    report.post_errors.extend(batch.errors.iter().map(|e| format!("line {}: {}", e.line, e.message)));
    let mut ids = BTreeSet::new();
    let mut posts = Vec::with_capacity(batch.posts.len());
    for p in batch.posts {
        if ids.insert(p.id().to_string()) {
            posts.push(p);
        } else {
            report.post_errors.push(format!("duplicate post id {:?}", p.id()));
        }
    }
    posts.sort_by(|a, b| a.id().cmp(b.id()));

    let dir = run.hash_input_dir("bundles", &cfg.paths.bundles)?;
    let loaded = load_bundle_dir(&dir).map_err(|e| StageError::input(format!("bundles: {e}")))?;
    report.bundles_read = loaded.len();
    let mut bundles = BTreeMap::new();
    for (path, parsed) in loaded {
        let file = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        let b = match parsed {
            Ok(b) => b,
            Err(BundleStoreError::Io { source, .. }) => {
                report.bundle_errors.push(format!("{file}: {source}"));
                continue;
            }
            Err(BundleStoreError::Parse { source, .. }) => {
                report.bundle_errors.push(format!("{file}: {source}"));
                continue;
            }
        };
        let v = validate_bundle(&b);
        if !v.is_valid() {
            report.bundle_errors.extend(v.violations.iter().map(|x| format!("{file}: {x}")));
        } else if bundles.contains_key(&b.image_ref) {
            report.bundle_errors.push(format!("{file}: duplicate image_ref {:?}", b.image_ref));
        } else {
            bundles.insert(b.image_ref.clone(), b);
        }
    }
    let bundles: Vec<_> = bundles.into_values().collect();
    report.relevance_dim = check_feature_dims(&bundles).map_err(|bad| {
        StageError::validation(format!("relevance feature dimensions differ across bundles, e.g. {:?}", &bad[..bad.len().min(5)]))
    })?;
    report.posts_without_bundle = posts
        .iter()
        .filter(|p| bundles.binary_search_by(|b| b.image_ref.as_str().cmp(p.image_ref())).is_err())
        .map(|p| p.id().to_string())
        .collect();
    report.posts_kept = posts.len();
    report.bundles_kept = bundles.len();
    if !report.posts_without_bundle.is_empty() {
        run.warn(format!("{} posts have no bundle and will be skipped", report.posts_without_bundle.len()));
    }

    let mut out = Vec::new();
    write_posts(&mut out, &posts).map_err(StageError::internal)?;
    run.write(INGEST_POSTS, &out)?;
    let mut out = String::new();
    for b in &bundles {
        out.push_str(&b.to_json());
        out.push('\n');
    }
    run.write(INGEST_BUNDLES, out.as_bytes())?;
    run.write("ingest/report.json", &json_bytes(&report))?;

    run.count("posts_read", report.posts_read);
    run.count("posts_kept", report.posts_kept);
    run.count("bundles_read", report.bundles_read);
    run.count("bundles_kept", report.bundles_kept);
    run.count("posts_without_bundle", report.posts_without_bundle.len());
    let rejected = report.post_errors.len() + report.bundle_errors.len();
    if rejected > 0 {
        run.fail_after_writing(StageError::validation(format!(
            "{} post and {} bundle records rejected; see ingest/report.json",
            report.post_errors.len(),
            report.bundle_errors.len()
        )));
    }
    Ok(())
}
