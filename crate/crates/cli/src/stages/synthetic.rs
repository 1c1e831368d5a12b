use std::fs;

use floodmap_core::geomap::TractLayer;
use floodmap_core::interchange::claims::write_claims;
use floodmap_core::interchange::labels::write_csv;
use floodmap_core::interchange::post::write_posts;
use floodmap_core::synthetic::generate_world;

use super::{centroid_csv, csv_bytes, json_bytes};
use crate::error::{StageError, StageResult};
use crate::manifest::{atomic_write, hash_dir, StageRun, PATHS_PREFIX};

/// Writes a planted-truth study area to the configured input paths and its
/// truth tables to `synthetic/`. Refuses to touch a non-empty bundle
/// directory unless forced.
pub fn gen_synthetic(run: &mut StageRun) -> StageResult<()> {
    let cfg = run.config();
    let world = generate_world(&cfg.world());
    let paths = &cfg.paths;

    let dir = run.resolve(&paths.bundles);
    let existing: Vec<_> = match fs::read_dir(&dir) {
        Ok(entries) => entries
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect(),
        Err(_) => Vec::new(),
    };
    if !existing.is_empty() {
        if !run.force {
            return Err(StageError::validation(format!(
                "{} already holds {} bundles; pass --force to replace them",
                dir.display(),
                existing.len()
            )));
        }
        for p in existing {
            fs::remove_file(&p).map_err(|e| StageError::internal(format!("removing {}: {e}", p.display())))?;
        }
    }
    for b in &world.scenes.bundles {
        let path = dir.join(format!("{}.json", b.image_ref));
        atomic_write(&path, b.to_json().as_bytes()).map_err(|e| StageError::internal(format!("writing {}: {e}", path.display())))?;
    }
    let h = hash_dir(&dir).map_err(StageError::internal)?;
    run.record_output_hash(&format!("{PATHS_PREFIX}bundles"), h);

    let mut buf = Vec::new();
    write_posts(&mut buf, &world.posts).map_err(StageError::internal)?;
    run.write_path("posts", &paths.posts, &buf)?;

    let layer = TractLayer::new(world.tracts.clone()).map_err(StageError::internal)?;
    run.write_path("tracts", &paths.tracts, &json_bytes(&layer.to_geojson()))?;

    let mut buf = Vec::new();
    write_claims(&mut buf, &world.claims).map_err(StageError::internal)?;
    run.write_path("claims", &paths.claims, &buf)?;
    run.write_path("depth", &paths.depth, world.depth.to_ascii().as_bytes())?;

    let mut buf = Vec::new();
    write_csv(&mut buf, &world.relevance_labels).map_err(StageError::internal)?;
    run.write_path("relevance_labels", &paths.relevance_labels, &buf)?;
    let mut buf = Vec::new();
    write_csv(&mut buf, &world.bag_labels).map_err(StageError::internal)?;
    run.write_path("bag_labels", &paths.bag_labels, &buf)?;
    match &paths.city_centroids {
        Some(p) => run.write_path("city_centroids", p, &centroid_csv(&world.city_centroids)?)?,
        None => run.warn("paths.city_centroids is unset; the generated city centroid is not written"),
    }

    run.write("synthetic/truth.json", &json_bytes(&world.truth))?;
    run.write("synthetic/images.csv", &csv_bytes(&world.scenes.images)?)?;
    run.write("synthetic/instances.csv", &csv_bytes(&world.scenes.instances)?)?;
    run.count("tracts", world.tracts.len());
    run.count("flooded_tracts", world.truth.flooded_tracts.values().filter(|&&f| f).count());
    run.count("posts", world.posts.len());
    run.count("bundles", world.scenes.bundles.len());
    run.count("claims", world.claims.len());
    run.count("reposts", world.truth.duplicates.len());
    Ok(())
}
