use std::fs;
use std::path::Path;
use std::process::Command;

use floodmap_cli::{Manifest, Stage};

const CONFIG: &str = "version = 1\nseed = 11\n\n[dedup]\neps = 10.0\n";

fn floodmap(dir: &Path, stage: &str, extra: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_floodmap"))
        .current_dir(dir)
        .args([stage, "--config", "run.toml"])
        .args(extra)
        .env_remove("FLOODMAP_ROOT")
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

fn setup(config: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("run.toml"), config).unwrap();
    dir
}

fn run_through(dir: &Path, last: Stage) {
    for s in Stage::PIPELINE {
        let (code, err) = floodmap(dir, s.name(), &[]);
        assert_eq!(code, 0, "{} failed: {err}", s.name());
        if s == last {
            break;
        }
    }
}

fn manifest(dir: &Path) -> Manifest {
    Manifest::load(&dir.join("out/manifest.json")).unwrap().unwrap()
}

#[test]
fn full_pipeline_writes_every_artifact() {
    let dir = setup(CONFIG);
    let d = dir.path();
    run_through(d, Stage::RenderMap);
    for f in [
        "out/ingest/posts.jsonl",
        "models/relevance.json",
        "out/classify/relevance.csv",
        "out/classify/bins.csv",
        "out/dedup/kept_posts.jsonl",
        "models/waterlevel.json",
        "out/train-waterlevel/history.json",
        "out/predict-waterlevel/predictions.csv",
        "out/map-extent/extent.geojson",
        "out/map-severity/severity.geojson",
        "out/evaluate/extent_metrics.csv",
        "out/evaluate/claims_kde.asc",
        "out/evaluate/report.txt",
        "out/render-map/map.html",
        "out/timings.json",
    ] {
        assert!(d.join(f).is_file(), "missing {f}");
    }
    let m = manifest(d);
    assert_eq!(m.stages.len(), Stage::PIPELINE.len());
    assert!(m.stages.values().all(|r| r.status == "ok"));
    assert_eq!(m.stages["gen-synthetic"].seed, 11);
    assert_eq!(m.overrides.get("seed").and_then(|v| v.as_u64()), Some(11));
    // the thresholds the stages consumed are echoed into the manifest
    let t = &m.config["thresholds"];
    assert_eq!(t["relevance_severity"], 0.99);
    assert_eq!(t["buffer_m"], 200.0);
    assert_eq!(m.config["dedup"]["eps"], 10.0);

    let metrics = fs::read_to_string(d.join("out/evaluate/extent_metrics.csv")).unwrap();
    let layers: Vec<&str> = metrics.lines().skip(1).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(layers, ["VGI", "RS", "VGI+RS"]);
    assert!(metrics.starts_with("layer,tn,fp,fn,tp,"));
}

#[test]
fn classify_emits_one_row_per_bundle_with_a_bin() {
    let dir = setup(CONFIG);
    let d = dir.path();
    run_through(d, Stage::Classify);
    let n_bundles = fs::read_dir(d.join("input/bundles")).unwrap().count();
    let mut rdr = csv::Reader::from_path(d.join("out/classify/relevance.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["image_ref", "score", "label", "bin"]);
    let bins = floodmap_core::relevance::BIN_LABELS;
    let mut rows = 0;
    for rec in rdr.records() {
        let rec = rec.unwrap();
        let score: f64 = rec[1].parse().unwrap();
        assert!((0.0..=1.0).contains(&score));
        assert_eq!(&rec[2] == "true", score >= 0.5);
        assert!(bins.contains(&&rec[3]), "unknown bin {}", &rec[3]);
        rows += 1;
    }
    assert_eq!(rows, n_bundles);
    let counts = &manifest(d).stages["classify"].counts["bins"];
    let total: u64 = bins.iter().map(|b| counts[*b].as_u64().unwrap()).sum();
    assert_eq!(total as usize, n_bundles);
}

#[test]
fn missing_input_exits_one_and_names_the_path() {
    let dir = setup(CONFIG);
    let (code, err) = floodmap(dir.path(), "ingest", &[]);
    assert_eq!(code, 1);
    assert!(err.contains("posts.jsonl"), "{err}");
}

#[test]
fn bad_config_exits_one() {
    let dir = setup("version = 2\n");
    assert_eq!(floodmap(dir.path(), "ingest", &[]).0, 1);
    let dir = setup("version = 1\n[thresholds]\nbuffer_m = -1\n");
    assert_eq!(floodmap(dir.path(), "ingest", &[]).0, 1);
    let dir = setup("version = 1\nunknown = 3\n");
    assert_eq!(floodmap(dir.path(), "ingest", &[]).0, 1);
}

#[test]
fn dedup_without_eps_writes_the_curve_and_exits_one() {
    let dir = setup("version = 1\n");
    let d = dir.path();
    run_through(d, Stage::Classify);
    let (code, err) = floodmap(d, "dedup", &[]);
    assert_eq!(code, 1, "{err}");
    assert!(err.contains("eps"), "{err}");
    let curve = fs::read_to_string(d.join("out/dedup/k_distance.csv")).unwrap();
    assert!(curve.starts_with("rank,distance"));
    let dists: Vec<f64> = curve.lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect();
    assert!(!dists.is_empty());
    assert!(dists.windows(2).all(|w| w[0] >= w[1]) || dists.windows(2).all(|w| w[0] <= w[1]));
    assert!(!d.join("out/dedup/kept_posts.jsonl").exists());
}

#[test]
fn stale_upstream_artifact_needs_force() {
    let dir = setup(CONFIG);
    let d = dir.path();
    run_through(d, Stage::Classify);
    let path = d.join("out/classify/relevance.csv");
    let mut csv = fs::read_to_string(&path).unwrap();
    csv.push_str("img-extra,0.7,true,\"[50%,80%)\"\n");
    fs::write(&path, csv).unwrap();

    let (code, err) = floodmap(d, "dedup", &[]);
    assert_eq!(code, 2, "{err}");
    assert!(err.contains("classify/relevance.csv"), "{err}");
    let (code, err) = floodmap(d, "dedup", &["--force"]);
    assert_eq!(code, 0, "{err}");
    assert!(manifest(d).stages["dedup"].warnings.iter().any(|w| w.contains("forced")));
}

#[test]
fn artifact_from_a_stage_that_never_ran_is_refused() {
    let dir = setup(CONFIG);
    let d = dir.path();
    run_through(d, Stage::Ingest);
    fs::create_dir_all(d.join("out/classify")).unwrap();
    fs::write(d.join("out/classify/relevance.csv"), "image_ref,score,label,bin\n").unwrap();
    assert_eq!(floodmap(d, "dedup", &[]).0, 2);
}

#[test]
fn map_extent_with_zero_relevant_posts_marks_nothing() {
    let dir = setup(CONFIG);
    let d = dir.path();
    run_through(d, Stage::Dedup);
    fs::write(d.join("out/dedup/kept_posts.jsonl"), "").unwrap();
    let (code, err) = floodmap(d, "map-extent", &["--force"]);
    assert_eq!(code, 0, "{err}");
    let text = fs::read_to_string(d.join("out/map-extent/extent.geojson")).unwrap();
    let layer = floodmap_core::geomap::TractLayer::from_geojson(&text).unwrap();
    assert!(!layer.is_empty());
    assert!(layer.tracts().iter().all(|t| !t.attrs.flood_relevant));
    assert!(layer.tracts().iter().any(|t| t.attrs.has_posts));
    let warnings = &manifest(d).stages["map-extent"].warnings;
    assert!(warnings.iter().any(|w| w.contains("no relevant")), "{warnings:?}");
}

#[test]
fn gen_synthetic_refuses_to_overwrite_without_force() {
    let dir = setup(CONFIG);
    let d = dir.path();
    assert_eq!(floodmap(d, "gen-synthetic", &[]).0, 0);
    assert_ne!(floodmap(d, "gen-synthetic", &[]).0, 0);
    assert_eq!(floodmap(d, "gen-synthetic", &["--force"]).0, 0);
}

#[test]
fn seed_flag_overrides_the_config() {
    let dir = setup(CONFIG);
    let d = dir.path();
    assert_eq!(floodmap(d, "gen-synthetic", &["--seed", "5"]).0, 0);
    let a = fs::read(d.join("input/posts.jsonl")).unwrap();
    assert_eq!(manifest(d).stages["gen-synthetic"].seed, 5);
    assert_eq!(floodmap(d, "gen-synthetic", &["--seed", "6", "--force"]).0, 0);
    assert_ne!(a, fs::read(d.join("input/posts.jsonl")).unwrap());
}

#[test]
fn env_overrides_relocate_inputs() {
    let dir = setup(CONFIG);
    let d = dir.path();
    assert_eq!(floodmap(d, "gen-synthetic", &[]).0, 0);
    fs::rename(d.join("input/posts.jsonl"), d.join("elsewhere.jsonl")).unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_floodmap"))
        .current_dir(d)
        .args(["ingest", "--config", "run.toml"])
        .env("FLOODMAP_POSTS", d.join("elsewhere.jsonl"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
}
