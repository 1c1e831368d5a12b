//! The checked-in fuzz corpus seeds are valid inputs for their parsers, so
//! fuzzing starts from the interesting side of every format.

use std::fs;
use std::path::PathBuf;

use floodmap_core::gbdt::TreeEnsemble;
use floodmap_core::geomap::TractLayer;
use floodmap_core::interchange::labels::{parse_bag_labels, parse_relevance_labels};
use floodmap_core::interchange::post::parse_posts_str;
use floodmap_core::interchange::{parse_claims, parse_tracts, validate_bundle, AsciiGrid, LabelMap, PerceptionBundle};

fn seed(target: &str, name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "../../fuzz/corpus", target, name].iter().collect();
    fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))
}

#[test]
fn seeds_parse() {
    let posts = parse_posts_str(&seed("posts", "synthetic.jsonl"));
    assert!(posts.posts.len() == 5 && posts.errors.is_empty());
    assert!(!parse_posts_str(&seed("posts", "mixed.jsonl")).errors.is_empty());

    let b = PerceptionBundle::from_json(&seed("bundle", "small.json")).unwrap();
    assert!(validate_bundle(&b).is_valid());
    for name in ["from_bundle.json", "tiny.json"] {
        let m: LabelMap = serde_json::from_str(&seed("label_map", name)).unwrap();
        m.decode().unwrap();
    }

    let tracts = parse_tracts(&seed("tracts", "three.geojson")).unwrap();
    assert_eq!(tracts.len(), 3);
    assert_eq!(TractLayer::from_geojson(&seed("tract_layer", "evaluated.geojson")).unwrap().len(), 3);

    let claims = parse_claims(seed("claims", "synthetic.csv").as_bytes()).unwrap();
    assert!(claims.claims.len() == 5 && claims.errors.is_empty());
    assert_eq!(parse_claims(seed("claims", "mixed.csv").as_bytes()).unwrap().errors.len(), 1);

    AsciiGrid::parse(&seed("ascii_grid", "small.asc")).unwrap();
    assert_eq!(AsciiGrid::parse(&seed("ascii_grid", "depth_rows.asc")).unwrap().nrows, 3);

    TreeEnsemble::from_json(&seed("model", "waterlevel.json")).unwrap();
    assert!(TreeEnsemble::from_json(&seed("model", "bad_format.json")).is_err());

    assert_eq!(parse_bag_labels(seed("labels", "bag.csv").as_bytes()).unwrap().len(), 3);
    assert_eq!(parse_relevance_labels(seed("labels", "relevance.csv").as_bytes()).unwrap().len(), 3);
}
