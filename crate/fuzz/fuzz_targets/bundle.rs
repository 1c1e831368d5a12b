#![no_main]

use floodmap_core::interchange::bundle::{validate_bundle, PerceptionBundle};
use floodmap_core::waterlevel::image_persons;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    let Ok(b) = PerceptionBundle::from_json(s) else { return };
    let report = validate_bundle(&b);
    if report.is_valid() {
        // a valid bundle decodes and feeds feature extraction without panicking
        b.label_map.decode().expect("valid bundle has a decodable label map");
        let _ = image_persons(&b);
    }
    assert_eq!(PerceptionBundle::from_json(&b.to_json()).ok().as_ref().map(|x| x.to_json()), Some(b.to_json()));
});
