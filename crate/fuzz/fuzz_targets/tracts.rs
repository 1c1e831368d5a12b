#![no_main]

use floodmap_core::geomap::TractLayer;
use floodmap_core::interchange::parse_tracts;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(tracts) = parse_tracts(s) {
        let _ = TractLayer::new(tracts);
    }
});
