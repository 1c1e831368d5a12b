#![no_main]

use floodmap_core::geomap::TractLayer;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(layer) = TractLayer::from_geojson(s) {
        let again = serde_json::to_string(&layer.to_geojson()).unwrap();
        assert_eq!(TractLayer::from_geojson(&again).unwrap(), layer);
    }
});
