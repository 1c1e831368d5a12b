#![no_main]

use floodmap_core::interchange::{LabelMap, PixelBox};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(map) = serde_json::from_slice::<LabelMap>(data) else { return };
    let issues = map.issues();
    match map.decode() {
        Ok(grid) => {
            assert!(issues.is_empty());
            assert_eq!(grid.encode().decode().expect("re-encoded map decodes").cells(), grid.cells());
            let (w, h) = grid.image_extent();
            let _ = grid.label_at(&PixelBox::new(0.0, 0.0, w / 2.0, h / 2.0));
        }
        Err(_) => assert!(!issues.is_empty()),
    }
});
