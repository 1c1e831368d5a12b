#![no_main]

use floodmap_core::interchange::AsciiGrid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(s) = std::str::from_utf8(data) else { return };
    if let Ok(g) = AsciiGrid::parse(s) {
        let text = g.to_ascii();
        let back = AsciiGrid::parse(&text).expect("written grid parses");
        assert_eq!(back.to_ascii(), text);
    }
});
