#![no_main]

use floodmap_core::interchange::labels::{parse_bag_labels, parse_relevance_labels};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let _ = parse_bag_labels(data);
    let _ = parse_relevance_labels(data);
});
