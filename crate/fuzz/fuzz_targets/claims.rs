#![no_main]

use floodmap_core::interchange::parse_claims;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(batch) = parse_claims(data) {
        assert!(batch.claims.iter().all(|c| c.location.is_valid()));
    }
});
