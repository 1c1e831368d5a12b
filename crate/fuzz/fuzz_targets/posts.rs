#![no_main]

use floodmap_core::interchange::post::parse_posts_str;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(s) = std::str::from_utf8(data) {
        let batch = parse_posts_str(s);
        // every non-blank line is either a post or an error
        assert!(batch.posts.len() + batch.errors.len() <= s.lines().count());
    }
});
