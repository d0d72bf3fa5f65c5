#![no_main]

use fixdens::data::parse_fixations_csv;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(rows) = parse_fixations_csv(text) {
        for r in &rows {
            assert!(r.x.is_finite() && r.y.is_finite());
            assert!(!r.image_id.is_empty() && !r.subject_id.is_empty());
        }
    }
});
