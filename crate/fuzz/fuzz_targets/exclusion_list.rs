#![no_main]

use fixdens::data::parse_exclusion_list;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for id in parse_exclusion_list(text) {
        assert!(!id.is_empty() && !id.starts_with('#'));
        assert_eq!(id.trim(), id);
    }
});
