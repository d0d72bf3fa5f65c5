#![no_main]

use fixdens::ComponentMask;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(mask) = ComponentMask::parse_list(text) {
        assert!(!mask.is_empty());
        assert_eq!(ComponentMask::parse_list(&mask.to_list()).unwrap(), mask);
    }
});
