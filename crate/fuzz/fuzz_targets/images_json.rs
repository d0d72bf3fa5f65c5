#![no_main]

use fixdens::data::parse_images_json;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(images) = parse_images_json(text) {
        let again = serde_json::to_string(&images).unwrap();
        assert_eq!(parse_images_json(&again).unwrap(), images);
    }
});
