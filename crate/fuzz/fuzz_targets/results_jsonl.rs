#![no_main]

use fixdens::params::{parse_results_jsonl, records_to_jsonl};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(records) = parse_results_jsonl(text) {
        let again = records_to_jsonl(&records).unwrap();
        assert_eq!(parse_results_jsonl(&again).unwrap(), records);
    }
});
