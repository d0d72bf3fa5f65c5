#![no_main]

use fixdens::DensityGrid;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(grid) = DensityGrid::decode(data) {
        // the encoding is canonical
        assert_eq!(grid.encode(), data);
        let _ = grid.check_invariants();
        let _ = grid.to_probability();
    }
});
