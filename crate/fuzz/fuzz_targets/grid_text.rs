#![no_main]

use fixdens::{DensityGrid, GridSpace};
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    for space in [GridSpace::Probability, GridSpace::LogProbability] {
        if let Ok(grid) = DensityGrid::parse_text(text, space) {
            assert_eq!(DensityGrid::parse_text(&grid.to_text(), space).unwrap(), grid);
        }
    }
});
