#![no_main]

use fixdens::synth::SyntheticSpec;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(spec) = serde_json::from_slice::<SyntheticSpec>(data) else {
        return;
    };
    if spec.validate().is_err() {
        return;
    }
    // keep each run cheap
    if spec.width as u64 * spec.height as u64 > 1 << 14 || spec.subjects * spec.fixations_per_subject > 500 {
        return;
    }
    let grid = spec.truth_grid().unwrap();
    assert!((grid.sum() - 1.0).abs() < 1e-9);
    let (image, table) = spec.sample_image("fuzz", 0).unwrap();
    let geom = image.geometry();
    assert!(table.points().iter().all(|p| geom.contains(*p)));
});
