#![no_main]

use fixdens::params::ImageParams;
use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(p) = ImageParams::parse(text) {
        let kernel = p.kernel_params().unwrap();
        let mixture = p.mixture_params().unwrap();
        assert!(kernel.validate().is_ok());
        let w = mixture.weights().unwrap();
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(ImageParams::parse(&p.to_json().unwrap()).unwrap(), p);
    }
});
