use fixdens::export::{loso_density, pooled_density, LosoDensityConfig};
use fixdens::kde::rasterize_kde;
use fixdens::mixture::{fit_center_biases, rasterize_mixture, Component, ComponentSet, SaliencyComponent};
use fixdens::synth::{Blob, SyntheticSpec};
use fixdens::{ComponentMask, DensityGrid, KernelParams, MixtureParams};

fn corpus() -> Vec<SyntheticSpec> {
    [(64, 48, 4.0), (97, 31, 9.0), (40, 120, 2.5), (150, 100, 20.0)]
        .iter()
        .map(|&(w, h, s)| SyntheticSpec {
            width: w,
            height: h,
            subjects: 4,
            fixations_per_subject: 6,
            blobs: vec![
                Blob { x: w as f64 * 0.3, y: h as f64 * 0.4, sigma: s, weight: 0.6 },
                Blob { x: w as f64 * 0.8, y: h as f64 * 0.7, sigma: s * 2.0, weight: 0.3 },
            ],
            floor: 0.1,
            pixels_per_degree: None,
        })
        .collect()
}

fn assert_unit(g: &DensityGrid, what: &str) {
    let s: f64 = g.values().iter().sum();
    assert!((s - 1.0).abs() < 1e-6, "{what}: sum {s}");
    assert!(g.values().iter().all(|v| *v >= 0.0 && v.is_finite()), "{what}: bad cell");
}

#[test]
fn every_raster_sums_to_one() {
    let kernels = [KernelParams::fixed(3.0), KernelParams::fixed(0.4), KernelParams::adaptive(6.0, 0.02)];
    for (n, spec) in corpus().iter().enumerate() {
        let ds = spec.sample_dataset(3, n as u64).unwrap();
        let cbs = fit_center_biases(&ds).unwrap();
        for image in &ds.images {
            let table = &ds.fixations[&image.image_id];
            let (w, h) = (image.width as usize, image.height as usize);
            let cb = &cbs[&image.image_id];
            assert_unit(&cb.rasterize(w, h).unwrap(), "center bias");
            let components = ComponentSet {
                center_bias: Some(cb.clone()),
                saliency: Some(SaliencyComponent::new(spec.truth_grid().unwrap(), image).unwrap()),
            };
            let mixture = MixtureParams::new(ComponentMask::all())
                .with_logit(Component::CenterBias, -0.5)
                .with_logit(Component::Uniform, -2.0)
                .with_logit(Component::Saliency, 0.3);
            for k in &kernels {
                assert_unit(&rasterize_kde(&table.points(), k, w, h).unwrap(), "kde");
                assert_unit(&rasterize_mixture(image, &table.points(), k, &mixture, &components).unwrap(), "mixture");
                assert_unit(&pooled_density(image, table, k, &mixture, &components).unwrap(), "pooled");
                for r in [None, Some(1.0)] {
                    let d = loso_density(image, table, k, &mixture, &components, &LosoDensityConfig { rbf_radius: r })
                        .unwrap();
                    assert_unit(&d.grid, "loso");
                }
            }
        }
    }
}
