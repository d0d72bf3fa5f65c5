mod oracle;

use fixdens::export::{default_radius, loso_density, pooled_density, rbf_weights, LosoDensityConfig};
use fixdens::mixture::{Component, ComponentSet};
use fixdens::synth::{Blob, SyntheticSpec};
use fixdens::{ComponentMask, KernelParams, MixtureParams, Point};

fn pixel_centers(w: usize, h: usize) -> Vec<Point> {
    (0..h)
        .flat_map(|r| (0..w).map(move |c| Point::new(c as f64 + 0.5, r as f64 + 0.5)))
        .collect()
}

/// Pixel-center KDE + uniform mixture with each component normalized over the grid.
fn fold_grid(train: &[Point], h: f64, w_kde: f64, w: usize, hgt: usize) -> Vec<f64> {
    let centers = pixel_centers(w, hgt);
    let kde: Vec<f64> = oracle::kde_log(train, &vec![h; train.len()], &centers, w as f64, hgt as f64)
        .iter()
        .map(|v| v.exp())
        .collect();
    let s: f64 = kde.iter().sum();
    let n = (w * hgt) as f64;
    kde.iter().map(|v| w_kde * v / s + (1.0 - w_kde) / n).collect()
}

#[test]
fn loso_density_matches_pixelwise_assembly() {
    let spec = SyntheticSpec {
        width: 48,
        height: 36,
        subjects: 4,
        fixations_per_subject: 5,
        blobs: vec![
            Blob { x: 12.0, y: 10.0, sigma: 3.0, weight: 0.5 },
            Blob { x: 35.0, y: 25.0, sigma: 4.0, weight: 0.5 },
        ],
        floor: 0.0,
        pixels_per_degree: None,
    };
    let (image, table) = spec.sample_image("e", 6).unwrap();
    let (w, hgt) = (48usize, 36usize);
    let h = 3.5;
    let mixture = MixtureParams::new(ComponentMask::only(&[Component::Kde, Component::Uniform]))
        .with_logit(Component::Uniform, -1.0);
    let w_kde = 1.0 / (1.0 + (-1.0f64).exp());
    let r = 6.0;
    let got = loso_density(
        &image,
        &table,
        &KernelParams::fixed(h),
        &mixture,
        &ComponentSet::default(),
        &LosoDensityConfig { rbf_radius: Some(r) },
    )
    .unwrap();
    assert_eq!(got.radius, r);

    let by = table.points_by_subject();
    let folds: Vec<Vec<f64>> = by
        .iter()
        .map(|(s, _)| {
            let train: Vec<Point> = by.iter().filter(|(t, _)| t != s).flat_map(|(_, p)| p.clone()).collect();
            fold_grid(&train, h, w_kde, w, hgt)
        })
        .collect();
    let mut want = Vec::with_capacity(w * hgt);
    let mut dead = 0;
    for (i, x) in pixel_centers(w, hgt).iter().enumerate() {
        let raw: Vec<f64> = by
            .iter()
            .map(|(_, pts)| {
                pts.iter()
                    .map(|p| {
                        let d = ((p.x - x.x).powi(2) + (p.y - x.y).powi(2)).sqrt();
                        (1.0 - d / r).max(0.0).powi(2)
                    })
                    .fold(0.0, f64::max)
            })
            .collect();
        let total: f64 = raw.iter().sum();
        let weights: Vec<f64> = if total > 0.0 {
            raw.iter().map(|v| v / total).collect()
        } else {
            dead += 1;
            vec![1.0 / by.len() as f64; by.len()]
        };
        want.push(weights.iter().zip(&folds).map(|(wt, f)| wt * f[i]).sum::<f64>());
    }
    assert!(dead > 0, "fixture should contain pixels outside every subject's support");
    let s: f64 = want.iter().sum();
    for (g, o) in got.grid.values().iter().zip(&want) {
        let o = o / s;
        assert!((g - o).abs() <= 1e-10 * o, "{g} vs {o}");
    }
    assert!((got.grid.sum() - 1.0).abs() < 1e-9);
}

#[test]
fn weights_sum_to_one_everywhere() {
    let by = vec![
        ("a".to_string(), vec![Point::new(2.0, 2.0)]),
        ("b".to_string(), vec![Point::new(3.0, 2.5), Point::new(15.0, 9.0)]),
    ];
    let wm = rbf_weights(&by, 4.0, 20, 12).unwrap();
    for i in 0..20 * 12 {
        let s: f64 = wm.normalized.iter().map(|v| v[i]).sum();
        assert!((s - 1.0).abs() < 1e-12);
    }
}

#[test]
fn default_radius_is_clamped_median_cross_subject_distance() {
    let by = vec![
        ("a".to_string(), vec![Point::new(0.0, 0.0), Point::new(100.0, 0.0)]),
        ("b".to_string(), vec![Point::new(30.0, 0.0)]),
    ];
    // nearest other-subject distances: 30, 70, 30 -> median 30
    assert_eq!(default_radius(&by).unwrap(), 30.0);
    let close = vec![
        ("a".to_string(), vec![Point::new(0.0, 0.0)]),
        ("b".to_string(), vec![Point::new(1.0, 0.0)]),
    ];
    assert_eq!(default_radius(&close).unwrap(), 5.0);
}

#[test]
fn pooled_density_matches_full_kde() {
    let spec = SyntheticSpec::single_blob(30, 20, 4.0, 3, 4);
    let (image, table) = spec.sample_image("p", 0).unwrap();
    let mixture = MixtureParams::new(ComponentMask::only(&[Component::Kde]));
    let got = pooled_density(&image, &table, &KernelParams::fixed(2.5), &mixture, &ComponentSet::default()).unwrap();
    let want = fold_grid(&table.points(), 2.5, 1.0, 30, 20);
    for (g, o) in got.values().iter().zip(&want) {
        assert!((g - o).abs() <= 1e-10 * o);
    }
}
