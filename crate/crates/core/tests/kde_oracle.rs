mod oracle;

use fixdens::kde::{abramson_bandwidths, adaptive_kde_logdensity, fixed_kde_logdensity, pilot_density, rasterize_kde};
use fixdens::{BandwidthVector, Geometry, KernelParams, Point};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

struct Instance {
    w: f64,
    h: f64,
    sources: Vec<Point>,
    queries: Vec<Point>,
}

fn instance(rng: &mut ChaCha8Rng) -> Instance {
    let w = rng.gen_range(10.0..400.0f64).floor();
    let h = rng.gen_range(10.0..400.0f64).floor();
    let pt = |rng: &mut ChaCha8Rng| Point::new(rng.gen_range(0.0..w), rng.gen_range(0.0..h));
    let m = rng.gen_range(1..=30);
    let n = rng.gen_range(1..=20);
    Instance {
        w,
        h,
        sources: (0..m).map(|_| pt(rng)).collect(),
        queries: (0..n).map(|_| pt(rng)).collect(),
    }
}

#[test]
fn fixed_kde_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let inst = instance(&mut rng);
        let bw = rng.gen_range(0.5f64.ln()..100f64.ln()).exp();
        let got = fixed_kde_logdensity(&inst.sources, &inst.queries, bw, Geometry::new(inst.w, inst.h)).unwrap();
        let want = oracle::kde_log(&inst.sources, &vec![bw; inst.sources.len()], &inst.queries, inst.w, inst.h);
        for (g, o) in got.iter().zip(&want) {
            assert!(rel_err(*g, *o) <= 1e-12, "fixed: {g} vs {o} (h={bw})");
        }
    }
}

#[test]
fn adaptive_kde_matches_double_loop() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100 {
        let inst = instance(&mut rng);
        let geom = Geometry::new(inst.w, inst.h);
        let h0 = rng.gen_range(2f64.ln()..80f64.ln()).exp();
        // alpha in a range that keeps bandwidths between a few and a few hundred pixels
        let pilot = pilot_density(&inst.sources, h0, geom).unwrap();
        let median_pilot = {
            let mut p = pilot.clone();
            p.sort_by(f64::total_cmp);
            p[p.len() / 2]
        };
        let alpha = rng.gen_range(2.0..50.0) * median_pilot.sqrt();
        let params = KernelParams::adaptive(h0, alpha);
        let bw = params.bandwidths(&inst.sources, geom).unwrap();
        let want_bw = oracle::abramson(&inst.sources, h0, alpha, inst.w, inst.h);
        for (g, o) in bw.as_slice().iter().zip(&want_bw) {
            assert!(rel_err(*g, *o) <= 1e-12, "bandwidth {g} vs {o}");
        }
        let got = adaptive_kde_logdensity(&inst.sources, &bw, &inst.queries, geom).unwrap();
        let want = oracle::kde_log(&inst.sources, &want_bw, &inst.queries, inst.w, inst.h);
        for (g, o) in got.iter().zip(&want) {
            assert!(rel_err(*g, *o) <= 1e-12, "adaptive: {g} vs {o}");
        }
    }
}

#[test]
fn abramson_rule_on_known_pilot() {
    let bw = abramson_bandwidths(&[0.25, 1.0, 4.0], 2.0).unwrap();
    assert_eq!(bw.as_slice(), &[4.0, 2.0, 1.0]);
    assert!(abramson_bandwidths(&[0.0], 1.0).is_err());
}

#[test]
fn mismatched_bandwidths_rejected() {
    let s = [Point::new(1.0, 1.0), Point::new(2.0, 2.0)];
    let r = adaptive_kde_logdensity(&s, &BandwidthVector(vec![1.0]), &s, Geometry::new(5.0, 5.0));
    assert!(r.is_err());
}

#[test]
fn kde_integrates_to_one_on_fine_grid() {
    // midpoint rule with sub-pixel cells against the analytic truncation
    let geom = Geometry::new(40.0, 30.0);
    let sources = [Point::new(1.0, 2.0), Point::new(20.0, 15.0), Point::new(39.5, 29.0)];
    let k = 4;
    let queries: Vec<Point> = (0..30 * k)
        .flat_map(|r| (0..40 * k).map(move |c| Point::new((c as f64 + 0.5) / k as f64, (r as f64 + 0.5) / k as f64)))
        .collect();
    let lp = fixed_kde_logdensity(&sources, &queries, 3.0, geom).unwrap();
    let mass: f64 = lp.iter().map(|v| v.exp()).sum::<f64>() / (k * k) as f64;
    assert!((mass - 1.0).abs() < 1e-3, "mass {mass}");
}

proptest! {
    #[test]
    fn raster_is_normalized(
        pts in prop::collection::vec((0.0f64..50.0, 0.0f64..40.0), 1..20),
        h in 0.5f64..60.0,
    ) {
        let sources: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let g = rasterize_kde(&sources, &KernelParams::fixed(h), 50, 40).unwrap();
        prop_assert!((g.sum() - 1.0).abs() < 1e-9);
        prop_assert!(g.values().iter().all(|v| *v >= 0.0));
    }

    #[test]
    fn kde_is_permutation_invariant(
        pts in prop::collection::vec((0.0f64..50.0, 0.0f64..40.0), 2..15),
        h in 1.0f64..30.0,
    ) {
        let geom = Geometry::new(50.0, 40.0);
        let sources: Vec<Point> = pts.iter().map(|&(x, y)| Point::new(x, y)).collect();
        let mut rev = sources.clone();
        rev.reverse();
        let q = [Point::new(10.0, 10.0), Point::new(49.0, 1.0)];
        let a = fixed_kde_logdensity(&sources, &q, h, geom).unwrap();
        let b = fixed_kde_logdensity(&rev, &q, h, geom).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }
}

#[test]
fn oracle_erf_against_high_precision_values() {
    // mpmath values rounded to f64
    for (z, want) in [
        (0.1, 0.112_462_916_018_284_9),
        (0.5, 0.520_499_877_813_046_5),
        (1.0, 0.842_700_792_949_714_9),
        (2.0, 0.995_322_265_018_952_7),
        (3.0, 0.999_977_909_503_001_4),
        (4.5, 0.999_999_999_803_383_9),
    ] {
        let got = oracle::erf_series(z);
        assert!(rel_err(got, want) < 1e-15, "erf({z}) = {got}, want {want}");
    }
}
