//! Fixed- and adaptive-bandwidth isotropic Gaussian KDE.
//!
//! Every kernel is truncated to the domain rectangle and renormalized with the
//! product of the two axis CDF differences, so each estimate integrates to one
//! over the image. Adaptive bandwidths follow Abramson's two-stage rule
//! `h_j = alpha / sqrt(pilot(x_j))`, where the pilot is a fixed-bandwidth KDE
//! over the same sources, self-kernels included.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::data::{Geometry, Point};
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::util::log_sum_exp;

pub(crate) const LN_2PI: f64 = 1.837_877_066_409_345_3;
const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedKernelParams {
    pub h: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdaptiveKernelParams {
    pub h0: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KernelParams {
    Fixed(FixedKernelParams),
    Adaptive(AdaptiveKernelParams),
}

impl KernelParams {
    pub fn fixed(h: f64) -> Self {
        KernelParams::Fixed(FixedKernelParams { h })
    }

    pub fn adaptive(h0: f64, alpha: f64) -> Self {
        KernelParams::Adaptive(AdaptiveKernelParams { h0, alpha })
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v > 0.0;
        match *self {
            KernelParams::Fixed(p) if ok(p.h) => Ok(()),
            KernelParams::Adaptive(p) if ok(p.h0) && ok(p.alpha) => Ok(()),
            _ => Err(Error::invalid(format!("kernel parameters must be positive: {self:?}"))),
        }
    }

    /// Per-source bandwidths for this kernel over `sources`.
    pub fn bandwidths(&self, sources: &[Point], geom: Geometry) -> Result<BandwidthVector> {
        self.validate()?;
        match *self {
            KernelParams::Fixed(p) => {
                check_points(sources, "sources")?;
                Ok(BandwidthVector(vec![p.h; sources.len()]))
            }
            KernelParams::Adaptive(p) => {
                let pilot = pilot_density(sources, p.h0, geom)?;
                abramson_bandwidths(&pilot, p.alpha)
            }
        }
    }
}

/// Per-source bandwidths in pixels, aligned with the source list.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthVector(pub Vec<f64>);

impl BandwidthVector {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.0.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

/// Log of a kernel's in-domain mass and its derivative with respect to `log h`.
#[derive(Debug, Clone, Copy)]
pub(crate) struct KernelNorm {
    pub log_z: f64,
    pub dlog_z: f64,
}

fn std_normal_pdf(z: f64) -> f64 {
    FRAC_1_SQRT_2PI * (-0.5 * z * z).exp()
}

/// Mass of N(c, h^2) on [0, extent] and `h * d(mass)/dh`.
fn axis_mass(c: f64, extent: f64, h: f64) -> (f64, f64) {
    let lo = c / h;
    let hi = (extent - c) / h;
    let s = std::f64::consts::SQRT_2;
    let mass = 1.0 - 0.5 * libm::erfc(lo / s) - 0.5 * libm::erfc(hi / s);
    let h_dmass = -(lo * std_normal_pdf(lo) + hi * std_normal_pdf(hi));
    (mass, h_dmass)
}

pub(crate) fn kernel_norm(center: Point, h: f64, geom: Geometry) -> KernelNorm {
    let (mx, dmx) = axis_mass(center.x, geom.width, h);
    let (my, dmy) = axis_mass(center.y, geom.height, h);
    KernelNorm {
        log_z: mx.ln() + my.ln(),
        dlog_z: dmx / mx + dmy / my,
    }
}

/// Log of the truncated, renormalized kernel and its derivative in `log h`.
#[inline]
pub(crate) fn log_kernel(d2: f64, h: f64, log_h: f64, norm: KernelNorm) -> (f64, f64) {
    let inv_h2 = 1.0 / (h * h);
    let value = -0.5 * d2 * inv_h2 - LN_2PI - 2.0 * log_h - norm.log_z;
    let dvalue = d2 * inv_h2 - 2.0 - norm.dlog_z;
    (value, dvalue)
}

fn check_points(points: &[Point], what: &str) -> Result<()> {
    if points.is_empty() {
        return Err(Error::invalid(format!("{what} must be nonempty")));
    }
    if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::invalid(format!("{what} contain non-finite coordinates")));
    }
    Ok(())
}

fn check_bandwidth(h: f64) -> Result<()> {
    if h.is_finite() && h > 0.0 {
        Ok(())
    } else {
        Err(Error::invalid(format!("bandwidth must be positive and finite, got {h}")))
    }
}

/// Log density of the fixed-bandwidth KDE over `sources` at each query.
pub fn fixed_kde_logdensity(
    sources: &[Point],
    queries: &[Point],
    h: f64,
    geom: Geometry,
) -> Result<Vec<f64>> {
    check_bandwidth(h)?;
    let bw = BandwidthVector(vec![h; sources.len()]);
    adaptive_kde_logdensity(sources, &bw, queries, geom)
}

/// Pilot density at every source: fixed KDE with bandwidth `h0` over the same
/// sources, each source's own kernel included.
pub fn pilot_density(sources: &[Point], h0: f64, geom: Geometry) -> Result<Vec<f64>> {
    Ok(fixed_kde_logdensity(sources, sources, h0, geom)?
        .into_iter()
        .map(f64::exp)
        .collect())
}

/// Abramson bandwidths `h_j = alpha / sqrt(pilot_j)`.
pub fn abramson_bandwidths(pilot_values: &[f64], alpha: f64) -> Result<BandwidthVector> {
    check_bandwidth(alpha)?;
    if let Some(p) = pilot_values.iter().find(|p| !(p.is_finite() && **p > 0.0)) {
        return Err(Error::invalid(format!("pilot value must be positive, got {p}")));
    }
    Ok(BandwidthVector(
        pilot_values.iter().map(|p| alpha / p.sqrt()).collect(),
    ))
}

/// Log density of the KDE with per-source bandwidths at each query.
pub fn adaptive_kde_logdensity(
    sources: &[Point],
    bandwidths: &BandwidthVector,
    queries: &[Point],
    geom: Geometry,
) -> Result<Vec<f64>> {
    check_points(sources, "sources")?;
    if queries.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
        return Err(Error::invalid("queries contain non-finite coordinates"));
    }
    if bandwidths.len() != sources.len() {
        return Err(Error::invalid(format!(
            "{} bandwidths for {} sources",
            bandwidths.len(),
            sources.len()
        )));
    }
    for &h in bandwidths.as_slice() {
        check_bandwidth(h)?;
    }
    let prepared: Vec<(Point, f64, f64, KernelNorm)> = sources
        .iter()
        .zip(bandwidths.as_slice())
        .map(|(&s, &h)| (s, h, h.ln(), kernel_norm(s, h, geom)))
        .collect();
    let log_m = (sources.len() as f64).ln();
    let mut terms = vec![0.0; sources.len()];
    Ok(queries
        .iter()
        .map(|&q| {
            for (t, &(s, h, log_h, norm)) in terms.iter_mut().zip(&prepared) {
                *t = log_kernel(s.dist2(q), h, log_h, norm).0;
            }
            log_sum_exp(&terms) - log_m
        })
        .collect())
}

/// Rasterizes the KDE at pixel centers of a `width x height` grid and
/// renormalizes the result to sum to one.
pub fn rasterize_kde(
    sources: &[Point],
    params: &KernelParams,
    width: usize,
    height: usize,
) -> Result<DensityGrid> {
    let geom = Geometry::new(width as f64, height as f64);
    let bw = params.bandwidths(sources, geom)?;
    DensityGrid::normalized(width, height, kde_raster_values(sources, &bw, width, height, geom))
}

/// Unnormalized per-pixel KDE values, evaluated as a sum of separable outer
/// products (one matrix product over sources).
pub(crate) fn kde_raster_values(
    sources: &[Point],
    bandwidths: &BandwidthVector,
    width: usize,
    height: usize,
    geom: Geometry,
) -> Vec<f64> {
    let m = sources.len();
    let sx = geom.width / width as f64;
    let sy = geom.height / height as f64;
    let mut cols = Array2::<f64>::zeros((m, width));
    let mut rows = Array2::<f64>::zeros((height, m));
    for (j, (&s, &h)) in sources.iter().zip(bandwidths.as_slice()).enumerate() {
        let norm = kernel_norm(s, h, geom);
        let coef = (-LN_2PI - 2.0 * h.ln() - norm.log_z).exp() / m as f64;
        let inv = 0.5 / (h * h);
        for i in 0..width {
            let d = (i as f64 + 0.5) * sx - s.x;
            cols[[j, i]] = (-d * d * inv).exp();
        }
        for k in 0..height {
            let d = (k as f64 + 0.5) * sy - s.y;
            rows[[k, j]] = coef * (-d * d * inv).exp();
        }
    }
    rows.dot(&cols).into_raw_vec_and_offset().0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn geom() -> Geometry {
        Geometry::new(1000.0, 1000.0)
    }

    #[test]
    fn peak_value_far_from_border() {
        let src = [Point::new(500.0, 500.0)];
        let out = fixed_kde_logdensity(&src, &[Point::new(500.0, 500.0), Point::new(502.0, 500.0)], 2.0, geom()).unwrap();
        let peak = 1.0 / (2.0 * std::f64::consts::PI * 4.0);
        assert!((out[0] - peak.ln()).abs() < 1e-12);
        assert!((out[0].exp() - 0.0397887).abs() < 1e-7);
        assert!((out[1].exp() - 0.0241330).abs() < 1e-7);
        assert!((out[1] - (peak * (-0.5f64).exp()).ln()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_sources_average() {
        let q = Point::new(300.0, 300.0);
        let two = fixed_kde_logdensity(&[Point::new(290.0, 300.0), Point::new(310.0, 300.0)], &[q], 7.0, geom()).unwrap();
        let one = fixed_kde_logdensity(&[Point::new(290.0, 300.0)], &[q], 7.0, geom()).unwrap();
        assert!((two[0] - one[0]).abs() < 1e-13);
    }

    #[test]
    fn border_kernel_is_renormalized() {
        let g = Geometry::new(100.0, 100.0);
        let n = kernel_norm(Point::new(0.0, 50.0), 5.0, g);
        assert!((n.log_z - 0.5f64.ln()).abs() < 1e-12);
        let n = kernel_norm(Point::new(0.0, 0.0), 5.0, g);
        assert!((n.log_z - 0.25f64.ln()).abs() < 1e-12);
        let n = kernel_norm(Point::new(500.0, 500.0), 2.0, geom());
        assert!(n.log_z.abs() < 1e-12);
    }

    #[test]
    fn kernel_norm_derivative_matches_finite_difference() {
        let g = Geometry::new(120.0, 80.0);
        for &(x, y, h) in &[(3.0, 70.0, 6.0), (60.0, 40.0, 50.0), (0.5, 0.5, 0.8)] {
            let p = Point::new(x, y);
            let n = kernel_norm(p, h, g);
            let e: f64 = 1e-6;
            let fd = (kernel_norm(p, h * e.exp(), g).log_z - kernel_norm(p, h * (-e).exp(), g).log_z) / (2.0 * e);
            assert!((fd - n.dlog_z).abs() < 1e-7, "{fd} vs {}", n.dlog_z);
        }
    }

    #[test]
    fn pilot_single_source_is_peak() {
        let s = [Point::new(400.0, 600.0)];
        let p = pilot_density(&s, 3.0, geom()).unwrap();
        assert!((p[0] - 1.0 / (2.0 * std::f64::consts::PI * 9.0)).abs() < 1e-15);
    }

    #[test]
    fn pilot_square_corners_equal() {
        let s = [Point::new(400.0, 400.0), Point::new(420.0, 400.0), Point::new(400.0, 420.0), Point::new(420.0, 420.0)];
        let p = pilot_density(&s, 15.0, geom()).unwrap();
        for v in &p {
            assert!((v - p[0]).abs() < 1e-15 * p[0]);
        }
    }

    #[test]
    fn abramson_formula() {
        let bw = abramson_bandwidths(&[1e-4], 0.1).unwrap();
        assert!((bw.0[0] - 10.0).abs() < 1e-12);
        let a = abramson_bandwidths(&[0.2, 0.02, 0.002], 1.5).unwrap();
        let b = abramson_bandwidths(&[0.2, 0.02, 0.002], 3.0).unwrap();
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((y - 2.0 * x).abs() < 1e-12);
        }
        let c = abramson_bandwidths(&[0.04; 3], 2.0).unwrap();
        assert!(c.0.iter().all(|h| (h - 10.0).abs() < 1e-12));
        assert!(abramson_bandwidths(&[0.0], 1.0).is_err());
        assert!(abramson_bandwidths(&[-1.0], 1.0).is_err());
    }

    #[test]
    fn equal_bandwidths_reduce_to_fixed() {
        let s = [Point::new(10.0, 20.0), Point::new(50.0, 70.0), Point::new(3.0, 90.0)];
        let q = [Point::new(15.0, 25.0), Point::new(90.0, 5.0)];
        let g = Geometry::new(100.0, 100.0);
        let a = adaptive_kde_logdensity(&s, &BandwidthVector(vec![8.0; 3]), &q, g).unwrap();
        let f = fixed_kde_logdensity(&s, &q, 8.0, g).unwrap();
        for (x, y) in a.iter().zip(&f) {
            assert!((x - y).abs() <= 1e-12 * y.abs());
        }
    }

    #[test]
    fn cluster_query_favours_adaptive() {
        let g = Geometry::new(400.0, 400.0);
        let mut s: Vec<Point> = (0..8).map(|i| Point::new(200.0 + (i % 3) as f64, 200.0 + (i / 3) as f64)).collect();
        s.push(Point::new(50.0, 350.0));
        let pilot = pilot_density(&s, 10.0, g).unwrap();
        let bw = abramson_bandwidths(&pilot, 0.3).unwrap();
        let mean_h = bw.0.iter().sum::<f64>() / bw.len() as f64;
        let q = [Point::new(201.0, 201.0)];
        let a = adaptive_kde_logdensity(&s, &bw, &q, g).unwrap()[0];
        let f = fixed_kde_logdensity(&s, &q, mean_h, g).unwrap()[0];
        assert!(a > f, "adaptive {a} fixed {f}");
    }

    #[test]
    fn input_errors() {
        let g = geom();
        assert!(fixed_kde_logdensity(&[], &[Point::new(1.0, 1.0)], 1.0, g).is_err());
        assert!(fixed_kde_logdensity(&[Point::new(1.0, 1.0)], &[], 0.0, g).is_err());
        assert!(fixed_kde_logdensity(&[Point::new(f64::NAN, 1.0)], &[], 1.0, g).is_err());
        assert!(adaptive_kde_logdensity(&[Point::new(1.0, 1.0)], &BandwidthVector(vec![1.0, 2.0]), &[], g).is_err());
        assert!(rasterize_kde(&[], &KernelParams::fixed(2.0), 10, 10).is_err());
    }

    #[test]
    fn raster_peaks_at_center_and_sums_to_one() {
        let grid = rasterize_kde(&[Point::new(50.5, 50.5)], &KernelParams::fixed(5.0), 101, 101).unwrap();
        let (argmax, _) = grid
            .values()
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b });
        assert_eq!(argmax, 50 * 101 + 50);
        assert!((grid.sum() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn raster_matches_pointwise_evaluation() {
        let s = [Point::new(10.2, 4.0), Point::new(3.3, 8.8)];
        let g = Geometry::new(16.0, 12.0);
        let params = KernelParams::adaptive(3.0, 0.2);
        let bw = params.bandwidths(&s, g).unwrap();
        let raw = kde_raster_values(&s, &bw, 16, 12, g);
        let centers: Vec<Point> = (0..12).flat_map(|r| (0..16).map(move |c| Point::new(c as f64 + 0.5, r as f64 + 0.5))).collect();
        let direct = adaptive_kde_logdensity(&s, &bw, &centers, g).unwrap();
        for (a, b) in raw.iter().zip(&direct) {
            assert!((a - b.exp()).abs() <= 1e-12 * b.exp());
        }
    }

    proptest::proptest! {
        #[test]
        fn abramson_is_monotone(a in 1e-6f64..1.0, b in 1e-6f64..1.0, alpha in 1e-3f64..10.0) {
            let bw = abramson_bandwidths(&[a, b], alpha).unwrap();
            if a > b { proptest::prop_assert!(bw.0[0] < bw.0[1]); }
            if a < b { proptest::prop_assert!(bw.0[0] > bw.0[1]); }
        }

        #[test]
        fn translation_equivariance(dx in -50.0f64..50.0, dy in -50.0f64..50.0, h in 1.0f64..8.0,
                                    offs in proptest::collection::vec((-20.0f64..20.0, -20.0f64..20.0), 4)) {
            let g = Geometry::new(500.0, 500.0);
            let base = Point::new(250.0, 250.0);
            let src: Vec<Point> = offs[..3].iter().map(|(a, b)| Point::new(base.x + a, base.y + b)).collect();
            let q = [Point::new(base.x + offs[3].0, base.y + offs[3].1)];
            let shift = |p: &Point| Point::new(p.x + dx, p.y + dy);
            let a = fixed_kde_logdensity(&src, &q, h, g).unwrap()[0];
            let b = fixed_kde_logdensity(&src.iter().map(shift).collect::<Vec<_>>(), &[shift(&q[0])], h, g).unwrap()[0];
            proptest::prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn density_positive_and_finite(x in 0.0f64..64.0, y in 0.0f64..48.0, qx in 0.0f64..64.0, qy in 0.0f64..48.0, h in 0.5f64..30.0) {
            let v = fixed_kde_logdensity(&[Point::new(x, y)], &[Point::new(qx, qy)], h, Geometry::new(64.0, 48.0)).unwrap()[0];
            proptest::prop_assert!(v.is_finite());
            proptest::prop_assert!(v < 0.0);
        }
    }
}
