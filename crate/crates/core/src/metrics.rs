//! Information gain, AUC, improvement quantiles, parameter extremes and
//! bootstrap confidence intervals.

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Geometry, Point};
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::mixture::Component;
use crate::params::{ImageParams, KernelSpec, ResultRecord};
use crate::util::{rng_stream, sorted_quantile};

/// Per-image scores used for model comparison.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub image_id: String,
    pub ig_bits: f64,
    /// Absent when the evaluation scheme yields no density map (LOFO).
    pub auc: Option<f64>,
    pub n_fixations: usize,
}

impl From<&ResultRecord> for MetricRecord {
    fn from(r: &ResultRecord) -> Self {
        Self {
            image_id: r.image_id.clone(),
            ig_bits: r.ig_bits,
            auc: r.auc,
            n_fixations: r.n_fixations,
        }
    }
}

/// Mean log2 likelihood over the uniform density, in bits per fixation.
pub fn information_gain_bits(per_fixation_lognats: &[f64], geom: Geometry) -> Result<f64> {
    if per_fixation_lognats.is_empty() {
        return Err(Error::invalid("information gain of zero fixations"));
    }
    if per_fixation_lognats.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite log-likelihood"));
    }
    let mean = per_fixation_lognats.iter().sum::<f64>() / per_fixation_lognats.len() as f64;
    Ok((mean + geom.area().ln()) / std::f64::consts::LN_2)
}

/// AUC of fixated pixels against all pixels of the grid, ties counted half.
/// Fixations map to the pixel containing them. Rank-based, so the grid may be
/// in either probability or log space.
pub fn auc_uniform(grid: &DensityGrid, fixations: &[Point]) -> Result<f64> {
    if fixations.is_empty() {
        return Err(Error::invalid("AUC needs at least one fixation"));
    }
    let (w, h) = (grid.width(), grid.height());
    let mut sorted = grid.values().to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    let mut total = 0.0;
    for p in fixations {
        let (col, row) = (p.x.floor(), p.y.floor());
        if !(col >= 0.0 && row >= 0.0 && col < w as f64 && row < h as f64) {
            return Err(Error::invalid(format!("fixation ({}, {}) outside the {w}x{h} grid", p.x, p.y)));
        }
        let v = grid.get(col as usize, row as usize);
        let below = sorted.partition_point(|&s| s < v);
        let not_above = sorted.partition_point(|&s| s <= v);
        total += (below as f64 + 0.5 * (not_above - below) as f64) / n;
    }
    Ok(total / fixations.len() as f64)
}

/// Quantiles reported by default: median, upper tail and max.
pub const DEFAULT_QUANTILES: [f64; 6] = [0.5, 0.75, 0.9, 0.95, 0.99, 1.0];

/// Baselines closer to zero than this (bits/fixation) are left out of the
/// relative-improvement column.
pub const REL_GUARD_BITS: f64 = 0.05;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileRow {
    pub quantile: f64,
    pub delta_ll_bits: f64,
    pub delta_ll_rel: Option<f64>,
    pub delta_auc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuantileTable {
    pub rows: Vec<QuantileRow>,
    pub n_images: usize,
    /// Images left out of the relative column.
    pub rel_excluded: usize,
    /// Whether AUC differences were available for every image.
    pub has_auc: bool,
}

/// Per-image improvements of `b` over `a` summarized at `quantiles`.
pub fn improvement_quantiles(
    a: &[MetricRecord],
    b: &[MetricRecord],
    quantiles: &[f64],
) -> Result<QuantileTable> {
    if let Some(q) = quantiles.iter().find(|q| !(0.0..=1.0).contains(*q)) {
        return Err(Error::invalid(format!("quantile {q} outside [0, 1]")));
    }
    let index = |rs: &[MetricRecord], name: &str| -> Result<BTreeMap<String, MetricRecord>> {
        let mut m = BTreeMap::new();
        for r in rs {
            if m.insert(r.image_id.clone(), r.clone()).is_some() {
                return Err(Error::invalid(format!("duplicate image {} in result set {name}", r.image_id)));
            }
        }
        Ok(m)
    };
    let ma = index(a, "a")?;
    let mb = index(b, "b")?;
    if !ma.keys().eq(mb.keys()) {
        return Err(Error::invalid("result sets cover different images"));
    }
    if ma.is_empty() {
        return Err(Error::invalid("empty result sets"));
    }
    let mut d_ll = Vec::new();
    let mut d_rel = Vec::new();
    let mut d_auc = Vec::new();
    let mut has_auc = true;
    for (id, ra) in &ma {
        let rb = &mb[id];
        let d = rb.ig_bits - ra.ig_bits;
        d_ll.push(d);
        if ra.ig_bits.abs() >= REL_GUARD_BITS {
            d_rel.push(d / ra.ig_bits);
        }
        match (ra.auc, rb.auc) {
            (Some(x), Some(y)) => d_auc.push(y - x),
            _ => has_auc = false,
        }
    }
    for v in [&mut d_ll, &mut d_rel, &mut d_auc] {
        v.sort_by(f64::total_cmp);
    }
    let rows = quantiles
        .iter()
        .map(|&q| QuantileRow {
            quantile: q,
            delta_ll_bits: sorted_quantile(&d_ll, q),
            delta_ll_rel: (!d_rel.is_empty()).then(|| sorted_quantile(&d_rel, q)),
            delta_auc: has_auc.then(|| sorted_quantile(&d_auc, q)),
        })
        .collect();
    Ok(QuantileTable {
        rows,
        n_images: d_ll.len(),
        rel_excluded: d_ll.len() - d_rel.len(),
        has_auc,
    })
}

/// Named scalar parameters of one fitted image: kernel bandwidths and the
/// weight of each active component.
pub fn parameter_values(p: &ImageParams) -> Result<Vec<(String, f64)>> {
    let mut out = Vec::new();
    match p.kernel {
        KernelSpec::Fixed { h } => out.push(("h".to_string(), h)),
        KernelSpec::Adaptive { h0, alpha } => {
            out.push(("h0".to_string(), h0));
            out.push(("alpha".to_string(), alpha));
        }
    }
    let mixture = p.mixture_params()?;
    let weights = mixture.weights()?;
    for c in Component::ALL {
        if mixture.mask().contains(c) {
            out.push((format!("w_{}", c.name()), weights[c.index()]));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExtremeRow {
    pub parameter: String,
    /// `lowest` or `highest`.
    pub end: &'static str,
    pub rank: usize,
    pub image_id: String,
    pub value: f64,
}

/// For every parameter, the `k` images with the lowest and the `k` with the
/// highest values. Ties are broken by image id.
pub fn parameter_extremes(params: &[ImageParams], k: usize) -> Result<Vec<ExtremeRow>> {
    let mut by_param: BTreeMap<String, Vec<(f64, String)>> = BTreeMap::new();
    for p in params {
        for (name, v) in parameter_values(p)? {
            by_param.entry(name).or_default().push((v, p.image_id.clone()));
        }
    }
    let mut rows = Vec::new();
    for (name, mut vals) in by_param {
        vals.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        let take = k.min(vals.len());
        for (rank, (v, id)) in vals.iter().take(take).enumerate() {
            rows.push(ExtremeRow { parameter: name.clone(), end: "lowest", rank: rank + 1, image_id: id.clone(), value: *v });
        }
        for (rank, (v, id)) in vals.iter().rev().take(take).enumerate() {
            rows.push(ExtremeRow { parameter: name.clone(), end: "highest", rank: rank + 1, image_id: id.clone(), value: *v });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConfidenceInterval {
    pub mean: f64,
    pub lo: f64,
    pub hi: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapConfig {
    pub iterations: usize,
    pub level: f64,
    pub seed: u64,
}

impl Default for BootstrapConfig {
    fn default() -> Self {
        Self {
            iterations: 10_000,
            level: 0.95,
            seed: 0,
        }
    }
}

/// Within-image normalized values: each image's mean across models is
/// replaced by the grand mean, then deviations from each model's mean are
/// inflated by `sqrt(M / (M - 1))`. Model means are unchanged. With a single
/// model the values are returned as is.
pub fn normalize_within_images(values: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let m = values.len();
    if m < 2 {
        return values.to_vec();
    }
    let n = values[0].len();
    let image_mean: Vec<f64> = (0..n).map(|i| values.iter().map(|v| v[i]).sum::<f64>() / m as f64).collect();
    let grand = image_mean.iter().sum::<f64>() / n as f64;
    let morey = (m as f64 / (m as f64 - 1.0)).sqrt();
    values
        .iter()
        .map(|v| {
            let centered: Vec<f64> = v.iter().zip(&image_mean).map(|(y, yi)| y - yi + grand).collect();
            let model_mean = centered.iter().sum::<f64>() / n as f64;
            centered.iter().map(|y| model_mean + morey * (y - model_mean)).collect()
        })
        .collect()
}

/// Percentile bootstrap over images of each model's mean, on within-image
/// normalized values. `values[m][i]` is model `m` on image `i`.
pub fn bootstrap_ci(values: &[Vec<f64>], config: &BootstrapConfig) -> Result<Vec<ConfidenceInterval>> {
    let m = values.len();
    if m == 0 {
        return Err(Error::invalid("bootstrap needs at least one model"));
    }
    let n = values[0].len();
    if n < 2 {
        return Err(Error::invalid("bootstrap needs at least two images"));
    }
    if values.iter().any(|v| v.len() != n) {
        return Err(Error::invalid("models cover different numbers of images"));
    }
    if values.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::invalid("non-finite per-image value"));
    }
    if config.iterations == 0 || !(config.level > 0.0 && config.level < 1.0) {
        return Err(Error::invalid("bootstrap needs iterations >= 1 and a level in (0, 1)"));
    }
    let norm = normalize_within_images(values);
    let means: Vec<Vec<f64>> = (0..config.iterations)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_stream(config.seed, &[b"bootstrap", &(b as u64).to_le_bytes()]);
            let mut sums = vec![0.0; m];
            for _ in 0..n {
                let i = rng.gen_range(0..n);
                for (s, v) in sums.iter_mut().zip(&norm) {
                    *s += v[i];
                }
            }
            sums.into_iter().map(|s| s / n as f64).collect()
        })
        .collect();
    let tail = (1.0 - config.level) / 2.0;
    Ok((0..m)
        .map(|k| {
            let mut dist: Vec<f64> = means.iter().map(|r| r[k]).collect();
            dist.sort_by(f64::total_cmp);
            let mean = norm[k].iter().sum::<f64>() / n as f64;
            ConfidenceInterval {
                mean,
                lo: sorted_quantile(&dist, tail),
                hi: sorted_quantile(&dist, 1.0 - tail),
            }
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kde::KernelParams;
    use crate::mixture::{ComponentMask, MixtureParams};
    use proptest::prelude::*;

    fn rec(id: &str, ig: f64, auc: f64) -> MetricRecord {
        MetricRecord { image_id: id.into(), ig_bits: ig, auc: Some(auc), n_fixations: 10 }
    }

    #[test]
    fn ig_of_uniform_and_double_uniform() {
        let g = Geometry::new(40.0, 25.0);
        let lu = -(1000f64).ln();
        assert_eq!(information_gain_bits(&[lu; 5], g).unwrap(), 0.0);
        let ig = information_gain_bits(&[lu + 2f64.ln(); 3], g).unwrap();
        assert!((ig - 1.0).abs() < 1e-12);
        assert!(information_gain_bits(&[], g).is_err());
        assert!(information_gain_bits(&[f64::NEG_INFINITY], g).is_err());
    }

    #[test]
    fn auc_examples() {
        let g = DensityGrid::new(2, 2, vec![0.4, 0.3, 0.2, 0.1], crate::GridSpace::Probability).unwrap();
        assert_eq!(auc_uniform(&g, &[Point::new(0.5, 0.5)]).unwrap(), 0.875);
        let u = DensityGrid::uniform(7, 3).unwrap();
        let fix = [Point::new(0.0, 0.0), Point::new(6.9, 2.9), Point::new(3.2, 1.1)];
        assert_eq!(auc_uniform(&u, &fix).unwrap(), 0.5);
        assert!(auc_uniform(&u, &[Point::new(7.0, 0.0)]).is_err());
        assert!(auc_uniform(&u, &[]).is_err());
    }

    #[test]
    fn auc_matches_pairwise_count() {
        let vals: Vec<f64> = (0..30).map(|i| ((i * 7) % 11) as f64 + 1.0).collect();
        let sum: f64 = vals.iter().sum();
        let g = DensityGrid::new(6, 5, vals.iter().map(|v| v / sum).collect(), crate::GridSpace::Probability).unwrap();
        let fix = [Point::new(1.2, 0.3), Point::new(5.5, 4.5), Point::new(2.0, 2.0)];
        let mut oracle = 0.0;
        for f in &fix {
            let v = g.get(f.x as usize, f.y as usize);
            for &u in g.values() {
                oracle += if v > u { 1.0 } else if v == u { 0.5 } else { 0.0 };
            }
        }
        oracle /= (fix.len() * 30) as f64;
        assert!((auc_uniform(&g, &fix).unwrap() - oracle).abs() < 1e-15);
    }

    #[test]
    fn quantiles_identity_and_shift() {
        let a: Vec<MetricRecord> = (0..9).map(|i| rec(&format!("i{i}"), 1.0 + i as f64 * 0.1, 0.7)).collect();
        let t = improvement_quantiles(&a, &a, &DEFAULT_QUANTILES).unwrap();
        assert!(t.rows.iter().all(|r| r.delta_ll_bits == 0.0 && r.delta_ll_rel == Some(0.0) && r.delta_auc == Some(0.0)));
        let b: Vec<MetricRecord> = a.iter().map(|r| rec(&r.image_id, r.ig_bits + 0.21, 0.71)).collect();
        let t = improvement_quantiles(&a, &b, &[0.5]).unwrap();
        assert!((t.rows[0].delta_ll_bits - 0.21).abs() < 1e-12);
        assert!((t.rows[0].delta_auc.unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn quantiles_guard_and_errors() {
        let a = vec![rec("x", 0.01, 0.5), rec("y", 1.0, 0.5)];
        let b = vec![rec("x", 0.5, 0.5), rec("y", 1.5, 0.5)];
        let t = improvement_quantiles(&a, &b, &[1.0]).unwrap();
        assert_eq!(t.rel_excluded, 1);
        assert!((t.rows[0].delta_ll_rel.unwrap() - 0.5).abs() < 1e-12);
        assert!(improvement_quantiles(&a, &b[..1], &[0.5]).is_err());
        assert!(improvement_quantiles(&a, &b, &[1.5]).is_err());
        let mut no_auc = b.clone();
        no_auc[0].auc = None;
        let t = improvement_quantiles(&a, &no_auc, &[0.5]).unwrap();
        assert!(!t.has_auc && t.rows[0].delta_auc.is_none());
    }

    proptest! {
        #[test]
        fn quantiles_match_sort_oracle(diffs in prop::collection::vec(-3.0f64..3.0, 1..40), q in 0.0f64..=1.0) {
            let a: Vec<MetricRecord> = diffs.iter().enumerate().map(|(i, _)| rec(&format!("{i:03}"), 1.0, 0.5)).collect();
            let b: Vec<MetricRecord> = diffs.iter().enumerate().map(|(i, d)| rec(&format!("{i:03}"), 1.0 + d, 0.5)).collect();
            let t = improvement_quantiles(&a, &b, &[q]).unwrap();
            let mut s: Vec<f64> = diffs.iter().map(|d| (1.0 + d) - 1.0).collect();
            s.sort_by(f64::total_cmp);
            let pos = q * (s.len() - 1) as f64;
            let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
            let oracle = s[lo] + (pos - lo as f64) * (s[hi] - s[lo]);
            prop_assert!((t.rows[0].delta_ll_bits - oracle).abs() < 1e-12);
        }

        #[test]
        fn auc_invariant_under_monotone_transform(vals in prop::collection::vec(1e-3f64..1.0, 12), fx in 0.0f64..4.0, fy in 0.0f64..3.0) {
            let sum: f64 = vals.iter().sum();
            let g = DensityGrid::new(4, 3, vals.iter().map(|v| v / sum).collect(), crate::GridSpace::Probability).unwrap();
            let t: Vec<f64> = vals.iter().map(|v| v.powi(3)).collect();
            let ts: f64 = t.iter().sum();
            let g2 = DensityGrid::new(4, 3, t.iter().map(|v| v / ts).collect(), crate::GridSpace::Probability).unwrap();
            let f = [Point::new(fx, fy)];
            prop_assert_eq!(auc_uniform(&g, &f).unwrap(), auc_uniform(&g2, &f).unwrap());
            prop_assert_eq!(auc_uniform(&g, &f).unwrap(), auc_uniform(&g.to_log().unwrap(), &f).unwrap());
        }
    }

    #[test]
    fn extremes_list_each_image_once() {
        let mix = MixtureParams::new(ComponentMask::only(&[Component::Kde, Component::Uniform])).with_logit(Component::Uniform, -1.0);
        let p1 = ImageParams::from_model("a", &KernelParams::adaptive(10.0, 0.2), &mix, None);
        let p2 = ImageParams::from_model("b", &KernelParams::adaptive(20.0, 0.1), &mix.with_logit(Component::Uniform, 1.0), None);
        let rows = parameter_extremes(&[p1, p2], 5).unwrap();
        for param in ["h0", "alpha", "w_kde", "w_uniform"] {
            for end in ["lowest", "highest"] {
                let mut ids: Vec<&str> = rows.iter().filter(|r| r.parameter == param && r.end == end).map(|r| r.image_id.as_str()).collect();
                ids.sort();
                assert_eq!(ids, ["a", "b"], "{param} {end}");
            }
        }
        let low_h0 = rows.iter().find(|r| r.parameter == "h0" && r.end == "lowest" && r.rank == 1).unwrap();
        assert_eq!((low_h0.image_id.as_str(), low_h0.value), ("a", 10.0));
    }

    #[test]
    fn bootstrap_constant_values_zero_width() {
        let ci = bootstrap_ci(&[vec![2.0; 10]], &BootstrapConfig { iterations: 200, ..Default::default() }).unwrap();
        assert_eq!((ci[0].mean, ci[0].lo, ci[0].hi), (2.0, 2.0, 2.0));
    }

    #[test]
    fn bootstrap_paired_shift_collapses_width() {
        let a: Vec<f64> = (0..30).map(|i| ((i * 37) % 17) as f64 * 0.3).collect();
        let b: Vec<f64> = a.iter().map(|v| v + 0.5).collect();
        let ci = bootstrap_ci(&[a.clone(), b], &BootstrapConfig { iterations: 500, ..Default::default() }).unwrap();
        assert!((ci[1].mean - ci[0].mean - 0.5).abs() < 1e-12);
        for c in &ci {
            assert!(c.hi - c.lo < 1e-9, "{c:?}");
        }
        let raw = bootstrap_ci(&[a], &BootstrapConfig { iterations: 500, ..Default::default() }).unwrap();
        assert!(raw[0].hi - raw[0].lo > 0.5);
    }

    #[test]
    fn bootstrap_is_seeded() {
        let v = vec![(0..20).map(|i| (i as f64).sin()).collect::<Vec<_>>()];
        let cfg = BootstrapConfig { iterations: 300, ..Default::default() };
        assert_eq!(bootstrap_ci(&v, &cfg).unwrap(), bootstrap_ci(&v, &cfg).unwrap());
        let other = bootstrap_ci(&v, &BootstrapConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(other, bootstrap_ci(&v, &BootstrapConfig { iterations: 300, ..Default::default() }).unwrap());
        assert!(bootstrap_ci(&[vec![1.0]], &BootstrapConfig::default()).is_err());
    }

    #[test]
    fn normalization_preserves_model_means() {
        let v = vec![vec![1.0, 2.0, 4.0], vec![1.5, 1.0, 5.0], vec![0.0, 3.0, 3.0]];
        let n = normalize_within_images(&v);
        for (a, b) in v.iter().zip(&n) {
            assert!((a.iter().sum::<f64>() - b.iter().sum::<f64>()).abs() < 1e-12);
        }
    }
}
