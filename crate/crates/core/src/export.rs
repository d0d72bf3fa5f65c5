//! Per-image density maps for export: the locally crossvalidated map
//! assembled from leave-one-subject-out fold models, and the pooled map.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FixationTable, ImageRecord, Point};
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::kde::KernelParams;
use crate::mixture::{rasterize_mixture, ComponentSet, MixtureParams};

pub const MIN_DEFAULT_RADIUS: f64 = 5.0;
pub const MAX_DEFAULT_RADIUS: f64 = 100.0;

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct LosoDensityConfig {
    /// Support radius of the subject weights in pixels; derived from the
    /// data when `None` (see [`default_radius`]).
    pub rbf_radius: Option<f64>,
}

/// Median distance from each fixation to the nearest fixation of another
/// subject, clamped to `[5, 100]` pixels.
pub fn default_radius(by_subject: &[(String, Vec<Point>)]) -> Result<f64> {
    let mut nn = Vec::new();
    for (s, pts) in by_subject {
        for p in pts {
            let best = by_subject
                .iter()
                .filter(|(t, _)| t != s)
                .flat_map(|(_, q)| q.iter())
                .map(|q| p.dist2(*q))
                .fold(f64::INFINITY, f64::min);
            if best.is_finite() {
                nn.push(best.sqrt());
            }
        }
    }
    if nn.is_empty() {
        return Err(Error::invalid("radius needs fixations from at least two subjects"));
    }
    nn.sort_by(f64::total_cmp);
    Ok(crate::util::sorted_quantile(&nn, 0.5).clamp(MIN_DEFAULT_RADIUS, MAX_DEFAULT_RADIUS))
}

/// Subject weights on the pixel grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    pub width: usize,
    pub height: usize,
    pub subjects: Vec<String>,
    /// `raw[s][row * width + col]` in `[0, 1]`.
    pub raw: Vec<Vec<f64>>,
    /// Weights summing to one at every pixel. Where every raw weight vanishes
    /// all subjects get the same weight.
    pub normalized: Vec<Vec<f64>>,
}

/// Raw weight of one subject at `x`: the largest `max(0, 1 - d / r)^2` over
/// the subject's fixations.
pub fn subject_weight(fixations: &[Point], r: f64, x: Point) -> f64 {
    fixations
        .iter()
        .map(|p| {
            let t = (1.0 - p.dist2(x).sqrt() / r).max(0.0);
            t * t
        })
        .fold(0.0, f64::max)
}

/// Weights evaluated at pixel centers of a `width x height` grid.
pub fn rbf_weights(
    by_subject: &[(String, Vec<Point>)],
    r: f64,
    width: usize,
    height: usize,
) -> Result<WeightMaps> {
    if by_subject.len() < 2 {
        return Err(Error::invalid("subject weights need at least two subjects"));
    }
    if !(r.is_finite() && r > 0.0) {
        return Err(Error::invalid(format!("rbf radius must be > 0, got {r}")));
    }
    let raw: Vec<Vec<f64>> = by_subject
        .par_iter()
        .map(|(_, pts)| {
            let mut w = vec![0.0f64; width * height];
            for p in pts {
                // Only pixels within r of the fixation can receive weight.
                let c0 = ((p.x - r - 0.5).floor().max(0.0) as usize).min(width);
                let c1 = ((p.x + r + 0.5).ceil().max(0.0) as usize).min(width);
                let r0 = ((p.y - r - 0.5).floor().max(0.0) as usize).min(height);
                let r1 = ((p.y + r + 0.5).ceil().max(0.0) as usize).min(height);
                for row in r0..r1 {
                    for col in c0..c1 {
                        let v = subject_weight(std::slice::from_ref(p), r, Point::new(col as f64 + 0.5, row as f64 + 0.5));
                        let cell = &mut w[row * width + col];
                        *cell = cell.max(v);
                    }
                }
            }
            w
        })
        .collect();
    let s = raw.len();
    let mut normalized = vec![vec![0.0; width * height]; s];
    for i in 0..width * height {
        let total: f64 = raw.iter().map(|w| w[i]).sum();
        for (n, w) in normalized.iter_mut().zip(&raw) {
            n[i] = if total > 0.0 { w[i] / total } else { 1.0 / s as f64 };
        }
    }
    Ok(WeightMaps {
        width,
        height,
        subjects: by_subject.iter().map(|(s, _)| s.clone()).collect(),
        raw,
        normalized,
    })
}

/// Mixture density of every leave-one-subject-out fold, in subject order.
/// The fold for subject `s` is built from all other subjects' fixations.
pub fn loso_fold_grids(
    image: &ImageRecord,
    table: &FixationTable,
    kernel: &KernelParams,
    mixture: &MixtureParams,
    components: &ComponentSet,
) -> Result<Vec<(String, DensityGrid)>> {
    let by_subject = table.points_by_subject();
    if by_subject.len() < 2 {
        return Err(Error::invalid(format!(
            "image {}: LOSO density needs at least two subjects",
            image.image_id
        )));
    }
    by_subject
        .par_iter()
        .map(|(s, _)| {
            let train: Vec<Point> = by_subject
                .iter()
                .filter(|(t, _)| t != s)
                .flat_map(|(_, p)| p.iter().copied())
                .collect();
            Ok((s.clone(), rasterize_mixture(image, &train, kernel, mixture, components)?))
        })
        .collect()
}

/// `sum_s w_s(x) p_s(x)` per pixel, before renormalization.
pub fn assemble_unnormalized(weights: &WeightMaps, folds: &[(String, DensityGrid)]) -> Result<Vec<f64>> {
    let n = weights.width * weights.height;
    let mut ordered = Vec::with_capacity(weights.subjects.len());
    for s in &weights.subjects {
        let grid = folds
            .iter()
            .find(|(t, _)| t == s)
            .map(|(_, g)| g)
            .ok_or_else(|| Error::invalid(format!("missing fold model for subject {s}")))?;
        if grid.width() != weights.width || grid.height() != weights.height {
            return Err(Error::invalid(format!("fold grid of subject {s} has the wrong size")));
        }
        ordered.push(grid.values());
    }
    Ok((0..n)
        .into_par_iter()
        .map(|i| ordered.iter().zip(&weights.normalized).map(|(g, w)| w[i] * g[i]).sum())
        .collect())
}

/// Single map in which each fixation's neighbourhood is governed by the fold
/// model that did not see that fixation's subject.
#[derive(Debug, Clone, PartialEq)]
pub struct LosoDensity {
    pub grid: DensityGrid,
    pub radius: f64,
}

pub fn locally_crossvalidated_density(
    image: &ImageRecord,
    table: &FixationTable,
    folds: &[(String, DensityGrid)],
    config: &LosoDensityConfig,
) -> Result<LosoDensity> {
    let by_subject = table.points_by_subject();
    let radius = match config.rbf_radius {
        Some(r) => r,
        None => default_radius(&by_subject)?,
    };
    let (w, h) = (image.width as usize, image.height as usize);
    let weights = rbf_weights(&by_subject, radius, w, h)?;
    let values = assemble_unnormalized(&weights, folds)?;
    Ok(LosoDensity {
        grid: DensityGrid::normalized(w, h, values)?,
        radius,
    })
}

/// Fits nothing: builds the fold models from the given parameters and
/// assembles the locally crossvalidated map.
pub fn loso_density(
    image: &ImageRecord,
    table: &FixationTable,
    kernel: &KernelParams,
    mixture: &MixtureParams,
    components: &ComponentSet,
    config: &LosoDensityConfig,
) -> Result<LosoDensity> {
    let folds = loso_fold_grids(image, table, kernel, mixture, components)?;
    locally_crossvalidated_density(image, table, &folds, config)
}

/// Mixture density with the KDE built from all fixations. Each evaluated
/// fixation contributes its own kernel, so this map is not crossvalidated.
pub fn pooled_density(
    image: &ImageRecord,
    table: &FixationTable,
    kernel: &KernelParams,
    mixture: &MixtureParams,
    components: &ComponentSet,
) -> Result<DensityGrid> {
    rasterize_mixture(image, &table.points(), kernel, mixture, components)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DensityKind {
    Loso,
    Pooled,
}

/// JSON written next to every exported grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensitySidecar {
    pub image_id: String,
    pub kind: DensityKind,
    pub r: Option<f64>,
    pub params_ref: Option<String>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mixture::{Component, ComponentMask};

    fn subjects(list: &[(&str, &[(f64, f64)])]) -> Vec<(String, Vec<Point>)> {
        list.iter()
            .map(|(s, pts)| (s.to_string(), pts.iter().map(|&(x, y)| Point::new(x, y)).collect()))
            .collect()
    }

    #[test]
    fn raw_weight_at_half_radius() {
        let w = subject_weight(&[Point::new(10.0, 10.0)], 8.0, Point::new(14.0, 10.0));
        assert!((w - 0.25).abs() < 1e-15);
        assert_eq!(subject_weight(&[Point::new(10.0, 10.0)], 8.0, Point::new(30.0, 10.0)), 0.0);
    }

    #[test]
    fn isolated_fixation_owned_by_its_subject() {
        let by = subjects(&[("a", &[(10.5, 10.5)]), ("b", &[(40.5, 40.5)])]);
        let wm = rbf_weights(&by, 10.0, 50, 50).unwrap();
        assert_eq!(wm.normalized[0][10 * 50 + 10], 1.0);
        assert_eq!(wm.raw[0][10 * 50 + 10], 1.0);
        assert_eq!(wm.normalized[1][40 * 50 + 40], 1.0);
    }

    #[test]
    fn midpoint_is_shared_and_dead_zone_is_uniform() {
        let by = subjects(&[("a", &[(10.5, 20.5)]), ("b", &[(20.5, 20.5)])]);
        let wm = rbf_weights(&by, 8.0, 40, 40).unwrap();
        let mid = 20 * 40 + 15;
        assert!((wm.normalized[0][mid] - 0.5).abs() < 1e-15);
        assert!((wm.normalized[1][mid] - 0.5).abs() < 1e-15);
        let far = 39 * 40 + 39;
        assert_eq!(wm.raw[0][far] + wm.raw[1][far], 0.0);
        assert_eq!(wm.normalized[0][far], 0.5);
    }

    #[test]
    fn weights_need_two_subjects_and_positive_radius() {
        let one = subjects(&[("a", &[(1.0, 1.0)])]);
        assert!(rbf_weights(&one, 5.0, 4, 4).is_err());
        let two = subjects(&[("a", &[(1.0, 1.0)]), ("b", &[(2.0, 2.0)])]);
        assert!(rbf_weights(&two, 0.0, 4, 4).is_err());
    }

    #[test]
    fn default_radius_clamped() {
        let near = subjects(&[("a", &[(0.0, 0.0)]), ("b", &[(1.0, 0.0)])]);
        assert_eq!(default_radius(&near).unwrap(), MIN_DEFAULT_RADIUS);
        let far = subjects(&[("a", &[(0.0, 0.0)]), ("b", &[(300.0, 0.0)])]);
        assert_eq!(default_radius(&far).unwrap(), MAX_DEFAULT_RADIUS);
        let mid = subjects(&[("a", &[(0.0, 0.0), (50.0, 0.0)]), ("b", &[(20.0, 0.0)])]);
        // nearest distances 20, 30, 20
        assert_eq!(default_radius(&mid).unwrap(), 20.0);
    }

    #[test]
    fn identical_folds_reproduce_the_fold() {
        let by = subjects(&[("a", &[(3.0, 3.0)]), ("b", &[(12.0, 5.0)]), ("c", &[(7.0, 9.0)])]);
        let wm = rbf_weights(&by, 6.0, 16, 12).unwrap();
        let g = crate::kde::rasterize_kde(&[Point::new(8.0, 6.0)], &KernelParams::fixed(3.0), 16, 12).unwrap();
        let folds: Vec<(String, DensityGrid)> = ["a", "b", "c"].iter().map(|s| (s.to_string(), g.clone())).collect();
        let out = assemble_unnormalized(&wm, &folds).unwrap();
        for (a, b) in out.iter().zip(g.values()) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(assemble_unnormalized(&wm, &folds[..2]).is_err());
    }

    #[test]
    fn pooled_kde_peaks_at_single_fixation() {
        let img = ImageRecord::new("img", 30, 20);
        let mut t = FixationTable::new("img");
        t.push("a", 7.3, 12.8);
        let mix = MixtureParams::new(ComponentMask::only(&[Component::Kde]));
        let g = pooled_density(&img, &t, &KernelParams::fixed(2.0), &mix, &ComponentSet::default()).unwrap();
        let argmax = g.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!((argmax % 30, argmax / 30), (7, 12));
        assert!((g.sum() - 1.0).abs() < 1e-9);
    }
}
