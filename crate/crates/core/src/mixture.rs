//! Four-component mixture: KDE, center bias, uniform floor and saliency map.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::{DatasetBundle, Geometry, ImageRecord, Point};
use crate::error::{Error, Result};
use crate::grid::{DensityGrid, GridSpace};
use crate::kde::{self, BandwidthVector, KernelParams};
use crate::util::log_sum_exp;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Component {
    Kde,
    CenterBias,
    Uniform,
    Saliency,
}

impl Component {
    pub const ALL: [Component; 4] = [
        Component::Kde,
        Component::CenterBias,
        Component::Uniform,
        Component::Saliency,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Component::Kde => "kde",
            Component::CenterBias => "cb",
            Component::Uniform => "uniform",
            Component::Saliency => "saliency",
        }
    }
}

impl fmt::Display for Component {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Component {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "kde" => Ok(Component::Kde),
            "cb" | "centerbias" | "center_bias" => Ok(Component::CenterBias),
            "uniform" | "u" => Ok(Component::Uniform),
            "saliency" | "s" => Ok(Component::Saliency),
            other => Err(Error::invalid(format!("unknown component `{other}`"))),
        }
    }
}

/// Which mixture components take part.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ComponentMask([bool; 4]);

impl ComponentMask {
    pub fn all() -> Self {
        Self([true; 4])
    }

    pub fn only(components: &[Component]) -> Self {
        let mut m = Self::default();
        for &c in components {
            m.0[c.index()] = true;
        }
        m
    }

    /// Parses a comma-separated list such as `kde,cb,uniform`.
    pub fn parse_list(s: &str) -> Result<Self> {
        let comps = s
            .split(',')
            .filter(|t| !t.trim().is_empty())
            .map(Component::from_str)
            .collect::<Result<Vec<_>>>()?;
        let m = Self::only(&comps);
        if m.is_empty() {
            return Err(Error::invalid("no mixture components given"));
        }
        Ok(m)
    }

    pub fn contains(&self, c: Component) -> bool {
        self.0[c.index()]
    }

    pub fn set(&mut self, c: Component, on: bool) {
        self.0[c.index()] = on;
    }

    pub fn is_empty(&self) -> bool {
        !self.0.iter().any(|&b| b)
    }

    pub fn active(&self) -> impl Iterator<Item = Component> + '_ {
        Component::ALL.into_iter().filter(|c| self.contains(*c))
    }

    pub fn to_list(&self) -> String {
        self.active().map(Component::name).collect::<Vec<_>>().join(",")
    }
}

/// Mixture logits. The KDE logit is the fixed reference at 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixtureParams {
    logits: [f64; 4],
    mask: ComponentMask,
}

impl MixtureParams {
    pub fn new(mask: ComponentMask) -> Self {
        Self {
            logits: [0.0; 4],
            mask,
        }
    }

    pub fn with_logit(mut self, c: Component, z: f64) -> Self {
        self.set_logit(c, z);
        self
    }

    /// Sets a logit; the KDE logit stays pinned at 0.
    pub fn set_logit(&mut self, c: Component, z: f64) {
        if c != Component::Kde {
            self.logits[c.index()] = z;
        }
    }

    pub fn logit(&self, c: Component) -> f64 {
        self.logits[c.index()]
    }

    pub fn mask(&self) -> ComponentMask {
        self.mask
    }

    /// Log weights of a softmax over active logits; `-inf` for inactive ones.
    pub fn log_weights(&self) -> Result<[f64; 4]> {
        if self.mask.is_empty() {
            return Err(Error::invalid("all mixture components are disabled"));
        }
        let active: Vec<f64> = self.mask.active().map(|c| self.logit(c)).collect();
        let norm = log_sum_exp(&active);
        if !norm.is_finite() {
            return Err(Error::invalid("mixture logits give no finite weight"));
        }
        let mut out = [f64::NEG_INFINITY; 4];
        for c in self.mask.active() {
            out[c.index()] = self.logit(c) - norm;
        }
        Ok(out)
    }

    pub fn weights(&self) -> Result<[f64; 4]> {
        Ok(self.log_weights()?.map(f64::exp))
    }

    pub fn weight(&self, c: Component) -> Result<f64> {
        Ok(self.weights()?[c.index()])
    }
}

/// Center-bias prior: a KDE over fixation positions of other images in
/// normalized coordinates `(x / W, y / H)` on the unit square.
#[derive(Debug, Clone, PartialEq)]
pub struct CenterBiasModel {
    sources: Vec<Point>,
    bandwidth: f64,
    crossvalidated: bool,
}

const CB_LOG_BW_RANGE: (f64, f64) = (-6.907_755_278_982_137, 0.0);

impl CenterBiasModel {
    pub fn new(sources: Vec<Point>, bandwidth: f64, crossvalidated: bool) -> Result<Self> {
        if sources.is_empty() {
            return Err(Error::invalid("center bias needs at least one fixation"));
        }
        if !(bandwidth.is_finite() && bandwidth > 0.0) {
            return Err(Error::invalid("center bias bandwidth must be positive"));
        }
        Ok(Self {
            sources,
            bandwidth,
            crossvalidated,
        })
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sources(&self) -> &[Point] {
        &self.sources
    }

    /// False for the shared fast-mode model that saw every image.
    pub fn is_crossvalidated(&self) -> bool {
        self.crossvalidated
    }

    /// Log density at pixel-space queries of an image with geometry `geom`.
    pub fn logdensity(&self, queries: &[Point], geom: Geometry) -> Result<Vec<f64>> {
        let normalized: Vec<Point> = queries
            .iter()
            .map(|q| Point::new(q.x / geom.width, q.y / geom.height))
            .collect();
        let jacobian = geom.area().ln();
        Ok(
            kde::fixed_kde_logdensity(&self.sources, &normalized, self.bandwidth, Geometry::unit())?
                .into_iter()
                .map(|v| v - jacobian)
                .collect(),
        )
    }

    /// Unnormalized pixel-center values on a `width x height` grid.
    fn raster_values(&self, width: usize, height: usize) -> Vec<f64> {
        let bw = BandwidthVector(vec![self.bandwidth; self.sources.len()]);
        kde::kde_raster_values(&self.sources, &bw, width, height, Geometry::unit())
    }

    pub fn rasterize(&self, width: usize, height: usize) -> Result<DensityGrid> {
        DensityGrid::normalized(width, height, self.raster_values(width, height))
    }
}

fn normalized_points(dataset: &DatasetBundle, image_id: &str) -> Vec<Point> {
    let (Some(img), Some(table)) = (dataset.image(image_id), dataset.table(image_id)) else {
        return Vec::new();
    };
    table
        .rows
        .iter()
        .map(|r| Point::new(r.x / img.width as f64, r.y / img.height as f64))
        .collect()
}

/// Images with fixations, in id order, as normalized point groups.
fn image_groups(dataset: &DatasetBundle) -> Vec<(String, Vec<Point>)> {
    dataset
        .images
        .iter()
        .map(|i| (i.image_id.clone(), normalized_points(dataset, &i.image_id)))
        .filter(|(_, g)| !g.is_empty())
        .collect()
}

fn model_without(groups: &[(String, Vec<Point>)], holdout: Option<usize>, bandwidth: f64) -> Result<CenterBiasModel> {
    let sources: Vec<Point> = groups
        .iter()
        .enumerate()
        .filter(|(g, _)| Some(*g) != holdout)
        .flat_map(|(_, (_, pts))| pts.iter().copied())
        .collect();
    CenterBiasModel::new(sources, bandwidth, holdout.is_some())
}

/// Fits the center bias on every image except `holdout_image_id`.
pub fn fit_center_bias(dataset: &DatasetBundle, holdout_image_id: &str) -> Result<CenterBiasModel> {
    let groups = image_groups(dataset);
    let holdout = groups.iter().position(|(id, _)| id == holdout_image_id);
    if groups.len() - usize::from(holdout.is_some()) == 0 {
        return Err(Error::invalid(format!(
            "no images other than {holdout_image_id} to fit a center bias"
        )));
    }
    let points: Vec<Vec<Point>> = groups.iter().map(|(_, g)| g.clone()).collect();
    let bw = select_bandwidths(&points, &[holdout])?[0];
    let mut model = model_without(&groups, holdout, bw)?;
    model.crossvalidated = true;
    Ok(model)
}

/// Leave-one-image-out center bias for every image with fixations, sharing
/// the bandwidth search across holdouts.
pub fn fit_center_biases(dataset: &DatasetBundle) -> Result<BTreeMap<String, CenterBiasModel>> {
    let groups = image_groups(dataset);
    if groups.len() < 2 {
        return Err(Error::invalid("a leave-one-image-out center bias needs at least two images with fixations"));
    }
    let points: Vec<Vec<Point>> = groups.iter().map(|(_, g)| g.clone()).collect();
    let holdouts: Vec<Option<usize>> = (0..groups.len()).map(Some).collect();
    let bws = select_bandwidths(&points, &holdouts)?;
    groups
        .iter()
        .enumerate()
        .map(|(i, (id, _))| Ok((id.clone(), model_without(&groups, Some(i), bws[i])?)))
        .collect()
}

/// Fast mode: one center bias fitted on all images. Not crossvalidated with
/// respect to any image it is later applied to.
pub fn fit_center_bias_shared(dataset: &DatasetBundle) -> Result<CenterBiasModel> {
    let groups = image_groups(dataset);
    if groups.is_empty() {
        return Err(Error::invalid("no fixations to fit a center bias"));
    }
    let points: Vec<Vec<Point>> = groups.iter().map(|(_, g)| g.clone()).collect();
    let bw = select_bandwidths(&points, &[None])?[0];
    model_without(&groups, None, bw)
}

/// Number of log-spaced candidate bandwidths on the unit square.
pub const CB_GRID_POINTS: usize = 41;

/// Candidate bandwidths of the center-bias search.
pub fn center_bias_bandwidth_grid() -> Vec<f64> {
    let (lo, hi) = CB_LOG_BW_RANGE;
    (0..CB_GRID_POINTS)
        .map(|k| (lo + (hi - lo) * k as f64 / (CB_GRID_POINTS - 1) as f64).exp())
        .collect()
}

/// Center-bias bandwidth for each holdout. For holdout `Some(i)` group `i`
/// is dropped; each remaining group is then scored by its mean log density
/// under a KDE of the other remaining groups, or, when a single group
/// remains, by leave-one-point-out within it. The best grid bandwidth is
/// refined by a parabola through its neighbours in log space.
fn select_bandwidths(groups: &[Vec<Point>], holdouts: &[Option<usize>]) -> Result<Vec<f64>> {
    let grid = center_bias_bandwidth_grid();
    let table: Vec<Vec<f64>> = grid.iter().map(|&b| holdout_objectives(groups, holdouts, b)).collect();
    let step = (CB_LOG_BW_RANGE.1 - CB_LOG_BW_RANGE.0) / (CB_GRID_POINTS - 1) as f64;
    holdouts
        .iter()
        .enumerate()
        .map(|(h, holdout)| {
            let vals: Vec<f64> = table.iter().map(|row| row[h]).collect();
            let mut best = 0;
            for (k, v) in vals.iter().enumerate() {
                if *v > vals[best] || vals[best].is_nan() {
                    best = k;
                }
            }
            if !vals[best].is_finite() {
                return Err(Error::Numerical(format!(
                    "center-bias bandwidth search failed (holdout {holdout:?})"
                )));
            }
            let mut log_bw = grid[best].ln();
            if best > 0 && best + 1 < vals.len() {
                let (y0, y1, y2) = (vals[best - 1], vals[best], vals[best + 1]);
                let curv = y0 - 2.0 * y1 + y2;
                if y0.is_finite() && y2.is_finite() && curv < 0.0 {
                    log_bw += (step * 0.5 * (y0 - y2) / curv).clamp(-step, step);
                }
            }
            Ok(log_bw.exp())
        })
        .collect()
}

/// Mean held-out log density for each holdout at one bandwidth; NaN where a
/// holdout leaves nothing to score.
fn holdout_objectives(groups: &[Vec<Point>], holdouts: &[Option<usize>], bandwidth: f64) -> Vec<f64> {
    let unit = Geometry::unit();
    let log_h = bandwidth.ln();
    let n_groups = groups.len();
    let sizes: Vec<usize> = groups.iter().map(Vec::len).collect();
    let total: usize = sizes.iter().sum();
    let sources: Vec<(Point, usize)> = groups
        .iter()
        .enumerate()
        .flat_map(|(g, pts)| pts.iter().map(move |&p| (p, g)))
        .collect();
    let norms: Vec<kde::KernelNorm> = sources.iter().map(|(p, _)| kde::kernel_norm(*p, bandwidth, unit)).collect();
    let per_query: Vec<Vec<f64>> = (0..sources.len())
        .into_par_iter()
        .map(|qi| {
            let (q, qg) = sources[qi];
            // log sum of kernels per group; the query itself is left out of its own group
            let mut lse = vec![f64::NEG_INFINITY; n_groups];
            let mut terms = Vec::new();
            let mut start = 0;
            for (g, &size) in sizes.iter().enumerate() {
                terms.clear();
                for si in start..start + size {
                    if si != qi {
                        terms.push(kde::log_kernel(sources[si].0.dist2(q), bandwidth, log_h, norms[si]).0);
                    }
                }
                lse[g] = log_sum_exp(&terms);
                start += size;
            }
            // best and second-best other group, so a holdout never shifts the
            // scale used for the remaining groups
            let mut first: Option<usize> = None;
            let mut second: Option<usize> = None;
            for g in (0..n_groups).filter(|&g| g != qg) {
                if first.is_none_or(|f| lse[g] > lse[f]) {
                    second = first;
                    first = Some(g);
                } else if second.is_none_or(|s| lse[g] > lse[s]) {
                    second = Some(g);
                }
            }
            holdouts
                .iter()
                .map(|&holdout| {
                    if holdout == Some(qg) {
                        return f64::NAN;
                    }
                    let remaining = n_groups - usize::from(holdout.is_some());
                    if remaining == 1 {
                        return if sizes[qg] >= 2 {
                            lse[qg] - ((sizes[qg] - 1) as f64).ln()
                        } else {
                            f64::NAN
                        };
                    }
                    let shift = if holdout == first { second } else { first };
                    let m = lse[shift.expect("at least two remaining groups")];
                    let s: f64 = lse
                        .iter()
                        .enumerate()
                        .filter(|&(g, _)| g != qg && Some(g) != holdout)
                        .map(|(_, l)| (l - m).exp())
                        .sum();
                    let n_train = total - sizes[qg] - holdout.map_or(0, |h| sizes[h]);
                    m + s.ln() - (n_train as f64).ln()
                })
                .collect()
        })
        .collect();
    let mut sums = vec![0.0; holdouts.len()];
    let mut counts = vec![0usize; holdouts.len()];
    for row in &per_query {
        for (h, v) in row.iter().enumerate() {
            if !v.is_nan() {
                sums[h] += v;
                counts[h] += 1;
            }
        }
    }
    sums.iter()
        .zip(&counts)
        .map(|(s, &c)| if c == 0 { f64::NAN } else { s / c as f64 })
        .collect()
}

/// Precomputed saliency-model density for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyComponent {
    grid: DensityGrid,
    epsilon: f64,
}

pub const SALIENCY_EPSILON: f64 = 1e-6;

impl SaliencyComponent {
    pub fn new(grid: DensityGrid, image: &ImageRecord) -> Result<Self> {
        let grid = grid.to_probability()?;
        grid.check_invariants()?;
        if grid.width() != image.width as usize || grid.height() != image.height as usize {
            return Err(Error::invalid(format!(
                "saliency grid {}x{} does not match image {} ({}x{})",
                grid.width(),
                grid.height(),
                image.image_id,
                image.width,
                image.height
            )));
        }
        Ok(Self {
            grid,
            epsilon: SALIENCY_EPSILON,
        })
    }

    pub fn grid(&self) -> &DensityGrid {
        &self.grid
    }

    fn floor(&self) -> f64 {
        self.epsilon * self.grid.uniform_level()
    }

    /// Bilinear interpolation between pixel centers, clamped at the borders.
    pub fn interpolate(&self, q: Point) -> f64 {
        let w = self.grid.width();
        let h = self.grid.height();
        let axis = |v: f64, n: usize| -> (usize, usize, f64) {
            let f = (v - 0.5).clamp(0.0, (n - 1) as f64);
            let i0 = (f.floor() as usize).min(n - 1);
            let i1 = (i0 + 1).min(n - 1);
            (i0, i1, f - i0 as f64)
        };
        let (x0, x1, tx) = axis(q.x, w);
        let (y0, y1, ty) = axis(q.y, h);
        let top = (1.0 - tx) * self.grid.get(x0, y0) + tx * self.grid.get(x1, y0);
        let bottom = (1.0 - tx) * self.grid.get(x0, y1) + tx * self.grid.get(x1, y1);
        (1.0 - ty) * top + ty * bottom
    }

    pub fn logdensity(&self, queries: &[Point]) -> Vec<f64> {
        let floor = self.floor();
        queries
            .iter()
            .map(|&q| self.interpolate(q).max(floor).ln())
            .collect()
    }

    fn raster_values(&self) -> Vec<f64> {
        let floor = self.floor();
        self.grid.values().iter().map(|v| v.max(floor)).collect()
    }
}

/// Image-level components that do not depend on the fold.
#[derive(Debug, Clone, Default)]
pub struct ComponentSet {
    pub center_bias: Option<CenterBiasModel>,
    pub saliency: Option<SaliencyComponent>,
}

impl ComponentSet {
    pub fn check(&self, mask: ComponentMask) -> Result<()> {
        if mask.contains(Component::CenterBias) && self.center_bias.is_none() {
            return Err(Error::invalid("center-bias component active but no model given"));
        }
        if mask.contains(Component::Saliency) && self.saliency.is_none() {
            return Err(Error::invalid("saliency component active but no saliency grid given"));
        }
        Ok(())
    }
}

/// Per-component log densities at a list of queries; `None` for inactive components.
#[derive(Debug, Clone, PartialEq)]
pub struct ComponentLogDensities(pub [Option<Vec<f64>>; 4]);

impl ComponentLogDensities {
    pub fn get(&self, c: Component) -> Option<&[f64]> {
        self.0[c.index()].as_deref()
    }
}

/// Log densities of the fold-independent components (center bias, uniform,
/// saliency) at `queries`.
pub(crate) fn static_logdensities(
    image: &ImageRecord,
    mask: ComponentMask,
    components: &ComponentSet,
    queries: &[Point],
) -> Result<ComponentLogDensities> {
    components.check(mask)?;
    let geom = image.geometry();
    if let Some(q) = queries.iter().find(|q| !geom.contains(**q)) {
        return Err(Error::invalid(format!(
            "query ({}, {}) outside image {}",
            q.x, q.y, image.image_id
        )));
    }
    let mut out: [Option<Vec<f64>>; 4] = Default::default();
    if mask.contains(Component::CenterBias) {
        let cb = components.center_bias.as_ref().expect("checked");
        out[Component::CenterBias.index()] = Some(cb.logdensity(queries, geom)?);
    }
    if mask.contains(Component::Uniform) {
        out[Component::Uniform.index()] = Some(vec![image.log_uniform(); queries.len()]);
    }
    if mask.contains(Component::Saliency) {
        let s = components.saliency.as_ref().expect("checked");
        out[Component::Saliency.index()] = Some(s.logdensity(queries));
    }
    Ok(ComponentLogDensities(out))
}

/// Log densities of every active component at `queries`, with the KDE built
/// from `train` fixations.
pub fn component_logdensities(
    image: &ImageRecord,
    train: &[Point],
    kernel: &KernelParams,
    mask: ComponentMask,
    components: &ComponentSet,
    queries: &[Point],
) -> Result<ComponentLogDensities> {
    let mut out = static_logdensities(image, mask, components, queries)?;
    if mask.contains(Component::Kde) {
        let geom = image.geometry();
        let bw = kernel.bandwidths(train, geom)?;
        out.0[Component::Kde.index()] = Some(kde::adaptive_kde_logdensity(train, &bw, queries, geom)?);
    }
    Ok(out)
}

/// `log sum_k w_k exp(l_k)` over active components.
pub fn mixture_logdensity(
    params: &MixtureParams,
    components: &ComponentLogDensities,
) -> Result<Vec<f64>> {
    let lw = params.log_weights()?;
    let active: Vec<(f64, &[f64])> = params
        .mask()
        .active()
        .map(|c| {
            components
                .get(c)
                .map(|v| (lw[c.index()], v))
                .ok_or_else(|| Error::invalid(format!("missing log densities for component {c}")))
        })
        .collect::<Result<_>>()?;
    let n = active[0].1.len();
    if active.iter().any(|(_, v)| v.len() != n) {
        return Err(Error::invalid("component log densities differ in length"));
    }
    let mut terms = vec![0.0; active.len()];
    Ok((0..n)
        .map(|i| {
            for (t, (w, v)) in terms.iter_mut().zip(&active) {
                *t = w + v[i];
            }
            log_sum_exp(&terms)
        })
        .collect())
}

/// Mixture density on the image's pixel grid. Each component is rasterized at
/// pixel centers and normalized, so the weighted sum is normalized too.
pub fn rasterize_mixture(
    image: &ImageRecord,
    train: &[Point],
    kernel: &KernelParams,
    params: &MixtureParams,
    components: &ComponentSet,
) -> Result<DensityGrid> {
    let mask = params.mask();
    components.check(mask)?;
    let w = image.width as usize;
    let h = image.height as usize;
    let weights = params.weights()?;
    let mut acc = vec![0.0; w * h];
    let mut add = |values: Vec<f64>, weight: f64| -> Result<()> {
        let grid = DensityGrid::normalized(w, h, values)?;
        for (a, v) in acc.iter_mut().zip(grid.values()) {
            *a += weight * v;
        }
        Ok(())
    };
    for c in mask.active() {
        let weight = weights[c.index()];
        if weight == 0.0 {
            continue;
        }
        match c {
            Component::Kde => {
                let geom = image.geometry();
                let bw = kernel.bandwidths(train, geom)?;
                add(kde::kde_raster_values(train, &bw, w, h, geom), weight)?;
            }
            Component::CenterBias => {
                let cb = components.center_bias.as_ref().expect("checked");
                add(cb.raster_values(w, h), weight)?;
            }
            Component::Uniform => add(vec![1.0; w * h], weight)?,
            Component::Saliency => {
                let s = components.saliency.as_ref().expect("checked");
                add(s.raster_values(), weight)?;
            }
        }
    }
    // Re-sum to absorb rounding from the weighted combination.
    DensityGrid::normalized(w, h, acc).inspect(|g| {
        debug_assert_eq!(g.space(), GridSpace::Probability);
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{FixationRow, DatasetBundle};

    fn image(w: u32, h: u32) -> ImageRecord {
        ImageRecord::new("img", w, h)
    }

    #[test]
    fn uniform_component_value() {
        let img = image(100, 100);
        let c = component_logdensities(
            &img,
            &[],
            &KernelParams::fixed(1.0),
            ComponentMask::only(&[Component::Uniform]),
            &ComponentSet::default(),
            &[Point::new(3.0, 4.0)],
        )
        .unwrap();
        let lu = c.get(Component::Uniform).unwrap()[0];
        assert!((lu - 1e-4f64.ln()).abs() < 1e-12);
        assert!((lu / std::f64::consts::LN_2 + 13.28771).abs() < 1e-5);
    }

    #[test]
    fn uniform_saliency_equals_uniform() {
        let img = image(7, 5);
        let s = SaliencyComponent::new(DensityGrid::uniform(7, 5).unwrap(), &img).unwrap();
        for v in s.logdensity(&[Point::new(0.0, 0.0), Point::new(3.3, 2.7), Point::new(6.99, 4.99)]) {
            assert!((v - img.log_uniform()).abs() < 1e-12);
        }
    }

    #[test]
    fn interpolation_hits_nodes_exactly() {
        let img = image(3, 2);
        let g = DensityGrid::normalized(3, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let s = SaliencyComponent::new(g.clone(), &img).unwrap();
        for r in 0..2 {
            for c in 0..3 {
                assert_eq!(s.interpolate(Point::new(c as f64 + 0.5, r as f64 + 0.5)), g.get(c, r));
            }
        }
        let mid = s.interpolate(Point::new(1.0, 1.0));
        assert!((mid - (g.get(0, 0) + g.get(1, 0) + g.get(0, 1) + g.get(1, 1)) / 4.0).abs() < 1e-15);
        assert!(SaliencyComponent::new(g, &image(2, 3)).is_err());
    }

    #[test]
    fn saliency_floor_prevents_neg_inf() {
        let img = image(2, 1);
        let s = SaliencyComponent::new(DensityGrid::normalized(2, 1, vec![1.0, 0.0]).unwrap(), &img).unwrap();
        let v = s.logdensity(&[Point::new(1.9, 0.5)])[0];
        assert!((v - (SALIENCY_EPSILON * 0.5).ln()).abs() < 1e-12);
    }

    #[test]
    fn one_hot_and_degenerate_mixtures() {
        let kde = vec![-3.0, -5.5];
        let comps = ComponentLogDensities([Some(kde.clone()), None, Some(vec![-4.0, -4.0]), None]);
        let only_kde = MixtureParams::new(ComponentMask::only(&[Component::Kde]));
        let out = mixture_logdensity(&only_kde, &comps).unwrap();
        for (a, b) in out.iter().zip(&kde) {
            assert!((a - b).abs() < 1e-12);
        }
        let equal = ComponentLogDensities([Some(vec![-2.5]), Some(vec![-2.5]), None, None]);
        let p = MixtureParams::new(ComponentMask::only(&[Component::Kde, Component::CenterBias]))
            .with_logit(Component::CenterBias, 1.7);
        assert!((mixture_logdensity(&p, &equal).unwrap()[0] + 2.5).abs() < 1e-12);
    }

    #[test]
    fn equal_logits_give_quarter_weights() {
        let w = MixtureParams::new(ComponentMask::all()).weights().unwrap();
        assert!(w.iter().all(|x| (x - 0.25).abs() < 1e-15));
        let p = MixtureParams::new(ComponentMask::default());
        assert!(p.weights().is_err());
    }

    #[test]
    fn disabled_equals_neg_inf_logit() {
        let comps = ComponentLogDensities([Some(vec![-3.0]), Some(vec![-2.0]), Some(vec![-6.0]), None]);
        let disabled = MixtureParams::new(ComponentMask::only(&[Component::Kde, Component::Uniform]))
            .with_logit(Component::Uniform, 0.3);
        let neg_inf = MixtureParams::new(ComponentMask::only(&[Component::Kde, Component::CenterBias, Component::Uniform]))
            .with_logit(Component::Uniform, 0.3)
            .with_logit(Component::CenterBias, f64::NEG_INFINITY);
        assert_eq!(
            mixture_logdensity(&disabled, &comps).unwrap(),
            mixture_logdensity(&neg_inf, &comps).unwrap()
        );
        assert_eq!(disabled.weights().unwrap(), neg_inf.weights().unwrap());
    }

    #[test]
    fn component_list_parsing() {
        let m = ComponentMask::parse_list("kde,cb,uniform").unwrap();
        assert_eq!(m.to_list(), "kde,cb,uniform");
        assert!(ComponentMask::parse_list("kde,bogus").is_err());
        assert!(ComponentMask::parse_list("").is_err());
    }

    #[test]
    fn missing_saliency_is_error() {
        let err = component_logdensities(
            &image(4, 4),
            &[Point::new(1.0, 1.0)],
            &KernelParams::fixed(1.0),
            ComponentMask::all(),
            &ComponentSet { center_bias: Some(CenterBiasModel::new(vec![Point::new(0.5, 0.5)], 0.1, true).unwrap()), saliency: None },
            &[Point::new(1.0, 1.0)],
        );
        assert!(err.is_err());
    }

    fn cb_dataset(center_only: bool, holdout_shift: f64) -> DatasetBundle {
        let images = (0..4).map(|i| ImageRecord::new(format!("i{i}"), 200, 100)).collect();
        let mut rows = Vec::new();
        for i in 0..4 {
            for k in 0..6 {
                let (x, y) = if center_only || i == 0 {
                    (100.0 + if i == 0 { holdout_shift } else { 0.0 }, 50.0)
                } else {
                    (100.0 + 7.0 * (k as f64 - 2.5), 50.0 + 3.0 * (k as f64 - 2.5))
                };
                rows.push(FixationRow { image_id: format!("i{i}"), subject_id: format!("s{k}"), x, y, line: 0 });
            }
        }
        DatasetBundle::from_parts(images, rows, Default::default()).unwrap()
    }

    #[test]
    fn center_bias_peaks_at_center_and_ignores_holdout() {
        let d = cb_dataset(true, 0.0);
        let cb = fit_center_bias(&d, "i0").unwrap();
        let grid = cb.rasterize(21, 21).unwrap();
        let argmax = grid.values().iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).unwrap().0;
        assert_eq!(argmax, 10 * 21 + 10);
        assert!((grid.sum() - 1.0).abs() < 1e-12);

        let a = fit_center_bias(&cb_dataset(false, 0.0), "i0").unwrap();
        let b = fit_center_bias(&cb_dataset(false, 37.0), "i0").unwrap();
        assert_eq!(a, b);
        assert!(fit_center_bias(&cb_dataset(false, 0.0), "nope").unwrap().sources().len() == 24);
    }

    #[test]
    fn batch_center_bias_matches_single_holdout() {
        let d = cb_dataset(false, 11.0);
        let all = fit_center_biases(&d).unwrap();
        for img in &d.images {
            assert_eq!(all[&img.image_id], fit_center_bias(&d, &img.image_id).unwrap());
        }
        let shared = fit_center_bias_shared(&d).unwrap();
        assert!(!shared.is_crossvalidated());
        assert_eq!(shared.sources().len(), 24);
    }

    #[test]
    fn center_bias_logdensity_integrates_to_one() {
        let cb = CenterBiasModel::new(vec![Point::new(0.4, 0.6), Point::new(0.5, 0.5)], 0.15, true).unwrap();
        let geom = Geometry::new(80.0, 60.0);
        let centers: Vec<Point> = (0..60).flat_map(|r| (0..80).map(move |c| Point::new(c as f64 + 0.5, r as f64 + 0.5))).collect();
        let total: f64 = cb.logdensity(&centers, geom).unwrap().iter().map(|v| v.exp()).sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    proptest::proptest! {
        #[test]
        fn weights_on_simplex(z in proptest::collection::vec(-30.0f64..30.0, 3), mask in 1u8..16) {
            let comps: Vec<Component> = Component::ALL.into_iter().filter(|c| mask & (1 << c.index()) != 0).collect();
            let mut p = MixtureParams::new(ComponentMask::only(&comps));
            p.set_logit(Component::CenterBias, z[0]);
            p.set_logit(Component::Uniform, z[1]);
            p.set_logit(Component::Saliency, z[2]);
            let w = p.weights().unwrap();
            proptest::prop_assert!(w.iter().all(|x| *x >= 0.0));
            proptest::prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for c in Component::ALL {
                if !p.mask().contains(c) { proptest::prop_assert_eq!(w[c.index()], 0.0); }
            }
        }

        #[test]
        fn raising_saliency_logit_raises_weight(z in -5.0f64..5.0, dz in 0.01f64..3.0, ls in -12.0f64..-2.0, lk in -12.0f64..-2.0) {
            let base = MixtureParams::new(ComponentMask::only(&[Component::Kde, Component::Uniform, Component::Saliency]))
                .with_logit(Component::Uniform, 0.5)
                .with_logit(Component::Saliency, z);
            let up = base.with_logit(Component::Saliency, z + dz);
            proptest::prop_assert!(up.weight(Component::Saliency).unwrap() > base.weight(Component::Saliency).unwrap());
            let comps = ComponentLogDensities([Some(vec![lk]), None, Some(vec![-9.0]), Some(vec![ls])]);
            let before = mixture_logdensity(&base, &comps).unwrap()[0];
            let after = mixture_logdensity(&up, &comps).unwrap()[0];
            if ls > before {
                proptest::prop_assert!(after >= before - 1e-12);
            }
        }
    }
}
