//! Synthetic datasets drawn from a known density: a mixture of isotropic
//! Gaussian blobs plus a uniform floor, restricted to the image.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{DatasetBundle, FixationTable, Geometry, ImageRecord, Point};
use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use crate::kde::{kernel_norm, LN_2PI};
use crate::util::{log_sum_exp, rng_stream};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Blob {
    pub x: f64,
    pub y: f64,
    pub sigma: f64,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    pub width: u32,
    pub height: u32,
    pub subjects: usize,
    pub fixations_per_subject: usize,
    #[serde(default)]
    pub blobs: Vec<Blob>,
    /// Weight of the uniform floor; blob weights and floor sum to one.
    #[serde(default)]
    pub floor: f64,
    #[serde(default)]
    pub pixels_per_degree: Option<f64>,
}

const WEIGHT_TOL: f64 = 1e-9;

impl SyntheticSpec {
    /// One blob in the image center carrying all the mass.
    pub fn single_blob(width: u32, height: u32, sigma: f64, subjects: usize, per_subject: usize) -> Self {
        Self {
            width,
            height,
            subjects,
            fixations_per_subject: per_subject,
            blobs: vec![Blob {
                x: width as f64 / 2.0,
                y: height as f64 / 2.0,
                sigma,
                weight: 1.0,
            }],
            floor: 0.0,
            pixels_per_degree: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid("synthetic image must have positive size"));
        }
        if self.subjects == 0 || self.fixations_per_subject == 0 {
            return Err(Error::invalid("synthetic spec needs subjects and fixations"));
        }
        let geom = self.geometry();
        for b in &self.blobs {
            if !(b.sigma.is_finite() && b.sigma > 0.0) {
                return Err(Error::invalid(format!("blob sigma must be > 0, got {}", b.sigma)));
            }
            if !(b.weight.is_finite() && b.weight >= 0.0) {
                return Err(Error::invalid(format!("blob weight must be >= 0, got {}", b.weight)));
            }
            if !(b.x.is_finite() && b.y.is_finite()) {
                return Err(Error::invalid("blob position must be finite"));
            }
            if b.weight > 0.0 && kernel_norm(Point::new(b.x, b.y), b.sigma, geom).log_z < -30.0 {
                return Err(Error::invalid(format!("blob at ({}, {}) has no mass inside the image", b.x, b.y)));
            }
        }
        if !(self.floor.is_finite() && self.floor >= 0.0) {
            return Err(Error::invalid("floor weight must be >= 0"));
        }
        let total = self.floor + self.blobs.iter().map(|b| b.weight).sum::<f64>();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::invalid(format!("blob weights plus floor sum to {total}, not 1")));
        }
        if let Some(ppd) = self.pixels_per_degree {
            if !(ppd.is_finite() && ppd > 0.0) {
                return Err(Error::invalid("pixels_per_degree must be > 0"));
            }
        }
        Ok(())
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width as f64, self.height as f64)
    }

    /// Log of the untruncated mixture's mass inside the image.
    fn log_mass(&self) -> f64 {
        let geom = self.geometry();
        let mut terms = vec![self.floor.ln()];
        for b in &self.blobs {
            terms.push(b.weight.ln() + kernel_norm(Point::new(b.x, b.y), b.sigma, geom).log_z);
        }
        log_sum_exp(&terms)
    }

    /// Exact ground-truth log density (per square pixel) at `queries`.
    pub fn logdensity(&self, queries: &[Point]) -> Vec<f64> {
        let log_mass = self.log_mass();
        let log_floor = self.floor.ln() - self.geometry().area().ln();
        let mut terms = Vec::with_capacity(self.blobs.len() + 1);
        queries
            .iter()
            .map(|q| {
                terms.clear();
                terms.push(log_floor);
                for b in &self.blobs {
                    let d2 = q.dist2(Point::new(b.x, b.y));
                    let s = b.sigma;
                    terms.push(b.weight.ln() - d2 / (2.0 * s * s) - LN_2PI - 2.0 * s.ln());
                }
                log_sum_exp(&terms) - log_mass
            })
            .collect()
    }

    /// Ground truth evaluated at pixel centers and renormalized.
    pub fn truth_grid(&self) -> Result<DensityGrid> {
        let (w, h) = (self.width as usize, self.height as usize);
        let centers: Vec<Point> = (0..h)
            .flat_map(|r| (0..w).map(move |c| Point::new(c as f64 + 0.5, r as f64 + 0.5)))
            .collect();
        let lp = self.logdensity(&centers);
        let max = lp.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        DensityGrid::normalized(w, h, lp.iter().map(|v| (v - max).exp()).collect())
    }

    /// One draw from the density restricted to the image, by rejection.
    pub fn sample_point(&self, rng: &mut impl Rng) -> Point {
        let geom = self.geometry();
        loop {
            let mut u: f64 = rng.gen();
            let mut chosen = None;
            for b in &self.blobs {
                if u < b.weight {
                    chosen = Some(b);
                    break;
                }
                u -= b.weight;
            }
            let p = match chosen {
                Some(b) => {
                    let zx: f64 = StandardNormal.sample(rng);
                    let zy: f64 = StandardNormal.sample(rng);
                    Point::new(b.x + b.sigma * zx, b.y + b.sigma * zy)
                }
                None => Point::new(rng.gen::<f64>() * geom.width, rng.gen::<f64>() * geom.height),
            };
            if geom.contains(p) {
                return p;
            }
        }
    }

    /// Fixations of one image; every subject draws i.i.d. from the same density.
    pub fn sample_image(&self, image_id: &str, seed: u64) -> Result<(ImageRecord, FixationTable)> {
        self.validate()?;
        let mut rng = rng_stream(seed, &[b"synth", image_id.as_bytes()]);
        let mut table = FixationTable::new(image_id);
        let width = subject_digits(self.subjects);
        for s in 0..self.subjects {
            let subject = format!("s{s:0width$}");
            for _ in 0..self.fixations_per_subject {
                let p = self.sample_point(&mut rng);
                table.push(subject.clone(), p.x, p.y);
            }
        }
        let mut image = ImageRecord::new(image_id, self.width, self.height);
        image.pixels_per_degree = self.pixels_per_degree;
        Ok((image, table))
    }

    /// `n_images` images named `img0000`, `img0001`, ...
    pub fn sample_dataset(&self, n_images: usize, seed: u64) -> Result<DatasetBundle> {
        let mut images = Vec::with_capacity(n_images);
        let mut fixations = BTreeMap::new();
        for i in 0..n_images {
            let (img, table) = self.sample_image(&format!("img{i:04}"), seed)?;
            fixations.insert(img.image_id.clone(), table);
            images.push(img);
        }
        Ok(DatasetBundle {
            images,
            fixations,
            exclusion_list: Default::default(),
        })
    }
}

fn subject_digits(n: usize) -> usize {
    n.saturating_sub(1).to_string().len().max(2)
}
