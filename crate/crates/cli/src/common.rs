//! Pieces shared by several subcommands: dataset loading, component
//! construction, fit manifests and output naming.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::Args;
use fixdens::crossval::{ImageModel, Scheme};
use fixdens::data::load_dataset;
use fixdens::mixture::{fit_center_bias_shared, fit_center_biases, ComponentSet, SaliencyComponent};
use fixdens::params::ImageParams;
use fixdens::{Component, ComponentMask, DatasetBundle, DensityGrid, Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{require, FileConfig};

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Fixation CSV with header image_id,subject_id,x,y.
    #[arg(long)]
    pub fixations: Option<PathBuf>,
    /// Image metadata JSON.
    #[arg(long)]
    pub images: Option<PathBuf>,
    /// Text file with one excluded image_id per line.
    #[arg(long)]
    pub exclude: Option<PathBuf>,
}

impl DataArgs {
    pub fn load(&self, cfg: &FileConfig) -> Result<DatasetBundle> {
        let fixations = require(self.fixations.clone().or(cfg.data.fixations.clone()), "--fixations")?;
        let images = require(self.images.clone().or(cfg.data.images.clone()), "--images")?;
        let exclude = self.exclude.clone().or(cfg.data.exclude.clone());
        let dataset = load_dataset(&fixations, &images, exclude.as_deref())?;
        if dataset.fixations.values().all(|t| t.is_empty()) {
            return Err(Error::invalid("dataset has no fixations"));
        }
        Ok(dataset)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterBiasMode {
    /// Leave-one-image-out center bias per image.
    Loio,
    /// One center bias fitted on all images (not crossvalidated).
    Shared,
}

/// Center-bias and saliency components for every image with fixations.
/// Saliency grids must exist for all of them when the mask needs saliency.
pub fn build_components(
    dataset: &DatasetBundle,
    mask: ComponentMask,
    cb_mode: Option<CenterBiasMode>,
) -> Result<BTreeMap<String, ComponentSet>> {
    let ids: Vec<&str> = dataset
        .fixations
        .values()
        .filter(|t| !t.is_empty())
        .map(|t| t.image_id.as_str())
        .collect();
    let mut saliency = BTreeMap::new();
    if mask.contains(Component::Saliency) {
        for id in &ids {
            let image = dataset.image(id).expect("fixation tables belong to images");
            let path = image.saliency_grid_path.as_ref().ok_or_else(|| {
                Error::invalid(format!("saliency component requested but image {id} has no saliency_grid_path"))
            })?;
            let grid = DensityGrid::read(Path::new(path))?.to_probability()?;
            saliency.insert(id.to_string(), SaliencyComponent::new(grid, image)?);
        }
    }
    let mut center_bias = BTreeMap::new();
    if mask.contains(Component::CenterBias) {
        match cb_mode.unwrap_or(CenterBiasMode::Loio) {
            CenterBiasMode::Loio => {
                center_bias = fit_center_biases(dataset).map_err(|e| {
                    Error::invalid(format!("{e}; use the shared center bias for single-image datasets"))
                })?;
            }
            CenterBiasMode::Shared => {
                log::warn!("shared center bias is fitted on every image and is not crossvalidated");
                let cb = fit_center_bias_shared(dataset)?;
                for id in &ids {
                    center_bias.insert(id.to_string(), cb.clone());
                }
            }
        }
    }
    Ok(ids
        .iter()
        .map(|id| {
            (
                id.to_string(),
                ComponentSet {
                    center_bias: center_bias.remove(*id),
                    saliency: saliency.remove(*id),
                },
            )
        })
        .collect())
}

/// File-system safe, unique stems for image ids.
pub fn file_stems<'a>(ids: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, String> {
    let mut used = std::collections::BTreeSet::new();
    let mut out = BTreeMap::new();
    for id in ids {
        let base: String = id
            .chars()
            .map(|c| if c.is_ascii_alphanumeric() || "-_.".contains(c) { c } else { '_' })
            .collect();
        let base = if base.is_empty() || base.starts_with('.') { format!("_{base}") } else { base };
        let mut stem = base.clone();
        let mut k = 2;
        while !used.insert(stem.clone()) {
            stem = format!("{base}-{k}");
            k += 1;
        }
        out.insert(id.to_string(), stem);
    }
    out
}

pub fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(|e| Error::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fixdens::write_atomic(path, text.as_bytes())
}

pub fn to_json<T: Serialize>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(value)? + "\n")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub file: String,
    pub objective_nats: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub constraint_active: Option<bool>,
}

/// Written by `fit` next to the per-image parameter files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitManifest {
    pub kernel: String,
    pub components: String,
    /// `per-image`, `global` or `fixed`.
    pub mode: String,
    pub plan: Scheme,
    pub center_bias: Option<CenterBiasMode>,
    pub seed: u64,
    pub restarts: Option<usize>,
    pub h_min: Option<f64>,
    pub global_objective_nats: Option<f64>,
    pub images: Vec<ManifestEntry>,
    /// Images that could not be fitted under the plan.
    pub skipped: Vec<String>,
}

pub const MANIFEST: &str = "manifest.json";

/// A fit output directory loaded back.
pub struct FitOutput {
    pub dir: PathBuf,
    pub manifest: FitManifest,
    pub params: BTreeMap<String, ImageParams>,
}

impl FitOutput {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let manifest: FitManifest = serde_json::from_str(&text)
            .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?;
        let mut params = BTreeMap::new();
        for entry in &manifest.images {
            let p = ImageParams::read(&dir.join(&entry.file))?;
            if p.image_id != entry.image_id {
                return Err(Error::invalid(format!(
                    "{} holds parameters of image {}, expected {}",
                    entry.file, p.image_id, entry.image_id
                )));
            }
            params.insert(p.image_id.clone(), p);
        }
        Ok(Self {
            dir: dir.to_path_buf(),
            manifest,
            params,
        })
    }

    /// Union of the active components over all images.
    pub fn mask(&self) -> Result<ComponentMask> {
        let mut mask = ComponentMask::only(&[]);
        for p in self.params.values() {
            for c in p.mixture_params()?.mask().active() {
                mask.set(c, true);
            }
        }
        Ok(mask)
    }

    /// Evaluation models for images present in both the fit and `dataset`.
    pub fn models(
        &self,
        dataset: &DatasetBundle,
        components: &BTreeMap<String, ComponentSet>,
    ) -> Result<BTreeMap<String, ImageModel>> {
        let mut out = BTreeMap::new();
        for (id, p) in &self.params {
            if dataset.image(id).is_none() {
                log::warn!("parameters for image {id} which is not in the dataset (or excluded)");
                continue;
            }
            out.insert(
                id.clone(),
                ImageModel {
                    kernel: p.kernel_params()?,
                    mixture: p.mixture_params()?,
                    components: components.get(id).cloned().unwrap_or_default(),
                },
            );
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stems_are_safe_and_unique() {
        let s = file_stems(["a/b", "a_b", "ok-1.x", ".hidden", ""]);
        assert_eq!(s["a/b"], "a_b");
        assert_eq!(s["a_b"], "a_b-2");
        assert_eq!(s["ok-1.x"], "ok-1.x");
        assert_eq!(s[".hidden"], "_.hidden");
        assert_eq!(s[""], "_");
    }
}
