use std::path::PathBuf;

use clap::{Args, ValueEnum};
use fixdens::export::{loso_density, pooled_density, DensityKind, DensitySidecar, LosoDensityConfig};
use fixdens::{Error, Result};
use rayon::prelude::*;

use crate::common::{build_components, create_dir, file_stems, to_json, write_text, DataArgs, FitOutput};
use crate::config::{require, FileConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum KindArg {
    Loso,
    Pooled,
}

impl From<KindArg> for DensityKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Loso => DensityKind::Loso,
            KindArg::Pooled => DensityKind::Pooled,
        }
    }
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Fit output directory.
    #[arg(long)]
    pub params: PathBuf,
    /// loso: locally crossvalidated map; pooled: all fixations (overfits).
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    /// Support radius of the subject weights in pixels (loso only).
    #[arg(long)]
    pub radius: Option<f64>,
    /// Restrict to these image ids (repeatable).
    #[arg(long = "image", id = "image")]
    pub only: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

pub fn run(args: &DensityArgs, cfg: &FileConfig) -> Result<()> {
    let d = &cfg.density;
    let kind: DensityKind = match (args.kind, &d.kind) {
        (Some(k), _) => k.into(),
        (None, Some(s)) => KindArg::from_str(s, true)
            .map_err(|_| Error::invalid(format!("unknown density kind `{s}`")))?
            .into(),
        (None, None) => DensityKind::Loso,
    };
    let radius = args.radius.or(d.radius);
    if let Some(r) = radius {
        if !(r.is_finite() && r > 0.0) {
            return Err(Error::invalid("--radius must be > 0"));
        }
        if kind == DensityKind::Pooled {
            return Err(Error::invalid("--radius applies to loso densities only"));
        }
    }
    let out = require(args.out.clone().or(d.out.clone()), "--out")?;
    let fit = FitOutput::load(&args.params)?;
    if kind == DensityKind::Pooled {
        log::warn!("pooled densities include each fixation's own kernel and are not crossvalidated");
    }

    let dataset = args.data.load(cfg)?;
    for id in &args.only {
        if dataset.image(id).is_none() {
            return Err(Error::invalid(format!("unknown image {id}")));
        }
        if !fit.params.contains_key(id) {
            return Err(Error::invalid(format!("no fitted parameters for image {id}")));
        }
    }
    let components = build_components(&dataset, fit.mask()?, fit.manifest.center_bias)?;
    let models = fit.models(&dataset, &components)?;
    let ids: Vec<&String> = models
        .keys()
        .filter(|id| args.only.is_empty() || args.only.contains(id))
        .filter(|id| kind == DensityKind::Pooled || dataset.fixations[*id].is_crossvalidatable())
        .collect();
    for id in models.keys().filter(|id| !ids.contains(id)) {
        if args.only.is_empty() {
            log::warn!("skipping image {id}: a loso density needs at least two subjects");
        }
    }
    if ids.is_empty() {
        return Err(Error::invalid("no image to export"));
    }
    let stems = file_stems(ids.iter().map(|s| s.as_str()));
    let files: std::collections::BTreeMap<&str, &str> = fit
        .manifest
        .images
        .iter()
        .map(|e| (e.image_id.as_str(), e.file.as_str()))
        .collect();
    create_dir(&out)?;
    let config = LosoDensityConfig { rbf_radius: radius };
    ids.par_iter()
        .map(|id| -> Result<()> {
            let image = dataset.image(id).expect("fitted images exist");
            let table = &dataset.fixations[*id];
            let m = &models[*id];
            let (grid, r) = match kind {
                DensityKind::Loso => {
                    let l = loso_density(image, table, &m.kernel, &m.mixture, &m.components, &config)?;
                    (l.grid, Some(l.radius))
                }
                DensityKind::Pooled => (pooled_density(image, table, &m.kernel, &m.mixture, &m.components)?, None),
            };
            let stem = &stems[id.as_str()];
            grid.write(&out.join(format!("{stem}.fdg")))?;
            let sidecar = DensitySidecar {
                image_id: id.to_string(),
                kind,
                r,
                params_ref: files.get(id.as_str()).map(|f| f.to_string()),
            };
            write_text(&out.join(format!("{stem}.json")), &to_json(&sidecar)?)
        })
        .collect::<Result<()>>()?;
    println!("wrote {} density grid(s) -> {}", ids.len(), out.display());
    Ok(())
}
