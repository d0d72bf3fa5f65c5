use std::collections::BTreeMap;
use std::path::PathBuf;

use clap::Args;
use fixdens::mixture::{fit_center_bias_shared, fit_center_biases};
use fixdens::Result;
use rayon::prelude::*;
use serde::Serialize;

use crate::common::{create_dir, file_stems, to_json, write_text, DataArgs};
use crate::config::{require, switch, FileConfig};

#[derive(Debug, Args)]
pub struct CenterBiasArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// One model fitted on all images instead of leave-one-image-out.
    #[arg(long)]
    pub shared: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct Entry {
    file: String,
    /// Bandwidth on the unit square.
    bandwidth: f64,
    crossvalidated: bool,
    n_sources: usize,
}

pub fn run(args: &CenterBiasArgs, cfg: &FileConfig) -> Result<()> {
    let c = &cfg.centerbias;
    let shared = switch(args.shared, c.shared);
    let out = require(args.out.clone().or(c.out.clone()), "--out")?;
    let dataset = args.data.load(cfg)?;
    let models = if shared {
        log::warn!("shared center bias is fitted on every image and is not crossvalidated");
        let m = fit_center_bias_shared(&dataset)?;
        dataset
            .fixations
            .values()
            .filter(|t| !t.is_empty())
            .map(|t| (t.image_id.clone(), m.clone()))
            .collect::<BTreeMap<_, _>>()
    } else {
        fit_center_biases(&dataset)?
    };
    let stems = file_stems(models.keys().map(|s| s.as_str()));
    create_dir(&out)?;
    let entries: Vec<(String, Entry)> = models
        .par_iter()
        .map(|(id, m)| {
            let image = dataset.image(id).expect("fixation tables belong to images");
            let file = format!("{}.fdg", stems[id]);
            m.rasterize(image.width as usize, image.height as usize)?
                .write(&out.join(&file))?;
            Ok((
                id.clone(),
                Entry {
                    file,
                    bandwidth: m.bandwidth(),
                    crossvalidated: m.is_crossvalidated(),
                    n_sources: m.sources().len(),
                },
            ))
        })
        .collect::<Result<_>>()?;
    let index: BTreeMap<String, Entry> = entries.into_iter().collect();
    write_text(&out.join("centerbias.json"), &to_json(&index)?)?;
    println!("wrote {} center-bias grid(s) -> {}", index.len(), out.display());
    Ok(())
}
