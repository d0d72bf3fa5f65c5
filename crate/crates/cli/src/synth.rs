use std::path::PathBuf;

use clap::Args;
use fixdens::synth::{Blob, SyntheticSpec};
use fixdens::{Error, Result};

use crate::common::{create_dir, file_stems, to_json, write_text};
use crate::config::{pick, require, FileConfig};

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// JSON spec; mutually exclusive with the shape flags below.
    #[arg(long, conflicts_with_all = ["width", "height", "subjects", "per_subject", "blobs", "floor", "ppd"])]
    pub spec: Option<PathBuf>,
    #[arg(long)]
    pub width: Option<u32>,
    #[arg(long)]
    pub height: Option<u32>,
    #[arg(long)]
    pub subjects: Option<usize>,
    /// Fixations per subject and image.
    #[arg(long)]
    pub per_subject: Option<usize>,
    /// Gaussian blob `x,y,sigma,weight` in pixels (repeatable).
    #[arg(long = "blob", value_name = "X,Y,SIGMA,WEIGHT")]
    pub blobs: Vec<String>,
    /// Weight of the uniform floor.
    #[arg(long)]
    pub floor: Option<f64>,
    /// Pixels per degree recorded in the image metadata.
    #[arg(long)]
    pub ppd: Option<f64>,
    /// Number of images.
    #[arg(long)]
    pub images: Option<usize>,
    /// Point each image's saliency_grid_path at its ground-truth grid.
    #[arg(long)]
    pub saliency_from_truth: bool,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

fn parse_blob(s: &str) -> Result<Blob> {
    let v: Vec<f64> = s
        .split(',')
        .map(|t| t.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::invalid(format!("--blob expects four numbers x,y,sigma,weight, got `{s}`")))?;
    let [x, y, sigma, weight] = v[..] else {
        return Err(Error::invalid(format!("--blob expects four numbers x,y,sigma,weight, got `{s}`")));
    };
    Ok(Blob { x, y, sigma, weight })
}

pub fn run(args: &SynthArgs, cfg: &FileConfig, seed: u64) -> Result<()> {
    let s = &cfg.synth;
    let spec = match args.spec.clone().or(s.spec.clone()) {
        Some(path) => {
            let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
            serde_json::from_str::<SyntheticSpec>(&text)
                .map_err(|e| Error::invalid(format!("{}: {e}", path.display())))?
        }
        None => {
            let width = require(args.width, "--width (or --spec)")?;
            let height = require(args.height, "--height (or --spec)")?;
            let blobs = args.blobs.iter().map(|b| parse_blob(b)).collect::<Result<Vec<_>>>()?;
            let floor = args
                .floor
                .unwrap_or_else(|| 1.0 - blobs.iter().map(|b| b.weight).sum::<f64>());
            SyntheticSpec {
                width,
                height,
                subjects: args.subjects.unwrap_or(16),
                fixations_per_subject: args.per_subject.unwrap_or(10),
                blobs,
                floor,
                pixels_per_degree: args.ppd,
            }
        }
    };
    spec.validate()?;
    let n_images = pick(args.images, s.images, 1);
    if n_images == 0 {
        return Err(Error::invalid("--images must be >= 1"));
    }
    let out = require(args.out.clone().or(s.out.clone()), "--out")?;

    let mut dataset = spec.sample_dataset(n_images, seed)?;
    let truth = spec.truth_grid()?;
    let truth_dir = out.join("truth");
    create_dir(&truth_dir)?;
    let stems = file_stems(dataset.images.iter().map(|i| i.image_id.as_str()));
    for img in &mut dataset.images {
        let rel = format!("truth/{}.fdg", stems[&img.image_id]);
        truth.write(&out.join(&rel))?;
        if args.saliency_from_truth {
            img.saliency_grid_path = Some(rel);
        }
    }
    write_text(&out.join("fixations.csv"), &dataset.to_csv_string())?;
    write_text(&out.join("images.json"), &(dataset.images_json_string()? + "\n"))?;
    write_text(&out.join("spec.json"), &to_json(&spec)?)?;
    let n: usize = dataset.fixations.values().map(|t| t.len()).sum();
    println!("wrote {n_images} image(s), {n} fixations -> {}", out.display());
    Ok(())
}
