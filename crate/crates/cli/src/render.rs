use std::path::{Path, PathBuf};

use clap::Args;
use fixdens::render::{encode_png, load_stimulus, render_overlay, render_panel, Colormap, PanelRow, VizConfig};
use fixdens::{DensityGrid, Error, Result};
use rayon::prelude::*;

use crate::common::{create_dir, file_stems};
use crate::config::FileConfig;

#[derive(Debug, Args)]
pub struct RenderArgs {
    /// FDG1 density grid (repeatable).
    #[arg(long = "grid", required = true)]
    pub grids: Vec<PathBuf>,
    /// Stimulus image for the grid at the same position (repeatable).
    #[arg(long = "stimulus")]
    pub stimuli: Vec<PathBuf>,
    /// Output directory, or the PNG file with --panel.
    #[arg(long)]
    pub out: PathBuf,
    /// One comparison panel with a row per grid.
    #[arg(long)]
    pub panel: bool,
    /// Saturation level L of the heatmap.
    #[arg(long)]
    pub saturation: Option<f64>,
    /// Contour base gamma.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Peak heatmap opacity over the stimulus, in [0, 1].
    #[arg(long)]
    pub opacity: Option<f64>,
    /// reds, blues or greys.
    #[arg(long)]
    pub colormap: Option<Colormap>,
}

pub fn run(args: &RenderArgs, cfg: &FileConfig) -> Result<()> {
    let r = &cfg.render;
    let defaults = VizConfig::default();
    let colormap = match (args.colormap, &r.colormap) {
        (Some(c), _) => c,
        (None, Some(s)) => s.parse()?,
        (None, None) => defaults.colormap,
    };
    let config = VizConfig {
        saturation: args.saturation.or(r.saturation).unwrap_or(defaults.saturation),
        gamma: args.gamma.or(r.gamma).unwrap_or(defaults.gamma),
        opacity: args.opacity.or(r.opacity).unwrap_or(defaults.opacity),
        colormap,
        ..defaults
    };
    config.validate()?;
    if !args.stimuli.is_empty() && args.stimuli.len() != args.grids.len() {
        return Err(Error::invalid(format!(
            "{} stimuli given for {} grids; pass none or one per grid",
            args.stimuli.len(),
            args.grids.len()
        )));
    }
    let grids = args
        .grids
        .iter()
        .map(|p| DensityGrid::read(p))
        .collect::<Result<Vec<_>>>()?;
    let stimuli = args
        .stimuli
        .iter()
        .map(|p| load_stimulus(p))
        .collect::<Result<Vec<_>>>()?;

    if args.panel {
        let rows: Vec<PanelRow> = grids
            .iter()
            .enumerate()
            .map(|(i, g)| PanelRow {
                stimulus: stimuli.get(i),
                grid: g,
            })
            .collect();
        let fig = render_panel(&rows, &config)?;
        if let Some(dir) = args.out.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        fixdens::write_atomic(&args.out, &encode_png(&fig)?)?;
        println!("wrote panel -> {}", args.out.display());
        return Ok(());
    }

    create_dir(&args.out)?;
    let names: Vec<String> = args.grids.iter().map(|p| stem_of(p)).collect();
    let stems = file_stems(names.iter().map(|s| s.as_str()));
    grids
        .par_iter()
        .enumerate()
        .map(|(i, g)| -> Result<()> {
            let fig = render_overlay(stimuli.get(i), g, &config)?;
            let path = args.out.join(format!("{}.png", stems[&names[i]]));
            fixdens::write_atomic(&path, &encode_png(&fig)?)
        })
        .collect::<Result<()>>()?;
    println!("wrote {} figure(s) -> {}", grids.len(), args.out.display());
    Ok(())
}

fn stem_of(p: &Path) -> String {
    p.file_stem().and_then(|s| s.to_str()).unwrap_or("grid").to_string()
}
