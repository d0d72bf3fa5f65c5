use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use fixdens::{DensityGrid, Error, GridSpace, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SpaceArg {
    Prob,
    Log,
}

impl From<SpaceArg> for GridSpace {
    fn from(s: SpaceArg) -> Self {
        match s {
            SpaceArg::Prob => GridSpace::Probability,
            SpaceArg::Log => GridSpace::LogProbability,
        }
    }
}

#[derive(Debug, Args)]
pub struct ConvertArgs {
    /// `.fdg` (binary) or anything else (text, one row per line).
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    /// Space of a text input, or the space to convert the output to.
    #[arg(long, value_enum)]
    pub space: Option<SpaceArg>,
    /// Rescale a probability grid to sum to one (text input only).
    #[arg(long)]
    pub normalize: bool,
}

fn is_binary(p: &Path) -> bool {
    p.extension().is_some_and(|e| e.eq_ignore_ascii_case("fdg"))
}

pub fn run(args: &ConvertArgs) -> Result<()> {
    let grid = if is_binary(&args.input) {
        if args.normalize {
            return Err(Error::invalid("--normalize applies to text input"));
        }
        let g = DensityGrid::read(&args.input)?;
        match args.space.map(GridSpace::from) {
            Some(GridSpace::Probability) => g.to_probability()?,
            Some(GridSpace::LogProbability) => g.to_log()?,
            None => g,
        }
    } else {
        let text = std::fs::read_to_string(&args.input).map_err(|e| Error::io(&args.input, e))?;
        let space = args.space.map(GridSpace::from).unwrap_or(GridSpace::Probability);
        if args.normalize {
            if space != GridSpace::Probability {
                return Err(Error::invalid("--normalize needs a probability-space text grid"));
            }
            let raw = DensityGrid::parse_text(&text, space)?;
            DensityGrid::normalized(raw.width(), raw.height(), raw.into_values())?
        } else {
            DensityGrid::parse_text(&text, space)?
        }
    };
    if is_binary(&args.output) {
        grid.write(&args.output)?;
    } else {
        grid.check_invariants()?;
        fixdens::write_atomic(&args.output, grid.to_text().as_bytes())?;
    }
    println!("{}x{} grid -> {}", grid.width(), grid.height(), args.output.display());
    Ok(())
}
