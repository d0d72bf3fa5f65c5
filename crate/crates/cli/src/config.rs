//! Optional TOML configuration. Values given on the command line win over the
//! file, which wins over built-in defaults. Relative paths in the file are
//! resolved against the file's directory.

use std::path::{Path, PathBuf};

use fixdens::{Error, Result};
use serde::Deserialize;

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    pub data: DataSection,
    pub fit: FitSection,
    pub evaluate: EvaluateSection,
    pub density: DensitySection,
    pub render: RenderSection,
    pub synth: SynthSection,
    pub report: ReportSection,
    pub centerbias: CenterBiasSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DataSection {
    pub fixations: Option<PathBuf>,
    pub images: Option<PathBuf>,
    pub exclude: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FitSection {
    pub kernel: Option<String>,
    pub components: Option<String>,
    /// `per-image` or `global`.
    pub mode: Option<String>,
    pub plan: Option<String>,
    pub restarts: Option<usize>,
    pub h_min: Option<f64>,
    pub max_iter: Option<usize>,
    pub cb_shared: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct EvaluateSection {
    pub plan: Option<String>,
    pub bootstrap_iterations: Option<usize>,
    pub no_auc: Option<bool>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DensitySection {
    pub kind: Option<String>,
    pub radius: Option<f64>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct RenderSection {
    pub saturation: Option<f64>,
    pub gamma: Option<f64>,
    pub opacity: Option<f64>,
    pub colormap: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct SynthSection {
    pub spec: Option<PathBuf>,
    pub images: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct ReportSection {
    pub quantiles: Option<Vec<f64>>,
    pub k: Option<usize>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CenterBiasSection {
    pub shared: Option<bool>,
    pub out: Option<PathBuf>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg: FileConfig = toml::from_str(&text)
            .map_err(|e| Error::invalid(format!("config {}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new(""));
        let fix = |p: &mut Option<PathBuf>| {
            if let Some(v) = p {
                if v.is_relative() {
                    *v = base.join(&*v);
                }
            }
        };
        fix(&mut cfg.data.fixations);
        fix(&mut cfg.data.images);
        fix(&mut cfg.data.exclude);
        fix(&mut cfg.fit.out);
        fix(&mut cfg.evaluate.out);
        fix(&mut cfg.density.out);
        fix(&mut cfg.synth.spec);
        fix(&mut cfg.synth.out);
        fix(&mut cfg.report.out);
        fix(&mut cfg.centerbias.out);
        Ok(cfg)
    }
}

/// Flag, then config file, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// A switch set on the command line or in the config file.
pub fn switch(flag: bool, file: Option<bool>) -> bool {
    flag || file.unwrap_or(false)
}

pub fn require<T>(value: Option<T>, what: &str) -> Result<T> {
    value.ok_or_else(|| Error::invalid(format!("missing {what}")))
}
