//! Density visualization: a saturating heatmap of the density-to-uniform
//! ratio plus contour lines at integer powers of `gamma` times the uniform
//! density, composited over the stimulus.

pub mod contour;

use std::path::Path;

use image::RgbImage;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::grid::DensityGrid;
use contour::{marching_squares, Segment};

/// Single-hue ramps; lightness decreases monotonically with heat.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Colormap {
    #[default]
    Reds,
    Blues,
    Greys,
}

impl Colormap {
    fn hue(self) -> [f64; 3] {
        match self {
            Colormap::Reds => [165.0, 15.0, 21.0],
            Colormap::Blues => [8.0, 48.0, 107.0],
            Colormap::Greys => [0.0, 0.0, 0.0],
        }
    }
}

impl std::str::FromStr for Colormap {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "reds" => Ok(Colormap::Reds),
            "blues" => Ok(Colormap::Blues),
            "greys" | "grays" => Ok(Colormap::Greys),
            other => Err(Error::invalid(format!("unknown colormap {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizConfig {
    /// Saturation level `L`.
    pub saturation: f64,
    /// Contour base `gamma`.
    pub gamma: f64,
    /// Opacity of the fully saturated heatmap.
    pub opacity: f64,
    pub colormap: Colormap,
    pub thick_width: f64,
    pub thin_width: f64,
}

impl Default for VizConfig {
    fn default() -> Self {
        Self {
            saturation: 20.0,
            gamma: 4.0,
            opacity: 0.85,
            colormap: Colormap::Reds,
            thick_width: 2.0,
            thin_width: 1.0,
        }
    }
}

impl VizConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.saturation.is_finite() && self.saturation > 0.0) {
            return Err(Error::invalid("saturation level L must be > 0"));
        }
        if !(self.gamma.is_finite() && self.gamma > 1.0) {
            return Err(Error::invalid("contour base gamma must be > 1"));
        }
        if !(0.0..=1.0).contains(&self.opacity) {
            return Err(Error::invalid("opacity must lie in [0, 1]"));
        }
        if !(self.thick_width > 0.0 && self.thin_width > 0.0) {
            return Err(Error::invalid("line widths must be > 0"));
        }
        Ok(())
    }
}

/// `L (1 - exp(-d / L))`.
pub fn saturate(d: f64, l: f64) -> f64 {
    -l * (-d / l).exp_m1()
}

/// Saturated density ratio `p / p_U` at every pixel.
pub fn saturating_map(grid: &DensityGrid, l: f64) -> Result<Vec<f64>> {
    let grid = grid.to_probability()?;
    let n = grid.len() as f64;
    Ok(grid.values().iter().map(|&p| saturate(p * n, l)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ContourLevel {
    pub k: i32,
    /// `gamma^k * p_U`.
    pub level: f64,
    pub thick: bool,
}

/// Relative spread below which a grid counts as uniform.
const UNIFORM_TOL: f64 = 1e-9;

fn value_range(grid: &DensityGrid) -> (f64, f64) {
    grid.values()
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

pub fn is_uniform(grid: &DensityGrid) -> Result<bool> {
    let grid = grid.to_probability()?;
    let (lo, hi) = value_range(&grid);
    Ok(hi - lo <= UNIFORM_TOL * hi)
}

/// Levels `gamma^k p_U` within `[min, max]` of the grid, ascending, where
/// `min` is the smallest positive cell. A uniform grid yields the single
/// level `k = 0`.
pub fn contour_levels(grid: &DensityGrid, gamma: f64) -> Result<Vec<ContourLevel>> {
    if !(gamma.is_finite() && gamma > 1.0) {
        return Err(Error::invalid("contour base gamma must be > 1"));
    }
    let grid = grid.to_probability()?;
    let pu = grid.uniform_level();
    let level = |k: i32| pu * gamma.powi(k);
    if is_uniform(&grid)? {
        return Ok(vec![ContourLevel { k: 0, level: pu, thick: true }]);
    }
    let (_, hi) = value_range(&grid);
    let lo = grid.values().iter().copied().filter(|v| *v > 0.0).fold(hi, f64::min);
    let mut k0 = ((lo / pu).ln() / gamma.ln()).ceil() as i32;
    while level(k0 - 1) >= lo {
        k0 -= 1;
    }
    while level(k0) < lo {
        k0 += 1;
    }
    let mut k1 = ((hi / pu).ln() / gamma.ln()).floor() as i32;
    while level(k1 + 1) <= hi {
        k1 += 1;
    }
    while level(k1) > hi {
        k1 -= 1;
    }
    Ok((k0..=k1).map(|k| ContourLevel { k, level: level(k), thick: k == 0 }).collect())
}

/// Natural log of the grid with zeros floored, for contouring.
fn log_field(grid: &DensityGrid) -> Vec<f64> {
    grid.values().iter().map(|v| v.max(1e-300).ln()).collect()
}

/// Raster with metadata, ready for PNG encoding.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderedFigure {
    pub width: u32,
    pub height: u32,
    /// RGB8, row-major.
    pub pixels: Vec<u8>,
    /// Latin-1 key/value pairs stored as PNG text chunks.
    pub metadata: Vec<(String, String)>,
    /// Set for uniform densities, which are drawn without contours.
    pub caption: Option<String>,
    pub contour_segments: usize,
}

pub const UNIFORM_CAPTION: &str = "\u{2248} uniform";

/// Hex SHA-256 of the grid's FDG1 encoding.
pub fn density_hash(grid: &DensityGrid) -> String {
    format!("{:x}", Sha256::digest(grid.encode()))
}

pub fn load_stimulus(path: &Path) -> Result<RgbImage> {
    Ok(image::open(path)?.to_rgb8())
}

struct Canvas {
    width: usize,
    height: usize,
    rgb: Vec<f64>,
}

impl Canvas {
    fn new(width: usize, height: usize, stimulus: Option<&RgbImage>) -> Self {
        let rgb = match stimulus {
            Some(img) => img.as_raw().iter().map(|&v| v as f64).collect(),
            None => vec![255.0; width * height * 3],
        };
        Self { width, height, rgb }
    }

    fn blend(&mut self, col: usize, row: usize, color: [f64; 3], alpha: f64) {
        let i = (row * self.width + col) * 3;
        for (c, v) in color.iter().enumerate() {
            self.rgb[i + c] = (1.0 - alpha) * self.rgb[i + c] + alpha * v;
        }
    }

    fn heat(&mut self, heat: &[f64], l: f64, config: &VizConfig) {
        let hue = config.colormap.hue();
        for (k, &h) in heat.iter().enumerate() {
            self.blend(k % self.width, k / self.width, hue, config.opacity * (h / l).clamp(0.0, 1.0));
        }
    }

    /// Anti-aliased stroke: coverage falls off linearly over one pixel.
    fn stroke(&mut self, s: &Segment, width: f64, color: [f64; 3]) {
        let half = width / 2.0;
        let pad = half + 1.0;
        let c0 = (s.a.0.min(s.b.0) - pad).floor().max(0.0) as usize;
        let c1 = ((s.a.0.max(s.b.0) + pad).ceil().max(0.0) as usize).min(self.width);
        let r0 = (s.a.1.min(s.b.1) - pad).floor().max(0.0) as usize;
        let r1 = ((s.a.1.max(s.b.1) + pad).ceil().max(0.0) as usize).min(self.height);
        for row in r0..r1 {
            for col in c0..c1 {
                let d = point_segment_distance((col as f64 + 0.5, row as f64 + 0.5), s);
                let cover = (half + 0.5 - d).clamp(0.0, 1.0);
                if cover > 0.0 {
                    self.blend(col, row, color, cover);
                }
            }
        }
    }

    fn into_bytes(self) -> Vec<u8> {
        self.rgb.iter().map(|v| v.round().clamp(0.0, 255.0) as u8).collect()
    }
}

fn point_segment_distance(p: (f64, f64), s: &Segment) -> f64 {
    let (dx, dy) = (s.b.0 - s.a.0, s.b.1 - s.a.1);
    let len2 = dx * dx + dy * dy;
    let t = if len2 == 0.0 {
        0.0
    } else {
        (((p.0 - s.a.0) * dx + (p.1 - s.a.1) * dy) / len2).clamp(0.0, 1.0)
    };
    let (qx, qy) = (s.a.0 + t * dx, s.a.1 + t * dy);
    ((p.0 - qx).powi(2) + (p.1 - qy).powi(2)).sqrt()
}

const LINE_COLOR: [f64; 3] = [25.0, 25.0, 25.0];

fn check_stimulus(stimulus: Option<&RgbImage>, w: usize, h: usize) -> Result<()> {
    if let Some(img) = stimulus {
        if img.width() as usize != w || img.height() as usize != h {
            return Err(Error::invalid(format!(
                "stimulus is {}x{} but the density grid is {w}x{h}",
                img.width(),
                img.height()
            )));
        }
    }
    Ok(())
}

/// Saturating heatmap and log-spaced contours over the stimulus (white if
/// absent).
pub fn render_overlay(
    stimulus: Option<&RgbImage>,
    grid: &DensityGrid,
    config: &VizConfig,
) -> Result<RenderedFigure> {
    config.validate()?;
    let grid = grid.to_probability()?;
    let (w, h) = (grid.width(), grid.height());
    check_stimulus(stimulus, w, h)?;
    let mut canvas = Canvas::new(w, h, stimulus);
    canvas.heat(&saturating_map(&grid, config.saturation)?, config.saturation, config);
    let uniform = is_uniform(&grid)?;
    let mut n_segments = 0;
    if !uniform {
        let field = log_field(&grid);
        for level in contour_levels(&grid, config.gamma)? {
            let width = if level.thick { config.thick_width } else { config.thin_width };
            for s in marching_squares(&field, w, h, level.level.ln()) {
                canvas.stroke(&s, width, LINE_COLOR);
                n_segments += 1;
            }
        }
    }
    Ok(RenderedFigure {
        width: w as u32,
        height: h as u32,
        pixels: canvas.into_bytes(),
        metadata: vec![
            ("saturation_L".into(), format!("{}", config.saturation)),
            ("contour_gamma".into(), format!("{}", config.gamma)),
            ("density_sha256".into(), density_hash(&grid)),
        ],
        caption: uniform.then(|| UNIFORM_CAPTION.to_string()),
        contour_segments: n_segments,
    })
}

/// PNG with metadata as text chunks and the caption as an international
/// text chunk.
pub fn encode_png(fig: &RenderedFigure) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut buf, fig.width, fig.height);
        enc.set_color(png::ColorType::Rgb);
        enc.set_depth(png::BitDepth::Eight);
        for (k, v) in &fig.metadata {
            enc.add_text_chunk(k.clone(), v.clone())?;
        }
        if let Some(c) = &fig.caption {
            enc.add_itxt_chunk("caption".into(), c.clone())?;
        }
        let mut writer = enc.write_header()?;
        writer.write_image_data(&fig.pixels)?;
        writer.finish()?;
    }
    Ok(buf)
}

/// One row of the comparison panel.
pub struct PanelRow<'a> {
    pub stimulus: Option<&'a RgbImage>,
    pub grid: &'a DensityGrid,
}

/// Mass fractions enclosed by the quantile contours of the panel.
pub const PANEL_QUANTILES: [f64; 4] = [0.25, 0.5, 0.75, 0.9];

/// Density value whose upper level set holds `mass` of the total.
fn mass_threshold(sorted_desc: &[f64], mass: f64) -> f64 {
    let mut acc = 0.0;
    for &v in sorted_desc {
        acc += v;
        if acc >= mass {
            return v;
        }
    }
    *sorted_desc.last().unwrap()
}

/// Four columns per row: a heatmap scaled to the image's own maximum, a
/// heatmap on a scale shared by all rows, mass-quantile contours, and the
/// overlay of [`render_overlay`]. Cells are padded with white to the largest
/// grid size.
pub fn render_panel(rows: &[PanelRow], config: &VizConfig) -> Result<RenderedFigure> {
    config.validate()?;
    if rows.is_empty() {
        return Err(Error::invalid("panel needs at least one row"));
    }
    let grids: Vec<DensityGrid> = rows.iter().map(|r| r.grid.to_probability()).collect::<Result<_>>()?;
    for (r, g) in rows.iter().zip(&grids) {
        check_stimulus(r.stimulus, g.width(), g.height())?;
    }
    let cw = grids.iter().map(|g| g.width()).max().unwrap();
    let ch = grids.iter().map(|g| g.height()).max().unwrap();
    let shared_max = grids
        .iter()
        .map(|g| value_range(g).1 * g.len() as f64)
        .fold(0.0, f64::max);
    let (pw, ph) = (4 * cw, rows.len() * ch);
    let mut panel = vec![255u8; pw * ph * 3];
    let mut n_segments = 0;
    for (ri, (row, grid)) in rows.iter().zip(&grids).enumerate() {
        let (w, h) = (grid.width(), grid.height());
        let n = grid.len() as f64;
        let own_max = value_range(grid).1;
        let solid = VizConfig { opacity: 1.0, ..config.clone() };

        let mut per_image = Canvas::new(w, h, row.stimulus);
        let heat: Vec<f64> = grid.values().iter().map(|v| v / own_max).collect();
        per_image.heat(&heat, 1.0, &solid);

        let mut shared = Canvas::new(w, h, row.stimulus);
        let heat: Vec<f64> = grid.values().iter().map(|v| v * n / shared_max).collect();
        shared.heat(&heat, 1.0, &solid);

        let mut quant = Canvas::new(w, h, row.stimulus);
        let mut sorted = grid.values().to_vec();
        sorted.sort_by(|a, b| b.total_cmp(a));
        let field = log_field(grid);
        let total: f64 = sorted.iter().sum();
        for q in PANEL_QUANTILES {
            let t = mass_threshold(&sorted, q * total);
            for s in marching_squares(&field, w, h, t.max(1e-300).ln()) {
                quant.stroke(&s, config.thin_width, LINE_COLOR);
                n_segments += 1;
            }
        }

        let ours = render_overlay(row.stimulus, grid, config)?;
        n_segments += ours.contour_segments;
        let cells = [per_image.into_bytes(), shared.into_bytes(), quant.into_bytes(), ours.pixels];
        for (ci, cell) in cells.iter().enumerate() {
            for y in 0..h {
                let dst = ((ri * ch + y) * pw + ci * cw) * 3;
                panel[dst..dst + w * 3].copy_from_slice(&cell[y * w * 3..(y + 1) * w * 3]);
            }
        }
    }
    let mut hasher = Sha256::new();
    for g in &grids {
        hasher.update(g.encode());
    }
    Ok(RenderedFigure {
        width: pw as u32,
        height: ph as u32,
        pixels: panel,
        metadata: vec![
            ("saturation_L".into(), format!("{}", config.saturation)),
            ("contour_gamma".into(), format!("{}", config.gamma)),
            ("density_sha256".into(), format!("{:x}", hasher.finalize())),
            ("panel_columns".into(), "per-image,shared-scale,quantile-contours,overlay".into()),
        ],
        caption: None,
        contour_segments: n_segments,
    })
}
