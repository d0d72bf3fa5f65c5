//! Rasterized densities and the `FDG1` binary grid format.
//!
//! Layout: 4-byte magic `FDG1`, little-endian `u32` width and height, one space
//! tag byte (0 = probability, 1 = log-probability), then `width * height`
//! little-endian `f64` values in row-major order.

use std::path::Path;

use crate::error::{Error, Result};
use crate::util::log_sum_exp;

pub const MAGIC: &[u8; 4] = b"FDG1";
const HEADER_LEN: usize = 13;
/// Allowed deviation of a probability grid's total mass from one.
pub const NORMALIZATION_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GridSpace {
    Probability,
    LogProbability,
}

impl GridSpace {
    fn tag(self) -> u8 {
        match self {
            GridSpace::Probability => 0,
            GridSpace::LogProbability => 1,
        }
    }

    fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(GridSpace::Probability),
            1 => Ok(GridSpace::LogProbability),
            t => Err(Error::Grid(format!("unknown space tag {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensityGrid {
    width: usize,
    height: usize,
    values: Vec<f64>,
    space: GridSpace,
}

impl DensityGrid {
    /// Structural constructor: checks dimensions and finiteness only.
    pub fn new(width: usize, height: usize, values: Vec<f64>, space: GridSpace) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::Grid("width and height must be >= 1".into()));
        }
        if width > u32::MAX as usize || height > u32::MAX as usize {
            return Err(Error::Grid("dimensions exceed u32".into()));
        }
        if width.checked_mul(height) != Some(values.len()) {
            return Err(Error::Grid(format!(
                "{}x{} grid needs {} values, got {}",
                width,
                height,
                width.saturating_mul(height),
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Grid(format!("non-finite value at index {i}")));
        }
        Ok(Self {
            width,
            height,
            values,
            space,
        })
    }

    /// Probability grid from nonnegative raw masses, rescaled to sum to one.
    pub fn normalized(width: usize, height: usize, mut values: Vec<f64>) -> Result<Self> {
        if values.iter().any(|v| *v < 0.0) {
            return Err(Error::Grid("negative mass".into()));
        }
        let sum: f64 = values.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(Error::Numerical(format!("grid mass {sum} cannot be normalized")));
        }
        values.iter_mut().for_each(|v| *v /= sum);
        Self::new(width, height, values, GridSpace::Probability)
    }

    pub fn uniform(width: usize, height: usize) -> Result<Self> {
        let n = width * height;
        Self::new(width, height, vec![1.0 / n as f64; n], GridSpace::Probability)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn space(&self) -> GridSpace {
        self.space
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, col: usize, row: usize) -> f64 {
        self.values[row * self.width + col]
    }

    /// Uniform per-pixel probability `1 / (W * H)`.
    pub fn uniform_level(&self) -> f64 {
        1.0 / self.values.len() as f64
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }

    /// Checks the normalization invariant of the grid's space.
    pub fn check_invariants(&self) -> Result<()> {
        match self.space {
            GridSpace::Probability => {
                if self.values.iter().any(|v| *v < 0.0) {
                    return Err(Error::Grid("negative probability".into()));
                }
                let s = self.sum();
                if (s - 1.0).abs() > NORMALIZATION_TOL {
                    return Err(Error::Grid(format!("probabilities sum to {s}")));
                }
            }
            GridSpace::LogProbability => {
                let l = log_sum_exp(&self.values);
                if l.abs() > NORMALIZATION_TOL {
                    return Err(Error::Grid(format!("log-probabilities have logsumexp {l}")));
                }
            }
        }
        Ok(())
    }

    pub fn to_probability(&self) -> Result<Self> {
        match self.space {
            GridSpace::Probability => Ok(self.clone()),
            GridSpace::LogProbability => {
                let vals = self.values.iter().map(|v| v.exp()).collect();
                Self::new(self.width, self.height, vals, GridSpace::Probability)
            }
        }
    }

    pub fn to_log(&self) -> Result<Self> {
        match self.space {
            GridSpace::LogProbability => Ok(self.clone()),
            GridSpace::Probability => {
                if self.values.iter().any(|v| *v <= 0.0) {
                    return Err(Error::Grid("zero probability has no finite log".into()));
                }
                let vals = self.values.iter().map(|v| v.ln()).collect();
                Self::new(self.width, self.height, vals, GridSpace::LogProbability)
            }
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(HEADER_LEN + 8 * self.values.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.push(self.space.tag());
        for v in &self.values {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN {
            return Err(Error::Grid(format!("truncated header ({} bytes)", bytes.len())));
        }
        if &bytes[..4] != MAGIC {
            return Err(Error::Grid("magic mismatch".into()));
        }
        let width = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let height = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let space = GridSpace::from_tag(bytes[12])?;
        let payload = &bytes[HEADER_LEN..];
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::Grid("dimensions overflow".into()))?;
        if payload.len() != expected {
            return Err(Error::Grid(format!(
                "{}x{} header but payload holds {} bytes",
                width,
                height,
                payload.len()
            )));
        }
        let values = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Self::new(width, height, values, space)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::decode(&bytes)
    }

    /// Writes the grid after checking its normalization invariant.
    pub fn write(&self, path: &Path) -> Result<()> {
        self.check_invariants()?;
        crate::util::write_atomic(path, &self.encode())
    }

    /// Parses a plain-text grid: one row per line, whitespace or comma separated.
    pub fn parse_text(text: &str, space: GridSpace) -> Result<Self> {
        let mut width = None;
        let mut values = Vec::new();
        let mut height = 0;
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let row: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|t| !t.is_empty())
                .map(|t| {
                    t.parse::<f64>().map_err(|_| Error::Parse {
                        source_name: "grid text".into(),
                        line: lineno as u64 + 1,
                        message: format!("`{t}` is not a number"),
                    })
                })
                .collect::<Result<_>>()?;
            match width {
                None => width = Some(row.len()),
                Some(w) if w != row.len() => {
                    return Err(Error::Parse {
                        source_name: "grid text".into(),
                        line: lineno as u64 + 1,
                        message: format!("row has {} values, expected {w}", row.len()),
                    })
                }
                _ => {}
            }
            values.extend(row);
            height += 1;
        }
        let width = width.ok_or_else(|| Error::Grid("empty grid".into()))?;
        Self::new(width, height, values, space)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for row in self.values.chunks(self.width) {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:e}")).collect();
            out.push_str(&cells.join(" "));
            out.push('\n');
        }
        out
    }
}
