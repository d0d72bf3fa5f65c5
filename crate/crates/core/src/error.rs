use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: u64,
        message: String,
    },
    #[error("image {image_id}: fixation ({x}, {y}) outside {width}x{height} (line {line})")]
    OutOfBounds {
        image_id: String,
        x: f64,
        y: f64,
        width: u32,
        height: u32,
        line: u64,
    },
    #[error("grid: {0}")]
    Grid(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("png: {0}")]
    Png(#[from] png::EncodingError),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical pipeline itself, as opposed to bad
    /// inputs or unreadable files.
    pub fn is_computation(&self) -> bool {
        matches!(self, Error::Numerical(_) | Error::Png(_))
    }
}
