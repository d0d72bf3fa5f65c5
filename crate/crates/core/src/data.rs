//! Dataset ingestion and validation.
//!
//! Coordinates are continuous pixels with the origin at the top-left corner of
//! the top-left pixel; pixel `(i, j)` has its center at `(i + 0.5, j + 0.5)`.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn dist2(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

/// Continuous extent of the domain a density lives on.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Geometry {
    pub width: f64,
    pub height: f64,
}

impl Geometry {
    pub fn new(width: f64, height: f64) -> Self {
        Self { width, height }
    }

    pub fn unit() -> Self {
        Self::new(1.0, 1.0)
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x < self.width && p.y >= 0.0 && p.y < self.height
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub image_id: String,
    pub width: u32,
    pub height: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixels_per_degree: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub saliency_grid_path: Option<String>,
}

impl ImageRecord {
    pub fn new(image_id: impl Into<String>, width: u32, height: u32) -> Self {
        Self {
            image_id: image_id.into(),
            width,
            height,
            pixels_per_degree: None,
            saliency_grid_path: None,
        }
    }

    pub fn geometry(&self) -> Geometry {
        Geometry::new(self.width as f64, self.height as f64)
    }

    /// Log density of the uniform distribution over the image.
    pub fn log_uniform(&self) -> f64 {
        -(self.width as f64 * self.height as f64).ln()
    }

    /// Converts a bandwidth in degrees of visual angle to pixels.
    pub fn degrees_to_pixels(&self, degrees: f64) -> Result<f64> {
        match self.pixels_per_degree {
            Some(ppd) => Ok(degrees * ppd),
            None => Err(Error::invalid(format!(
                "image {} has no pixels_per_degree",
                self.image_id
            ))),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.image_id.is_empty() {
            return Err(Error::invalid("empty image_id"));
        }
        if self.width == 0 || self.height == 0 {
            return Err(Error::invalid(format!(
                "image {}: width and height must be >= 1",
                self.image_id
            )));
        }
        if let Some(ppd) = self.pixels_per_degree {
            if !(ppd.is_finite() && ppd > 0.0) {
                return Err(Error::invalid(format!(
                    "image {}: pixels_per_degree must be > 0",
                    self.image_id
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fixation {
    pub subject_id: String,
    pub x: f64,
    pub y: f64,
}

impl Fixation {
    pub fn point(&self) -> Point {
        Point::new(self.x, self.y)
    }
}

/// All fixations recorded on one image, in file order.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationTable {
    pub image_id: String,
    pub rows: Vec<Fixation>,
}

impl FixationTable {
    pub fn new(image_id: impl Into<String>) -> Self {
        Self {
            image_id: image_id.into(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, subject_id: impl Into<String>, x: f64, y: f64) {
        self.rows.push(Fixation {
            subject_id: subject_id.into(),
            x,
            y,
        });
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn points(&self) -> Vec<Point> {
        self.rows.iter().map(Fixation::point).collect()
    }

    /// Sorted distinct subject ids.
    pub fn subjects(&self) -> Vec<&str> {
        let set: BTreeSet<&str> = self.rows.iter().map(|r| r.subject_id.as_str()).collect();
        set.into_iter().collect()
    }

    pub fn subject_count(&self) -> usize {
        self.subjects().len()
    }

    /// Points grouped by subject, subjects sorted.
    pub fn points_by_subject(&self) -> Vec<(String, Vec<Point>)> {
        let mut map: BTreeMap<&str, Vec<Point>> = BTreeMap::new();
        for r in &self.rows {
            map.entry(&r.subject_id).or_default().push(r.point());
        }
        map.into_iter().map(|(s, p)| (s.to_string(), p)).collect()
    }

    pub fn is_crossvalidatable(&self) -> bool {
        self.subject_count() >= 2
    }
}

/// One parsed fixation CSV row plus its 1-based line number.
#[derive(Debug, Clone, PartialEq)]
pub struct FixationRow {
    pub image_id: String,
    pub subject_id: String,
    pub x: f64,
    pub y: f64,
    pub line: u64,
}

#[derive(Debug, Deserialize)]
struct RawRow {
    image_id: String,
    subject_id: String,
    x: String,
    y: String,
}

const CSV_HEADER: [&str; 4] = ["image_id", "subject_id", "x", "y"];

/// Parses fixation CSV text with header `image_id,subject_id,x,y`.
pub fn parse_fixations_csv(text: &str) -> Result<Vec<FixationRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let parse_err = |line: u64, message: String| Error::Parse {
        source_name: "fixations".into(),
        line,
        message,
    };
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    if headers.iter().collect::<Vec<_>>() != CSV_HEADER {
        return Err(parse_err(
            1,
            format!("expected header `{}`", CSV_HEADER.join(",")),
        ));
    }
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            parse_err(line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let raw: RawRow = record
            .deserialize(Some(&headers))
            .map_err(|e| parse_err(line, e.to_string()))?;
        let coord = |name: &str, v: &str| -> Result<f64> {
            let value: f64 = v
                .parse()
                .map_err(|_| parse_err(line, format!("{name} `{v}` is not a number")))?;
            if !value.is_finite() {
                return Err(parse_err(line, format!("{name} is not finite")));
            }
            Ok(value)
        };
        if raw.image_id.is_empty() || raw.subject_id.is_empty() {
            return Err(parse_err(line, "empty image_id or subject_id".into()));
        }
        rows.push(FixationRow {
            x: coord("x", &raw.x)?,
            y: coord("y", &raw.y)?,
            image_id: raw.image_id,
            subject_id: raw.subject_id,
            line,
        });
    }
    Ok(rows)
}

/// Parses the image metadata JSON array.
pub fn parse_images_json(text: &str) -> Result<Vec<ImageRecord>> {
    let images: Vec<ImageRecord> = serde_json::from_str(text)?;
    let mut seen = BTreeSet::new();
    for img in &images {
        img.validate()?;
        if !seen.insert(img.image_id.as_str()) {
            return Err(Error::invalid(format!("duplicate image_id {}", img.image_id)));
        }
    }
    Ok(images)
}

/// Parses an exclusion list: one image id per line, blank lines and `#` comments ignored.
pub fn parse_exclusion_list(text: &str) -> BTreeSet<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

/// A validated dataset. Images are sorted by id; excluded images are absent.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub images: Vec<ImageRecord>,
    pub fixations: BTreeMap<String, FixationTable>,
    pub exclusion_list: BTreeSet<String>,
}

impl DatasetBundle {
    /// Assembles and validates a bundle. Images with fewer than two subjects
    /// are kept but logged as not crossvalidatable.
    pub fn from_parts(
        images: Vec<ImageRecord>,
        rows: Vec<FixationRow>,
        exclusion_list: BTreeSet<String>,
    ) -> Result<Self> {
        let mut images: Vec<ImageRecord> = images
            .into_iter()
            .filter(|img| !exclusion_list.contains(&img.image_id))
            .collect();
        images.sort_by(|a, b| a.image_id.cmp(&b.image_id));
        let by_id: BTreeMap<&str, &ImageRecord> =
            images.iter().map(|i| (i.image_id.as_str(), i)).collect();

        let mut fixations: BTreeMap<String, FixationTable> = images
            .iter()
            .map(|i| (i.image_id.clone(), FixationTable::new(i.image_id.clone())))
            .collect();
        for row in rows {
            if exclusion_list.contains(&row.image_id) {
                continue;
            }
            let Some(img) = by_id.get(row.image_id.as_str()) else {
                return Err(Error::Parse {
                    source_name: "fixations".into(),
                    line: row.line,
                    message: format!("unknown image_id {}", row.image_id),
                });
            };
            if !img.geometry().contains(Point::new(row.x, row.y)) {
                return Err(Error::OutOfBounds {
                    image_id: row.image_id,
                    x: row.x,
                    y: row.y,
                    width: img.width,
                    height: img.height,
                    line: row.line,
                });
            }
            fixations
                .get_mut(&row.image_id)
                .expect("table exists for every image")
                .push(row.subject_id, row.x, row.y);
        }
        for table in fixations.values() {
            if !table.is_crossvalidatable() {
                log::warn!(
                    "image {} has {} subject(s); it cannot be crossvalidated",
                    table.image_id,
                    table.subject_count()
                );
            }
        }
        Ok(Self {
            images,
            fixations,
            exclusion_list,
        })
    }

    pub fn image(&self, image_id: &str) -> Option<&ImageRecord> {
        self.images.iter().find(|i| i.image_id == image_id)
    }

    pub fn table(&self, image_id: &str) -> Option<&FixationTable> {
        self.fixations.get(image_id)
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }

    /// Ids of images with at least two subjects.
    pub fn crossvalidatable_images(&self) -> Vec<&str> {
        self.fixations
            .values()
            .filter(|t| t.is_crossvalidatable())
            .map(|t| t.image_id.as_str())
            .collect()
    }

    /// Serializes the fixations back to CSV, images in id order, rows in file order.
    pub fn to_csv_string(&self) -> String {
        let mut out = String::from("image_id,subject_id,x,y\n");
        for table in self.fixations.values() {
            for r in &table.rows {
                out.push_str(&format!("{},{},{},{}\n", table.image_id, r.subject_id, r.x, r.y));
            }
        }
        out
    }

    pub fn images_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&self.images)?)
    }
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Loads and validates a dataset from a fixation CSV, image metadata JSON and
/// an optional exclusion list file.
pub fn load_dataset(
    fixation_csv_path: &Path,
    images_json_path: &Path,
    exclusion_list_path: Option<&Path>,
) -> Result<DatasetBundle> {
    let rows = parse_fixations_csv(&read_text(fixation_csv_path)?).map_err(|e| match e {
        Error::Parse { line, message, .. } => Error::Parse {
            source_name: fixation_csv_path.display().to_string(),
            line,
            message,
        },
        other => other,
    })?;
    let mut images = parse_images_json(&read_text(images_json_path)?)?;
    // Saliency paths are relative to the metadata file.
    if let Some(dir) = images_json_path.parent() {
        for img in &mut images {
            if let Some(p) = &img.saliency_grid_path {
                if Path::new(p).is_relative() {
                    img.saliency_grid_path = Some(dir.join(p).to_string_lossy().into_owned());
                }
            }
        }
    }
    let exclusion = match exclusion_list_path {
        Some(p) => parse_exclusion_list(&read_text(p)?),
        None => BTreeSet::new(),
    };
    DatasetBundle::from_parts(images, rows, exclusion)
}

#[cfg(test)]
mod tests {
    use super::*;

    const IMAGES: &str = r#"[{"image_id":"a","width":10,"height":8},{"image_id":"b","width":5,"height":5,"pixels_per_degree":30}]"#;

    fn bundle(csv: &str, excl: &[&str]) -> Result<DatasetBundle> {
        DatasetBundle::from_parts(
            parse_images_json(IMAGES).unwrap(),
            parse_fixations_csv(csv)?,
            excl.iter().map(|s| s.to_string()).collect(),
        )
    }

    #[test]
    fn three_subjects_parse() {
        let b = bundle("image_id,subject_id,x,y\na,s1,1,1\na,s2,2.5,3\na,s3,9.99,7.5\n", &[]).unwrap();
        let t = b.table("a").unwrap();
        assert_eq!(t.len(), 3);
        assert_eq!(t.subject_count(), 3);
        assert_eq!(b.crossvalidatable_images(), vec!["a"]);
    }

    #[test]
    fn exclusion_removes_image() {
        let b = bundle("image_id,subject_id,x,y\na,s1,1,1\na,s2,2,3\na,s3,4,4\n", &["a"]).unwrap();
        assert!(b.table("a").is_none());
        assert!(b.fixations.values().all(|t| t.is_empty()));
        let b = DatasetBundle::from_parts(
            parse_images_json(IMAGES).unwrap(),
            vec![],
            ["a", "b"].iter().map(|s| s.to_string()).collect(),
        )
        .unwrap();
        assert!(b.is_empty());
    }

    #[test]
    fn x_equal_width_is_out_of_bounds() {
        let err = bundle("image_id,subject_id,x,y\na,s1,1,1\na,s2,10,3\n", &[]).unwrap_err();
        match err {
            Error::OutOfBounds { image_id, line, .. } => {
                assert_eq!(image_id, "a");
                assert_eq!(line, 3);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let err = parse_fixations_csv("image_id,subject_id,x,y\na,s1,1,1\na,s2,abc,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_fixations_csv("image_id,subject_id,x,y\na,s1,1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        assert!(parse_fixations_csv("img,subject,x,y\n").is_err());
        assert!(parse_fixations_csv("image_id,subject_id,x,y\na,s1,NaN,1\n").is_err());
    }

    #[test]
    fn unknown_image_rejected() {
        assert!(bundle("image_id,subject_id,x,y\nzzz,s1,1,1\n", &[]).is_err());
    }

    #[test]
    fn single_subject_is_flagged() {
        let b = bundle("image_id,subject_id,x,y\na,s1,1,1\na,s1,2,2\n", &[]).unwrap();
        assert!(!b.table("a").unwrap().is_crossvalidatable());
        assert!(b.crossvalidatable_images().is_empty());
    }

    #[test]
    fn image_json_validation() {
        assert!(parse_images_json(r#"[{"image_id":"a","width":0,"height":3}]"#).is_err());
        assert!(parse_images_json(r#"[{"image_id":"a","width":2,"height":3,"pixels_per_degree":-1}]"#).is_err());
        assert!(parse_images_json(r#"[{"image_id":"a","width":2,"height":3},{"image_id":"a","width":2,"height":3}]"#).is_err());
        let imgs = parse_images_json(IMAGES).unwrap();
        assert_eq!(imgs[1].degrees_to_pixels(1.0).unwrap(), 30.0);
        assert!(imgs[0].degrees_to_pixels(1.0).is_err());
    }

    #[test]
    fn exclusion_list_format() {
        let set = parse_exclusion_list("a\n\n  b  \n# comment\n");
        assert_eq!(set.into_iter().collect::<Vec<_>>(), vec!["a", "b"]);
    }

    #[test]
    fn serialize_then_load_is_idempotent() {
        let csv = "image_id,subject_id,x,y\nb,s2,0.1,4.9\na,s1,1.25,1\na,s2,2,3.0000001\n";
        let b1 = bundle(csv, &[]).unwrap();
        let b2 = bundle(&b1.to_csv_string(), &[]).unwrap();
        assert_eq!(b1, b2);
        let b3 = bundle(&b2.to_csv_string(), &[]).unwrap();
        assert_eq!(b2.to_csv_string(), b3.to_csv_string());
        let imgs = parse_images_json(&b1.images_json_string().unwrap()).unwrap();
        assert_eq!(imgs, b1.images);
    }
}
