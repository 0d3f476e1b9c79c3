//! Image vectors, labelled datasets, and loaders for binary PGM folders and
//! flat CSV files.
//!
//! Two on-disk layouts are accepted:
//!
//! * a directory holding binary PGM (`P5`, maxval 255) images and a
//!   `manifest.csv` with header `filename,label[,subject]`;
//! * a single CSV file with header `label[,subject],<pixel columns...>`,
//!   one image per row.
//!
//! Label strings become codes `0..c` in order of first appearance.

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed PGM {name}: {reason}")]
    Pgm { name: String, reason: String },
    #[error("csv error: {0}")]
    Csv(String),
    #[error("manifest has no `{0}` column")]
    MissingColumn(&'static str),
    #[error("image dimensions differ: expected {expected:?}, found {found:?} in {name}")]
    MixedDimensions {
        expected: (usize, usize),
        found: (usize, usize),
        name: String,
    },
    #[error("row {row} has {found} fields, header declares {expected}")]
    FieldCount {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("ragged image matrix: row {row} has {found} entries, expected {expected}")]
    RaggedImage {
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("pixel value {value} outside [0, 255]")]
    PixelOutOfRange { value: i64 },
    #[error("label code {label} out of range for {classes} classes")]
    LabelOutOfRange { label: usize, classes: usize },
    #[error("sample {index} has {found} pixels, expected {expected}")]
    LengthMismatch {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("dataset is empty")]
    Empty,
}

/// A vectorized grayscale image.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct ImageVector(Vec<u8>);

impl ImageVector {
    pub fn new(pixels: Vec<u8>) -> Self {
        ImageVector(pixels)
    }

    pub fn pixels(&self) -> &[u8] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl From<Vec<u8>> for ImageVector {
    fn from(v: Vec<u8>) -> Self {
        ImageVector(v)
    }
}

/// Row-major concatenation of a 2-D grayscale matrix.
pub fn vectorize<T>(image: &[Vec<T>]) -> Result<ImageVector, DatasetError>
where
    T: Copy + Into<i64>,
{
    let cols = image.first().map_or(0, Vec::len);
    let mut pixels = Vec::with_capacity(image.len() * cols);
    for (row, r) in image.iter().enumerate() {
        if r.len() != cols {
            return Err(DatasetError::RaggedImage {
                row,
                expected: cols,
                found: r.len(),
            });
        }
        for &v in r {
            let v: i64 = v.into();
            let px = u8::try_from(v).map_err(|_| DatasetError::PixelOutOfRange { value: v })?;
            pixels.push(px);
        }
    }
    Ok(ImageVector(pixels))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub image: ImageVector,
    pub label: usize,
    pub subject: Option<u32>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Dataset {
    samples: Vec<Sample>,
    label_names: Vec<String>,
    shape: Option<(usize, usize)>,
}

impl Dataset {
    /// Validates that every sample has the same length and a label code
    /// within `label_names`.
    pub fn new(label_names: Vec<String>, samples: Vec<Sample>) -> Result<Self, DatasetError> {
        let n = samples.first().map(|s| s.image.len());
        for (index, s) in samples.iter().enumerate() {
            if Some(s.image.len()) != n {
                return Err(DatasetError::LengthMismatch {
                    index,
                    expected: n.unwrap_or(0),
                    found: s.image.len(),
                });
            }
            if s.label >= label_names.len() {
                return Err(DatasetError::LabelOutOfRange {
                    label: s.label,
                    classes: label_names.len(),
                });
            }
        }
        Ok(Dataset {
            samples,
            label_names,
            shape: None,
        })
    }

    /// Record the (width, height) the vectors were built from.
    pub fn with_shape(mut self, width: usize, height: usize) -> Self {
        self.shape = Some((width, height));
        self
    }

    pub fn shape(&self) -> Option<(usize, usize)> {
        self.shape
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Size of the label space, including labels with no samples.
    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn pixel_count(&self) -> usize {
        self.samples.first().map_or(0, |s| s.image.len())
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.label_names.len()];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        counts
    }

    /// Samples at `indices`, in that order, sharing this label table.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        Dataset {
            samples: indices.iter().map(|&i| self.samples[i].clone()).collect(),
            label_names: self.label_names.clone(),
            shape: self.shape,
        }
    }

    /// Every sample except the one at `index`.
    pub fn without(&self, index: usize) -> Dataset {
        let keep: Vec<usize> = (0..self.len()).filter(|&i| i != index).collect();
        self.select(&keep)
    }
}

/// Assigns label codes in order of first appearance.
#[derive(Default)]
struct LabelTable {
    names: Vec<String>,
    codes: HashMap<String, usize>,
}

impl LabelTable {
    fn code(&mut self, name: &str) -> usize {
        if let Some(&c) = self.codes.get(name) {
            return c;
        }
        let c = self.names.len();
        self.names.push(name.to_string());
        self.codes.insert(name.to_string(), c);
        c
    }
}

/// Load either layout; a directory must contain `manifest.csv`.
pub fn load_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    if path.is_dir() {
        load_pgm_folder(path, &path.join("manifest.csv"))
    } else {
        load_vector_csv(path)
    }
}

fn read(path: &Path) -> Result<Vec<u8>, DatasetError> {
    fs::read(path).map_err(|source| DatasetError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn csv_err(e: csv::Error) -> DatasetError {
    DatasetError::Csv(e.to_string())
}

/// Parse a binary PGM with maxval 255. Returns (width, height, pixels).
pub fn parse_pgm(name: &str, bytes: &[u8]) -> Result<(usize, usize, Vec<u8>), DatasetError> {
    let bad = |reason: &str| DatasetError::Pgm {
        name: name.to_string(),
        reason: reason.to_string(),
    };
    if bytes.len() < 2 || &bytes[..2] != b"P5" {
        return Err(bad("only binary P5 images are accepted"));
    }
    let mut pos = 2;
    let mut fields = [0usize; 3];
    for field in fields.iter_mut() {
        // whitespace and comments between header tokens
        loop {
            match bytes.get(pos) {
                Some(b) if b.is_ascii_whitespace() => pos += 1,
                Some(b'#') => {
                    while bytes.get(pos).is_some_and(|&b| b != b'\n') {
                        pos += 1;
                    }
                }
                Some(_) => break,
                None => return Err(bad("truncated header")),
            }
        }
        let start = pos;
        while bytes.get(pos).is_some_and(u8::is_ascii_digit) {
            pos += 1;
        }
        if start == pos {
            return Err(bad("expected a decimal header field"));
        }
        *field = std::str::from_utf8(&bytes[start..pos])
            .ok()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| bad("header field out of range"))?;
    }
    let [width, height, maxval] = fields;
    if maxval != 255 {
        return Err(bad("maxval must be 255"));
    }
    if width == 0 || height == 0 {
        return Err(bad("zero-sized image"));
    }
    // exactly one whitespace byte separates the header from the raster
    if !bytes.get(pos).is_some_and(u8::is_ascii_whitespace) {
        return Err(bad("missing raster separator"));
    }
    pos += 1;
    let size = width
        .checked_mul(height)
        .ok_or_else(|| bad("image too large"))?;
    let raster = bytes
        .get(pos..pos + size)
        .ok_or_else(|| bad("raster shorter than width*height"))?;
    Ok((width, height, raster.to_vec()))
}

/// Encode a binary PGM.
pub fn write_pgm(width: usize, height: usize, pixels: &[u8]) -> Vec<u8> {
    assert_eq!(width * height, pixels.len());
    let mut out = format!("P5\n{width} {height}\n255\n").into_bytes();
    out.extend_from_slice(pixels);
    out
}

pub fn load_pgm_folder(dir: &Path, manifest: &Path) -> Result<Dataset, DatasetError> {
    let text = read(manifest)?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_slice());
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let col = |name: &'static str| headers.iter().position(|h| h.eq_ignore_ascii_case(name));
    let file_col = col("filename").ok_or(DatasetError::MissingColumn("filename"))?;
    let label_col = col("label").ok_or(DatasetError::MissingColumn("label"))?;
    let subject_col = col("subject");

    let mut labels = LabelTable::default();
    let mut samples = Vec::new();
    let mut shape: Option<(usize, usize)> = None;
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let name = &record[file_col];
        let (w, h, pixels) = parse_pgm(name, &read(&dir.join(name))?)?;
        match shape {
            None => shape = Some((w, h)),
            Some(expected) if expected != (w, h) => {
                return Err(DatasetError::MixedDimensions {
                    expected,
                    found: (w, h),
                    name: name.to_string(),
                })
            }
            _ => {}
        }
        let subject = parse_subject(subject_col.map(|c| &record[c]))?;
        samples.push(Sample {
            image: ImageVector(pixels),
            label: labels.code(&record[label_col]),
            subject,
        });
    }
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    let (w, h) = shape.expect("nonempty");
    Ok(Dataset::new(labels.names, samples)?.with_shape(w, h))
}

fn parse_subject(field: Option<&str>) -> Result<Option<u32>, DatasetError> {
    match field {
        None | Some("") => Ok(None),
        Some(s) => s
            .parse()
            .map(Some)
            .map_err(|_| DatasetError::Csv(format!("subject `{s}` is not an unsigned integer"))),
    }
}

pub fn load_vector_csv(path: &Path) -> Result<Dataset, DatasetError> {
    let text = read(path)?;
    parse_vector_csv(&text)
}

pub fn parse_vector_csv(text: &[u8]) -> Result<Dataset, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(text);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    if !headers.get(0).is_some_and(|h| h.eq_ignore_ascii_case("label")) {
        return Err(DatasetError::MissingColumn("label"));
    }
    let has_subject = headers.get(1).is_some_and(|h| h.eq_ignore_ascii_case("subject"));
    let first_pixel = if has_subject { 2 } else { 1 };
    let expected = headers.len();

    let mut labels = LabelTable::default();
    let mut samples = Vec::new();
    for (row, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        if record.len() != expected {
            return Err(DatasetError::FieldCount {
                row: row + 1,
                expected,
                found: record.len(),
            });
        }
        let pixels = record
            .iter()
            .skip(first_pixel)
            .map(|f| {
                let v: i64 = f
                    .parse()
                    .map_err(|_| DatasetError::Csv(format!("row {}: `{f}` is not an integer", row + 1)))?;
                u8::try_from(v).map_err(|_| DatasetError::PixelOutOfRange { value: v })
            })
            .collect::<Result<Vec<u8>, _>>()?;
        let subject = parse_subject(has_subject.then(|| &record[1]))?;
        samples.push(Sample {
            image: ImageVector(pixels),
            label: labels.code(&record[0]),
            subject,
        });
    }
    if samples.is_empty() {
        return Err(DatasetError::Empty);
    }
    Dataset::new(labels.names, samples)
}

/// Parse one image: binary PGM when the bytes start with `P5`, otherwise
/// pixel values separated by commas or whitespace.
pub fn parse_image(name: &str, bytes: &[u8]) -> Result<ImageVector, DatasetError> {
    if bytes.starts_with(b"P") {
        return parse_pgm(name, bytes).map(|(_, _, px)| ImageVector(px));
    }
    let text = std::str::from_utf8(bytes)
        .map_err(|_| DatasetError::Csv(format!("{name}: not UTF-8 text")))?;
    let pixels = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|f| !f.is_empty())
        .map(|f| {
            let v: i64 = f
                .parse()
                .map_err(|_| DatasetError::Csv(format!("{name}: `{f}` is not an integer")))?;
            u8::try_from(v).map_err(|_| DatasetError::PixelOutOfRange { value: v })
        })
        .collect::<Result<Vec<u8>, _>>()?;
    if pixels.is_empty() {
        return Err(DatasetError::Empty);
    }
    Ok(ImageVector(pixels))
}

pub fn load_image(path: &Path) -> Result<ImageVector, DatasetError> {
    parse_image(&path.display().to_string(), &read(path)?)
}

/// Write a dataset in the vector CSV layout.
pub fn write_vector_csv(dataset: &Dataset) -> String {
    let mut out = String::from("label");
    let with_subject = dataset.samples.iter().any(|s| s.subject.is_some());
    if with_subject {
        out.push_str(",subject");
    }
    for j in 0..dataset.pixel_count() {
        out.push_str(&format!(",p{j}"));
    }
    out.push('\n');
    for s in &dataset.samples {
        out.push_str(&dataset.label_names[s.label]);
        if with_subject {
            out.push(',');
            if let Some(id) = s.subject {
                out.push_str(&id.to_string());
            }
        }
        for p in s.image.pixels() {
            out.push(',');
            out.push_str(&p.to_string());
        }
        out.push('\n');
    }
    out
}
