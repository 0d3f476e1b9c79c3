//! JSON files for trained and quantized models.
//!
//! Trained model (`"format": "cipherface-trained"`):
//!
//! ```text
//! {
//!   "format": "cipherface-trained", "version": 1,
//!   "dims": { "n": 144, "m_pca": 21, "m_out": 2 },
//!   "label_names": ["DI", "FE", "HA"],
//!   "mean": { "sums": ["1234", ...], "count": "24" },
//!   "projection": [["-1.2345678901234567e-2", ...], ...],
//!   "gallery": [{ "label": 0, "features": ["3.1e0", ...] }, ...],
//!   "training": [[12, 255, ...], ...]
//! }
//! ```
//!
//! The mean is exact: component `j` is `sums[j] / count`. Reals are written
//! with 17 significant digits so they parse back to the same double.
//!
//! Quantized model (`"format": "cipherface-quantized"`), every integer a
//! decimal string:
//!
//! ```text
//! {
//!   "format": "cipherface-quantized", "version": 1,
//!   "scale": "100", "l": "19", "n": "144", "m_out": "2",
//!   "label_codes": [{ "code": "0", "name": "DI" }, ...],
//!   "q_projection": [["-3", "12", ...], ...],
//!   "q_mean": ["118", ...],
//!   "q_gallery": [{ "label": "0", "features": ["-5120", ...] }, ...],
//!   "gallery_images": [["12", "255", ...], ...]
//! }
//! ```
//!
//! Loading validates the whole model, including recomputing every gallery
//! entry from its training image.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::ImageVector;
use crate::flda::{project, Dims, FeatureVector, FldaError, GalleryEntry, MeanVector, TrainedModel};
use crate::paillier::{PaillierError, PrivateKey, PublicKey};
use crate::quantizer::{QuantizeError, QuantizedEntry, QuantizedModel};

pub const MODEL_FILE_VERSION: u64 = 1;
pub const TRAINED_FORMAT: &str = "cipherface-trained";
pub const QUANTIZED_FORMAT: &str = "cipherface-quantized";

#[derive(Debug, Error)]
pub enum ModelIoError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("expected a {expected} file, found {found:?}")]
    Format { expected: &'static str, found: String },
    #[error("unsupported model file version {found} (expected {MODEL_FILE_VERSION})")]
    Version { found: u64 },
    #[error("schema violation: {0}")]
    Schema(String),
    #[error(transparent)]
    Flda(#[from] FldaError),
    #[error(transparent)]
    Quantize(#[from] QuantizeError),
    #[error(transparent)]
    Key(#[from] PaillierError),
}

fn schema(msg: impl Into<String>) -> ModelIoError {
    ModelIoError::Schema(msg.into())
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct DimsFile {
    n: usize,
    m_pca: usize,
    m_out: usize,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MeanFile {
    sums: Vec<String>,
    count: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GalleryFile {
    label: usize,
    features: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TrainedFile {
    format: String,
    version: u64,
    dims: DimsFile,
    label_names: Vec<String>,
    mean: MeanFile,
    projection: Vec<Vec<String>>,
    gallery: Vec<GalleryFile>,
    training: Vec<Vec<u8>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelCode {
    code: String,
    name: String,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantizedEntryFile {
    label: String,
    features: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct QuantizedFile {
    format: String,
    version: u64,
    scale: String,
    l: String,
    n: String,
    m_out: String,
    label_codes: Vec<LabelCode>,
    q_projection: Vec<Vec<String>>,
    q_mean: Vec<String>,
    q_gallery: Vec<QuantizedEntryFile>,
    gallery_images: Vec<Vec<String>>,
}

/// Shortest form is not required; 17 significant digits always round-trip.
fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_real(s: &str) -> Result<f64, ModelIoError> {
    let x: f64 = s
        .parse()
        .map_err(|_| schema(format!("{s:?} is not a decimal real")))?;
    if !x.is_finite() {
        return Err(schema(format!("{s:?} is not finite")));
    }
    Ok(x)
}

fn parse_int<T: std::str::FromStr>(what: &str, s: &str) -> Result<T, ModelIoError> {
    let digits = s.strip_prefix('-').unwrap_or(s);
    if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
        return Err(schema(format!("{what}: {s:?} is not a decimal integer")));
    }
    s.parse()
        .map_err(|_| schema(format!("{what}: {s:?} is out of range")))
}

/// Reads `format` and `version` before the full schema so a newer file
/// reports its version rather than an unrelated field error.
fn check_header(text: &str, expected: &'static str) -> Result<(), ModelIoError> {
    let value: serde_json::Value =
        serde_json::from_str(text).map_err(|e| ModelIoError::Json(e.to_string()))?;
    let format = value.get("format").and_then(|f| f.as_str()).unwrap_or("");
    if format != expected {
        return Err(ModelIoError::Format {
            expected,
            found: format.to_string(),
        });
    }
    match value.get("version").and_then(|v| v.as_u64()) {
        Some(MODEL_FILE_VERSION) => Ok(()),
        Some(found) => Err(ModelIoError::Version { found }),
        None => Err(schema("missing or non-integer version")),
    }
}

pub fn trained_to_json(model: &TrainedModel) -> String {
    let file = TrainedFile {
        format: TRAINED_FORMAT.into(),
        version: MODEL_FILE_VERSION,
        dims: DimsFile {
            n: model.mean.len(),
            m_pca: model.dims.m_pca,
            m_out: model.dims.m_out,
        },
        label_names: model.label_names.clone(),
        mean: MeanFile {
            sums: model.mean.sums().iter().map(u64::to_string).collect(),
            count: model.mean.count().to_string(),
        },
        projection: model
            .projection
            .iter()
            .map(|row| row.iter().map(|&w| format_real(w)).collect())
            .collect(),
        gallery: model
            .gallery
            .iter()
            .map(|g| GalleryFile {
                label: g.label,
                features: g.features.0.iter().map(|&x| format_real(x)).collect(),
            })
            .collect(),
        training: model.training.iter().map(|v| v.pixels().to_vec()).collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

pub fn trained_from_json(text: &str) -> Result<TrainedModel, ModelIoError> {
    check_header(text, TRAINED_FORMAT)?;
    let file: TrainedFile =
        serde_json::from_str(text).map_err(|e| ModelIoError::Json(e.to_string()))?;
    let n = file.dims.n;
    let sums = file
        .mean
        .sums
        .iter()
        .map(|s| parse_int::<u64>("mean", s))
        .collect::<Result<Vec<_>, _>>()?;
    if sums.len() != n || n == 0 {
        return Err(schema("mean length differs from n"));
    }
    let mean = MeanVector::from_parts(sums, parse_int("mean count", &file.mean.count)?)?;

    if file.projection.len() != file.dims.m_out || file.dims.m_out == 0 {
        return Err(schema("projection row count differs from m_out"));
    }
    let projection = file
        .projection
        .iter()
        .map(|row| {
            if row.len() != n {
                return Err(schema("projection row length differs from n"));
            }
            row.iter().map(|s| parse_real(s)).collect()
        })
        .collect::<Result<Vec<Vec<f64>>, _>>()?;

    let classes = file.label_names.len();
    let gallery = file
        .gallery
        .iter()
        .map(|g| {
            if g.label >= classes {
                return Err(schema(format!("gallery label {} has no name", g.label)));
            }
            if g.features.len() != file.dims.m_out {
                return Err(schema("gallery feature length differs from m_out"));
            }
            let features = g.features.iter().map(|s| parse_real(s)).collect::<Result<_, _>>()?;
            Ok(GalleryEntry {
                features: FeatureVector(features),
                label: g.label,
            })
        })
        .collect::<Result<Vec<_>, ModelIoError>>()?;
    if gallery.is_empty() || file.training.len() != gallery.len() {
        return Err(schema("gallery and training image counts differ"));
    }
    if file.training.iter().any(|t| t.len() != n) {
        return Err(schema("training image length differs from n"));
    }

    let model = TrainedModel {
        mean,
        projection,
        gallery,
        dims: Dims {
            m_pca: file.dims.m_pca,
            m_out: file.dims.m_out,
        },
        label_names: file.label_names,
        training: file.training.into_iter().map(ImageVector::new).collect(),
    };
    for (i, (img, entry)) in model.training.iter().zip(&model.gallery).enumerate() {
        if project(&model, img)? != entry.features {
            return Err(schema(format!(
                "gallery entry {i} does not match its training image"
            )));
        }
    }
    Ok(model)
}

fn int_strings(v: &[i64]) -> Vec<String> {
    v.iter().map(i64::to_string).collect()
}

pub fn quantized_to_json(model: &QuantizedModel) -> String {
    let file = QuantizedFile {
        format: QUANTIZED_FORMAT.into(),
        version: MODEL_FILE_VERSION,
        scale: model.scale.to_string(),
        l: model.l.to_string(),
        n: model.pixel_count().to_string(),
        m_out: model.m_out().to_string(),
        label_codes: model
            .label_names
            .iter()
            .enumerate()
            .map(|(code, name)| LabelCode {
                code: code.to_string(),
                name: name.clone(),
            })
            .collect(),
        q_projection: model.q_projection.iter().map(|r| int_strings(r)).collect(),
        q_mean: int_strings(&model.q_mean),
        q_gallery: model
            .q_gallery
            .iter()
            .map(|e| QuantizedEntryFile {
                label: e.label.to_string(),
                features: int_strings(&e.features),
            })
            .collect(),
        gallery_images: model
            .gallery_images
            .iter()
            .map(|v| v.pixels().iter().map(u8::to_string).collect())
            .collect(),
    };
    serde_json::to_string_pretty(&file).expect("model serializes")
}

fn parse_ints(what: &str, v: &[String]) -> Result<Vec<i64>, ModelIoError> {
    v.iter().map(|s| parse_int(what, s)).collect()
}

pub fn quantized_from_json(text: &str) -> Result<QuantizedModel, ModelIoError> {
    check_header(text, QUANTIZED_FORMAT)?;
    let file: QuantizedFile =
        serde_json::from_str(text).map_err(|e| ModelIoError::Json(e.to_string()))?;
    let n: usize = parse_int("n", &file.n)?;
    let m_out: usize = parse_int("m_out", &file.m_out)?;

    let mut label_names = Vec::with_capacity(file.label_codes.len());
    for (i, lc) in file.label_codes.iter().enumerate() {
        if parse_int::<usize>("label code", &lc.code)? != i {
            return Err(schema("label codes must be 0, 1, 2, ... in order"));
        }
        label_names.push(lc.name.clone());
    }

    let q_projection = file
        .q_projection
        .iter()
        .map(|r| parse_ints("q_projection", r))
        .collect::<Result<Vec<_>, _>>()?;
    let q_gallery = file
        .q_gallery
        .iter()
        .map(|e| {
            let label: usize = parse_int("gallery label", &e.label)?;
            if label >= label_names.len() {
                return Err(schema(format!("gallery label {label} has no name")));
            }
            Ok(QuantizedEntry {
                features: parse_ints("gallery feature", &e.features)?,
                label,
            })
        })
        .collect::<Result<Vec<_>, ModelIoError>>()?;
    let gallery_images = file
        .gallery_images
        .iter()
        .map(|img| {
            img.iter()
                .map(|s| parse_int::<u8>("pixel", s))
                .collect::<Result<Vec<u8>, _>>()
                .map(ImageVector::new)
        })
        .collect::<Result<Vec<_>, _>>()?;

    let model = QuantizedModel {
        scale: parse_int("scale", &file.scale)?,
        q_projection,
        q_mean: parse_ints("q_mean", &file.q_mean)?,
        q_gallery,
        l: parse_int("l", &file.l)?,
        label_names,
        gallery_images,
    };
    if model.pixel_count() != n || model.m_out() != m_out {
        return Err(schema("declared n or m_out differs from the arrays"));
    }
    if model.gallery_images.iter().any(|v| v.len() != n) {
        return Err(schema("gallery image length differs from n"));
    }
    model.validate()?;
    Ok(model)
}

fn read(path: &Path) -> Result<String, ModelIoError> {
    fs::read_to_string(path).map_err(|e| ModelIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

fn write(path: &Path, text: &str) -> Result<(), ModelIoError> {
    fs::write(path, text).map_err(|e| ModelIoError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })
}

pub fn save_trained(path: &Path, model: &TrainedModel) -> Result<(), ModelIoError> {
    write(path, &trained_to_json(model))
}

pub fn load_trained(path: &Path) -> Result<TrainedModel, ModelIoError> {
    trained_from_json(&read(path)?)
}

pub fn save_quantized(path: &Path, model: &QuantizedModel) -> Result<(), ModelIoError> {
    write(path, &quantized_to_json(model))
}

pub fn load_quantized(path: &Path) -> Result<QuantizedModel, ModelIoError> {
    quantized_from_json(&read(path)?)
}

pub fn save_public_key(path: &Path, pk: &PublicKey) -> Result<(), ModelIoError> {
    write(path, &pk.to_json())
}

pub fn load_public_key(path: &Path) -> Result<PublicKey, ModelIoError> {
    Ok(PublicKey::from_json(&read(path)?)?)
}

pub fn save_private_key(path: &Path, sk: &PrivateKey) -> Result<(), ModelIoError> {
    write(path, &sk.to_json())
}

pub fn load_private_key(path: &Path) -> Result<PrivateKey, ModelIoError> {
    Ok(PrivateKey::from_json(&read(path)?)?)
}
