//! Integer quantization of a trained model and the exact-integer classifier
//! that the encrypted protocol reproduces.

use thiserror::Error;

use crate::dataset::ImageVector;
use crate::flda::{argmin_lowest, TrainedModel};

/// Largest accepted scale; keeps `S * w` exactly representable as a double.
pub const MAX_SCALE: u64 = 1 << 40;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum QuantizeError {
    #[error("scale must be in 1..={MAX_SCALE}, got {0}")]
    InvalidScale(u64),
    #[error("quantized values overflow 64-bit integers")]
    Overflow,
    #[error("expected a vector of length {expected}, got {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("quantized model is inconsistent: {0}")]
    Inconsistent(String),
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedEntry {
    pub features: Vec<i64>,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedModel {
    pub scale: u64,
    /// `m_out x n`, entry `round(S * w)`.
    pub q_projection: Vec<Vec<i64>>,
    pub q_mean: Vec<i64>,
    pub q_gallery: Vec<QuantizedEntry>,
    /// Distance bit-bound: every reachable squared distance is below `2^l`.
    pub l: u32,
    /// `label_names[code]` is the class name for label code `code`.
    pub label_names: Vec<String>,
    /// Training images behind `q_gallery`, kept so the gallery can be
    /// recomputed on load. May be empty.
    pub gallery_images: Vec<ImageVector>,
}

/// Round half away from zero to an integer.
pub fn round_half_away(x: f64) -> Option<i64> {
    let r = x.round();
    if r.is_finite() && r.abs() < 9.2e18 {
        Some(r as i64)
    } else {
        None
    }
}

pub fn quantize_model(model: &TrainedModel, scale: u64) -> Result<QuantizedModel, QuantizeError> {
    if scale == 0 || scale > MAX_SCALE {
        return Err(QuantizeError::InvalidScale(scale));
    }
    let s = scale as f64;
    let q_projection = model
        .projection
        .iter()
        .map(|row| {
            row.iter()
                .map(|&w| round_half_away(s * w).ok_or(QuantizeError::Overflow))
                .collect::<Result<Vec<i64>, _>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    let q_mean: Vec<i64> = (0..model.mean.len()).map(|j| model.mean.rounded(j)).collect();
    omega_bound(&q_projection)?;

    let q_gallery = model
        .training
        .iter()
        .zip(&model.gallery)
        .map(|(image, entry)| {
            Ok(QuantizedEntry {
                features: integer_project(&q_projection, &q_mean, image)?,
                label: entry.label,
            })
        })
        .collect::<Result<Vec<_>, QuantizeError>>()?;

    let mut q = QuantizedModel {
        scale,
        q_projection,
        q_mean,
        q_gallery,
        l: 0,
        label_names: model.label_names.clone(),
        gallery_images: model.training.clone(),
    };
    q.l = distance_bitbound(&q)?;
    Ok(q)
}

/// `max_i sum_j |q_projection[i][j]| * 255`.
pub fn omega_bound(q_projection: &[Vec<i64>]) -> Result<u64, QuantizeError> {
    let mut best = 0u64;
    for row in q_projection {
        let mut sum = 0u64;
        for &w in row {
            sum = sum
                .checked_add(w.unsigned_abs())
                .ok_or(QuantizeError::Overflow)?;
        }
        let bound = sum.checked_mul(255).ok_or(QuantizeError::Overflow)?;
        if bound > i64::MAX as u64 {
            return Err(QuantizeError::Overflow);
        }
        best = best.max(bound);
    }
    Ok(best)
}

/// `l = ceil(log2(m_out * (omega_bound + y_bound)^2 + 1))`, at least 1.
pub fn distance_bitbound(q: &QuantizedModel) -> Result<u32, QuantizeError> {
    let omega = omega_bound(&q.q_projection)? as u128;
    let y = q
        .q_gallery
        .iter()
        .flat_map(|e| e.features.iter())
        .map(|v| v.unsigned_abs() as u128)
        .max()
        .unwrap_or(0);
    let reach = omega.checked_add(y).ok_or(QuantizeError::Overflow)?;
    let worst = reach
        .checked_mul(reach)
        .and_then(|sq| sq.checked_mul(q.q_projection.len() as u128))
        .ok_or(QuantizeError::Overflow)?;
    Ok((128 - worst.leading_zeros()).max(1))
}

/// `q_projection * (v - q_mean)` in exact integer arithmetic.
pub fn integer_project(
    q_projection: &[Vec<i64>],
    q_mean: &[i64],
    v: &ImageVector,
) -> Result<Vec<i64>, QuantizeError> {
    if v.len() != q_mean.len() {
        return Err(QuantizeError::DimensionMismatch {
            expected: q_mean.len(),
            found: v.len(),
        });
    }
    q_projection
        .iter()
        .map(|row| {
            let acc: i128 = row
                .iter()
                .zip(v.pixels().iter().zip(q_mean))
                .map(|(&w, (&x, &m))| w as i128 * (x as i128 - m as i128))
                .sum();
            i64::try_from(acc).map_err(|_| QuantizeError::Overflow)
        })
        .collect()
}

pub fn squared_distance(a: &[i64], b: &[i64]) -> u128 {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = (x as i128 - y as i128).unsigned_abs();
            d * d
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QuantizedDecision {
    pub label: usize,
    pub index: usize,
    pub features: Vec<i64>,
    pub distances: Vec<u128>,
}

impl QuantizedModel {
    pub fn pixel_count(&self) -> usize {
        self.q_mean.len()
    }

    pub fn m_out(&self) -> usize {
        self.q_projection.len()
    }

    pub fn class_count(&self) -> usize {
        self.label_names.len()
    }

    pub fn project(&self, v: &ImageVector) -> Result<Vec<i64>, QuantizeError> {
        integer_project(&self.q_projection, &self.q_mean, v)
    }

    pub fn classify(&self, v: &ImageVector) -> Result<QuantizedDecision, QuantizeError> {
        if self.q_gallery.is_empty() {
            return Err(QuantizeError::Inconsistent("gallery is empty".into()));
        }
        let features = self.project(v)?;
        let distances: Vec<u128> = self
            .q_gallery
            .iter()
            .map(|e| squared_distance(&features, &e.features))
            .collect();
        let index = argmin_lowest(&distances).expect("nonempty gallery");
        Ok(QuantizedDecision {
            label: self.q_gallery[index].label,
            index,
            features,
            distances,
        })
    }

    /// Structural checks used after loading a model from disk.
    pub fn validate(&self) -> Result<(), QuantizeError> {
        let bad = |m: &str| Err(QuantizeError::Inconsistent(m.into()));
        if self.scale == 0 || self.scale > MAX_SCALE {
            return Err(QuantizeError::InvalidScale(self.scale));
        }
        let n = self.q_mean.len();
        if n == 0 || self.q_projection.is_empty() || self.q_gallery.is_empty() {
            return bad("empty projection, mean or gallery");
        }
        if self.q_mean.iter().any(|&m| !(0..=255).contains(&m)) {
            return bad("mean component outside 0..=255");
        }
        if self.q_projection.iter().any(|r| r.len() != n) {
            return bad("projection rows do not match the mean length");
        }
        let omega = omega_bound(&self.q_projection)?;
        for e in &self.q_gallery {
            if e.features.len() != self.m_out() {
                return bad("gallery feature length differs from projection rows");
            }
            if e.label >= self.class_count() {
                return bad("gallery label has no name");
            }
            if e.features.iter().any(|f| f.unsigned_abs() > omega) {
                return bad("gallery feature exceeds the projection bound");
            }
        }
        if !self.gallery_images.is_empty() {
            if self.gallery_images.len() != self.q_gallery.len() {
                return bad("gallery image count differs from gallery size");
            }
            for (i, (img, e)) in self.gallery_images.iter().zip(&self.q_gallery).enumerate() {
                if self.project(img)? != e.features {
                    return Err(QuantizeError::Inconsistent(format!(
                        "gallery entry {i} does not match its training image"
                    )));
                }
            }
        }
        if distance_bitbound(self)? != self.l {
            return bad("stored distance bit-bound does not match the model");
        }
        Ok(())
    }
}

/// Exact-integer nearest-neighbour label.
pub fn classify_plain_quantized(q: &QuantizedModel, v: &ImageVector) -> Result<usize, QuantizeError> {
    Ok(q.classify(v)?.label)
}
