//! STL-10 binary format.
//!
//! Each image is 96x96x3 bytes stored as three contiguous colour planes
//! (red, green, blue); each plane is column-major. Label files hold one byte
//! per image with classes numbered 1..=10.

use std::fs;
use std::path::Path;

use crate::data::{Dataset, Example, OriginId};
use crate::error::{Error, Result};

pub const STL10_SIDE: usize = 96;
pub const STL10_CHANNELS: usize = 3;
pub const STL10_CLASSES: usize = 10;
pub const STL10_RECORD_BYTES: usize = STL10_SIDE * STL10_SIDE * STL10_CHANNELS;

/// Loads an STL-10 image file and optional label file. Feature order follows
/// the file's byte order, scaled to [0, 1]. Ids are assigned sequentially from
/// `first_id`.
pub fn load_stl10(images_path: &Path, labels_path: Option<&Path>, first_id: OriginId) -> Result<Dataset> {
    let images = fs::read(images_path)?;
    let labels = labels_path.map(fs::read).transpose()?;
    parse_stl10(&images, labels.as_deref(), first_id)
}

pub fn parse_stl10(images: &[u8], labels: Option<&[u8]>, first_id: OriginId) -> Result<Dataset> {
    if !images.len().is_multiple_of(STL10_RECORD_BYTES) {
        return Err(Error::TruncatedStl10 { len: images.len(), record: STL10_RECORD_BYTES });
    }
    let count = images.len() / STL10_RECORD_BYTES;
    if let Some(labels) = labels {
        if labels.len() != count {
            return Err(Error::Stl10LabelCount { labels: labels.len(), images: count });
        }
    }
    let mut examples = Vec::with_capacity(count);
    for (index, record) in images.chunks_exact(STL10_RECORD_BYTES).enumerate() {
        let features: Vec<f64> = record.iter().map(|&b| f64::from(b) / 255.0).collect();
        let id = first_id + index as OriginId;
        let example = match labels {
            Some(labels) => {
                let byte = labels[index];
                if !(1..=STL10_CLASSES as u8).contains(&byte) {
                    return Err(Error::InvalidLabelByte { byte, index });
                }
                Example::labeled(id, features, usize::from(byte - 1))
            }
            None => Example::unlabeled(id, features),
        };
        examples.push(example);
    }
    Dataset::new(examples, STL10_RECORD_BYTES, STL10_CLASSES)
}

/// Inverse of [`parse_stl10`] for the image bytes.
pub fn encode_stl10_images(dataset: &Dataset) -> Result<Vec<u8>> {
    if dataset.feature_dim() != STL10_RECORD_BYTES {
        return Err(Error::DimensionMismatch { expected: STL10_RECORD_BYTES, found: dataset.feature_dim() });
    }
    Ok(dataset
        .iter()
        .flat_map(|ex| ex.features().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
        .collect())
}

pub fn encode_stl10_labels(dataset: &Dataset) -> Result<Vec<u8>> {
    dataset
        .iter()
        .map(|ex| {
            ex.class()
                .map(|c| c as u8 + 1)
                .ok_or(Error::Unlabeled(ex.origin_id()))
        })
        .collect()
}
