//! IDX image/label files (the MNIST distribution format).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().expect("4 bytes")))
        .ok_or_else(|| Error::Idx("file too short for its header".into()))
}

fn check_magic(bytes: &[u8], expected: u32) -> Result<()> {
    let found = be_u32(bytes, 0)?;
    if found != expected {
        return Err(Error::Idx(format!(
            "magic {found:#010x}, expected {expected:#010x}"
        )));
    }
    Ok(())
}

/// Parses in-memory IDX images and labels into an `N x 1 x rows x cols`
/// dataset with pixels scaled to `[0, 1]`.
pub fn parse_idx(images: &[u8], labels: &[u8], num_classes: usize) -> Result<Dataset> {
    check_magic(images, IMAGES_MAGIC)?;
    check_magic(labels, LABELS_MAGIC)?;
    let n = be_u32(images, 4)? as usize;
    let rows = be_u32(images, 8)? as usize;
    let cols = be_u32(images, 12)? as usize;
    let n_labels = be_u32(labels, 4)? as usize;
    if n != n_labels {
        return Err(Error::Idx(format!("{n} images but {n_labels} labels")));
    }
    let pixels = &images[16..];
    if pixels.len() != n * rows * cols {
        return Err(Error::Idx(format!(
            "{} pixel bytes for {n} images of {rows}x{cols}",
            pixels.len()
        )));
    }
    let label_bytes = &labels[8..];
    if label_bytes.len() != n {
        return Err(Error::Idx(format!("{} label bytes for {n} labels", label_bytes.len())));
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let inputs = Tensor::new(vec![n, 1, rows, cols], data)?;
    let labels = label_bytes.iter().map(|&l| usize::from(l)).collect();
    Dataset::new(inputs, labels, num_classes)
}

/// Loads a 10-class IDX pair from disk.
pub fn load_idx(path_images: impl AsRef<Path>, path_labels: impl AsRef<Path>) -> Result<Dataset> {
    let read = |p: &Path| fs::read(p).map_err(|e| Error::io(p, e));
    parse_idx(&read(path_images.as_ref())?, &read(path_labels.as_ref())?, 10)
}

/// Serializes `data` as an IDX pair; pixels are rounded to `k / 255`.
///
/// Samples must be single-channel images.
pub fn encode_idx(data: &Dataset) -> Result<(Vec<u8>, Vec<u8>)> {
    let (rows, cols) = match data.sample_shape() {
        [1, r, c] => (*r, *c),
        other => {
            return Err(Error::Idx(format!(
                "sample shape {other:?} is not a single-channel image"
            )))
        }
    };
    if data.labels().iter().any(|&l| l > 255) {
        return Err(Error::Idx("labels must fit in one byte".into()));
    }
    let mut images = Vec::with_capacity(16 + data.inputs().len());
    for v in [IMAGES_MAGIC, data.len() as u32, rows as u32, cols as u32] {
        images.extend_from_slice(&v.to_be_bytes());
    }
    images.extend(
        data.inputs()
            .data()
            .iter()
            .map(|&v| (v.clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    let mut labels = Vec::with_capacity(8 + data.len());
    labels.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    labels.extend_from_slice(&(data.len() as u32).to_be_bytes());
    labels.extend(data.labels().iter().map(|&l| l as u8));
    Ok((images, labels))
}

pub fn write_idx(
    data: &Dataset,
    path_images: impl AsRef<Path>,
    path_labels: impl AsRef<Path>,
) -> Result<()> {
    let (images, labels) = encode_idx(data)?;
    let write = |p: &Path, b: &[u8]| fs::write(p, b).map_err(|e| Error::io(p, e));
    write(path_images.as_ref(), &images)?;
    write(path_labels.as_ref(), &labels)
}
