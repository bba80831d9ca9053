//! IDX files as used by MNIST: a big-endian `u32` magic (2051 for images,
//! 2049 for labels), big-endian `u32` dimension sizes, then unsigned bytes.

use std::fs;
use std::path::Path;

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 2051;
pub const IDX_LABELS_MAGIC: u32 = 2049;

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let chunk = bytes.get(offset..offset + 4).ok_or(Error::Length {
        expected: offset + 4,
        found: bytes.len(),
    })?;
    Ok(u32::from_be_bytes(chunk.try_into().unwrap()))
}

fn check_magic(bytes: &[u8], expected: u32, what: &str) -> Result<()> {
    let magic = read_u32(bytes, 0)?;
    if magic != expected {
        return Err(Error::Format(format!(
            "{what} file has magic number {magic}, expected {expected}"
        )));
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)`.
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    check_magic(bytes, IDX_IMAGES_MAGIC, "images")?;
    let count = read_u32(bytes, 4)? as usize;
    let rows = read_u32(bytes, 8)? as usize;
    let cols = read_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    Ok((count, rows, cols, &bytes[16..]))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<&[u8]> {
    check_magic(bytes, IDX_LABELS_MAGIC, "labels")?;
    let count = read_u32(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(Error::Length {
            expected,
            found: bytes.len(),
        });
    }
    Ok(&bytes[8..])
}

/// Loads an image/label file pair. Pixels are scaled by `1/255`; labels
/// must be below 10.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    let image_bytes = fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let label_bytes = fs::read(labels_path).map_err(|e| Error::io(labels_path, e))?;
    let (count, rows, cols, pixels) = parse_idx_images(&image_bytes)?;
    let labels = parse_idx_labels(&label_bytes)?;
    if labels.len() != count {
        return Err(Error::Consistency(format!(
            "{} holds {count} images but {} holds {} labels",
            images_path.display(),
            labels_path.display(),
            labels.len()
        )));
    }
    let data = pixels.iter().map(|&p| p as f64 / 255.0).collect();
    let images = Tensor::from_vec(&[count, 1, rows, cols], data)?;
    let name = images_path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "idx".into());
    Dataset::new(images, labels.iter().map(|&l| l as usize).collect(), 10, name)
}

/// IDX image bytes for a single-channel dataset; pixels are `round(255 x)`.
pub fn encode_idx_images(ds: &Dataset) -> Result<Vec<u8>> {
    let shape = ds.images.shape();
    if shape[1] != 1 {
        return Err(Error::Input(format!("IDX images must have one channel, got {}", shape[1])));
    }
    let mut out = Vec::with_capacity(16 + ds.images.len());
    for v in [IDX_IMAGES_MAGIC, shape[0] as u32, shape[2] as u32, shape[3] as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend(ds.images.data().iter().map(|&v| (v * 255.0).round() as u8));
    Ok(out)
}

pub fn encode_idx_labels(ds: &Dataset) -> Result<Vec<u8>> {
    if ds.labels.iter().any(|&l| l > u8::MAX as usize) {
        return Err(Error::Input("IDX labels must fit in a byte".into()));
    }
    let mut out = Vec::with_capacity(8 + ds.len());
    out.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    out.extend(ds.labels.iter().map(|&l| l as u8));
    Ok(out)
}

pub fn write_mnist_idx(ds: &Dataset, images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<()> {
    let images_path = images_path.as_ref();
    let labels_path = labels_path.as_ref();
    fs::write(images_path, encode_idx_images(ds)?).map_err(|e| Error::io(images_path, e))?;
    fs::write(labels_path, encode_idx_labels(ds)?).map_err(|e| Error::io(labels_path, e))?;
    Ok(())
}
