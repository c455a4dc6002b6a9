//! IDX binary files as distributed for MNIST.
//!
//! Layout: a big-endian `u32` magic (`0x00000803` for rank-3 image tensors,
//! `0x00000801` for rank-1 label vectors), one big-endian `u32` per
//! dimension, then the unsigned bytes in row-major order.

use std::fs;
use std::io::Write;
use std::path::Path;

use psgd_core::Dataset;

use crate::SimError;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image file: `count` images of `rows x cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn parse(bytes: &[u8], magic: u32, rank: usize) -> Result<(Vec<usize>, &[u8]), String> {
    let header = 4 * (rank + 1);
    if bytes.len() < header {
        return Err(format!("file is {} bytes, shorter than its {header}-byte header", bytes.len()));
    }
    let word = |i: usize| u32::from_be_bytes(bytes[4 * i..4 * i + 4].try_into().unwrap());
    if word(0) != magic {
        return Err(format!("magic {:#010x}, expected {magic:#010x}", word(0)));
    }
    let dims: Vec<usize> = (1..=rank).map(|i| word(i) as usize).collect();
    let expected = dims.iter().product::<usize>();
    let body = &bytes[header..];
    if body.len() != expected {
        return Err(format!("dimensions {dims:?} need {expected} data bytes, found {}", body.len()));
    }
    Ok((dims, body))
}

pub fn parse_images(bytes: &[u8]) -> Result<IdxImages, String> {
    let (dims, body) = parse(bytes, IMAGES_MAGIC, 3)?;
    if dims[1] == 0 || dims[2] == 0 {
        return Err("image rows and columns must be positive".into());
    }
    Ok(IdxImages { count: dims[0], rows: dims[1], cols: dims[2], pixels: body.to_vec() })
}

pub fn parse_labels(bytes: &[u8]) -> Result<Vec<u8>, String> {
    let (_, body) = parse(bytes, LABELS_MAGIC, 1)?;
    Ok(body.to_vec())
}

fn read(path: &Path) -> Result<Vec<u8>, SimError> {
    fs::read(path).map_err(|e| SimError::io(path, e))
}

/// Load an image/label file pair as a regression dataset: pixels scaled to
/// `[0, 1]` by dividing by 255 and flattened to `rows * cols` features, the
/// digit value as the real-valued label. `limit` keeps the first samples.
pub fn load_idx(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset, SimError> {
    let imgs = parse_images(&read(images)?).map_err(|message| SimError::Format { path: images.into(), message })?;
    let labs = parse_labels(&read(labels)?).map_err(|message| SimError::Format { path: labels.into(), message })?;
    if imgs.count != labs.len() {
        return Err(SimError::Consistency(format!("{} images but {} labels", imgs.count, labs.len())));
    }
    let n = limit.map_or(imgs.count, |l| l.min(imgs.count));
    if n == 0 {
        return Err(SimError::Config("IDX input selects no samples".into()));
    }
    let dim = imgs.rows * imgs.cols;
    let features = imgs.pixels[..n * dim].iter().map(|&p| f64::from(p) / 255.0).collect();
    let labels = labs[..n].iter().map(|&l| f64::from(l)).collect();
    Ok(Dataset::new(features, labels, dim)?)
}

pub fn encode_images(images: &IdxImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    for word in [IMAGES_MAGIC, images.count as u32, images.rows as u32, images.cols as u32] {
        out.extend_from_slice(&word.to_be_bytes());
    }
    out.extend_from_slice(&images.pixels);
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

/// Write an image/label pair in IDX format.
pub fn write_idx(images_path: &Path, labels_path: &Path, images: &IdxImages, labels: &[u8]) -> Result<(), SimError> {
    for (path, bytes) in [(images_path, encode_images(images)), (labels_path, encode_labels(labels))] {
        let mut f = fs::File::create(path).map_err(|e| SimError::io(path, e))?;
        f.write_all(&bytes).map_err(|e| SimError::io(path, e))?;
    }
    Ok(())
}
