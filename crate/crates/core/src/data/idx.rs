use std::path::Path;

use super::{Dataset, Task};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or_else(|| Error::format(format!("{what}: truncated header")))
}

/// Reads an IDX image/label file pair (uncompressed), flattening each image row-major and
/// scaling pixels to `[0, 1]`. The task has 10 classes unless a label ≥ 10 appears.
pub fn load_idx_images(images_path: &Path, labels_path: &Path, limit: Option<usize>) -> Result<Dataset> {
    let images = std::fs::read(images_path)?;
    let labels = std::fs::read(labels_path)?;
    let magic = be_u32(&images, 0, "images")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::format(format!("images: bad magic {magic:#010x}")));
    }
    let magic = be_u32(&labels, 0, "labels")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::format(format!("labels: bad magic {magic:#010x}")));
    }
    let n_images = be_u32(&images, 4, "images")? as usize;
    let rows = be_u32(&images, 8, "images")? as usize;
    let cols = be_u32(&images, 12, "images")? as usize;
    let n_labels = be_u32(&labels, 4, "labels")? as usize;
    if n_images != n_labels {
        return Err(Error::format(format!("{n_images} images but {n_labels} labels")));
    }
    let d = rows * cols;
    if images.len() != 16 + n_images * d {
        return Err(Error::format(format!(
            "images: expected {} bytes, found {}",
            16 + n_images * d,
            images.len()
        )));
    }
    if labels.len() != 8 + n_labels {
        return Err(Error::format(format!(
            "labels: expected {} bytes, found {}",
            8 + n_labels,
            labels.len()
        )));
    }
    let n = limit.map_or(n_images, |l| l.min(n_images));
    let inputs = Matrix::from_fn(n, d, |i, j| images[16 + i * d + j] as f64 / 255.0);
    let label_bytes = &labels[8..8 + n];
    let classes = label_bytes.iter().map(|&l| l as usize + 1).max().unwrap_or(0).max(10);
    let targets = Matrix::from_fn(n, 1, |i, _| label_bytes[i] as f64);
    Dataset::new(inputs, targets, Task::Classification { classes })
}
