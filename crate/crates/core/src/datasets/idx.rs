//! IDX (MNIST) file parsing. Plain and gzip-compressed files are accepted.

use std::fs;
use std::io::Read;
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;

use super::LabeledDataset;
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const IMAGES_MAGIC: u32 = 0x0000_0803;
pub const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "header shorter than declared dimensions".into(),
        })
}

fn expect_magic(bytes: &[u8], want: u32, path: &Path) -> Result<()> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != want {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("magic 0x{magic:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

/// Returns `(count, rows, cols, pixels)`; pixels are raw bytes.
pub fn read_idx_images(path: &Path) -> Result<(usize, usize, usize, Vec<u8>)> {
    let bytes = read_maybe_gz(path)?;
    expect_magic(&bytes, IMAGES_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let rows = be_u32(&bytes, 8, path)? as usize;
    let cols = be_u32(&bytes, 12, path)? as usize;
    let declared = n * rows * cols;
    let payload = &bytes[16..];
    if payload.len() != declared {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            declared,
            found: payload.len(),
        });
    }
    Ok((n, rows, cols, payload.to_vec()))
}

pub fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = read_maybe_gz(path)?;
    expect_magic(&bytes, LABELS_MAGIC, path)?;
    let n = be_u32(&bytes, 4, path)? as usize;
    let payload = &bytes[8..];
    if payload.len() != n {
        return Err(Error::Truncated {
            path: path.to_path_buf(),
            declared: n,
            found: payload.len(),
        });
    }
    Ok(payload.to_vec())
}

/// Loads an image/label IDX pair, scaling pixels by 1/255.
///
/// The class count is at least 10 (MNIST digits), or one more than the
/// largest label present.
pub fn load_mnist_idx(images_path: impl AsRef<Path>, labels_path: impl AsRef<Path>) -> Result<LabeledDataset> {
    let (n, rows, cols, pixels) = read_idx_images(images_path.as_ref())?;
    let labels = read_idx_labels(labels_path.as_ref())?;
    if labels.len() != n {
        return Err(Error::Inconsistent {
            images: n,
            labels: labels.len(),
        });
    }
    let data = pixels.iter().map(|&p| f64::from(p) / 255.0).collect();
    let inputs = Tensor::from_vec(&[n, rows * cols], data)?;
    let labels: Vec<usize> = labels.into_iter().map(usize::from).collect();
    let num_classes = labels.iter().max().map_or(10, |&m| (m + 1).max(10));
    LabeledDataset::new(inputs, labels, num_classes)
}

fn find(dir: &Path, stem: &str) -> Result<PathBuf> {
    for candidate in [stem.to_string(), format!("{stem}.gz")] {
        let p = dir.join(&candidate);
        if p.is_file() {
            return Ok(p);
        }
    }
    Err(Error::io(
        dir.join(stem),
        std::io::Error::new(std::io::ErrorKind::NotFound, "MNIST file not found (plain or .gz)"),
    ))
}

/// Paths of the four standard MNIST files inside `dir`.
pub fn mnist_paths(dir: &Path) -> Result<[PathBuf; 4]> {
    Ok([
        find(dir, "train-images-idx3-ubyte")?,
        find(dir, "train-labels-idx1-ubyte")?,
        find(dir, "t10k-images-idx3-ubyte")?,
        find(dir, "t10k-labels-idx1-ubyte")?,
    ])
}

/// Loads `(train, test)` from a directory holding the standard file names.
pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(LabeledDataset, LabeledDataset)> {
    let [ti, tl, vi, vl] = mnist_paths(dir.as_ref())?;
    Ok((load_mnist_idx(ti, tl)?, load_mnist_idx(vi, vl)?))
}
