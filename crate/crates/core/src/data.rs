//! MNIST IDX ingestion and deterministic mini-batching.

use std::fs;
use std::path::Path;

use ndarray::{Array2, ArrayView1, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;
pub const IMAGE_SIDE: usize = 28;
pub const PIXELS: usize = IMAGE_SIDE * IMAGE_SIDE;
pub const CLASSES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// `count x 784`, pixels in `[0, 1]`.
    pub images: Array2<f64>,
    pub labels: Vec<u8>,
    pub split: Split,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header at byte {at}")))
}

/// Parses an IDX3 image container, flattening each image row-major and
/// scaling pixels by 1/255.
pub fn parse_idx_images(bytes: &[u8]) -> Result<Array2<f64>> {
    match be_u32(bytes, 0)? {
        IMAGE_MAGIC => {}
        LABEL_MAGIC => return Err(Error::Idx("label file passed as images".into())),
        other => return Err(Error::Idx(format!("bad image magic {other:#010x}"))),
    }
    let count = be_u32(bytes, 4)? as usize;
    let (rows, cols) = (be_u32(bytes, 8)? as usize, be_u32(bytes, 12)? as usize);
    if (rows, cols) != (IMAGE_SIDE, IMAGE_SIDE) {
        return Err(Error::Idx(format!("images are {rows}x{cols}, expected 28x28")));
    }
    let payload = &bytes[16..];
    if payload.len() < count * PIXELS {
        return Err(Error::Idx(format!(
            "truncated image payload: {} bytes for {count} images",
            payload.len()
        )));
    }
    let pixels = payload[..count * PIXELS].iter().map(|&p| f64::from(p) / 255.0).collect();
    Ok(Array2::from_shape_vec((count, PIXELS), pixels).expect("length checked above"))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    match be_u32(bytes, 0)? {
        LABEL_MAGIC => {}
        IMAGE_MAGIC => return Err(Error::Idx("image file passed as labels".into())),
        other => return Err(Error::Idx(format!("bad label magic {other:#010x}"))),
    }
    let count = be_u32(bytes, 4)? as usize;
    let payload = bytes.get(8..8 + count).ok_or_else(|| {
        Error::Idx(format!("truncated label payload: {} bytes for {count} labels", bytes.len().saturating_sub(8)))
    })?;
    if let Some((at, bad)) = payload.iter().enumerate().find(|(_, &l)| l as usize >= CLASSES) {
        return Err(Error::Idx(format!("label {bad} at index {at} is out of range 0..=9")));
    }
    Ok(payload.to_vec())
}

pub fn load_idx_images(path: impl AsRef<Path>) -> Result<Array2<f64>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Idx(format!("{}: {e}", path.display())))?;
    parse_idx_images(&bytes)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::Idx(format!("{}: {e}", path.display())))?;
    parse_idx_labels(&bytes)
}

impl Dataset {
    pub fn new(images: Array2<f64>, labels: Vec<u8>, split: Split) -> Result<Self> {
        if images.nrows() != labels.len() {
            return Err(Error::Dimension(format!("{} images vs {} labels", images.nrows(), labels.len())));
        }
        if images.iter().any(|p| !(0.0..=1.0).contains(p)) {
            return Err(Error::Idx("pixel values must lie in [0, 1]".into()));
        }
        Ok(Dataset { images, labels, split })
    }

    pub fn load(images: impl AsRef<Path>, labels: impl AsRef<Path>, split: Split) -> Result<Self> {
        Self::new(load_idx_images(images)?, load_idx_labels(labels)?, split)
    }

    /// Loads `train-*` and `t10k-*` files with their canonical names from `dir`.
    pub fn load_mnist_dir(dir: impl AsRef<Path>) -> Result<(Dataset, Dataset)> {
        let dir = dir.as_ref();
        let train = Self::load(dir.join("train-images-idx3-ubyte"), dir.join("train-labels-idx1-ubyte"), Split::Train)?;
        let test = Self::load(dir.join("t10k-images-idx3-ubyte"), dir.join("t10k-labels-idx1-ubyte"), Split::Test)?;
        Ok((train, test))
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, index: usize) -> ArrayView1<'_, f64> {
        self.images.row(index)
    }

    /// First `n` items (or all, when fewer).
    pub fn head(&self, n: usize) -> Dataset {
        let n = n.min(self.len());
        Dataset {
            images: self.images.slice(ndarray::s![..n, ..]).to_owned(),
            labels: self.labels[..n].to_vec(),
            split: self.split,
        }
    }

    pub fn select(&self, indices: &[usize]) -> (Array2<f64>, Vec<u8>) {
        let images = self.images.select(Axis(0), indices);
        let labels = indices.iter().map(|&i| self.labels[i]).collect();
        (images, labels)
    }
}

/// Seeded permutation of `0..count` cut into contiguous chunks of
/// `batch_size`; the last chunk may be short.
pub fn batches(count: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..count).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}
