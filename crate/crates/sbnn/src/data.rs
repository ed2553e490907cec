//! Dataset container and IDX-format ingestion.

use crate::error::{Result, SbnnError};
use ndarray::ArrayView2;
use std::io::Read;
use std::path::Path;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone)]
pub struct Dataset {
    /// Flattened samples, `len * dim` values scaled to [-1, 1].
    pub images: Vec<f32>,
    pub labels: Vec<u8>,
    pub dim: usize,
    pub n_classes: usize,
    pub split: Split,
}

impl Dataset {
    pub fn new(
        images: Vec<f32>,
        labels: Vec<u8>,
        dim: usize,
        n_classes: usize,
        split: Split,
    ) -> Result<Self> {
        if dim == 0 || images.len() != labels.len() * dim {
            return Err(SbnnError::Data(format!(
                "{} image values for {} labels of dim {dim}",
                images.len(),
                labels.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l as usize >= n_classes) {
            return Err(SbnnError::Data(format!(
                "label {bad} outside 0..{n_classes}"
            )));
        }
        Ok(Self {
            images,
            labels,
            dim,
            n_classes,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[f32] {
        &self.images[i * self.dim..(i + 1) * self.dim]
    }

    /// Contiguous view over samples [start, end).
    pub fn batch_view(&self, start: usize, end: usize) -> ArrayView2<'_, f32> {
        ArrayView2::from_shape(
            (end - start, self.dim),
            &self.images[start * self.dim..end * self.dim],
        )
        .unwrap()
    }
}

fn read_u32_be(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)
        .map_err(|e| SbnnError::Data(format!("truncated IDX header: {e}")))?;
    Ok(u32::from_be_bytes(b))
}

fn read_idx_images(path: &Path) -> Result<(Vec<u8>, usize, usize)> {
    let mut f = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| SbnnError::Data(format!("{}: {e}", path.display())))?,
    );
    let magic = read_u32_be(&mut f)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(SbnnError::Data(format!(
            "{}: bad image magic {magic:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut f)? as usize;
    let rows = read_u32_be(&mut f)? as usize;
    let cols = read_u32_be(&mut f)? as usize;
    let mut data = vec![0u8; count * rows * cols];
    f.read_exact(&mut data)
        .map_err(|e| SbnnError::Data(format!("{}: truncated image data: {e}", path.display())))?;
    Ok((data, count, rows * cols))
}

fn read_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let mut f = std::io::BufReader::new(
        std::fs::File::open(path).map_err(|e| SbnnError::Data(format!("{}: {e}", path.display())))?,
    );
    let magic = read_u32_be(&mut f)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(SbnnError::Data(format!(
            "{}: bad label magic {magic:#010x}",
            path.display()
        )));
    }
    let count = read_u32_be(&mut f)? as usize;
    let mut data = vec![0u8; count];
    f.read_exact(&mut data)
        .map_err(|e| SbnnError::Data(format!("{}: truncated label data: {e}", path.display())))?;
    Ok(data)
}

fn build_split(images_path: &Path, labels_path: &Path, split: Split) -> Result<Dataset> {
    let (raw, count, dim) = read_idx_images(images_path)?;
    let labels = read_idx_labels(labels_path)?;
    if labels.len() != count {
        return Err(SbnnError::Data(format!(
            "{count} images but {} labels",
            labels.len()
        )));
    }
    let images: Vec<f32> = raw.iter().map(|&p| p as f32 / 255.0 * 2.0 - 1.0).collect();
    Dataset::new(images, labels, dim, 10, split)
}

/// Loads the four canonical IDX files from `dir`; pixels are scaled to
/// [-1, 1] and labels range-checked against the 10 classes.
pub fn load_mnist(dir: &Path) -> Result<(Dataset, Dataset)> {
    let train = build_split(
        &dir.join("train-images-idx3-ubyte"),
        &dir.join("train-labels-idx1-ubyte"),
        Split::Train,
    )?;
    let test = build_split(
        &dir.join("t10k-images-idx3-ubyte"),
        &dir.join("t10k-labels-idx1-ubyte"),
        Split::Test,
    )?;
    Ok((train, test))
}

/// Two well-separated Gaussian blobs; a sanity task any binary network
/// separates.
pub fn toy_two_blobs(n: usize, dim: usize, seed: u64) -> Dataset {
    use rand::Rng;
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut images = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = (i % 2) as u8;
        let center = if class == 0 { -0.6f32 } else { 0.6 };
        for _ in 0..dim {
            let noise: f32 = rng.random_range(-0.25..0.25);
            images.push((center + noise).clamp(-1.0, 1.0));
        }
        labels.push(class);
    }
    Dataset::new(images, labels, dim, 2, Split::Train).unwrap()
}
