//! Patch extraction and standardization.

use ndarray::Array2;
use rand::Rng;

use crate::dataset::SyntheticImage;
use crate::error::{Error, Result};

/// One standardized image patch.
#[derive(Debug, Clone)]
pub struct Patch {
    /// Row-major standardized pixels, `patch_size^2` values.
    pub data: Vec<f64>,
    /// Patch center `(x, y)` in source-image coordinates.
    pub center: (f64, f64),
    /// Index of the source image within the extraction batch.
    pub source: u32,
}

#[derive(Debug, Clone)]
pub struct PatchSet {
    pub patch_size: usize,
    pub patches: Vec<Patch>,
}

impl PatchSet {
    pub fn descriptor_dim(&self) -> usize {
        self.patch_size * self.patch_size
    }
}

/// Raw counts as a float grid (row, col).
pub fn image_to_grid(image: &SyntheticImage) -> Array2<f64> {
    let (h, w) = (image.height as usize, image.width as usize);
    Array2::from_shape_fn((h, w), |(r, c)| image.values[r * w + c] as f64)
}

/// `log1p`, then per-patch mean subtraction and division by `std + 1e-6`.
/// A constant patch standardizes to all zeros.
pub fn standardize(raw: &mut [f64]) {
    for v in raw.iter_mut() {
        *v = v.ln_1p();
    }
    let n = raw.len() as f64;
    let mean = raw.iter().sum::<f64>() / n;
    let var = raw.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = var.sqrt() + 1e-6;
    for v in raw.iter_mut() {
        *v = (*v - mean) / denom;
    }
}

/// Copies the `size x size` window at `(x0, y0)` out of a grid, standardized.
pub fn cut_patch(grid: &Array2<f64>, x0: usize, y0: usize, size: usize) -> Vec<f64> {
    let mut data = Vec::with_capacity(size * size);
    for r in 0..size {
        for c in 0..size {
            data.push(grid[(y0 + r, x0 + c)]);
        }
    }
    standardize(&mut data);
    data
}

/// Extracts `count` patches at uniformly random top-left corners.
pub fn extract_patches<R: Rng>(
    image: &SyntheticImage,
    count: usize,
    patch_size: usize,
    rng: &mut R,
) -> Result<PatchSet> {
    let (h, w) = (image.height as usize, image.width as usize);
    if w < patch_size || h < patch_size {
        return Err(Error::InsufficientData(format!(
            "image {w}x{h} smaller than patch size {patch_size}"
        )));
    }
    let grid = image_to_grid(image);
    let patches = (0..count)
        .map(|_| {
            let x0 = rng.gen_range(0..=(w - patch_size));
            let y0 = rng.gen_range(0..=(h - patch_size));
            Patch {
                data: cut_patch(&grid, x0, y0, patch_size),
                center: (
                    x0 as f64 + patch_size as f64 / 2.0,
                    y0 as f64 + patch_size as f64 / 2.0,
                ),
                source: 0,
            }
        })
        .collect();
    Ok(PatchSet {
        patch_size,
        patches,
    })
}
