//! Spatial pyramid pooling and the multi-scale multi-crop image feature.

use ndarray::Array2;

use super::patches::{cut_patch, image_to_grid};
use super::PatchEncoder;
use crate::dataset::SyntheticImage;
use crate::error::Result;

/// Pyramid depth: levels 0, 1, 2 -> 1 + 4 + 16 = 21 cells.
pub const SPM_LEVELS: usize = 3;
pub const SPM_CELLS: usize = 21;

/// One encoded patch with its center in crop-local coordinates.
#[derive(Debug, Clone)]
pub struct PatchAssignment {
    pub center: (f64, f64),
    pub vector: Vec<f64>,
}

/// Sum-pools assignment vectors over a 3-level spatial pyramid.
///
/// The crop is split into `2^l x 2^l` cells per level; a patch belongs to the
/// cell containing its center (right/bottom edges fold into the last cell).
/// Output blocks are concatenated level-major, then row-major by cell, and
/// each level block is L1-normalized independently (an all-zero block stays
/// zero). Output length is `21 * dim`.
pub fn spm_pool(assignments: &[PatchAssignment], crop_size: f64, dim: usize) -> Vec<f64> {
    let mut out = vec![0.0; SPM_CELLS * dim];
    let mut block_start = 0usize;
    for level in 0..SPM_LEVELS {
        let cells = 1usize << level;
        let cell_size = crop_size / cells as f64;
        let block_len = cells * cells * dim;
        let block = &mut out[block_start..block_start + block_len];
        for pa in assignments {
            debug_assert_eq!(pa.vector.len(), dim);
            let cx = ((pa.center.0 / cell_size) as usize).min(cells - 1);
            let cy = ((pa.center.1 / cell_size) as usize).min(cells - 1);
            let offset = (cy * cells + cx) * dim;
            for (o, v) in block[offset..offset + dim].iter_mut().zip(&pa.vector) {
                *o += v;
            }
        }
        let norm: f64 = block.iter().map(|v| v.abs()).sum();
        if norm > 0.0 {
            for v in block.iter_mut() {
                *v /= norm;
            }
        }
        block_start += block_len;
    }
    out
}

/// Bilinear resize (align-corners = false convention).
pub fn resize_bilinear(grid: &Array2<f64>, out_h: usize, out_w: usize) -> Array2<f64> {
    let (h, w) = grid.dim();
    let sy = h as f64 / out_h as f64;
    let sx = w as f64 / out_w as f64;
    Array2::from_shape_fn((out_h, out_w), |(r, c)| {
        let y = ((r as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let x = ((c as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
        let y0 = y.floor() as usize;
        let x0 = x.floor() as usize;
        let y1 = (y0 + 1).min(h - 1);
        let x1 = (x0 + 1).min(w - 1);
        let fy = y - y0 as f64;
        let fx = x - x0 as f64;
        grid[(y0, x0)] * (1.0 - fy) * (1.0 - fx)
            + grid[(y0, x1)] * (1.0 - fy) * fx
            + grid[(y1, x0)] * fy * (1.0 - fx)
            + grid[(y1, x1)] * fy * fx
    })
}

/// Multi-scale multi-crop protocol parameters.
#[derive(Debug, Clone)]
pub struct FeatureParams {
    pub patch_size: usize,
    /// Resized image sizes as multiples of the crop size.
    pub scales: Vec<f64>,
    /// Crop size as a fraction of the source image side (224/1024).
    pub crop_fraction: f64,
}

impl Default for FeatureParams {
    fn default() -> Self {
        FeatureParams {
            patch_size: 32,
            scales: vec![1.0, 1.5, 2.0],
            crop_fraction: 224.0 / 1024.0,
        }
    }
}

impl FeatureParams {
    /// Crop side for a given source image side.
    pub fn crop_size(&self, image_side: usize) -> usize {
        ((image_side as f64 * self.crop_fraction).round() as usize).max(self.patch_size)
    }

    /// Dense grid positions along one axis: `0, stride, 2 stride, ...` plus a
    /// final flush-to-edge position.
    fn grid_positions(&self, extent: usize) -> Vec<usize> {
        let stride = (self.patch_size / 2).max(1);
        let last = extent - self.patch_size;
        let mut positions: Vec<usize> = (0..=last).step_by(stride).collect();
        if *positions.last().unwrap() != last {
            positions.push(last);
        }
        positions
    }
}

/// The per-crop pooled features (15 vectors: 3 scales x 5 crops), in a fixed
/// order. Exposed for tests; [`image_feature`] averages them.
pub fn image_crop_features(
    image: &SyntheticImage,
    encoder: &dyn PatchEncoder,
    params: &FeatureParams,
) -> Result<Vec<Vec<f64>>> {
    let side = image.width.min(image.height) as usize;
    let crop = params.crop_size(side);
    let grid = image_to_grid(image);
    let dim = encoder.dim();
    let mut features = Vec::with_capacity(params.scales.len() * 5);
    for &scale in &params.scales {
        let resized_side = (crop as f64 * scale).round() as usize;
        let resized = resize_bilinear(&grid, resized_side, resized_side);
        let span = resized_side - crop;
        let corners = [
            (0, 0),
            (span, 0),
            (0, span),
            (span, span),
            (span / 2, span / 2),
        ];
        for (x0, y0) in corners {
            let mut assignments = Vec::new();
            for &py in &params.grid_positions(crop) {
                for &px in &params.grid_positions(crop) {
                    let data = cut_patch(&resized, x0 + px, y0 + py, params.patch_size);
                    let vector = encoder.encode(&data)?;
                    assignments.push(PatchAssignment {
                        center: (
                            px as f64 + params.patch_size as f64 / 2.0,
                            py as f64 + params.patch_size as f64 / 2.0,
                        ),
                        vector,
                    });
                }
            }
            features.push(spm_pool(&assignments, crop as f64, dim));
        }
    }
    Ok(features)
}

/// Deterministic image descriptor: 3 scales x 5 crops, dense patch grid,
/// spatial-pyramid pooled, averaged element-wise over the 15 crop vectors.
pub fn image_feature(
    image: &SyntheticImage,
    encoder: &dyn PatchEncoder,
    params: &FeatureParams,
) -> Result<Vec<f64>> {
    let crops = image_crop_features(image, encoder, params)?;
    let n = crops.len() as f64;
    let mut avg = vec![0.0; crops[0].len()];
    for crop in &crops {
        for (a, v) in avg.iter_mut().zip(crop) {
            *a += v;
        }
    }
    for a in avg.iter_mut() {
        *a /= n;
    }
    Ok(avg)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::kmeans::Codebook;
    use approx::assert_relative_eq;

    fn one_hot(dim: usize, j: usize) -> Vec<f64> {
        let mut v = vec![0.0; dim];
        v[j] = 1.0;
        v
    }

    #[test]
    fn single_patch_gives_three_unit_entries() {
        let assignments = [PatchAssignment {
            center: (10.0, 70.0),
            vector: one_hot(4, 2),
        }];
        let pooled = spm_pool(&assignments, 100.0, 4);
        assert_eq!(pooled.len(), 21 * 4);
        let nonzero: Vec<(usize, f64)> = pooled
            .iter()
            .enumerate()
            .filter(|(_, v)| **v != 0.0)
            .map(|(i, v)| (i, *v))
            .collect();
        assert_eq!(nonzero.len(), 3);
        for (_, v) in &nonzero {
            assert_relative_eq!(*v, 1.0, epsilon = 1e-12);
        }
        // level 0 cell 0; level 1 cell (row 1, col 0) = cell 2; level 2 cell
        // (row 2, col 0) = cell 8
        assert_eq!(nonzero[0].0, 2);
        assert_eq!(nonzero[1].0, (1 + 2) * 4 + 2);
        assert_eq!(nonzero[2].0, (1 + 4 + 8) * 4 + 2);
    }

    #[test]
    fn containment_in_first_cell_repeats_the_block() {
        // all centers inside the top-left level-2 cell [0, 25) x [0, 25)
        let assignments: Vec<PatchAssignment> = (0..30)
            .map(|i| PatchAssignment {
                center: (1.0 + (i % 5) as f64 * 4.0, 2.0 + (i / 5) as f64 * 3.0),
                vector: one_hot(3, i % 3),
            })
            .collect();
        let pooled = spm_pool(&assignments, 100.0, 3);
        let level0 = &pooled[0..3];
        let level1_cell0 = &pooled[3..6];
        let level2_cell0 = &pooled[15..18];
        for i in 0..3 {
            assert_relative_eq!(level0[i], level1_cell0[i], epsilon = 1e-12);
            assert_relative_eq!(level0[i], level2_cell0[i], epsilon = 1e-12);
        }
        // every other cell is zero
        for (i, v) in pooled.iter().enumerate() {
            if !(0..3).contains(&i) && !(3..6).contains(&i) && !(15..18).contains(&i) {
                assert_eq!(*v, 0.0);
            }
        }
    }

    #[test]
    fn edge_centers_fold_into_last_cell() {
        let assignments = [PatchAssignment {
            center: (100.0, 100.0), // exactly on the right/bottom edge
            vector: one_hot(2, 0),
        }];
        let pooled = spm_pool(&assignments, 100.0, 2);
        // level 1: cell (1,1) = cell 3; level 2: cell (3,3) = cell 15
        assert_eq!(pooled[(1 + 3) * 2], 1.0);
        assert_eq!(pooled[(5 + 15) * 2], 1.0);
    }

    #[test]
    fn level_blocks_are_l1_normalized() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let dim = 7;
        let assignments: Vec<PatchAssignment> = (0..200)
            .map(|_| PatchAssignment {
                center: (rng.gen_range(0.0..50.0), rng.gen_range(0.0..50.0)),
                vector: one_hot(dim, rng.gen_range(0..dim)),
            })
            .collect();
        let pooled = spm_pool(&assignments, 50.0, dim);
        let bounds = [(0, 1), (1, 5), (5, 21)];
        for (a, b) in bounds {
            let norm: f64 = pooled[a * dim..b * dim].iter().sum();
            assert_relative_eq!(norm, 1.0, epsilon = 1e-9);
        }
        assert!(pooled.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn level0_equals_naive_bow_histogram() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let dim = rng.gen_range(2..10);
            let n = rng.gen_range(1..300);
            let mut hist = vec![0.0f64; dim];
            let assignments: Vec<PatchAssignment> = (0..n)
                .map(|_| {
                    let j = rng.gen_range(0..dim);
                    hist[j] += 1.0;
                    PatchAssignment {
                        center: (rng.gen_range(0.0..32.0), rng.gen_range(0.0..32.0)),
                        vector: one_hot(dim, j),
                    }
                })
                .collect();
            let pooled = spm_pool(&assignments, 32.0, dim);
            for (p, h) in pooled[..dim].iter().zip(&hist) {
                assert_relative_eq!(*p, h / n as f64, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn uniform_scatter_gives_uniform_blocks() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let dim = 16;
        let n = 10_000;
        let assignments: Vec<PatchAssignment> = (0..n)
            .map(|_| PatchAssignment {
                center: (rng.gen_range(0.0..64.0), rng.gen_range(0.0..64.0)),
                vector: one_hot(dim, rng.gen_range(0..dim)),
            })
            .collect();
        let pooled = spm_pool(&assignments, 64.0, dim);
        // chi-squared against the uniform expectation, per level
        let bounds = [(0usize, 1usize), (1, 5), (5, 21)];
        for (a, b) in bounds {
            let bins = (b - a) * dim;
            let expected = n as f64 / bins as f64;
            let chi2: f64 = pooled[a * dim..b * dim]
                .iter()
                .map(|&p| {
                    let observed = p * n as f64; // undo L1 normalization
                    (observed - expected).powi(2) / expected
                })
                .sum();
            let dof = (bins - 1) as f64;
            assert!(
                chi2 < dof + 6.0 * (2.0 * dof).sqrt(),
                "chi2 {chi2} too large for dof {dof}"
            );
        }
    }

    #[test]
    fn resize_preserves_constant_and_halves_linear_ramp() {
        let constant = Array2::from_elem((64, 64), 5.0);
        let small = resize_bilinear(&constant, 16, 16);
        assert!(small.iter().all(|&v| (v - 5.0).abs() < 1e-12));
        let ramp = Array2::from_shape_fn((64, 64), |(_, c)| c as f64);
        let down = resize_bilinear(&ramp, 64, 32);
        // interior pixels follow the same ramp at doubled slope
        for c in 1..31 {
            assert_relative_eq!(down[(10, c)], (c as f64 + 0.5) * 2.0 - 0.5, epsilon = 1e-9);
        }
    }

    #[test]
    fn constant_image_crop_features_are_identical() {
        let img = crate::dataset::SyntheticImage {
            width: 256,
            height: 256,
            values: vec![300; 256 * 256],
        };
        let cb = Codebook {
            centroids: ndarray::Array2::from_shape_fn((4, 1024), |(k, j)| {
                (k * 31 + j) as f64 % 7.0
            }),
            usage: vec![0; 4],
            objectives: vec![],
        };
        let params = FeatureParams::default();
        let crops = image_crop_features(&img, &cb, &params).unwrap();
        assert_eq!(crops.len(), 15);
        for crop in &crops[1..] {
            assert_eq!(crop, &crops[0]);
        }
        let feature = image_feature(&img, &cb, &params).unwrap();
        assert_eq!(feature.len(), 21 * 4);
        for (f, c) in feature.iter().zip(&crops[0]) {
            assert_relative_eq!(f, c, epsilon = 1e-12);
        }
    }

    #[test]
    fn feature_length_is_21_k_and_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let img = crate::dataset::SyntheticImage {
            width: 128,
            height: 128,
            values: (0..128 * 128).map(|_| rng.gen_range(0..2000)).collect(),
        };
        let cb = Codebook {
            centroids: ndarray::Array2::from_shape_fn((8, 1024), |(k, j)| {
                ((k * 131 + j * 17) % 23) as f64 / 23.0 - 0.5
            }),
            usage: vec![0; 8],
            objectives: vec![],
        };
        let params = FeatureParams::default();
        let f1 = image_feature(&img, &cb, &params).unwrap();
        let f2 = image_feature(&img, &cb, &params).unwrap();
        assert_eq!(f1.len(), 21 * 8);
        assert_eq!(f1, f2);
        assert!(f1.iter().all(|&v| v >= 0.0));
    }
}
