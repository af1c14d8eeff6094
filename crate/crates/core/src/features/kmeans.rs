//! Lloyd's k-means with k-means++ seeding over patch descriptors.

use ndarray::{Array2, ArrayView1, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::patches::PatchSet;
use super::PatchEncoder;
use crate::error::{Error, Result};

/// A trained visual vocabulary.
#[derive(Debug, Clone)]
pub struct Codebook {
    /// K x d centroid matrix.
    pub centroids: Array2<f64>,
    /// Patches assigned to each centroid in the final training iteration
    /// (zeros for a codebook loaded from disk).
    pub usage: Vec<u64>,
    /// Mean squared distance after each Lloyd iteration.
    pub objectives: Vec<f64>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centroids.ncols()
    }

    /// Index of the nearest centroid; ties break to the lowest index.
    pub fn assign_index(&self, patch: &[f64]) -> Result<usize> {
        if patch.len() != self.dim() {
            return Err(Error::Dimension {
                what: "patch descriptor",
                expected: self.dim(),
                got: patch.len(),
            });
        }
        let mut best = (0usize, f64::INFINITY);
        for (i, c) in self.centroids.axis_iter(Axis(0)).enumerate() {
            let d = sq_dist(patch, c);
            if d < best.1 {
                best = (i, d);
            }
        }
        Ok(best.0)
    }

    /// Hard assignment: a one-hot vector over the K centroids.
    pub fn assign(&self, patch: &[f64]) -> Result<Vec<f64>> {
        let idx = self.assign_index(patch)?;
        let mut out = vec![0.0; self.k()];
        out[idx] = 1.0;
        Ok(out)
    }
}

impl PatchEncoder for Codebook {
    fn dim(&self) -> usize {
        self.k()
    }

    fn encode(&self, patch: &[f64]) -> Result<Vec<f64>> {
        self.assign(patch)
    }
}

fn sq_dist(a: &[f64], b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Parallel nearest-centroid assignment. Returns (assignment, squared
/// distance) per row. Rows are processed in fixed chunks whose results are
/// concatenated in order, so the output is independent of thread scheduling.
fn assign_all(data: ArrayView2<f64>, centroids: &Array2<f64>) -> Vec<(usize, f64)> {
    let c_norms: Vec<f64> = centroids.axis_iter(Axis(0)).map(|c| c.dot(&c)).collect();
    let k = centroids.nrows();
    let n = data.nrows();
    const CHUNK: usize = 512;
    let bounds: Vec<(usize, usize)> = (0..n)
        .step_by(CHUNK)
        .map(|s| (s, (s + CHUNK).min(n)))
        .collect();
    let ct = centroids.t();
    let per_chunk: Vec<Vec<(usize, f64)>> = bounds
        .par_iter()
        .map(|&(s, e)| {
            let block = data.slice(ndarray::s![s..e, ..]);
            // dist^2 = |p|^2 - 2 p.c + |c|^2; one GEMM per chunk
            let dots = crate::gemm::matmul(block, ct);
            (0..(e - s))
                .map(|i| {
                    let mut best = (0usize, f64::INFINITY);
                    for j in 0..k {
                        let partial = c_norms[j] - 2.0 * dots[(i, j)];
                        if partial < best.1 {
                            best = (j, partial);
                        }
                    }
                    let row = block.row(i);
                    (best.0, (row.dot(&row) + best.1).max(0.0))
                })
                .collect()
        })
        .collect();
    per_chunk.into_iter().flatten().collect()
}

/// k-means++ seeding.
fn seed_centroids(data: ArrayView2<f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = data.nrows();
    let d = data.ncols();
    let mut centroids = Array2::zeros((k, d));
    let first = rng.gen_range(0..n);
    centroids.row_mut(0).assign(&data.row(first));
    let mut min_d2: Vec<f64> = data
        .axis_iter(Axis(0))
        .map(|row| sq_dist_views(row, data.row(first)))
        .collect();
    for j in 1..k {
        let total: f64 = min_d2.iter().sum();
        let next = if total <= 0.0 {
            // all points coincide with chosen centroids
            rng.gen_range(0..n)
        } else {
            let mut target = rng.gen::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in min_d2.iter().enumerate() {
                target -= w;
                if target <= 0.0 {
                    pick = i;
                    break;
                }
            }
            pick
        };
        centroids.row_mut(j).assign(&data.row(next));
        for (i, row) in data.axis_iter(Axis(0)).enumerate() {
            let d2 = sq_dist_views(row, data.row(next));
            if d2 < min_d2[i] {
                min_d2[i] = d2;
            }
        }
    }
    centroids
}

fn sq_dist_views(a: ArrayView1<f64>, b: ArrayView1<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y) * (x - y))
        .sum()
}

/// Trains a codebook with Lloyd iterations.
///
/// Stops when the relative objective decrease falls below `tol` or after
/// `max_iters`. Empty clusters are re-seeded to the point farthest from its
/// assigned centroid. The logged objective sequence is non-increasing.
pub fn train_codebook(
    patches: &PatchSet,
    k: usize,
    max_iters: usize,
    tol: f64,
    seed: u64,
) -> Result<Codebook> {
    let n = patches.patches.len();
    if k == 0 {
        return Err(Error::InsufficientData("k must be >= 1".into()));
    }
    if n < k {
        return Err(Error::InsufficientData(format!(
            "{n} patches cannot seed {k} clusters"
        )));
    }
    let d = patches.patches[0].data.len();
    let mut data = Array2::zeros((n, d));
    for (i, p) in patches.patches.iter().enumerate() {
        if p.data.len() != d {
            return Err(Error::Dimension {
                what: "patch descriptor",
                expected: d,
                got: p.data.len(),
            });
        }
        if p.data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("patch descriptor"));
        }
        data.row_mut(i)
            .assign(&ArrayView1::from_shape(d, &p.data).unwrap());
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = seed_centroids(data.view(), k, &mut rng);
    let mut objectives = Vec::new();
    let mut assignments: Vec<(usize, f64)> = Vec::new();

    for _ in 0..max_iters {
        assignments = assign_all(data.view(), &centroids);
        // re-seed empty clusters to the farthest point before measuring
        loop {
            let mut counts = vec![0u64; k];
            for &(a, _) in &assignments {
                counts[a] += 1;
            }
            let Some(empty) = counts.iter().position(|&c| c == 0) else {
                break;
            };
            let farthest = assignments
                .iter()
                .enumerate()
                .max_by(|a, b| a.1 .1.partial_cmp(&b.1 .1).unwrap())
                .map(|(i, _)| i)
                .unwrap();
            centroids.row_mut(empty).assign(&data.row(farthest));
            assignments = assign_all(data.view(), &centroids);
        }
        let objective = assignments.iter().map(|&(_, d2)| d2).sum::<f64>() / n as f64;
        let done = objectives
            .last()
            .map(|&prev: &f64| prev - objective < tol * prev.abs().max(f64::MIN_POSITIVE))
            .unwrap_or(false);
        objectives.push(objective);
        if done {
            break;
        }
        // update step: means over assigned points, accumulated in row order
        let mut sums = Array2::<f64>::zeros((k, d));
        let mut counts = vec![0u64; k];
        for (i, &(a, _)) in assignments.iter().enumerate() {
            let mut row = sums.row_mut(a);
            row += &data.row(i);
            counts[a] += 1;
        }
        for j in 0..k {
            if counts[j] > 0 {
                let mut row = sums.row_mut(j);
                row /= counts[j] as f64;
                centroids.row_mut(j).assign(&row);
            }
        }
    }

    let mut usage = vec![0u64; k];
    for &(a, _) in &assignments {
        usage[a] += 1;
    }
    Ok(Codebook {
        centroids,
        usage,
        objectives,
    })
}
