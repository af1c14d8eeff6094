//! Autoencoder training: batched loss/gradient, momentum SGD, gradient
//! verification and reconstruction statistics.

use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::model::{AeArchitecture, AeModel};
use crate::error::{Error, Result};
use crate::features::PatchSet;

/// Fixed number of gradient chunks per batch. Chunk boundaries depend only on
/// the batch size, and chunk gradients are reduced in index order, so results
/// are bit-stable for any worker-thread count.
const GRAD_CHUNKS: usize = 8;

/// Mean reconstruction loss over the batch and its gradient.
///
/// The loss is the batch mean of per-patch mean squared error, so per-patch
/// errors stay on a comparable scale regardless of batch size.
pub fn loss_and_gradient(model: &AeModel, batch: &[&[f64]]) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::InsufficientData("empty batch".into()));
    }
    let weight = 1.0 / batch.len() as f64;
    let chunk_len = batch.len().div_ceil(GRAD_CHUNKS);
    let partials: Vec<Result<(f64, Vec<f64>)>> = batch
        .par_chunks(chunk_len)
        .map(|chunk| {
            let mut grad = vec![0.0; model.params.len()];
            let loss = model.backward_batch(chunk, weight, &mut grad)?;
            Ok((loss, grad))
        })
        .collect();
    let mut grad = vec![0.0; model.params.len()];
    let mut loss = 0.0;
    for partial in partials {
        let (l, g) = partial?;
        loss += l;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((loss * weight, grad))
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub momentum: f64,
    /// Epochs without a 0.1% improvement before the step size halves.
    pub plateau_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 64,
            learning_rate: 1e-2,
            momentum: 0.9,
            plateau_patience: 15,
            seed: 0,
        }
    }
}

/// Mini-batch SGD with momentum. Logs the mean loss of every epoch into the
/// model's `train_log`; errors out if the loss stops being finite.
pub fn train(model: &mut AeModel, patches: &PatchSet, cfg: &TrainConfig) -> Result<()> {
    let dim = model.arch.input_dim();
    if patches.patches.is_empty() {
        return Err(Error::InsufficientData("no training patches".into()));
    }
    for p in &patches.patches {
        if p.data.len() != dim {
            return Err(Error::Dimension {
                what: "training patch",
                expected: dim,
                got: p.data.len(),
            });
        }
    }
    let mut order: Vec<usize> = (0..patches.patches.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut velocity = vec![0.0; model.params.len()];
    let mut lr = cfg.learning_rate;
    let mut best = f64::INFINITY;
    let mut stale_epochs = 0usize;

    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let batch: Vec<&[f64]> = chunk
                .iter()
                .map(|&i| patches.patches[i].data.as_slice())
                .collect();
            let (loss, grad) = loss_and_gradient(model, &batch)?;
            if !loss.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    reason: format!("batch loss = {loss}"),
                });
            }
            for ((param, vel), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *vel = cfg.momentum * *vel - lr * g;
                *param += *vel;
            }
            epoch_loss += loss;
            batches += 1;
        }
        epoch_loss /= batches as f64;
        if !epoch_loss.is_finite() {
            return Err(Error::Diverged {
                epoch,
                reason: format!("epoch loss = {epoch_loss}"),
            });
        }
        model.train_log.push(epoch_loss);
        if epoch_loss < best * (1.0 - 1e-3) {
            best = epoch_loss;
            stale_epochs = 0;
        } else {
            stale_epochs += 1;
            if stale_epochs >= cfg.plateau_patience {
                lr *= 0.5;
                stale_epochs = 0;
            }
        }
    }
    model.check_finite()
}

/// Per-patch reconstruction-error summary.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReconstructionStats {
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl std::fmt::Display for ReconstructionStats {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "reconstruction error: min {:.4}, max {:.4}, mean {:.4}",
            self.min, self.max, self.mean
        )
    }
}

/// Min/max/mean of per-patch mean squared reconstruction error.
pub fn reconstruction_stats(model: &AeModel, patches: &PatchSet) -> Result<ReconstructionStats> {
    if patches.patches.is_empty() {
        return Err(Error::InsufficientData("no patches".into()));
    }
    let refs: Vec<&[f64]> = patches.patches.iter().map(|p| p.data.as_slice()).collect();
    let errors: Vec<f64> = refs
        .par_chunks(64)
        .map(|chunk| {
            let state = model.forward_batch(chunk)?;
            let dim = model.arch.input_dim();
            Ok((0..chunk.len())
                .map(|s| {
                    (0..dim)
                        .map(|i| {
                            let d = state.y[(s * dim + i, 0)] - chunk[s][i];
                            d * d
                        })
                        .sum::<f64>()
                        / dim as f64
                })
                .collect::<Vec<f64>>())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?
        .into_iter()
        .flatten()
        .collect();
    let min = errors.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = errors.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mean = errors.iter().sum::<f64>() / errors.len() as f64;
    Ok(ReconstructionStats { min, max, mean })
}

/// Result of comparing backprop against central finite differences.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub worst_tensor: &'static str,
    pub params_checked: usize,
}

/// Verifies every parameter coordinate of a model against central finite
/// differences (step `1e-5`). Coordinates where both gradients are below
/// `1e-8` in magnitude count as matching.
pub fn gradient_check(arch: AeArchitecture, n_patches: usize, seed: u64) -> Result<GradCheckReport> {
    let mut model = AeModel::init(arch, seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5EED);
    let patches: Vec<Vec<f64>> = (0..n_patches)
        .map(|_| {
            (0..arch.input_dim())
                .map(|_| rand::Rng::gen_range(&mut rng, -1.0..1.0))
                .collect()
        })
        .collect();
    let batch: Vec<&[f64]> = patches.iter().map(|p| p.as_slice()).collect();
    let (_, analytic) = loss_and_gradient(&model, &batch)?;

    let h = 1e-5;
    let segs = arch.segments();
    let mut max_rel = 0.0f64;
    let mut worst = segs[0].0;
    for (name, offset, rows, cols) in &segs {
        for i in *offset..*offset + rows * cols {
            let saved = model.params[i];
            model.params[i] = saved + h;
            let (loss_hi, _) = loss_batch(&model, &batch)?;
            model.params[i] = saved - h;
            let (loss_lo, _) = loss_batch(&model, &batch)?;
            model.params[i] = saved;
            let numeric = (loss_hi - loss_lo) / (2.0 * h);
            let a = analytic[i];
            // near-zero coordinates: finite-difference roundoff dominates,
            // so an absolute agreement of 1e-8 counts as matching
            if (a - numeric).abs() < 1e-8 {
                continue;
            }
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs());
            if rel > max_rel {
                max_rel = rel;
                worst = name;
            }
        }
    }
    Ok(GradCheckReport {
        max_rel_error: max_rel,
        worst_tensor: worst,
        params_checked: model.params.len(),
    })
}

/// Loss only (cheaper than `loss_and_gradient` for finite differences).
fn loss_batch(model: &AeModel, batch: &[&[f64]]) -> Result<(f64, usize)> {
    let state = model.forward_batch(batch)?;
    let loss: f64 = state
        .y
        .iter()
        .zip(state.x.iter())
        .map(|(y, x)| (y - x) * (y - x))
        .sum::<f64>()
        / model.arch.input_dim() as f64;
    Ok((loss / batch.len() as f64, batch.len()))
}
