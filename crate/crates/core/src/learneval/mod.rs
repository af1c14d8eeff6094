//! One-vs-all SVM training, average-precision evaluation, leave-one-run-out
//! cross-validation and report assembly.

mod folds;
mod io;
mod metrics;
mod svm;

pub use folds::{
    align_features, evaluate, filter_single_run_attributes, loro_folds, random_split,
    AttributeReport, EvalReport, FilterReport, Fold, FoldSummary, Protocol,
};
pub use io::{
    decode_svm, encode_svm, read_report, read_svm, write_report, write_svm, XSVM_MAGIC,
    XSVM_VERSION,
};
pub use metrics::{average_precision, pr_curve, PrCurve, PrPoint};
pub use svm::{l2_normalize_rows, scores, train_ovr, AttributeScorer, SvmModel, SvmParams};

use ndarray::ArrayView2;

use crate::error::Result;

/// Picks C from `candidates` by mean AP on an inner split of the training
/// data (the conventional 3-point search).
pub fn select_c(
    features: ArrayView2<f64>,
    labels: &[(String, Vec<i8>)],
    candidates: &[f64],
    seed: u64,
    base: &SvmParams,
) -> Result<(f64, Vec<(f64, f64)>)> {
    use rand::seq::SliceRandom;
    use rand_chacha::rand_core::SeedableRng;

    let n = features.nrows();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = ((n as f64) * 0.8).round() as usize;
    let cut = cut.clamp(1, n.saturating_sub(1));
    let (train_idx, valid_idx) = order.split_at(cut);
    let train = features.select(ndarray::Axis(0), train_idx);
    let valid = features.select(ndarray::Axis(0), valid_idx);

    let mut results = Vec::new();
    for &c in candidates {
        let train_labels: Vec<(String, Vec<i8>)> = labels
            .iter()
            .map(|(name, y)| (name.clone(), train_idx.iter().map(|&i| y[i]).collect()))
            .collect();
        let model = train_ovr(train.view(), &train_labels, &SvmParams { c, ..*base })?;
        let score_sets = scores(&model, valid.view())?;
        let mut aps = Vec::new();
        for (name, s) in &score_sets {
            let y: Vec<bool> = labels
                .iter()
                .find(|(n, _)| n == name)
                .map(|(_, y)| valid_idx.iter().map(|&i| y[i] > 0).collect())
                .unwrap();
            if y.iter().any(|l| *l) {
                aps.push(average_precision(s, &y)?);
            }
        }
        let mean = if aps.is_empty() {
            0.0
        } else {
            aps.iter().sum::<f64>() / aps.len() as f64
        };
        results.push((c, mean));
    }
    let best = results
        .iter()
        .cloned()
        .max_by(|a, b| a.1.partial_cmp(&b.1).unwrap())
        .map(|(c, _)| c)
        .unwrap_or(base.c);
    Ok((best, results))
}
