//! One-vs-all linear SVMs trained by dual coordinate descent.
//!
//! Per attribute, minimizes `0.5 ||w||^2 + C sum max(0, 1 - y (w.x + b))`.
//! Inputs are L2-normalized and the bias rides along as an appended constant
//! feature, so every example has squared norm 2 in the augmented space.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng::mix64;

/// Linear scorer for one attribute.
#[derive(Debug, Clone, PartialEq)]
pub struct AttributeScorer {
    pub name: String,
    /// Weight vector over the raw feature dimension.
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Regularization constant the scorer was trained with.
    pub c: f64,
    /// Primal objective after each full coordinate-descent pass.
    pub objective_log: Vec<f64>,
}

/// One-vs-all model: one scorer per trainable attribute.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SvmModel {
    pub feature_dim: usize,
    pub scorers: Vec<AttributeScorer>,
    /// Attributes that could not be trained, with the reason.
    pub skipped: Vec<(String, String)>,
}

impl SvmModel {
    pub fn scorer(&self, name: &str) -> Option<&AttributeScorer> {
        self.scorers.iter().find(|s| s.name == name)
    }
}

/// Training hyperparameters.
#[derive(Debug, Clone, Copy)]
pub struct SvmParams {
    pub c: f64,
    pub max_epochs: usize,
    /// Stop when the largest projected gradient over a pass drops below this.
    pub tol: f64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            max_epochs: 200,
            tol: 1e-4,
        }
    }
}

/// L2-normalizes every row (zero rows stay zero).
pub fn l2_normalize_rows(features: ArrayView2<f64>) -> Array2<f64> {
    let mut out = features.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

fn check_finite(features: &ArrayView2<f64>) -> Result<()> {
    if features.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature matrix"));
    }
    Ok(())
}

/// Dual coordinate descent on one attribute. `labels` are +-1.
fn train_one(
    normalized: &Array2<f64>,
    labels: &[i8],
    params: &SvmParams,
    seed: u64,
) -> (Vec<f64>, f64, Vec<f64>) {
    let n = normalized.nrows();
    let d = normalized.ncols();
    // augmented weight vector: w[0..d] plus the bias coordinate
    let mut w = vec![0.0; d + 1];
    let mut alpha = vec![0.0; n];
    // every augmented example has ||x||^2 + 1; rows are unit or zero
    let q: Vec<f64> = (0..n)
        .map(|i| {
            let row = normalized.row(i);
            row.dot(&row) + 1.0
        })
        .collect();
    let mut order: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut objective_log = Vec::new();
    // The dual ascends monotonically but the primal measured along w(alpha)
    // need not; the model and the log track the best primal iterate.
    let mut best_w = w.clone();
    let mut best_obj = f64::INFINITY;

    for _pass in 0..params.max_epochs {
        order.shuffle(&mut rng);
        let mut max_pg = 0.0f64;
        for &i in &order {
            let row = normalized.row(i);
            let y = labels[i] as f64;
            let margin = dot_aug(&w, row) * y;
            let g = margin - 1.0;
            let pg = if alpha[i] <= 0.0 {
                g.min(0.0)
            } else if alpha[i] >= params.c {
                g.max(0.0)
            } else {
                g
            };
            max_pg = max_pg.max(pg.abs());
            if pg.abs() > 1e-12 {
                let new_alpha = (alpha[i] - g / q[i]).clamp(0.0, params.c);
                let delta = (new_alpha - alpha[i]) * y;
                if delta != 0.0 {
                    for (wj, xj) in w.iter_mut().zip(row.iter()) {
                        *wj += delta * xj;
                    }
                    w[d] += delta; // bias coordinate
                    alpha[i] = new_alpha;
                }
            }
        }
        let objective = primal_objective(&w, normalized, labels, params.c);
        if objective < best_obj {
            best_obj = objective;
            best_w.copy_from_slice(&w);
        }
        objective_log.push(best_obj);
        if max_pg < params.tol {
            break;
        }
    }
    let bias = best_w[d];
    best_w.truncate(d);
    (best_w, bias, objective_log)
}

fn dot_aug(w: &[f64], row: ArrayView1<f64>) -> f64 {
    let d = row.len();
    let mut acc = w[d]; // bias coordinate times the constant-1 feature
    for (wj, xj) in w[..d].iter().zip(row.iter()) {
        acc += wj * xj;
    }
    acc
}

/// `0.5 ||w_aug||^2 + C sum hinge` of the augmented problem.
fn primal_objective(w: &[f64], normalized: &Array2<f64>, labels: &[i8], c: f64) -> f64 {
    let reg: f64 = 0.5 * w.iter().map(|v| v * v).sum::<f64>();
    let hinge: f64 = (0..normalized.nrows())
        .map(|i| {
            let margin = labels[i] as f64 * dot_aug(w, normalized.row(i));
            (1.0 - margin).max(0.0)
        })
        .sum();
    reg + c * hinge
}

/// Trains one scorer per attribute. Attributes with a single class in the
/// training labels are skipped with a reason rather than failing the batch.
pub fn train_ovr(
    features: ArrayView2<f64>,
    labels: &[(String, Vec<i8>)],
    params: &SvmParams,
) -> Result<SvmModel> {
    check_finite(&features)?;
    let n = features.nrows();
    for (name, y) in labels {
        if y.len() != n {
            return Err(Error::Dimension {
                what: "label vector",
                expected: n,
                got: y.len(),
            });
        }
        if y.iter().any(|v| *v != 1 && *v != -1) {
            return Err(Error::Recipe(format!("labels for `{name}` must be +-1")));
        }
    }
    let normalized = l2_normalize_rows(features);
    let results: Vec<(usize, std::result::Result<AttributeScorer, String>)> = labels
        .par_iter()
        .enumerate()
        .map(|(idx, (name, y))| {
            let pos = y.iter().filter(|v| **v > 0).count();
            if pos == 0 {
                return (idx, Err("no positive examples".to_string()));
            }
            if pos == y.len() {
                return (idx, Err("no negative examples".to_string()));
            }
            let seed = mix64(0x53_56_4D, idx as u64);
            let (weights, bias, objective_log) = train_one(&normalized, y, params, seed);
            (
                idx,
                Ok(AttributeScorer {
                    name: name.clone(),
                    weights,
                    bias,
                    c: params.c,
                    objective_log,
                }),
            )
        })
        .collect();

    let mut model = SvmModel {
        feature_dim: features.ncols(),
        scorers: Vec::new(),
        skipped: Vec::new(),
    };
    for (idx, result) in results {
        match result {
            Ok(scorer) => model.scorers.push(scorer),
            Err(reason) => model.skipped.push((labels[idx].0.clone(), reason)),
        }
    }
    Ok(model)
}

/// Raw decision values `w . x + b` for every scorer, over L2-normalized rows.
pub fn scores(model: &SvmModel, features: ArrayView2<f64>) -> Result<Vec<(String, Vec<f64>)>> {
    check_finite(&features)?;
    if features.ncols() != model.feature_dim {
        return Err(Error::Dimension {
            what: "feature matrix",
            expected: model.feature_dim,
            got: features.ncols(),
        });
    }
    let normalized = l2_normalize_rows(features);
    Ok(model
        .scorers
        .iter()
        .map(|scorer| {
            let values = normalized
                .rows()
                .into_iter()
                .map(|row| {
                    scorer.bias
                        + row
                            .iter()
                            .zip(&scorer.weights)
                            .map(|(x, w)| x * w)
                            .sum::<f64>()
                })
                .collect();
            (scorer.name.clone(), values)
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::arr2;

    fn labels(name: &str, y: &[i8]) -> Vec<(String, Vec<i8>)> {
        vec![(name.to_string(), y.to_vec())]
    }

    #[test]
    fn separable_1d_is_classified_perfectly() {
        let x = arr2(&[[-1.0], [-1.0], [1.0], [1.0]]);
        let y = [-1i8, -1, 1, 1];
        let model = train_ovr(
            x.view(),
            &labels("attr", &y),
            &SvmParams {
                c: 100.0,
                ..SvmParams::default()
            },
        )
        .unwrap();
        assert_eq!(model.scorers.len(), 1);
        let s = &scores(&model, x.view()).unwrap()[0].1;
        for (score, label) in s.iter().zip(&y) {
            assert!(score.signum() == *label as f64, "score {score} label {label}");
        }
    }

    #[test]
    fn duplication_with_halved_c_keeps_the_boundary() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let n = 60;
        let mut rows = Vec::new();
        let mut y = Vec::new();
        for i in 0..n {
            let cls = if i % 2 == 0 { 1.0 } else { -1.0 };
            rows.push([
                cls * 0.8 + rng.gen::<f64>() * 0.4,
                -cls * 0.5 + rng.gen::<f64>() * 0.4,
            ]);
            y.push(if cls > 0.0 { 1i8 } else { -1 });
        }
        let x = Array2::from_shape_fn((n, 2), |(i, j)| rows[i][j]);
        let mut x2 = Array2::zeros((2 * n, 2));
        let mut y2 = Vec::new();
        for i in 0..n {
            x2.row_mut(i).assign(&x.row(i));
            x2.row_mut(n + i).assign(&x.row(i));
        }
        y2.extend_from_slice(&y);
        y2.extend_from_slice(&y);

        let params1 = SvmParams {
            c: 1.0,
            max_epochs: 2000,
            tol: 1e-8,
        };
        let params2 = SvmParams {
            c: 0.5,
            ..params1
        };
        let m1 = train_ovr(x.view(), &labels("a", &y), &params1).unwrap();
        let m2 = train_ovr(x2.view(), &labels("a", &y2), &params2).unwrap();
        // same decision sign pattern on a held-out grid
        let grid: Vec<[f64; 2]> = (-5..=5)
            .flat_map(|a| (-5..=5).map(move |b| [a as f64 / 2.5, b as f64 / 2.5]))
            .collect();
        let g = Array2::from_shape_fn((grid.len(), 2), |(i, j)| grid[i][j]);
        let s1 = &scores(&m1, g.view()).unwrap()[0].1;
        let s2 = &scores(&m2, g.view()).unwrap()[0].1;
        let mut agreements = 0;
        for (a, b) in s1.iter().zip(s2.iter()) {
            if a.signum() == b.signum() || a.abs() < 1e-3 || b.abs() < 1e-3 {
                agreements += 1;
            }
        }
        assert_eq!(agreements, grid.len());
    }

    #[test]
    fn single_class_attributes_are_skipped_with_reason() {
        let x = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let model = train_ovr(
            x.view(),
            &[
                ("all_pos".to_string(), vec![1, 1]),
                ("ok".to_string(), vec![1, -1]),
                ("all_neg".to_string(), vec![-1, -1]),
            ],
            &SvmParams::default(),
        )
        .unwrap();
        assert_eq!(model.scorers.len(), 1);
        assert_eq!(model.scorers[0].name, "ok");
        assert_eq!(model.skipped.len(), 2);
        assert!(model.skipped.iter().any(|(n, r)| n == "all_pos" && r.contains("negative")));
        assert!(model.skipped.iter().any(|(n, r)| n == "all_neg" && r.contains("positive")));
    }

    #[test]
    fn primal_objective_is_non_increasing_within_slack() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let n = 80;
        let x = Array2::from_shape_fn((n, 6), |_| rng.gen::<f64>() * 2.0 - 1.0);
        let y: Vec<i8> = (0..n)
            .map(|i| if x[(i, 0)] + 0.3 * x[(i, 3)] > 0.1 { 1 } else { -1 })
            .collect();
        let model = train_ovr(
            x.view(),
            &labels("attr", &y),
            &SvmParams {
                c: 2.0,
                max_epochs: 100,
                tol: 0.0,
            },
        )
        .unwrap();
        let log = &model.scorers[0].objective_log;
        assert!(log.len() >= 10);
        for w in log.windows(2) {
            assert!(
                w[1] <= w[0] + 1e-8 * w[0].abs().max(1.0),
                "objective increased: {} -> {}",
                w[0],
                w[1]
            );
        }
    }

    #[test]
    fn nan_features_are_rejected() {
        let x = arr2(&[[f64::NAN], [0.0]]);
        assert!(matches!(
            train_ovr(x.view(), &labels("a", &[1, -1]), &SvmParams::default()),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn score_dimension_mismatch_is_rejected() {
        let x = arr2(&[[0.0, 1.0], [1.0, 0.0]]);
        let model = train_ovr(x.view(), &labels("a", &[1, -1]), &SvmParams::default()).unwrap();
        let bad = arr2(&[[1.0, 2.0, 3.0]]);
        assert!(matches!(
            scores(&model, bad.view()),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn training_is_deterministic() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let x = Array2::from_shape_fn((40, 4), |_| rng.gen::<f64>() - 0.5);
        let y: Vec<i8> = (0..40).map(|i| if i % 3 == 0 { 1 } else { -1 }).collect();
        let m1 = train_ovr(x.view(), &labels("a", &y), &SvmParams::default()).unwrap();
        let m2 = train_ovr(x.view(), &labels("a", &y), &SvmParams::default()).unwrap();
        assert_eq!(m1.scorers[0].weights, m2.scorers[0].weights);
        assert_eq!(m1.scorers[0].bias, m2.scorers[0].bias);
    }
}
