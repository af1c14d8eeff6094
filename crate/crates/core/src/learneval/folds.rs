//! Cross-validation folds, attribute filtering and report assembly.

use std::collections::{BTreeMap, BTreeSet};

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::metrics::average_precision;
use super::svm::{scores, train_ovr, SvmParams};
use crate::dataset::ManifestEntry;
use crate::error::{Error, Result};
use crate::features::FeatureFile;
use crate::simkit::Attribute;

/// One cross-validation fold (indices into the manifest order).
#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    /// Run id when produced by leave-one-run-out, else None.
    pub test_run: Option<u32>,
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Leave-one-run-out folds: one fold per distinct run id, test = that run.
pub fn loro_folds(manifest: &[ManifestEntry]) -> Result<Vec<Fold>> {
    let mut by_run: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, entry) in manifest.iter().enumerate() {
        by_run.entry(entry.run_id).or_default().push(i);
    }
    if by_run.len() < 2 {
        return Err(Error::SingleRun);
    }
    Ok(by_run
        .iter()
        .map(|(&run, test)| {
            let train = manifest
                .iter()
                .enumerate()
                .filter(|(_, e)| e.run_id != run)
                .map(|(i, _)| i)
                .collect();
            Fold {
                test_run: Some(run),
                train,
                test: test.clone(),
            }
        })
        .collect())
}

/// Single random train/test split.
pub fn random_split(manifest: &[ManifestEntry], train_fraction: f64, seed: u64) -> Result<Fold> {
    if !(0.0 < train_fraction && train_fraction < 1.0) {
        return Err(Error::Config {
            field: "train_fraction",
            reason: format!("must lie in (0, 1), got {train_fraction}"),
        });
    }
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    order.shuffle(&mut rng);
    let cut = ((manifest.len() as f64) * train_fraction).round() as usize;
    let cut = cut.clamp(1, manifest.len().saturating_sub(1));
    Ok(Fold {
        test_run: None,
        train: order[..cut].to_vec(),
        test: order[cut..].to_vec(),
    })
}

/// Which attributes appear in more than one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterReport {
    pub kept: Vec<String>,
    /// Dropped attribute with the single run owning all its positives.
    pub dropped: Vec<(String, u32)>,
}

/// Drops attributes whose positives all live in one run.
pub fn filter_single_run_attributes(manifest: &[ManifestEntry]) -> FilterReport {
    let mut runs_per_attr: BTreeMap<&str, BTreeSet<u32>> = BTreeMap::new();
    for entry in manifest {
        for name in &entry.attributes {
            runs_per_attr.entry(name).or_default().insert(entry.run_id);
        }
    }
    let mut report = FilterReport {
        kept: Vec::new(),
        dropped: Vec::new(),
    };
    for (name, runs) in runs_per_attr {
        if runs.len() == 1 {
            report
                .dropped
                .push((name.to_string(), *runs.iter().next().unwrap()));
        } else {
            report.kept.push(name.to_string());
        }
    }
    report
}

/// Evaluation protocol.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Protocol {
    LeaveOneRunOut,
    RandomSplit { train_fraction: f64, seed: u64 },
}

impl Protocol {
    fn name(&self) -> String {
        match self {
            Protocol::LeaveOneRunOut => "loro".to_string(),
            Protocol::RandomSplit { train_fraction, seed } => {
                format!("random_split(train={train_fraction}, seed={seed})")
            }
        }
    }
}

/// Per-attribute evaluation results.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttributeReport {
    pub name: String,
    /// AP per fold; None where the fold had no test positives or no trained
    /// scorer.
    pub ap_per_fold: Vec<Option<f64>>,
    /// Mean over folds with a defined AP.
    pub mean_ap: Option<f64>,
    /// Positive fraction over the whole dataset (the AP of a random ranking).
    pub prevalence: f64,
    pub excluded_reason: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldSummary {
    pub test_run: Option<u32>,
    pub train_size: usize,
    pub test_size: usize,
}

/// Full evaluation output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub protocol: String,
    pub regularization_c: f64,
    pub folds: Vec<FoldSummary>,
    pub attributes: Vec<AttributeReport>,
    /// Mean AP over attributes with a defined mean.
    pub map: f64,
    /// Mean prevalence over the same attributes (random-ranking baseline).
    pub mean_prevalence: f64,
    pub filtered_single_run: Vec<(String, u32)>,
}

/// Aligns manifest entries with feature rows (by id) and returns the matrix
/// in manifest order plus the +-1 label vector per canonical attribute.
pub fn align_features(
    manifest: &[ManifestEntry],
    features: &FeatureFile,
) -> Result<(Array2<f64>, Vec<(String, Vec<i8>)>)> {
    let index: BTreeMap<&str, usize> = features
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.as_str(), i))
        .collect();
    let dim = features.matrix.ncols();
    let mut matrix = Array2::zeros((manifest.len(), dim));
    for (row, entry) in manifest.iter().enumerate() {
        let &src = index.get(entry.id.as_str()).ok_or_else(|| {
            Error::InsufficientData(format!("no feature row for manifest id `{}`", entry.id))
        })?;
        matrix.row_mut(row).assign(&features.matrix.row(src));
    }
    let labels = Attribute::ALL
        .iter()
        .map(|attr| {
            let name = attr.name().to_string();
            let y = manifest
                .iter()
                .map(|e| if e.attributes.iter().any(|a| a == &name) { 1i8 } else { -1 })
                .collect();
            (name, y)
        })
        .collect();
    Ok((matrix, labels))
}

/// Runs the protocol: per fold, train one-vs-all scorers on the train split
/// and compute AP on the test split for every attribute with at least one
/// test positive. Attribute AP = mean over folds where defined; mAP = mean
/// over attributes with an AP.
pub fn evaluate(
    manifest: &[ManifestEntry],
    features: &FeatureFile,
    protocol: Protocol,
    filter_single_run: bool,
    params: &SvmParams,
) -> Result<EvalReport> {
    let (matrix, all_labels) = align_features(manifest, features)?;
    let filter = filter_single_run_attributes(manifest);
    let dropped: BTreeSet<&str> = if filter_single_run {
        filter.dropped.iter().map(|(n, _)| n.as_str()).collect()
    } else {
        BTreeSet::new()
    };
    let labels: Vec<(String, Vec<i8>)> = all_labels
        .into_iter()
        .filter(|(name, _)| !dropped.contains(name.as_str()))
        .collect();

    let folds = match protocol {
        Protocol::LeaveOneRunOut => loro_folds(manifest)?,
        Protocol::RandomSplit { train_fraction, seed } => {
            vec![random_split(manifest, train_fraction, seed)?]
        }
    };

    let mut ap_per_fold: Vec<Vec<Option<f64>>> = vec![Vec::new(); labels.len()];
    for fold in &folds {
        let train_matrix = matrix.select(Axis(0), &fold.train);
        let test_matrix = matrix.select(Axis(0), &fold.test);
        let train_labels: Vec<(String, Vec<i8>)> = labels
            .iter()
            .map(|(name, y)| (name.clone(), fold.train.iter().map(|&i| y[i]).collect()))
            .collect();
        let model = train_ovr(train_matrix.view(), &train_labels, params)?;
        let fold_scores = scores(&model, test_matrix.view())?;
        for (ai, (name, y)) in labels.iter().enumerate() {
            let test_labels: Vec<bool> = fold.test.iter().map(|&i| y[i] > 0).collect();
            let has_positive = test_labels.iter().any(|l| *l);
            let entry = fold_scores
                .iter()
                .find(|(n, _)| n == name)
                .filter(|_| has_positive)
                .map(|(_, s)| average_precision(s, &test_labels))
                .transpose()?;
            ap_per_fold[ai].push(entry);
        }
    }

    let n = manifest.len() as f64;
    let mut attributes = Vec::new();
    for (ai, (name, y)) in labels.iter().enumerate() {
        let defined: Vec<f64> = ap_per_fold[ai].iter().flatten().copied().collect();
        let mean_ap = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
        let excluded_reason = if mean_ap.is_none() {
            Some("AP undefined in every fold (no test positives or untrainable)".to_string())
        } else {
            None
        };
        attributes.push(AttributeReport {
            name: name.clone(),
            ap_per_fold: ap_per_fold[ai].clone(),
            mean_ap,
            prevalence: y.iter().filter(|v| **v > 0).count() as f64 / n,
            excluded_reason,
        });
    }

    let included: Vec<&AttributeReport> =
        attributes.iter().filter(|a| a.mean_ap.is_some()).collect();
    if included.is_empty() {
        return Err(Error::InsufficientData(
            "no attribute had a defined AP in any fold".to_string(),
        ));
    }
    let map = included.iter().map(|a| a.mean_ap.unwrap()).sum::<f64>() / included.len() as f64;
    let mean_prevalence =
        included.iter().map(|a| a.prevalence).sum::<f64>() / included.len() as f64;

    Ok(EvalReport {
        protocol: protocol.name(),
        regularization_c: params.c,
        folds: folds
            .iter()
            .map(|f| FoldSummary {
                test_run: f.test_run,
                train_size: f.train.len(),
                test_size: f.test.len(),
            })
            .collect(),
        attributes,
        map,
        mean_prevalence,
        filtered_single_run: if filter_single_run { filter.dropped } else { Vec::new() },
    })
}

/// Like [`evaluate`], but scores every fold's test split with a fixed,
/// pre-trained model instead of retraining per fold.
pub fn evaluate_pretrained(
    manifest: &[ManifestEntry],
    features: &FeatureFile,
    model: &super::svm::SvmModel,
    protocol: Protocol,
    filter_single_run: bool,
) -> Result<EvalReport> {
    let (matrix, all_labels) = align_features(manifest, features)?;
    let filter = filter_single_run_attributes(manifest);
    let dropped: BTreeSet<&str> = if filter_single_run {
        filter.dropped.iter().map(|(n, _)| n.as_str()).collect()
    } else {
        BTreeSet::new()
    };
    let labels: Vec<(String, Vec<i8>)> = all_labels
        .into_iter()
        .filter(|(name, _)| !dropped.contains(name.as_str()))
        .collect();
    let folds = match protocol {
        Protocol::LeaveOneRunOut => loro_folds(manifest)?,
        Protocol::RandomSplit { train_fraction, seed } => {
            vec![random_split(manifest, train_fraction, seed)?]
        }
    };
    let mut ap_per_fold: Vec<Vec<Option<f64>>> = vec![Vec::new(); labels.len()];
    for fold in &folds {
        let test_matrix = matrix.select(Axis(0), &fold.test);
        let fold_scores = scores(model, test_matrix.view())?;
        for (ai, (name, y)) in labels.iter().enumerate() {
            let test_labels: Vec<bool> = fold.test.iter().map(|&i| y[i] > 0).collect();
            let has_positive = test_labels.iter().any(|l| *l);
            let entry = fold_scores
                .iter()
                .find(|(n, _)| n == name)
                .filter(|_| has_positive)
                .map(|(_, s)| average_precision(s, &test_labels))
                .transpose()?;
            ap_per_fold[ai].push(entry);
        }
    }
    let n = manifest.len() as f64;
    let mut attributes = Vec::new();
    for (ai, (name, y)) in labels.iter().enumerate() {
        let defined: Vec<f64> = ap_per_fold[ai].iter().flatten().copied().collect();
        let mean_ap = if defined.is_empty() {
            None
        } else {
            Some(defined.iter().sum::<f64>() / defined.len() as f64)
        };
        let excluded_reason = if mean_ap.is_none() {
            Some("AP undefined in every fold (no test positives or untrainable)".to_string())
        } else {
            None
        };
        attributes.push(AttributeReport {
            name: name.clone(),
            ap_per_fold: ap_per_fold[ai].clone(),
            mean_ap,
            prevalence: y.iter().filter(|v| **v > 0).count() as f64 / n,
            excluded_reason,
        });
    }
    let included: Vec<&AttributeReport> =
        attributes.iter().filter(|a| a.mean_ap.is_some()).collect();
    if included.is_empty() {
        return Err(Error::InsufficientData(
            "no attribute had a defined AP in any fold".to_string(),
        ));
    }
    let map = included.iter().map(|a| a.mean_ap.unwrap()).sum::<f64>() / included.len() as f64;
    let mean_prevalence =
        included.iter().map(|a| a.prevalence).sum::<f64>() / included.len() as f64;
    Ok(EvalReport {
        protocol: format!("{} (pretrained model)", protocol.name()),
        regularization_c: model.scorers.first().map(|s| s.c).unwrap_or(f64::NAN),
        folds: folds
            .iter()
            .map(|f| FoldSummary {
                test_run: f.test_run,
                train_size: f.train.len(),
                test_size: f.test.len(),
            })
            .collect(),
        attributes,
        map,
        mean_prevalence,
        filtered_single_run: if filter_single_run { filter.dropped } else { Vec::new() },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(id: usize, run: u32, attrs: &[&str]) -> ManifestEntry {
        ManifestEntry {
            id: format!("img_{id:06}"),
            path: format!("images/img_{id:06}.xsim"),
            run_id: run,
            seed: id as u64,
            attributes: attrs.iter().map(|s| s.to_string()).collect(),
            extended: Vec::new(),
            recipe_digest: String::new(),
            extra: Default::default(),
        }
    }

    #[test]
    fn loro_partitions_ids() {
        let manifest: Vec<ManifestEntry> = (0..26)
            .map(|i| entry(i, (i % 13) as u32, &["Ring"]))
            .collect();
        let folds = loro_folds(&manifest).unwrap();
        assert_eq!(folds.len(), 13);
        let mut seen = BTreeSet::new();
        for fold in &folds {
            assert_eq!(fold.test.len(), 2);
            assert_eq!(fold.train.len(), 24);
            for &i in &fold.test {
                assert!(seen.insert(i), "test sets overlap");
            }
        }
        assert_eq!(seen.len(), 26);
    }

    #[test]
    fn loro_respects_sizes_and_sparse_run_ids() {
        let mut manifest = Vec::new();
        for i in 0..3 {
            manifest.push(entry(i, 2, &["Ring"]));
        }
        for i in 3..10 {
            manifest.push(entry(i, 9, &["Ring"]));
        }
        let folds = loro_folds(&manifest).unwrap();
        assert_eq!(folds.len(), 2);
        assert_eq!(folds[0].test_run, Some(2));
        assert_eq!(folds[0].test.len(), 3);
        assert_eq!(folds[1].test_run, Some(9));
        assert_eq!(folds[1].test.len(), 7);
    }

    #[test]
    fn single_run_is_an_error() {
        let manifest: Vec<ManifestEntry> = (0..5).map(|i| entry(i, 3, &["Ring"])).collect();
        assert!(matches!(loro_folds(&manifest), Err(Error::SingleRun)));
    }

    #[test]
    fn filter_drops_exactly_single_run_attributes() {
        let mut manifest = Vec::new();
        manifest.push(entry(0, 0, &["Ring", "Halo", "BCC"]));
        manifest.push(entry(1, 1, &["Ring", "FCC"]));
        manifest.push(entry(2, 4, &["Ring", "Halo", "Weak scattering"]));
        let report = filter_single_run_attributes(&manifest);
        assert!(report.kept.contains(&"Ring".to_string()));
        assert!(report.kept.contains(&"Halo".to_string()));
        let dropped: BTreeMap<String, u32> = report.dropped.into_iter().collect();
        assert_eq!(dropped["BCC"], 0);
        assert_eq!(dropped["FCC"], 1);
        assert_eq!(dropped["Weak scattering"], 4);
        assert_eq!(dropped.len(), 3);
    }

    fn oracle_feature_file(manifest: &[ManifestEntry]) -> FeatureFile {
        // feature = the label pattern itself, one column per attribute
        let names: Vec<&str> = Attribute::ALL.iter().map(|a| a.name()).collect();
        let matrix = Array2::from_shape_fn((manifest.len(), names.len()), |(i, j)| {
            if manifest[i].attributes.iter().any(|a| a == names[j]) {
                1.0
            } else {
                0.0
            }
        });
        FeatureFile {
            ids: manifest.iter().map(|e| e.id.clone()).collect(),
            matrix,
        }
    }

    #[test]
    fn oracle_features_reach_map_one() {
        let mut manifest = Vec::new();
        for i in 0..40 {
            let attrs: Vec<&str> = match i % 4 {
                0 => vec!["Ring"],
                1 => vec!["Halo"],
                2 => vec!["Ring", "Halo"],
                _ => vec!["Diffuse low-q"],
            };
            manifest.push(entry(i, (i % 4) as u32, &attrs));
        }
        let features = oracle_feature_file(&manifest);
        let report = evaluate(
            &manifest,
            &features,
            Protocol::LeaveOneRunOut,
            false,
            &SvmParams {
                c: 10.0,
                ..SvmParams::default()
            },
        )
        .unwrap();
        approx::assert_relative_eq!(report.map, 1.0, epsilon = 1e-9);
        // attributes with no positives anywhere are excluded with a reason
        let bcc = report.attributes.iter().find(|a| a.name == "BCC").unwrap();
        assert!(bcc.excluded_reason.is_some());
    }

    #[test]
    fn noise_features_stay_near_prevalence() {
        use rand::{Rng, SeedableRng};
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut manifest = Vec::new();
        for i in 0..400 {
            let mut attrs = vec![];
            if rng.gen_bool(0.5) {
                attrs.push("Ring");
            }
            if attrs.is_empty() {
                attrs.push("Halo");
            }
            manifest.push(entry(i, (i % 4) as u32, &attrs));
        }
        let matrix = Array2::from_shape_fn((manifest.len(), 8), |_| rng.gen::<f64>());
        let features = FeatureFile {
            ids: manifest.iter().map(|e| e.id.clone()).collect(),
            matrix,
        };
        let report = evaluate(
            &manifest,
            &features,
            Protocol::RandomSplit {
                train_fraction: 0.5,
                seed: 3,
            },
            false,
            &SvmParams::default(),
        )
        .unwrap();
        assert!(
            (report.map - report.mean_prevalence).abs() < 0.08,
            "map {} vs prevalence {}",
            report.map,
            report.mean_prevalence
        );
    }

    #[test]
    fn random_split_covers_everything_once() {
        let manifest: Vec<ManifestEntry> =
            (0..30).map(|i| entry(i, (i % 3) as u32, &["Ring"])).collect();
        let fold = random_split(&manifest, 0.8, 7).unwrap();
        assert_eq!(fold.train.len(), 24);
        assert_eq!(fold.test.len(), 6);
        let mut all: Vec<usize> = fold.train.iter().chain(&fold.test).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..30).collect::<Vec<_>>());
    }

    #[test]
    fn evaluate_with_filter_reports_dropped() {
        let mut manifest = Vec::new();
        for i in 0..30 {
            let mut attrs = vec!["Ring"];
            if i % 2 == 0 {
                attrs.push("Halo");
            }
            if i % 5 == 0 {
                attrs.push("BCC"); // i in {0,5,10,15,20,25}
            }
            manifest.push(entry(i, if i % 5 == 0 { 0 } else { 1 + (i % 2) as u32 }, &attrs));
        }
        let features = oracle_feature_file(&manifest);
        let report = evaluate(
            &manifest,
            &features,
            Protocol::RandomSplit {
                train_fraction: 0.7,
                seed: 1,
            },
            true,
            &SvmParams::default(),
        )
        .unwrap();
        assert!(report
            .filtered_single_run
            .iter()
            .any(|(name, run)| name == "BCC" && *run == 0));
        assert!(!report.attributes.iter().any(|a| a.name == "BCC"));
    }
}
