//! Average precision and precision-recall curves.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Ranks indices by descending score; ties keep original order.
fn ranking(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean of precision at the rank of every positive:
/// `AP = (1/P) sum_{k: label_k = +} precision@k`.
pub fn average_precision(scores: &[f64], labels: &[bool]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let mut hits = 0usize;
    let mut ap = 0.0;
    for (k, &idx) in ranking(scores).iter().enumerate() {
        if labels[idx] {
            hits += 1;
            ap += hits as f64 / (k + 1) as f64;
        }
    }
    Ok(ap / positives as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrPoint {
    pub threshold: f64,
    pub recall: f64,
    pub precision: f64,
}

/// Precision-recall curve: one point per distinct score threshold, with
/// positives predicted at `score >= threshold`. Recall is non-decreasing
/// along the list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub attribute: String,
    pub points: Vec<PrPoint>,
}

impl PrCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,recall,precision\n");
        for p in &self.points {
            out.push_str(&format!("{},{},{}\n", p.threshold, p.recall, p.precision));
        }
        out
    }
}

pub fn pr_curve(scores: &[f64], labels: &[bool], attribute: &str) -> Result<PrCurve> {
    assert_eq!(scores.len(), labels.len());
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let positives = labels.iter().filter(|l| **l).count();
    if positives == 0 {
        return Err(Error::NoPositives);
    }
    let order = ranking(scores);
    let mut points = Vec::new();
    let mut tp = 0usize;
    let mut predicted = 0usize;
    let mut i = 0;
    while i < order.len() {
        let threshold = scores[order[i]];
        // consume the whole tie group at this threshold
        while i < order.len() && scores[order[i]] == threshold {
            predicted += 1;
            if labels[order[i]] {
                tp += 1;
            }
            i += 1;
        }
        points.push(PrPoint {
            threshold,
            recall: tp as f64 / positives as f64,
            precision: tp as f64 / predicted as f64,
        });
    }
    Ok(PrCurve {
        attribute: attribute.to_string(),
        points,
    })
}
