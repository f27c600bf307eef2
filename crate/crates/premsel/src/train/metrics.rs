//! Ranking metrics and score standardization.

use std::collections::BTreeSet;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum MetricsError {
    #[error("the positive set is empty")]
    EmptyPositives,
    #[error("scores have zero variance")]
    ZeroVariance,
    #[error("standardization needs at least two scores, got {0}")]
    TooFewScores(usize),
}

/// Candidate indices ordered by descending score; ties break toward the
/// smaller index, which keeps rankings deterministic.
pub fn rank_by_score(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    order
}

/// Mean, over the positives, of the precision at each positive's rank.
pub fn average_precision(
    ranking: &[usize],
    positives: &BTreeSet<usize>,
) -> Result<f64, MetricsError> {
    if positives.is_empty() {
        return Err(MetricsError::EmptyPositives);
    }
    let mut hits = 0usize;
    let mut sum = 0.0;
    for (i, item) in ranking.iter().enumerate() {
        if positives.contains(item) {
            hits += 1;
            sum += hits as f64 / (i + 1) as f64;
        }
    }
    Ok(sum / positives.len() as f64)
}

/// Fraction of the top-R ranked candidates that are positive, where R is
/// the size of the positive set.
pub fn r_precision(ranking: &[usize], positives: &BTreeSet<usize>) -> Result<f64, MetricsError> {
    if positives.is_empty() {
        return Err(MetricsError::EmptyPositives);
    }
    let r = positives.len();
    let hits = ranking
        .iter()
        .take(r)
        .filter(|item| positives.contains(item))
        .count();
    Ok(hits as f64 / r as f64)
}

/// Standardized score samples grouped by label, with quartiles per group.
#[derive(Debug, Clone, serde::Serialize)]
pub struct StandardizedScores {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
    pub positive_quartiles: Option<[f64; 3]>,
    pub negative_quartiles: Option<[f64; 3]>,
}

/// Z-normalizes scores over the whole set (population convention) and
/// groups the samples by label.
pub fn standardize_scores(
    scores: &[f64],
    labels: &[bool],
) -> Result<StandardizedScores, MetricsError> {
    if scores.len() < 2 {
        return Err(MetricsError::TooFewScores(scores.len()));
    }
    assert_eq!(scores.len(), labels.len());
    let n = scores.len() as f64;
    let mean = scores.iter().sum::<f64>() / n;
    let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / n;
    if var == 0.0 {
        return Err(MetricsError::ZeroVariance);
    }
    let std = var.sqrt();
    let mut positive = Vec::new();
    let mut negative = Vec::new();
    for (s, &l) in scores.iter().zip(labels) {
        let z = (s - mean) / std;
        if l {
            positive.push(z);
        } else {
            negative.push(z);
        }
    }
    Ok(StandardizedScores {
        positive_quartiles: quartiles(&positive),
        negative_quartiles: quartiles(&negative),
        positive,
        negative,
    })
}

/// (Q1, median, Q3) with linear interpolation; `None` for empty samples.
pub fn quartiles(values: &[f64]) -> Option<[f64; 3]> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let at = |q: f64| -> f64 {
        let pos = q * (sorted.len() - 1) as f64;
        let lo = pos.floor() as usize;
        let hi = pos.ceil() as usize;
        if lo == hi {
            sorted[lo]
        } else {
            let frac = pos - lo as f64;
            sorted[lo] * (1.0 - frac) + sorted[hi] * frac
        }
    };
    Some([at(0.25), at(0.5), at(0.75)])
}

/// Mean and half-width of a normal 95% confidence interval over independent
/// repetitions.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct Aggregate {
    pub mean: f64,
    pub ci95: f64,
}

impl Aggregate {
    pub fn over(values: &[f64]) -> Aggregate {
        let n = values.len() as f64;
        if values.is_empty() {
            return Aggregate {
                mean: f64::NAN,
                ci95: f64::NAN,
            };
        }
        let mean = values.iter().sum::<f64>() / n;
        if values.len() < 2 {
            return Aggregate { mean, ci95: 0.0 };
        }
        let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
        Aggregate {
            mean,
            ci95: 1.96 * (var / n).sqrt(),
        }
    }
}
