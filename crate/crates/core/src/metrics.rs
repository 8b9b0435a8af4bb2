//! Exact ranking and classification metrics.
//!
//! Tie handling is fixed and frozen by the tests:
//! - AP uses mid-rank interpolation: a positive whose score ties `e` items
//!   (`ep` of them positive, itself included) and sits below `m` strictly
//!   greater items (`mp` positive) contributes precision
//!   `(mp + (ep+1)/2) / (m + (e+1)/2)`. With no ties this is the classic
//!   `(mp+1)/(m+1)`.
//! - ROC-AUC is the Mann-Whitney statistic `P(s+ > s-) + P(s+ = s-)/2`.
//! - MRR ranks the positive at `1 + #above + #tied/2` among its negatives.
//! - Accuracy thresholds with `score >= theta` counting as positive.

use crate::scalar::Real;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricError {
    #[error("scores and labels differ in length ({scores} vs {labels})")]
    LengthMismatch { scores: usize, labels: usize },
    #[error("metric needs at least one positive")]
    NoPositives,
    #[error("metric needs at least one negative")]
    NoNegatives,
    #[error("labels must be 0 or 1")]
    NonBinaryLabel,
    #[error("query {0} must have exactly one positive")]
    MalformedQuery(usize),
    #[error("non-finite score")]
    NonFiniteScore,
}

/// Scored binary outcomes: parallel score/label arrays.
#[derive(Clone, Debug)]
pub struct ScoredLabels<T> {
    pub scores: Vec<T>,
    pub labels: Vec<u8>,
}

impl<T: Real> ScoredLabels<T> {
    pub fn new(scores: Vec<T>, labels: Vec<u8>) -> Result<Self, MetricError> {
        if scores.len() != labels.len() {
            return Err(MetricError::LengthMismatch {
                scores: scores.len(),
                labels: labels.len(),
            });
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(MetricError::NonBinaryLabel);
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(MetricError::NonFiniteScore);
        }
        Ok(ScoredLabels { scores, labels })
    }

    fn positives(&self) -> usize {
        self.labels.iter().filter(|&&l| l == 1).count()
    }
}

/// Average precision over descending scores, ties by mid-rank interpolation.
pub fn average_precision<T: Real>(sl: &ScoredLabels<T>) -> Result<T, MetricError> {
    let n_pos = sl.positives();
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    // Sort indices by score descending; walk tied groups together.
    let mut order: Vec<usize> = (0..sl.scores.len()).collect();
    order.sort_by(|&a, &b| sl.scores[b].partial_cmp(&sl.scores[a]).unwrap());

    let half = T::from_f64(0.5);
    let mut sum = T::zero();
    let mut above = 0usize; // items strictly above the current group
    let mut pos_above = 0usize;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        let mut pos_tied = 0usize;
        while j < order.len() && sl.scores[order[j]] == sl.scores[order[i]] {
            pos_tied += sl.labels[order[j]] as usize;
            j += 1;
        }
        let tied = j - i;
        if pos_tied > 0 {
            let prec = (T::from_usize(pos_above) + half * T::from_usize(pos_tied + 1))
                / (T::from_usize(above) + half * T::from_usize(tied + 1));
            sum += T::from_usize(pos_tied) * prec;
        }
        above += tied;
        pos_above += pos_tied;
        i = j;
    }
    Ok(sum / T::from_usize(n_pos))
}

/// ROC-AUC via the rank-sum form of the Mann-Whitney statistic.
pub fn roc_auc<T: Real>(sl: &ScoredLabels<T>) -> Result<T, MetricError> {
    let n_pos = sl.positives();
    let n_neg = sl.labels.len() - n_pos;
    if n_pos == 0 {
        return Err(MetricError::NoPositives);
    }
    if n_neg == 0 {
        return Err(MetricError::NoNegatives);
    }
    let mut order: Vec<usize> = (0..sl.scores.len()).collect();
    order.sort_by(|&a, &b| sl.scores[a].partial_cmp(&sl.scores[b]).unwrap());

    // Mid-ranks (1-based) within tied groups, summed over positives.
    let half = T::from_f64(0.5);
    let mut rank_sum_pos = T::zero();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && sl.scores[order[j]] == sl.scores[order[i]] {
            j += 1;
        }
        let mid = half * T::from_usize(i + 1 + j); // (first + last) / 2, 1-based
        for &idx in &order[i..j] {
            if sl.labels[idx] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j;
    }
    let np = T::from_usize(n_pos);
    let nn = T::from_usize(n_neg);
    let u = rank_sum_pos - np * (np + T::one()) * half;
    Ok(u / (np * nn))
}

/// One evaluation query: the positive's score against its negatives.
#[derive(Clone, Debug)]
pub struct RankedQuery<T> {
    pub positive: T,
    pub negatives: Vec<T>,
}

/// Mean reciprocal rank over queries with exactly one positive each; tied
/// negatives contribute half a rank.
pub fn mrr<T: Real>(queries: &[RankedQuery<T>]) -> Result<T, MetricError> {
    if queries.is_empty() {
        return Err(MetricError::NoPositives);
    }
    let half = T::from_f64(0.5);
    let mut total = T::zero();
    for (qi, q) in queries.iter().enumerate() {
        if !q.positive.is_finite() || q.negatives.iter().any(|s| !s.is_finite()) {
            return Err(MetricError::MalformedQuery(qi));
        }
        let above = q.negatives.iter().filter(|&&s| s > q.positive).count();
        let tied = q.negatives.iter().filter(|&&s| s == q.positive).count();
        let rank = T::one() + T::from_usize(above) + half * T::from_usize(tied);
        total += T::one() / rank;
    }
    Ok(total / T::from_usize(queries.len()))
}

/// Fraction of `(score >= theta) == label`.
pub fn accuracy_at_threshold<T: Real>(sl: &ScoredLabels<T>, theta: T) -> T {
    if sl.labels.is_empty() {
        return T::zero();
    }
    let correct = sl
        .scores
        .iter()
        .zip(sl.labels.iter())
        .filter(|(&s, &l)| (s >= theta) == (l == 1))
        .count();
    T::from_usize(correct) / T::from_usize(sl.labels.len())
}
