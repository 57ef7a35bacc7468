use std::collections::HashMap;

use super::MetricError;
use crate::scalar::Scalar;

pub const MAX_ORDER: usize = 4;

fn ngram_counts(tokens: &[String], n: usize) -> HashMap<&[String], usize> {
    let mut counts = HashMap::new();
    for gram in tokens.windows(n) {
        *counts.entry(gram).or_insert(0) += 1;
    }
    counts
}

/// Clipped n-gram matches and candidate n-gram total for order `n`.
pub(crate) fn clipped_matches(candidate: &[String], reference: &[String], n: usize) -> (usize, usize) {
    let cand = ngram_counts(candidate, n);
    let refs = ngram_counts(reference, n);
    let matches = cand
        .iter()
        .map(|(gram, &count)| count.min(refs.get(gram).copied().unwrap_or(0)))
        .sum();
    (matches, candidate.len().saturating_sub(n - 1))
}

/// Sentence-level BLEU of `candidate` against a single `reference`.
///
/// Geometric mean of clipped n-gram precisions for n = 1..=4 times the
/// brevity penalty `exp(1 - r/c)` when the candidate is shorter. Orders
/// longer than the candidate are left out of the mean, so identical short
/// texts still score 1. A zero precision at n ≥ 2 is replaced by
/// `1 / (2c)`; with no unigram match at all the score is 0.
pub fn bleu_tokens<T: Scalar>(candidate: &[String], reference: &[String]) -> Result<T, MetricError> {
    if candidate.is_empty() {
        return Err(MetricError::EmptyText { side: "candidate" });
    }
    if reference.is_empty() {
        return Err(MetricError::EmptyText { side: "reference" });
    }
    let c = candidate.len();
    let r = reference.len();
    let orders = MAX_ORDER.min(c);
    let floor = T::one() / (T::from_count(2) * T::from_count(c));

    let mut log_sum = T::zero();
    for n in 1..=orders {
        let (matches, total) = clipped_matches(candidate, reference, n);
        if matches == 0 && n == 1 {
            return Ok(T::zero());
        }
        let precision = if matches == 0 {
            floor
        } else {
            T::from_count(matches) / T::from_count(total)
        };
        log_sum = log_sum + precision.ln();
    }
    let brevity = if c < r {
        (T::one() - T::from_count(r) / T::from_count(c)).exp()
    } else {
        T::one()
    };
    let score = brevity * (log_sum / T::from_count(orders)).exp();
    Ok(score.min(T::one()))
}
