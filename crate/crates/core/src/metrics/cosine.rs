use std::collections::BTreeMap;

use super::MetricError;
use crate::scalar::Scalar;

fn term_frequencies(tokens: &[String]) -> BTreeMap<&str, u64> {
    let mut tf = BTreeMap::new();
    for t in tokens {
        *tf.entry(t.as_str()).or_insert(0) += 1;
    }
    tf
}

/// Cosine of the angle between raw term-frequency vectors.
///
/// Counts are non-negative, so the value lies in [0, 1]. Dot product and
/// squared norms are accumulated in integers, which makes the result exactly
/// symmetric and exactly 1 for identical token multisets.
pub fn cosine_tokens<T: Scalar>(a: &[String], b: &[String]) -> Result<T, MetricError> {
    if a.is_empty() {
        return Err(MetricError::EmptyText { side: "candidate" });
    }
    if b.is_empty() {
        return Err(MetricError::EmptyText { side: "reference" });
    }
    let ta = term_frequencies(a);
    let tb = term_frequencies(b);
    let dot: u64 = ta
        .iter()
        .filter_map(|(term, &x)| tb.get(term).map(|&y| x * y))
        .sum();
    let na: u64 = ta.values().map(|&x| x * x).sum();
    let nb: u64 = tb.values().map(|&y| y * y).sum();
    if dot == na && na == nb {
        // Cauchy-Schwarz equality with equal norms: identical vectors.
        return Ok(T::one());
    }
    let to_t = |v: u64| T::from_u64(v).expect("count fits in float");
    let (small, large) = if na <= nb { (na, nb) } else { (nb, na) };
    let denom = to_t(small).sqrt() * to_t(large).sqrt();
    Ok((to_t(dot) / denom).min(T::one()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::tokenize;

    fn cos(a: &str, b: &str) -> f64 {
        cosine_tokens(&tokenize(a), &tokenize(b)).unwrap()
    }

    #[test]
    fn worked_example() {
        // dot = 2*1 + 1*2 = 4, |a| = |b| = sqrt 5.
        assert!((cos("safe safe system", "safe system system") - 0.8).abs() < 1e-15);
    }

    #[test]
    fn identity_and_orthogonality() {
        assert_eq!(cos("a b b c", "b a c b"), 1.0);
        assert_eq!(cos("a b", "c d"), 0.0);
    }

    #[test]
    fn symmetric_bitwise() {
        let x = "the pump is safe when the alarm is raised";
        let y = "an alarm shows the pump state";
        assert_eq!(cos(x, y).to_bits(), cos(y, x).to_bits());
    }

    #[test]
    fn empty_errors() {
        assert!(cosine_tokens::<f64>(&[], &tokenize("a")).is_err());
    }
}
