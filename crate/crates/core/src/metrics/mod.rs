//! Text similarity metrics and the conjunctive detection rule.
//!
//! Both built-in metrics work on the token stream produced by [`tokenize`].
//! The candidate side is the formalized assurance case, the reference side
//! the formalized pattern; only the body (no header line) is compared.

mod bleu;
mod cosine;
mod rule;
mod tokenize;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::scalar::Scalar;

pub use bleu::{bleu_tokens, MAX_ORDER};
pub use cosine::cosine_tokens;
pub use rule::{evaluate_rule, evaluate_rule_with, DetectionRule, MetricResult, MetricThreshold, RuleError, RuleOutcome};
pub use tokenize::tokenize;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("{side} text has no tokens")]
    EmptyText { side: &'static str },
    #[error("no metric registered under `{0}`")]
    UnknownMetric(String),
}

/// Identifier of a similarity metric. Serialized as its lowercase name.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum MetricId {
    Bleu,
    CosineSimilarity,
    /// A metric supplied through a [`MetricRegistry`] extension.
    Custom(String),
}

impl MetricId {
    pub fn name(&self) -> &str {
        match self {
            MetricId::Bleu => "bleu",
            MetricId::CosineSimilarity => "cosine",
            MetricId::Custom(name) => name,
        }
    }
}

impl fmt::Display for MetricId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid metric name `{0}`")]
pub struct InvalidMetricName(pub String);

impl FromStr for MetricId {
    type Err = InvalidMetricName;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bleu" => Ok(MetricId::Bleu),
            "cosine" | "cosine_similarity" => Ok(MetricId::CosineSimilarity),
            _ if !s.is_empty() && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') => {
                Ok(MetricId::Custom(s.to_string()))
            }
            _ => Err(InvalidMetricName(s.to_string())),
        }
    }
}

impl Serialize for MetricId {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for MetricId {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// A similarity score over token sequences, in [0, 1].
pub trait SimilarityMetric<T: Scalar>: Send + Sync {
    fn id(&self) -> MetricId;
    fn score(&self, candidate: &[String], reference: &[String]) -> Result<T, MetricError>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Bleu;

impl<T: Scalar> SimilarityMetric<T> for Bleu {
    fn id(&self) -> MetricId {
        MetricId::Bleu
    }

    fn score(&self, candidate: &[String], reference: &[String]) -> Result<T, MetricError> {
        bleu_tokens(candidate, reference)
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Cosine;

impl<T: Scalar> SimilarityMetric<T> for Cosine {
    fn id(&self) -> MetricId {
        MetricId::CosineSimilarity
    }

    fn score(&self, candidate: &[String], reference: &[String]) -> Result<T, MetricError> {
        cosine_tokens(candidate, reference)
    }
}

/// Metrics keyed by name. [`MetricRegistry::standard`] holds BLEU and cosine.
#[derive(Clone)]
pub struct MetricRegistry<T: Scalar> {
    metrics: BTreeMap<String, Arc<dyn SimilarityMetric<T>>>,
}

impl<T: Scalar> MetricRegistry<T> {
    pub fn empty() -> Self {
        Self { metrics: BTreeMap::new() }
    }

    pub fn standard() -> Self {
        let mut r = Self::empty();
        r.register(Arc::new(Bleu));
        r.register(Arc::new(Cosine));
        r
    }

    /// Adds or replaces the metric registered under its id's name.
    pub fn register(&mut self, metric: Arc<dyn SimilarityMetric<T>>) {
        self.metrics.insert(metric.id().name().to_string(), metric);
    }

    pub fn get(&self, id: &MetricId) -> Option<&Arc<dyn SimilarityMetric<T>>> {
        self.metrics.get(id.name())
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.metrics.keys().map(String::as_str)
    }

    pub fn score(&self, id: &MetricId, candidate: &[String], reference: &[String]) -> Result<T, MetricError> {
        let metric = self
            .get(id)
            .ok_or_else(|| MetricError::UnknownMetric(id.name().to_string()))?;
        metric.score(candidate, reference)
    }
}

impl<T: Scalar> Default for MetricRegistry<T> {
    fn default() -> Self {
        Self::standard()
    }
}

impl<T: Scalar> fmt::Debug for MetricRegistry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.metrics.keys()).finish()
    }
}

/// BLEU of two raw texts after tokenization.
pub fn bleu<T: Scalar>(candidate: &str, reference: &str) -> Result<T, MetricError> {
    bleu_tokens(&tokenize(candidate), &tokenize(reference))
}

/// Cosine similarity of two raw texts after tokenization.
pub fn cosine<T: Scalar>(a: &str, b: &str) -> Result<T, MetricError> {
    cosine_tokens(&tokenize(a), &tokenize(b))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn metric_names_round_trip() {
        for id in [MetricId::Bleu, MetricId::CosineSimilarity, MetricId::Custom("rouge_l".into())] {
            assert_eq!(id.name().parse::<MetricId>().unwrap(), id);
            let json = serde_json::to_string(&id).unwrap();
            assert_eq!(serde_json::from_str::<MetricId>(&json).unwrap(), id);
        }
        assert!("".parse::<MetricId>().is_err());
        assert!("a b".parse::<MetricId>().is_err());
    }

    struct Overlap;

    impl SimilarityMetric<f64> for Overlap {
        fn id(&self) -> MetricId {
            MetricId::Custom("overlap".into())
        }
        fn score(&self, c: &[String], r: &[String]) -> Result<f64, MetricError> {
            let hits = c.iter().filter(|t| r.contains(t)).count();
            Ok(hits as f64 / c.len().max(1) as f64)
        }
    }

    #[test]
    fn registry_extension() {
        let mut reg = MetricRegistry::<f64>::standard();
        reg.register(Arc::new(Overlap));
        assert_eq!(reg.names().collect::<Vec<_>>(), vec!["bleu", "cosine", "overlap"]);
        let c = tokenize("a b c d");
        let r = tokenize("a b");
        assert_eq!(reg.score(&MetricId::Custom("overlap".into()), &c, &r).unwrap(), 0.5);
        assert!(matches!(
            reg.score(&MetricId::Custom("nope".into()), &c, &r),
            Err(MetricError::UnknownMetric(_))
        ));
    }
}
