use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{tokenize, MetricError, MetricId, MetricRegistry};
use crate::codec::FormalizedText;
use crate::scalar::{in_unit_interval, Scalar};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RuleError {
    #[error("a detection rule needs at least one clause")]
    NoClauses,
    #[error("metric `{0}` appears in more than one clause")]
    DuplicateMetric(MetricId),
    #[error("threshold {value} for `{metric}` is outside [0, 1]")]
    ThresholdOutOfRange { metric: MetricId, value: f64 },
}

/// One clause of a detection rule: `metric(case, pattern) >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "ThresholdWire<T>")]
pub struct MetricThreshold<T: Scalar> {
    metric: MetricId,
    threshold: T,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct ThresholdWire<T> {
    metric: MetricId,
    threshold: T,
}

impl<T: Scalar> TryFrom<ThresholdWire<T>> for MetricThreshold<T> {
    type Error = RuleError;

    fn try_from(w: ThresholdWire<T>) -> Result<Self, Self::Error> {
        MetricThreshold::new(w.metric, w.threshold)
    }
}

impl<T: Scalar> MetricThreshold<T> {
    pub fn new(metric: MetricId, threshold: T) -> Result<Self, RuleError> {
        if !in_unit_interval(threshold) {
            return Err(RuleError::ThresholdOutOfRange {
                metric,
                value: threshold.widen(),
            });
        }
        Ok(Self { metric, threshold })
    }

    pub fn metric(&self) -> &MetricId {
        &self.metric
    }

    pub fn threshold(&self) -> T {
        self.threshold
    }
}

/// Conjunction of metric thresholds. The pattern counts as detected when
/// every clause holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar", try_from = "RuleWire<T>")]
pub struct DetectionRule<T: Scalar> {
    clauses: Vec<MetricThreshold<T>>,
}

#[derive(Deserialize)]
#[serde(bound = "T: Scalar")]
struct RuleWire<T: Scalar> {
    clauses: Vec<MetricThreshold<T>>,
}

impl<T: Scalar> TryFrom<RuleWire<T>> for DetectionRule<T> {
    type Error = RuleError;

    fn try_from(w: RuleWire<T>) -> Result<Self, Self::Error> {
        DetectionRule::new(w.clauses)
    }
}

impl<T: Scalar> DetectionRule<T> {
    pub fn new(clauses: Vec<MetricThreshold<T>>) -> Result<Self, RuleError> {
        if clauses.is_empty() {
            return Err(RuleError::NoClauses);
        }
        let mut seen = BTreeSet::new();
        for c in &clauses {
            if !seen.insert(c.metric.name().to_string()) {
                return Err(RuleError::DuplicateMetric(c.metric.clone()));
            }
        }
        Ok(Self { clauses })
    }

    /// BLEU and cosine clauses with separate thresholds.
    pub fn bleu_cosine(bleu: T, cosine: T) -> Result<Self, RuleError> {
        Self::new(vec![
            MetricThreshold::new(MetricId::Bleu, bleu)?,
            MetricThreshold::new(MetricId::CosineSimilarity, cosine)?,
        ])
    }

    /// BLEU and cosine clauses sharing one threshold.
    pub fn uniform(threshold: T) -> Result<Self, RuleError> {
        Self::bleu_cosine(threshold, threshold)
    }

    pub fn clauses(&self) -> &[MetricThreshold<T>] {
        &self.clauses
    }

    pub fn threshold_for(&self, metric: &MetricId) -> Option<T> {
        self.clauses
            .iter()
            .find(|c| c.metric.name() == metric.name())
            .map(|c| c.threshold)
    }
}

/// Value of one clause's metric and whether the clause holds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct MetricResult<T: Scalar> {
    pub metric: MetricId,
    pub value: T,
    pub threshold: T,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RuleOutcome<T: Scalar> {
    pub detected: bool,
    pub results: Vec<MetricResult<T>>,
}

/// Applies `rule` with the standard metrics. The case is the candidate
/// text and the pattern the reference.
pub fn evaluate_rule<T: Scalar>(
    rule: &DetectionRule<T>,
    pattern: &FormalizedText,
    case: &FormalizedText,
) -> Result<RuleOutcome<T>, MetricError> {
    evaluate_rule_with(&MetricRegistry::standard(), rule, &pattern.body(), &case.body())
}

/// Applies `rule` to raw pattern and case bodies using metrics from `registry`.
pub fn evaluate_rule_with<T: Scalar>(
    registry: &MetricRegistry<T>,
    rule: &DetectionRule<T>,
    pattern_body: &str,
    case_body: &str,
) -> Result<RuleOutcome<T>, MetricError> {
    let reference = tokenize(pattern_body);
    let candidate = tokenize(case_body);
    let mut results = Vec::with_capacity(rule.clauses.len());
    for clause in &rule.clauses {
        let value = registry.score(&clause.metric, &candidate, &reference)?;
        results.push(MetricResult {
            metric: clause.metric.clone(),
            value,
            threshold: clause.threshold,
            satisfied: value >= clause.threshold,
        });
    }
    Ok(RuleOutcome {
        detected: results.iter().all(|r| r.satisfied),
        results,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn outcome(t: f64, pattern: &str, case: &str) -> RuleOutcome<f64> {
        let rule = DetectionRule::uniform(t).unwrap();
        evaluate_rule_with(&MetricRegistry::standard(), &rule, pattern, case).unwrap()
    }

    #[test]
    fn identical_detected_at_one() {
        let o = outcome(1.0, "Goal(G1, \"pump is safe\")", "Goal(G1, \"pump is safe\")");
        assert!(o.detected);
        assert!(o.results.iter().all(|r| r.value == 1.0));
    }

    #[test]
    fn disjoint_not_detected() {
        assert!(!outcome(0.2, "alpha beta", "gamma delta").detected);
    }

    #[test]
    fn zero_threshold_always_holds() {
        assert!(outcome(0.0, "alpha beta", "gamma delta").detected);
    }

    #[test]
    fn invalid_rules() {
        assert_eq!(DetectionRule::<f64>::new(vec![]), Err(RuleError::NoClauses));
        assert!(matches!(
            DetectionRule::<f64>::uniform(1.2),
            Err(RuleError::ThresholdOutOfRange { .. })
        ));
        assert!(matches!(
            DetectionRule::<f64>::uniform(f64::NAN),
            Err(RuleError::ThresholdOutOfRange { .. })
        ));
        let dup = vec![
            MetricThreshold::new(MetricId::Bleu, 0.2).unwrap(),
            MetricThreshold::new(MetricId::Bleu, 0.3).unwrap(),
        ];
        assert!(matches!(DetectionRule::new(dup), Err(RuleError::DuplicateMetric(MetricId::Bleu))));
    }

    #[test]
    fn json_round_trip_and_validation() {
        let rule = DetectionRule::<f64>::bleu_cosine(0.4, 0.6).unwrap();
        let json = serde_json::to_string(&rule).unwrap();
        assert_eq!(
            json,
            r#"{"clauses":[{"metric":"bleu","threshold":0.4},{"metric":"cosine","threshold":0.6}]}"#
        );
        assert_eq!(serde_json::from_str::<DetectionRule<f64>>(&json).unwrap(), rule);
        assert!(serde_json::from_str::<DetectionRule<f64>>(r#"{"clauses":[]}"#).is_err());
        assert!(
            serde_json::from_str::<DetectionRule<f64>>(r#"{"clauses":[{"metric":"bleu","threshold":1.2}]}"#).is_err()
        );
    }
}
