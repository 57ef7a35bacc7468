//! Assurance-case toolkit for Goal Structuring Notation.

#[cfg(feature = "proptest")]
pub mod arbitrary;
pub mod codec;
pub mod corpus;
pub mod detection;
pub mod instantiation;
pub mod metrics;
pub mod model;
pub mod persistence;
pub mod scalar;

/// `f64` instantiations of the scalar-generic types.
pub type DetectionRule = metrics::DetectionRule<f64>;
pub type MetricThreshold = metrics::MetricThreshold<f64>;
pub type MetricResult = metrics::MetricResult<f64>;
pub type RuleOutcome = metrics::RuleOutcome<f64>;
pub type DetectionJob = detection::DetectionJob<f64>;
pub type DetectionReport = detection::DetectionReport<f64>;
pub type EvaluationReport = detection::EvaluationReport<f64>;
pub type EvaluationRow = detection::EvaluationRow<f64>;
