//! Pattern detection over candidate libraries and the threshold-sweep
//! evaluation protocol (precision, recall, F-measure averaged over runs).

mod report;

use std::collections::BTreeSet;
use std::sync::Arc;

use log::{debug, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::codec::{serialize_case, serialize_pattern, CodecError, FormalizedText};
use crate::corpus::Corpus;
use crate::instantiation::{build_prompt, parse_verdict, GenerationBackend, InstantiationError, PromptTask};
use crate::metrics::{evaluate_rule_with, DetectionRule, MetricError, MetricRegistry, MetricResult, RuleError};
use crate::model::{GoalStructure, PatternDocument};
use crate::scalar::{in_unit_interval, Scalar};

pub use report::{format_score, EvaluationReport, EvaluationRow};

/// Label used for the in-process deterministic rule engine.
pub const DETERMINISTIC: &str = "deterministic";

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DetectionError {
    #[error("detection job has no candidate patterns")]
    NoCandidates,
    #[error("runs must be at least 1")]
    ZeroRuns,
    #[error("candidate pattern `{0}` appears more than once")]
    DuplicateCandidate(String),
    #[error("ground truth for `{0}` is empty")]
    EmptyGroundTruth(String),
    #[error("threshold {0} is outside [0, 1]")]
    ThresholdOutOfRange(f64),
    #[error("invalid structure in `{name}`: {source}")]
    InvalidStructure { name: String, source: CodecError },
    #[error(transparent)]
    Rule(#[from] RuleError),
    #[error(transparent)]
    Metric(#[from] MetricError),
    #[error("generation backend unavailable: {0}")]
    BackendUnavailable(String),
}

/// Detection of candidate patterns in one assurance case.
#[derive(Clone)]
pub struct DetectionJob<T: Scalar> {
    pub case: GoalStructure,
    pub candidates: Vec<PatternDocument>,
    pub rule: DetectionRule<T>,
    pub runs: usize,
    /// When set, the backend is also asked to apply the rule and its verdict
    /// is recorded next to the deterministic one.
    pub backend: Option<Arc<dyn GenerationBackend>>,
}

impl<T: Scalar> DetectionJob<T> {
    pub fn new(case: GoalStructure, candidates: Vec<PatternDocument>, rule: DetectionRule<T>) -> Self {
        Self {
            case,
            candidates,
            rule,
            runs: 1,
            backend: None,
        }
    }

    pub fn runs(mut self, runs: usize) -> Self {
        self.runs = runs;
        self
    }

    pub fn backend(mut self, backend: Arc<dyn GenerationBackend>) -> Self {
        self.backend = Some(backend);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct RunVerdict<T: Scalar> {
    pub run: usize,
    pub detected: bool,
    pub results: Vec<MetricResult<T>>,
    /// Verdict stated by the generation backend, if one was consulted.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend_verdict: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct CandidateReport<T: Scalar> {
    pub pattern: String,
    pub runs: Vec<RunVerdict<T>>,
    pub detected_runs: usize,
    /// Detected in more than half of the runs.
    pub detected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct DetectionReport<T: Scalar> {
    pub case: String,
    pub backend: String,
    pub runs: usize,
    pub candidates: Vec<CandidateReport<T>>,
}

impl<T: Scalar> DetectionReport<T> {
    /// Patterns with a majority verdict of detected.
    pub fn detected_patterns(&self) -> BTreeSet<String> {
        self.candidates
            .iter()
            .filter(|c| c.detected)
            .map(|c| c.pattern.clone())
            .collect()
    }

    /// Patterns detected in run `run` (0-based).
    pub fn detected_in_run(&self, run: usize) -> BTreeSet<String> {
        self.candidates
            .iter()
            .filter(|c| c.runs.get(run).is_some_and(|r| r.detected))
            .map(|c| c.pattern.clone())
            .collect()
    }
}

/// `|detected ∩ truth| / |detected|`, or 0 when nothing was detected.
pub fn precision<T: Scalar>(detected: &BTreeSet<String>, truth: &BTreeSet<String>) -> T {
    if detected.is_empty() {
        return T::zero();
    }
    T::from_count(detected.intersection(truth).count()) / T::from_count(detected.len())
}

/// `|detected ∩ truth| / |truth|`.
pub fn recall<T: Scalar>(detected: &BTreeSet<String>, truth: &BTreeSet<String>) -> Result<T, DetectionError> {
    if truth.is_empty() {
        return Err(DetectionError::EmptyGroundTruth(String::new()));
    }
    Ok(T::from_count(detected.intersection(truth).count()) / T::from_count(truth.len()))
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f_measure<T: Scalar>(precision: T, recall: T) -> T {
    let sum = precision + recall;
    if sum == T::zero() {
        return T::zero();
    }
    T::from_count(2) * precision * recall / sum
}

struct Prepared<'a> {
    name: &'a str,
    pattern: &'a PatternDocument,
    text: FormalizedText,
}

fn prepare_case(case: &GoalStructure) -> Result<FormalizedText, DetectionError> {
    serialize_case(case).map_err(|source| DetectionError::InvalidStructure {
        name: case.name().to_string(),
        source,
    })
}

fn prepare_candidates<'a>(
    candidates: impl IntoIterator<Item = (&'a str, &'a PatternDocument)>,
) -> Result<Vec<Prepared<'a>>, DetectionError> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (name, pattern) in candidates {
        if !seen.insert(name) {
            return Err(DetectionError::DuplicateCandidate(name.to_string()));
        }
        let text = serialize_pattern(pattern).map_err(|source| DetectionError::InvalidStructure {
            name: name.to_string(),
            source,
        })?;
        out.push(Prepared { name, pattern, text });
    }
    if out.is_empty() {
        return Err(DetectionError::NoCandidates);
    }
    Ok(out)
}

fn ask_backend<T: Scalar>(
    backend: &dyn GenerationBackend,
    pattern: &PatternDocument,
    case: &GoalStructure,
    rule: &DetectionRule<T>,
) -> Result<Option<bool>, DetectionError> {
    let prompt = build_prompt(PromptTask::Detect, pattern, Some(case), None, Some(rule)).map_err(|e| match e {
        InstantiationError::InvalidPattern(source) => DetectionError::InvalidStructure {
            name: pattern.name().to_string(),
            source,
        },
        other => DetectionError::BackendUnavailable(other.to_string()),
    })?;
    let reply = backend
        .complete(&prompt)
        .map_err(|e| DetectionError::BackendUnavailable(e.to_string()))?;
    Ok(parse_verdict(&reply))
}

fn run_detection<T: Scalar>(
    case: &GoalStructure,
    case_text: &FormalizedText,
    candidates: &[Prepared<'_>],
    rule: &DetectionRule<T>,
    runs: usize,
    backend: Option<&dyn GenerationBackend>,
) -> Result<DetectionReport<T>, DetectionError> {
    if runs == 0 {
        return Err(DetectionError::ZeroRuns);
    }
    let registry = MetricRegistry::standard();
    let case_body = case_text.body();
    let mut reports = Vec::with_capacity(candidates.len());
    for c in candidates {
        let pattern_body = c.text.body();
        let mut verdicts = Vec::with_capacity(runs);
        for run in 0..runs {
            let outcome = evaluate_rule_with(&registry, rule, &pattern_body, &case_body)?;
            let backend_verdict = match backend {
                Some(b) => {
                    let v = ask_backend(b, c.pattern, case, rule)?;
                    match v {
                        Some(v) if v != outcome.detected => warn!(
                            "backend `{}` says {} for `{}` in `{}` (run {run}); deterministic verdict is {}",
                            b.name(),
                            v,
                            c.name,
                            case.name(),
                            outcome.detected
                        ),
                        None => warn!("backend `{}` gave no verdict for `{}` (run {run})", b.name(), c.name),
                        _ => {}
                    }
                    v
                }
                None => None,
            };
            verdicts.push(RunVerdict {
                run,
                detected: outcome.detected,
                results: outcome.results,
                backend_verdict,
            });
        }
        let detected_runs = verdicts.iter().filter(|v| v.detected).count();
        debug!("{} in {}: detected in {detected_runs}/{runs} runs", c.name, case.name());
        reports.push(CandidateReport {
            pattern: c.name.to_string(),
            runs: verdicts,
            detected_runs,
            detected: 2 * detected_runs > runs,
        });
    }
    Ok(DetectionReport {
        case: case.name().to_string(),
        backend: backend.map_or(DETERMINISTIC, |b| b.name()).to_string(),
        runs,
        candidates: reports,
    })
}

/// Evaluates the job's rule for every candidate and run. Candidates are
/// judged one at a time; patterns are never merged.
pub fn detect<T: Scalar>(job: &DetectionJob<T>) -> Result<DetectionReport<T>, DetectionError> {
    let case_text = prepare_case(&job.case)?;
    let candidates = prepare_candidates(job.candidates.iter().map(|p| (p.name(), p)))?;
    run_detection(&job.case, &case_text, &candidates, &job.rule, job.runs, job.backend.as_deref())
}

/// A backend column of an evaluation: `None` runs the deterministic engine only.
#[derive(Clone)]
pub struct EvaluationBackend {
    pub label: String,
    pub backend: Option<Arc<dyn GenerationBackend>>,
}

impl EvaluationBackend {
    pub fn deterministic() -> Self {
        Self {
            label: DETERMINISTIC.to_string(),
            backend: None,
        }
    }

    pub fn remote(backend: Arc<dyn GenerationBackend>) -> Self {
        Self {
            label: backend.name().to_string(),
            backend: Some(backend),
        }
    }
}

struct Cell<T> {
    case: usize,
    backend: usize,
    threshold: T,
}

/// Threshold sweep over a corpus: one row per (system, backend, threshold)
/// with precision, recall and F-measure averaged over `runs`. Each metric
/// threshold is set to the same value. Cells run in parallel; a failing
/// cell is reported in its row without stopping the others.
pub fn evaluate_corpus<T: Scalar>(
    corpus: &Corpus,
    thresholds: &[T],
    runs: usize,
    backends: &[EvaluationBackend],
) -> Result<EvaluationReport<T>, DetectionError> {
    if runs == 0 {
        return Err(DetectionError::ZeroRuns);
    }
    if let Some(t) = thresholds.iter().find(|t| !in_unit_interval(**t)) {
        return Err(DetectionError::ThresholdOutOfRange(t.widen()));
    }
    let cases: Vec<_> = corpus.cases.iter().collect();
    let mut prepared = Vec::with_capacity(cases.len());
    for (name, case) in &cases {
        let text = prepare_case(&case.structure);
        let candidates = prepare_candidates(
            case.candidates
                .iter()
                .filter_map(|n| corpus.patterns.get(n).map(|p| (n.as_str(), p))),
        );
        prepared.push((name.as_str(), case, text, candidates));
    }

    let mut cells = Vec::new();
    for case in 0..cases.len() {
        for backend in 0..backends.len() {
            for &threshold in thresholds {
                cells.push(Cell { case, backend, threshold });
            }
        }
    }

    let rows = cells
        .par_iter()
        .map(|cell| {
            let (system, case, text, candidates) = &prepared[cell.case];
            let backend = &backends[cell.backend];
            let computed = (|| {
                let text = text.as_ref().map_err(Clone::clone)?;
                let candidates = candidates.as_ref().map_err(Clone::clone)?;
                if case.truth.is_empty() {
                    return Err(DetectionError::EmptyGroundTruth(system.to_string()));
                }
                let rule = DetectionRule::uniform(cell.threshold)?;
                let report =
                    run_detection(&case.structure, text, candidates, &rule, runs, backend.backend.as_deref())?;
                let (mut p_sum, mut r_sum, mut f_sum) = (T::zero(), T::zero(), T::zero());
                for run in 0..runs {
                    let found = report.detected_in_run(run);
                    let p: T = precision(&found, &case.truth);
                    let r: T = recall(&found, &case.truth)?;
                    p_sum = p_sum + p;
                    r_sum = r_sum + r;
                    f_sum = f_sum + f_measure(p, r);
                }
                let n = T::from_count(runs);
                Ok((p_sum / n, r_sum / n, f_sum / n))
            })();
            match computed {
                Ok((precision, recall, f_measure)) => EvaluationRow {
                    system: system.to_string(),
                    backend: backend.label.clone(),
                    threshold: cell.threshold,
                    recall,
                    precision,
                    f_measure,
                    runs,
                    error: None,
                },
                Err(e) => {
                    warn!("evaluation cell {system}/{}/{} failed: {e}", backend.label, cell.threshold);
                    EvaluationRow {
                        system: system.to_string(),
                        backend: backend.label.clone(),
                        threshold: cell.threshold,
                        recall: T::zero(),
                        precision: T::zero(),
                        f_measure: T::zero(),
                        runs,
                        error: Some(e.to_string()),
                    }
                }
            }
        })
        .collect();

    Ok(EvaluationReport {
        thresholds: thresholds.to_vec(),
        runs,
        rows,
    })
}
