use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::{DomainKnowledge, InstantiationError};
use crate::codec::{serialize_case, serialize_pattern};
use crate::metrics::DetectionRule;
use crate::model::{GoalStructure, PatternDocument};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PromptTask {
    Instantiate,
    Detect,
}

/// System and user messages for one chat-completion request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PromptPair {
    pub system: String,
    pub user: String,
}

const GSN_CONTEXT: &str = "\
An assurance case is a structured argument, backed by evidence, that a system meets a requirement such as safety.
It is written in Goal Structuring Notation (GSN) as a directed graph of elements:
- Goal: a claim about the system.
- Strategy: the reasoning step that breaks a goal into sub-goals.
- Solution: a reference to evidence that supports a goal.
- Context: information that scopes a goal or strategy.
- Assumption: a statement taken as true without further argument.
- Justification: the rationale for a goal or strategy.
Two relationships connect elements:
- SupportedBy links a goal to a sub-goal, strategy or solution, and a strategy to a sub-goal.
- InContextOf links a goal or strategy to a context, assumption or justification.
The graph has exactly one root goal and no SupportedBy cycles. A goal or strategy may be marked undeveloped when its argument is not yet elaborated.
An assurance case pattern is a reusable assurance case whose statements contain placeholders written in braces, such as {System}.";

const FORMALIZATION_RULES: &str = "\
Both patterns and assurance cases are written one statement per line:
- The first line is the header `AssuranceCase: <name>` (or `Pattern: <name>` for a pattern).
- An element line is `Kind(Id, \"Statement\")` where Kind is Goal, Strategy, Solution, Context, Assumption or Justification.
- `Undeveloped(Id)` marks a goal or strategy as undeveloped.
- `SupportedBy(ParentId, ChildId)` and `InContextOf(SourceId, ContextId)` are relationship lines.
- Inside a statement, write a double quote as \\\" and a backslash as \\\\.
- Lines starting with # are comments.";

/// Human-readable conjunctive form of `rule`, with concrete thresholds.
pub fn rule_text<T: Scalar>(rule: &DetectionRule<T>) -> String {
    let clauses: Vec<String> = rule
        .clauses()
        .iter()
        .map(|c| format!("the value of {} is superior or equal to {}", c.metric(), c.threshold()))
        .collect();
    format!(
        "if {}, conclude that the formalized assurance case pattern has been DETECTED in the formalized assurance case; otherwise conclude that it is NOT DETECTED",
        clauses.join(" AND ")
    )
}

fn steps(task: PromptTask, rule: Option<String>) -> Vec<String> {
    match task {
        PromptTask::Instantiate => vec![
            "Read the formalized assurance case pattern in the user message and list its placeholders.".into(),
            "For each placeholder, choose the system-specific text from the domain information.".into(),
            "Rewrite every statement with its placeholders filled in. Keep every element id, element kind and relationship exactly as in the pattern.".into(),
            "If the domain information gives no value for a placeholder, keep the placeholder and add an Undeveloped line for that goal or strategy.".into(),
            "Check that the result still has a single root goal and that every element is connected.".into(),
            "Reply with the formalized assurance case only, starting with the header line `AssuranceCase: <system name>`, with no commentary and no code fences.".into(),
        ],
        PromptTask::Detect => vec![
            "Read the formalized assurance case pattern and the formalized assurance case in the user message.".into(),
            "Compute the BLEU score (bleu) of the assurance case text against the pattern text, using n-grams of length 1 to 4 and the brevity penalty.".into(),
            "Compute the cosine similarity (cosine) of the term-frequency vectors of the two texts.".into(),
            format!("Apply the detection rule: {}.", rule.unwrap_or_default()),
            "Reply with one line `VERDICT: DETECTED` or `VERDICT: NOT DETECTED`, followed by one line `<metric>: <value>` per metric.".into(),
        ],
    }
}

fn domain_section(knowledge: Option<&DomainKnowledge>) -> String {
    let Some(k) = knowledge else {
        return "No domain information supplied.".to_string();
    };
    let mut out = format!("System: {}\n", k.system);
    if !k.facts.is_empty() {
        out.push_str("Facts:\n");
        for f in &k.facts {
            writeln!(out, "- {f}").unwrap();
        }
    }
    if !k.bindings.is_empty() {
        out.push_str("Known placeholder values:\n");
        for (name, value) in &k.bindings {
            writeln!(out, "- {{{name}}}: {value}").unwrap();
        }
    }
    out.trim_end().to_string()
}

/// Builds the zero-shot, step-by-step prompt for instantiation or detection.
///
/// The system message holds, in order: the numbered steps, GSN background,
/// the formalization rules and the domain information. The user message
/// holds the formalized pattern and, for detection, the formalized case.
pub fn build_prompt<T: Scalar>(
    task: PromptTask,
    pattern: &PatternDocument,
    case: Option<&GoalStructure>,
    knowledge: Option<&DomainKnowledge>,
    rule: Option<&DetectionRule<T>>,
) -> Result<PromptPair, InstantiationError> {
    let case_text = match task {
        PromptTask::Instantiate => {
            if knowledge.is_none() {
                return Err(InstantiationError::MissingInput("domain knowledge"));
            }
            None
        }
        PromptTask::Detect => {
            let case = case.ok_or(InstantiationError::MissingInput("assurance case"))?;
            if rule.is_none() {
                return Err(InstantiationError::MissingInput("detection rule"));
            }
            Some(serialize_case(case)?)
        }
    };
    let pattern_text = serialize_pattern(pattern)?;

    let mut system = String::new();
    system.push_str(match task {
        PromptTask::Instantiate => "You instantiate assurance case patterns into system-specific assurance cases.\n\n",
        PromptTask::Detect => "You decide whether an assurance case pattern was used to build an assurance case.\n\n",
    });
    system.push_str("## Steps\n");
    for (i, step) in steps(task, rule.map(rule_text)).iter().enumerate() {
        writeln!(system, "Step {}: {step}", i + 1).unwrap();
    }
    write!(
        system,
        "\n## GSN context\n{GSN_CONTEXT}\n\n## Formalization rules\n{FORMALIZATION_RULES}\n\n## Domain information\n{}\n",
        domain_section(knowledge)
    )
    .unwrap();

    let mut user = format!("Formalized assurance case pattern:\n{pattern_text}");
    if let Some(case_text) = case_text {
        write!(user, "\nFormalized assurance case:\n{case_text}").unwrap();
    }
    Ok(PromptPair { system, user })
}

/// Reads a `VERDICT:` answer from a detection reply. `None` when the reply
/// states neither verdict.
pub fn parse_verdict(reply: &str) -> Option<bool> {
    let upper = reply.to_uppercase();
    if upper.contains("NOT DETECTED") {
        Some(false)
    } else if upper.contains("DETECTED") {
        Some(true)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{ElementKind, GsnElement};

    fn pattern() -> PatternDocument {
        let s = GoalStructure::new("P")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "{System} is acceptably safe"))
            .unwrap();
        PatternDocument::new(s).unwrap()
    }

    fn case() -> GoalStructure {
        GoalStructure::new("C")
            .with_element(GsnElement::new("G1", ElementKind::Goal, "Pump is acceptably safe"))
            .unwrap()
    }

    #[test]
    fn detect_prompt_embeds_rule_and_both_texts() {
        let rule = DetectionRule::<f64>::uniform(0.4).unwrap();
        let p = build_prompt(PromptTask::Detect, &pattern(), Some(&case()), None, Some(&rule)).unwrap();
        assert_eq!(p.system.matches("0.4").count(), 2);
        assert!(p.system.contains("superior or equal"));
        assert!(p.user.contains("Pattern: P\n"));
        assert!(p.user.contains("AssuranceCase: C\n"));
        assert!(!p.system.contains("Example:") && !p.user.contains("Example:"));
    }

    #[test]
    fn sections_in_order() {
        let k = DomainKnowledge::new("Pump").with_fact("Delivers insulin.");
        let p = build_prompt::<f64>(PromptTask::Instantiate, &pattern(), None, Some(&k), None).unwrap();
        let pos = |s: &str| p.system.find(s).unwrap();
        assert!(pos("Step 1:") < pos("## GSN context"));
        assert!(pos("## GSN context") < pos("## Formalization rules"));
        assert!(pos("## Formalization rules") < pos("## Domain information"));
        assert!(p.system.contains("- Delivers insulin."));
    }

    #[test]
    fn missing_inputs() {
        let rule = DetectionRule::<f64>::uniform(0.4).unwrap();
        assert_eq!(
            build_prompt::<f64>(PromptTask::Instantiate, &pattern(), None, None, None),
            Err(InstantiationError::MissingInput("domain knowledge"))
        );
        assert_eq!(
            build_prompt(PromptTask::Detect, &pattern(), None, None, Some(&rule)),
            Err(InstantiationError::MissingInput("assurance case"))
        );
        assert_eq!(
            build_prompt::<f64>(PromptTask::Detect, &pattern(), Some(&case()), None, None),
            Err(InstantiationError::MissingInput("detection rule"))
        );
    }

    #[test]
    fn verdicts() {
        assert_eq!(parse_verdict("VERDICT: NOT DETECTED\nbleu: 0.1"), Some(false));
        assert_eq!(parse_verdict("verdict: detected"), Some(true));
        assert_eq!(parse_verdict("no idea"), None);
    }
}
