use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;

/// One evaluation cell: a system, a backend and a threshold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvaluationRow<T: Scalar> {
    pub system: String,
    pub backend: String,
    pub threshold: T,
    pub recall: T,
    pub precision: T,
    pub f_measure: T,
    pub runs: usize,
    /// Set when the cell could not be computed; the scores are then zero.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
pub struct EvaluationReport<T: Scalar> {
    pub thresholds: Vec<T>,
    pub runs: usize,
    /// Ordered by system, then backend, then threshold.
    pub rows: Vec<EvaluationRow<T>>,
}

/// Two-decimal rendering without trailing zeros: `1`, `0.5`, `0.67`, `0`.
pub fn format_score<T: Scalar>(value: T) -> String {
    let s = format!("{:.2}", value.widen());
    let s = s.trim_end_matches('0').trim_end_matches('.');
    match s {
        "-0" | "" => "0".to_string(),
        other => other.to_string(),
    }
}

impl<T: Scalar> EvaluationReport<T> {
    pub fn row(&self, system: &str, backend: &str, threshold: T) -> Option<&EvaluationRow<T>> {
        self.rows
            .iter()
            .find(|r| r.system == system && r.backend == backend && r.threshold == threshold)
    }

    pub fn failed_rows(&self) -> impl Iterator<Item = &EvaluationRow<T>> {
        self.rows.iter().filter(|r| r.error.is_some())
    }

    /// One JSON object per row, newline separated.
    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for row in &self.rows {
            out.push_str(&serde_json::to_string(row).expect("rows serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Vec<EvaluationRow<T>>, serde_json::Error> {
        text.lines()
            .filter(|l| !l.trim().is_empty())
            .map(serde_json::from_str)
            .collect()
    }

    /// Text table with one line per (system, backend) and an R / P / FM
    /// group per threshold. Failed cells print `err`.
    pub fn render_table(&self) -> String {
        let mut keys: Vec<(&str, &str)> = Vec::new();
        for r in &self.rows {
            let k = (r.system.as_str(), r.backend.as_str());
            if !keys.contains(&k) {
                keys.push(k);
            }
        }
        let sys_w = keys.iter().map(|k| k.0.chars().count()).chain([6]).max().unwrap_or(6);
        let be_w = keys.iter().map(|k| k.1.chars().count()).chain([7]).max().unwrap_or(7);
        const COL: usize = 5;
        let group_w = 3 * COL + 2;

        let mut out = String::new();
        write!(out, "{:sys_w$}  {:be_w$}", "System", "Backend").unwrap();
        for t in &self.thresholds {
            write!(out, " | {:<group_w$}", format!("t = {}", format_score(*t))).unwrap();
        }
        out.push('\n');
        write!(out, "{:sys_w$}  {:be_w$}", "", "").unwrap();
        for _ in &self.thresholds {
            write!(out, " | {:<COL$} {:<COL$} {:<COL$}", "R", "P", "FM").unwrap();
        }
        out.push('\n');
        let rule_len = sys_w + 2 + be_w + self.thresholds.len() * (group_w + 3);
        out.push_str(&"-".repeat(rule_len));
        out.push('\n');

        for (system, backend) in keys {
            write!(out, "{system:sys_w$}  {backend:be_w$}").unwrap();
            for &t in &self.thresholds {
                let cells = match self.row(system, backend, t) {
                    Some(r) if r.error.is_none() => {
                        [format_score(r.recall), format_score(r.precision), format_score(r.f_measure)]
                    }
                    Some(_) => ["err".into(), "err".into(), "err".into()],
                    None => ["-".into(), "-".into(), "-".into()],
                };
                write!(out, " | {:<COL$} {:<COL$} {:<COL$}", cells[0], cells[1], cells[2]).unwrap();
            }
            out.push('\n');
        }
        out
    }
}
