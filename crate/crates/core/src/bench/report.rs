use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::questions::Category;
use super::BenchError;
use crate::pipeline::Mode;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionOutcome {
    pub qid: String,
    pub category: Category,
    pub mode: Mode,
    pub correct: bool,
    /// SHA-256 of the answer text, hex encoded. Empty when no answer came back.
    pub answer_digest: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub error: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub correct: usize,
    pub total: usize,
    pub accuracy: f64,
}

impl Score {
    pub fn new(correct: usize, total: usize) -> Self {
        let accuracy = if total == 0 {
            0.0
        } else {
            correct as f64 / total as f64
        };
        Self {
            correct,
            total,
            accuracy,
        }
    }

    pub fn percent(&self) -> String {
        format_percent(self.correct, self.total)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSummary {
    pub overall: Score,
    pub per_category: BTreeMap<Category, Score>,
}

/// Per-question verdicts and per-mode accuracies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub model_id: String,
    pub top_n: usize,
    pub temperature: f64,
    /// Sorted by qid, then mode.
    pub per_question: Vec<QuestionOutcome>,
    pub modes: BTreeMap<Mode, ModeSummary>,
}

impl BenchmarkReport {
    /// Aggregates outcomes. Accuracy is `correct / total` per mode and per
    /// category; input order does not matter.
    pub fn from_outcomes(
        model_id: impl Into<String>,
        top_n: usize,
        temperature: f64,
        mut outcomes: Vec<QuestionOutcome>,
    ) -> Self {
        outcomes.sort_by(|a, b| a.qid.cmp(&b.qid).then(a.mode.cmp(&b.mode)));
        let mut tallies: BTreeMap<Mode, BTreeMap<Category, (usize, usize)>> = BTreeMap::new();
        for o in &outcomes {
            let t = tallies
                .entry(o.mode)
                .or_default()
                .entry(o.category)
                .or_default();
            t.0 += usize::from(o.correct);
            t.1 += 1;
        }
        let modes = tallies
            .into_iter()
            .map(|(mode, cats)| {
                let correct = cats.values().map(|t| t.0).sum();
                let total = cats.values().map(|t| t.1).sum();
                let per_category = cats
                    .into_iter()
                    .map(|(c, (k, n))| (c, Score::new(k, n)))
                    .collect();
                (
                    mode,
                    ModeSummary {
                        overall: Score::new(correct, total),
                        per_category,
                    },
                )
            })
            .collect();
        Self {
            model_id: model_id.into(),
            top_n,
            temperature,
            per_question: outcomes,
            modes,
        }
    }

    /// Combines runs of different modes over the same question set.
    pub fn merge(self, other: BenchmarkReport) -> Self {
        let mut outcomes = self.per_question;
        outcomes.extend(other.per_question);
        Self::from_outcomes(self.model_id, self.top_n, self.temperature, outcomes)
    }

    pub fn overall(&self, mode: Mode) -> Option<Score> {
        self.modes.get(&mode).map(|m| m.overall)
    }

    /// Pretty JSON with a trailing newline. Byte-identical for equal reports.
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

/// `correct / total` as a percentage rounded half-up to two decimals, with
/// trailing zeros dropped: 7/20 → "35%", 2/3 → "66.67%", 14/60 → "23.33%".
/// Computed in integers so it matches the ratio exactly.
pub fn format_percent(correct: usize, total: usize) -> String {
    if total == 0 {
        return "-".to_string();
    }
    let (c, t) = (correct as u128, total as u128);
    let hundredths = (c * 20_000 + t) / (2 * t);
    let (whole, frac) = (hundredths / 100, hundredths % 100);
    match frac {
        0 => format!("{whole}%"),
        f if f % 10 == 0 => format!("{whole}.{}%", f / 10),
        f => format!("{whole}.{f:02}%"),
    }
}

fn mode_header(mode: Mode) -> &'static str {
    match mode {
        Mode::Baseline => "W/O RAG",
        Mode::Rag => "W/ RAG",
    }
}

/// Markdown table: Task 1–4 rows plus Overall, one column per mode present.
pub fn render_report(report: &BenchmarkReport) -> Result<String, BenchError> {
    if report.per_question.is_empty() {
        return Err(BenchError::EmptyReport);
    }
    let modes: Vec<Mode> = report.modes.keys().copied().collect();
    let mut out = String::new();
    let _ = writeln!(out, "Model: {}", report.model_id);
    out.push('\n');
    out.push_str("| Task | Description |");
    for m in &modes {
        let _ = write!(out, " {} |", mode_header(*m));
    }
    out.push('\n');
    out.push_str("|---|---|");
    for _ in &modes {
        out.push_str("---|");
    }
    out.push('\n');
    for c in Category::ALL {
        let _ = write!(out, "| Task {} | {} |", c.task_number(), c.description());
        for m in &modes {
            let cell = report.modes[m]
                .per_category
                .get(&c)
                .map(Score::percent)
                .unwrap_or_else(|| "-".to_string());
            let _ = write!(out, " {cell} |");
        }
        out.push('\n');
    }
    out.push_str("| Overall | All tasks combined |");
    for m in &modes {
        let _ = write!(out, " {} |", report.modes[m].overall.percent());
    }
    out.push('\n');
    Ok(out)
}
