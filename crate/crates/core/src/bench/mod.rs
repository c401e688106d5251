//! Four-category benchmark: questions, grading, runs and reports.

mod grade;
mod questions;
mod report;

use std::path::PathBuf;

use futures::stream::{self, StreamExt};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::ids::KeId;
use crate::kb::{KeIndex, KnowledgeBase};
use crate::llm::{ConfigError, LlmClient, LlmConfig};
use crate::pipeline::{self, Mode, PipelineError, QueryRequest, DEFAULT_TOP_N};

pub use grade::{grade, render_gold_answer};
pub use questions::{
    complex_gold, generate_questions, load_benchmark, neighbor_gold, parse_benchmark,
    questions_to_json, BenchmarkQuestion, Category, GoldSpec,
};
pub use report::{
    format_percent, render_report, BenchmarkReport, ModeSummary, QuestionOutcome, Score,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid question file{}: {message}", qid.as_ref().map(|q| format!(" (question {q})")).unwrap_or_default())]
    Schema {
        qid: Option<String>,
        message: String,
    },
    #[error("question {qid}: unknown category {category:?}")]
    UnknownCategory { qid: String, category: String },
    #[error("question {qid} references unknown {id}")]
    DanglingId { qid: String, id: String },
    #[error("question {qid}: no AOP has {mie_id} as MIE and {ao_id} as AO")]
    NoMatchingAop {
        qid: String,
        mie_id: KeId,
        ao_id: KeId,
    },
    #[error("duplicate question id {0}")]
    DuplicateQid(String),
    #[error("no questions to run")]
    NoQuestions,
    #[error("report has no questions")]
    EmptyReport,
    #[error(transparent)]
    Config(#[from] ConfigError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchOptions {
    pub top_n: usize,
    pub temperature: f64,
    /// Questions answered concurrently.
    pub concurrency: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self {
            top_n: DEFAULT_TOP_N,
            temperature: 0.0,
            concurrency: 4,
        }
    }
}

fn digest(text: &str) -> String {
    hex::encode(Sha256::digest(text.as_bytes()))
}

fn error_note(err: &PipelineError) -> String {
    match err {
        PipelineError::Gateway { stage, source } => format!("{stage}: {}", source.kind()),
        other => other.to_string(),
    }
}

async fn answer_one(
    client: &LlmClient,
    config: &LlmConfig,
    kb: &KnowledgeBase,
    index: &KeIndex,
    q: &BenchmarkQuestion,
    mode: Mode,
    top_n: usize,
) -> QuestionOutcome {
    let result = match QueryRequest::new(q.prompt.clone(), top_n, mode) {
        Ok(request) => pipeline::answer(client, config, Some((kb, index)), &request).await,
        Err(e) => Err(e),
    };
    match result {
        Ok(answer) => QuestionOutcome {
            qid: q.qid.clone(),
            category: q.category,
            mode,
            correct: grade(&answer.text, q),
            answer_digest: digest(&answer.text),
            error: None,
        },
        Err(e) => {
            tracing::warn!(qid = %q.qid, error = %e, "question failed");
            QuestionOutcome {
                qid: q.qid.clone(),
                category: q.category,
                mode,
                correct: false,
                answer_digest: String::new(),
                error: Some(error_note(&e)),
            }
        }
    }
}

/// Answers every question in `mode` and grades the answers. Failed questions
/// count as incorrect and carry an error note; the run itself always completes.
pub async fn run_benchmark(
    client: &LlmClient,
    config: &LlmConfig,
    kb: &KnowledgeBase,
    index: &KeIndex,
    questions: &[BenchmarkQuestion],
    mode: Mode,
    options: BenchOptions,
) -> Result<BenchmarkReport, BenchError> {
    if questions.is_empty() {
        return Err(BenchError::NoQuestions);
    }
    let config = config.clone().with_temperature(options.temperature)?;
    let config = &config;
    let pending: Vec<_> = questions
        .iter()
        .map(|q| answer_one(client, config, kb, index, q, mode, options.top_n))
        .collect();
    let outcomes: Vec<QuestionOutcome> = stream::iter(pending)
        .buffer_unordered(options.concurrency.max(1))
        .collect()
        .await;
    Ok(BenchmarkReport::from_outcomes(
        config.model_id(),
        options.top_n,
        options.temperature,
        outcomes,
    ))
}
