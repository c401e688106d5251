//! Two-stage retrieval-augmented answering and the no-retrieval baseline.
//!
//! Stage 1 shows the model the whole KE index with the question and asks for
//! the most relevant KE ids. Stage 2 expands those ids one hop, renders the
//! KE/KER/AOP context and asks the model to answer from it.

use std::collections::{BTreeSet, HashSet};
use std::fmt;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::expansion::{assemble_context, ContextBundle, ExpandedSelection, ExpansionError};
use crate::ids::{AopId, KeId};
use crate::kb::{KeIndex, KnowledgeBase};
use crate::llm::{ChatExchange, ChatMessage, GatewayError, LlmClient, LlmConfig};

pub const DEFAULT_TOP_N: usize = 5;

/// Heads the index block of the selection prompt and appears in no other prompt.
pub const SELECTION_MARKER: &str = "KE Index:";

static BRACKET_LIST: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"\[\s*(\d+(?:\s*,\s*\d+)*)\s*\]").unwrap());
static TAGGED_KE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\b(?:KE|Event)(?:\s*ID)?\s*[:#-]?\s*(\d+)").unwrap());
static TAGGED_AOP: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)\bAOP(?:\s*ID)?\s*[:#-]?\s*(\d+)").unwrap());
static DIGITS: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\d+").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Baseline,
    Rag,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Baseline => "baseline",
            Mode::Rag => "rag",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "baseline" => Ok(Mode::Baseline),
            "rag" => Ok(Mode::Rag),
            other => Err(format!("unknown mode {other:?} (expected rag or baseline)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub question: String,
    pub top_n: usize,
    pub mode: Mode,
}

impl QueryRequest {
    pub fn new(
        question: impl Into<String>,
        top_n: usize,
        mode: Mode,
    ) -> Result<Self, PipelineError> {
        let question = question.into();
        if question.trim().is_empty() {
            return Err(PipelineError::InvalidRequest("question is blank".into()));
        }
        if top_n == 0 {
            return Err(PipelineError::InvalidRequest(
                "top_n must be at least 1".into(),
            ));
        }
        Ok(Self {
            question,
            top_n,
            mode,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flag {
    /// Stage 1 yielded no usable KE id; the answer was generated without context.
    NoRetrieval,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub seed_ids: Vec<KeId>,
    pub selection: ExpandedSelection,
    pub context: ContextBundle,
    pub selection_exchange: ChatExchange,
    pub answer_exchange: ChatExchange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Answer {
    pub text: String,
    pub mode: Mode,
    pub flags: BTreeSet<Flag>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub provenance: Option<Provenance>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    /// Stage 1: KE selection.
    Selection,
    /// Stage 2: answering from context.
    Answer,
    Baseline,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Selection => "stage 1 (KE selection)",
            Stage::Answer => "stage 2 (answer generation)",
            Stage::Baseline => "baseline answer",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PipelineError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("configuration error: {0}")]
    Configuration(String),
    #[error("{stage} failed: {source}")]
    Gateway {
        stage: Stage,
        #[source]
        source: GatewayError,
    },
    #[error(transparent)]
    Expansion(#[from] ExpansionError),
}

/// Stage-1 messages: selection instructions, the serialized index and the question.
pub fn build_selection_prompt(
    question: &str,
    index: &KeIndex,
    top_n: usize,
) -> Result<Vec<ChatMessage>, PipelineError> {
    if index.is_empty() {
        return Err(PipelineError::Configuration("the KE index is empty".into()));
    }
    let system = format!(
        "You rank Key Events (KEs) of the Adverse Outcome Pathway knowledge base by their \
         relevance to a user question. The index lists every KE as <id><TAB><title>. \
         Select at most {top_n} KE ids, most relevant first, and reply with a bracketed \
         list of integers such as [12, 7, 3]. Reply with the list and nothing else. \
         The limit is {top_n}."
    );
    let user = format!(
        "{SELECTION_MARKER}\n{}\nQuestion:\n{}",
        index.to_text(),
        question
    );
    Ok(vec![ChatMessage::system(system), ChatMessage::user(user)])
}

fn parse_ids(caps: impl Iterator<Item = String>) -> Vec<u64> {
    caps.filter_map(|s| s.parse::<u64>().ok()).collect()
}

/// Integers tagged as KE ids ("KE 12", "Event ID: 7"), in order of appearance.
pub fn extract_tagged_ke_ids(text: &str) -> Vec<KeId> {
    parse_ids(TAGGED_KE.captures_iter(text).map(|c| c[1].to_string()))
        .into_iter()
        .map(KeId)
        .collect()
}

/// Integers tagged as AOP ids ("AOP 42"), in order of appearance.
pub fn extract_tagged_aop_ids(text: &str) -> Vec<AopId> {
    parse_ids(TAGGED_AOP.captures_iter(text).map(|c| c[1].to_string()))
        .into_iter()
        .map(AopId)
        .collect()
}

/// Extracts the selected KE ids from a stage-1 reply.
///
/// The first bracketed integer list wins; failing that, integers tagged with
/// "KE" or "Event" are taken in order. Ids missing from `index` are discarded,
/// duplicates keep their first position and the result is cut to `top_n`.
pub fn parse_ke_selection(response: &str, index: &KeIndex, top_n: usize) -> Vec<KeId> {
    let candidates: Vec<KeId> = match BRACKET_LIST.captures(response) {
        Some(caps) => parse_ids(DIGITS.find_iter(&caps[1]).map(|m| m.as_str().to_string()))
            .into_iter()
            .map(KeId)
            .collect(),
        None => extract_tagged_ke_ids(response),
    };
    let mut seen = HashSet::new();
    candidates
        .into_iter()
        .filter(|id| index.contains(*id) && seen.insert(*id))
        .take(top_n)
        .collect()
}

const ANSWER_INSTRUCTIONS: &str = "You answer questions about Adverse Outcome Pathways (AOPs) \
    strictly from the structured context below, which lists Key Events (KE Detail), Key Event \
    Relationships (KER Detail) and AOPs (AOP Detail). Do not add facts that are not in the \
    context; if the context does not contain the answer, say so. Refer to key events as \
    \"KE <id>\" and to pathways as \"AOP <id>\".";

const BASELINE_INSTRUCTIONS: &str = "You answer questions about Adverse Outcome Pathways \
    (AOPs) from your own knowledge of AOP-Wiki. Refer to key events as \"KE <id>\" and to \
    pathways as \"AOP <id>\".";

/// Stage-2 messages: answering instructions, the rendered context and the question.
pub fn build_answer_prompt(question: &str, context: &ContextBundle) -> Vec<ChatMessage> {
    let user = format!(
        "Context:\n{}\nQuestion:\n{}",
        context.rendered_text, question
    );
    vec![
        ChatMessage::system(ANSWER_INSTRUCTIONS),
        ChatMessage::user(user),
    ]
}

pub fn build_baseline_prompt(question: &str) -> Vec<ChatMessage> {
    vec![
        ChatMessage::system(BASELINE_INSTRUCTIONS),
        ChatMessage::user(format!("Question:\n{question}")),
    ]
}

/// Runs selection, expansion and context-grounded answering: exactly two
/// completions. An empty selection still produces an answer, flagged
/// [`Flag::NoRetrieval`].
pub async fn answer_with_rag(
    client: &LlmClient,
    config: &LlmConfig,
    kb: &KnowledgeBase,
    index: &KeIndex,
    request: &QueryRequest,
) -> Result<Answer, PipelineError> {
    let selection_messages = build_selection_prompt(&request.question, index, request.top_n)?;
    let selection_exchange = client
        .chat_complete(config, &selection_messages)
        .await
        .map_err(|source| PipelineError::Gateway {
            stage: Stage::Selection,
            source,
        })?;

    let seeds: Vec<KeId> =
        parse_ke_selection(&selection_exchange.response_text, index, request.top_n)
            .into_iter()
            .filter(|id| kb.contains_key_event(*id))
            .collect();
    let mut flags = BTreeSet::new();
    if seeds.is_empty() {
        flags.insert(Flag::NoRetrieval);
    }
    let selection = ExpandedSelection::expand(kb, &seeds);
    let context = assemble_context(kb, &selection)?;

    let answer_messages = build_answer_prompt(&request.question, &context);
    let answer_exchange = client
        .chat_complete(config, &answer_messages)
        .await
        .map_err(|source| PipelineError::Gateway {
            stage: Stage::Answer,
            source,
        })?;

    Ok(Answer {
        text: answer_exchange.response_text.clone(),
        mode: Mode::Rag,
        flags,
        provenance: Some(Provenance {
            seed_ids: seeds,
            selection,
            context,
            selection_exchange,
            answer_exchange,
        }),
    })
}

/// One completion with no retrieved context.
pub async fn answer_baseline(
    client: &LlmClient,
    config: &LlmConfig,
    request: &QueryRequest,
) -> Result<Answer, PipelineError> {
    let exchange = client
        .chat_complete(config, &build_baseline_prompt(&request.question))
        .await
        .map_err(|source| PipelineError::Gateway {
            stage: Stage::Baseline,
            source,
        })?;
    Ok(Answer {
        text: exchange.response_text,
        mode: Mode::Baseline,
        flags: BTreeSet::new(),
        provenance: None,
    })
}

/// Dispatches on `request.mode`. RAG mode needs the knowledge resources.
pub async fn answer(
    client: &LlmClient,
    config: &LlmConfig,
    resources: Option<(&KnowledgeBase, &KeIndex)>,
    request: &QueryRequest,
) -> Result<Answer, PipelineError> {
    match (request.mode, resources) {
        (Mode::Baseline, _) => answer_baseline(client, config, request).await,
        (Mode::Rag, Some((kb, index))) => answer_with_rag(client, config, kb, index, request).await,
        (Mode::Rag, None) => Err(PipelineError::Configuration(
            "RAG mode needs a loaded knowledge directory".into(),
        )),
    }
}
