//! Benchmark questions and their knowledge-base-derived gold answers.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::BenchError;
use crate::ids::{AopId, KeId};
use crate::kb::KnowledgeBase;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Category {
    KeIdentification,
    DownstreamRetrieval,
    UpstreamRetrieval,
    ComplexAop,
}

impl Category {
    pub const ALL: [Category; 4] = [
        Category::KeIdentification,
        Category::DownstreamRetrieval,
        Category::UpstreamRetrieval,
        Category::ComplexAop,
    ];

    pub fn task_number(self) -> usize {
        match self {
            Category::KeIdentification => 1,
            Category::DownstreamRetrieval => 2,
            Category::UpstreamRetrieval => 3,
            Category::ComplexAop => 4,
        }
    }

    pub fn description(self) -> &'static str {
        match self {
            Category::KeIdentification => "KE Identification",
            Category::DownstreamRetrieval => "Downstream KE retrieval",
            Category::UpstreamRetrieval => "Upstream KE retrieval",
            Category::ComplexAop => "Complex task",
        }
    }

    fn key(self) -> &'static str {
        match self {
            Category::KeIdentification => "ke_identification",
            Category::DownstreamRetrieval => "downstream_retrieval",
            Category::UpstreamRetrieval => "upstream_retrieval",
            Category::ComplexAop => "complex_aop",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|c| c.key() == s)
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

/// Reference answer. The variant always matches the question's category.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum GoldSpec {
    KeIdentification {
        ke_id: KeId,
        title: String,
        species: Vec<String>,
    },
    Neighbors {
        ke_id: KeId,
        expected: BTreeSet<KeId>,
    },
    ComplexAop {
        mie_id: KeId,
        ao_id: KeId,
        aop_ids: BTreeSet<AopId>,
        ke_ids: BTreeSet<KeId>,
        species: BTreeMap<KeId, Vec<String>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchmarkQuestion {
    pub qid: String,
    pub category: Category,
    pub prompt: String,
    pub gold: GoldSpec,
}

impl BenchmarkQuestion {
    /// KE ids a perfect selection stage would return for this question.
    pub fn gold_seed_ids(&self) -> Vec<KeId> {
        match &self.gold {
            GoldSpec::KeIdentification { ke_id, .. } | GoldSpec::Neighbors { ke_id, .. } => {
                vec![*ke_id]
            }
            GoldSpec::ComplexAop { mie_id, ao_id, .. } => {
                if mie_id == ao_id {
                    vec![*mie_id]
                } else {
                    vec![*mie_id, *ao_id]
                }
            }
        }
    }
}

#[derive(Deserialize)]
struct QuestionFile {
    questions: Vec<QuestionRecord>,
}

#[derive(Deserialize)]
struct QuestionRecord {
    qid: String,
    category: String,
    prompt: String,
    #[serde(default)]
    gold: Value,
}

#[derive(Deserialize)]
struct IdentificationFields {
    ke_id: KeId,
    #[serde(default)]
    title: Option<String>,
    #[serde(default)]
    species: Option<Vec<String>>,
}

#[derive(Deserialize)]
struct NeighborFields {
    ke_id: KeId,
}

#[derive(Deserialize)]
struct ComplexFields {
    mie_id: KeId,
    ao_id: KeId,
}

fn field_error(qid: &str, e: serde_json::Error) -> BenchError {
    BenchError::Schema {
        qid: Some(qid.to_string()),
        message: e.to_string(),
    }
}

fn require_ke(kb: &KnowledgeBase, qid: &str, id: KeId) -> Result<(), BenchError> {
    if kb.contains_key_event(id) {
        Ok(())
    } else {
        Err(BenchError::DanglingId {
            qid: qid.to_string(),
            id: id.to_string(),
        })
    }
}

/// Gold for a downstream or upstream question, straight from KB adjacency.
pub fn neighbor_gold(kb: &KnowledgeBase, category: Category, ke_id: KeId) -> Option<GoldSpec> {
    let ke = kb.key_event(ke_id)?;
    let expected = match category {
        Category::DownstreamRetrieval => ke.downstream_ids.clone(),
        Category::UpstreamRetrieval => ke.upstream_ids.clone(),
        _ => return None,
    };
    Some(GoldSpec::Neighbors { ke_id, expected })
}

/// Gold for a complex query: every AOP having `mie_id` as an MIE and `ao_id` as
/// an AO, the union of their events, and each event's species.
pub fn complex_gold(kb: &KnowledgeBase, mie_id: KeId, ao_id: KeId) -> Option<GoldSpec> {
    let aops: Vec<_> = kb
        .aops()
        .filter(|a| a.mie_ids.contains(&mie_id) && a.ao_ids.contains(&ao_id))
        .collect();
    if aops.is_empty() {
        return None;
    }
    let ke_ids: BTreeSet<KeId> = aops.iter().flat_map(|a| a.event_ids()).collect();
    let species = ke_ids
        .iter()
        .filter_map(|id| kb.key_event(*id))
        .map(|ke| (ke.id, ke.species.clone()))
        .collect();
    Some(GoldSpec::ComplexAop {
        mie_id,
        ao_id,
        aop_ids: aops.iter().map(|a| a.id).collect(),
        ke_ids,
        species,
    })
}

fn resolve_record(
    kb: &KnowledgeBase,
    rec: QuestionRecord,
) -> Result<BenchmarkQuestion, BenchError> {
    let qid = rec.qid.clone();
    let category = Category::parse(&rec.category).ok_or_else(|| BenchError::UnknownCategory {
        qid: qid.clone(),
        category: rec.category.clone(),
    })?;
    if rec.prompt.trim().is_empty() {
        return Err(BenchError::Schema {
            qid: Some(qid),
            message: "prompt is blank".into(),
        });
    }
    let gold = match category {
        Category::KeIdentification => {
            let f: IdentificationFields =
                serde_json::from_value(rec.gold).map_err(|e| field_error(&qid, e))?;
            require_ke(kb, &qid, f.ke_id)?;
            let ke = kb.key_event(f.ke_id).expect("checked above");
            GoldSpec::KeIdentification {
                ke_id: f.ke_id,
                title: f.title.unwrap_or_else(|| ke.title.clone()),
                species: f.species.unwrap_or_else(|| ke.species.clone()),
            }
        }
        Category::DownstreamRetrieval | Category::UpstreamRetrieval => {
            let f: NeighborFields =
                serde_json::from_value(rec.gold).map_err(|e| field_error(&qid, e))?;
            require_ke(kb, &qid, f.ke_id)?;
            neighbor_gold(kb, category, f.ke_id).expect("KE exists")
        }
        Category::ComplexAop => {
            let f: ComplexFields =
                serde_json::from_value(rec.gold).map_err(|e| field_error(&qid, e))?;
            require_ke(kb, &qid, f.mie_id)?;
            require_ke(kb, &qid, f.ao_id)?;
            complex_gold(kb, f.mie_id, f.ao_id).ok_or_else(|| BenchError::NoMatchingAop {
                qid: qid.clone(),
                mie_id: f.mie_id,
                ao_id: f.ao_id,
            })?
        }
    };
    Ok(BenchmarkQuestion {
        qid,
        category,
        prompt: rec.prompt,
        gold,
    })
}

/// Parses a question file and validates it against `kb`. Neighbor and
/// complex-query gold sets are always recomputed from the knowledge base.
pub fn parse_benchmark(
    json: &str,
    kb: &KnowledgeBase,
) -> Result<Vec<BenchmarkQuestion>, BenchError> {
    let file: QuestionFile = serde_json::from_str(json).map_err(|e| BenchError::Schema {
        qid: None,
        message: e.to_string(),
    })?;
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(file.questions.len());
    for rec in file.questions {
        if !seen.insert(rec.qid.clone()) {
            return Err(BenchError::DuplicateQid(rec.qid));
        }
        out.push(resolve_record(kb, rec)?);
    }
    Ok(out)
}

pub fn load_benchmark(
    path: &Path,
    kb: &KnowledgeBase,
) -> Result<Vec<BenchmarkQuestion>, BenchError> {
    let text = std::fs::read_to_string(path).map_err(|source| BenchError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_benchmark(&text, kb)
}

#[derive(Serialize)]
struct QuestionFileOut<'a> {
    questions: &'a [BenchmarkQuestion],
}

/// Serializes questions in the file format [`parse_benchmark`] reads.
pub fn questions_to_json(questions: &[BenchmarkQuestion]) -> String {
    let mut s =
        serde_json::to_string_pretty(&QuestionFileOut { questions }).expect("questions serialize");
    s.push('\n');
    s
}

fn spread<T: Clone>(items: &[T], n: usize) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    (0..n).map(|i| items[i * items.len() / n].clone()).collect()
}

/// Builds up to `per_category` questions of each category from `kb`,
/// choosing targets spread evenly over ascending ids.
pub fn generate_questions(kb: &KnowledgeBase, per_category: usize) -> Vec<BenchmarkQuestion> {
    let mut out = Vec::new();
    let title = |id: KeId| {
        kb.key_event(id)
            .map(|k| k.title.clone())
            .unwrap_or_default()
    };

    let all: Vec<KeId> = kb.key_events().map(|k| k.id).collect();
    for (i, id) in spread(&all, per_category).into_iter().enumerate() {
        let ke = kb.key_event(id).expect("listed");
        out.push(BenchmarkQuestion {
            qid: format!("T1-{:02}", i + 1),
            category: Category::KeIdentification,
            prompt: format!(
                "Which biological event is described by KE {}, and which species is it applicable to?",
                id.get()
            ),
            gold: GoldSpec::KeIdentification {
                ke_id: id,
                title: ke.title.clone(),
                species: ke.species.clone(),
            },
        });
    }

    for (category, tag, direction) in [
        (Category::DownstreamRetrieval, "T2", "downstream"),
        (Category::UpstreamRetrieval, "T3", "upstream"),
    ] {
        let eligible: Vec<KeId> = kb
            .key_events()
            .filter(|k| match category {
                Category::DownstreamRetrieval => !k.downstream_ids.is_empty(),
                _ => !k.upstream_ids.is_empty(),
            })
            .map(|k| k.id)
            .collect();
        for (i, id) in spread(&eligible, per_category).into_iter().enumerate() {
            out.push(BenchmarkQuestion {
                qid: format!("{tag}-{:02}", i + 1),
                category,
                prompt: format!(
                    "For the key event \"{}\", give its KE ID and list all directly {direction} key events.",
                    title(id)
                ),
                gold: neighbor_gold(kb, category, id).expect("KE exists"),
            });
        }
    }

    let pairs: BTreeSet<(KeId, KeId)> = kb
        .aops()
        .flat_map(|a| {
            a.mie_ids
                .iter()
                .flat_map(move |m| a.ao_ids.iter().map(move |o| (*m, *o)))
        })
        .collect();
    let pairs: Vec<_> = pairs.into_iter().collect();
    for (i, (mie, ao)) in spread(&pairs, per_category).into_iter().enumerate() {
        out.push(BenchmarkQuestion {
            qid: format!("T4-{:02}", i + 1),
            category: Category::ComplexAop,
            prompt: format!(
                "Retrieve the complete AOP chain from the molecular initiating event \"{}\" (KE {}) \
                 to the adverse outcome \"{}\" (KE {}). List the AOP IDs, all key events involved \
                 and their applicable species.",
                title(mie),
                mie.get(),
                title(ao),
                ao.get()
            ),
            gold: complex_gold(kb, mie, ao).expect("pair comes from an AOP"),
        });
    }
    out
}
