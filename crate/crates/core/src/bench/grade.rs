//! Structural grading: extract tagged ids from the answer and compare them with
//! the gold sets under an exact-set rule.

use std::collections::BTreeSet;

use super::questions::{BenchmarkQuestion, GoldSpec};
use crate::ids::{AopId, KeId};
use crate::pipeline::{extract_tagged_aop_ids, extract_tagged_ke_ids};

fn mentions(haystack_lower: &str, needle: &str) -> bool {
    haystack_lower.contains(&needle.to_lowercase())
}

/// `required ⊆ found ⊆ allowed`.
fn exact_set<T: Ord>(found: &BTreeSet<T>, required: &BTreeSet<T>, allowed: &BTreeSet<T>) -> bool {
    required.is_subset(found) && found.is_subset(allowed)
}

/// True when the answer text is completely consistent with the gold answer.
///
/// Every gold id and string must be present, and no extracted id of a graded
/// kind may fall outside the gold set. For neighbour questions the queried KE's
/// own id may appear without being required. Title and species matching is a
/// case-insensitive substring test.
pub fn grade(answer_text: &str, question: &BenchmarkQuestion) -> bool {
    let lower = answer_text.to_lowercase();
    let kes: BTreeSet<KeId> = extract_tagged_ke_ids(answer_text).into_iter().collect();
    match &question.gold {
        GoldSpec::KeIdentification {
            ke_id,
            title,
            species,
        } => {
            let allowed = BTreeSet::from([*ke_id]);
            mentions(&lower, title)
                && species.iter().all(|s| mentions(&lower, s))
                && kes.is_subset(&allowed)
        }
        GoldSpec::Neighbors { ke_id, expected } => {
            let mut allowed = expected.clone();
            allowed.insert(*ke_id);
            exact_set(&kes, expected, &allowed)
        }
        GoldSpec::ComplexAop {
            aop_ids,
            ke_ids,
            species,
            ..
        } => {
            let aops: BTreeSet<AopId> = extract_tagged_aop_ids(answer_text).into_iter().collect();
            aops == *aop_ids
                && kes == *ke_ids
                && species.values().flatten().all(|s| mentions(&lower, s))
        }
    }
}

/// An answer that grades correct: every gold id tagged, plus titles and species.
pub fn render_gold_answer(question: &BenchmarkQuestion) -> String {
    let ke_list = |ids: &BTreeSet<KeId>| {
        if ids.is_empty() {
            "none".to_string()
        } else {
            ids.iter()
                .map(|i| i.to_string())
                .collect::<Vec<_>>()
                .join(", ")
        }
    };
    match &question.gold {
        GoldSpec::KeIdentification {
            ke_id,
            title,
            species,
        } => format!(
            "{ke_id} is \"{title}\". Applicable species: {}.",
            if species.is_empty() {
                "not specified".to_string()
            } else {
                species.join(", ")
            }
        ),
        GoldSpec::Neighbors { ke_id, expected } => {
            format!(
                "The event is {ke_id}. Directly related key events: {}.",
                ke_list(expected)
            )
        }
        GoldSpec::ComplexAop {
            aop_ids,
            ke_ids,
            species,
            ..
        } => {
            let aops = aop_ids
                .iter()
                .map(|a| a.to_string())
                .collect::<Vec<_>>()
                .join(", ");
            let per_ke = species
                .iter()
                .map(|(ke, sp)| {
                    let sp = if sp.is_empty() {
                        "not specified".to_string()
                    } else {
                        sp.join(", ")
                    };
                    format!("{ke}: {sp}")
                })
                .collect::<Vec<_>>()
                .join("; ");
            format!(
                "Matching pathways: {aops}. Key events: {}. Species: {per_ke}.",
                ke_list(ke_ids)
            )
        }
    }
}
