//! One-hop knowledge expansion around the KEs picked during selection.
//!
//! Seeds grow by their direct upstream and downstream neighbours. Relationships
//! are kept when both endpoints fall inside the grown set, and an AOP is kept
//! when at least two of its distinct MIE/KE/AO events do.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AopId, KeId, KerId};
use crate::kb::{AopEntry, KeyEvent, KeyEventRelationship, KnowledgeBase};

/// Minimum number of an AOP's distinct events that must lie in the expanded set.
pub const MIN_AOP_MATCHES: usize = 2;

pub const KE_SECTION: &str = "## KE Detail";
pub const KER_SECTION: &str = "## KER Detail";
pub const AOP_SECTION: &str = "## AOP Detail";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ExpansionError {
    #[error("unknown {0}")]
    UnknownKeyEvent(KeId),
    #[error("selection violates its invariants: {0}")]
    Contract(String),
}

/// Seeds plus everything the expansion pulled in.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpandedSelection {
    /// Order preserved from the selection stage.
    pub seed_ids: Vec<KeId>,
    pub expanded_ke_ids: BTreeSet<KeId>,
    pub ker_ids: BTreeSet<KerId>,
    pub aop_ids: BTreeSet<AopId>,
}

impl ExpandedSelection {
    /// Runs KE augmentation, KER reconstruction and AOP retrieval for `seeds`.
    /// Seeds must exist in `kb`.
    pub fn expand(kb: &KnowledgeBase, seeds: &[KeId]) -> Self {
        let expanded_ke_ids = expand_ke_set(kb, seeds);
        Self {
            seed_ids: seeds.to_vec(),
            ker_ids: select_kers(kb, &expanded_ke_ids),
            aop_ids: select_aops(kb, &expanded_ke_ids),
            expanded_ke_ids,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.seed_ids.is_empty()
            && self.expanded_ke_ids.is_empty()
            && self.ker_ids.is_empty()
            && self.aop_ids.is_empty()
    }

    /// Checks the selection's invariants against `kb`.
    pub fn validate(&self, kb: &KnowledgeBase) -> Result<(), ExpansionError> {
        let contract = |m: String| Err(ExpansionError::Contract(m));
        if let Some(id) = self
            .expanded_ke_ids
            .iter()
            .find(|id| !kb.contains_key_event(**id))
        {
            return contract(format!("{id} is not in the knowledge base"));
        }
        if let Some(id) = self
            .seed_ids
            .iter()
            .find(|id| !self.expanded_ke_ids.contains(id))
        {
            return contract(format!("seed {id} missing from the expanded set"));
        }
        for id in &self.ker_ids {
            let Some(ker) = kb.relationship(*id) else {
                return contract(format!("{id} is not in the knowledge base"));
            };
            if !self.expanded_ke_ids.contains(&ker.upstream_ke_id)
                || !self.expanded_ke_ids.contains(&ker.downstream_ke_id)
            {
                return contract(format!("{id} has an endpoint outside the expanded set"));
            }
        }
        for id in &self.aop_ids {
            let Some(aop) = kb.aop(*id) else {
                return contract(format!("{id} is not in the knowledge base"));
            };
            if overlap(aop, &self.expanded_ke_ids) < MIN_AOP_MATCHES {
                return contract(format!("{id} matches fewer than {MIN_AOP_MATCHES} events"));
            }
        }
        Ok(())
    }
}

/// Stored upstream and downstream neighbours of `ke_id`.
pub fn direct_neighbors(
    kb: &KnowledgeBase,
    ke_id: KeId,
) -> Result<(&BTreeSet<KeId>, &BTreeSet<KeId>), ExpansionError> {
    let ke = kb
        .key_event(ke_id)
        .ok_or(ExpansionError::UnknownKeyEvent(ke_id))?;
    Ok((&ke.upstream_ids, &ke.downstream_ids))
}

/// Union over seeds of the seed and its direct neighbours. Seeds missing from
/// `kb` contribute nothing.
pub fn expand_ke_set(kb: &KnowledgeBase, seeds: &[KeId]) -> BTreeSet<KeId> {
    let mut out = BTreeSet::new();
    for ke in seeds.iter().filter_map(|&s| kb.key_event(s)) {
        out.insert(ke.id);
        out.extend(&ke.upstream_ids);
        out.extend(&ke.downstream_ids);
    }
    out
}

/// KERs whose upstream and downstream KEs both lie in `expanded`.
pub fn select_kers(kb: &KnowledgeBase, expanded: &BTreeSet<KeId>) -> BTreeSet<KerId> {
    let mut out = BTreeSet::new();
    // Every qualifying KER is an outgoing edge of some member, so walking the
    // members' downstream neighbours bounds the scan to the local subgraph.
    let local: BTreeSet<(KeId, KeId)> = expanded
        .iter()
        .filter_map(|id| kb.key_event(*id))
        .flat_map(|ke| {
            ke.downstream_ids
                .iter()
                .filter(|d| expanded.contains(d))
                .map(move |d| (ke.id, *d))
        })
        .collect();
    if local.is_empty() {
        return out;
    }
    for ker in kb.relationships() {
        if local.contains(&(ker.upstream_ke_id, ker.downstream_ke_id)) {
            out.insert(ker.id);
        }
    }
    out
}

fn overlap(aop: &AopEntry, expanded: &BTreeSet<KeId>) -> usize {
    aop.event_ids().intersection(expanded).count()
}

/// AOPs with at least [`MIN_AOP_MATCHES`] distinct events in `expanded`.
pub fn select_aops(kb: &KnowledgeBase, expanded: &BTreeSet<KeId>) -> BTreeSet<AopId> {
    if expanded.len() < MIN_AOP_MATCHES {
        return BTreeSet::new();
    }
    kb.aops()
        .filter(|aop| overlap(aop, expanded) >= MIN_AOP_MATCHES)
        .map(|aop| aop.id)
        .collect()
}

/// Structured context handed to the answering stage.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextBundle {
    pub ke_details: Vec<String>,
    pub ker_details: Vec<String>,
    pub aop_details: Vec<String>,
    pub rendered_text: String,
}

fn join_ids(ids: &BTreeSet<KeId>) -> String {
    if ids.is_empty() {
        return "none".to_string();
    }
    ids.iter()
        .map(|id| id.to_string())
        .collect::<Vec<_>>()
        .join(", ")
}

fn or_none(text: &str) -> &str {
    if text.is_empty() {
        "(none)"
    } else {
        text
    }
}

fn render_ke(ke: &KeyEvent) -> String {
    let species = if ke.species.is_empty() {
        "not specified".to_string()
    } else {
        ke.species.join(", ")
    };
    format!(
        "[{}] {}\nBiological level: {}\nApplicable species: {}\nDescription: {}",
        ke.id,
        ke.title,
        ke.biological_level.as_deref().unwrap_or("not specified"),
        species,
        or_none(&ke.description),
    )
}

fn render_ker(kb: &KnowledgeBase, ker: &KeyEventRelationship) -> String {
    let title = |id: KeId| kb.key_event(id).map(|k| k.title.as_str()).unwrap_or("");
    format!(
        "[{}] {} → {} ({} → {})\nDescription: {}",
        ker.id,
        ker.upstream_ke_id.get(),
        ker.downstream_ke_id.get(),
        title(ker.upstream_ke_id),
        title(ker.downstream_ke_id),
        or_none(&ker.description),
    )
}

fn render_aop(aop: &AopEntry) -> String {
    format!(
        "[{}] {}\nMIE: {}\nKE: {}\nAO: {}\nDescription: {}",
        aop.id,
        aop.title,
        join_ids(&aop.mie_ids),
        join_ids(&aop.ke_ids),
        join_ids(&aop.ao_ids),
        or_none(&aop.description),
    )
}

fn section(out: &mut String, header: &str, entries: &[String]) {
    let _ = writeln!(out, "{header}");
    if entries.is_empty() {
        out.push_str("(none)\n");
    }
    for e in entries {
        out.push('\n');
        out.push_str(e);
        out.push('\n');
    }
}

/// Renders every KE, KER and AOP of `selection` under the three section
/// headers, entries ascending by id.
pub fn assemble_context(
    kb: &KnowledgeBase,
    selection: &ExpandedSelection,
) -> Result<ContextBundle, ExpansionError> {
    selection.validate(kb)?;

    let ke_details: Vec<String> = selection
        .expanded_ke_ids
        .iter()
        .filter_map(|id| kb.key_event(*id))
        .map(render_ke)
        .collect();
    let ker_details: Vec<String> = selection
        .ker_ids
        .iter()
        .filter_map(|id| kb.relationship(*id))
        .map(|ker| render_ker(kb, ker))
        .collect();
    let aop_details: Vec<String> = selection
        .aop_ids
        .iter()
        .filter_map(|id| kb.aop(*id))
        .map(render_aop)
        .collect();

    let mut rendered_text = String::new();
    section(&mut rendered_text, KE_SECTION, &ke_details);
    rendered_text.push('\n');
    section(&mut rendered_text, KER_SECTION, &ker_details);
    rendered_text.push('\n');
    section(&mut rendered_text, AOP_SECTION, &aop_details);

    Ok(ContextBundle {
        ke_details,
        ker_details,
        aop_details,
        rendered_text,
    })
}
