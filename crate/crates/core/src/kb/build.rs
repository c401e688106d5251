use std::collections::{BTreeMap, BTreeSet, HashSet};

use super::text::filter_and_truncate;
use super::xml::{IngestDiagnostics, RawKnowledge};
use super::{AopEntry, IndexEntry, KeIndex, KeyEvent, KeyEventRelationship, KnowledgeBase};
use crate::ids::KeId;

/// Default per-description character limit.
pub const DEFAULT_MAX_DESC_CHARS: usize = 1200;

/// Filters and truncates descriptions, precomputes KE adjacency from the
/// relationship list and assembles the knowledge base.
///
/// Relationships or AOP event references pointing at KEs that are not in
/// `raw` are dropped and counted in the returned diagnostics; so are repeated
/// ids.
pub fn build_knowledge_base(
    raw: RawKnowledge,
    max_desc_chars: usize,
    source_snapshot_date: &str,
) -> (KnowledgeBase, IngestDiagnostics) {
    let mut diag = raw.diagnostics;

    let mut key_events: BTreeMap<KeId, KeyEvent> = BTreeMap::new();
    for ke in raw.key_events {
        let title = ke.title.split_whitespace().collect::<Vec<_>>().join(" ");
        if title.is_empty() || key_events.contains_key(&ke.id) {
            diag.dropped_key_events += 1;
            continue;
        }
        key_events.insert(
            ke.id,
            KeyEvent {
                id: ke.id,
                title,
                biological_level: ke.biological_level,
                description: filter_and_truncate(&ke.description, max_desc_chars),
                species: ke.species,
                upstream_ids: BTreeSet::new(),
                downstream_ids: BTreeSet::new(),
            },
        );
    }

    let mut seen_kers = HashSet::new();
    let mut relationships = Vec::new();
    for ker in raw.relationships {
        let (up, down) = (ker.upstream_ke_id, ker.downstream_ke_id);
        if !key_events.contains_key(&up)
            || !key_events.contains_key(&down)
            || !seen_kers.insert(ker.id)
        {
            diag.dropped_relationships += 1;
            continue;
        }
        if let Some(u) = key_events.get_mut(&up) {
            u.downstream_ids.insert(down);
        }
        if let Some(d) = key_events.get_mut(&down) {
            d.upstream_ids.insert(up);
        }
        relationships.push(KeyEventRelationship {
            id: ker.id,
            upstream_ke_id: up,
            downstream_ke_id: down,
            description: filter_and_truncate(&ker.description, max_desc_chars),
        });
    }

    let mut seen_aops = HashSet::new();
    let mut aops = Vec::new();
    for aop in raw.aops {
        let mut keep = |ids: BTreeSet<KeId>| -> BTreeSet<KeId> {
            let before = ids.len();
            let kept: BTreeSet<KeId> = ids
                .into_iter()
                .filter(|id| key_events.contains_key(id))
                .collect();
            diag.dropped_aop_event_refs += before - kept.len();
            kept
        };
        let entry = AopEntry {
            id: aop.id,
            title: aop.title.split_whitespace().collect::<Vec<_>>().join(" "),
            mie_ids: keep(aop.mie_ids),
            ke_ids: keep(aop.ke_ids),
            ao_ids: keep(aop.ao_ids),
            description: filter_and_truncate(&aop.description, max_desc_chars),
        };
        if entry.title.is_empty() || entry.event_ids().is_empty() || !seen_aops.insert(entry.id) {
            diag.dropped_aops += 1;
            continue;
        }
        aops.push(entry);
    }

    diag.key_events = key_events.len();
    diag.relationships = relationships.len();
    diag.aops = aops.len();

    let kb = KnowledgeBase::from_records(
        key_events.into_values().collect(),
        relationships,
        aops,
        source_snapshot_date,
    )
    .expect("records assembled above satisfy every knowledge base invariant");
    (kb, diag)
}

/// One `(id, title)` entry per KE, ascending by id.
pub fn build_index(kb: &KnowledgeBase) -> KeIndex {
    let entries = kb
        .key_events()
        .map(|ke| IndexEntry {
            id: ke.id,
            title: ke.title.clone(),
        })
        .collect();
    KeIndex::from_entries(entries).expect("KE ids are unique and titles are single-line")
}
