//! The structured knowledge base built from an AOP-Wiki XML dump.
//!
//! Two resources come out of ingest: a [`KnowledgeBase`] holding full Key Event,
//! Key Event Relationship and AOP records (persisted as `AOP-Smart.json`), and a
//! [`KeIndex`] listing only KE ids and titles (persisted as `Index.txt`).

mod build;
mod store;
mod text;
mod xml;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AopId, KeId, KerId};

pub use build::{build_index, build_knowledge_base, DEFAULT_MAX_DESC_CHARS};
pub use store::{load_resources, write_resources, StoreError, INDEX_FILE, KB_FILE};
pub use text::{estimate_tokens, filter_and_truncate, TRUNCATION_MARKER};
pub use xml::{
    parse_aopwiki_xml, IngestDiagnostics, ParseError, RawAop, RawKeyEvent, RawKnowledge,
    RawRelationship,
};

/// Format version written to and expected in `AOP-Smart.json`.
pub const FORMAT_VERSION: &str = "1";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEvent {
    pub id: KeId,
    pub title: String,
    pub biological_level: Option<String>,
    pub description: String,
    pub species: Vec<String>,
    pub upstream_ids: BTreeSet<KeId>,
    pub downstream_ids: BTreeSet<KeId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeyEventRelationship {
    pub id: KerId,
    pub upstream_ke_id: KeId,
    pub downstream_ke_id: KeId,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AopEntry {
    pub id: AopId,
    pub title: String,
    pub mie_ids: BTreeSet<KeId>,
    pub ke_ids: BTreeSet<KeId>,
    pub ao_ids: BTreeSet<KeId>,
    pub description: String,
}

impl AopEntry {
    /// Union of the MIE, intermediate KE and AO roles. A KE that plays two roles
    /// appears once.
    pub fn event_ids(&self) -> BTreeSet<KeId> {
        self.mie_ids
            .iter()
            .chain(&self.ke_ids)
            .chain(&self.ao_ids)
            .copied()
            .collect()
    }
}

/// Referential or adjacency inconsistency found while assembling a knowledge base.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IntegrityError {
    #[error("duplicate {0}")]
    DuplicateKeyEvent(KeId),
    #[error("duplicate {0}")]
    DuplicateRelationship(KerId),
    #[error("duplicate {0}")]
    DuplicateAop(AopId),
    #[error("{0} has an empty title")]
    EmptyKeyEventTitle(KeId),
    #[error("{0} has an empty title")]
    EmptyAopTitle(AopId),
    #[error("title of {0} contains a tab or line break")]
    MultilineTitle(KeId),
    #[error("{owner} references unknown {target}")]
    DanglingReference { owner: String, target: KeId },
    #[error("{0} has no MIE, KE or AO events")]
    EmptyAop(AopId),
    #[error("adjacency of {ke} disagrees with the relationship list")]
    AdjacencyMismatch { ke: KeId },
}

/// Immutable store of KE, KER and AOP records keyed by public id.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KnowledgeBase {
    key_events: BTreeMap<KeId, KeyEvent>,
    relationships: BTreeMap<KerId, KeyEventRelationship>,
    aops: BTreeMap<AopId, AopEntry>,
    source_snapshot_date: String,
    version: String,
}

impl KnowledgeBase {
    /// Assembles a knowledge base from complete records, checking uniqueness,
    /// referential integrity and that the stored adjacency sets are exactly the
    /// ones implied by the relationship list.
    pub fn from_records(
        key_events: Vec<KeyEvent>,
        relationships: Vec<KeyEventRelationship>,
        aops: Vec<AopEntry>,
        source_snapshot_date: impl Into<String>,
    ) -> Result<Self, IntegrityError> {
        let mut ke_map = BTreeMap::new();
        for ke in key_events {
            if ke.title.trim().is_empty() {
                return Err(IntegrityError::EmptyKeyEventTitle(ke.id));
            }
            if ke.title.contains(['\t', '\n', '\r']) {
                return Err(IntegrityError::MultilineTitle(ke.id));
            }
            let id = ke.id;
            if ke_map.insert(id, ke).is_some() {
                return Err(IntegrityError::DuplicateKeyEvent(id));
            }
        }

        let mut ker_map = BTreeMap::new();
        let mut implied: BTreeMap<KeId, (BTreeSet<KeId>, BTreeSet<KeId>)> = BTreeMap::new();
        for ker in relationships {
            for end in [ker.upstream_ke_id, ker.downstream_ke_id] {
                if !ke_map.contains_key(&end) {
                    return Err(IntegrityError::DanglingReference {
                        owner: ker.id.to_string(),
                        target: end,
                    });
                }
            }
            implied
                .entry(ker.upstream_ke_id)
                .or_default()
                .1
                .insert(ker.downstream_ke_id);
            implied
                .entry(ker.downstream_ke_id)
                .or_default()
                .0
                .insert(ker.upstream_ke_id);
            let id = ker.id;
            if ker_map.insert(id, ker).is_some() {
                return Err(IntegrityError::DuplicateRelationship(id));
            }
        }

        let empty = (BTreeSet::new(), BTreeSet::new());
        for (id, ke) in &ke_map {
            let (up, down) = implied.get(id).unwrap_or(&empty);
            if &ke.upstream_ids != up || &ke.downstream_ids != down {
                return Err(IntegrityError::AdjacencyMismatch { ke: *id });
            }
        }

        let mut aop_map = BTreeMap::new();
        for aop in aops {
            if aop.title.trim().is_empty() {
                return Err(IntegrityError::EmptyAopTitle(aop.id));
            }
            let events = aop.event_ids();
            if events.is_empty() {
                return Err(IntegrityError::EmptyAop(aop.id));
            }
            if let Some(missing) = events.iter().find(|k| !ke_map.contains_key(k)) {
                return Err(IntegrityError::DanglingReference {
                    owner: aop.id.to_string(),
                    target: *missing,
                });
            }
            let id = aop.id;
            if aop_map.insert(id, aop).is_some() {
                return Err(IntegrityError::DuplicateAop(id));
            }
        }

        Ok(Self {
            key_events: ke_map,
            relationships: ker_map,
            aops: aop_map,
            source_snapshot_date: source_snapshot_date.into(),
            version: FORMAT_VERSION.to_string(),
        })
    }

    pub fn key_event(&self, id: KeId) -> Option<&KeyEvent> {
        self.key_events.get(&id)
    }

    pub fn relationship(&self, id: KerId) -> Option<&KeyEventRelationship> {
        self.relationships.get(&id)
    }

    pub fn aop(&self, id: AopId) -> Option<&AopEntry> {
        self.aops.get(&id)
    }

    pub fn contains_key_event(&self, id: KeId) -> bool {
        self.key_events.contains_key(&id)
    }

    /// Key events in ascending id order.
    pub fn key_events(&self) -> impl ExactSizeIterator<Item = &KeyEvent> {
        self.key_events.values()
    }

    pub fn relationships(&self) -> impl ExactSizeIterator<Item = &KeyEventRelationship> {
        self.relationships.values()
    }

    pub fn aops(&self) -> impl ExactSizeIterator<Item = &AopEntry> {
        self.aops.values()
    }

    pub fn ke_count(&self) -> usize {
        self.key_events.len()
    }

    pub fn ker_count(&self) -> usize {
        self.relationships.len()
    }

    pub fn aop_count(&self) -> usize {
        self.aops.len()
    }

    pub fn source_snapshot_date(&self) -> &str {
        &self.source_snapshot_date
    }

    pub fn version(&self) -> &str {
        &self.version
    }
}

/// One line of `Index.txt`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: KeId,
    pub title: String,
}

/// The id+title listing handed to the model during KE selection.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct KeIndex {
    entries: Vec<IndexEntry>,
}

impl KeIndex {
    /// Builds an index from entries, sorting by id. Returns `None` when an id
    /// occurs twice or a title contains a tab or line break.
    pub fn from_entries(mut entries: Vec<IndexEntry>) -> Option<Self> {
        entries.sort_by_key(|e| e.id);
        let unique = entries.windows(2).all(|w| w[0].id < w[1].id);
        let clean = entries
            .iter()
            .all(|e| !e.title.contains(['\t', '\n', '\r']));
        (unique && clean).then_some(Self { entries })
    }

    pub fn entries(&self) -> &[IndexEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, id: KeId) -> bool {
        self.entries.binary_search_by_key(&id, |e| e.id).is_ok()
    }

    /// `Index.txt` serialization: `<id>\t<title>\n` per entry, ascending by id.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for e in &self.entries {
            out.push_str(&e.id.get().to_string());
            out.push('\t');
            out.push_str(&e.title);
            out.push('\n');
        }
        out
    }
}
