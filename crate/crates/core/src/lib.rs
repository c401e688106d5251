//! Retrieval-augmented question answering over Adverse Outcome Pathway knowledge.
//!
//! The AOP-Wiki XML dump is ingested into a [`kb::KnowledgeBase`] and a
//! lightweight [`kb::KeIndex`]. At query time a model picks the most relevant
//! KEs from the index, [`expansion`] grows them into KE/KER/AOP context, and a
//! second call answers from that context. [`bench`] grades both this flow and
//! a no-retrieval baseline on a four-category question set.

pub mod bench;
pub mod expansion;
pub mod fixtures;
pub mod ids;
pub mod kb;
pub mod llm;
pub mod pipeline;

pub use ids::{AopId, KeId, KerId};
pub use kb::{KeIndex, KnowledgeBase};

/// Parses an XML dump and builds both resources in one step.
pub fn ingest_xml(
    xml: &[u8],
    max_desc_chars: usize,
    source_snapshot_date: &str,
) -> Result<(KnowledgeBase, KeIndex, kb::IngestDiagnostics), kb::ParseError> {
    let raw = kb::parse_aopwiki_xml(xml)?;
    let (kb, diagnostics) = kb::build_knowledge_base(raw, max_desc_chars, source_snapshot_date);
    let index = kb::build_index(&kb);
    if diagnostics.dropped_total() > 0 {
        tracing::warn!(
            dropped_key_events = diagnostics.dropped_key_events,
            dropped_relationships = diagnostics.dropped_relationships,
            dropped_aops = diagnostics.dropped_aops,
            dropped_aop_event_refs = diagnostics.dropped_aop_event_refs,
            "unresolvable entities dropped during ingest"
        );
    }
    Ok((kb, index, diagnostics))
}
