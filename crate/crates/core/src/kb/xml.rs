//! Streaming reader for the AOP-Wiki XML dump.
//!
//! Entities in the dump are keyed by internal document identifiers. The
//! `vendor-specific` section maps those to public numeric AOP-Wiki ids via
//! `*-reference` elements carrying `id` and `aop-wiki-id` attributes. All
//! cross-references are resolved to public ids once the whole document has
//! been read.

use std::collections::{BTreeSet, HashMap, HashSet};

use quick_xml::events::{BytesStart, Event};
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ids::{AopId, KeId, KerId};

#[derive(Debug, Error)]
pub enum ParseError {
    #[error("malformed XML at byte {offset}: {message}")]
    Malformed { offset: u64, message: String },
    #[error("no key events could be resolved from the document")]
    EmptyKnowledge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawKeyEvent {
    pub id: KeId,
    pub title: String,
    pub biological_level: Option<String>,
    pub description: String,
    pub species: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawRelationship {
    pub id: KerId,
    pub upstream_ke_id: KeId,
    pub downstream_ke_id: KeId,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawAop {
    pub id: AopId,
    pub title: String,
    pub mie_ids: BTreeSet<KeId>,
    pub ke_ids: BTreeSet<KeId>,
    pub ao_ids: BTreeSet<KeId>,
    pub description: String,
}

/// Counts of entities and references that were dropped while resolving ids.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestDiagnostics {
    pub key_events: usize,
    pub relationships: usize,
    pub aops: usize,
    pub dropped_key_events: usize,
    pub dropped_relationships: usize,
    pub dropped_aops: usize,
    pub dropped_aop_event_refs: usize,
}

impl IngestDiagnostics {
    pub fn dropped_total(&self) -> usize {
        self.dropped_key_events
            + self.dropped_relationships
            + self.dropped_aops
            + self.dropped_aop_event_refs
    }
}

/// Entities with public ids resolved and text left untruncated.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawKnowledge {
    pub key_events: Vec<RawKeyEvent>,
    pub relationships: Vec<RawRelationship>,
    pub aops: Vec<RawAop>,
    pub diagnostics: IngestDiagnostics,
}

#[derive(Default)]
struct DocKeyEvent {
    internal_id: String,
    title: String,
    level: String,
    description: String,
    taxonomy_refs: Vec<String>,
}

#[derive(Default)]
struct DocRelationship {
    internal_id: String,
    upstream: String,
    downstream: String,
    description: String,
}

#[derive(Default)]
struct DocAop {
    internal_id: String,
    title: String,
    abstract_text: String,
    description: String,
    mie: Vec<String>,
    ke: Vec<String>,
    ao: Vec<String>,
}

#[derive(Default)]
struct DocTaxonomy {
    internal_id: String,
    name: String,
}

enum Current {
    None,
    KeyEvent(DocKeyEvent),
    Relationship(DocRelationship),
    Aop(DocAop),
    Taxonomy(DocTaxonomy),
}

/// Text fields captured from the current top-level entity.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Field {
    KeTitle,
    KeLevel,
    KeDescription,
    KerUpstream,
    KerDownstream,
    KerDescription,
    AopTitle,
    AopAbstract,
    AopDescription,
    TaxonomyName,
}

#[derive(Default)]
struct Document {
    key_events: Vec<DocKeyEvent>,
    relationships: Vec<DocRelationship>,
    aops: Vec<DocAop>,
    taxonomy_names: HashMap<String, String>,
    ke_refs: HashMap<String, u64>,
    ker_refs: HashMap<String, u64>,
    aop_refs: HashMap<String, u64>,
}

fn malformed(offset: u64, message: impl Into<String>) -> ParseError {
    ParseError::Malformed {
        offset,
        message: message.into(),
    }
}

fn attr(e: &BytesStart<'_>, name: &str, offset: u64) -> Result<Option<String>, ParseError> {
    match e.try_get_attribute(name) {
        Ok(Some(a)) => a
            .unescape_value()
            .map(|v| Some(v.trim().to_string()))
            .map_err(|err| malformed(offset, err.to_string())),
        Ok(None) => Ok(None),
        Err(err) => Err(malformed(offset, err.to_string())),
    }
}

/// Parses an AOP-Wiki XML dump into raw entity lists keyed by public id.
pub fn parse_aopwiki_xml(xml: &[u8]) -> Result<RawKnowledge, ParseError> {
    let doc = read_document(xml)?;
    let raw = resolve(doc);
    if raw.key_events.is_empty() {
        return Err(ParseError::EmptyKnowledge);
    }
    Ok(raw)
}

fn read_document(xml: &[u8]) -> Result<Document, ParseError> {
    let mut reader = Reader::from_reader(xml);
    let mut buf = Vec::new();
    let mut doc = Document::default();
    // Local names of open elements, root included.
    let mut path: Vec<String> = Vec::new();
    let mut current = Current::None;
    // Field being captured and the depth of its element.
    let mut capture: Option<(Field, usize)> = None;
    let mut seen_root = false;

    loop {
        let offset = reader.buffer_position();
        let event = reader
            .read_event_into(&mut buf)
            .map_err(|e| malformed(reader.error_position(), e.to_string()))?;
        match event {
            Event::Start(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if path.is_empty() {
                    if seen_root {
                        return Err(malformed(offset, "multiple root elements"));
                    }
                    seen_root = true;
                }
                path.push(name);
                if capture.is_none() {
                    capture = on_open(&e, &path, &mut current, &mut doc, offset)?;
                }
            }
            Event::Empty(e) => {
                let name = String::from_utf8_lossy(e.local_name().as_ref()).into_owned();
                if path.is_empty() {
                    if seen_root {
                        return Err(malformed(offset, "multiple root elements"));
                    }
                    seen_root = true;
                }
                path.push(name);
                if capture.is_none() {
                    on_open(&e, &path, &mut current, &mut doc, offset)?;
                }
                on_close(&path, &mut current, &mut doc);
                path.pop();
            }
            Event::End(_) => {
                if let Some((_, depth)) = capture {
                    if depth == path.len() {
                        capture = None;
                    }
                }
                on_close(&path, &mut current, &mut doc);
                path.pop();
            }
            Event::Text(t) => {
                if let Some((field, _)) = capture {
                    let text = t
                        .xml10_content()
                        .map_err(|e| malformed(offset, e.to_string()))?;
                    append(&mut current, field, &text);
                } else if path.is_empty() && !t.decode().unwrap_or_default().trim().is_empty() {
                    return Err(malformed(offset, "text outside the root element"));
                }
            }
            Event::CData(t) => {
                if let Some((field, _)) = capture {
                    let text = t.decode().map_err(|e| malformed(offset, e.to_string()))?;
                    append(&mut current, field, &text);
                }
            }
            Event::GeneralRef(r) => {
                let resolved = match r
                    .resolve_char_ref()
                    .map_err(|e| malformed(offset, e.to_string()))?
                {
                    Some(c) => c.to_string(),
                    None => {
                        let name = r.decode().map_err(|e| malformed(offset, e.to_string()))?;
                        quick_xml::escape::resolve_predefined_entity(&name)
                            .ok_or_else(|| {
                                malformed(offset, format!("undeclared entity &{name};"))
                            })?
                            .to_string()
                    }
                };
                if let Some((field, _)) = capture {
                    append(&mut current, field, &resolved);
                }
            }
            Event::Eof => {
                if !path.is_empty() {
                    return Err(malformed(
                        reader.buffer_position(),
                        format!("unexpected end of document inside <{}>", path.join("/")),
                    ));
                }
                if !seen_root {
                    return Err(malformed(0, "document has no root element"));
                }
                break;
            }
            _ => {}
        }
        buf.clear();
    }
    Ok(doc)
}

/// Handles an opening tag. `path[0]` is the root element; top-level entities
/// sit at `path[1]`.
fn on_open(
    e: &BytesStart<'_>,
    path: &[String],
    current: &mut Current,
    doc: &mut Document,
    offset: u64,
) -> Result<Option<(Field, usize)>, ParseError> {
    let depth = path.len();
    let rel: Vec<&str> = path.iter().skip(1).map(String::as_str).collect();
    let field = match (rel.as_slice(), &mut *current) {
        (["key-event"], _) => {
            *current = Current::KeyEvent(DocKeyEvent {
                internal_id: attr(e, "id", offset)?.unwrap_or_default(),
                ..Default::default()
            });
            None
        }
        (["key-event-relationship"], _) => {
            *current = Current::Relationship(DocRelationship {
                internal_id: attr(e, "id", offset)?.unwrap_or_default(),
                ..Default::default()
            });
            None
        }
        (["aop"], _) => {
            *current = Current::Aop(DocAop {
                internal_id: attr(e, "id", offset)?.unwrap_or_default(),
                ..Default::default()
            });
            None
        }
        (["taxonomy"], _) => {
            *current = Current::Taxonomy(DocTaxonomy {
                internal_id: attr(e, "id", offset)?.unwrap_or_default(),
                ..Default::default()
            });
            None
        }
        (["vendor-specific", reference], _) => {
            let internal = attr(e, "id", offset)?;
            let public = attr(e, "aop-wiki-id", offset)?.and_then(|v| v.parse::<u64>().ok());
            if let (Some(internal), Some(public)) = (internal, public) {
                let table = match *reference {
                    "key-event-reference" => Some(&mut doc.ke_refs),
                    "key-event-relationship-reference" => Some(&mut doc.ker_refs),
                    "aop-reference" => Some(&mut doc.aop_refs),
                    _ => None,
                };
                if let Some(table) = table {
                    table.entry(internal).or_insert(public);
                }
            }
            None
        }
        (["key-event", "title"], Current::KeyEvent(_)) => Some(Field::KeTitle),
        (["key-event", "biological-organization-level"], Current::KeyEvent(_)) => {
            Some(Field::KeLevel)
        }
        (["key-event", "description"], Current::KeyEvent(_)) => Some(Field::KeDescription),
        (["key-event", "applicability", "taxonomy"], Current::KeyEvent(ke)) => {
            if let Some(t) = attr(e, "taxonomy-id", offset)? {
                ke.taxonomy_refs.push(t);
            }
            None
        }
        (["key-event-relationship", "title", "upstream-id"], Current::Relationship(_)) => {
            Some(Field::KerUpstream)
        }
        (["key-event-relationship", "title", "downstream-id"], Current::Relationship(_)) => {
            Some(Field::KerDownstream)
        }
        (["key-event-relationship", "description"], Current::Relationship(_)) => {
            Some(Field::KerDescription)
        }
        (["aop", "title"], Current::Aop(_)) => Some(Field::AopTitle),
        (["aop", "abstract"], Current::Aop(_)) => Some(Field::AopAbstract),
        (["aop", "description"], Current::Aop(_)) => Some(Field::AopDescription),
        (["aop", "molecular-initiating-event"], Current::Aop(aop)) => {
            aop.mie.extend(attr(e, "key-event-id", offset)?);
            None
        }
        (["aop", "adverse-outcome"], Current::Aop(aop)) => {
            aop.ao.extend(attr(e, "key-event-id", offset)?);
            None
        }
        (["aop", "key-events", "key-event"], Current::Aop(aop)) => {
            aop.ke.extend(attr(e, "id", offset)?);
            None
        }
        (["taxonomy", "name"], Current::Taxonomy(_)) => Some(Field::TaxonomyName),
        _ => None,
    };
    Ok(field.map(|f| (f, depth)))
}

fn on_close(path: &[String], current: &mut Current, doc: &mut Document) {
    if path.len() != 2 {
        return;
    }
    match std::mem::replace(current, Current::None) {
        Current::KeyEvent(ke) => doc.key_events.push(ke),
        Current::Relationship(ker) => doc.relationships.push(ker),
        Current::Aop(aop) => doc.aops.push(aop),
        Current::Taxonomy(t) => {
            let name = t.name.split_whitespace().collect::<Vec<_>>().join(" ");
            if !t.internal_id.is_empty() && !name.is_empty() {
                doc.taxonomy_names.entry(t.internal_id).or_insert(name);
            }
        }
        Current::None => {}
    }
}

fn append(current: &mut Current, field: Field, text: &str) {
    let target = match (current, field) {
        (Current::KeyEvent(ke), Field::KeTitle) => &mut ke.title,
        (Current::KeyEvent(ke), Field::KeLevel) => &mut ke.level,
        (Current::KeyEvent(ke), Field::KeDescription) => &mut ke.description,
        (Current::Relationship(r), Field::KerUpstream) => &mut r.upstream,
        (Current::Relationship(r), Field::KerDownstream) => &mut r.downstream,
        (Current::Relationship(r), Field::KerDescription) => &mut r.description,
        (Current::Aop(a), Field::AopTitle) => &mut a.title,
        (Current::Aop(a), Field::AopAbstract) => &mut a.abstract_text,
        (Current::Aop(a), Field::AopDescription) => &mut a.description,
        (Current::Taxonomy(t), Field::TaxonomyName) => &mut t.name,
        _ => return,
    };
    target.push_str(text);
}

fn single_line(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn resolve(doc: Document) -> RawKnowledge {
    let mut diag = IngestDiagnostics::default();

    let mut ke_public: HashMap<&str, KeId> = HashMap::new();
    let mut seen_ke = HashSet::new();
    let mut key_events = Vec::new();
    for ke in &doc.key_events {
        let title = single_line(&ke.title);
        let Some(&public) = doc.ke_refs.get(&ke.internal_id) else {
            diag.dropped_key_events += 1;
            continue;
        };
        let id = KeId(public);
        if title.is_empty() || !seen_ke.insert(id) {
            diag.dropped_key_events += 1;
            continue;
        }
        ke_public.insert(ke.internal_id.as_str(), id);

        let mut species: Vec<String> = Vec::new();
        let mut seen_species = HashSet::new();
        for name in ke
            .taxonomy_refs
            .iter()
            .filter_map(|t| doc.taxonomy_names.get(t))
        {
            if seen_species.insert(name.to_lowercase()) {
                species.push(name.clone());
            }
        }
        let level = single_line(&ke.level);
        key_events.push(RawKeyEvent {
            id,
            title,
            biological_level: (!level.is_empty()).then_some(level),
            description: ke.description.clone(),
            species,
        });
    }

    let mut seen_ker = HashSet::new();
    let mut relationships = Vec::new();
    for ker in &doc.relationships {
        let public = doc.ker_refs.get(&ker.internal_id).map(|&p| KerId(p));
        let up = ke_public.get(ker.upstream.trim());
        let down = ke_public.get(ker.downstream.trim());
        match (public, up, down) {
            (Some(id), Some(&up), Some(&down)) if seen_ker.insert(id) => {
                relationships.push(RawRelationship {
                    id,
                    upstream_ke_id: up,
                    downstream_ke_id: down,
                    description: ker.description.clone(),
                });
            }
            _ => diag.dropped_relationships += 1,
        }
    }

    let mut seen_aop = HashSet::new();
    let mut aops = Vec::new();
    for aop in &doc.aops {
        let title = single_line(&aop.title);
        let mut dropped_refs = 0;
        let mut resolve_role = |refs: &[String]| -> BTreeSet<KeId> {
            refs.iter()
                .filter_map(|r| {
                    let hit = ke_public.get(r.as_str()).copied();
                    if hit.is_none() {
                        dropped_refs += 1;
                    }
                    hit
                })
                .collect()
        };
        let mie_ids = resolve_role(&aop.mie);
        let ke_ids = resolve_role(&aop.ke);
        let ao_ids = resolve_role(&aop.ao);
        let public = doc.aop_refs.get(&aop.internal_id).map(|&p| AopId(p));
        let has_events = !(mie_ids.is_empty() && ke_ids.is_empty() && ao_ids.is_empty());
        match public {
            Some(id) if !title.is_empty() && has_events && seen_aop.insert(id) => {
                diag.dropped_aop_event_refs += dropped_refs;
                let description = if aop.abstract_text.trim().is_empty() {
                    aop.description.clone()
                } else {
                    aop.abstract_text.clone()
                };
                aops.push(RawAop {
                    id,
                    title,
                    mie_ids,
                    ke_ids,
                    ao_ids,
                    description,
                });
            }
            _ => diag.dropped_aops += 1,
        }
    }

    diag.key_events = key_events.len();
    diag.relationships = relationships.len();
    diag.aops = aops.len();
    RawKnowledge {
        key_events,
        relationships,
        aops,
        diagnostics: diag,
    }
}
