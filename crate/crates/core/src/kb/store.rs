//! Persistence of the two ingest resources: `Index.txt` and `AOP-Smart.json`.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    build_index, AopEntry, IndexEntry, IntegrityError, KeIndex, KeyEvent, KeyEventRelationship,
    KnowledgeBase, FORMAT_VERSION,
};
use crate::ids::KeId;

pub const INDEX_FILE: &str = "Index.txt";
pub const KB_FILE: &str = "AOP-Smart.json";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("missing resource file {0}")]
    MissingFile(PathBuf),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
    #[error("invalid JSON in {path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("unsupported knowledge base version {found:?} (expected {expected:?})")]
    VersionMismatch { found: String, expected: String },
    #[error("knowledge base is inconsistent: {0}")]
    Consistency(#[from] IntegrityError),
    #[error("{path} line {line}: {message}")]
    IndexFormat {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{INDEX_FILE} does not match the key events in {KB_FILE}")]
    IndexMismatch,
}

#[derive(Serialize, Deserialize)]
struct KbDocument {
    version: String,
    source_snapshot_date: String,
    key_events: Vec<KeyEvent>,
    relationships: Vec<KeyEventRelationship>,
    aops: Vec<AopEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Writes `Index.txt` and `AOP-Smart.json` into `dir`, creating it if needed.
/// Returns the paths of the index and knowledge base files.
pub fn write_resources(
    kb: &KnowledgeBase,
    index: &KeIndex,
    dir: &Path,
) -> Result<(PathBuf, PathBuf), StoreError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;

    let index_path = dir.join(INDEX_FILE);
    fs::write(&index_path, index.to_text()).map_err(io_err(&index_path))?;

    let doc = KbDocument {
        version: kb.version().to_string(),
        source_snapshot_date: kb.source_snapshot_date().to_string(),
        key_events: kb.key_events().cloned().collect(),
        relationships: kb.relationships().cloned().collect(),
        aops: kb.aops().cloned().collect(),
    };
    let kb_path = dir.join(KB_FILE);
    let mut json = serde_json::to_string_pretty(&doc).map_err(|source| StoreError::Json {
        path: kb_path.clone(),
        source,
    })?;
    json.push('\n');
    fs::write(&kb_path, json).map_err(io_err(&kb_path))?;

    Ok((index_path, kb_path))
}

fn read(path: &Path) -> Result<String, StoreError> {
    fs::read_to_string(path).map_err(|e| match e.kind() {
        io::ErrorKind::NotFound => StoreError::MissingFile(path.to_path_buf()),
        _ => StoreError::Io {
            path: path.to_path_buf(),
            source: e,
        },
    })
}

fn parse_index(path: &Path, text: &str) -> Result<KeIndex, StoreError> {
    let format_err = |line: usize, message: &str| StoreError::IndexFormat {
        path: path.to_path_buf(),
        line,
        message: message.to_string(),
    };
    let mut entries = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let (id, title) = line
            .split_once('\t')
            .ok_or_else(|| format_err(n + 1, "expected <id><TAB><title>"))?;
        let id: KeId = id
            .parse()
            .map_err(|_| format_err(n + 1, "id is not a non-negative integer"))?;
        if let Some(prev) = entries.last().map(|e: &IndexEntry| e.id) {
            if prev >= id {
                return Err(format_err(n + 1, "ids must be strictly ascending"));
            }
        }
        entries.push(IndexEntry {
            id,
            title: title.to_string(),
        });
    }
    KeIndex::from_entries(entries).ok_or_else(|| format_err(0, "invalid index entries"))
}

/// Loads and validates both resources from `dir`.
pub fn load_resources(dir: &Path) -> Result<(KnowledgeBase, KeIndex), StoreError> {
    let kb_path = dir.join(KB_FILE);
    let index_path = dir.join(INDEX_FILE);

    let kb_text = read(&kb_path)?;
    let doc: KbDocument = serde_json::from_str(&kb_text).map_err(|source| StoreError::Json {
        path: kb_path.clone(),
        source,
    })?;
    if doc.version != FORMAT_VERSION {
        return Err(StoreError::VersionMismatch {
            found: doc.version,
            expected: FORMAT_VERSION.to_string(),
        });
    }
    let kb = KnowledgeBase::from_records(
        doc.key_events,
        doc.relationships,
        doc.aops,
        doc.source_snapshot_date,
    )?;

    let index = parse_index(&index_path, &read(&index_path)?)?;
    if index != build_index(&kb) {
        return Err(StoreError::IndexMismatch);
    }
    Ok((kb, index))
}
