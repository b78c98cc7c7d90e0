// SPDX-License-Identifier: Apache-2.0

//! Snapshot directory store, layout `twin/1`:
//!
//! ```text
//! <root>/index.json                 revisions in history order
//! <root>/snapshots/<id>/graph.txt   canonical graph form
//! <root>/snapshots/<id>/{anchors,unresolved,evidence,cards,sources,overlay,meta}.json
//! ```
//!
//! Snapshot ids are `<revision>-<first 8 hex of the canonical digest>`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::pipeline::BuildError;
use super::snapshot::{TwinConfig, TwinSnapshot};
use crate::canonical::{canonical_bytes_unchecked, parse_canonical, CanonicalError};
use crate::codemap::CodeMap;
use crate::knowledge::card::KnowledgeCard;
use crate::knowledge::units::UnitInputs;
use crate::model::{Graph, Node};
use crate::text::digest;

pub const STORE_FORMAT: &str = "twin/1";

#[derive(Debug, Error)]
pub enum StoreError {
    #[error("storage I/O on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("corrupt store file {path}: {reason}")]
    Corrupt { path: PathBuf, reason: String },
    #[error("unknown snapshot or revision `{0}`")]
    UnknownId(String),
    #[error("store is empty")]
    Empty,
    #[error("snapshot does not validate; refusing to commit:\n{0}")]
    Invalid(crate::validate::ValidationReport),
    #[error(transparent)]
    Build(#[from] BuildError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub id: String,
    pub revision: String,
    pub digest: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreIndex {
    pub format: String,
    pub snapshots: Vec<IndexEntry>,
}

impl Default for StoreIndex {
    fn default() -> Self {
        StoreIndex {
            format: STORE_FORMAT.into(),
            snapshots: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
struct Meta {
    format: String,
    revision: String,
    digest: String,
}

/// Single-writer store rooted at a directory. Readers may load concurrently;
/// a snapshot becomes visible only once the index is rewritten.
#[derive(Debug, Clone)]
pub struct TwinStore {
    root: PathBuf,
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> StoreError + '_ {
    move |source| StoreError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), StoreError> {
    let bytes = serde_json::to_vec_pretty(value).expect("serializable");
    fs::write(path, bytes).map_err(io(path))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, StoreError> {
    let bytes = fs::read(path).map_err(io(path))?;
    serde_json::from_slice(&bytes).map_err(|e| StoreError::Corrupt {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// Artifact layer of a graph: artifact nodes and artifact-relation edges.
fn artifact_map(graph: &Graph, unresolved: Vec<crate::codemap::Unresolved>) -> CodeMap {
    let mut g = Graph::new();
    for n in graph
        .nodes
        .values()
        .filter(|n| matches!(n, Node::Artifact(_)))
    {
        g.insert_node(n.clone());
    }
    for (k, attrs) in graph.edges.iter().filter(|(k, _)| k.relation.is_artifact()) {
        g.edges.insert(k.clone(), attrs.clone());
    }
    CodeMap {
        graph: g,
        unresolved,
    }
}

impl TwinStore {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, StoreError> {
        let root = root.into();
        fs::create_dir_all(root.join("snapshots")).map_err(io(&root))?;
        let store = TwinStore { root };
        if !store.index_path().exists() {
            store.write_index(&StoreIndex::default())?;
        }
        Ok(store)
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn index_path(&self) -> PathBuf {
        self.root.join("index.json")
    }

    fn write_index(&self, index: &StoreIndex) -> Result<(), StoreError> {
        let tmp = self.root.join("index.json.tmp");
        write_json(&tmp, index)?;
        fs::rename(&tmp, self.index_path()).map_err(io(&self.root))
    }

    pub fn index(&self) -> Result<StoreIndex, StoreError> {
        read_json(&self.index_path())
    }

    /// Revisions in history order.
    pub fn revisions(&self) -> Result<Vec<String>, StoreError> {
        Ok(self
            .index()?
            .snapshots
            .into_iter()
            .map(|e| e.revision)
            .collect())
    }

    /// Writes `snapshot`, appends it to the index and returns its id.
    /// Committing the same snapshot twice is a no-op.
    pub fn commit(&mut self, snapshot: &TwinSnapshot) -> Result<String, StoreError> {
        let report = snapshot.validate();
        if !report.is_clean() {
            return Err(StoreError::Invalid(report));
        }
        let digest = digest(&String::from_utf8_lossy(&snapshot.canonical_bytes()));
        let id = format!("{}-{}", snapshot.revision, &digest[..8]);
        let mut index = self.index()?;
        if index.snapshots.iter().any(|e| e.id == id) {
            return Ok(id);
        }
        let dir = self.root.join("snapshots").join(&id);
        let tmp = self.root.join("snapshots").join(format!(".{id}.tmp"));
        if tmp.exists() {
            fs::remove_dir_all(&tmp).map_err(io(&tmp))?;
        }
        fs::create_dir_all(&tmp).map_err(io(&tmp))?;
        fs::write(
            tmp.join("graph.txt"),
            canonical_bytes_unchecked(&snapshot.graph),
        )
        .map_err(io(&tmp))?;
        write_json(&tmp.join("anchors.json"), &snapshot.anchors)?;
        write_json(&tmp.join("unresolved.json"), &snapshot.unresolved)?;
        write_json(&tmp.join("evidence.json"), &snapshot.evidence)?;
        let cards: Vec<&KnowledgeCard> = snapshot.cards.values().collect();
        write_json(&tmp.join("cards.json"), &cards)?;
        write_json(&tmp.join("sources.json"), &snapshot.sources)?;
        write_json(&tmp.join("overlay.json"), &snapshot.overlay)?;
        let meta = Meta {
            format: STORE_FORMAT.into(),
            revision: snapshot.revision.clone(),
            digest: digest.clone(),
        };
        write_json(&tmp.join("meta.json"), &meta)?;
        if dir.exists() {
            fs::remove_dir_all(&dir).map_err(io(&dir))?;
        }
        fs::rename(&tmp, &dir).map_err(io(&dir))?;
        index.snapshots.push(IndexEntry {
            id: id.clone(),
            revision: snapshot.revision.clone(),
            digest,
        });
        self.write_index(&index)?;
        Ok(id)
    }

    /// Resolves a snapshot id or a revision (latest snapshot of that
    /// revision); `None` means the latest snapshot.
    pub fn resolve(&self, key: Option<&str>) -> Result<IndexEntry, StoreError> {
        let index = self.index()?;
        match key {
            None => index.snapshots.last().cloned().ok_or(StoreError::Empty),
            Some(k) => index
                .snapshots
                .iter()
                .rev()
                .find(|e| e.id == k || e.revision == k)
                .cloned()
                .ok_or_else(|| StoreError::UnknownId(k.to_string())),
        }
    }

    pub fn load(&self, key: Option<&str>, config: &TwinConfig) -> Result<TwinSnapshot, StoreError> {
        let entry = self.resolve(key)?;
        let dir = self.root.join("snapshots").join(&entry.id);
        let graph_path = dir.join("graph.txt");
        let bytes = fs::read(&graph_path).map_err(io(&graph_path))?;
        let graph = parse_canonical(&bytes).map_err(|e: CanonicalError| StoreError::Corrupt {
            path: graph_path.clone(),
            reason: e.to_string(),
        })?;
        let cards: Vec<KnowledgeCard> = read_json(&dir.join("cards.json"))?;
        let unresolved = read_json(&dir.join("unresolved.json"))?;
        let sources: super::snapshot::Sources = read_json(&dir.join("sources.json"))?;
        let map = artifact_map(&graph, unresolved);
        let drafts = UnitInputs {
            map: &map,
            tree: &sources.tree,
            records: &sources.records,
            issues: &sources.issues,
            lexicon: &config.lexicon,
        }
        .compute_all();
        Ok(TwinSnapshot {
            revision: entry.revision,
            unresolved: map.unresolved.clone(),
            anchors: read_json(&dir.join("anchors.json"))?,
            evidence: read_json(&dir.join("evidence.json"))?,
            cards: cards.into_iter().map(|c| (c.subject.clone(), c)).collect(),
            overlay: read_json(&dir.join("overlay.json"))?,
            graph,
            sources,
            map,
            drafts,
        })
    }

    /// Directory for curation state that lives beside the snapshots.
    pub fn curation_dir(&self) -> PathBuf {
        self.root.join("curation")
    }
}
