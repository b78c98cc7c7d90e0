// SPDX-License-Identifier: Apache-2.0

//! Stage 1: building the code-and-artifact map from a fact stream, resolving
//! symbolic references, and diffing maps by content hash.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::facts::{locator_path, CodeFact, DeclKind, Declaration};
use crate::model::{
    signature_allows, ArtifactKind, ArtifactNode, Graph, Node, NodeId, NodeKind, Relation,
    TypedEdge, Visibility,
};
use crate::text::digest;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Unresolved {
    pub source: NodeId,
    pub relation: Relation,
    pub symbol: String,
    /// `true` once resolution found more than one candidate.
    pub ambiguous: bool,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CodeMap {
    pub graph: Graph,
    pub unresolved: Vec<Unresolved>,
}

impl CodeMap {
    pub fn artifact(&self, id: &NodeId) -> Option<&ArtifactNode> {
        self.graph.node(id).and_then(Node::as_artifact)
    }

    /// File-level node plus every member declared under `path`.
    pub fn nodes_under(&self, path: &str) -> Vec<NodeId> {
        self.graph
            .artifacts()
            .filter(|a| a.path == path)
            .map(|a| a.id.clone())
            .collect()
    }

    pub fn paths(&self) -> BTreeSet<String> {
        self.graph.artifacts().map(|a| a.path.clone()).collect()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum IngestError {
    #[error("conflicting declarations for {kind:?} `{name}` in {path}")]
    ConflictingDeclaration {
        path: String,
        name: String,
        kind: DeclKind,
    },
    #[error("node id {0} declared with two different kinds")]
    IdCollision(NodeId),
    #[error("edge fact #{index}: source `{locator}` does not name a declared artifact")]
    UnknownSource { index: usize, locator: String },
    #[error("edge fact #{index}: {relation} not allowed from {source_kind} to {target_kind}")]
    Signature {
        index: usize,
        relation: Relation,
        source_kind: NodeKind,
        target_kind: NodeKind,
    },
}

fn declaration_id(d: &Declaration) -> NodeId {
    if d.kind.is_member() {
        NodeId::artifact(&d.path, Some(&d.name))
    } else {
        NodeId::artifact(&d.path, None)
    }
}

fn content_hash(d: &Declaration) -> String {
    d.digest.clone().unwrap_or_else(|| {
        let mut bare = d.clone();
        bare.digest = None;
        digest(&CodeFact::Declares(bare).to_string())
    })
}

fn parent_dir(path: &str) -> &str {
    path.rsplit_once('/').map(|(d, _)| d).unwrap_or("")
}

/// Folds a fact stream into a code map. Edge facts whose target locator does
/// not name a declared artifact land in `unresolved`.
pub fn ingest_facts(facts: &[CodeFact]) -> Result<CodeMap, IngestError> {
    let mut decls: BTreeMap<(String, String, DeclKind), Declaration> = BTreeMap::new();
    for fact in facts {
        if let CodeFact::Declares(d) = fact {
            let key = (d.path.clone(), d.name.clone(), d.kind);
            match decls.get(&key) {
                Some(prev) if prev != d => {
                    return Err(IngestError::ConflictingDeclaration {
                        path: d.path.clone(),
                        name: d.name.clone(),
                        kind: d.kind,
                    })
                }
                Some(_) => {}
                None => {
                    decls.insert(key, d.clone());
                }
            }
        }
    }

    let mut graph = Graph::new();
    let mut member_hashes: BTreeMap<String, Vec<String>> = BTreeMap::new();
    for d in decls.values() {
        let id = declaration_id(d);
        let kind = d.kind.artifact_kind(&d.path);
        if let Some(existing) = graph.node(&id) {
            if existing.kind() != NodeKind::Artifact(kind) {
                return Err(IngestError::IdCollision(id));
            }
        }
        let hash = content_hash(d);
        if d.kind.is_member() {
            member_hashes
                .entry(d.path.clone())
                .or_default()
                .push(hash.clone());
        }
        graph.insert_node(Node::Artifact(ArtifactNode {
            id,
            kind,
            name: if d.kind.is_member() {
                d.name.clone()
            } else {
                d.path.clone()
            },
            path: d.path.clone(),
            span: if kind.has_span() { d.span } else { None },
            visibility: d.visibility,
            content_hash: hash,
        }));
    }

    // members whose file was never declared get a synthesized file node
    for (path, hashes) in &member_hashes {
        let file_id = NodeId::artifact(path, None);
        if !graph.contains(&file_id) {
            graph.insert_node(Node::Artifact(ArtifactNode {
                id: file_id,
                kind: DeclKind::File.artifact_kind(path),
                name: path.clone(),
                path: path.clone(),
                span: None,
                visibility: Visibility::Public,
                content_hash: digest(&hashes.join(",")),
            }));
        }
    }

    let mut contains = Vec::new();
    let modules: BTreeSet<String> = graph
        .artifacts()
        .filter(|a| a.kind == ArtifactKind::Module)
        .map(|a| a.path.clone())
        .collect();
    for a in graph.artifacts() {
        if a.kind.has_span() {
            contains.push(TypedEdge::new(
                NodeId::artifact(&a.path, None),
                Relation::Contains,
                a.id.clone(),
            ));
        } else if a.kind != ArtifactKind::BuildArtifact
            && modules.contains(parent_dir(&a.path))
            && !parent_dir(&a.path).is_empty()
        {
            contains.push(TypedEdge::new(
                NodeId::artifact(parent_dir(&a.path), None),
                Relation::Contains,
                a.id.clone(),
            ));
        }
    }
    for e in contains {
        graph.insert_edge(e);
    }

    let mut unresolved = BTreeSet::new();
    for (index, fact) in facts.iter().enumerate() {
        let CodeFact::Edge(e) = fact else { continue };
        let source = NodeId::artifact_locator_id(&e.source);
        let Some(src_node) = graph.node(&source) else {
            return Err(IngestError::UnknownSource {
                index,
                locator: e.source.clone(),
            });
        };
        let src_kind = src_node.kind();
        let target = NodeId::artifact_locator_id(&e.target);
        match graph.node(&target) {
            Some(t) => {
                if !signature_allows(e.relation, src_kind, t.kind()) {
                    return Err(IngestError::Signature {
                        index,
                        relation: e.relation,
                        source_kind: src_kind,
                        target_kind: t.kind(),
                    });
                }
                graph.insert_edge(TypedEdge::new(source, e.relation, target));
            }
            None => {
                let symbol = e
                    .target
                    .rsplit_once('#')
                    .map(|(_, n)| n)
                    .unwrap_or(&e.target);
                unresolved.insert(Unresolved {
                    source,
                    relation: e.relation,
                    symbol: symbol.to_string(),
                    ambiguous: false,
                });
            }
        }
    }
    Ok(CodeMap {
        graph,
        unresolved: unresolved.into_iter().collect(),
    })
}

impl NodeId {
    /// Artifact id for a `path` or `path#name` locator.
    pub fn artifact_locator_id(locator: &str) -> NodeId {
        NodeId::from_raw(format!("a:{locator}"))
    }
}

/// Resolves symbolic references: same file, then same directory, then a
/// unique global match. More than one candidate at the first non-empty tier
/// marks the reference ambiguous.
pub fn resolve_references(map: &CodeMap) -> CodeMap {
    let mut out = map.clone();
    let mut by_name: BTreeMap<&str, Vec<&ArtifactNode>> = BTreeMap::new();
    for a in map.graph.artifacts() {
        if a.kind.has_span() {
            by_name.entry(a.name.as_str()).or_default().push(a);
        } else {
            by_name.entry(a.path.as_str()).or_default().push(a);
        }
    }
    let mut remaining = Vec::new();
    for u in &map.unresolved {
        let Some(src) = map.graph.node(&u.source) else {
            remaining.push(u.clone());
            continue;
        };
        let src_path = locator_path(u.source.artifact_locator().unwrap_or("")).to_string();
        let candidates: Vec<&ArtifactNode> = by_name
            .get(u.symbol.as_str())
            .map(|v| {
                v.iter()
                    .copied()
                    .filter(|c| {
                        signature_allows(u.relation, src.kind(), NodeKind::Artifact(c.kind))
                    })
                    .collect()
            })
            .unwrap_or_default();
        let tiers: [Box<dyn Fn(&ArtifactNode) -> bool>; 3] = [
            Box::new(|c: &ArtifactNode| c.path == src_path),
            Box::new(|c: &ArtifactNode| parent_dir(&c.path) == parent_dir(&src_path)),
            Box::new(|_: &ArtifactNode| true),
        ];
        let mut outcome = None;
        for tier in &tiers {
            let hits: Vec<&ArtifactNode> = candidates.iter().copied().filter(|c| tier(c)).collect();
            match hits.len() {
                0 => continue,
                1 => outcome = Some(Ok(hits[0].id.clone())),
                _ => outcome = Some(Err(())),
            }
            break;
        }
        match outcome {
            Some(Ok(target)) => {
                out.graph.insert_edge(
                    TypedEdge::new(u.source.clone(), u.relation, target)
                        .with_attr("resolution", "resolved"),
                );
            }
            Some(Err(())) => remaining.push(Unresolved {
                ambiguous: true,
                ..u.clone()
            }),
            None => remaining.push(u.clone()),
        }
    }
    out.unresolved = remaining;
    out
}

/// Added, removed and modified artifact ids between two maps.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChangedSet {
    pub added: BTreeSet<NodeId>,
    pub removed: BTreeSet<NodeId>,
    pub modified: BTreeSet<NodeId>,
}

impl ChangedSet {
    pub fn is_empty(&self) -> bool {
        self.added.is_empty() && self.removed.is_empty() && self.modified.is_empty()
    }

    pub fn all(&self) -> BTreeSet<NodeId> {
        self.added
            .iter()
            .chain(&self.removed)
            .chain(&self.modified)
            .cloned()
            .collect()
    }
}

pub fn diff_maps(old: &CodeMap, new: &CodeMap) -> ChangedSet {
    let mut changes = ChangedSet::default();
    for a in new.graph.artifacts() {
        match old.artifact(&a.id) {
            None => {
                changes.added.insert(a.id.clone());
            }
            Some(prev) if prev.content_hash != a.content_hash => {
                changes.modified.insert(a.id.clone());
            }
            Some(_) => {}
        }
    }
    for a in old.graph.artifacts() {
        if new.artifact(&a.id).is_none() {
            changes.removed.insert(a.id.clone());
        }
    }
    changes
}
