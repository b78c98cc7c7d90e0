// SPDX-License-Identifier: Apache-2.0

//! Snapshot construction: full rebuild from a history, and incremental
//! update by one change event.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::snapshot::{FileChanges, Sources, TwinConfig, TwinSnapshot};
use crate::codemap::{
    diff_maps, ingest_facts, resolve_references, ChangedSet, CodeMap, IngestError,
};
use crate::curation::{apply_overlay, Overlay};
use crate::extractors::{extract_facts, ExtractError, SourceTree};
use crate::history::{
    extract_issue_refs, link_record, ChangeRecord, IssueRecord, LinkOutput, TraceAnchor,
};
use crate::knowledge::assemble::{assemble, AssemblyInput};
use crate::knowledge::card::refresh_cards;
use crate::knowledge::units::{DraftCache, UnitInputs, UnitKey};
use crate::model::{Graph, NodeId, Relation};
use crate::validate::ValidationReport;

#[derive(Debug, Error)]
pub enum BuildError {
    #[error("history is empty")]
    EmptyHistory,
    #[error(transparent)]
    Extract(#[from] ExtractError),
    #[error("at {revision}: {source}")]
    Ingest {
        revision: String,
        source: IngestError,
    },
    #[error("event parent {found:?} does not match the current revision {expected}")]
    ParentMismatch {
        expected: String,
        found: Option<String>,
    },
    #[error("revision {0} already exists")]
    DuplicateRevision(String),
    #[error("a commit event must change at least one path")]
    EmptyCommit,
    #[error("snapshot failed validation:\n{0}")]
    Invalid(ValidationReport),
    #[error("incremental update diverged from full rebuild at line {line}: {detail}")]
    Diverged { line: usize, detail: String },
}

/// Ordered history with the full tree at every revision.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RepoHistory {
    pub commits: Vec<(ChangeRecord, SourceTree)>,
    pub issues: Vec<IssueRecord>,
}

impl RepoHistory {
    /// Replays the stored per-revision file changes.
    pub fn from_sources(sources: &Sources) -> Self {
        let mut tree = SourceTree::new();
        let commits = sources
            .records
            .iter()
            .zip(&sources.changes)
            .map(|(r, changes)| {
                apply_changes(&mut tree, changes);
                (r.clone(), tree.clone())
            })
            .collect();
        RepoHistory {
            commits,
            issues: sources.issues.clone(),
        }
    }
}

impl RepoHistory {
    /// The first `n` commits with every issue.
    pub fn prefix(&self, n: usize) -> RepoHistory {
        RepoHistory {
            commits: self.commits[..n.min(self.commits.len())].to_vec(),
            issues: self.issues.clone(),
        }
    }

    /// Commit events turning revision `i - 1` into `i`, for every `i > 0`.
    pub fn events(&self) -> Vec<UpdateEvent> {
        self.commits
            .windows(2)
            .map(|w| UpdateEvent::commit(w[1].0.clone(), tree_changes(&w[0].1, &w[1].1)))
            .collect()
    }
}

/// One snapshot per revision: a rebuild of the first commit, then an
/// incremental update per later commit.
pub fn fold_history(
    history: &RepoHistory,
    overlay: &Overlay,
    config: &TwinConfig,
) -> Result<Vec<TwinSnapshot>, BuildError> {
    let mut out = vec![full_rebuild(&history.prefix(1), overlay, config)?];
    for event in history.events() {
        let (next, _) = incremental_update(out.last().expect("non-empty"), &event, config)?;
        out.push(next);
    }
    Ok(out)
}

fn apply_changes(tree: &mut SourceTree, changes: &FileChanges) {
    for (path, text) in changes {
        match text {
            Some(t) => {
                tree.insert(path.clone(), t.clone());
            }
            None => {
                tree.remove(path);
            }
        }
    }
}

fn tree_changes(old: &SourceTree, new: &SourceTree) -> FileChanges {
    let mut out = FileChanges::new();
    for (p, t) in new {
        if old.get(p) != Some(t) {
            out.insert(p.clone(), Some(t.clone()));
        }
    }
    for p in old.keys() {
        if !new.contains_key(p) {
            out.insert(p.clone(), None);
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Commit,
    Release,
    Manual,
}

/// One change event: a new record, its file changes, and any issue updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub kind: EventKind,
    pub record: ChangeRecord,
    /// `None` deletes the path.
    #[serde(default)]
    pub files: FileChanges,
    #[serde(default)]
    pub issues: Vec<IssueRecord>,
}

impl UpdateEvent {
    pub fn commit(record: ChangeRecord, files: FileChanges) -> Self {
        UpdateEvent {
            kind: EventKind::Commit,
            record,
            files,
            issues: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpdateReport {
    pub changed: ChangedSet,
    pub impacted: BTreeSet<NodeId>,
    pub recomputed_units: Vec<UnitKey>,
    pub regenerated_cards: Vec<NodeId>,
    pub warnings: ValidationReport,
}

pub fn build_map(
    tree: &SourceTree,
    revision: &str,
    config: &TwinConfig,
) -> Result<CodeMap, BuildError> {
    let facts = extract_facts(tree, &config.extractor)?;
    let map = ingest_facts(&facts).map_err(|source| BuildError::Ingest {
        revision: revision.to_string(),
        source,
    })?;
    Ok(resolve_references(&map))
}

fn merge_issues(issues: &mut Vec<IssueRecord>, updates: &[IssueRecord]) {
    for u in updates {
        match issues.iter_mut().find(|i| i.key == u.key) {
            Some(i) => *i = u.clone(),
            None => issues.push(u.clone()),
        }
    }
    issues.sort_by(|a, b| a.key.cmp(&b.key));
}

struct Layers {
    graph: Graph,
    evidence: crate::knowledge::evidence::EvidenceStore,
}

fn compose(
    map: &CodeMap,
    sources: &Sources,
    anchors: &[TraceAnchor],
    drafts: &DraftCache,
    overlay: &Overlay,
    config: &TwinConfig,
) -> Layers {
    let upper = assemble(AssemblyInput {
        map,
        records: &sources.records,
        issues: &sources.issues,
        anchors,
        drafts,
        config: config.assembly,
    });
    let mut graph = map.graph.clone();
    for n in upper.nodes {
        graph.insert_node(n);
    }
    for e in upper.edges {
        graph.insert_edge(e);
    }
    let mut evidence = upper.evidence;
    apply_overlay(&mut graph, &mut evidence, overlay);
    Layers { graph, evidence }
}

fn finish(snapshot: TwinSnapshot) -> Result<TwinSnapshot, BuildError> {
    let report = snapshot.validate();
    if report.is_clean() {
        Ok(snapshot)
    } else {
        Err(BuildError::Invalid(report))
    }
}

/// Builds the snapshot at the last revision of `history` from scratch.
pub fn full_rebuild(
    history: &RepoHistory,
    overlay: &Overlay,
    config: &TwinConfig,
) -> Result<TwinSnapshot, BuildError> {
    let (last, _) = history.commits.last().ok_or(BuildError::EmptyHistory)?;
    let mut issues = history.issues.clone();
    issues.sort_by(|a, b| a.key.cmp(&b.key));
    let known: BTreeSet<String> = issues.iter().map(|i| i.key.clone()).collect();
    let mut links = LinkOutput::default();
    let mut prev_map: Option<CodeMap> = None;
    let mut prev_tree = SourceTree::new();
    let mut changes = Vec::new();
    for (record, tree) in &history.commits {
        let map = build_map(tree, &record.revision, config)?;
        link_record(record, prev_map.as_ref(), &map, &known, &mut links);
        changes.push(tree_changes(&prev_tree, tree));
        prev_tree = tree.clone();
        prev_map = Some(map);
    }
    let map = prev_map.expect("non-empty history");
    let sources = Sources {
        tree: prev_tree,
        records: history.commits.iter().map(|(r, _)| r.clone()).collect(),
        changes,
        issues,
    };
    let drafts = unit_inputs(&map, &sources, config).compute_all();
    let layers = compose(&map, &sources, &links.anchors, &drafts, overlay, config);
    let (cards, _) = refresh_cards(&layers.graph, &layers.evidence, &sources.records, None);
    finish(TwinSnapshot {
        revision: last.revision.clone(),
        graph: layers.graph,
        unresolved: map.unresolved.clone(),
        anchors: links.anchors,
        evidence: layers.evidence,
        cards,
        sources,
        overlay: overlay.clone(),
        map,
        drafts,
    })
}

fn unit_inputs<'a>(
    map: &'a CodeMap,
    sources: &'a Sources,
    config: &'a TwinConfig,
) -> UnitInputs<'a> {
    UnitInputs {
        map,
        tree: &sources.tree,
        records: &sources.records,
        issues: &sources.issues,
        lexicon: &config.lexicon,
    }
}

const IMPACT_RELATIONS: [Relation; 5] = [
    Relation::Calls,
    Relation::DependsOn,
    Relation::FDependsOn,
    Relation::ConfiguredBy,
    Relation::Imports,
];

/// Changed nodes, everything declared under a touched path, endpoints of
/// added or removed artifact edges, widened by `hops` over dependency
/// relations in either direction.
pub fn impacted_region(
    old: &CodeMap,
    new: &CodeMap,
    touched: &BTreeSet<String>,
    hops: usize,
) -> BTreeSet<NodeId> {
    let mut region = diff_maps(old, new).all();
    for path in touched {
        region.extend(old.nodes_under(path));
        region.extend(new.nodes_under(path));
    }
    for key in old
        .graph
        .edges
        .keys()
        .filter(|k| !new.graph.edges.contains_key(*k))
    {
        region.extend([key.source.clone(), key.target.clone()]);
    }
    for key in new
        .graph
        .edges
        .keys()
        .filter(|k| !old.graph.edges.contains_key(*k))
    {
        region.extend([key.source.clone(), key.target.clone()]);
    }
    let mut adjacency: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
    for key in new
        .graph
        .edges
        .keys()
        .filter(|k| IMPACT_RELATIONS.contains(&k.relation))
    {
        adjacency.entry(&key.source).or_default().push(&key.target);
        adjacency.entry(&key.target).or_default().push(&key.source);
    }
    let mut queue: VecDeque<(NodeId, usize)> = region.iter().map(|id| (id.clone(), 0)).collect();
    while let Some((id, d)) = queue.pop_front() {
        if d == hops {
            continue;
        }
        for next in adjacency.get(&id).into_iter().flatten() {
            if region.insert((*next).clone()) {
                queue.push_back(((*next).clone(), d + 1));
            }
        }
    }
    region
}

/// Whether a cached unit draft is still valid after the event.
fn reusable(
    key: &UnitKey,
    map: &CodeMap,
    impacted: &BTreeSet<NodeId>,
    touched: &BTreeSet<String>,
    event: &UpdateEvent,
    issues: &[IssueRecord],
) -> bool {
    match key {
        UnitKey::Document(path) => !touched.contains(path),
        UnitKey::Record(_) => true,
        UnitKey::Issue(k) => {
            !event.issues.iter().any(|i| &i.key == k)
                && !event.record.issue_refs.contains(k)
                && !issues
                    .iter()
                    .any(|i| &i.key == k && i.revisions.contains(&event.record.revision))
        }
        UnitKey::Component(members) => members.iter().all(|m| {
            !impacted.contains(m) && map.artifact(m).is_some_and(|a| !touched.contains(&a.path))
        }),
    }
}

/// Applies one event to `prev`. Only the impacted region's extraction units
/// are recomputed; cards are regenerated only where their inputs changed.
pub fn incremental_update(
    prev: &TwinSnapshot,
    event: &UpdateEvent,
    config: &TwinConfig,
) -> Result<(TwinSnapshot, UpdateReport), BuildError> {
    if event.record.parent.as_deref() != Some(prev.revision.as_str()) {
        return Err(BuildError::ParentMismatch {
            expected: prev.revision.clone(),
            found: event.record.parent.clone(),
        });
    }
    if prev.revision_index(&event.record.revision).is_some() {
        return Err(BuildError::DuplicateRevision(event.record.revision.clone()));
    }
    let mut record = event.record.clone();
    let mut paths: BTreeSet<String> = record.changed_paths.iter().cloned().collect();
    paths.extend(event.files.keys().cloned());
    if event.kind == EventKind::Commit && paths.is_empty() {
        return Err(BuildError::EmptyCommit);
    }
    record.changed_paths = paths.iter().cloned().collect();
    record.issue_refs = extract_issue_refs(&record.message);

    let mut sources = prev.sources.clone();
    apply_changes(&mut sources.tree, &event.files);
    sources.records.push(record.clone());
    sources.changes.push(event.files.clone());
    merge_issues(&mut sources.issues, &event.issues);

    let map = build_map(&sources.tree, &record.revision, config)?;
    let known: BTreeSet<String> = sources.issues.iter().map(|i| i.key.clone()).collect();
    let mut links = LinkOutput::default();
    link_record(&record, Some(&prev.map), &map, &known, &mut links);
    let mut anchors = prev.anchors.clone();
    anchors.extend(links.anchors);

    let impacted = impacted_region(&prev.map, &map, &paths, config.impact_hops);
    let inputs = unit_inputs(&map, &sources, config);
    let mut event_for_reuse = event.clone();
    event_for_reuse.record = record.clone();
    let mut drafts = DraftCache::new();
    let mut recomputed = Vec::new();
    for key in inputs.unit_keys() {
        let cached = prev.drafts.get(&key).filter(|_| {
            reusable(
                &key,
                &prev.map,
                &impacted,
                &paths,
                &event_for_reuse,
                &sources.issues,
            )
        });
        let d = match cached {
            Some(d) => d.clone(),
            None => {
                recomputed.push(key.clone());
                inputs.compute(&key)
            }
        };
        drafts.insert(key, d);
    }

    let layers = compose(&map, &sources, &anchors, &drafts, &prev.overlay, config);
    let (cards, regenerated) = refresh_cards(
        &layers.graph,
        &layers.evidence,
        &sources.records,
        Some((&prev.graph, &prev.evidence, &prev.cards)),
    );
    let report = UpdateReport {
        changed: diff_maps(&prev.map, &map),
        impacted,
        recomputed_units: recomputed,
        regenerated_cards: regenerated,
        warnings: links.warnings,
    };
    let next = finish(TwinSnapshot {
        revision: record.revision.clone(),
        graph: layers.graph,
        unresolved: map.unresolved.clone(),
        anchors,
        evidence: layers.evidence,
        cards,
        sources,
        overlay: prev.overlay.clone(),
        map,
        drafts,
    })?;
    if config.paranoid {
        check_against_rebuild(&next, config)?;
    }
    Ok((next, report))
}

/// Rebuilds `snapshot` from its own sources and compares canonical bytes.
pub fn check_against_rebuild(
    snapshot: &TwinSnapshot,
    config: &TwinConfig,
) -> Result<(), BuildError> {
    let rebuilt = full_rebuild(
        &RepoHistory::from_sources(&snapshot.sources),
        &snapshot.overlay,
        config,
    )?;
    let (a, b) = (snapshot.canonical_bytes(), rebuilt.canonical_bytes());
    if a == b {
        return Ok(());
    }
    let (a, b) = (String::from_utf8_lossy(&a), String::from_utf8_lossy(&b));
    let (line, (x, y)) = a
        .lines()
        .zip(b.lines())
        .enumerate()
        .find(|(_, (x, y))| x != y)
        .unwrap_or((a.lines().count().min(b.lines().count()), ("<end>", "<end>")));
    Err(BuildError::Diverged {
        line: line + 1,
        detail: format!("incremental `{x}` vs rebuild `{y}`"),
    })
}

/// Same snapshot with a different overlay; used when curation commits.
pub fn reapply_overlay(
    prev: &TwinSnapshot,
    overlay: Overlay,
    config: &TwinConfig,
) -> Result<TwinSnapshot, BuildError> {
    let layers = compose(
        &prev.map,
        &prev.sources,
        &prev.anchors,
        &prev.drafts,
        &overlay,
        config,
    );
    let (cards, _) = refresh_cards(
        &layers.graph,
        &layers.evidence,
        &prev.sources.records,
        Some((&prev.graph, &prev.evidence, &prev.cards)),
    );
    finish(TwinSnapshot {
        graph: layers.graph,
        evidence: layers.evidence,
        cards,
        overlay,
        ..prev.clone()
    })
}
