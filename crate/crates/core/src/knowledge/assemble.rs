// SPDX-License-Identifier: Apache-2.0

//! Global assembly of unit drafts into knowledge and history nodes and
//! their edges. Cheap and deterministic; it runs in full on every snapshot.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::evidence::{EvidenceFragment, EvidenceStore, SourceKind};
use super::units::{ClaimDraft, DraftCache, FunctionalityDraft, Grounding};
use crate::codemap::CodeMap;
use crate::history::{AnchorKind, AnchorTarget, ChangeRecord, IssueRecord, TraceAnchor};
use crate::model::{
    ArtifactKind, HistoryKind, HistoryNode, KnowledgeKind, KnowledgeNode, KnowledgeStatus, Node,
    NodeId, Relation, TypedEdge, Visibility,
};
use crate::text::normalized_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AssemblyConfig {
    pub prior_confidence: f64,
    /// Overlap coefficient at which two constraint statements merge.
    pub merge_threshold: f64,
}

impl Default for AssemblyConfig {
    fn default() -> Self {
        AssemblyConfig {
            prior_confidence: 0.5,
            merge_threshold: 0.6,
        }
    }
}

/// Knowledge and history nodes plus every edge touching them.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct UpperLayers {
    pub nodes: Vec<Node>,
    pub edges: Vec<TypedEdge>,
    pub evidence: EvidenceStore,
}

#[derive(Debug, Clone, Copy)]
pub struct AssemblyInput<'a> {
    pub map: &'a CodeMap,
    pub records: &'a [ChangeRecord],
    pub issues: &'a [IssueRecord],
    pub anchors: &'a [TraceAnchor],
    pub drafts: &'a DraftCache,
    pub config: AssemblyConfig,
}

pub fn similar(a: &ClaimDraft, b: &ClaimDraft, threshold: f64) -> bool {
    if a.slug == b.slug {
        return true;
    }
    let shared = a.tokens.intersection(&b.tokens).count();
    let smaller = a.tokens.len().min(b.tokens.len());
    shared >= 2 && smaller > 0 && shared as f64 / smaller as f64 >= threshold
}

fn grounding_rank(g: &Grounding) -> u8 {
    match g {
        Grounding::Concept(_) => 0,
        Grounding::Commit(_) => 1,
        Grounding::Issue(_) => 2,
    }
}

/// Representative draft: documentation first, then commits, then issues.
fn representative<'a>(drafts: &[&'a ClaimDraft]) -> &'a ClaimDraft {
    drafts
        .iter()
        .min_by(|a, b| {
            grounding_rank(&a.grounding)
                .cmp(&grounding_rank(&b.grounding))
                .then(a.evidence.id.cmp(&b.evidence.id))
        })
        .copied()
        .expect("non-empty group")
}

fn summary_of(drafts: &[&ClaimDraft], title: &str) -> String {
    let mut others: Vec<&str> = drafts
        .iter()
        .map(|d| d.title.as_str())
        .filter(|t| *t != title)
        .collect();
    others.sort();
    others.dedup();
    if !others.is_empty() {
        return others.join(" / ");
    }
    let mut origins: Vec<String> = drafts
        .iter()
        .map(|d| match &d.grounding {
            Grounding::Concept(slug) => format!("concept {slug}"),
            Grounding::Commit(rev) => format!("commit {rev}"),
            Grounding::Issue(key) => format!("issue {key}"),
        })
        .collect();
    origins.sort();
    origins.dedup();
    format!("stated in {}", origins.join(", "))
}

/// Groups constraint drafts into clusters; each cluster is named by its
/// smallest slug.
pub fn cluster_constraints<'a>(
    drafts: &[&'a ClaimDraft],
    threshold: f64,
) -> BTreeMap<String, Vec<&'a ClaimDraft>> {
    let n = drafts.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for i in 0..n {
        for j in i + 1..n {
            if similar(drafts[i], drafts[j], threshold) {
                let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<&ClaimDraft>> = BTreeMap::new();
    for (i, d) in drafts.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(d);
    }
    groups
        .into_values()
        .map(|g| {
            (
                g.iter().map(|d| d.slug.clone()).min().expect("non-empty"),
                g,
            )
        })
        .collect()
}

struct Builder<'a> {
    input: AssemblyInput<'a>,
    nodes: BTreeMap<NodeId, Node>,
    edges: BTreeMap<(NodeId, Relation, NodeId), TypedEdge>,
    evidence: EvidenceStore,
    node_evidence: BTreeMap<NodeId, BTreeSet<String>>,
}

impl Builder<'_> {
    fn knowledge(&mut self, kind: KnowledgeKind, slug: &str, title: &str, summary: &str) -> NodeId {
        let id = NodeId::knowledge(kind, slug);
        self.nodes.insert(
            id.clone(),
            Node::Knowledge(KnowledgeNode {
                id: id.clone(),
                kind,
                title: title.to_string(),
                summary: summary.to_string(),
                status: KnowledgeStatus::Extracted,
                confidence: self.input.config.prior_confidence,
            }),
        );
        id
    }

    fn edge(&mut self, edge: TypedEdge) {
        self.edges.insert(
            (edge.source.clone(), edge.relation, edge.target.clone()),
            edge,
        );
    }

    fn cite(&mut self, subject: &NodeId, e: &EvidenceFragment) {
        self.evidence.insert(e.id.clone(), e.clone());
        self.node_evidence
            .entry(subject.clone())
            .or_default()
            .insert(e.id.clone());
    }

    fn exists(&self, id: &NodeId) -> bool {
        self.input.map.graph.contains(id)
    }

    /// Artifacts introduced or modified by `revision` that still exist.
    fn changed_by(&self, revision: &str) -> BTreeSet<NodeId> {
        self.input
            .anchors
            .iter()
            .filter(|a| {
                a.revision == revision
                    && matches!(a.kind, AnchorKind::IntroducedIn | AnchorKind::ModifiedIn)
            })
            .map(|a| a.subject.clone())
            .filter(|id| self.exists(id))
            .collect()
    }

    fn grounding_targets(&self, g: &Grounding) -> BTreeSet<NodeId> {
        match g {
            Grounding::Concept(slug) => {
                let id = NodeId::knowledge(KnowledgeKind::Concept, slug);
                if self.nodes.contains_key(&id) {
                    [id].into()
                } else {
                    BTreeSet::new()
                }
            }
            Grounding::Commit(rev) => self.changed_by(rev),
            Grounding::Issue(key) => {
                let mut revs: BTreeSet<&str> = self
                    .input
                    .records
                    .iter()
                    .filter(|r| r.issue_refs.contains(key))
                    .map(|r| r.revision.as_str())
                    .collect();
                if let Some(issue) = self.input.issues.iter().find(|i| &i.key == key) {
                    revs.extend(issue.revisions.iter().map(String::as_str));
                }
                revs.into_iter().flat_map(|r| self.changed_by(r)).collect()
            }
        }
    }

    fn concepts(&mut self) {
        let mut by_slug: BTreeMap<String, Vec<_>> = BTreeMap::new();
        for d in self.input.drafts.values().flat_map(|d| &d.concepts) {
            by_slug.entry(d.slug.clone()).or_default().push(d);
        }
        for (slug, mut group) in by_slug {
            group.sort_by(|a, b| a.evidence.id.cmp(&b.evidence.id));
            let id = self.knowledge(
                KnowledgeKind::Concept,
                &slug,
                &group[0].title,
                &group[0].summary,
            );
            for d in group {
                self.cite(&id, &d.evidence);
            }
        }
    }

    fn claims(&mut self, kind: KnowledgeKind, groups: BTreeMap<String, Vec<&ClaimDraft>>) {
        let (relation, polarity) = match kind {
            KnowledgeKind::Constraint => (Relation::ConstrainedBy, "forbids"),
            _ => (Relation::JustifiedBy, "supports"),
        };
        for (slug, group) in groups {
            let rep = representative(&group);
            let id = self.knowledge(kind, &slug, &rep.title, &summary_of(&group, &rep.title));
            for d in &group {
                self.cite(&id, &d.evidence);
                for target in self.grounding_targets(&d.grounding) {
                    self.edge(
                        TypedEdge::new(id.clone(), relation, target)
                            .with_attr("polarity", polarity),
                    );
                }
            }
        }
    }

    fn functionalities(&mut self) {
        let mut by_token: BTreeMap<&str, Vec<&FunctionalityDraft>> = BTreeMap::new();
        for d in self.input.drafts.values().flat_map(|d| &d.functionalities) {
            by_token.entry(d.token.as_str()).or_default().push(d);
        }
        for (token, mut group) in by_token {
            group.sort_by(|a, b| a.members.cmp(&b.members));
            for (n, d) in group.into_iter().enumerate() {
                let slug = if n == 0 {
                    token.to_string()
                } else {
                    format!("{token}-{}", n + 1)
                };
                self.functionality(&slug, d);
            }
        }
    }

    fn functionality(&mut self, slug: &str, d: &FunctionalityDraft) {
        let map = self.input.map;
        let names: Vec<&str> = d
            .members
            .iter()
            .filter_map(|m| map.artifact(m))
            .map(|a| a.name.as_str())
            .collect();
        let files: BTreeSet<NodeId> = d
            .members
            .iter()
            .filter_map(|m| map.artifact(m))
            .map(|a| NodeId::artifact(&a.path, None))
            .filter(|f| self.exists(f))
            .collect();
        let file_list: Vec<&str> = files.iter().filter_map(|f| f.artifact_locator()).collect();
        let f = self.knowledge(
            KnowledgeKind::Functionality,
            slug,
            slug,
            &format!(
                "{} public function(s) across {}",
                names.len(),
                file_list.join(", ")
            ),
        );
        let r = self.knowledge(
            KnowledgeKind::Responsibility,
            slug,
            &format!("{slug} responsibility"),
            &format!("owned by {}", file_list.join(", ")),
        );
        self.cite(&f, &d.evidence);
        self.cite(&r, &d.evidence);
        self.edge(TypedEdge::new(
            f.clone(),
            Relation::HasResponsibility,
            r.clone(),
        ));
        for file in files {
            self.edge(TypedEdge::new(
                r.clone(),
                Relation::AssignedTo,
                file.clone(),
            ));
            self.edge(TypedEdge::new(file, Relation::Owns, r.clone()));
        }
        for m in &d.members {
            self.edge(TypedEdge::new(m.clone(), Relation::Implements, f.clone()));
            let configs: Vec<NodeId> = map
                .graph
                .incident(m)
                .filter(|(k, _)| &k.source == m && k.relation == Relation::ConfiguredBy)
                .map(|(k, _)| k.target.clone())
                .filter(|t| {
                    map.artifact(t)
                        .is_some_and(|a| a.kind == ArtifactKind::ConfigEntry)
                })
                .collect();
            for c in configs {
                self.edge(TypedEdge::new(f.clone(), Relation::GDependsOn, c));
            }
        }
    }

    fn reflection(&mut self) {
        let concepts: Vec<(NodeId, BTreeSet<String>)> = self
            .nodes
            .values()
            .filter_map(Node::as_knowledge)
            .filter(|k| k.kind == KnowledgeKind::Concept)
            .map(|k| (k.id.clone(), normalized_tokens(&k.title)))
            .collect();
        let functions: Vec<(NodeId, BTreeSet<String>)> = self
            .nodes
            .values()
            .filter_map(Node::as_knowledge)
            .filter(|k| k.kind == KnowledgeKind::Functionality)
            .map(|k| (k.id.clone(), normalized_tokens(&k.title)))
            .collect();
        for (c, ct) in &concepts {
            for (f, ft) in &functions {
                if !ct.is_disjoint(ft) {
                    self.edge(TypedEdge::new(
                        c.clone(),
                        Relation::OperationalizedBy,
                        f.clone(),
                    ));
                }
            }
        }
    }

    /// Functionality-level structure derived from edges already in place.
    /// `requires` links a functionality to a concept when one constraint
    /// binds both the concept and a member. `uses` links it to a concept
    /// whose defining document a member or owning file depends on or reads.
    /// `f-depends-on` follows file imports between owning files.
    /// `decomposes-to` follows calls that reach another functionality only
    /// through private helpers.
    fn structure(&mut self) {
        let map = self.input.map;
        let mut members: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        let mut owner: BTreeMap<NodeId, NodeId> = BTreeMap::new();
        for (s, _, t) in self.edges.keys().filter(|k| k.1 == Relation::Implements) {
            members.entry(t.clone()).or_default().insert(s.clone());
            owner.insert(s.clone(), t.clone());
        }
        let file_of = |m: &NodeId| map.artifact(m).map(|a| NodeId::artifact(&a.path, None));
        let mut found: BTreeSet<(NodeId, Relation, NodeId)> = BTreeSet::new();

        let is_concept = |t: &NodeId| {
            self.nodes
                .get(t)
                .and_then(Node::as_knowledge)
                .is_some_and(|k| k.kind == KnowledgeKind::Concept)
        };
        let mut constrained: BTreeMap<&NodeId, BTreeSet<&NodeId>> = BTreeMap::new();
        for (s, _, t) in self.edges.keys().filter(|k| k.1 == Relation::ConstrainedBy) {
            constrained.entry(s).or_default().insert(t);
        }
        for targets in constrained.values() {
            for c in targets.iter().filter(|t| is_concept(t)) {
                for f in targets.iter().filter_map(|t| owner.get(*t)) {
                    found.insert((f.clone(), Relation::Requires, (*c).clone()));
                }
            }
        }

        let mut defined_in: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (subject, ids) in self.node_evidence.iter().filter(|(id, _)| is_concept(id)) {
            for e in ids.iter().map(|e| &self.evidence[e]) {
                if e.source_kind == SourceKind::Document {
                    defined_in
                        .entry(NodeId::artifact(&e.source_key, None))
                        .or_default()
                        .insert(subject.clone());
                }
            }
        }
        for key in map
            .graph
            .edges
            .keys()
            .filter(|k| matches!(k.relation, Relation::DependsOn | Relation::ReadsWrites))
        {
            let Some(concepts) = defined_in.get(&key.target) else {
                continue;
            };
            let users: BTreeSet<&NodeId> = match owner.get(&key.source) {
                Some(f) => [f].into(),
                None => owner
                    .iter()
                    .filter(|(m, _)| file_of(m).as_ref() == Some(&key.source))
                    .map(|(_, f)| f)
                    .collect(),
            };
            for f in users {
                for c in concepts {
                    found.insert((f.clone(), Relation::Uses, c.clone()));
                }
            }
        }

        let mut by_file: BTreeMap<NodeId, BTreeSet<NodeId>> = BTreeMap::new();
        for (m, f) in &owner {
            if let Some(file) = file_of(m) {
                by_file.entry(file).or_default().insert(f.clone());
            }
        }
        for key in map
            .graph
            .edges
            .keys()
            .filter(|k| k.relation == Relation::Imports)
        {
            let (Some(from), Some(to)) = (by_file.get(&key.source), by_file.get(&key.target))
            else {
                continue;
            };
            for f in from {
                for g in to.iter().filter(|g| *g != f) {
                    found.insert((f.clone(), Relation::FDependsOn, g.clone()));
                }
            }
        }

        let mut calls: BTreeMap<&NodeId, Vec<&NodeId>> = BTreeMap::new();
        for key in map
            .graph
            .edges
            .keys()
            .filter(|k| k.relation == Relation::Calls)
        {
            calls.entry(&key.source).or_default().push(&key.target);
        }
        let private = |id: &NodeId| {
            map.artifact(id)
                .is_some_and(|a| a.visibility != Visibility::Public)
        };
        for (f, ms) in &members {
            let mut seen: BTreeSet<&NodeId> = BTreeSet::new();
            let mut stack: Vec<&NodeId> = ms
                .iter()
                .flat_map(|m| calls.get(m).into_iter().flatten().copied())
                .collect();
            while let Some(id) = stack.pop() {
                if !seen.insert(id) {
                    continue;
                }
                if let Some(g) = owner.get(id) {
                    if g != f {
                        found.insert((f.clone(), Relation::DecomposesTo, g.clone()));
                    }
                } else if private(id) {
                    stack.extend(calls.get(id).into_iter().flatten().copied());
                }
            }
        }

        for (s, r, t) in found {
            self.edge(TypedEdge::new(s, r, t));
        }
    }

    /// Trace edges plus the history nodes they point at. Revisions and
    /// issues nobody anchors to are left out of the graph.
    fn history(&mut self) {
        let revisions: BTreeSet<&str> = self
            .input
            .records
            .iter()
            .map(|r| r.revision.as_str())
            .collect();
        let issues: BTreeSet<&str> = self.input.issues.iter().map(|i| i.key.as_str()).collect();
        let mut trace: Vec<(NodeId, NodeId, Option<&str>, HistoryNode)> = Vec::new();
        let revision = |r: &str| HistoryNode {
            id: NodeId::revision(r),
            kind: HistoryKind::Revision,
            key: r.to_string(),
        };
        let issue = |k: &str| HistoryNode {
            id: NodeId::issue(k),
            kind: HistoryKind::Issue,
            key: k.to_string(),
        };
        for (subject, ids) in &self.node_evidence {
            for e in ids {
                let fragment = &self.evidence[e];
                let ev = HistoryNode {
                    id: NodeId::evidence(e),
                    kind: HistoryKind::Evidence,
                    key: e.clone(),
                };
                trace.push((subject.clone(), ev.id.clone(), None, ev));
                if revisions.contains(fragment.revision.as_str()) {
                    let h = revision(&fragment.revision);
                    trace.push((subject.clone(), h.id.clone(), None, h));
                }
                if fragment.source_kind == SourceKind::Issue
                    && issues.contains(fragment.source_key.as_str())
                {
                    let h = issue(&fragment.source_key);
                    trace.push((subject.clone(), h.id.clone(), None, h));
                }
            }
        }
        for a in self
            .input
            .anchors
            .iter()
            .filter(|a| self.exists(&a.subject))
        {
            let h = match &a.target {
                AnchorTarget::Revision(r) if revisions.contains(r.as_str()) => revision(r),
                AnchorTarget::Issue(k) if issues.contains(k.as_str()) => issue(k),
                _ => continue,
            };
            trace.push((a.subject.clone(), h.id.clone(), Some(a.kind.as_str()), h));
        }
        for (subject, target, anchor, node) in trace {
            let relation = if node.kind == HistoryKind::Evidence {
                Relation::EvidencedBy
            } else {
                Relation::AnchoredTo
            };
            let edge = TypedEdge::new(subject, relation, target);
            self.edge(match anchor {
                Some(kind) => edge.with_attr("anchor", kind),
                None => edge,
            });
            self.nodes.insert(node.id.clone(), Node::History(node));
        }
    }
}

/// Builds the knowledge and history layers from cached drafts.
pub fn assemble(input: AssemblyInput<'_>) -> UpperLayers {
    let mut b = Builder {
        input,
        nodes: BTreeMap::new(),
        edges: BTreeMap::new(),
        evidence: EvidenceStore::new(),
        node_evidence: BTreeMap::new(),
    };
    b.concepts();
    let constraints: Vec<&ClaimDraft> =
        input.drafts.values().flat_map(|d| &d.constraints).collect();
    b.claims(
        KnowledgeKind::Constraint,
        cluster_constraints(&constraints, input.config.merge_threshold),
    );
    let mut rationales: BTreeMap<String, Vec<&ClaimDraft>> = BTreeMap::new();
    for d in input.drafts.values().flat_map(|d| &d.rationales) {
        rationales.entry(d.slug.clone()).or_default().push(d);
    }
    b.claims(KnowledgeKind::Rationale, rationales);
    b.functionalities();
    b.reflection();
    b.structure();
    b.history();
    UpperLayers {
        nodes: b.nodes.into_values().collect(),
        edges: b.edges.into_values().collect(),
        evidence: b.evidence,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::knowledge::units::ClaimDraft;

    fn claim(slug: &str, tokens: &[&str]) -> ClaimDraft {
        ClaimDraft {
            slug: slug.into(),
            title: slug.into(),
            tokens: tokens.iter().map(|t| t.to_string()).collect(),
            grounding: Grounding::Commit("c1".into()),
            evidence: EvidenceFragment::new(
                SourceKind::CommitMessage,
                "c1",
                slug,
                0,
                slug.chars().count(),
                "c1",
            ),
        }
    }

    #[test]
    fn restatements_merge_under_smallest_slug() {
        let a = claim(
            "reach-mainframe-order",
            &["request", "reach", "mainframe", "order"],
        );
        let b = claim(
            "ordered-requests",
            &["add", "sync", "lock", "mainframe", "order", "request"],
        );
        let c = claim("retry-budget", &["retry", "budget"]);
        let groups = cluster_constraints(&[&a, &b, &c], 0.6);
        let keys: Vec<&str> = groups.keys().map(String::as_str).collect();
        assert_eq!(keys, vec!["ordered-requests", "retry-budget"]);
        assert_eq!(groups["ordered-requests"].len(), 2);
    }

    #[test]
    fn single_shared_token_does_not_merge() {
        let a = claim("x", &["order"]);
        let b = claim("y", &["order", "cache"]);
        assert!(!similar(&a, &b, 0.6));
    }
}
