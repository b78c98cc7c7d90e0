// SPDX-License-Identifier: Apache-2.0

//! Human curation: graph deltas, the overlay of accepted deltas and feedback
//! that every rebuild re-applies, confidence recalibration, and conflict
//! detection.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::knowledge::evidence::{EvidenceFragment, EvidenceSources, EvidenceStore};
use crate::model::{
    EdgeKey, Graph, HistoryKind, HistoryNode, KnowledgeKind, KnowledgeNode, KnowledgeStatus, Node,
    NodeId, Relation, TypedEdge,
};
use crate::validate::{rules, validate_link_integrity, validate_schema, ValidationReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NodeUpdate {
    pub id: NodeId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub title: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub status: Option<KnowledgeStatus>,
}

/// A change to the knowledge layer. Artifact nodes are never edited by hand.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GraphDelta {
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub add_nodes: Vec<KnowledgeNode>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub add_edges: Vec<TypedEdge>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remove_edges: Vec<EdgeKey>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub remove_nodes: Vec<NodeId>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub update_nodes: Vec<NodeUpdate>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub evidence: Vec<EvidenceFragment>,
}

impl GraphDelta {
    pub fn is_empty(&self) -> bool {
        *self == GraphDelta::default()
    }
}

/// Accepted feedback counts for one node.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Tally {
    pub accepted: u32,
    pub rejected: u32,
}

/// Curation state that survives rebuilds.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Overlay {
    pub accepted: Vec<GraphDelta>,
    pub discussions: BTreeMap<String, String>,
    pub feedback: BTreeMap<NodeId, Tally>,
}

/// Laplace-smoothed confidence after `a` accepts and `r` rejects.
pub fn recalibrate(a: u32, r: u32) -> f64 {
    (1.0 + a as f64) / (2.0 + a as f64 + r as f64)
}

/// Applies `delta` in place. Edges whose endpoints are absent after the
/// delta are skipped, so re-applying an old delta to a newer graph never
/// leaves dangling edges.
pub fn apply_delta(graph: &mut Graph, evidence: &mut EvidenceStore, delta: &GraphDelta) {
    for e in &delta.evidence {
        evidence.insert(e.id.clone(), e.clone());
        let id = NodeId::evidence(&e.id);
        graph.insert_node(Node::History(HistoryNode {
            id,
            kind: HistoryKind::Evidence,
            key: e.id.clone(),
        }));
    }
    for id in &delta.remove_nodes {
        if id.is_knowledge() {
            graph.remove_node(id);
        }
    }
    for key in &delta.remove_edges {
        graph.edges.remove(key);
    }
    for n in &delta.add_nodes {
        let mut n = n.clone();
        n.status = KnowledgeStatus::Curated;
        graph.insert_node(Node::Knowledge(n));
    }
    for u in &delta.update_nodes {
        if let Some(Node::Knowledge(k)) = graph.nodes.get_mut(&u.id) {
            if let Some(t) = &u.title {
                k.title = t.clone();
            }
            if let Some(s) = &u.summary {
                k.summary = s.clone();
            }
            k.status = u.status.unwrap_or(KnowledgeStatus::Curated);
        }
    }
    for e in &delta.add_edges {
        if graph.contains(&e.source) && graph.contains(&e.target) {
            graph.insert_edge(e.clone());
        }
    }
}

pub fn apply_feedback(graph: &mut Graph, feedback: &BTreeMap<NodeId, Tally>) {
    for (id, t) in feedback {
        if let Some(Node::Knowledge(k)) = graph.nodes.get_mut(id) {
            k.confidence = recalibrate(t.accepted, t.rejected);
        }
    }
}

pub fn apply_overlay(graph: &mut Graph, evidence: &mut EvidenceStore, overlay: &Overlay) {
    for d in &overlay.accepted {
        apply_delta(graph, evidence, d);
    }
    apply_feedback(graph, &overlay.feedback);
}

/// Dry-run validation of a delta against the current graph: endpoints must
/// exist, the result must be schema-valid, every cited fragment must match
/// its source, and every added knowledge node must cite evidence.
pub fn check_delta(
    graph: &Graph,
    evidence: &EvidenceStore,
    sources: &EvidenceSources<'_>,
    delta: &GraphDelta,
) -> ValidationReport {
    let mut report = ValidationReport::default();
    for n in &delta.add_nodes {
        if graph.contains(&n.id) {
            report.push(n.id.as_str(), "duplicate-node", "node already exists");
        }
    }
    for id in delta
        .remove_nodes
        .iter()
        .chain(delta.update_nodes.iter().map(|u| &u.id))
    {
        match graph.node(id) {
            Some(Node::Knowledge(_)) => {}
            Some(_) => report.push(
                id.as_str(),
                "not-knowledge",
                "only knowledge nodes can be curated",
            ),
            None => report.push(id.as_str(), rules::DANGLING_EDGE, "unknown node"),
        }
    }
    for key in &delta.remove_edges {
        if !graph.edges.contains_key(key) {
            report.push(key.to_string(), "unknown-edge", "edge not in graph");
        }
    }
    for e in &delta.evidence {
        if let Err(msg) = sources.verify(e) {
            report.push(&e.id, rules::EVIDENCE_MISMATCH, msg);
        }
    }
    let mut g = graph.clone();
    let mut ev = evidence.clone();
    apply_delta(&mut g, &mut ev, delta);
    // re-insert skipped edges so integrity validation reports them
    let mut with_edges = g;
    for e in &delta.add_edges {
        with_edges.insert_edge(e.clone());
    }
    report.merge(validate_schema(&with_edges));
    report.merge(validate_link_integrity(&with_edges, None));
    for n in &delta.add_nodes {
        let cited = with_edges
            .incident(&n.id)
            .any(|(k, _)| k.source == n.id && k.relation == Relation::EvidencedBy);
        if !cited {
            report.push(
                n.id.as_str(),
                rules::EVIDENCE_MISSING,
                "new knowledge node cites no evidence",
            );
        }
    }
    report
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConflictKind {
    ContradictoryConstraints,
    DuplicateExclusiveAssignment,
    OpposingRationales,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Conflict {
    pub kind: ConflictKind,
    pub nodes: Vec<NodeId>,
    /// The artifact or knowledge node both sides attach to.
    pub target: NodeId,
    /// Aspect shared by the constraints, or `*` when unqualified.
    pub aspect: String,
}

fn knowledge_kind(graph: &Graph, id: &NodeId) -> Option<KnowledgeKind> {
    graph.node(id).and_then(Node::as_knowledge).map(|k| k.kind)
}

/// Edges of `relation` grouped by target, then by polarity, then aspect.
fn polarity_index(
    graph: &Graph,
    relation: Relation,
    kind: KnowledgeKind,
) -> BTreeMap<(NodeId, String), BTreeMap<String, BTreeSet<NodeId>>> {
    let mut out: BTreeMap<(NodeId, String), BTreeMap<String, BTreeSet<NodeId>>> = BTreeMap::new();
    for (key, attrs) in &graph.edges {
        if key.relation != relation || knowledge_kind(graph, &key.source) != Some(kind) {
            continue;
        }
        let Some(polarity) = attrs.get("polarity") else {
            continue;
        };
        let aspect = attrs
            .get("aspect")
            .cloned()
            .unwrap_or_else(|| "*".to_string());
        out.entry((key.target.clone(), aspect))
            .or_default()
            .entry(polarity.clone())
            .or_default()
            .insert(key.source.clone());
    }
    out
}

/// Pairs with opposite polarity on the same target and overlapping aspect
/// (`*` overlaps everything).
fn opposed(
    index: &BTreeMap<(NodeId, String), BTreeMap<String, BTreeSet<NodeId>>>,
    kind: ConflictKind,
) -> Vec<Conflict> {
    let mut by_target: BTreeMap<&NodeId, Vec<(&String, &BTreeMap<String, BTreeSet<NodeId>>)>> =
        BTreeMap::new();
    for ((target, aspect), pols) in index {
        by_target.entry(target).or_default().push((aspect, pols));
    }
    let mut out = BTreeSet::new();
    for (target, entries) in by_target {
        for (a1, p1) in &entries {
            for (a2, p2) in &entries {
                if !(*a1 == *a2 || a1.as_str() == "*" || a2.as_str() == "*") {
                    continue;
                }
                let (Some(sup), Some(forb)) = (p1.get("supports"), p2.get("forbids")) else {
                    continue;
                };
                for s in sup {
                    for f in forb {
                        if s == f {
                            continue;
                        }
                        let mut nodes = vec![s.clone(), f.clone()];
                        nodes.sort();
                        let aspect = if a1.as_str() == "*" {
                            (*a2).clone()
                        } else {
                            (*a1).clone()
                        };
                        out.insert(Conflict {
                            kind,
                            nodes,
                            target: target.clone(),
                            aspect,
                        });
                    }
                }
            }
        }
    }
    out.into_iter().collect()
}

/// Reports contradictory constraints, responsibilities marked exclusive but
/// assigned to more than one artifact, and rationales pulling both ways.
pub fn detect_conflicts(graph: &Graph) -> Vec<Conflict> {
    let mut out = opposed(
        &polarity_index(graph, Relation::ConstrainedBy, KnowledgeKind::Constraint),
        ConflictKind::ContradictoryConstraints,
    );
    out.extend(opposed(
        &polarity_index(graph, Relation::JustifiedBy, KnowledgeKind::Rationale),
        ConflictKind::OpposingRationales,
    ));
    let mut assigned: BTreeMap<&NodeId, (Vec<NodeId>, bool)> = BTreeMap::new();
    for (key, attrs) in &graph.edges {
        if key.relation == Relation::AssignedTo {
            let entry = assigned.entry(&key.source).or_default();
            entry.0.push(key.target.clone());
            entry.1 |= attrs.get("exclusive").map(String::as_str) == Some("true");
        }
    }
    for (resp, (targets, exclusive)) in assigned {
        if exclusive && targets.len() > 1 {
            out.push(Conflict {
                kind: ConflictKind::DuplicateExclusiveAssignment,
                nodes: targets,
                target: resp.clone(),
                aspect: "*".into(),
            });
        }
    }
    out.sort();
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn laplace_prior_and_bounds() {
        assert_eq!(recalibrate(0, 0), 0.5);
        assert_eq!(recalibrate(3, 1), 4.0 / 6.0);
        assert!(recalibrate(0, 10) > 0.0 && recalibrate(10, 0) < 1.0);
    }
}
