// SPDX-License-Identifier: Apache-2.0

//! Schema and link-integrity validators. Violations are reported as
//! findings, never as errors.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::model::{
    signature_allows, ArtifactNode, Graph, HistoryKind, KnowledgeNode, Node, NodeId, Relation,
};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Finding {
    /// Node id or rendered edge key the finding is about.
    pub subject: String,
    pub rule: String,
    pub message: String,
}

impl fmt::Display for Finding {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}] {}: {}", self.rule, self.subject, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValidationReport {
    pub findings: Vec<Finding>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn len(&self) -> usize {
        self.findings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.findings.is_empty()
    }

    pub fn push(&mut self, subject: impl Into<String>, rule: &str, message: impl Into<String>) {
        self.findings.push(Finding {
            subject: subject.into(),
            rule: rule.to_string(),
            message: message.into(),
        });
    }

    pub fn merge(&mut self, other: ValidationReport) {
        self.findings.extend(other.findings);
    }

    pub fn with_rule<'a>(&'a self, rule: &'a str) -> impl Iterator<Item = &'a Finding> + 'a {
        self.findings.iter().filter(move |f| f.rule == rule)
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{} finding(s)", self.findings.len())?;
        for finding in &self.findings {
            writeln!(f, "{finding}")?;
        }
        Ok(())
    }
}

pub mod rules {
    pub const EDGE_SIGNATURE: &str = "edge-signature";
    pub const SPAN_PRESENCE: &str = "span-presence";
    pub const SPAN_ORDER: &str = "span-order";
    pub const CONTENT_HASH: &str = "content-hash";
    pub const ID_NAMESPACE: &str = "id-namespace";
    pub const CONFIDENCE_RANGE: &str = "confidence-range";
    pub const ATTRIBUTE_VALUE: &str = "attribute-value";
    pub const DANGLING_EDGE: &str = "dangling-edge";
    pub const TRACE_UNRESOLVED: &str = "trace-unresolved";
    pub const EVIDENCE_MISSING: &str = "evidence-missing";
    pub const EVIDENCE_MISMATCH: &str = "evidence-mismatch";
}

fn check_artifact(n: &ArtifactNode, report: &mut ValidationReport) {
    use crate::model::ArtifactKind;
    let id = n.id.as_str();
    let expected = if n.kind.has_span() {
        Some(NodeId::artifact(&n.path, Some(&n.name)))
    } else if matches!(
        n.kind,
        ArtifactKind::File | ArtifactKind::Document | ArtifactKind::Module
    ) {
        Some(NodeId::artifact(&n.path, None))
    } else {
        None
    };
    if !n.id.is_artifact() {
        report.push(id, rules::ID_NAMESPACE, "artifact id must start with `a:`");
    } else if let Some(expected) = expected.filter(|e| e != &n.id) {
        report.push(id, rules::ID_NAMESPACE, format!("expected id {expected}"));
    }
    match (n.kind.has_span(), n.span) {
        (true, None) => report.push(
            id,
            rules::SPAN_PRESENCE,
            format!("{} requires a span", n.kind),
        ),
        (false, Some(_)) => report.push(
            id,
            rules::SPAN_PRESENCE,
            format!("{} must not carry a span", n.kind),
        ),
        (true, Some((start, end))) if start == 0 || start > end => {
            report.push(id, rules::SPAN_ORDER, format!("invalid span {start}-{end}"))
        }
        _ => {}
    }
    if n.content_hash.is_empty() || !n.content_hash.bytes().all(|b| b.is_ascii_hexdigit()) {
        report.push(
            id,
            rules::CONTENT_HASH,
            "content hash must be a non-empty hex digest",
        );
    }
}

fn check_knowledge(n: &KnowledgeNode, report: &mut ValidationReport) {
    let id = n.id.as_str();
    let prefix = format!("k:{}:", n.kind.as_str());
    if !id.starts_with(&prefix) || id.len() == prefix.len() {
        report.push(
            id,
            rules::ID_NAMESPACE,
            format!("knowledge id must start with `{prefix}`"),
        );
    }
    if !(0.0..=1.0).contains(&n.confidence) || n.confidence.is_nan() {
        report.push(
            id,
            rules::CONFIDENCE_RANGE,
            format!("confidence {} outside [0,1]", n.confidence),
        );
    }
}

fn check_attributes(edge: &str, attrs: &crate::model::Attributes, report: &mut ValidationReport) {
    let allowed: &[(&str, &[&str])] = &[
        ("resolution", &["resolved", "ambiguous"]),
        ("polarity", &["supports", "forbids"]),
        ("exclusive", &["true", "false"]),
    ];
    for (key, values) in allowed {
        if let Some(v) = attrs.get(*key) {
            if !values.contains(&v.as_str()) {
                report.push(
                    edge,
                    rules::ATTRIBUTE_VALUE,
                    format!("{key}={v} not in {values:?}"),
                );
            }
        }
    }
}

/// Checks relation signatures and kind-specific node field rules.
pub fn validate_schema(graph: &Graph) -> ValidationReport {
    let mut report = ValidationReport::default();
    for node in graph.nodes.values() {
        match node {
            Node::Artifact(n) => check_artifact(n, &mut report),
            Node::Knowledge(n) => check_knowledge(n, &mut report),
            Node::History(n) => {
                if n.id != NodeId::history(n.kind, &n.key) {
                    report.push(
                        n.id.as_str(),
                        rules::ID_NAMESPACE,
                        "history id must be `h:<kind>:<key>`",
                    );
                }
            }
        }
    }
    for (key, attrs) in &graph.edges {
        let label = key.to_string();
        if let (Some(s), Some(t)) = (graph.node(&key.source), graph.node(&key.target)) {
            if !signature_allows(key.relation, s.kind(), t.kind()) {
                report.push(
                    &label,
                    rules::EDGE_SIGNATURE,
                    format!(
                        "{} does not allow {} -> {}",
                        key.relation,
                        s.kind(),
                        t.kind()
                    ),
                );
            }
        }
        check_attributes(&label, attrs, &mut report);
    }
    report
}

/// Keys a trace edge target may resolve to.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct TraceIndex {
    pub revisions: BTreeSet<String>,
    pub issues: BTreeSet<String>,
    pub evidence: BTreeSet<String>,
}

impl TraceIndex {
    fn resolves(&self, node: &Node) -> bool {
        match node {
            Node::History(h) => match h.kind {
                HistoryKind::Revision => self.revisions.contains(&h.key),
                HistoryKind::Issue => self.issues.contains(&h.key),
                HistoryKind::Evidence => self.evidence.contains(&h.key),
            },
            _ => false,
        }
    }
}

/// Reports dangling edges and, when a trace index is given, trace edges whose
/// target does not resolve in it.
pub fn validate_link_integrity(graph: &Graph, trace: Option<&TraceIndex>) -> ValidationReport {
    let mut report = ValidationReport::default();
    for key in graph.edges.keys() {
        let missing: Vec<&NodeId> = [&key.source, &key.target]
            .into_iter()
            .filter(|id| !graph.contains(id))
            .collect();
        if !missing.is_empty() {
            let names: Vec<&str> = missing.iter().map(|id| id.as_str()).collect();
            report.push(
                key.to_string(),
                rules::DANGLING_EDGE,
                format!("missing endpoint(s): {}", names.join(", ")),
            );
            continue;
        }
        if let (Some(trace), Relation::AnchoredTo | Relation::EvidencedBy) = (trace, key.relation) {
            let target = graph.node(&key.target).expect("checked above");
            if !trace.resolves(target) {
                report.push(
                    key.to_string(),
                    rules::TRACE_UNRESOLVED,
                    format!("{} not in trace store", key.target),
                );
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn file(path: &str) -> Node {
        Node::Artifact(ArtifactNode {
            id: NodeId::artifact(path, None),
            kind: ArtifactKind::File,
            name: path.into(),
            path: path.into(),
            span: None,
            visibility: Visibility::Public,
            content_hash: "ab12".into(),
        })
    }

    fn func(path: &str, name: &str) -> Node {
        Node::Artifact(ArtifactNode {
            id: NodeId::artifact(path, Some(name)),
            kind: ArtifactKind::Function,
            name: name.into(),
            path: path.into(),
            span: Some((3, 14)),
            visibility: Visibility::Public,
            content_hash: "cd34".into(),
        })
    }

    fn concept(slug: &str) -> Node {
        Node::Knowledge(KnowledgeNode {
            id: NodeId::knowledge(KnowledgeKind::Concept, slug),
            kind: KnowledgeKind::Concept,
            title: slug.into(),
            summary: String::new(),
            status: KnowledgeStatus::Extracted,
            confidence: 0.5,
        })
    }

    #[test]
    fn file_contains_function_is_clean() {
        let g = Graph::from_parts(
            [file("f.x"), func("f.x", "g")],
            [TypedEdge::new(
                "a:f.x".into(),
                Relation::Contains,
                "a:f.x#g".into(),
            )],
        );
        assert!(validate_schema(&g).is_clean());
        assert!(validate_link_integrity(&g, None).is_clean());
    }

    #[test]
    fn concept_calls_function_violates_signature() {
        let g = Graph::from_parts(
            [concept("c"), func("f.x", "g")],
            [TypedEdge::new(
                "k:concept:c".into(),
                Relation::Calls,
                "a:f.x#g".into(),
            )],
        );
        let r = validate_schema(&g);
        assert_eq!(r.len(), 1);
        assert_eq!(r.findings[0].rule, rules::EDGE_SIGNATURE);
    }

    #[test]
    fn span_rules_follow_kind() {
        let mut n = func("f.x", "g");
        if let Node::Artifact(a) = &mut n {
            a.span = None;
        }
        let g = Graph::from_parts([file("f.x"), n], []);
        assert_eq!(
            validate_schema(&g).with_rule(rules::SPAN_PRESENCE).count(),
            1
        );
    }

    #[test]
    fn bad_polarity_is_reported() {
        let g = Graph::from_parts(
            [file("f.x"), func("f.x", "g")],
            [
                TypedEdge::new("a:f.x".into(), Relation::Contains, "a:f.x#g".into())
                    .with_attr("polarity", "maybe"),
            ],
        );
        assert_eq!(
            validate_schema(&g)
                .with_rule(rules::ATTRIBUTE_VALUE)
                .count(),
            1
        );
    }

    #[test]
    fn dangling_edges_and_empty_graph() {
        assert!(validate_link_integrity(&Graph::new(), None).is_clean());
        let g = Graph::from_parts(
            [file("f.x")],
            [TypedEdge::new(
                "a:f.x".into(),
                Relation::Contains,
                "a:f.x#gone".into(),
            )],
        );
        let r = validate_link_integrity(&g, None);
        assert_eq!(r.len(), 1);
        assert_eq!(r.findings[0].rule, rules::DANGLING_EDGE);
    }

    #[test]
    fn trace_targets_must_resolve() {
        let rev = Node::History(HistoryNode {
            id: NodeId::revision("c9"),
            kind: HistoryKind::Revision,
            key: "c9".into(),
        });
        let g = Graph::from_parts(
            [concept("c"), rev],
            [TypedEdge::new(
                "k:concept:c".into(),
                Relation::AnchoredTo,
                NodeId::revision("c9"),
            )],
        );
        let mut idx = TraceIndex::default();
        assert_eq!(
            validate_link_integrity(&g, Some(&idx))
                .with_rule(rules::TRACE_UNRESOLVED)
                .count(),
            1
        );
        idx.revisions.insert("c9".into());
        assert!(validate_link_integrity(&g, Some(&idx)).is_clean());
    }
}
