// SPDX-License-Identifier: Apache-2.0

//! Canonical byte form of a graph: the equality oracle for rebuild
//! equivalence and curation laws.
//!
//! Layout: a `graph/1` header line, then one JSON line per node sorted by id,
//! then one JSON line per edge sorted by (source, relation, target) with
//! attributes sorted by key.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Attributes, Graph, Node, NodeId, Relation, TypedEdge};
use crate::validate::validate_link_integrity;

pub const GRAPH_FORMAT: &str = "graph/1";

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CanonicalError {
    #[error("integrity violation: {0} dangling edge(s), first: {1}")]
    Integrity(usize, String),
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

#[derive(Serialize)]
struct EdgeLine<'a> {
    edge: [&'a str; 3],
    #[serde(skip_serializing_if = "Attributes::is_empty")]
    attrs: &'a Attributes,
}

#[derive(Serialize)]
struct NodeLine<'a> {
    node: &'a Node,
}

pub fn canonical_form(graph: &Graph) -> Result<Vec<u8>, CanonicalError> {
    let report = validate_link_integrity(graph, None);
    if let Some(first) = report.findings.first() {
        return Err(CanonicalError::Integrity(
            report.len(),
            first.subject.clone(),
        ));
    }
    Ok(canonical_bytes_unchecked(graph))
}

/// Canonical bytes without the integrity precondition. Used when comparing
/// graphs that are expected to fail validation.
pub fn canonical_bytes_unchecked(graph: &Graph) -> Vec<u8> {
    let mut out = Vec::with_capacity(64 * (graph.nodes.len() + graph.edges.len()));
    out.extend_from_slice(GRAPH_FORMAT.as_bytes());
    out.push(b'\n');
    // BTreeMap iteration gives the sort order
    for node in graph.nodes.values() {
        serde_json::to_writer(&mut out, &NodeLine { node }).expect("node serializes");
        out.push(b'\n');
    }
    for (key, attrs) in &graph.edges {
        let line = EdgeLine {
            edge: [
                key.source.as_str(),
                key.relation.as_str(),
                key.target.as_str(),
            ],
            attrs,
        };
        serde_json::to_writer(&mut out, &line).expect("edge serializes");
        out.push(b'\n');
    }
    out
}

#[derive(Deserialize)]
#[serde(untagged)]
enum Line {
    Node {
        node: Node,
    },
    Edge {
        edge: [String; 3],
        #[serde(default)]
        attrs: Attributes,
    },
}

/// Reads bytes written by [`canonical_form`] back into a graph.
pub fn parse_canonical(bytes: &[u8]) -> Result<Graph, CanonicalError> {
    let text = std::str::from_utf8(bytes).map_err(|e| CanonicalError::Parse {
        line: 0,
        reason: e.to_string(),
    })?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, GRAPH_FORMAT)) => {}
        _ => {
            return Err(CanonicalError::Parse {
                line: 1,
                reason: format!("expected `{GRAPH_FORMAT}` header"),
            })
        }
    }
    let mut graph = Graph::new();
    for (i, raw) in lines {
        let err = |reason: String| CanonicalError::Parse {
            line: i + 1,
            reason,
        };
        match serde_json::from_str::<Line>(raw).map_err(|e| err(e.to_string()))? {
            Line::Node { node } => graph.insert_node(node),
            Line::Edge {
                edge: [s, r, t],
                attrs,
            } => {
                let relation =
                    Relation::parse(&r).ok_or_else(|| err(format!("unknown relation `{r}`")))?;
                let mut e = TypedEdge::new(NodeId::from_raw(s), relation, NodeId::from_raw(t));
                e.attributes = attrs;
                graph.insert_edge(e);
            }
        }
    }
    Ok(graph)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::*;

    fn sample_nodes() -> Vec<Node> {
        ["a.x", "b.x", "c.x"]
            .iter()
            .map(|p| {
                Node::Artifact(ArtifactNode {
                    id: NodeId::artifact(p, None),
                    kind: ArtifactKind::File,
                    name: p.to_string(),
                    path: p.to_string(),
                    span: None,
                    visibility: Visibility::Public,
                    content_hash: "00".into(),
                })
            })
            .collect()
    }

    fn sample_edges() -> Vec<TypedEdge> {
        vec![
            TypedEdge::new("a:a.x".into(), Relation::Imports, "a:b.x".into()),
            TypedEdge::new("a:b.x".into(), Relation::Imports, "a:c.x".into())
                .with_attr("z", "1")
                .with_attr("a", "2"),
            TypedEdge::new("a:a.x".into(), Relation::DependsOn, "a:c.x".into()),
        ]
    }

    #[test]
    fn insertion_order_does_not_matter() {
        let g1 = Graph::from_parts(sample_nodes(), sample_edges());
        let mut nodes = sample_nodes();
        nodes.reverse();
        let mut edges = sample_edges();
        edges.rotate_left(1);
        let g2 = Graph::from_parts(nodes, edges);
        assert_eq!(canonical_form(&g1).unwrap(), canonical_form(&g2).unwrap());
    }

    #[test]
    fn attribute_change_changes_bytes() {
        let g1 = Graph::from_parts(sample_nodes(), sample_edges());
        let mut edges = sample_edges();
        edges[0] = edges[0].clone().with_attr("resolution", "ambiguous");
        let g2 = Graph::from_parts(sample_nodes(), edges);
        assert_ne!(canonical_form(&g1).unwrap(), canonical_form(&g2).unwrap());
    }

    #[test]
    fn dangling_edge_is_rejected() {
        let g = Graph::from_parts(
            sample_nodes(),
            [TypedEdge::new(
                "a:a.x".into(),
                Relation::Imports,
                "a:zz.x".into(),
            )],
        );
        assert!(matches!(
            canonical_form(&g),
            Err(CanonicalError::Integrity(1, _))
        ));
    }

    #[test]
    fn attributes_are_sorted_and_edges_ordered() {
        let g = Graph::from_parts(sample_nodes(), sample_edges());
        let text = String::from_utf8(canonical_form(&g).unwrap()).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "graph/1");
        assert_eq!(lines[4], r#"{"edge":["a:a.x","depends-on","a:c.x"]}"#);
        assert_eq!(
            lines[6],
            r#"{"edge":["a:b.x","imports","a:c.x"],"attrs":{"a":"2","z":"1"}}"#
        );
    }
}
