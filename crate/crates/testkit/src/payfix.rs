// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use twin_core::curation::{GraphDelta, Overlay};
use twin_core::extractors::FACTS_EXTRACTOR;
use twin_core::knowledge::evidence::{EvidenceFragment, SourceKind};
use twin_core::model::{
    KnowledgeKind, KnowledgeNode, KnowledgeStatus, NodeId, Relation, TypedEdge,
};
use twin_core::store::{full_rebuild, load_repo, RepoHistory, TwinConfig, TwinSnapshot};
use twin_core::writeback::Provenance;

pub const GOLDEN_QUERY: &str = "refactor payment validation to async";
pub const REVIEW_COMMENT: &str = "validate may run async once the mainframe queue lands";

pub fn dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures/payfix")
}

pub fn config() -> TwinConfig {
    TwinConfig {
        extractor: FACTS_EXTRACTOR.into(),
        ..TwinConfig::default()
    }
}

pub fn history() -> RepoHistory {
    load_repo(&dir()).expect("payfix fixture loads")
}

pub fn snapshot() -> TwinSnapshot {
    full_rebuild(&history(), &Overlay::default(), &config()).expect("payfix builds")
}

pub fn review_comment() -> Provenance {
    Provenance::ReviewComment {
        key: "rc1".into(),
        text: REVIEW_COMMENT.into(),
    }
}

/// A curated constraint allowing async validation. It opposes the
/// extracted ordered-requests constraint on `validate`.
pub fn async_allowed() -> GraphDelta {
    let quote = "validate may run async";
    let e = EvidenceFragment::new(
        SourceKind::Discussion,
        "rc1",
        quote,
        0,
        quote.chars().count(),
        "c2",
    );
    let node = NodeId::from("k:constraint:async-allowed");
    GraphDelta {
        add_nodes: vec![KnowledgeNode {
            id: node.clone(),
            kind: KnowledgeKind::Constraint,
            title: "async allowed".into(),
            summary: "validate may run asynchronously".into(),
            status: KnowledgeStatus::Curated,
            confidence: 0.5,
        }],
        add_edges: vec![
            TypedEdge::new(
                node.clone(),
                Relation::ConstrainedBy,
                NodeId::from("a:pay/validator.x#validate"),
            )
            .with_attr("polarity", "supports"),
            TypedEdge::new(node, Relation::EvidencedBy, NodeId::evidence(&e.id)),
        ],
        evidence: vec![e],
        ..GraphDelta::default()
    }
}

/// A proposal body whose only edge points at a node that does not exist.
pub fn dangling() -> GraphDelta {
    let mut d = async_allowed();
    d.add_edges.push(TypedEdge::new(
        NodeId::from("k:constraint:async-allowed"),
        Relation::ConstrainedBy,
        NodeId::from("a:pay/nowhere.x#ghost"),
    ));
    d
}
