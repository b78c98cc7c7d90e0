// SPDX-License-Identifier: Apache-2.0

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::canonical::canonical_bytes_unchecked;
use crate::codemap::{CodeMap, Unresolved};
use crate::curation::Overlay;
use crate::extractors::SourceTree;
use crate::history::{ChangeRecord, IssueRecord, TraceAnchor};
use crate::knowledge::assemble::AssemblyConfig;
use crate::knowledge::card::CardStore;
use crate::knowledge::evidence::{EvidenceSources, EvidenceStore};
use crate::knowledge::lexicon::Lexicon;
use crate::knowledge::units::DraftCache;
use crate::model::{Graph, NodeId, Relation};
use crate::validate::{
    rules, validate_link_integrity, validate_schema, TraceIndex, ValidationReport,
};

pub const SNAPSHOT_FORMAT: &str = "snapshot/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TwinConfig {
    pub extractor: String,
    pub lexicon: Lexicon,
    pub assembly: AssemblyConfig,
    /// Hops over calls, depends-on and configured-by that widen an update's
    /// impacted region.
    pub impact_hops: usize,
    /// Compare every incremental update against a full rebuild.
    pub paranoid: bool,
}

impl Default for TwinConfig {
    fn default() -> Self {
        TwinConfig {
            extractor: crate::extractors::PYTHON_EXTRACTOR.to_string(),
            lexicon: Lexicon::default(),
            assembly: AssemblyConfig::default(),
            impact_hops: 1,
            paranoid: false,
        }
    }
}

/// File changes per revision, so any earlier tree can be replayed.
pub type FileChanges = BTreeMap<String, Option<String>>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Sources {
    pub tree: SourceTree,
    pub records: Vec<ChangeRecord>,
    /// Parallel to `records`; the root entry adds the whole first tree.
    pub changes: Vec<FileChanges>,
    /// Sorted by key.
    pub issues: Vec<IssueRecord>,
}

/// An immutable, versioned view of the twin.
#[derive(Debug, Clone, PartialEq)]
pub struct TwinSnapshot {
    pub revision: String,
    pub graph: Graph,
    pub unresolved: Vec<Unresolved>,
    /// Every anchor ever produced, including those of deleted artifacts.
    pub anchors: Vec<TraceAnchor>,
    pub evidence: EvidenceStore,
    pub cards: CardStore,
    pub sources: Sources,
    pub overlay: Overlay,
    /// Artifact layer on its own; derived, not part of the canonical form.
    pub map: CodeMap,
    /// Per-unit drafts; derived cache, not part of the canonical form.
    pub drafts: DraftCache,
}

#[derive(Serialize)]
struct Tagged<'a, T: Serialize> {
    #[serde(rename = "t")]
    tag: &'a str,
    #[serde(rename = "v")]
    value: &'a T,
}

impl TwinSnapshot {
    pub fn evidence_sources(&self) -> EvidenceSources<'_> {
        EvidenceSources {
            tree: &self.sources.tree,
            records: &self.sources.records,
            issues: &self.sources.issues,
            discussions: &self.overlay.discussions,
        }
    }

    pub fn trace_index(&self) -> TraceIndex {
        TraceIndex {
            revisions: self
                .sources
                .records
                .iter()
                .map(|r| r.revision.clone())
                .collect(),
            issues: self.sources.issues.iter().map(|i| i.key.clone()).collect(),
            evidence: self.evidence.keys().cloned().collect(),
        }
    }

    /// Anchors whose subject exists in this snapshot.
    pub fn visible_anchors(&self) -> impl Iterator<Item = &TraceAnchor> {
        self.anchors
            .iter()
            .filter(|a| self.graph.contains(&a.subject))
    }

    /// Byte form compared by the rebuild-equivalence check: the canonical
    /// graph followed by anchors, unresolved references, evidence and cards.
    pub fn canonical_bytes(&self) -> Vec<u8> {
        let mut out = format!("{SNAPSHOT_FORMAT} {}\n", self.revision).into_bytes();
        out.extend(canonical_bytes_unchecked(&self.graph));
        let mut line = |tag: &str, value: &dyn erased::Json| {
            out.extend(value.json(tag));
            out.push(b'\n');
        };
        for a in &self.anchors {
            line("anchor", a);
        }
        for u in &self.unresolved {
            line("unresolved", u);
        }
        for e in self.evidence.values() {
            line("evidence", e);
        }
        for c in self.cards.values() {
            line("card", c);
        }
        out
    }

    /// Schema, link integrity against the trace store, evidence fidelity,
    /// and evidence coverage of every knowledge node.
    pub fn validate(&self) -> ValidationReport {
        let mut report = validate_schema(&self.graph);
        report.merge(validate_link_integrity(
            &self.graph,
            Some(&self.trace_index()),
        ));
        report.merge(self.evidence_sources().verify_all(&self.evidence));
        for k in self.graph.knowledge() {
            let cited = self
                .graph
                .incident(&k.id)
                .any(|(key, _)| key.source == k.id && key.relation == Relation::EvidencedBy);
            if !cited {
                report.push(
                    k.id.as_str(),
                    rules::EVIDENCE_MISSING,
                    "knowledge node cites no evidence",
                );
            }
        }
        report
    }

    pub fn card_text(&self, id: &NodeId) -> Option<String> {
        self.cards.get(id).map(|c| c.render())
    }

    pub fn revision_index(&self, revision: &str) -> Option<usize> {
        self.sources
            .records
            .iter()
            .position(|r| r.revision == revision)
    }
}

mod erased {
    use serde::Serialize;

    use super::Tagged;

    pub trait Json {
        fn json(&self, tag: &str) -> Vec<u8>;
    }

    impl<T: Serialize> Json for T {
        fn json(&self, tag: &str) -> Vec<u8> {
            serde_json::to_vec(&Tagged { tag, value: self }).expect("serializable")
        }
    }
}
