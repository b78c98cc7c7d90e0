// SPDX-License-Identifier: Apache-2.0

//! Knowledge cards: compact, evidence-bearing renderings of one knowledge
//! node. A card is a pure function of its [`CardInput`], so a card whose
//! input did not change between snapshots is reused byte for byte.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::evidence::{EvidenceFragment, EvidenceStore};
use crate::history::ChangeRecord;
use crate::model::{Graph, KnowledgeKind, KnowledgeNode, Node, NodeId, Relation};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CardError {
    #[error("{0} is not a knowledge node")]
    NotKnowledge(NodeId),
}

/// One incident edge seen from the card subject.
#[derive(Debug, Clone, PartialEq)]
pub struct Neighbor {
    pub relation: Relation,
    pub outgoing: bool,
    pub node: Node,
}

/// Everything a card is generated from.
#[derive(Debug, Clone, PartialEq)]
pub struct CardInput {
    pub node: KnowledgeNode,
    pub neighbors: Vec<Neighbor>,
    pub evidence: Vec<EvidenceFragment>,
}

impl CardInput {
    pub fn collect(
        graph: &Graph,
        evidence: &EvidenceStore,
        subject: &NodeId,
    ) -> Result<Self, CardError> {
        let node = graph
            .node(subject)
            .and_then(Node::as_knowledge)
            .cloned()
            .ok_or_else(|| CardError::NotKnowledge(subject.clone()))?;
        let mut neighbors = Vec::new();
        let mut fragments = Vec::new();
        for (key, _) in graph.incident(subject) {
            let outgoing = &key.source == subject;
            let other = if outgoing { &key.target } else { &key.source };
            if key.relation == Relation::EvidencedBy {
                if let Some(e) = other
                    .as_str()
                    .strip_prefix("h:evidence:")
                    .and_then(|k| evidence.get(k))
                {
                    fragments.push(e.clone());
                }
                continue;
            }
            if key.relation == Relation::AnchoredTo {
                continue;
            }
            if let Some(n) = graph.node(other) {
                neighbors.push(Neighbor {
                    relation: key.relation,
                    outgoing,
                    node: n.clone(),
                });
            }
        }
        neighbors.sort_by(|a, b| {
            (a.relation.as_str(), !a.outgoing, a.node.id()).cmp(&(
                b.relation.as_str(),
                !b.outgoing,
                b.node.id(),
            ))
        });
        fragments.sort_by(|a, b| a.id.cmp(&b.id));
        Ok(CardInput {
            node,
            neighbors,
            evidence: fragments,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnowledgeCard {
    pub subject: NodeId,
    pub kind: KnowledgeKind,
    pub title: String,
    pub bullets: Vec<String>,
    /// Artifact nodes the card is grounded in.
    pub grounding: Vec<NodeId>,
    pub links: Vec<String>,
    pub evidence: Vec<String>,
    /// Latest revision among the cited evidence.
    pub last_built_at: String,
}

fn kind_bullets(input: &CardInput) -> Vec<String> {
    let titles = |rel: Relation, outgoing: bool| -> Vec<String> {
        input
            .neighbors
            .iter()
            .filter(|n| n.relation == rel && n.outgoing == outgoing)
            .map(|n| n.node.title().to_string())
            .collect()
    };
    let line = |label: &str, items: Vec<String>| {
        (!items.is_empty()).then(|| format!("{label}: {}", items.join(", ")))
    };
    let mut out = vec![input.node.summary.clone()];
    let extra = match input.node.kind {
        KnowledgeKind::Concept => vec![line(
            "operationalized by",
            titles(Relation::OperationalizedBy, true),
        )],
        KnowledgeKind::Functionality => vec![
            line("implemented by", titles(Relation::Implements, false)),
            line("depends on", titles(Relation::GDependsOn, true)),
            line("realizes", titles(Relation::OperationalizedBy, false)),
        ],
        KnowledgeKind::Responsibility => {
            vec![line("assigned to", titles(Relation::AssignedTo, true))]
        }
        KnowledgeKind::Constraint => {
            vec![line("constrains", titles(Relation::ConstrainedBy, true))]
        }
        KnowledgeKind::Rationale => vec![line("justifies", titles(Relation::JustifiedBy, true))],
    };
    out.extend(extra.into_iter().flatten());
    out
}

/// Renders the card for `input`; `records` fixes the order of revisions.
pub fn generate_card(input: &CardInput, records: &[ChangeRecord]) -> KnowledgeCard {
    let order: BTreeMap<&str, usize> = records
        .iter()
        .enumerate()
        .map(|(i, r)| (r.revision.as_str(), i))
        .collect();
    let last_built_at = input
        .evidence
        .iter()
        .max_by_key(|e| (order.get(e.revision.as_str()).copied(), e.revision.as_str()))
        .map(|e| e.revision.clone())
        .unwrap_or_default();
    let grounding = input
        .neighbors
        .iter()
        .filter(|n| n.node.id().is_artifact())
        .map(|n| n.node.id().clone())
        .collect::<std::collections::BTreeSet<_>>()
        .into_iter()
        .collect();
    let links = input
        .neighbors
        .iter()
        .filter(|n| n.node.id().is_knowledge())
        .map(|n| {
            let dir = if n.outgoing { "->" } else { "<-" };
            format!("{} {dir} {} {}", n.relation, n.node.id(), n.node.title())
        })
        .collect();
    let evidence = input
        .evidence
        .iter()
        .map(|e| {
            format!(
                "{} @{} \"{}\"",
                e.id,
                e.revision,
                e.quote.replace('\n', " ")
            )
        })
        .collect();
    KnowledgeCard {
        subject: input.node.id.clone(),
        kind: input.node.kind,
        title: input.node.title.clone(),
        bullets: kind_bullets(input),
        grounding,
        links,
        evidence,
        last_built_at,
    }
}

impl KnowledgeCard {
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "CARD {}", self.subject);
        let _ = writeln!(s, "kind: {}", self.kind);
        let _ = writeln!(s, "title: {}", self.title);
        let _ = writeln!(s, "last-built-at: {}", self.last_built_at);
        for b in &self.bullets {
            let _ = writeln!(s, "- {b}");
        }
        let mut block = |name: &str, items: &[String]| {
            let _ = writeln!(s, "{name}");
            for i in items {
                let _ = writeln!(s, "- {i}");
            }
        };
        let grounding: Vec<String> = self.grounding.iter().map(ToString::to_string).collect();
        block("GROUNDING", &grounding);
        block("LINKS", &self.links);
        block("EVIDENCE", &self.evidence);
        s
    }

    /// Card text used for lexical matching: title and bullets.
    pub fn search_text(&self) -> String {
        let mut s = self.title.clone();
        for b in &self.bullets {
            s.push(' ');
            s.push_str(b);
        }
        for l in &self.links {
            s.push(' ');
            s.push_str(l.splitn(4, ' ').nth(3).unwrap_or_default());
        }
        s
    }
}

pub type CardStore = BTreeMap<NodeId, KnowledgeCard>;

/// Cards for every knowledge node, reusing `previous` cards whose input is
/// unchanged. Returns the store and the ids that were regenerated.
pub fn refresh_cards(
    graph: &Graph,
    evidence: &EvidenceStore,
    records: &[ChangeRecord],
    previous: Option<(&Graph, &EvidenceStore, &CardStore)>,
) -> (CardStore, Vec<NodeId>) {
    let mut cards = CardStore::new();
    let mut regenerated = Vec::new();
    for k in graph.knowledge() {
        let input = CardInput::collect(graph, evidence, &k.id).expect("knowledge node");
        let reused = previous.and_then(|(g, e, store)| {
            let old = store.get(&k.id)?;
            (CardInput::collect(g, e, &k.id).ok()? == input).then(|| old.clone())
        });
        let card = match reused {
            Some(card) => card,
            None => {
                regenerated.push(k.id.clone());
                generate_card(&input, records)
            }
        };
        cards.insert(k.id.clone(), card);
    }
    (cards, regenerated)
}
