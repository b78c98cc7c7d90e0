// SPDX-License-Identifier: Apache-2.0

//! Context packages: a ranked subgraph compiled into budgeted, ordered
//! sections with a manifest and validation hooks. Serialized as `ctx/1`.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ArtifactKind, HistoryKind, KnowledgeKind, Node, NodeId, NodeKind, Relation};
use crate::query::{RankedNode, TwinSubgraph};
use crate::store::TwinSnapshot;

pub const CTX_FORMAT: &str = "ctx/1";

/// Counts tokens for budgeting. The default model is `chars/4`.
pub trait TokenModel {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct CharsPerFour;

impl TokenModel for CharsPerFour {
    fn name(&self) -> &str {
        "chars/4"
    }

    fn count(&self, text: &str) -> usize {
        estimate_tokens(text)
    }
}

/// `ceil(chars / 4)` over unicode scalar values.
pub fn estimate_tokens(text: &str) -> usize {
    text.chars().count().div_ceil(4)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SectionKind {
    InterfaceAndConstraint,
    Implementation,
    Peripheral,
    Evidence,
}

impl SectionKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SectionKind::InterfaceAndConstraint => "interface-and-constraint",
            SectionKind::Implementation => "implementation",
            SectionKind::Peripheral => "peripheral",
            SectionKind::Evidence => "evidence",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        [
            Self::InterfaceAndConstraint,
            Self::Implementation,
            Self::Peripheral,
            Self::Evidence,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Section {
    pub kind: SectionKind,
    pub subject: NodeId,
    /// Orders sections within a kind before score; constraint cards get 0.
    pub tier: u8,
    pub score: f64,
    pub evidence: Vec<String>,
    pub body: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub kind: SectionKind,
    pub subject: NodeId,
    pub cost: usize,
    pub score: f64,
    pub evidence: Vec<String>,
    /// `None` when admitted.
    pub evicted: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum HookKind {
    RunTest,
    CheckInvariant,
}

impl HookKind {
    pub fn as_str(self) -> &'static str {
        match self {
            HookKind::RunTest => "run-test",
            HookKind::CheckInvariant => "check-invariant",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ValidationHook {
    pub kind: HookKind,
    pub subject: NodeId,
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPackage {
    pub revision: String,
    pub budget: usize,
    pub token_model: String,
    /// Every candidate section in order, admitted or not.
    pub manifest: Vec<ManifestEntry>,
    /// Admitted sections in order.
    pub sections: Vec<Section>,
    pub hooks: Vec<ValidationHook>,
}

#[derive(Debug, Error, PartialEq)]
pub enum ContextError {
    #[error("budget {budget} is smaller than the top section {subject} ({cost} tokens)")]
    BudgetTooSmall {
        budget: usize,
        subject: NodeId,
        cost: usize,
    },
    #[error("subgraph revision {subgraph} does not match snapshot revision {snapshot}")]
    RevisionMismatch { subgraph: String, snapshot: String },
    #[error("malformed ctx/1 input at line {line}: {reason}")]
    Parse { line: usize, reason: String },
}

/// Stable sort by kind, tier, score descending, subject.
pub fn order_sections(sections: &mut [Section]) {
    sections.sort_by(|a, b| {
        a.kind
            .cmp(&b.kind)
            .then(a.tier.cmp(&b.tier))
            .then(b.score.total_cmp(&a.score))
            .then(a.subject.cmp(&b.subject))
    });
}

fn flagged(n: &RankedNode) -> bool {
    n.boundary || n.public || n.constraint_path
}

struct Builder<'a> {
    snapshot: &'a TwinSnapshot,
    members: BTreeSet<&'a NodeId>,
}

impl<'a> Builder<'a> {
    fn out(
        &self,
        id: &NodeId,
        relation: Relation,
    ) -> impl Iterator<Item = (&'a NodeId, Option<&'a str>)> + '_ {
        let id = id.clone();
        self.snapshot
            .graph
            .edges
            .iter()
            .filter_map(move |(k, attrs)| {
                (k.source == id && k.relation == relation)
                    .then(|| (&k.target, attrs.get("polarity").map(String::as_str)))
            })
    }

    fn incoming(
        &self,
        id: &NodeId,
        relation: Relation,
    ) -> impl Iterator<Item = (&'a NodeId, Option<&'a str>)> + '_ {
        let id = id.clone();
        self.snapshot
            .graph
            .edges
            .iter()
            .filter_map(move |(k, attrs)| {
                (k.target == id && k.relation == relation)
                    .then(|| (&k.source, attrs.get("polarity").map(String::as_str)))
            })
    }

    fn evidence_of(&self, id: &NodeId) -> Vec<String> {
        self.out(id, Relation::EvidencedBy)
            .filter_map(|(t, _)| match self.snapshot.graph.node(t) {
                Some(Node::History(h)) if h.kind == HistoryKind::Evidence => Some(h.key.clone()),
                _ => None,
            })
            .collect()
    }

    /// Responsibilities of an artifact: owned by it or its file, or held by
    /// the functionality it implements.
    fn responsibilities(&self, id: &NodeId) -> BTreeSet<&'a NodeId> {
        let mut out: BTreeSet<&NodeId> = self.out(id, Relation::Owns).map(|(t, _)| t).collect();
        for (file, _) in self.incoming(id, Relation::Contains) {
            out.extend(self.out(file, Relation::Owns).map(|(t, _)| t));
        }
        for (f, _) in self.out(id, Relation::Implements) {
            out.extend(self.out(f, Relation::HasResponsibility).map(|(t, _)| t));
        }
        out
    }

    /// Constraints with polarity `forbids` on the artifact or anything it
    /// contains.
    fn forbids(&self, id: &NodeId) -> BTreeSet<&'a NodeId> {
        let mut targets = vec![id.clone()];
        targets.extend(self.out(id, Relation::Contains).map(|(t, _)| t.clone()));
        targets
            .iter()
            .flat_map(|t| {
                self.incoming(t, Relation::ConstrainedBy)
                    .collect::<Vec<_>>()
            })
            .filter(|(_, p)| *p == Some("forbids"))
            .map(|(s, _)| s)
            .collect()
    }

    fn title(&self, id: &NodeId) -> String {
        self.snapshot
            .graph
            .node(id)
            .map(|n| n.title().to_string())
            .unwrap_or_else(|| id.to_string())
    }

    fn boundary_summary(&self, id: &NodeId) -> Option<String> {
        let responsibilities = self.responsibilities(id);
        if responsibilities.is_empty() {
            return None;
        }
        let owns: Vec<String> = responsibilities.iter().map(|r| self.title(r)).collect();
        let forbids: Vec<String> = self.forbids(id).iter().map(|c| self.title(c)).collect();
        let forbids = if forbids.is_empty() {
            "nothing recorded".to_string()
        } else {
            forbids.join("; ")
        };
        Some(format!(
            "component {} owns responsibility {}; must not assume: {}\n",
            id,
            owns.join(", "),
            forbids
        ))
    }

    fn code_slice(&self, id: &NodeId) -> Option<String> {
        let a = self.snapshot.graph.node(id)?.as_artifact()?;
        let content = self.snapshot.sources.tree.get(&a.path)?;
        let (range, body) = match a.span {
            Some((start, end)) => {
                let lines: Vec<&str> = content
                    .lines()
                    .skip(start.saturating_sub(1) as usize)
                    .take((end + 1).saturating_sub(start) as usize)
                    .collect();
                (format!("{start}-{end}"), lines.join("\n"))
            }
            None => (
                "whole".to_string(),
                content.trim_end_matches('\n').to_string(),
            ),
        };
        Some(format!(
            "{}:{} content-hash {}\n{}\n",
            a.path, range, a.content_hash, body
        ))
    }

    fn peripheral(&self, n: &RankedNode) -> String {
        let mut s = format!("{} {}: {}\n", n.kind.as_str(), n.id, n.title);
        if let Some(Node::Knowledge(k)) = self.snapshot.graph.node(&n.id) {
            let _ = writeln!(s, "{}", k.summary);
        }
        s
    }

    fn evidence_body(&self, key: &str) -> Option<String> {
        let e = self.snapshot.evidence.get(key)?;
        Some(format!(
            "{} {} [{}..{}) at {}\n> {}\n",
            e.source_kind.short(),
            e.source_key,
            e.start,
            e.end,
            e.revision,
            e.quote
        ))
    }

    fn sections(&self, subgraph: &TwinSubgraph) -> Vec<Section> {
        let mut out = Vec::new();
        let mut evidence_score: BTreeMap<String, f64> = BTreeMap::new();
        for n in &subgraph.nodes {
            let section = |kind, tier, evidence: Vec<String>, body: String| Section {
                kind,
                subject: n.id.clone(),
                tier,
                score: n.score,
                evidence,
                body,
            };
            match (n.kind, self.snapshot.cards.get(&n.id)) {
                (
                    NodeKind::Knowledge(k @ (KnowledgeKind::Constraint | KnowledgeKind::Rationale)),
                    Some(card),
                ) => {
                    let evidence = self.evidence_of(&n.id);
                    for e in &evidence {
                        let s = evidence_score.entry(e.clone()).or_insert(n.score);
                        *s = s.max(n.score);
                    }
                    let tier = u8::from(k != KnowledgeKind::Constraint);
                    out.push(section(
                        SectionKind::InterfaceAndConstraint,
                        tier,
                        evidence,
                        card.render(),
                    ));
                }
                (NodeKind::Artifact(kind), _) => {
                    let file = kind == ArtifactKind::File;
                    if !file {
                        if let Some(body) = self.boundary_summary(&n.id) {
                            out.push(section(
                                SectionKind::InterfaceAndConstraint,
                                1,
                                Vec::new(),
                                body,
                            ));
                        }
                    }
                    // a file whose members are present would only repeat their code
                    let covered = file
                        && self
                            .out(&n.id, Relation::Contains)
                            .any(|(m, _)| self.members.contains(m));
                    let code = if covered || (n.hop >= 2 && !flagged(n)) {
                        None
                    } else {
                        self.code_slice(&n.id)
                    };
                    match code {
                        Some(body) => {
                            out.push(section(SectionKind::Implementation, 0, Vec::new(), body))
                        }
                        None => out.push(section(
                            SectionKind::Peripheral,
                            0,
                            Vec::new(),
                            self.peripheral(n),
                        )),
                    }
                }
                (NodeKind::Knowledge(_), _) => {
                    out.push(section(
                        SectionKind::Peripheral,
                        0,
                        self.evidence_of(&n.id),
                        self.peripheral(n),
                    ));
                }
                (NodeKind::History(_), _) => {}
            }
        }
        for (key, score) in evidence_score {
            if let Some(body) = self.evidence_body(&key) {
                out.push(Section {
                    kind: SectionKind::Evidence,
                    subject: NodeId::evidence(&key),
                    tier: 0,
                    score,
                    evidence: vec![key],
                    body,
                });
            }
        }
        out
    }

    fn hooks(&self, subgraph: &TwinSubgraph) -> Vec<ValidationHook> {
        let mut hooks = BTreeSet::new();
        for e in subgraph
            .edges
            .iter()
            .filter(|e| e.relation == Relation::Tests)
        {
            if self.members.contains(&e.source) {
                hooks.insert(ValidationHook {
                    kind: HookKind::RunTest,
                    subject: e.source.clone(),
                    description: format!(
                        "run {} (tests {})",
                        self.title(&e.source),
                        self.title(&e.target)
                    ),
                });
            }
        }
        for n in subgraph
            .nodes
            .iter()
            .filter(|n| n.kind == NodeKind::Knowledge(KnowledgeKind::Constraint))
        {
            hooks.insert(ValidationHook {
                kind: HookKind::CheckInvariant,
                subject: n.id.clone(),
                description: n.title.clone(),
            });
        }
        hooks.into_iter().collect()
    }
}

/// Compiles with the default `chars/4` token model.
pub fn compile_package(
    subgraph: &TwinSubgraph,
    budget: usize,
    snapshot: &TwinSnapshot,
) -> Result<ContextPackage, ContextError> {
    compile_with(subgraph, budget, snapshot, &CharsPerFour)
}

/// Sections are atomic: each is admitted whole, first-fit in order, or
/// evicted with a reason.
pub fn compile_with(
    subgraph: &TwinSubgraph,
    budget: usize,
    snapshot: &TwinSnapshot,
    model: &dyn TokenModel,
) -> Result<ContextPackage, ContextError> {
    if !subgraph.nodes.is_empty() && subgraph.revision != snapshot.revision {
        return Err(ContextError::RevisionMismatch {
            subgraph: subgraph.revision.clone(),
            snapshot: snapshot.revision.clone(),
        });
    }
    let builder = Builder {
        snapshot,
        members: subgraph.node_ids(),
    };
    let mut candidates = builder.sections(subgraph);
    order_sections(&mut candidates);
    if let Some(top) = candidates
        .first()
        .filter(|s| s.kind == SectionKind::InterfaceAndConstraint)
    {
        let cost = model.count(&top.body);
        if cost > budget {
            return Err(ContextError::BudgetTooSmall {
                budget,
                subject: top.subject.clone(),
                cost,
            });
        }
    }
    let mut remaining = budget;
    let mut manifest = Vec::new();
    let mut sections = Vec::new();
    for s in candidates {
        let cost = model.count(&s.body);
        let evicted = if cost <= remaining {
            remaining -= cost;
            None
        } else {
            Some(format!("over-budget: needs {cost}, {remaining} left"))
        };
        manifest.push(ManifestEntry {
            kind: s.kind,
            subject: s.subject.clone(),
            cost,
            score: s.score,
            evidence: s.evidence.clone(),
            evicted: evicted.clone(),
        });
        if evicted.is_none() {
            sections.push(s);
        }
    }
    Ok(ContextPackage {
        revision: snapshot.revision.clone(),
        budget,
        token_model: model.name().to_string(),
        manifest,
        sections,
        hooks: builder.hooks(subgraph),
    })
}

impl ContextPackage {
    pub fn used(&self) -> usize {
        self.manifest
            .iter()
            .filter(|m| m.evicted.is_none())
            .map(|m| m.cost)
            .sum()
    }

    pub fn admitted(&self) -> impl Iterator<Item = &ManifestEntry> {
        self.manifest.iter().filter(|m| m.evicted.is_none())
    }

    /// `ctx/1` text form.
    pub fn render(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "{CTX_FORMAT}");
        let _ = writeln!(s, "revision: {}", self.revision);
        let _ = writeln!(s, "budget: {}", self.budget);
        let _ = writeln!(s, "token-model: {}", self.token_model);
        let _ = writeln!(s, "used: {}", self.used());
        let _ = writeln!(s, "manifest: {}", self.manifest.len());
        for m in &self.manifest {
            let mark = if m.evicted.is_some() { '-' } else { '+' };
            let _ = write!(
                s,
                "{mark} {} {} cost={} score={:.3}",
                m.kind.as_str(),
                m.subject,
                m.cost,
                m.score
            );
            if !m.evidence.is_empty() {
                let _ = write!(s, " evidence={}", m.evidence.join(","));
            }
            if let Some(reason) = &m.evicted {
                let _ = write!(s, " evicted={reason}");
            }
            s.push('\n');
        }
        let _ = writeln!(s, "hooks: {}", self.hooks.len());
        for h in &self.hooks {
            let _ = writeln!(s, "{} {} {}", h.kind.as_str(), h.subject, h.description);
        }
        for sec in &self.sections {
            let _ = writeln!(s, "=== section {} {}", sec.kind.as_str(), sec.subject);
            s.push_str(&sec.body);
            if !sec.body.ends_with('\n') {
                s.push('\n');
            }
        }
        s
    }
}

/// Reads the section delimiters of a `ctx/1` document back as
/// `(kind, subject)` pairs, in order.
pub fn section_headers(text: &str) -> Result<Vec<(SectionKind, NodeId)>, ContextError> {
    let mut lines = text.lines();
    if lines.next() != Some(CTX_FORMAT) {
        return Err(ContextError::Parse {
            line: 1,
            reason: format!("expected `{CTX_FORMAT}` header"),
        });
    }
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let Some(rest) = line.strip_prefix("=== section ") else {
            continue;
        };
        let (kind, subject) = rest.split_once(' ').ok_or_else(|| ContextError::Parse {
            line: i + 1,
            reason: "delimiter without subject".into(),
        })?;
        let kind = SectionKind::parse(kind).ok_or_else(|| ContextError::Parse {
            line: i + 1,
            reason: format!("unknown section kind `{kind}`"),
        })?;
        out.push((kind, NodeId::from(subject)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sec(kind: SectionKind, id: &str, score: f64) -> Section {
        Section {
            kind,
            subject: NodeId::from(id),
            tier: 0,
            score,
            evidence: vec![],
            body: String::new(),
        }
    }

    #[test]
    fn token_estimates() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcdefghi"), 3);
        assert_eq!(estimate_tokens("ééé"), 1);
    }

    #[test]
    fn ordering() {
        let mut v = vec![
            sec(SectionKind::Implementation, "a:A", 9.0),
            sec(SectionKind::InterfaceAndConstraint, "k:B", 1.0),
        ];
        order_sections(&mut v);
        assert_eq!(v[0].subject.as_str(), "k:B");
        let mut v = vec![
            sec(SectionKind::Peripheral, "a:z", 1.0),
            sec(SectionKind::Peripheral, "a:y", 1.0),
        ];
        order_sections(&mut v);
        assert_eq!(v[0].subject.as_str(), "a:y");
        let ordered = v.clone();
        order_sections(&mut v);
        assert_eq!(v, ordered);
    }
}
