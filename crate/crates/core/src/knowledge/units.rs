// SPDX-License-Identifier: Apache-2.0

//! Per-unit extraction drafts. A unit is one document, one change record, one
//! issue, or one public call-graph component. Drafts of a unit depend only on
//! that unit's inputs, so an incremental update can recompute the impacted
//! units and reuse the rest.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::evidence::{last_touch, EvidenceFragment, SourceKind};
use super::lexicon::Lexicon;
use crate::codemap::CodeMap;
use crate::extractors::SourceTree;
use crate::history::{ChangeRecord, IssueRecord};
use crate::model::{ArtifactKind, NodeId, Relation, Visibility};
use crate::text::{is_stopword, raw_tokens, sentences, slugify, stem};

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum UnitKey {
    Document(String),
    Record(String),
    Issue(String),
    /// Sorted member ids of a public call-graph component.
    Component(Vec<NodeId>),
}

/// What a rationale or constraint claim attaches to.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Grounding {
    Concept(String),
    /// Artifacts changed by the commit.
    Commit(String),
    /// Artifacts changed by commits referencing the issue or linked to it.
    Issue(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConceptDraft {
    pub slug: String,
    pub title: String,
    pub summary: String,
    pub evidence: EvidenceFragment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClaimDraft {
    pub slug: String,
    pub title: String,
    /// Normalized content tokens, cues removed; used to merge restatements.
    pub tokens: BTreeSet<String>,
    pub grounding: Grounding,
    pub evidence: EvidenceFragment,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FunctionalityDraft {
    pub members: Vec<NodeId>,
    pub token: String,
    pub evidence: EvidenceFragment,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Drafts {
    pub concepts: Vec<ConceptDraft>,
    pub constraints: Vec<ClaimDraft>,
    pub rationales: Vec<ClaimDraft>,
    pub functionalities: Vec<FunctionalityDraft>,
}

pub type DraftCache = BTreeMap<UnitKey, Drafts>;

const REF_WORDS: &[&str] = &[
    "fix", "fixes", "fixed", "close", "closes", "closed", "see", "refs",
];

fn content_words(text: &str, lexicon: &Lexicon) -> Vec<String> {
    raw_tokens(text)
        .into_iter()
        .filter(|t| !is_stopword(t) && !lexicon.is_cue_word(t) && !REF_WORDS.contains(&t.as_str()))
        .filter(|t| !t.chars().all(|c| c.is_ascii_digit()))
        .collect()
}

fn claim_tokens(sentence: &str, lexicon: &Lexicon) -> BTreeSet<String> {
    content_words(sentence, lexicon)
        .iter()
        .map(|t| stem(t))
        .collect()
}

/// Slug from the words after the cue, up to the first bracket or comma;
/// falls back to the words before the cue.
fn claim_slug(sentence: &str, cue: (usize, usize), lexicon: &Lexicon, fallback: &str) -> String {
    let chars: Vec<char> = sentence.chars().collect();
    let (cs, ce) = (cue.0.min(chars.len()), cue.1.min(chars.len()));
    let tail: String = chars[ce..]
        .iter()
        .take_while(|c| !matches!(c, '(' | '[' | ','))
        .collect();
    let mut words = content_words(&tail, lexicon);
    words.truncate(4);
    if words.is_empty() {
        let head: String = chars[..cs].iter().collect();
        words = content_words(&head, lexicon);
        let skip = words.len().saturating_sub(4);
        words.drain(..skip);
    }
    if words.is_empty() {
        let s = slugify(sentence, 4);
        return if s.is_empty() {
            fallback.to_string()
        } else {
            s
        };
    }
    words.join("-")
}

fn heading_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^(#{1,6})[ \t]+(.*\S)[ \t]*$").unwrap())
}

struct Line<'a> {
    text: &'a str,
    start: usize,
}

fn lines_with_offsets(text: &str) -> Vec<Line<'_>> {
    let mut out = Vec::new();
    let mut offset = 0;
    for raw in text.split('\n') {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        out.push(Line {
            text: line,
            start: offset,
        });
        offset += raw.chars().count() + 1;
    }
    out
}

fn claims_in(
    text: &str,
    base: usize,
    lexicon: &Lexicon,
    evidence: &dyn Fn(&str, usize, usize) -> EvidenceFragment,
    grounding: &Grounding,
    out: &mut Drafts,
    modal_only: bool,
) {
    for s in sentences(text) {
        let ev = evidence(&s.text, base + s.start, base + s.end);
        if !modal_only {
            if let Some(cue) = lexicon.causal_cue(&s.text) {
                out.rationales.push(ClaimDraft {
                    slug: claim_slug(&s.text, cue, lexicon, "rationale"),
                    title: s.text.clone(),
                    tokens: claim_tokens(&s.text, lexicon),
                    grounding: grounding.clone(),
                    evidence: ev.clone(),
                });
            } else {
                continue;
            }
        }
        if let Some(cue) = lexicon.modal_cue(&s.text) {
            out.constraints.push(ClaimDraft {
                slug: claim_slug(&s.text, cue, lexicon, "constraint"),
                title: s.text.clone(),
                tokens: claim_tokens(&s.text, lexicon),
                grounding: grounding.clone(),
                evidence: ev,
            });
        }
    }
}

/// Top-down extraction from one document: a concept per heading and a
/// constraint per modal sentence under it (including the heading tail after
/// a colon).
pub fn document_unit(path: &str, text: &str, revision: &str, lexicon: &Lexicon) -> Drafts {
    let mut out = Drafts::default();
    let lines = lines_with_offsets(text);
    let headings: Vec<usize> = (0..lines.len())
        .filter(|i| heading_regex().is_match(lines[*i].text))
        .collect();
    let doc_evidence = |quote: &str, s: usize, e: usize| {
        EvidenceFragment::new(SourceKind::Document, path, quote, s, e, revision)
    };
    for (n, &i) in headings.iter().enumerate() {
        let line = &lines[i];
        let caps = heading_regex().captures(line.text).expect("matched");
        let title_match = caps.get(2).expect("group");
        let title_start = line.start + line.text[..title_match.start()].chars().count();
        let full = title_match.as_str();
        let (name, tail, tail_offset) = match full.split_once(':') {
            Some((name, tail)) => (name.trim(), tail, name.chars().count() + 1),
            None => (full.trim(), "", full.chars().count()),
        };
        let slug = slugify(name, 6);
        if slug.is_empty() {
            continue;
        }
        let body_end = headings.get(n + 1).copied().unwrap_or(lines.len());
        let body: Vec<&str> = lines[i + 1..body_end].iter().map(|l| l.text).collect();
        let body_text = body.join("\n");
        let summary = sentences(tail)
            .first()
            .map(|s| s.text.clone())
            .unwrap_or_else(|| {
                sentences(&body_text)
                    .first()
                    .map(|s| s.text.clone())
                    .unwrap_or_default()
            });
        out.concepts.push(ConceptDraft {
            slug: slug.clone(),
            title: name.to_string(),
            summary,
            evidence: doc_evidence(full, title_start, title_start + full.chars().count()),
        });
        let grounding = Grounding::Concept(slug);
        claims_in(
            tail,
            title_start + tail_offset,
            lexicon,
            &doc_evidence,
            &grounding,
            &mut out,
            true,
        );
        if i + 1 < body_end {
            claims_in(
                &body_text,
                lines[i + 1].start,
                lexicon,
                &doc_evidence,
                &grounding,
                &mut out,
                true,
            );
        }
    }
    out
}

/// Rationale mining over one commit message.
pub fn record_unit(record: &ChangeRecord, lexicon: &Lexicon) -> Drafts {
    let mut out = Drafts::default();
    let rev = record.revision.as_str();
    let ev = |q: &str, s: usize, e: usize| {
        EvidenceFragment::new(SourceKind::CommitMessage, rev, q, s, e, rev)
    };
    claims_in(
        &record.message,
        0,
        lexicon,
        &ev,
        &Grounding::Commit(rev.to_string()),
        &mut out,
        false,
    );
    out
}

/// Revision an issue's evidence is pinned to: the first record referencing
/// it, else its first linked revision, else the root.
pub fn issue_revision(issue: &IssueRecord, records: &[ChangeRecord]) -> Option<String> {
    records
        .iter()
        .find(|r| r.issue_refs.contains(&issue.key))
        .map(|r| r.revision.clone())
        .or_else(|| {
            issue
                .revisions
                .iter()
                .find(|rev| records.iter().any(|r| &&r.revision == rev))
                .cloned()
        })
        .or_else(|| records.first().map(|r| r.revision.clone()))
}

pub fn issue_unit(issue: &IssueRecord, revision: &str, lexicon: &Lexicon) -> Drafts {
    let mut out = Drafts::default();
    let key = issue.key.as_str();
    let ev = |q: &str, s: usize, e: usize| {
        EvidenceFragment::new(SourceKind::Issue, key, q, s, e, revision)
    };
    claims_in(
        &issue.body,
        0,
        lexicon,
        &ev,
        &Grounding::Issue(key.to_string()),
        &mut out,
        false,
    );
    out
}

/// Connected components of the call graph restricted to public functions,
/// members sorted, components ordered by first member.
pub fn public_components(map: &CodeMap) -> Vec<Vec<NodeId>> {
    let members: Vec<NodeId> = map
        .graph
        .artifacts()
        .filter(|a| a.kind == ArtifactKind::Function && a.visibility == Visibility::Public)
        .map(|a| a.id.clone())
        .collect();
    let index: BTreeMap<&NodeId, usize> =
        members.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut parent: Vec<usize> = (0..members.len()).collect();
    fn find(parent: &mut [usize], mut x: usize) -> usize {
        while parent[x] != x {
            parent[x] = parent[parent[x]];
            x = parent[x];
        }
        x
    }
    for key in map
        .graph
        .edges
        .keys()
        .filter(|k| k.relation == Relation::Calls)
    {
        if let (Some(&a), Some(&b)) = (index.get(&key.source), index.get(&key.target)) {
            let (ra, rb) = (find(&mut parent, a), find(&mut parent, b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<NodeId>> = BTreeMap::new();
    for (i, id) in members.iter().enumerate() {
        let root = find(&mut parent, i);
        groups.entry(root).or_default().push(id.clone());
    }
    let mut out: Vec<Vec<NodeId>> = groups.into_values().collect();
    out.sort();
    out
}

fn first_line_evidence(
    map: &CodeMap,
    tree: &SourceTree,
    records: &[ChangeRecord],
    member: &NodeId,
) -> EvidenceFragment {
    let a = map.artifact(member).expect("component member in map");
    let revision = last_touch(records, &a.path).unwrap_or_default();
    let line_no = a.span.map(|s| s.0 as usize).unwrap_or(1);
    let (quote, start) = tree
        .get(&a.path)
        .and_then(|text| {
            lines_with_offsets(text)
                .into_iter()
                .nth(line_no - 1)
                .map(|l| (l.text.to_string(), l.start))
        })
        .unwrap_or_default();
    let end = start + quote.chars().count();
    EvidenceFragment::new(SourceKind::Code, &a.path, &quote, start, end, &revision)
}

/// Bottom-up functionality draft for one component. The title token is the
/// most frequent name token; ties go to the token of the most-called member,
/// then alphabetical order.
pub fn component_unit(
    members: &[NodeId],
    map: &CodeMap,
    tree: &SourceTree,
    records: &[ChangeRecord],
) -> Drafts {
    let member_set: BTreeSet<&NodeId> = members.iter().collect();
    let mut indegree: BTreeMap<&NodeId, usize> = BTreeMap::new();
    for key in map
        .graph
        .edges
        .keys()
        .filter(|k| k.relation == Relation::Calls)
    {
        if member_set.contains(&key.source)
            && member_set.contains(&key.target)
            && key.source != key.target
        {
            *indegree.entry(&key.target).or_default() += 1;
        }
    }
    // token -> (frequency, best in-degree, member with that in-degree)
    let mut stats: BTreeMap<String, (usize, usize, &NodeId)> = BTreeMap::new();
    for id in members {
        let name = map
            .artifact(id)
            .map(|a| a.name.as_str())
            .unwrap_or_default();
        let deg = indegree.get(id).copied().unwrap_or(0);
        let mut toks: Vec<String> = raw_tokens(name)
            .into_iter()
            .filter(|t| !is_stopword(t))
            .collect();
        toks.sort();
        toks.dedup();
        for t in toks {
            let entry = stats.entry(t).or_insert((0, 0, id));
            entry.0 += 1;
            if deg > entry.1 {
                entry.1 = deg;
                entry.2 = id;
            }
        }
    }
    let best = stats
        .iter()
        .max_by(|(ta, a), (tb, b)| a.0.cmp(&b.0).then(a.1.cmp(&b.1)).then(tb.cmp(ta)));
    let (token, member) = match best {
        Some((t, (_, _, m))) => (t.clone(), (*m).clone()),
        None => ("functionality".to_string(), members[0].clone()),
    };
    Drafts {
        functionalities: vec![FunctionalityDraft {
            members: members.to_vec(),
            token,
            evidence: first_line_evidence(map, tree, records, &member),
        }],
        ..Drafts::default()
    }
}

/// Inputs every unit draws from.
#[derive(Debug, Clone, Copy)]
pub struct UnitInputs<'a> {
    pub map: &'a CodeMap,
    pub tree: &'a SourceTree,
    pub records: &'a [ChangeRecord],
    pub issues: &'a [IssueRecord],
    pub lexicon: &'a Lexicon,
}

impl UnitInputs<'_> {
    pub fn document_paths(&self) -> Vec<String> {
        self.map
            .graph
            .artifacts()
            .filter(|a| a.kind == ArtifactKind::Document)
            .filter(|a| self.tree.contains_key(&a.path))
            .map(|a| a.path.clone())
            .collect()
    }

    /// Every unit key for the current inputs.
    pub fn unit_keys(&self) -> BTreeSet<UnitKey> {
        let mut keys = BTreeSet::new();
        keys.extend(self.document_paths().into_iter().map(UnitKey::Document));
        keys.extend(
            self.records
                .iter()
                .map(|r| UnitKey::Record(r.revision.clone())),
        );
        keys.extend(self.issues.iter().map(|i| UnitKey::Issue(i.key.clone())));
        keys.extend(
            public_components(self.map)
                .into_iter()
                .map(UnitKey::Component),
        );
        keys
    }

    pub fn compute(&self, key: &UnitKey) -> Drafts {
        match key {
            UnitKey::Document(path) => {
                let text = self.tree.get(path).map(String::as_str).unwrap_or_default();
                let rev = last_touch(self.records, path).unwrap_or_default();
                document_unit(path, text, &rev, self.lexicon)
            }
            UnitKey::Record(rev) => self
                .records
                .iter()
                .find(|r| &r.revision == rev)
                .map(|r| record_unit(r, self.lexicon))
                .unwrap_or_default(),
            UnitKey::Issue(k) => self
                .issues
                .iter()
                .find(|i| &i.key == k)
                .map(|i| {
                    issue_unit(
                        i,
                        &issue_revision(i, self.records).unwrap_or_default(),
                        self.lexicon,
                    )
                })
                .unwrap_or_default(),
            UnitKey::Component(members) => {
                component_unit(members, self.map, self.tree, self.records)
            }
        }
    }

    pub fn compute_all(&self) -> DraftCache {
        self.unit_keys()
            .into_iter()
            .map(|k| {
                let d = self.compute(&k);
                (k, d)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn heading_yields_concept_and_tail_constraint() {
        let text =
            "# Payment Validation: requests must reach the mainframe in order\n\nBody text.\n";
        let d = document_unit("docs/payments.md", text, "c1", &Lexicon::default());
        assert_eq!(d.concepts.len(), 1);
        assert_eq!(d.concepts[0].slug, "payment-validation");
        assert_eq!(d.concepts[0].title, "Payment Validation");
        assert_eq!(d.constraints.len(), 1);
        let c = &d.constraints[0];
        assert_eq!(c.title, "requests must reach the mainframe in order");
        assert_eq!(c.slug, "reach-mainframe-order");
        assert_eq!(
            crate::text::char_slice(text, c.evidence.start, c.evidence.end).unwrap(),
            c.title
        );
        assert!(d.rationales.is_empty());
    }

    #[test]
    fn body_modal_sentences_become_constraints() {
        let text =
            "# Caching\nEntries never outlive a session. Reads are fast.\n## Other\nNothing.";
        let d = document_unit("d.md", text, "r", &Lexicon::default());
        assert_eq!(d.concepts.len(), 2);
        assert_eq!(d.constraints.len(), 1);
        assert_eq!(
            d.constraints[0].grounding,
            Grounding::Concept("caching".into())
        );
        assert_eq!(
            d.constraints[0].evidence.quote,
            "Entries never outlive a session"
        );
    }

    #[test]
    fn commit_with_causal_and_modal_cues() {
        let r = ChangeRecord::new(
            "c1",
            None,
            "dev",
            "Add sync lock because mainframe requires ordered requests (fixes #42)",
            &["pay/validator.x"],
        );
        let d = record_unit(&r, &Lexicon::default());
        assert_eq!(d.rationales.len(), 1);
        assert_eq!(d.constraints.len(), 1);
        assert_eq!(d.constraints[0].slug, "ordered-requests");
        assert_eq!(d.rationales[0].slug, "mainframe-ordered-requests");
        let toks: Vec<&str> = d.constraints[0].tokens.iter().map(String::as_str).collect();
        assert_eq!(
            toks,
            vec!["add", "lock", "mainframe", "order", "request", "sync"]
        );
    }

    #[test]
    fn commit_without_cues_yields_nothing() {
        let r = ChangeRecord::new("c3", None, "dev", "Rename things", &["a.x"]);
        assert_eq!(record_unit(&r, &Lexicon::default()), Drafts::default());
        let r = ChangeRecord::new(
            "c2",
            None,
            "dev",
            "Add gateway retry, due to flaky network (see #57)",
            &["a.x"],
        );
        let d = record_unit(&r, &Lexicon::default());
        assert_eq!(d.rationales[0].slug, "flaky-network");
        assert!(d.constraints.is_empty());
    }
}
